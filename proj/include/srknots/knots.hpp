#pragma once

#include <Eigen/Dense>

#include "srknots/sr_model.hpp"

namespace srknots {

struct KnotOptions {
  int t_grid_factor = 32;       ///< first knot: t-grid of t_grid_factor * N points
  int s_grid_factor = 16;       ///< second knot: t-offsets, s_grid_factor * N points
  int angle_grid = 64;          ///< second knot: theta-offsets
  int refine_candidates = 8;    ///< grid local maxima refined besides the near-ties
  double tie_tol = 1e-6;        ///< candidates this close to the best are always refined
  double radius_switch = 0.5;   ///< below, g uses the Taylor-remainder ratio
  double refine_tol = 1e-10;
};

struct KnotCertificate {
  TorusPoint z_hat;
  double lambda1 = 0.0;
  TorusPoint y_hat;
  double lambda2 = 0.0;
  Eigen::Matrix2d R = Eigen::Matrix2d::Zero();
  double alpha2 = 0.0;
  double alpha3 = 0.0;
  double grad_norm_at_zhat = 0.0;
};

struct FirstKnot {
  TorusPoint z_hat;
  double lambda1;
};

/// Global maximizer of X over the torus, i.e. of |Z| over the circle with
/// theta = arg Z. Throws DegenerateProcess if |Z| is constant.
FirstKnot first_knot(const Observation& obs, const KnotOptions& opts = {});

enum class RegressionMode { on_value, on_value_and_grad };

/// X^z(y) (regression on X(z)) or X^{|z}(y) (regression on X(z), X'(z)).
/// Throws NearSingular when 1 - rho(z - y) <= 1e-14.
double regressed_value(const Observation& obs, const TorusPoint& z, const TorusPoint& y,
                       RegressionMode mode);

/// g(y) = X^{z_hat}(y) - lambda1, evaluated with the direct ratio for
/// |y - z_hat| > radius_switch and with the Taylor-remainder form below.
/// At y = z_hat it returns the radial limit maximized over directions.
double second_knot_ratio(const Observation& obs, const TorusPoint& z_hat, double lambda1,
                         const TorusPoint& y, double radius_switch = 0.5);

/// Denominator (1/(2N)) sum_k w_k^2 sinc^2(r w_k / 2), w_k = k cos a - sin a.
/// Satisfies den * r^2 = 1 - rho(r cos a, r sin a).
double second_knot_denominator(int fc, double r, double angle);

/// max over unit u of u' H u / u' Lambda u with Lambda = diag(alpha1, 1).
double radial_limit_max(const Eigen::Matrix2d& H, double alpha1);

struct SecondKnot {
  TorusPoint y_hat;
  double lambda2;
};

SecondKnot second_knot(const Observation& obs, const TorusPoint& z_hat, double lambda1,
                       const KnotOptions& opts = {});

struct HessianAlphas {
  Eigen::Matrix2d R;
  double alpha2;
  double alpha3;
};

/// R = X''(z_hat) + Lambda lambda1 = [[-alpha2, alpha3], [alpha3, 0]].
/// Throws NotAMaximum if -X''(z_hat) is not positive definite.
HessianAlphas hessian_and_alphas(const Observation& obs, const TorusPoint& z_hat, double lambda1);

KnotCertificate compute_certificate(const Observation& obs, const KnotOptions& opts = {});

}  // namespace srknots
