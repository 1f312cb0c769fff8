#pragma once

#include <complex>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "srknots/numerics.hpp"

namespace srknots {

using cplx = std::complex<double>;

/// Reduce an angle to [0, 2pi).
double wrap_angle(double a);
/// Reduce an angle to (-pi, pi], the shortest signed representative.
double wrap_signed(double a);

/// A point z = (t, theta) of the 2-torus, both coordinates kept in [0, 2pi).
struct TorusPoint {
  double t = 0.0;
  double theta = 0.0;

  static TorusPoint wrapped(double t, double theta) { return {wrap_angle(t), wrap_angle(theta)}; }
  TorusPoint shifted(double dt, double dtheta) const { return wrapped(t + dt, theta + dtheta); }
};

/// Shortest torus vector from `from` to `to`, each component in (-pi, pi].
Eigen::Vector2d torus_delta(const TorusPoint& from, const TorusPoint& to);
/// Circular distance on [0, 2pi).
double circular_distance(double a, double b);

struct Atom {
  double location = 0.0;  // in [0, 2pi)
  cplx weight;
};

/// Discrete complex measure on the circle. May be empty (the null).
struct AtomicMeasure {
  std::vector<Atom> atoms;

  /// Throws InvalidArgument if two locations coincide modulo 2pi.
  void validate() const;
};

/// Noisy Fourier data y_k, k = -fc..fc, stored in that order.
struct Observation {
  int fc = 1;
  std::vector<cplx> y;
  std::optional<double> sigma;  ///< absent in unknown-variance mode

  int N() const { return 2 * fc + 1; }
  const cplx& coeff(int k) const { return y[static_cast<std::size_t>(k + fc)]; }
  cplx& coeff(int k) { return y[static_cast<std::size_t>(k + fc)]; }

  /// Every coefficient (and sigma, if present) multiplied by c.
  Observation scaled(double c) const;
  /// Throws SchemaError on inconsistent sizes or an invalid sigma.
  void validate() const;
};

/// Constants of the SR model at a given frequency cutoff.
struct ModelContext {
  int fc = 1;
  int N = 3;
  int m = 6;  ///< Karhunen-Loeve order 2N
  double alpha1 = 2.0 / 3.0;
  Eigen::Matrix2d lambda_tilde = Eigen::Matrix2d::Identity();  ///< -rho''(0) = diag(alpha1, 1)

  static ModelContext make(int fc);
};

// ---------------------------------------------------------------------------
// Kernel and correlation

/// Dirichlet kernel sin(N t / 2) / sin(t / 2), N = 2 fc + 1.
double dirichlet(int fc, double t);

/// Gamma(t) = D_N(t) / N and its first two derivatives.
struct KernelValue {
  double value;
  double d1;
  double d2;
};
KernelValue normalized_kernel(int fc, double t);

/// rho(dz) = Gamma(dt) cos(dtheta).
double correlation(const ModelContext& ctx, const Eigen::Vector2d& dz);
Eigen::Vector2d correlation_grad(const ModelContext& ctx, const Eigen::Vector2d& dz);
Eigen::Matrix2d correlation_hess(const ModelContext& ctx, const Eigen::Vector2d& dz);

// ---------------------------------------------------------------------------
// Forward model and processes

/// y_k = (1/sqrt N) sum_j a_j e^{-i k x_j} + sigma (zeta_1k + i zeta_2k).
/// The returned observation carries `sigma`.
Observation synthesize(const AtomicMeasure& measure, int fc, double sigma, RngStream& stream);

/// Z(t) = (1/sqrt N) sum_k y_k e^{ikt} with its first two t-derivatives.
struct ZValue {
  cplx z;
  cplx dz;
  cplx d2z;
};
cplx z_eval(const Observation& obs, double t);
ZValue z_eval_derivs(const Observation& obs, double t);
/// Z at the M equispaced points 2 pi j / M.
std::vector<cplx> z_on_grid(const Observation& obs, int M);

/// X(t, theta) = Re(e^{-i theta} Z(t)).
double x_eval(const Observation& obs, const TorusPoint& z);
Eigen::Vector2d x_grad(const Observation& obs, const TorusPoint& z);
Eigen::Matrix2d x_hess(const Observation& obs, const TorusPoint& z);

/// X, gradient and Hessian from one pass over the coefficients.
struct XJet {
  double value;
  Eigen::Vector2d grad;
  Eigen::Matrix2d hess;
};
XJet x_jet(const Observation& obs, const TorusPoint& z);

// ---------------------------------------------------------------------------
// Observation files: {"fc": int, "sigma": number|null, "y": [[re, im], ...]}

std::string observation_to_json(const Observation& obs);
Observation observation_from_json(const std::string& text);
void save_observation(const Observation& obs, const std::string& path);
Observation load_observation(const std::string& path);

/// printf("%.17g") formatting used for every number the project writes.
std::string format_double(double v);

}  // namespace srknots
