#pragma once

#include <string>
#include <vector>

#include "srknots/knots.hpp"
#include "srknots/sr_model.hpp"

namespace srknots {

struct LarsOptions {
  int k_max = 4;                      ///< number of knots to emit, >= 2
  double lambda_min = 1e-3;           ///< continuation stops below this
  double lambda_step_fraction = 1e-2; ///< step as a fraction of the current lambda
  double newton_tol = 1e-10;
  int event_grid_factor = 64;         ///< event scan on event_grid_factor * N points
  double merge_radius = 1e-3;         ///< entries this close to an active point are the same point
  double bisection_tol = 1e-9;

  void validate() const;
};

enum class LarsStatus {
  completed,
  path_stop_singular_gram,
  path_stop_singular_jacobian,
  reached_k_max,
  reached_lambda_min,
};

std::string to_string(LarsStatus s);

/// One knot: lambda_k, the active locations at lambda_k (the entering point
/// last) and the weights a_i of mu_k on them (zero for the entering point).
struct LarsKnot {
  double lambda;
  std::vector<double> active;
  std::vector<cplx> weights;
};

struct LarsPath {
  double sigma = 1.0;
  std::vector<LarsKnot> knots;
  LarsStatus status = LarsStatus::completed;
  double terminal_lambda = 0.0;  ///< lambda at which the continuation stopped
};

/// Continuous LARS path. Knots 1-2 come from the knots module; later knots by
/// predictor-corrector continuation of the active locations in lambda.
LarsPath lars_run(const Observation& obs, double sigma, const LarsOptions& opts = {});

/// Residual Z(t) - sum_i 2 sigma^2 a_i Gamma(t - t_i) at knot k (1-based).
/// Throws OutOfRange if k exceeds the number of knots.
cplx lars_residual(const Observation& obs, const LarsPath& path, int k, double t);

/// Rows "k,lambda,t,re_a,im_a", one per active point of every knot.
std::string lars_path_csv(const LarsPath& path);

}  // namespace srknots
