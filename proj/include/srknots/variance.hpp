#pragma once

#include <vector>

#include "srknots/sr_model.hpp"

namespace srknots {

struct VarianceEstimate {
  double value = 0.0;
  int dof = 0;  ///< 2N - 1 for sigma_hat_grid, 2N - 3 for sigma_hat_cond
  std::vector<TorusPoint> design;
};

/// z_j = (t + 2 pi (j-1)/N, theta) and z_{N+j} = (t + 2 pi (j-1)/N, theta + pi/2),
/// j = 1..N. The first point is z itself.
std::vector<TorusPoint> design_points(const TorusPoint& z, int fc);

/// Variance estimate from the residuals of X at the design points after
/// regression on X(z). Throws RankDeficient if the residual correlation does
/// not have rank 2N - 1.
VarianceEstimate sigma_hat_grid(const Observation& obs, const TorusPoint& z);

/// Same after regression on (X(z), X'(z)); rank 2N - 3.
VarianceEstimate sigma_hat_cond(const Observation& obs, const TorusPoint& z);

}  // namespace srknots
