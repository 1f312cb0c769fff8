#include "srknots/variance.hpp"

#include <numbers>

#include <Eigen/Dense>

#include "srknots/errors.hpp"

namespace srknots {

namespace {

// v' C^+ v using the `rank` leading eigenpairs of C; the numerical rank at
// relative tolerance 1e-8 must equal `rank`.
double pinv_quadratic_form(const Eigen::MatrixXd& C, const Eigen::VectorXd& v, int rank,
                           const char* who) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(C);
  const Eigen::VectorXd& ev = es.eigenvalues();
  const double top = ev.cwiseAbs().maxCoeff();
  int numerical_rank = 0;
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev[i] > 1e-8 * top) ++numerical_rank;
  }
  if (numerical_rank != rank) {
    throw RankDeficient(std::string(who) + ": residual correlation has rank " +
                        std::to_string(numerical_rank) + ", expected " + std::to_string(rank));
  }
  const Eigen::Index n = ev.size();
  double q = 0.0;
  for (Eigen::Index i = n - rank; i < n; ++i) {
    const double proj = es.eigenvectors().col(i).dot(v);
    q += proj * proj / ev[i];
  }
  return q;
}

}  // namespace

std::vector<TorusPoint> design_points(const TorusPoint& z, int fc) {
  if (fc < 1) throw InvalidArgument("design_points: fc must be >= 1");
  const int N = 2 * fc + 1;
  std::vector<TorusPoint> pts;
  pts.reserve(2 * N);
  for (int half = 0; half < 2; ++half) {
    for (int j = 0; j < N; ++j) {
      pts.push_back(z.shifted(2.0 * std::numbers::pi * j / N, half * 0.5 * std::numbers::pi));
    }
  }
  return pts;
}

VarianceEstimate sigma_hat_grid(const Observation& obs, const TorusPoint& z) {
  const ModelContext ctx = ModelContext::make(obs.fc);
  VarianceEstimate est;
  est.design = design_points(z, obs.fc);
  est.dof = 2 * ctx.N - 1;
  const int n = est.dof;
  const double xz = x_eval(obs, z);
  Eigen::VectorXd v(n);
  Eigen::VectorXd rho(n);
  for (int i = 0; i < n; ++i) {
    const TorusPoint& zi = est.design[i + 1];
    rho[i] = correlation(ctx, torus_delta(zi, z));
    v[i] = x_eval(obs, zi) - rho[i] * xz;
  }
  Eigen::MatrixXd C(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      C(i, j) = correlation(ctx, torus_delta(est.design[j + 1], est.design[i + 1])) -
                rho[i] * rho[j];
    }
  }
  est.value = pinv_quadratic_form(C, v, n, "sigma_hat_grid") / n;
  return est;
}

VarianceEstimate sigma_hat_cond(const Observation& obs, const TorusPoint& z) {
  const ModelContext ctx = ModelContext::make(obs.fc);
  VarianceEstimate est;
  est.design = design_points(z, obs.fc);
  est.dof = 2 * ctx.N - 3;
  const int n = 2 * ctx.N - 1;
  const XJet jz = x_jet(obs, z);
  const Eigen::Vector2d lg(jz.grad[0] / ctx.alpha1, jz.grad[1]);  // Lambda^{-1} X'(z)
  Eigen::VectorXd v(n);
  Eigen::VectorXd rho(n);
  Eigen::MatrixXd drho(n, 2);
  for (int i = 0; i < n; ++i) {
    const TorusPoint& zi = est.design[i + 1];
    const Eigen::Vector2d d = torus_delta(z, zi);  // z_i - z
    rho[i] = correlation(ctx, d);
    drho.row(i) = correlation_grad(ctx, d).transpose();
    v[i] = x_eval(obs, zi) - rho[i] * jz.value + drho.row(i).dot(lg);
  }
  Eigen::MatrixXd C(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      C(i, j) = correlation(ctx, torus_delta(est.design[j + 1], est.design[i + 1])) -
                rho[i] * rho[j] - drho(i, 0) * drho(j, 0) / ctx.alpha1 - drho(i, 1) * drho(j, 1);
    }
  }
  est.value = pinv_quadratic_form(C, v, est.dof, "sigma_hat_cond") / est.dof;
  return est;
}

}  // namespace srknots
