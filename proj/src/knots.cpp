#include "srknots/knots.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "srknots/errors.hpp"

namespace srknots {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Indices of circular local maxima of v, sorted by decreasing value with
// ties broken by index.
std::vector<int> local_maxima_1d(const std::vector<double>& v) {
  const int n = static_cast<int>(v.size());
  std::vector<int> out;
  for (int i = 0; i < n; ++i) {
    const double l = v[(i + n - 1) % n];
    const double r = v[(i + 1) % n];
    if (v[i] >= l && v[i] >= r) out.push_back(i);
  }
  std::stable_sort(out.begin(), out.end(), [&v](int a, int b) { return v[a] > v[b]; });
  return out;
}

// Pick the candidates to refine: the best `count` plus all within tie_tol.
template <class Index>
std::vector<Index> select_candidates(const std::vector<Index>& sorted, double best,
                                     const auto& value_of, int count, double tie_tol) {
  std::vector<Index> out;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (static_cast<int>(i) < count || value_of(sorted[i]) >= best - tie_tol) {
      out.push_back(sorted[i]);
    } else {
      break;
    }
  }
  return out;
}

double abs2_z(const Observation& obs, double t) { return std::norm(z_eval(obs, t)); }

// Newton iterations on d/dt |Z|^2 / 2 = Re(conj(Z) Z'), kept only while they
// stay in the bracket and do not decrease |Z|.
double newton_polish(const Observation& obs, double t, double lo, double hi) {
  double value = abs2_z(obs, t);
  for (int iter = 0; iter < 30; ++iter) {
    const ZValue zv = z_eval_derivs(obs, t);
    const double f = (std::conj(zv.z) * zv.dz).real();
    const double fp = std::norm(zv.dz) + (std::conj(zv.z) * zv.d2z).real();
    if (!(fp < 0.0)) break;
    const double step = -f / fp;
    const double next = t + step;
    if (next < lo || next > hi) break;
    const double next_value = abs2_z(obs, next);
    if (next_value < value * (1.0 - 1e-15)) break;
    t = next;
    value = std::max(value, next_value);
    if (std::abs(step) < 1e-13) break;
  }
  return t;
}

struct RatioEvaluator {
  const Observation& obs;
  ModelContext ctx;
  TorusPoint z_hat;
  double lambda1;
  XJet jet;
  double radial_max;
  double radius_switch;

  RatioEvaluator(const Observation& o, const TorusPoint& z, double l1, double rs)
      : obs(o), ctx(ModelContext::make(o.fc)), z_hat(z), lambda1(l1), jet(x_jet(o, z)),
        radial_max(radial_limit_max(jet.hess, ctx.alpha1)), radius_switch(rs) {}

  // g at offset d (already reduced to the shortest representative). `x_direct`
  // optionally supplies X(z_hat + d) for the direct branch.
  double operator()(double dt, double dth, const double* x_direct = nullptr) const {
    const double r = std::hypot(dt, dth);
    if (r == 0.0) return radial_max;
    if (r > radius_switch) {
      const double x = x_direct ? *x_direct : x_eval(obs, z_hat.shifted(dt, dth));
      const double one_minus_rho = 1.0 - correlation(ctx, Eigen::Vector2d(dt, dth));
      return (x - lambda1) / one_minus_rho;
    }
    const Eigen::Vector2d u(dt / r, dth / r);
    const auto& rule = gauss_legendre(16);
    double num = 0.0;
    for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
      const double h = 0.5 * (rule.nodes[i] + 1.0);
      const Eigen::Matrix2d hess = x_hess(obs, z_hat.shifted(h * dt, h * dth));
      num += 0.5 * rule.weights[i] * (1.0 - h) * u.dot(hess * u);
    }
    const double den = second_knot_denominator(ctx.fc, r, std::atan2(dth, dt));
    return num / den;
  }
};

}  // namespace

// ---------------------------------------------------------------------------

FirstKnot first_knot(const Observation& obs, const KnotOptions& opts) {
  obs.validate();
  if (opts.t_grid_factor < 2) throw InvalidArgument("first_knot: t_grid_factor must be >= 2");
  const int M = opts.t_grid_factor * obs.N();
  const auto grid = z_on_grid(obs, M);
  std::vector<double> mod(static_cast<std::size_t>(M));
  for (int j = 0; j < M; ++j) mod[j] = std::abs(grid[j]);
  const auto [mn, mx] = std::minmax_element(mod.begin(), mod.end());
  if (*mx - *mn <= 1e-12 * std::max(*mx, 1e-300)) {
    throw DegenerateProcess("first_knot: |Z| is constant, the maximizer is not unique");
  }

  const auto maxima = local_maxima_1d(mod);
  const double h = kTwoPi / M;
  const auto candidates = select_candidates(
      maxima, mod[maxima.front()], [&mod](int i) { return mod[i]; }, 4, opts.tie_tol);

  double best_t = 0.0;
  double best_v = -1.0;
  for (int j : candidates) {
    const double lo = (j - 1) * h;
    const double hi = (j + 1) * h;
    const auto br = maximize_1d([&obs](double t) { return abs2_z(obs, t); }, lo, hi, 1e-9);
    const double t = newton_polish(obs, br.argmax, lo, hi);
    const double v = std::abs(z_eval(obs, t));
    const double tw = wrap_angle(t);
    if (v > best_v || (v == best_v && tw < best_t)) {
      best_v = v;
      best_t = tw;
    }
  }
  const cplx z = z_eval(obs, best_t);
  return {TorusPoint::wrapped(best_t, std::arg(z)), std::abs(z)};
}

double regressed_value(const Observation& obs, const TorusPoint& z, const TorusPoint& y,
                       RegressionMode mode) {
  const ModelContext ctx = ModelContext::make(obs.fc);
  // delta = y - z; rho is even so the sign only matters for the gradient
  const Eigen::Vector2d d = torus_delta(z, y);
  const double rho = correlation(ctx, d);
  const double one_minus_rho = 1.0 - rho;
  if (!(one_minus_rho > 1e-14)) {
    throw NearSingular("regressed_value: 1 - rho(z - y) below 1e-14");
  }
  const XJet jz = x_jet(obs, z);
  double resid = x_eval(obs, y) - rho * jz.value;
  if (mode == RegressionMode::on_value_and_grad) {
    // Cov(X(y), X'(z)) = d/dz rho(y - z) = -grad rho(d); subtracting the
    // regression on X'(z) adds <grad rho(d), Lambda^{-1} X'(z)>.
    const Eigen::Vector2d g = correlation_grad(ctx, d);
    resid += g[0] * jz.grad[0] / ctx.alpha1 + g[1] * jz.grad[1];
  }
  return resid / one_minus_rho;
}

double second_knot_denominator(int fc, double r, double angle) {
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  double sum = 0.0;
  for (int k = -fc; k <= fc; ++k) {
    const double w = k * c - s;
    const double x = 0.5 * r * w;
    const double sinc = x == 0.0 ? 1.0 : std::sin(x) / x;
    sum += w * w * sinc * sinc;
  }
  return sum / (2.0 * (2 * fc + 1));
}

double radial_limit_max(const Eigen::Matrix2d& H, double alpha1) {
  const double s = 1.0 / std::sqrt(alpha1);
  Eigen::Matrix2d scaled;
  scaled << H(0, 0) * s * s, H(0, 1) * s, H(1, 0) * s, H(1, 1);
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(scaled, Eigen::EigenvaluesOnly);
  return es.eigenvalues()[1];
}

double second_knot_ratio(const Observation& obs, const TorusPoint& z_hat, double lambda1,
                         const TorusPoint& y, double radius_switch) {
  const RatioEvaluator g(obs, z_hat, lambda1, radius_switch);
  const Eigen::Vector2d d = torus_delta(z_hat, y);
  return g(d[0], d[1]);
}

SecondKnot second_knot(const Observation& obs, const TorusPoint& z_hat, double lambda1,
                       const KnotOptions& opts) {
  if (opts.s_grid_factor < 1 || opts.angle_grid < 4) {
    throw InvalidArgument("second_knot: grid too coarse");
  }
  const RatioEvaluator g(obs, z_hat, lambda1, opts.radius_switch);
  const int ns = opts.s_grid_factor * obs.N();
  const int na = opts.angle_grid;
  const double hs = kTwoPi / ns;
  const double ha = kTwoPi / na;

  std::vector<cplx> zcol(static_cast<std::size_t>(ns));
  for (int i = 0; i < ns; ++i) zcol[i] = z_eval(obs, z_hat.t - kPi + i * hs);

  std::vector<double> val(static_cast<std::size_t>(ns) * na);
  for (int i = 0; i < ns; ++i) {
    const double dt = -kPi + i * hs;
    for (int j = 0; j < na; ++j) {
      const double dth = -kPi + j * ha;
      const double x = (std::polar(1.0, -(z_hat.theta + dth)) * zcol[i]).real();
      val[static_cast<std::size_t>(i) * na + j] = g(dt, dth, &x);
    }
  }

  std::vector<int> maxima;
  for (int i = 0; i < ns; ++i) {
    for (int j = 0; j < na; ++j) {
      const double v = val[static_cast<std::size_t>(i) * na + j];
      bool is_max = true;
      for (int di = -1; di <= 1 && is_max; ++di) {
        for (int dj = -1; dj <= 1; ++dj) {
          if (di == 0 && dj == 0) continue;
          const int ii = (i + di + ns) % ns;
          const int jj = (j + dj + na) % na;
          if (val[static_cast<std::size_t>(ii) * na + jj] > v) {
            is_max = false;
            break;
          }
        }
      }
      if (is_max) maxima.push_back(i * na + j);
    }
  }
  std::stable_sort(maxima.begin(), maxima.end(),
                   [&val](int a, int b) { return val[a] > val[b]; });
  const auto candidates =
      select_candidates(maxima, val[maxima.front()], [&val](int k) { return val[k]; },
                        opts.refine_candidates, opts.tie_tol);

  // The theta-circle through z_hat has g = -lambda1 and the radial limit is a
  // supremum too; both enter as candidates.
  double best_g = -lambda1;
  Eigen::Vector2d best_d(0.0, kPi);
  if (g.radial_max > best_g) {
    best_g = g.radial_max;
    best_d.setZero();
  }
  const auto wrapped_g = [&g](double dt, double dth) {
    return g(wrap_signed(dt), wrap_signed(dth));
  };
  for (int k : candidates) {
    const double dt0 = -kPi + (k / na) * hs;
    const double dth0 = -kPi + (k % na) * ha;
    const auto res = maximize_2d(wrapped_g, {dt0, dth0}, opts.refine_tol,
                                 0.5 * std::min(hs, ha), 20000);
    double v = res.max;
    Eigen::Vector2d d(wrap_signed(res.argmax[0]), wrap_signed(res.argmax[1]));
    if (val[k] > v) {
      v = val[k];
      d = {dt0, dth0};
    }
    const bool tie_smaller_t =
        v == best_g && wrap_angle(z_hat.t + d[0]) < wrap_angle(z_hat.t + best_d[0]);
    if (v > best_g || tie_smaller_t) {
      best_g = v;
      best_d = d;
    }
  }

  double lambda2 = lambda1 + best_g;
  // Below the resolution of the arithmetic the second knot is zero.
  if (lambda2 < 1e-12 * lambda1) lambda2 = 0.0;
  return {z_hat.shifted(best_d[0], best_d[1]), lambda2};
}

HessianAlphas hessian_and_alphas(const Observation& obs, const TorusPoint& z_hat,
                                 double lambda1) {
  const ModelContext ctx = ModelContext::make(obs.fc);
  double a2 = 0.0;
  double a3 = 0.0;
  for (int k = -obs.fc; k <= obs.fc; ++k) {
    const double w = (obs.coeff(k) * std::polar(1.0, k * z_hat.t - z_hat.theta)).real();
    a2 += (k * k - ctx.alpha1) * w;
    a3 += k * w;
  }
  const double inv_sqrt_n = 1.0 / std::sqrt(static_cast<double>(ctx.N));
  a2 *= inv_sqrt_n;
  a3 *= inv_sqrt_n;
  Eigen::Matrix2d R;
  R << -a2, a3, a3, 0.0;

  const Eigen::Matrix2d H = x_hess(obs, z_hat);
  const Eigen::Matrix2d check = H + ctx.lambda_tilde * lambda1 - R;
  if (check.cwiseAbs().maxCoeff() > 1e-9 * std::max(1.0, lambda1)) {
    throw Error("hessian_and_alphas: closed-form R disagrees with X''(z_hat) + Lambda lambda1");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(-H, Eigen::EigenvaluesOnly);
  if (!(es.eigenvalues()[0] > 0.0)) {
    throw NotAMaximum("hessian_and_alphas: -X''(z_hat) is not positive definite");
  }
  return {R, a2, a3};
}

KnotCertificate compute_certificate(const Observation& obs, const KnotOptions& opts) {
  const FirstKnot first = first_knot(obs, opts);
  const HessianAlphas ha = hessian_and_alphas(obs, first.z_hat, first.lambda1);
  const SecondKnot second = second_knot(obs, first.z_hat, first.lambda1, opts);
  KnotCertificate cert;
  cert.z_hat = first.z_hat;
  cert.lambda1 = first.lambda1;
  cert.y_hat = second.y_hat;
  cert.lambda2 = second.lambda2;
  cert.R = ha.R;
  cert.alpha2 = ha.alpha2;
  cert.alpha3 = ha.alpha3;
  cert.grad_norm_at_zhat = x_grad(obs, first.z_hat).norm();
  return cert;
}

}  // namespace srknots
