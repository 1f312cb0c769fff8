#include "srknots/lars.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <sstream>

#include <Eigen/Dense>

#include "srknots/errors.hpp"

namespace srknots {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXcd;
using Eigen::VectorXd;

constexpr double kTwoPi = 2.0 * std::numbers::pi;

enum class Failure { none, gram, jacobian };

struct Solution {
  double lambda = 0.0;
  VectorXd x;
  VectorXcd b;  // b = 2 sigma^2 a
};

// Everything that stays fixed between two knots: the reference residuals c0
// at the active points when the stage began at lambda_start.
struct Stage {
  double lambda_start;
  VectorXcd c0;
};

MatrixXd kernel_matrix(int fc, const VectorXd& x, int derivative) {
  const Eigen::Index n = x.size();
  MatrixXd m(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const KernelValue kv = normalized_kernel(fc, x[i] - x[j]);
      m(i, j) = derivative == 0 ? kv.value : (derivative == 1 ? kv.d1 : kv.d2);
    }
  }
  return m;
}

// Observation whose Z is the residual Z(t) - sum_i b_i Gamma(t - x_i).
Observation residual_observation(const Observation& obs, const VectorXd& x, const VectorXcd& b) {
  Observation r = obs;
  const double inv_sqrt_n = 1.0 / std::sqrt(static_cast<double>(obs.N()));
  for (int k = -obs.fc; k <= obs.fc; ++k) {
    cplx s(0.0, 0.0);
    for (Eigen::Index i = 0; i < x.size(); ++i) s += b[i] * std::polar(1.0, -k * x[i]);
    r.coeff(k) -= inv_sqrt_n * s;
  }
  return r;
}

bool near_active(double t, const VectorXd& x, double radius) {
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (circular_distance(t, x[i]) < radius) return true;
  }
  return false;
}

std::optional<VectorXcd> solve_weights(const Eigen::PartialPivLU<MatrixXd>& lu,
                                       const VectorXcd& rhs) {
  const VectorXd re = lu.solve(rhs.real());
  const VectorXd im = lu.solve(rhs.imag());
  VectorXcd out(rhs.size());
  for (Eigen::Index i = 0; i < rhs.size(); ++i) out[i] = cplx(re[i], im[i]);
  if (!out.allFinite()) return std::nullopt;
  return out;
}

class Continuation {
 public:
  Continuation(const Observation& obs, const LarsOptions& opts) : obs_(obs), opts_(opts) {}

  // Newton solve of the stationarity system at lambda starting from x0.
  Failure solve(const Stage& stage, double lambda, VectorXd x, Solution& out) const {
    const Eigen::Index n = x.size();
    const cplx s(lambda / stage.lambda_start, 0.0);
    const VectorXcd c = s * stage.c0;
    for (int iter = 0; iter < 50; ++iter) {
      for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j) {
          if (circular_distance(x[i], x[j]) < opts_.merge_radius) return Failure::gram;
        }
      }
      const MatrixXd G = kernel_matrix(obs_.fc, x, 0);
      const MatrixXd G1 = kernel_matrix(obs_.fc, x, 1);
      const MatrixXd G2 = kernel_matrix(obs_.fc, x, 2);
      Eigen::PartialPivLU<MatrixXd> lu(G);
      if (!(lu.rcond() > 1e-12)) return Failure::gram;

      std::vector<ZValue> zv(static_cast<std::size_t>(n));
      VectorXcd v(n);
      for (Eigen::Index i = 0; i < n; ++i) {
        zv[i] = z_eval_derivs(obs_, x[i]);
        v[i] = zv[i].z - c[i];
      }
      const auto b = solve_weights(lu, v);
      if (!b) return Failure::gram;

      // D_j = R'(x_j); h_j = Re(conj(c_j) D_j)
      VectorXd h(n);
      VectorXcd D(n);
      for (Eigen::Index j = 0; j < n; ++j) {
        cplx d = zv[j].dz;
        for (Eigen::Index i = 0; i < n; ++i) d -= (*b)[i] * G1(j, i);
        D[j] = d;
        h[j] = (std::conj(c[j]) * d).real();
      }

      MatrixXd J(n, n);
      for (Eigen::Index l = 0; l < n; ++l) {
        // db/dx_l = G^{-1} (dv/dx_l - dG/dx_l b)
        VectorXcd w = VectorXcd::Zero(n);
        w[l] += zv[l].dz;
        for (Eigen::Index j = 0; j < n; ++j) w[l] -= G1(l, j) * (*b)[j];
        for (Eigen::Index i = 0; i < n; ++i) w[i] += G1(i, l) * (*b)[l];
        const auto db = solve_weights(lu, w);
        if (!db) return Failure::gram;
        for (Eigen::Index j = 0; j < n; ++j) {
          cplx dD = (*b)[l] * G2(j, l);
          for (Eigen::Index i = 0; i < n; ++i) dD -= (*db)[i] * G1(j, i);
          if (j == l) {
            dD += zv[j].d2z;
            for (Eigen::Index i = 0; i < n; ++i) dD -= (*b)[i] * G2(j, i);
          }
          J(j, l) = (std::conj(c[j]) * dD).real();
        }
      }

      const Eigen::FullPivLU<MatrixXd> jlu(J);
      if (jlu.rank() < n || !(jlu.rcond() > 1e-14)) return Failure::jacobian;
      const VectorXd dx = jlu.solve(h);
      if (!dx.allFinite() || dx.cwiseAbs().maxCoeff() > 0.5) return Failure::jacobian;
      x -= dx;
      if (dx.cwiseAbs().maxCoeff() < opts_.newton_tol) {
        // weights at the converged locations
        const MatrixXd Gc = kernel_matrix(obs_.fc, x, 0);
        Eigen::PartialPivLU<MatrixXd> luc(Gc);
        if (!(luc.rcond() > 1e-12)) return Failure::gram;
        VectorXcd vc(n);
        for (Eigen::Index i = 0; i < n; ++i) vc[i] = z_eval(obs_, x[i]) - c[i];
        const auto bc = solve_weights(luc, vc);
        if (!bc) return Failure::gram;
        out.lambda = lambda;
        out.x = x.unaryExpr([](double t) { return wrap_angle(t); });
        out.b = *bc;
        return Failure::none;
      }
    }
    return Failure::jacobian;
  }

  // max over off-support t of |R(t)| and its location.
  std::pair<double, double> off_support_max(const Solution& sol) const {
    const Observation r = residual_observation(obs_, sol.x, sol.b);
    const int M = opts_.event_grid_factor * obs_.N();
    const double h = kTwoPi / M;
    const auto grid = z_on_grid(r, M);
    std::vector<double> mod(static_cast<std::size_t>(M));
    for (int j = 0; j < M; ++j) mod[j] = std::norm(grid[j]);

    std::vector<int> maxima;
    for (int j = 0; j < M; ++j) {
      if (mod[j] >= mod[(j + M - 1) % M] && mod[j] >= mod[(j + 1) % M] &&
          !near_active(j * h, sol.x, opts_.merge_radius)) {
        maxima.push_back(j);
      }
    }
    std::stable_sort(maxima.begin(), maxima.end(),
                     [&mod](int a, int b) { return mod[a] > mod[b]; });
    double best = -std::numeric_limits<double>::infinity();
    double best_t = 0.0;
    const auto abs2 = [&r](double t) { return std::norm(z_eval(r, t)); };
    for (std::size_t c = 0; c < maxima.size() && c < 4; ++c) {
      const int j = maxima[c];
      const auto res = maximize_1d(abs2, (j - 1) * h, (j + 1) * h, 1e-9);
      double t = res.argmax;
      // Newton polish on Re(conj(R) R') = 0
      for (int it = 0; it < 20; ++it) {
        const ZValue zv = z_eval_derivs(r, t);
        const double f = (std::conj(zv.z) * zv.dz).real();
        const double fp = std::norm(zv.dz) + (std::conj(zv.z) * zv.d2z).real();
        if (!(fp < 0.0)) break;
        const double next = t - f / fp;
        if (std::abs(next - res.argmax) > h || abs2(next) < abs2(t)) break;
        const bool done = std::abs(next - t) < 1e-13;
        t = next;
        if (done) break;
      }
      if (near_active(wrap_angle(t), sol.x, opts_.merge_radius)) continue;
      const double v = std::sqrt(abs2(t));
      if (v > best) {
        best = v;
        best_t = wrap_angle(t);
      }
    }
    return {best, best_t};
  }

 private:
  const Observation& obs_;
  const LarsOptions& opts_;
};

LarsKnot make_knot(double lambda, const VectorXd& x, const VectorXcd& b, double entering,
                   double sigma) {
  LarsKnot k;
  k.lambda = lambda;
  const double two_s2 = 2.0 * sigma * sigma;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    k.active.push_back(x[i]);
    k.weights.push_back(b[i] / two_s2);
  }
  k.active.push_back(entering);
  k.weights.emplace_back(0.0, 0.0);
  return k;
}

}  // namespace

void LarsOptions::validate() const {
  if (k_max < 2) throw InvalidArgument("LarsOptions: k_max must be >= 2");
  if (!(lambda_min > 0.0)) throw InvalidArgument("LarsOptions: lambda_min must be > 0");
  if (!(lambda_step_fraction > 0.0 && lambda_step_fraction < 1.0)) {
    throw InvalidArgument("LarsOptions: lambda_step_fraction must be in (0, 1)");
  }
  if (!(newton_tol > 0.0) || !(bisection_tol > 0.0) || !(merge_radius > 0.0)) {
    throw InvalidArgument("LarsOptions: tolerances must be positive");
  }
  if (event_grid_factor < 4) throw InvalidArgument("LarsOptions: event grid too coarse");
}

std::string to_string(LarsStatus s) {
  switch (s) {
    case LarsStatus::completed: return "completed";
    case LarsStatus::path_stop_singular_gram: return "path_stop_singular_gram";
    case LarsStatus::path_stop_singular_jacobian: return "path_stop_singular_jacobian";
    case LarsStatus::reached_k_max: return "reached_k_max";
    case LarsStatus::reached_lambda_min: return "reached_lambda_min";
  }
  return "unknown";
}

LarsPath lars_run(const Observation& obs, double sigma, const LarsOptions& opts) {
  opts.validate();
  if (!(sigma > 0.0)) throw InvalidArgument("lars_run: sigma must be positive");
  LarsPath path;
  path.sigma = sigma;

  const FirstKnot first = first_knot(obs);
  const SecondKnot second = second_knot(obs, first.z_hat, first.lambda1);
  const double l1 = first.lambda1;
  const double l2 = second.lambda2;
  const double t1 = first.z_hat.t;
  const cplx z1 = z_eval(obs, t1);

  path.knots.push_back({l1, {t1}, {cplx(0.0, 0.0)}});

  VectorXd x(1);
  x << t1;
  VectorXcd b(1);
  b << (1.0 - l2 / l1) * z1;
  path.knots.push_back(make_knot(l2, x, b, second.y_hat.t, sigma));
  path.terminal_lambda = l2;

  if (l2 == 0.0) {
    // The residual is a multiple of the kernel: no further knot exists.
    path.status = LarsStatus::completed;
    return path;
  }
  if (static_cast<int>(path.knots.size()) >= opts.k_max) {
    path.status = LarsStatus::reached_k_max;
    return path;
  }
  if (l2 <= opts.lambda_min) {
    path.status = LarsStatus::reached_lambda_min;
    return path;
  }

  const Continuation cont(obs, opts);
  double lambda_prev_knot = l2;
  double entering = second.y_hat.t;
  for (;;) {
    // Start a new stage: the entering point joins with the residual it had.
    const Eigen::Index n = x.size() + 1;
    Stage stage{lambda_prev_knot, VectorXcd(n)};
    VectorXd xs(n);
    xs.head(n - 1) = x;
    xs[n - 1] = entering;
    const Observation r = residual_observation(obs, x, b);
    for (Eigen::Index i = 0; i < n; ++i) stage.c0[i] = z_eval(r, xs[i]);
    stage.c0[n - 1] *= lambda_prev_knot / std::abs(stage.c0[n - 1]);
    if (near_active(entering, x, opts.merge_radius)) {
      path.status = LarsStatus::path_stop_singular_gram;
      return path;
    }

    Solution cur;
    Failure f = cont.solve(stage, lambda_prev_knot, xs, cur);
    if (f != Failure::none) {
      path.status = f == Failure::gram ? LarsStatus::path_stop_singular_gram
                                       : LarsStatus::path_stop_singular_jacobian;
      return path;
    }
    std::optional<Solution> prev;
    double step = opts.lambda_step_fraction * cur.lambda;

    const auto predict = [&](double lambda) {
      if (!prev) return cur.x;
      VectorXd dx = cur.x - prev->x;
      for (Eigen::Index i = 0; i < dx.size(); ++i) dx[i] = wrap_signed(dx[i]);
      return VectorXd(cur.x + dx * ((lambda - cur.lambda) / (cur.lambda - prev->lambda)));
    };
    const auto stop = [&](Failure why) {
      path.status = why == Failure::gram ? LarsStatus::path_stop_singular_gram
                                         : LarsStatus::path_stop_singular_jacobian;
      path.terminal_lambda = cur.lambda;
      return path;
    };

    bool found = false;
    while (!found) {
      const double lambda_try = std::max(cur.lambda - step, opts.lambda_min);
      Solution trial;
      f = cont.solve(stage, lambda_try, predict(lambda_try), trial);
      if (f != Failure::none) {
        step *= 0.5;
        if (step < 1e-6 * cur.lambda) return stop(f);
        continue;
      }
      const auto [emax, et] = cont.off_support_max(trial);
      if (emax <= lambda_try) {
        prev = cur;
        cur = trial;
        if (lambda_try <= opts.lambda_min) {
          path.status = LarsStatus::reached_lambda_min;
          path.terminal_lambda = cur.lambda;
          return path;
        }
        step = std::min(2.0 * step, opts.lambda_step_fraction * cur.lambda);
        continue;
      }
      // The knot lies in (lambda_try, cur.lambda]: bisect.
      double lo = lambda_try;
      while (cur.lambda - lo > opts.bisection_tol) {
        const double mid = 0.5 * (lo + cur.lambda);
        Solution ms;
        f = cont.solve(stage, mid, predict(mid), ms);
        if (f != Failure::none) return stop(f);
        if (cont.off_support_max(ms).first <= mid) {
          prev = cur;
          cur = ms;
        } else {
          lo = mid;
        }
      }
      found = true;
    }

    const auto [emax, et] = cont.off_support_max(cur);
    (void)emax;
    path.knots.push_back(make_knot(cur.lambda, cur.x, cur.b, et, sigma));
    path.terminal_lambda = cur.lambda;
    if (static_cast<int>(path.knots.size()) >= opts.k_max) {
      path.status = LarsStatus::reached_k_max;
      return path;
    }
    x = cur.x;
    b = cur.b;
    lambda_prev_knot = cur.lambda;
    entering = et;
  }
}

cplx lars_residual(const Observation& obs, const LarsPath& path, int k, double t) {
  if (k < 1 || k > static_cast<int>(path.knots.size())) {
    throw OutOfRange("lars_residual: knot index out of range");
  }
  const LarsKnot& knot = path.knots[static_cast<std::size_t>(k - 1)];
  const double two_s2 = 2.0 * path.sigma * path.sigma;
  cplx r = z_eval(obs, t);
  for (std::size_t i = 0; i < knot.active.size(); ++i) {
    r -= two_s2 * knot.weights[i] * normalized_kernel(obs.fc, t - knot.active[i]).value;
  }
  return r;
}

std::string lars_path_csv(const LarsPath& path) {
  std::ostringstream os;
  os << "k,lambda,t,re_a,im_a\n";
  for (std::size_t k = 0; k < path.knots.size(); ++k) {
    const LarsKnot& knot = path.knots[k];
    for (std::size_t i = 0; i < knot.active.size(); ++i) {
      os << (k + 1) << ',' << format_double(knot.lambda) << ',' << format_double(knot.active[i])
         << ',' << format_double(knot.weights[i].real()) << ','
         << format_double(knot.weights[i].imag()) << '\n';
    }
  }
  return os.str();
}

}  // namespace srknots
