#include <cmath>
#include <numbers>

#include "doctest.h"
#include "oracles.hpp"
#include "srknots/errors.hpp"
#include "srknots/knots.hpp"

using namespace srknots;
using doctest::Approx;
constexpr double kPi = std::numbers::pi;

namespace {

Observation spike(int fc, double x, cplx a) {
  RngStream s(0, 0);
  return synthesize({{{x, a}}}, fc, 0.0, s);
}

// Radial limit of X^{|z} along direction u at z_hat: u'X''u / u'Lambda u + lambda1
double radial_direction_value(const Observation& o, const KnotCertificate& c, Eigen::Vector2d u) {
  const auto ctx = ModelContext::make(o.fc);
  const Eigen::Matrix2d H = x_hess(o, c.z_hat);
  return u.dot(H * u) / u.dot(ctx.lambda_tilde * u);
}

}  // namespace

TEST_CASE("first knot of a noiseless spike") {
  const Observation o = spike(3, 1.3, cplx(2.0, 0.0));
  const FirstKnot k = first_knot(o);
  CHECK(k.z_hat.t == Approx(1.3).epsilon(1e-12));
  CHECK(std::abs(wrap_signed(k.z_hat.theta)) < 1e-12);
  CHECK(k.lambda1 == Approx(2.0).epsilon(1e-14));

  const Observation p = spike(5, 4.0, std::polar(1.5, 2.2));
  const FirstKnot kp = first_knot(p);
  CHECK(kp.z_hat.theta == Approx(2.2).epsilon(1e-12));
  CHECK(kp.lambda1 == Approx(1.5).epsilon(1e-14));
  CHECK(kp.z_hat.t == Approx(4.0).epsilon(1e-12));
}

TEST_CASE("first knot matches a 1e6-point grid maximum") {
  for (std::uint64_t seed : {42u, 7u, 1234u}) {
    const Observation o = oracle::noisy_obs(3, seed);
    const FirstKnot k = first_knot(o);
    const double grid = oracle::grid_max_abs_z(o, 1000000);
    CHECK(k.lambda1 >= grid - 1e-12);
    CHECK(std::abs(k.lambda1 - grid) < 1e-8);
    CHECK(x_grad(o, k.z_hat).norm() < 1e-8 * std::max(k.lambda1, 1.0));
  }
}

TEST_CASE("first knot rejects a process with constant modulus") {
  Observation o;
  o.fc = 2;
  o.y.assign(5, cplx(0.0, 0.0));
  o.coeff(0) = cplx(1.0, 1.0);
  CHECK_THROWS_AS(first_knot(o), DegenerateProcess);
  o.coeff(0) = cplx(0.0, 0.0);
  o.coeff(2) = cplx(0.0, 3.0);  // |Z| = 3/sqrt(5) everywhere
  CHECK_THROWS_AS(first_knot(o), DegenerateProcess);
}

TEST_CASE("regressed values") {
  const Observation o = oracle::noisy_obs(3, 42);
  const FirstKnot k = first_knot(o);
  // on the theta-circle through z_hat the regression on X(z_hat) vanishes
  for (double d : {0.3, 1.0, 2.5, kPi}) {
    const double v = regressed_value(o, k.z_hat, k.z_hat.shifted(0.0, d),
                                     RegressionMode::on_value);
    CHECK(std::abs(v) < 1e-12 * k.lambda1);
  }
  // value of the two forms agree where X'(z) = 0
  const TorusPoint y{2.0, 1.0};
  CHECK(regressed_value(o, k.z_hat, y, RegressionMode::on_value) ==
        Approx(regressed_value(o, k.z_hat, y, RegressionMode::on_value_and_grad)).epsilon(1e-7));
  // explicit formula at a generic point
  const TorusPoint z{0.5, 0.2};
  const auto ctx = ModelContext::make(3);
  const Eigen::Vector2d dz = torus_delta(z, y);
  const double rho = oracle::rho_naive(3, dz[0], dz[1]);
  const double xz = oracle::x_naive(o, z.t, z.theta);
  CHECK(regressed_value(o, z, y, RegressionMode::on_value) ==
        Approx(xz + (oracle::x_naive(o, y.t, y.theta) - xz) / (1 - rho)).epsilon(1e-12));
  CHECK_THROWS_AS(regressed_value(o, z, z, RegressionMode::on_value), NearSingular);
  CHECK_THROWS_AS(regressed_value(o, z, z.shifted(1e-9, 0.0), RegressionMode::on_value_and_grad),
                  NearSingular);
  (void)ctx;
}

TEST_CASE("regression on (X, X') removes exactly the derivative directions") {
  // If y_k is the coefficient vector of d/ds rho-type kernels centred at z0,
  // then X = <w, X'(z0)-covariance> and the conditional residual vanishes.
  const int fc = 3;
  const int N = 2 * fc + 1;
  const double s0 = 1.1, th0 = 0.4;
  for (int comp = 0; comp < 2; ++comp) {
    Observation o;
    o.fc = fc;
    o.y.resize(N);
    for (int k = -fc; k <= fc; ++k) {
      // Z(t) = (1/N) sum e^{ik(t - s0)} e^{i th0} times ik (t-derivative) or i (theta)
      const cplx factor = comp == 0 ? cplx(0.0, k) : cplx(0.0, 1.0);
      o.coeff(k) = factor * std::exp(cplx(0.0, -k * s0 + th0)) / std::sqrt(double(N));
    }
    const TorusPoint z0{s0, th0};
    for (auto [t, th] : {std::pair{2.0, 1.0}, {4.0, 5.5}, {0.2, 3.0}}) {
      const double v = regressed_value(o, z0, TorusPoint{t, th}, RegressionMode::on_value_and_grad);
      CHECK(std::abs(v) < 1e-12);
    }
  }
}

TEST_CASE("second knot of a noiseless spike is zero") {
  for (int fc : {3, 5}) {
    const Observation o = spike(fc, 2.0, cplx(1.7, 0.0));
    const KnotCertificate c = compute_certificate(o);
    CHECK(c.lambda2 == 0.0);
    CHECK(std::abs(c.alpha2) < 1e-12);
    CHECK(std::abs(c.alpha3) < 1e-12);
  }
}

TEST_CASE("certificate invariants on seeded observations") {
  const auto ctx = ModelContext::make(3);
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const Observation o = oracle::noisy_obs(3, seed);
    const KnotCertificate c = compute_certificate(o);
    CHECK(c.lambda2 >= 0.0);
    CHECK(c.lambda2 < c.lambda1);
    CHECK(c.R(1, 1) == 0.0);
    CHECK(c.R(0, 0) == -c.alpha2);
    CHECK(c.R(0, 1) == c.alpha3);
    const Eigen::Matrix2d H = x_hess(o, c.z_hat);
    CHECK((H + ctx.lambda_tilde * c.lambda1 - c.R).cwiseAbs().maxCoeff() < 1e-9);
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(-H);
    CHECK(es.eigenvalues()[0] > 0.0);
    CHECK(c.grad_norm_at_zhat < 1e-8 * std::max(c.lambda1, 1.0));
    // the reported second knot attains lambda2
    if (torus_delta(c.z_hat, c.y_hat).norm() > 1e-6) {
      const double v = regressed_value(o, c.z_hat, c.y_hat, RegressionMode::on_value);
      CHECK(v == Approx(c.lambda2).epsilon(1e-9));
    }
  }
}

TEST_CASE("second knot matches exhaustive grids") {
  for (std::uint64_t seed : {42u, 3u}) {
    const Observation o = oracle::noisy_obs(3, seed);
    const KnotCertificate c = compute_certificate(o);
    const double xz = oracle::x_naive(o, c.z_hat.t, c.z_hat.theta);
    const auto coarse = oracle::xz_grid_max(o, c.z_hat.t, c.z_hat.theta, xz, 2000, 1e-3);
    // radial limit inside the excluded disc
    double radial = -1e300;
    for (int i = 0; i < 3600; ++i) {
      const double a = 2 * kPi * i / 3600;
      radial = std::max(radial, c.lambda1 + radial_direction_value(
                                                o, c, Eigen::Vector2d(std::cos(a), std::sin(a))));
    }
    const double grid_value = std::max(coarse.value, radial);
    CHECK(c.lambda2 >= grid_value - 1e-9);
    // zoom on the best coarse cell to remove the grid's own discretisation error
    const auto fine = oracle::xz_grid_max(o, c.z_hat.t, c.z_hat.theta, xz, 400, 1e-3, coarse.dt,
                                          coarse.dth, 4 * kPi / 2000);
    const double oracle_value = std::max({coarse.value, fine.value, radial});
    CHECK(std::abs(c.lambda2 - oracle_value) < 1e-6);
    CHECK(std::abs(c.lambda2 - grid_value) < 1e-4);
  }
}

TEST_CASE("second knot ratio: branches and denominator identity") {
  const Observation o = oracle::noisy_obs(5, 17);
  const FirstKnot k = first_knot(o);
  const auto ctx = ModelContext::make(5);
  // Den r^2 = 1 - rho
  RngStream s(4, 0);
  for (int i = 0; i < 100; ++i) {
    const double r = 4.0 * s.uniform() + 1e-4;
    const double a = 2 * kPi * s.uniform();
    const double lhs = second_knot_denominator(5, r, a) * r * r;
    CHECK(std::abs(lhs - (1 - correlation(ctx, {r * std::cos(a), r * std::sin(a)}))) < 1e-12);
  }
  // both branches agree at the switching radius and equal X^z - lambda1
  for (int i = 0; i < 16; ++i) {
    const double a = 2 * kPi * i / 16;
    const TorusPoint y = k.z_hat.shifted(0.5 * std::cos(a), 0.5 * std::sin(a));
    const double taylor = second_knot_ratio(o, k.z_hat, k.lambda1, y, 0.6);
    const double direct = second_knot_ratio(o, k.z_hat, k.lambda1, y, 0.4);
    CHECK(std::abs(taylor - direct) < 1e-9);
    const double xz = regressed_value(o, k.z_hat, y, RegressionMode::on_value);
    CHECK(std::abs(direct - (xz - k.lambda1)) < 1e-9);
  }
  // radial consistency at r = 1e-3
  const Eigen::Matrix2d H = x_hess(o, k.z_hat);
  for (int i = 0; i < 8; ++i) {
    const Eigen::Vector2d u(std::cos(i * kPi / 8), std::sin(i * kPi / 8));
    const double limit = u.dot(H * u) / u.dot(ctx.lambda_tilde * u);
    const TorusPoint y = k.z_hat.shifted(1e-3 * u[0], 1e-3 * u[1]);
    const double g3 = second_knot_ratio(o, k.z_hat, k.lambda1, y);
    const TorusPoint y4 = k.z_hat.shifted(1e-4 * u[0], 1e-4 * u[1]);
    const double g4 = second_knot_ratio(o, k.z_hat, k.lambda1, y4);
    CHECK(std::abs(g3 - limit) < 1e-3);
    // the error is O(r), so the 1e-4 value is about ten times closer
    CHECK(std::abs(g4 - limit) < 0.2 * std::abs(g3 - limit) + 1e-9);
    // Richardson extrapolation from the two radii
    CHECK(std::abs((10 * g4 - g3) / 9 - limit) < 1e-6);
  }
  CHECK(radial_limit_max(H, ctx.alpha1) ==
        Approx(second_knot_ratio(o, k.z_hat, k.lambda1, k.z_hat)).epsilon(1e-15));
}

TEST_CASE("second knot is homogeneous of degree one") {
  const Observation o = oracle::noisy_obs(3, 5);
  const KnotCertificate a = compute_certificate(o);
  for (double c : {0.01, 3.0, 250.0}) {
    const KnotCertificate b = compute_certificate(o.scaled(c));
    CHECK(std::abs(b.lambda1 / c - a.lambda1) < 1e-9 * a.lambda1);
    CHECK(std::abs(b.lambda2 / c - a.lambda2) < 1e-9 * a.lambda1);
  }
}

TEST_CASE("under the null 0 < lambda2 < lambda1") {
  int ok = 0;
  for (int r = 0; r < 200; ++r) {
    RngStream s(2718, r);
    const Observation o = synthesize({}, 3, 1.0, s);
    const KnotCertificate c = compute_certificate(o);
    ok += (c.lambda2 > 0.0 && c.lambda2 < c.lambda1);
  }
  CHECK(ok == 200);
}

TEST_CASE("hessian_and_alphas formulas") {
  const Observation o = spike(3, 0.7, cplx(1.0, 0.0));
  const FirstKnot k = first_knot(o);
  const HessianAlphas ha = hessian_and_alphas(o, k.z_hat, k.lambda1);
  CHECK(ha.R.cwiseAbs().maxCoeff() < 1e-12);
  // at a minimum of |Z| the Hessian is not negative definite
  const Observation n = oracle::noisy_obs(3, 9);
  double tmin = 0.0, vmin = 1e300;
  for (int j = 0; j < 4000; ++j) {
    const double t = 2 * kPi * j / 4000;
    if (std::abs(z_eval(n, t)) < vmin) {
      vmin = std::abs(z_eval(n, t));
      tmin = t;
    }
  }
  const auto zmin = TorusPoint::wrapped(tmin, std::arg(z_eval(n, tmin)));
  CHECK_THROWS_AS(hessian_and_alphas(n, zmin, std::abs(z_eval(n, tmin))), NotAMaximum);
}
