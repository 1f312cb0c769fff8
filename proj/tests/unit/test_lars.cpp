#include <cmath>
#include <numbers>
#include <sstream>

#include "doctest.h"
#include "oracles.hpp"
#include "srknots/errors.hpp"
#include "srknots/lars.hpp"

using namespace srknots;
using doctest::Approx;
constexpr double kPi = std::numbers::pi;

namespace {

// Residual at knot k from the naive Z and the closed Dirichlet kernel.
cplx naive_residual(const Observation& o, const LarsPath& p, int k, double t) {
  const LarsKnot& knot = p.knots[static_cast<std::size_t>(k - 1)];
  cplx r = oracle::z_naive(o, t);
  for (std::size_t i = 0; i < knot.active.size(); ++i) {
    r -= 2 * p.sigma * p.sigma * knot.weights[i] * oracle::rho_naive(o.fc, t - knot.active[i], 0);
  }
  return r;
}

void check_invariants(const Observation& o, const LarsPath& p, double tol) {
  for (std::size_t k = 1; k <= p.knots.size(); ++k) {
    const LarsKnot& knot = p.knots[k - 1];
    if (k > 1) CHECK(knot.lambda < p.knots[k - 2].lambda);
    CHECK(knot.lambda > 0.0);
    for (double t : knot.active) {
      CHECK(std::abs(std::abs(naive_residual(o, p, static_cast<int>(k), t)) - knot.lambda) < tol);
    }
    double scan = 0.0;
    const int M = 100000;
    for (int j = 0; j < M; ++j) {
      scan = std::max(scan, std::abs(naive_residual(o, p, static_cast<int>(k), 2 * kPi * j / M)));
    }
    CHECK(scan <= knot.lambda + tol);
  }
}

}  // namespace

TEST_CASE("options validation") {
  LarsOptions o;
  CHECK_NOTHROW(o.validate());
  o.k_max = 1;
  CHECK_THROWS_AS(o.validate(), InvalidArgument);
  o = {};
  o.lambda_min = 0.0;
  CHECK_THROWS_AS(o.validate(), InvalidArgument);
  o = {};
  o.lambda_step_fraction = 1.5;
  CHECK_THROWS_AS(o.validate(), InvalidArgument);
  CHECK(to_string(LarsStatus::reached_k_max) == "reached_k_max");
  CHECK_THROWS_AS(lars_run(oracle::noisy_obs(3, 1), 0.0), InvalidArgument);
}

TEST_CASE("noiseless single atom stops after the second knot") {
  RngStream s(0, 0);
  const Observation o = synthesize({{{2.0, cplx(3.0, 0.0)}}}, 3, 0.0, s);
  const LarsPath p = lars_run(o, 1.0);
  REQUIRE(p.knots.size() == 2);
  CHECK(p.status == LarsStatus::completed);
  CHECK(p.knots[0].lambda == Approx(3.0).epsilon(1e-12));
  CHECK(p.knots[0].active[0] == Approx(2.0).epsilon(1e-10));
  CHECK(p.knots[1].lambda == 0.0);
  // the residual at lambda2 = 0 vanishes identically
  for (double t : {0.0, 1.0, 2.0, 4.5}) CHECK(std::abs(lars_residual(o, p, 2, t)) < 1e-10);
}

TEST_CASE("first two knots agree with the knots module") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Observation o = oracle::noisy_obs(3, 300 + seed);
    const auto cert = compute_certificate(o);
    const LarsPath p = lars_run(o, 1.0);
    REQUIRE(p.knots.size() >= 2);
    CHECK(std::abs(p.knots[0].lambda - cert.lambda1) < 1e-8);
    CHECK(std::abs(p.knots[1].lambda - cert.lambda2) < 1e-8);
  }
}

TEST_CASE("path invariants, seed 42") {
  const Observation o = oracle::noisy_obs(3, 42);
  const LarsPath p = lars_run(o, 1.0);
  CHECK(p.status == LarsStatus::reached_k_max);
  CHECK(p.knots.size() == 4);
  check_invariants(o, p, 1e-7);
  for (std::size_t k = 0; k < p.knots.size(); ++k) {
    CHECK(p.knots[k].active.size() == k + 1);
    CHECK(p.knots[k].weights.back() == cplx(0.0, 0.0));
  }
}

TEST_CASE("residual at the first knot is Z") {
  const Observation o = oracle::noisy_obs(3, 8);
  const LarsPath p = lars_run(o, 1.0);
  for (double t : {0.1, 2.3, 5.9}) {
    CHECK(std::abs(lars_residual(o, p, 1, t) - oracle::z_naive(o, t)) < 1e-13);
  }
  CHECK_THROWS_AS(lars_residual(o, p, 0, 0.0), OutOfRange);
  CHECK_THROWS_AS(lars_residual(o, p, 99, 0.0), OutOfRange);
}

TEST_CASE("homogeneity") {
  const Observation o = oracle::noisy_obs(3, 17);
  const LarsPath a = lars_run(o, 1.0);
  const LarsPath b = lars_run(o.scaled(2.0), 2.0);
  REQUIRE(a.knots.size() == b.knots.size());
  for (std::size_t k = 0; k < a.knots.size(); ++k) {
    CHECK(b.knots[k].lambda == Approx(2.0 * a.knots[k].lambda).epsilon(1e-8));
    REQUIRE(a.knots[k].active.size() == b.knots[k].active.size());
    for (std::size_t i = 0; i < a.knots[k].active.size(); ++i) {
      CHECK(std::abs(wrap_signed(a.knots[k].active[i] - b.knots[k].active[i])) < 1e-8);
    }
  }
}

TEST_CASE("lambda_min stops the path") {
  const Observation o = oracle::noisy_obs(3, 42);
  const LarsPath full = lars_run(o, 1.0);
  LarsOptions opts;
  opts.k_max = 10;
  opts.lambda_min = 0.5 * (full.knots[2].lambda + full.knots[3].lambda);
  const LarsPath p = lars_run(o, 1.0, opts);
  CHECK(p.status == LarsStatus::reached_lambda_min);
  CHECK(p.knots.size() == 3);
  CHECK(p.terminal_lambda == Approx(opts.lambda_min).epsilon(1e-12));
}

TEST_CASE("CSV export") {
  const Observation o = oracle::noisy_obs(3, 42);
  const LarsPath p = lars_run(o, 1.0);
  const std::string csv = lars_path_csv(p);
  std::istringstream is(csv);
  std::string line;
  std::getline(is, line);
  CHECK(line == "k,lambda,t,re_a,im_a");
  int rows = 0;
  while (std::getline(is, line)) {
    int k;
    double lam, t, re, im;
    char c;
    std::istringstream ls(line);
    ls >> k >> c >> lam >> c >> t >> c >> re >> c >> im;
    CHECK(!ls.fail());
    CHECK(lam == p.knots[k - 1].lambda);
    ++rows;
  }
  CHECK(rows == 1 + 2 + 3 + 4);
  CHECK(lars_path_csv(p) == csv);
}
