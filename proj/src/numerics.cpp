#include "srknots/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <numbers>

#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <boost/math/tools/minima.hpp>

#include "srknots/errors.hpp"

namespace srknots {

void QuadratureSpec::validate() const {
  if (node_count < 8) throw InvalidArgument("QuadratureSpec: node_count must be >= 8");
  if (!(tail_cut > 0.0)) throw InvalidArgument("QuadratureSpec: tail_cut must be > 0");
  if (!(abs_tol > 0.0)) throw InvalidArgument("QuadratureSpec: abs_tol must be > 0");
}

// ---------------------------------------------------------------------------

double normal_pdf(double x) {
  constexpr double inv_sqrt_2pi = 0.39894228040143267794;
  return inv_sqrt_2pi * std::exp(-0.5 * x * x);
}

double normal_sf(double x) { return 0.5 * std::erfc(x / std::numbers::sqrt2); }

double student_pdf(double x, double dof) {
  if (!(dof > 0.0)) throw InvalidArgument("student_pdf: dof must be positive");
  const double log_norm = std::lgamma(0.5 * (dof + 1.0)) - std::lgamma(0.5 * dof) -
                          0.5 * std::log(dof * std::numbers::pi);
  return std::exp(log_norm - 0.5 * (dof + 1.0) * std::log1p(x * x / dof));
}

double student_sf(double x, double dof) {
  if (!(dof > 0.0)) throw InvalidArgument("student_sf: dof must be positive");
  if (x == 0.0) return 0.5;
  const double x2 = x * x;
  // Tail mass beyond |x| is I_{dof/(dof+x^2)}(dof/2, 1/2) / 2. For small |x|
  // the complementary form keeps full relative accuracy.
  double tail;
  if (x2 < dof) {
    tail = 0.5 * boost::math::ibetac(0.5, 0.5 * dof, x2 / (dof + x2));
  } else {
    tail = 0.5 * boost::math::ibeta(0.5 * dof, 0.5, dof / (dof + x2));
  }
  return x > 0.0 ? tail : 1.0 - tail;
}

double gamma_m(int m) {
  if (m <= 3) throw InvalidArgument("gamma_m: m must exceed 3");
  const double md = m;
  const double log_ratio = std::lgamma(md / 2) + std::lgamma((md - 3) / 2) -
                           std::lgamma((md - 1) / 2) - std::lgamma((md - 2) / 2);
  return (md - 3) / (md - 2) * std::exp(log_ratio);
}

// ---------------------------------------------------------------------------

namespace {

GaussLegendreRule build_gauss_legendre(int n) {
  GaussLegendreRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  const int half = (n + 1) / 2;
  for (int i = 0; i < half; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0;
      double p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    // recompute derivative at the converged node
    double p0 = 1.0;
    double p1 = x;
    for (int k = 2; k <= n; ++k) {
      const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
      p0 = p1;
      p1 = p2;
    }
    dp = n * (x * p1 - p0) / (x * x - 1.0);
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    rule.nodes[i] = -x;
    rule.nodes[n - 1 - i] = x;
    rule.weights[i] = w;
    rule.weights[n - 1 - i] = w;
  }
  return rule;
}

}  // namespace

const GaussLegendreRule& gauss_legendre(int n) {
  static std::mutex mutex;
  static std::map<int, GaussLegendreRule> cache;
  std::lock_guard<std::mutex> lock(mutex);
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, build_gauss_legendre(n)).first;
  return it->second;
}

double integrate_interval(const std::function<double(double)>& f, double a, double b, int n) {
  const auto& rule = gauss_legendre(n);
  const double half = 0.5 * (b - a);
  const double mid = 0.5 * (b + a);
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const double v = f(mid + half * rule.nodes[i]);
    if (!std::isfinite(v)) throw InvalidArgument("integrate: non-finite integrand value");
    sum += rule.weights[i] * v;
  }
  return half * sum;
}

double integrate_upper(const std::function<double(double)>& f, double lower, double scale,
                       const QuadratureSpec& spec) {
  spec.validate();
  if (!(scale > 0.0)) throw InvalidArgument("integrate_upper: scale must be positive");
  if (!std::isfinite(lower)) throw InvalidArgument("integrate_upper: lower must be finite");

  const double upper = lower + spec.tail_cut * (scale + std::max(0.0, std::abs(lower)));
  double total = 0.0;
  double a = lower;
  double width = scale;
  while (a < upper) {
    const double b = std::min(upper, a + width);
    const double panel = integrate_interval(f, a, b, spec.node_count);
    total += panel;
    // Past the bulk of the density, stop once panels no longer matter.
    if (a > std::max(lower, 0.0) + scale &&
        std::abs(panel) <= 1e-3 * spec.abs_tol * std::abs(total)) {
      break;
    }
    a = b;
    width *= 2.0;
  }
  return total;
}

// ---------------------------------------------------------------------------

Max1d maximize_1d(const std::function<double(double)>& f, double lo, double hi, double tol) {
  if (!(hi > lo) || !std::isfinite(lo) || !std::isfinite(hi)) {
    throw InvalidArgument("maximize_1d: degenerate bracket");
  }
  if (!(tol > 0.0)) throw InvalidArgument("maximize_1d: tol must be positive");
  // Brent's precision is relative to |x|; convert tol into a bit count.
  const double rel = tol / std::max(1.0, std::max(std::abs(lo), std::abs(hi)));
  int bits = static_cast<int>(std::ceil(-std::log2(rel))) + 1;
  bits = std::clamp(bits, 8, std::numeric_limits<double>::digits / 2);
  const auto neg = [&f](double x) { return -f(x); };
  std::uintmax_t max_iter = 500;
  const auto [x, fx] = boost::math::tools::brent_find_minima(neg, lo, hi, bits, max_iter);
  return {x, -fx};
}

Max2d maximize_2d(const std::function<double(double, double)>& f, std::array<double, 2> start,
                  double tol, double initial_step, int max_iter) {
  if (!(tol > 0.0)) throw InvalidArgument("maximize_2d: tol must be positive");
  using Point = std::array<double, 2>;
  std::array<Point, 3> p = {start, Point{start[0] + initial_step, start[1]},
                            Point{start[0], start[1] + initial_step}};
  std::array<double, 3> v{};
  for (int i = 0; i < 3; ++i) v[i] = f(p[i][0], p[i][1]);

  const auto eval = [&f](const Point& q) { return f(q[0], q[1]); };
  const auto lerp = [](const Point& a, const Point& b, double s) {
    return Point{a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])};
  };

  for (int iter = 0; iter < max_iter; ++iter) {
    // order by value, best first
    std::array<int, 3> idx = {0, 1, 2};
    std::sort(idx.begin(), idx.end(), [&v](int a, int b) { return v[a] > v[b]; });
    const std::array<Point, 3> q = {p[idx[0]], p[idx[1]], p[idx[2]]};
    const std::array<double, 3> w = {v[idx[0]], v[idx[1]], v[idx[2]]};
    p = q;
    v = w;

    double diameter = 0.0;
    for (int i = 1; i < 3; ++i) {
      diameter = std::max(diameter, std::hypot(p[i][0] - p[0][0], p[i][1] - p[0][1]));
    }
    if (diameter < tol) return {p[0], v[0], iter};

    const Point centroid = {0.5 * (p[0][0] + p[1][0]), 0.5 * (p[0][1] + p[1][1])};
    const Point reflected = lerp(centroid, p[2], -1.0);
    const double vr = eval(reflected);
    if (vr > v[0]) {
      const Point expanded = lerp(centroid, p[2], -2.0);
      const double ve = eval(expanded);
      if (ve > vr) {
        p[2] = expanded;
        v[2] = ve;
      } else {
        p[2] = reflected;
        v[2] = vr;
      }
      continue;
    }
    if (vr > v[1]) {
      p[2] = reflected;
      v[2] = vr;
      continue;
    }
    const bool outside = vr > v[2];
    const Point contracted = outside ? lerp(centroid, reflected, 0.5) : lerp(centroid, p[2], 0.5);
    const double vc = eval(contracted);
    if (vc > std::max(outside ? vr : v[2], v[2])) {
      p[2] = contracted;
      v[2] = vc;
      continue;
    }
    for (int i = 1; i < 3; ++i) {
      p[i] = lerp(p[0], p[i], 0.5);
      v[i] = eval(p[i]);
    }
  }
  throw Unconverged("maximize_2d: iteration cap exceeded");
}

// ---------------------------------------------------------------------------

std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                        std::array<std::uint32_t, 2> key) {
  constexpr std::uint32_t m0 = 0xD2511F53u;
  constexpr std::uint32_t m1 = 0xCD9E8D57u;
  constexpr std::uint32_t w0 = 0x9E3779B9u;
  constexpr std::uint32_t w1 = 0xBB67AE85u;
  for (int round = 0; round < 10; ++round) {
    const std::uint64_t p0 = static_cast<std::uint64_t>(m0) * ctr[0];
    const std::uint64_t p1 = static_cast<std::uint64_t>(m1) * ctr[2];
    const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
    const auto lo0 = static_cast<std::uint32_t>(p0);
    const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
    const auto lo1 = static_cast<std::uint32_t>(p1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += w0;
    key[1] += w1;
  }
  return ctr;
}

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed), stream_id_(stream_id) {}

std::uint64_t RngStream::next_u64() {
  if (block_pos_ >= 4) {
    const std::array<std::uint32_t, 4> ctr = {
        static_cast<std::uint32_t>(counter_), static_cast<std::uint32_t>(counter_ >> 32),
        static_cast<std::uint32_t>(stream_id_), static_cast<std::uint32_t>(stream_id_ >> 32)};
    const std::array<std::uint32_t, 2> key = {static_cast<std::uint32_t>(seed_),
                                              static_cast<std::uint32_t>(seed_ >> 32)};
    block_ = philox4x32(ctr, key);
    ++counter_;
    block_pos_ = 0;
  }
  const std::uint64_t hi = block_[block_pos_];
  const std::uint64_t lo = block_[block_pos_ + 1];
  block_pos_ += 2;
  return (hi << 32) | lo;
}

double RngStream::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = uniform();
  while (u1 == 0.0) u1 = uniform();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

}  // namespace srknots
