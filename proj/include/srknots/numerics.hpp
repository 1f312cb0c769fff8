#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <utility>
#include <vector>

namespace srknots {

/// Parameters of the panelized Gauss-Legendre integrator used for upper
/// tail integrals.
struct QuadratureSpec {
  int node_count = 64;    ///< nodes per panel, >= 8
  double tail_cut = 12.0; ///< truncation, in multiples of the integrand scale
  double abs_tol = 1e-12;

  void validate() const;
};

// ---------------------------------------------------------------------------
// Special functions

double normal_pdf(double x);
/// Gaussian survival function 1 - Phi(x), computed through erfc.
double normal_sf(double x);

double student_pdf(double x, double dof);
double student_sf(double x, double dof);

/// (m-3)/(m-2) * G(m/2) G((m-3)/2) / (G((m-1)/2) G((m-2)/2)); identically 1.
double gamma_m(int m);

// ---------------------------------------------------------------------------
// Quadrature

struct GaussLegendreRule {
  std::vector<double> nodes;   // on [-1, 1]
  std::vector<double> weights;
};

/// Nodes and weights of the n-point rule, cached per n.
const GaussLegendreRule& gauss_legendre(int n);

/// Integral of f over [a, b] with a single n-point rule.
double integrate_interval(const std::function<double(double)>& f, double a, double b, int n);

/// Integral of f over [lower, +inf) for integrands that decay like a Gaussian
/// or Student tail of the given scale.
///
/// The interval [lower, lower + tail_cut * (scale + max(0, |lower|))] is split
/// into panels of geometrically increasing width (scale, 2 scale, 4 scale, ...)
/// and each panel is integrated with a node_count-point rule. Panels stop early
/// once one contributes less than 1e-3 * abs_tol relative to the running total.
/// Throws InvalidArgument on non-finite integrand values.
double integrate_upper(const std::function<double(double)>& f, double lower, double scale,
                       const QuadratureSpec& spec = {});

// ---------------------------------------------------------------------------
// Local maximization

struct Max1d {
  double argmax;
  double max;
};

struct Max2d {
  std::array<double, 2> argmax;
  double max;
  int iterations;
};

/// Maximizer of a unimodal f on [lo, hi] (Brent). Throws InvalidArgument on a
/// degenerate bracket.
Max1d maximize_1d(const std::function<double(double)>& f, double lo, double hi, double tol);

/// Nelder-Mead maximizer started from `start` with an initial simplex of edge
/// `initial_step`. Converges when the simplex diameter drops below tol and the
/// vertex values agree to 1e-15 relative. Throws Unconverged after max_iter.
Max2d maximize_2d(const std::function<double(double, double)>& f, std::array<double, 2> start,
                  double tol, double initial_step = 0.1, int max_iter = 5000);

// ---------------------------------------------------------------------------
// Reproducible random numbers

/// Counter-based random stream (Philox4x32-10). The draw sequence depends only
/// on (seed, stream_id), never on threads or evaluation order elsewhere.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

  std::uint64_t next_u64();
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  /// Standard normal (Box-Muller, second variate cached).
  double normal();

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::uint64_t counter_ = 0;
  std::array<std::uint32_t, 4> block_{};
  int block_pos_ = 4;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

inline double rng_normal(RngStream& s) { return s.normal(); }
inline double rng_uniform(RngStream& s) { return s.uniform(); }

/// Philox4x32-10 block function, exposed for known-answer tests.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key);

}  // namespace srknots
