#include "srknots/sr_model.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "json.hpp"

#include "srknots/errors.hpp"

namespace srknots {

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;
}

double wrap_angle(double a) {
  double r = std::fmod(a, kTwoPi);
  if (r < 0.0) r += kTwoPi;
  if (r >= kTwoPi) r -= kTwoPi;
  return r;
}

double wrap_signed(double a) {
  double r = wrap_angle(a);
  if (r > std::numbers::pi) r -= kTwoPi;
  return r;
}

Eigen::Vector2d torus_delta(const TorusPoint& from, const TorusPoint& to) {
  return {wrap_signed(to.t - from.t), wrap_signed(to.theta - from.theta)};
}

double circular_distance(double a, double b) { return std::abs(wrap_signed(a - b)); }

void AtomicMeasure::validate() const {
  for (std::size_t i = 0; i < atoms.size(); ++i) {
    for (std::size_t j = i + 1; j < atoms.size(); ++j) {
      if (circular_distance(atoms[i].location, atoms[j].location) == 0.0) {
        throw InvalidArgument("AtomicMeasure: atom locations must be distinct modulo 2pi");
      }
    }
  }
}

Observation Observation::scaled(double c) const {
  Observation out = *this;
  for (auto& v : out.y) v *= c;
  if (out.sigma) *out.sigma *= c;
  return out;
}

void Observation::validate() const {
  if (fc < 1) throw SchemaError("Observation: fc must be >= 1");
  if (y.size() != static_cast<std::size_t>(N())) {
    throw SchemaError("Observation: length(y) = " + std::to_string(y.size()) +
                      " does not match 2 fc + 1 = " + std::to_string(N()));
  }
  if (sigma && !(*sigma > 0.0 && std::isfinite(*sigma))) {
    throw SchemaError("Observation: sigma must be a positive finite number or null");
  }
  for (const auto& v : y) {
    if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) {
      throw SchemaError("Observation: non-finite coefficient");
    }
  }
}

ModelContext ModelContext::make(int fc) {
  if (fc < 1) throw InvalidArgument("ModelContext: fc must be >= 1");
  ModelContext ctx;
  ctx.fc = fc;
  ctx.N = 2 * fc + 1;
  ctx.m = 2 * ctx.N;
  ctx.alpha1 = fc * (fc + 1.0) / 3.0;
  ctx.lambda_tilde = Eigen::Vector2d(ctx.alpha1, 1.0).asDiagonal();
  return ctx;
}

// ---------------------------------------------------------------------------

double dirichlet(int fc, double t) {
  const double s = std::sin(0.5 * t);
  if (std::abs(s) < 1e-8) {
    double sum = 1.0;
    for (int k = 1; k <= fc; ++k) sum += 2.0 * std::cos(k * t);
    return sum;
  }
  return std::sin(0.5 * (2 * fc + 1) * t) / s;
}

KernelValue normalized_kernel(int fc, double t) {
  double v = 1.0;
  double d1 = 0.0;
  double d2 = 0.0;
  for (int k = 1; k <= fc; ++k) {
    const double c = std::cos(k * t);
    const double s = std::sin(k * t);
    v += 2.0 * c;
    d1 -= 2.0 * k * s;
    d2 -= 2.0 * k * k * c;
  }
  const double inv_n = 1.0 / (2 * fc + 1);
  return {v * inv_n, d1 * inv_n, d2 * inv_n};
}

double correlation(const ModelContext& ctx, const Eigen::Vector2d& dz) {
  return normalized_kernel(ctx.fc, dz[0]).value * std::cos(dz[1]);
}

Eigen::Vector2d correlation_grad(const ModelContext& ctx, const Eigen::Vector2d& dz) {
  const auto g = normalized_kernel(ctx.fc, dz[0]);
  return {g.d1 * std::cos(dz[1]), -g.value * std::sin(dz[1])};
}

Eigen::Matrix2d correlation_hess(const ModelContext& ctx, const Eigen::Vector2d& dz) {
  const auto g = normalized_kernel(ctx.fc, dz[0]);
  const double c = std::cos(dz[1]);
  const double s = std::sin(dz[1]);
  Eigen::Matrix2d h;
  h << g.d2 * c, -g.d1 * s, -g.d1 * s, -g.value * c;
  return h;
}

// ---------------------------------------------------------------------------

Observation synthesize(const AtomicMeasure& measure, int fc, double sigma, RngStream& stream) {
  if (fc < 1) throw InvalidArgument("synthesize: fc must be >= 1");
  if (!(sigma >= 0.0)) throw InvalidArgument("synthesize: sigma must be >= 0");
  measure.validate();
  Observation obs;
  obs.fc = fc;
  obs.y.assign(static_cast<std::size_t>(obs.N()), cplx(0.0, 0.0));
  const double inv_sqrt_n = 1.0 / std::sqrt(static_cast<double>(obs.N()));
  for (int k = -fc; k <= fc; ++k) {
    cplx mean(0.0, 0.0);
    for (const auto& atom : measure.atoms) mean += atom.weight * std::polar(1.0, -k * atom.location);
    const double re = stream.normal();
    const double im = stream.normal();
    obs.coeff(k) = inv_sqrt_n * mean + sigma * cplx(re, im);
  }
  if (sigma > 0.0) obs.sigma = sigma;
  return obs;
}

ZValue z_eval_derivs(const Observation& obs, double t) {
  const int fc = obs.fc;
  const cplx step = std::polar(1.0, t);
  cplx e = std::polar(1.0, -fc * t);
  ZValue out{{0.0, 0.0}, {0.0, 0.0}, {0.0, 0.0}};
  for (int k = -fc; k <= fc; ++k) {
    // Re-anchor at k = 0 so rounding from the recurrence stays O(fc eps).
    if (k == 0) e = cplx(1.0, 0.0);
    const cplx term = obs.coeff(k) * e;
    out.z += term;
    out.dz += cplx(0.0, k) * term;
    out.d2z -= static_cast<double>(k * k) * term;
    e *= step;
  }
  const double inv_sqrt_n = 1.0 / std::sqrt(static_cast<double>(obs.N()));
  out.z *= inv_sqrt_n;
  out.dz *= inv_sqrt_n;
  out.d2z *= inv_sqrt_n;
  return out;
}

cplx z_eval(const Observation& obs, double t) {
  const int fc = obs.fc;
  const cplx step = std::polar(1.0, t);
  cplx e = std::polar(1.0, -fc * t);
  cplx z(0.0, 0.0);
  for (int k = -fc; k <= fc; ++k) {
    if (k == 0) e = cplx(1.0, 0.0);
    z += obs.coeff(k) * e;
    e *= step;
  }
  return z / std::sqrt(static_cast<double>(obs.N()));
}

std::vector<cplx> z_on_grid(const Observation& obs, int M) {
  std::vector<cplx> out(static_cast<std::size_t>(M));
  for (int j = 0; j < M; ++j) out[static_cast<std::size_t>(j)] = z_eval(obs, kTwoPi * j / M);
  return out;
}

double x_eval(const Observation& obs, const TorusPoint& z) {
  return (std::polar(1.0, -z.theta) * z_eval(obs, z.t)).real();
}

XJet x_jet(const Observation& obs, const TorusPoint& z) {
  const ZValue zv = z_eval_derivs(obs, z.t);
  const cplx rot = std::polar(1.0, -z.theta);
  const cplx w0 = rot * zv.z;
  const cplx w1 = rot * zv.dz;
  const cplx w2 = rot * zv.d2z;
  XJet jet;
  jet.value = w0.real();
  jet.grad = {w1.real(), w0.imag()};
  jet.hess << w2.real(), w1.imag(), w1.imag(), -w0.real();
  return jet;
}

Eigen::Vector2d x_grad(const Observation& obs, const TorusPoint& z) { return x_jet(obs, z).grad; }

Eigen::Matrix2d x_hess(const Observation& obs, const TorusPoint& z) { return x_jet(obs, z).hess; }

// ---------------------------------------------------------------------------

std::string format_double(double v) {
  if (!std::isfinite(v)) return "null";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string observation_to_json(const Observation& obs) {
  std::ostringstream os;
  os << "{\"fc\": " << obs.fc << ", \"sigma\": " << (obs.sigma ? format_double(*obs.sigma) : "null")
     << ", \"y\": [";
  for (std::size_t i = 0; i < obs.y.size(); ++i) {
    if (i) os << ", ";
    os << '[' << format_double(obs.y[i].real()) << ", " << format_double(obs.y[i].imag()) << ']';
  }
  os << "]}\n";
  return os.str();
}

Observation observation_from_json(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError(std::string("Observation: malformed JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("fc") || !doc.contains("y")) {
    throw SchemaError("Observation: expected an object with fields fc, sigma, y");
  }
  if (!doc["fc"].is_number_integer()) throw SchemaError("Observation: fc must be an integer");
  Observation obs;
  obs.fc = doc["fc"].get<int>();
  if (doc.contains("sigma") && !doc["sigma"].is_null()) {
    if (!doc["sigma"].is_number()) throw SchemaError("Observation: sigma must be a number or null");
    obs.sigma = doc["sigma"].get<double>();
  }
  const auto& y = doc["y"];
  if (!y.is_array()) throw SchemaError("Observation: y must be an array");
  for (const auto& pair : y) {
    if (!pair.is_array() || pair.size() != 2 || !pair[0].is_number() || !pair[1].is_number()) {
      throw SchemaError("Observation: each y entry must be [re, im]");
    }
    obs.y.emplace_back(pair[0].get<double>(), pair[1].get<double>());
  }
  obs.validate();
  return obs;
}

void save_observation(const Observation& obs, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path + " for writing");
  out << observation_to_json(obs);
  if (!out) throw Error("write failed: " + path);
}

Observation load_observation(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SchemaError("cannot open observation file " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return observation_from_json(buf.str());
}

}  // namespace srknots
