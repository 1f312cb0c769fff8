#include "srknots/mc_harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <optional>
#include <sstream>
#include <thread>

#include "srknots/errors.hpp"
#include "srknots/knots.hpp"
#include "srknots/sr_model.hpp"
#include "srknots/stat_tests.hpp"
#include "srknots/variance.hpp"

namespace srknots {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
// Stream family for the Voronoi draws, disjoint from the data streams.
constexpr std::uint64_t kVoronoiSeedMask = 0x9E3779B97F4A7C15ULL;

bool is_grid_spacing(const std::string& s, int* p = nullptr) {
  constexpr std::string_view prefix = "grid_spacing_";
  if (s.rfind(prefix, 0) != 0 || s.size() == prefix.size()) return false;
  const std::string digits = s.substr(prefix.size());
  if (!std::all_of(digits.begin(), digits.end(), [](char c) { return c >= '0' && c <= '9'; })) {
    return false;
  }
  if (p) *p = std::stoi(digits);
  return true;
}

bool is_studentized(const std::string& s) { return s == "t_rice" || s == "t_grid"; }

double weight_value(const std::string& name, int fc) {
  const double N = 2 * fc + 1;
  if (name == "logn") return std::log(N);
  if (name == "sqrtn") return std::sqrt(N);
  throw InvalidArgument("unknown spike weight '" + name + "' (expected logn or sqrtn)");
}

AtomicMeasure draw_measure(const AlternativeSpec& alt, int fc, RngStream& stream) {
  AtomicMeasure m;
  if (alt.weights.empty()) return m;
  const double sep = alt.min_separation > 0.0 ? alt.min_separation : kTwoPi / fc;
  for (;;) {
    m.atoms.clear();
    for (double w : alt.weights) m.atoms.push_back({kTwoPi * stream.uniform(), cplx(w, 0.0)});
    bool ok = true;
    for (std::size_t i = 0; i < m.atoms.size() && ok; ++i) {
      for (std::size_t j = i + 1; j < m.atoms.size(); ++j) {
        if (circular_distance(m.atoms[i].location, m.atoms[j].location) < sep) {
          ok = false;
          break;
        }
      }
    }
    if (ok) return m;
  }
}

std::vector<double> replicate(const ExperimentConfig& cfg, const ModelContext& ctx, int r) {
  RngStream stream(cfg.seed, static_cast<std::uint64_t>(r));
  const AtomicMeasure measure = draw_measure(cfg.alternative, cfg.fc, stream);
  const Observation obs = synthesize(measure, cfg.fc, cfg.sigma, stream);

  const bool need_cert = std::any_of(cfg.statistics.begin(), cfg.statistics.end(),
                                     [](const std::string& s) { return !is_grid_spacing(s); });
  KnotCertificate cert;
  if (need_cert) cert = compute_certificate(obs);
  std::optional<RandomizedAux> aux;
  const auto randomized = [&]() -> const RandomizedAux& {
    if (!aux) {
      RngStream vs(cfg.seed ^ kVoronoiSeedMask, static_cast<std::uint64_t>(r));
      aux = randomize(obs, cert, vs);
    }
    return *aux;
  };

  std::vector<double> out;
  out.reserve(cfg.statistics.size());
  for (const auto& s : cfg.statistics) {
    int p = 0;
    if (s == "rice") {
      out.push_back(rice_known(cert, cfg.sigma, ctx).value);
    } else if (s == "t_rice") {
      out.push_back(rice_unknown(cert, sigma_hat_cond(obs, cert.z_hat), ctx).value);
    } else if (s == "spacing") {
      out.push_back(spacing_statistic(cert.lambda1, cert.lambda2, cfg.sigma).value);
    } else if (s == "grid") {
      out.push_back(grid_test_known(cert.lambda1, randomized().lambda2_bar, cfg.sigma).value);
    } else if (s == "t_grid") {
      out.push_back(grid_test_unknown(cert.lambda1, randomized().lambda2_bar,
                                      sigma_hat_grid(obs, cert.z_hat), ctx)
                        .value);
    } else if (is_grid_spacing(s, &p)) {
      out.push_back(grid_spacing_test(obs, p, cfg.sigma).value);
    } else {
      throw InvalidArgument("unknown statistic '" + s + "'");
    }
  }
  return out;
}

std::string csv_number(double v) { return std::isfinite(v) ? format_double(v) : "nan"; }

void write_file(const std::string& path, const std::string& content) {
  const std::filesystem::path p(path);
  std::error_code ec;
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path(), ec);
  if (ec) throw Error("cannot create directory for " + path + ": " + ec.message());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path + " for writing");
  out << content;
  if (!out) throw Error("write failed: " + path);
}

}  // namespace

// ---------------------------------------------------------------------------

AlternativeSpec AlternativeSpec::parse(const std::string& id, int fc) {
  AlternativeSpec alt;
  alt.id = id;
  if (id == "null" || id.empty()) {
    alt.id = "null";
    return alt;
  }
  std::stringstream ss(id);
  std::string part;
  while (std::getline(ss, part, '+')) alt.weights.push_back(weight_value(part, fc));
  if (alt.weights.size() > 2) throw InvalidArgument("at most two spikes are supported");
  return alt;
}

void ExperimentConfig::validate() const {
  if (fc < 1) throw InvalidArgument("ExperimentConfig: fc must be >= 1");
  if (!(sigma > 0.0)) throw InvalidArgument("ExperimentConfig: sigma must be positive");
  if (reps < 1) throw InvalidArgument("ExperimentConfig: reps must be >= 1");
  if (statistics.empty()) throw InvalidArgument("ExperimentConfig: no statistics requested");
  for (const auto& s : statistics) {
    int p = 0;
    const bool known = s == "rice" || s == "t_rice" || s == "spacing" || s == "grid" ||
                       s == "t_grid" || is_grid_spacing(s, &p);
    if (!known) throw InvalidArgument("ExperimentConfig: unknown statistic '" + s + "'");
    if (is_grid_spacing(s) && p < 2) throw InvalidArgument("grid size must be >= 2");
  }
  if (alternative.weights.size() > 2) throw InvalidArgument("at most two spikes are supported");
}

std::vector<double> ExperimentTable::column(const std::string& statistic) const {
  const auto it = std::find(config.statistics.begin(), config.statistics.end(), statistic);
  if (it == config.statistics.end()) throw InvalidArgument("no column '" + statistic + "'");
  std::vector<double> out;
  for (double v : values[static_cast<std::size_t>(it - config.statistics.begin())]) {
    if (std::isfinite(v)) out.push_back(v);
  }
  return out;
}

int resolve_threads(int requested) {
  int n = requested > 0 ? requested : static_cast<int>(std::thread::hardware_concurrency());
  if (n < 1) n = 1;
  if (const char* env = std::getenv("SRKNOTS_THREADS")) {
    const int cap = std::atoi(env);
    if (cap >= 1) n = std::min(n, cap);
  }
  return n;
}

ExperimentTable run_experiment(const ExperimentConfig& config) {
  config.validate();
  const ModelContext ctx = ModelContext::make(config.fc);
  const std::size_t ns = config.statistics.size();
  const int reps = config.reps;

  std::vector<std::vector<double>> rows(static_cast<std::size_t>(reps));
  std::vector<std::string> errors(static_cast<std::size_t>(reps));
  std::atomic<int> next{0};
  const auto worker = [&]() {
    for (int r = next++; r < reps; r = next++) {
      try {
        rows[r] = replicate(config, ctx, r);
      } catch (const Error& e) {
        rows[r].assign(ns, std::numeric_limits<double>::quiet_NaN());
        errors[r] = e.what();
      }
    }
  };
  const int nthreads = std::min(resolve_threads(config.threads), reps);
  if (nthreads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < nthreads; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  ExperimentTable table;
  table.config = config;
  table.values.assign(ns, std::vector<double>(static_cast<std::size_t>(reps)));
  for (int r = 0; r < reps; ++r) {
    for (std::size_t s = 0; s < ns; ++s) table.values[s][r] = rows[r][s];
    if (!errors[r].empty()) {
      table.failures.push_back("rep " + std::to_string(r) + ": " + errors[r]);
      ++table.excluded;
    }
  }
  return table;
}

// ---------------------------------------------------------------------------

EcdfTable ecdf(std::vector<double> values, int grid_points) {
  if (values.empty()) throw InvalidArgument("ecdf: empty sample");
  if (grid_points < 2) throw InvalidArgument("ecdf: need at least two grid points");
  std::sort(values.begin(), values.end());
  EcdfTable t;
  t.sorted = std::move(values);
  const double n = static_cast<double>(t.sorted.size());
  for (int i = 0; i < grid_points; ++i) {
    const double x = static_cast<double>(i) / (grid_points - 1);
    const auto count = std::upper_bound(t.sorted.begin(), t.sorted.end(), x) - t.sorted.begin();
    t.grid.push_back(x);
    t.cdf.push_back(static_cast<double>(count) / n);
  }
  return t;
}

double ks_uniform(std::vector<double> values) {
  if (values.empty()) throw InvalidArgument("ks_uniform: empty sample");
  std::sort(values.begin(), values.end());
  const double n = static_cast<double>(values.size());
  double d = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double u = std::clamp(values[i], 0.0, 1.0);
    d = std::max({d, (i + 1) / n - u, u - i / n});
  }
  return d;
}

double empirical_level(const std::vector<double>& values, double alpha) {
  if (values.empty()) throw InvalidArgument("empirical_level: empty sample");
  const auto count = std::count_if(values.begin(), values.end(),
                                   [alpha](double v) { return v <= alpha; });
  return static_cast<double>(count) / static_cast<double>(values.size());
}

std::string table_csv(const ExperimentTable& table) {
  const auto& cfg = table.config;
  std::ostringstream os;
  os << "rep,statistic,value,fc,sigma_mode,alt_id,seed\n";
  for (int r = 0; r < cfg.reps; ++r) {
    for (std::size_t s = 0; s < cfg.statistics.size(); ++s) {
      const auto& name = cfg.statistics[s];
      os << r << ',' << name << ',' << csv_number(table.values[s][r]) << ',' << cfg.fc << ','
         << (is_studentized(name) ? "unknown" : "known") << ',' << cfg.alternative.id << ','
         << cfg.seed << '\n';
    }
  }
  return os.str();
}

void emit_csv(const ExperimentTable& table, const std::string& path) {
  write_file(path, table_csv(table));
}

std::string curves_svg(const std::vector<std::pair<std::string, std::vector<double>>>& curves,
                       const std::string& title) {
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                 "#9467bd", "#8c564b", "#e377c2", "#17becf"};
  constexpr double left = 60.0, top = 40.0, size = 500.0;
  const auto px = [&](double x) { return left + size * x; };
  const auto py = [&](double y) { return top + size * (1.0 - y); };
  char buf[128];
  std::ostringstream os;
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
     << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"600\" "
        "height=\"600\" viewBox=\"0 0 600 600\">\n"
     << "<rect x=\"0\" y=\"0\" width=\"600\" height=\"600\" fill=\"white\"/>\n"
     << "<text x=\"300\" y=\"25\" font-family=\"sans-serif\" font-size=\"14\" "
        "text-anchor=\"middle\">"
     << title << "</text>\n";
  std::snprintf(buf, sizeof buf,
                "<rect x=\"%.1f\" y=\"%.1f\" width=\"%.1f\" height=\"%.1f\" fill=\"none\" "
                "stroke=\"black\"/>\n",
                left, top, size, size);
  os << buf;
  for (int i = 0; i <= 4; ++i) {
    const double v = 0.25 * i;
    std::snprintf(buf, sizeof buf,
                  "<text x=\"%.1f\" y=\"%.1f\" font-family=\"sans-serif\" font-size=\"11\" "
                  "text-anchor=\"middle\">%.2f</text>\n",
                  px(v), top + size + 16.0, v);
    os << buf;
    std::snprintf(buf, sizeof buf,
                  "<text x=\"%.1f\" y=\"%.1f\" font-family=\"sans-serif\" font-size=\"11\" "
                  "text-anchor=\"end\">%.2f</text>\n",
                  left - 6.0, py(v) + 4.0, v);
    os << buf;
  }
  std::snprintf(buf, sizeof buf,
                "<polyline class=\"diagonal\" points=\"%.2f,%.2f %.2f,%.2f\" fill=\"none\" "
                "stroke=\"gray\" stroke-dasharray=\"4,4\"/>\n",
                px(0), py(0), px(1), py(1));
  os << buf;
  for (std::size_t c = 0; c < curves.size(); ++c) {
    const char* color = colors[c % (sizeof colors / sizeof *colors)];
    os << "<polyline class=\"curve\" data-statistic=\"" << curves[c].first
       << "\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    if (!curves[c].second.empty()) {
      const EcdfTable t = ecdf(curves[c].second);
      for (std::size_t i = 0; i < t.grid.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%s%.2f,%.2f", i ? " " : "", px(t.grid[i]), py(t.cdf[i]));
        os << buf;
      }
    }
    os << "\"/>\n";
    const double ly = top + 20.0 + 18.0 * c;
    std::snprintf(buf, sizeof buf,
                  "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"%s\" "
                  "stroke-width=\"2\"/>\n",
                  left + size - 150.0, ly, left + size - 125.0, ly, color);
    os << buf;
    std::snprintf(buf, sizeof buf,
                  "<text x=\"%.1f\" y=\"%.1f\" font-family=\"sans-serif\" font-size=\"12\">",
                  left + size - 120.0, ly + 4.0);
    os << buf << curves[c].first << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

void emit_svg(const std::vector<std::pair<std::string, std::vector<double>>>& curves,
              const std::string& title, const std::string& path) {
  write_file(path, curves_svg(curves, title));
}

// ---------------------------------------------------------------------------

std::vector<std::pair<std::string, ExperimentConfig>> figure_panels(const std::string& id,
                                                                    std::uint64_t seed,
                                                                    int reps) {
  const std::vector<std::string> grids = {"grid_spacing_3", "grid_spacing_10", "grid_spacing_32",
                                          "grid_spacing_50"};
  std::vector<std::pair<std::string, ExperimentConfig>> panels;
  const auto add = [&](int fc, const std::string& alt, std::vector<std::string> stats) {
    ExperimentConfig cfg;
    cfg.fc = fc;
    cfg.reps = reps;
    cfg.seed = seed;
    cfg.statistics = std::move(stats);
    cfg.alternative = AlternativeSpec::parse(alt, fc);
    panels.emplace_back(id + ": fc = " + std::to_string(fc) + ", " + cfg.alternative.id,
                        std::move(cfg));
  };
  if (id == "fig3") {
    for (int fc : {3, 5, 7}) add(fc, "null", {"rice", "spacing"});
  } else if (id == "fig4") {
    std::vector<std::string> stats = {"rice"};
    stats.insert(stats.end(), grids.begin(), grids.end());
    for (const char* w : {"logn", "sqrtn"}) {
      for (int fc : {3, 5, 7}) add(fc, w, stats);
    }
  } else if (id == "fig5") {
    std::vector<std::string> stats = {"rice"};
    stats.insert(stats.end(), grids.begin(), grids.end());
    for (const char* pair : {"logn+logn", "logn+sqrtn", "sqrtn+sqrtn"}) add(7, pair, stats);
  } else if (id == "fig6") {
    for (const char* alt : {"null", "logn", "sqrtn"}) add(3, alt, {"rice", "t_rice"});
  } else {
    throw InvalidArgument("unknown figure '" + id + "' (expected fig3, fig4, fig5 or fig6)");
  }
  return panels;
}

std::vector<PanelResult> reproduce_figure(const std::string& id, std::uint64_t seed, int reps,
                                          const std::string& out_dir, int threads) {
  std::vector<PanelResult> results;
  const auto panels = figure_panels(id, seed, reps);
  for (std::size_t k = 0; k < panels.size(); ++k) {
    PanelResult res;
    res.title = panels[k].first;
    ExperimentConfig cfg = panels[k].second;
    cfg.threads = threads;
    res.table = run_experiment(cfg);
    const std::string stem = out_dir + "/" + id + "/panel_" + std::to_string(k + 1);
    res.csv_path = stem + ".csv";
    res.svg_path = stem + ".svg";
    emit_csv(res.table, res.csv_path);
    std::vector<std::pair<std::string, std::vector<double>>> curves;
    for (const auto& s : cfg.statistics) curves.emplace_back(s, res.table.column(s));
    emit_svg(curves, res.title, res.svg_path);
    results.push_back(std::move(res));
  }
  return results;
}

}  // namespace srknots
