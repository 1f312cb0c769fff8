#include "srknots/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

#include "CLI11.hpp"

#include "srknots/errors.hpp"
#include "srknots/knots.hpp"
#include "srknots/lars.hpp"
#include "srknots/mc_harness.hpp"
#include "srknots/stat_tests.hpp"
#include "srknots/variance.hpp"

namespace srknots {

namespace {

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      default:
        if (static_cast<unsigned char>(c) < 0x20) {
          char buf[8];
          std::snprintf(buf, sizeof buf, "\\u%04x", c);
          out += buf;
        } else {
          out += c;
        }
    }
  }
  return out + "\"";
}

// Ordered JSON object with numbers in %.17g.
class Json {
 public:
  Json& num(const std::string& k, double v) { return raw(k, format_double(v)); }
  Json& integer(const std::string& k, long long v) { return raw(k, std::to_string(v)); }
  Json& str(const std::string& k, const std::string& v) { return raw(k, quote(v)); }
  Json& boolean(const std::string& k, bool v) { return raw(k, v ? "true" : "false"); }
  Json& raw(const std::string& k, const std::string& json) {
    fields_.emplace_back(k, json);
    return *this;
  }
  std::string dump() const {
    std::string out = "{";
    for (std::size_t i = 0; i < fields_.size(); ++i) {
      if (i) out += ", ";
      out += quote(fields_[i].first) + ": " + fields_[i].second;
    }
    return out + "}";
  }

 private:
  std::vector<std::pair<std::string, std::string>> fields_;
};

std::string array(const std::vector<std::string>& items) {
  std::string out = "[";
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? ", " : "") + items[i];
  return out + "]";
}

std::string point_json(const TorusPoint& z) {
  return Json().num("t", z.t).num("theta", z.theta).dump();
}

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

Atom parse_spike(const std::string& spec) {
  std::vector<std::string> parts;
  std::stringstream ss(spec);
  std::string part;
  while (std::getline(ss, part, ':')) parts.push_back(part);
  if (parts.size() < 2 || parts.size() > 3) {
    throw UsageError("--spike expects WEIGHT:LOCATION[:PHASE], got '" + spec + "'");
  }
  try {
    const double w = std::stod(parts[0]);
    const double loc = std::stod(parts[1]);
    const double phase = parts.size() == 3 ? std::stod(parts[2]) : 0.0;
    return {wrap_angle(loc), std::polar(w, phase)};
  } catch (const std::logic_error&) {
    throw UsageError("--spike: cannot parse '" + spec + "'");
  }
}

std::string report_json(const TestReport& rep, bool studentized) {
  Json j;
  j.str("name", rep.name).num("value", rep.value).boolean("studentized", studentized);
  for (const auto& [k, v] : rep.aux) {
    if (k == "dof") {
      j.integer(k, std::lround(v));
    } else {
      j.num(k, v);
    }
  }
  return j.dump();
}

std::string statistic_name(const std::string& cli_name, std::optional<int> grid) {
  if (cli_name == "rice") return "rice";
  if (cli_name == "t-rice") return "t_rice";
  if (cli_name == "st") return "spacing";
  if (cli_name == "grid") return "grid";
  if (cli_name == "t-grid") return "t_grid";
  if (cli_name == "grid-st") {
    if (!grid) throw UsageError("--stat grid-st requires --grid");
    return "grid_spacing_" + std::to_string(*grid);
  }
  throw UsageError("unknown statistic '" + cli_name + "'");
}

struct Flags {
  int fc = 0;
  std::optional<double> sigma;
  std::optional<std::uint64_t> seed;
  int reps = 2000;
  std::optional<int> grid;
  std::vector<std::string> stats;
  std::string obs;
  std::string out;
  int kmax = 4;
  double lambda_min = 1e-3;
  std::vector<std::string> spikes;
  bool hide_sigma = false;
  std::string alt = "sqrtn";
  std::string figure;
};

std::uint64_t require_seed(const Flags& f) {
  if (!f.seed) throw UsageError("--seed is required for this command");
  return *f.seed;
}

double resolve_sigma(const Flags& f, const Observation& obs) {
  if (f.sigma) return *f.sigma;
  if (obs.sigma) return *obs.sigma;
  throw UsageError("sigma unknown: pass --sigma or use an observation with sigma");
}

std::string cmd_simulate(const Flags& f) {
  if (!f.sigma) throw UsageError("simulate requires --sigma");
  if (*f.sigma < 0.0) throw UsageError("--sigma must be >= 0");
  AtomicMeasure measure;
  for (const auto& s : f.spikes) measure.atoms.push_back(parse_spike(s));
  RngStream stream(require_seed(f), 0);
  Observation obs = synthesize(measure, f.fc, *f.sigma, stream);
  if (f.hide_sigma) obs.sigma.reset();
  if (f.out.empty()) return observation_to_json(obs);
  save_observation(obs, f.out);
  return Json()
             .str("out", f.out)
             .integer("fc", f.fc)
             .raw("sigma", obs.sigma ? format_double(*obs.sigma) : "null")
             .integer("spikes", static_cast<long long>(measure.atoms.size()))
             .dump() +
         "\n";
}

std::string cmd_knots(const Flags& f) {
  const Observation obs = load_observation(f.obs);
  const KnotCertificate c = compute_certificate(obs);
  const std::string R = "[[" + format_double(c.R(0, 0)) + ", " + format_double(c.R(0, 1)) +
                        "], [" + format_double(c.R(1, 0)) + ", " + format_double(c.R(1, 1)) +
                        "]]";
  return Json()
             .raw("z_hat", point_json(c.z_hat))
             .num("lambda1", c.lambda1)
             .raw("y_hat", point_json(c.y_hat))
             .num("lambda2", c.lambda2)
             .raw("R", R)
             .num("alpha2", c.alpha2)
             .num("alpha3", c.alpha3)
             .num("grad_norm_at_zhat", c.grad_norm_at_zhat)
             .dump() +
         "\n";
}

std::string cmd_test(const Flags& f) {
  if (f.stats.size() != 1) throw UsageError("test expects exactly one --stat");
  const Observation obs = load_observation(f.obs);
  const ModelContext ctx = ModelContext::make(obs.fc);
  const std::optional<double> sigma = f.sigma ? f.sigma : obs.sigma;
  if (sigma && !(*sigma > 0.0)) throw UsageError("--sigma must be positive");
  const std::string& stat = f.stats.front();

  if (stat == "grid-st") {
    const std::string name = statistic_name(stat, f.grid);
    if (!sigma) throw UsageError("grid-st needs a known sigma");
    return report_json(grid_spacing_test(obs, *f.grid, *sigma), false) + "\n";
  }
  statistic_name(stat, f.grid);  // validates the name
  const KnotCertificate cert = compute_certificate(obs);
  if (stat == "st") {
    if (!sigma) throw UsageError("st needs a known sigma");
    return report_json(spacing_statistic(cert.lambda1, cert.lambda2, *sigma), false) + "\n";
  }
  if (stat == "rice" || stat == "t-rice") {
    if (stat == "rice" && sigma) return report_json(rice_known(cert, *sigma, ctx), false) + "\n";
    return report_json(rice_unknown(cert, sigma_hat_cond(obs, cert.z_hat), ctx), true) + "\n";
  }
  // grid, t-grid
  RngStream stream(require_seed(f), 0);
  const RandomizedAux aux = randomize(obs, cert, stream);
  TestReport rep;
  bool studentized = false;
  if (stat == "grid" && sigma) {
    rep = grid_test_known(cert.lambda1, aux.lambda2_bar, *sigma);
  } else {
    rep = grid_test_unknown(cert.lambda1, aux.lambda2_bar, sigma_hat_grid(obs, cert.z_hat), ctx);
    studentized = true;
  }
  rep.aux["lambda2"] = cert.lambda2;
  rep.aux["u1"] = aux.U[0];
  rep.aux["u2"] = aux.U[1];
  return report_json(rep, studentized) + "\n";
}

std::string cmd_lars(const Flags& f) {
  const Observation obs = load_observation(f.obs);
  LarsOptions opts;
  opts.k_max = f.kmax;
  opts.lambda_min = f.lambda_min;
  const LarsPath path = lars_run(obs, resolve_sigma(f, obs), opts);
  std::vector<std::string> knots;
  for (std::size_t k = 0; k < path.knots.size(); ++k) {
    const LarsKnot& kn = path.knots[k];
    std::vector<std::string> active;
    std::vector<std::string> weights;
    for (std::size_t i = 0; i < kn.active.size(); ++i) {
      active.push_back(format_double(kn.active[i]));
      weights.push_back("[" + format_double(kn.weights[i].real()) + ", " +
                        format_double(kn.weights[i].imag()) + "]");
    }
    knots.push_back(Json()
                        .integer("k", static_cast<long long>(k + 1))
                        .num("lambda", kn.lambda)
                        .raw("active", array(active))
                        .raw("weights", array(weights))
                        .dump());
  }
  Json j;
  j.str("status", to_string(path.status))
      .num("terminal_lambda", path.terminal_lambda)
      .num("sigma", path.sigma)
      .raw("knots", array(knots));
  if (!f.out.empty()) {
    std::ofstream out(f.out, std::ios::binary);
    if (!out) throw Error("cannot open " + f.out + " for writing");
    out << lars_path_csv(path);
    j.str("csv", f.out);
  }
  return j.dump() + "\n";
}

std::string cmd_experiment(const Flags& f, const std::string& alt) {
  if (f.stats.empty()) throw UsageError("at least one --stat is required");
  ExperimentConfig cfg;
  cfg.fc = f.fc;
  cfg.sigma = f.sigma.value_or(1.0);
  cfg.reps = f.reps;
  cfg.seed = require_seed(f);
  for (const auto& s : f.stats) cfg.statistics.push_back(statistic_name(s, f.grid));
  cfg.alternative = AlternativeSpec::parse(alt, f.fc);
  const ExperimentTable table = run_experiment(cfg);
  std::vector<std::string> results;
  for (const auto& s : cfg.statistics) {
    const auto col = table.column(s);
    Json r;
    r.str("statistic", s);
    if (col.empty()) {
      r.raw("ks", "null").raw("level_0.05", "null");
    } else {
      r.num("ks", ks_uniform(col)).num("level_0.05", empirical_level(col, 0.05));
    }
    results.push_back(r.dump());
  }
  Json j;
  j.integer("fc", cfg.fc)
      .str("alt_id", cfg.alternative.id)
      .integer("reps", cfg.reps)
      .integer("seed", static_cast<long long>(cfg.seed))
      .integer("excluded", table.excluded)
      .raw("results", array(results));
  if (!f.out.empty()) {
    emit_csv(table, f.out);
    j.str("csv", f.out);
  }
  return j.dump() + "\n";
}

std::string cmd_reproduce(const Flags& f) {
  const std::string out_dir = f.out.empty() ? "out" : f.out;
  const auto panels = reproduce_figure(f.figure, require_seed(f), f.reps, out_dir);
  std::vector<std::string> files;
  std::vector<std::string> summary;
  int excluded = 0;
  for (const auto& p : panels) {
    files.push_back(quote(p.csv_path));
    files.push_back(quote(p.svg_path));
    excluded += p.table.excluded;
    std::vector<std::string> stats;
    for (const auto& s : p.table.config.statistics) {
      const auto col = p.table.column(s);
      Json r;
      r.str("statistic", s);
      if (col.empty()) {
        r.raw("ks", "null").raw("level_0.05", "null");
      } else {
        r.num("ks", ks_uniform(col)).num("level_0.05", empirical_level(col, 0.05));
      }
      stats.push_back(r.dump());
    }
    summary.push_back(Json().str("title", p.title).raw("statistics", array(stats)).dump());
  }
  return Json()
             .str("figure", f.figure)
             .integer("seed", static_cast<long long>(*f.seed))
             .integer("reps", f.reps)
             .integer("excluded", excluded)
             .raw("files", array(files))
             .raw("panels", array(summary))
             .dump() +
         "\n";
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Knot-based tests for spike detection in super-resolution", "srknots"};
  app.require_subcommand(1);
  Flags f;
  const std::vector<std::string> stat_names = {"rice", "t-rice", "st", "grid", "t-grid", "grid-st"};

  const auto add_fc = [&f](CLI::App* c, bool required) {
    auto* o = c->add_option("--fc", f.fc, "frequency cutoff")->check(CLI::PositiveNumber);
    if (required) o->required();
  };
  const auto add_seed = [&f](CLI::App* c) { c->add_option("--seed", f.seed, "random seed"); };
  const auto add_stat = [&](CLI::App* c, bool many) {
    auto* o = c->add_option("--stat", f.stats, "statistic")->check(CLI::IsMember(stat_names));
    o->required();
    if (!many) o->expected(1);
  };

  auto* simulate = app.add_subcommand("simulate", "draw an observation");
  add_fc(simulate, true);
  simulate->add_option("--sigma", f.sigma, "noise level")->required();
  add_seed(simulate);
  simulate->add_option("--spike", f.spikes, "WEIGHT:LOCATION[:PHASE]");
  simulate->add_option("--out", f.out, "observation file");
  simulate->add_flag("--hide-sigma", f.hide_sigma, "store sigma as null");

  auto* knots = app.add_subcommand("knots", "first two knots of an observation");
  knots->add_option("--obs", f.obs, "observation file")->required();

  auto* test = app.add_subcommand("test", "p-value of one statistic");
  add_stat(test, false);
  test->add_option("--obs", f.obs, "observation file")->required();
  test->add_option("--sigma", f.sigma, "known noise level");
  test->add_option("--grid", f.grid, "grid size for grid-st")->check(CLI::Range(2, 100000));
  add_seed(test);

  auto* lars = app.add_subcommand("lars", "continuous LARS path");
  lars->add_option("--obs", f.obs, "observation file")->required();
  lars->add_option("--sigma", f.sigma, "noise level");
  lars->add_option("--kmax", f.kmax, "number of knots")->check(CLI::Range(2, 1000));
  lars->add_option("--lambda-min", f.lambda_min, "smallest lambda")->check(CLI::PositiveNumber);
  lars->add_option("--out", f.out, "CSV export of the path");

  auto* calibrate = app.add_subcommand("calibrate", "null Monte-Carlo calibration");
  auto* power = app.add_subcommand("power", "Monte-Carlo power under spike alternatives");
  for (auto* c : {calibrate, power}) {
    add_fc(c, true);
    add_stat(c, true);
    add_seed(c);
    c->add_option("--reps", f.reps, "replications")->check(CLI::PositiveNumber);
    c->add_option("--sigma", f.sigma, "noise level (default 1)")->check(CLI::PositiveNumber);
    c->add_option("--grid", f.grid, "grid size for grid-st")->check(CLI::Range(2, 100000));
    c->add_option("--out", f.out, "CSV of all replications");
  }
  power->add_option("--alt", f.alt, "logn, sqrtn or a pair such as logn+sqrtn");

  auto* reproduce = app.add_subcommand("reproduce", "figure panels as CSV and SVG");
  reproduce->add_option("figure", f.figure, "fig3, fig4, fig5 or fig6")
      ->required()
      ->check(CLI::IsMember({"fig3", "fig4", "fig5", "fig6"}));
  add_seed(reproduce);
  reproduce->add_option("--reps", f.reps, "replications")->check(CLI::PositiveNumber);
  reproduce->add_option("--out", f.out, "output directory (default out)");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return 2;
  }

  try {
    std::string result;
    if (*simulate) {
      result = cmd_simulate(f);
    } else if (*knots) {
      result = cmd_knots(f);
    } else if (*test) {
      result = cmd_test(f);
    } else if (*lars) {
      result = cmd_lars(f);
    } else if (*calibrate) {
      result = cmd_experiment(f, "null");
    } else if (*power) {
      result = cmd_experiment(f, f.alt);
    } else {
      result = cmd_reproduce(f);
    }
    out << result;
    out.flush();
    return 0;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const InvalidArgument& e) {
    err << "invalid argument: " << e.what() << "\n";
    return 2;
  } catch (const SchemaError& e) {
    err << "invalid observation: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    err << "computation error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace srknots
