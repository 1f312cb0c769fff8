#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace srknots {

/// Spikes of the alternative. Locations are uniform per replication, phases
/// zero; two spikes are redrawn until their circular distance is at least
/// min_separation (0 means 2 pi / fc).
struct AlternativeSpec {
  std::string id = "null";
  std::vector<double> weights;
  double min_separation = 0.0;

  /// "null", "logn", "sqrtn" or a '+'-joined pair such as "logn+sqrtn".
  static AlternativeSpec parse(const std::string& id, int fc);
};

struct ExperimentConfig {
  int fc = 3;
  double sigma = 1.0;  ///< noise level; S-statistics use it, T-statistics estimate it
  int reps = 2000;
  std::uint64_t seed = 1;
  /// rice, t_rice, spacing, grid, t_grid, grid_spacing_<p>
  std::vector<std::string> statistics;
  AlternativeSpec alternative;
  int threads = 0;  ///< 0: hardware concurrency, capped by SRKNOTS_THREADS

  void validate() const;
};

struct ExperimentTable {
  ExperimentConfig config;
  /// values[s][r] for statistic s and replication r; NaN for a failed replication
  std::vector<std::vector<double>> values;
  std::vector<std::string> failures;  ///< "rep <r>: <reason>"
  int excluded = 0;

  /// Finite values of one statistic.
  std::vector<double> column(const std::string& statistic) const;
};

ExperimentTable run_experiment(const ExperimentConfig& config);

/// Thread count actually used for a request of `requested` (0 = automatic).
int resolve_threads(int requested);

struct EcdfTable {
  std::vector<double> sorted;
  std::vector<double> grid;  ///< evaluation points on [0, 1]
  std::vector<double> cdf;   ///< ECDF at grid
};

EcdfTable ecdf(std::vector<double> values, int grid_points = 201);
/// Two-sided Kolmogorov-Smirnov distance to U[0, 1].
double ks_uniform(std::vector<double> values);
/// Fraction of values <= alpha.
double empirical_level(const std::vector<double>& values, double alpha);

/// CSV with header rep,statistic,value,fc,sigma_mode,alt_id,seed.
std::string table_csv(const ExperimentTable& table);
void emit_csv(const ExperimentTable& table, const std::string& path);

/// Standalone 600x600 SVG: one ECDF polyline per curve, the diagonal and a legend.
std::string curves_svg(const std::vector<std::pair<std::string, std::vector<double>>>& curves,
                       const std::string& title);
void emit_svg(const std::vector<std::pair<std::string, std::vector<double>>>& curves,
              const std::string& title, const std::string& path);

struct PanelResult {
  std::string title;
  ExperimentTable table;
  std::string csv_path;
  std::string svg_path;
};

/// Panel configurations of a figure (fig3, fig4, fig5, fig6).
std::vector<std::pair<std::string, ExperimentConfig>> figure_panels(const std::string& id,
                                                                    std::uint64_t seed, int reps);

/// Runs every panel and writes <out_dir>/<id>/panel_<k>.{csv,svg}.
std::vector<PanelResult> reproduce_figure(const std::string& id, std::uint64_t seed, int reps,
                                          const std::string& out_dir = "out", int threads = 0);

}  // namespace srknots
