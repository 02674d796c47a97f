#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "margot/dataset.hpp"
#include "margot/formulation.hpp"
#include "margot/heuristic.hpp"
#include "margot/tree.hpp"

namespace margot {

/// Raised for anything wrong with a run configuration (unknown keys, missing
/// required keys, unparsable values). The CLI maps it to exit code 4.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Flat key = value run configuration. See the README for the schema.
struct RunConfig {
  // dataset
  std::string dataset_format = "csv";  // csv | libsvm | generator
  std::string dataset_path;
  CsvOptions csv;
  std::string libsvm_positive_label;
  PartitionSpec generator;
  bool generator_preset_used = false;

  // model
  ModelVariant variant = ModelVariant::Margot;
  int depth = 2;
  std::vector<double> C_levels{1.0};
  std::vector<int> budget_levels;
  double alpha = 0.0;
  double epsilon = 1e-3;
  double M_xi = 50.0, M_h = 100.0, M_w = 50.0;

  // grids (cross-validation)
  std::vector<double> C_grid;
  std::vector<int> budget_grid;
  std::vector<double> alpha_grid;
  bool budgets_nondecreasing = true;

  // protocol
  double test_fraction = 0.2;
  int folds = 4;
  std::uint64_t seed = 0;
  double time_limit = 600.0;
  double warm_start_limit = 30.0;

  std::string out_dir;
  std::string raw_text;  // canonical text the config was parsed from
};

RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);

/// FNV-1a over the canonicalized (sorted key=value) configuration.
std::string config_hash(const RunConfig& config);

Dataset load_dataset(const RunConfig& config);

/// Hyperparameters for one concrete run (no grids) from the config.
Hyperparameters single_point(const RunConfig& config, int num_features);

/// Level-tied grid expansion: every level takes each C_grid value; budget
/// combinations are filtered to non-decreasing level sequences when
/// configured (3 budget values and depth 2 give exactly 6); alpha values
/// multiply in last. Points are ordered lexicographically by grid index.
std::vector<Hyperparameters> expand_grid(const RunConfig& config,
                                         int num_features);

struct RunReport {
  std::string variant;
  int depth = 0;
  std::string status;  // Optimal | TimeLimit | Infeasible
  double objective = kInf;
  double lower_bound = -kInf;
  double gap = kInf;
  long nodes = 0;
  double first_incumbent = std::numeric_limits<double>::quiet_NaN();
  double incumbent_after_root = std::numeric_limits<double>::quiet_NaN();
  bool warm_start_accepted = false;
  bool heuristic_nudged = false;
  bool big_m_warning = false;
  double wall_seconds = 0.0;
  double warm_start_seconds = 0.0;

  Metrics train_metrics;
  std::optional<Metrics> test_metrics;

  std::vector<int> features_per_node;
  int distinct_features = 0;

  std::vector<double> C;
  std::vector<int> budgets;
  double alpha = 0.0;
  double epsilon = 0.0;

  std::uint64_t seed = 0;
  std::string config_digest;
  std::string dataset_source;
  long train_rows = 0, test_rows = 0;
  int num_features = 0;
  bool stratification_fallback = false;

  /// 0 success, 2 infeasible, 3 time limit without incumbent.
  int exit_code() const;
};

/// Deterministic JSON rendering; timing fields can be masked so byte-level
/// comparisons of two runs are meaningful.
std::string report_to_json(const RunReport& report, bool include_timing = true);

struct TrainOutcome {
  RunReport report;
  TreeClassifier tree;
  Dataset train_data;  // normalized
  std::optional<Dataset> test_data;
};

/// Load, split, normalize on the training part, build, warm-start, solve,
/// extract, evaluate. Writes report.json and tree.json to out_dir when set.
/// Requires a gridless config.
TrainOutcome train(const RunConfig& config);

struct GridPointResult {
  Hyperparameters hp;
  double mean_validation_accuracy = 0.0;
  long total_selected_features = 0;  // summed over folds and nodes
};

struct CvOutcome {
  std::vector<GridPointResult> table;
  std::size_t selected = 0;
  TrainOutcome refit;  // trained on the full training split with the winner
};

/// Plain protocol: k folds on the training split, pick the grid point with
/// the best mean validation accuracy (ties to the earliest point).
CvOutcome cv_standard(const RunConfig& config);

/// Feature-driven protocol: among points whose mean validation accuracy is
/// within [0.975 g, g] of the best value g, pick the fewest total selected
/// features, then the better accuracy, then the earliest point.
CvOutcome cv_feature_driven(const RunConfig& config);

/// 2D scatter with the tree's decision lines; last-level nodes also show
/// their supporting hyperplanes (h = +-1, dashed). Pruned nodes are omitted.
/// Byte-deterministic for identical inputs.
void plot_2d(const TreeClassifier& clf, const Dataset& data,
             const std::string& path);
std::string plot_2d_svg(const TreeClassifier& clf, const Dataset& data);

}  // namespace margot
