#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace margot {

struct Provenance {
  std::string source;
  std::string positive_label;
  std::string negative_label;
};

/// Binary-labelled feature matrix. Labels are always -1/+1 after loading;
/// feature values are finite doubles (one-hot columns for declared nominal
/// CSV columns).
struct Dataset {
  Eigen::MatrixXd X;  // rows = samples
  Eigen::VectorXd y;  // -1/+1
  std::vector<std::string> feature_names;
  Provenance provenance;

  long rows() const { return X.rows(); }
  int cols() const { return static_cast<int>(X.cols()); }
  void validate() const;  // throws on shape/label/non-finite violations
};

struct CsvOptions {
  std::string label_column;
  std::string positive_label;
  std::vector<std::string> nominal_columns;
};

/// Comma-separated file with a mandatory header row. Numeric columns parse
/// strictly; columns named in nominal_columns expand to one-hot indicators
/// ("col=category", categories sorted). The label column must carry exactly
/// two distinct values; positive_label maps to +1.
Dataset load_csv(const std::string& path, const CsvOptions& options);

/// Sparse "label idx:val ..." lines, 1-based indices, absent entries zero.
/// Width is the largest index seen. Two distinct numeric labels required;
/// if they are not already -1/+1 the larger value maps to +1, unless
/// positive_label overrides that.
Dataset load_libsvm(const std::string& path,
                    const std::string& positive_label = "");

struct Normalizer {
  Eigen::VectorXd min;
  Eigen::VectorXd range;  // max - min; 0 marks a constant column
};

/// Per-feature min/max over the given (training) data.
Normalizer fit_normalizer(const Dataset& data);

/// (x - min) / (max - min), affine extrapolation outside [0,1], constant
/// columns map to 0. Never clips.
Dataset apply_normalizer(const Normalizer& norm, const Dataset& data);
Eigen::MatrixXd apply_normalizer(const Normalizer& norm,
                                 const Eigen::MatrixXd& X);

struct SplitPlan {
  std::vector<long> train_indices;
  std::vector<long> test_indices;
  std::vector<std::vector<long>> folds;  // partition of train_indices
  bool stratification_fallback = false;  // set when a stratified split was infeasible
};

/// Seed-deterministic stratified holdout split of [0, rows).
SplitPlan split_train_test(const Dataset& data, double test_fraction,
                           std::uint64_t seed);

/// Adds k stratified cross-validation folds over plan.train_indices.
/// Falls back to an unstratified partition (flagged on the plan) when any
/// class has fewer than k training samples. Fold sizes differ by at most one.
SplitPlan kfold(const SplitPlan& plan, const Dataset& data, int k,
                std::uint64_t seed);

Dataset subset(const Dataset& data, std::span<const long> indices);

struct GeneratorHyperplane {
  Eigen::Vector2d w{1.0, 0.0};
  double b = 0.0;
  double margin = 0.0;  // geometric half-width of the excluded band
};

/// Ground truth for the 2D synthetic generator: a complete tree of
/// hyperplanes (node t's children are 2t+1 / 2t+2, right on w'x + b >= 0)
/// and one label per leaf.
struct PartitionSpec {
  int depth = 2;
  std::vector<GeneratorHyperplane> nodes;  // 2^depth - 1, level order; empty when depth == 0
  std::vector<int> leaf_labels;            // 2^depth entries of -1/+1
  long count = 100;
  Eigen::Vector2d box_lo{0.0, 0.0};
  Eigen::Vector2d box_hi{1.0, 1.0};
};

/// Uniform points in the box, rejecting any point inside a margin band,
/// labelled by routing through the ground-truth tree. Throws when the bands
/// leave no room to place points.
Dataset gen_partitions(const PartitionSpec& spec, std::uint64_t seed);

/// Built-in generator configurations: a 4-region depth-2 ground truth
/// (108 points) and a 6-region depth-3 ground truth (96 points).
PartitionSpec four_partitions_spec();
PartitionSpec six_partitions_spec();

void save_csv(const Dataset& data, const std::string& path);

}  // namespace margot
