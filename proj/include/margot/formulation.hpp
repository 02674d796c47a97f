#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

#include "margot/bnb.hpp"
#include "margot/dataset.hpp"
#include "margot/tree.hpp"

namespace margot {

/// The three trainable models: the plain maximum-margin tree (MARGOT), hard
/// feature selection (per-node budget constraints on the weight supports),
/// and soft feature selection (budget excess penalized in the objective).
enum class ModelVariant { Margot, Hfs, Sfs };
const char* to_string(ModelVariant variant);
ModelVariant variant_from_string(const std::string& name);

struct Hyperparameters {
  int depth = 2;
  Eigen::VectorXd C;        // per branch node, > 0
  double epsilon = 1e-3;    // strict-inequality offset for left routing
  double M_xi = 50.0;       // big-M deactivating margin constraints
  double M_h = 100.0;       // big-M deactivating routing constraints
  double M_w = 50.0;        // weight cap tying w to the selector bits (HFS/SFS)
  Eigen::VectorXi budgets;  // per branch node (HFS/SFS), in [1, n]
  double alpha = 0.0;       // budget-excess weight (SFS), >= 0

  static Hyperparameters uniform(int depth, double C_all);
  /// C tied per level: per_level[k] applies to every node at depth k.
  void set_level_costs(const std::vector<double>& per_level);
  void set_level_budgets(const std::vector<int>& per_level);
  void validate(ModelVariant variant, int num_features) const;
};

/// Column layout of the flat MIQP vector and the row layout of its
/// constraint families. Blocks are contiguous and non-overlapping, in order
/// w, b, xi, z, s, u; offsets are -1 for absent blocks.
struct VariableMap {
  ModelVariant variant = ModelVariant::Margot;
  int depth = 0;
  int num_features = 0;
  long num_samples = 0;
  int num_branch = 0;       // 2^depth - 1
  int num_last_branch = 0;  // 2^(depth-1)

  int w_offset = -1, b_offset = -1;
  long xi_offset = -1, z_offset = -1;
  int s_offset = -1, u_offset = -1;
  long total_vars = 0;

  struct RowSpan {
    long begin = 0, end = 0;
    long size() const { return end - begin; }
  };
  RowSpan margin_rows, routing_right_rows, routing_left_rows, assignment_rows,
      linking_lower_rows, linking_upper_rows, budget_rows, excess_rows;

  long w_index(int t, int j) const;
  long b_index(int t) const;
  long xi_index(int t, long i) const;
  long z_index(long i, int t) const;  // t must be a last-level branch node
  long s_index(int t, int j) const;
  long u_index(int t) const;
};

/// Decoded solution blocks. z columns follow last_branch_nodes order; s and
/// u are empty unless the variant selects features.
struct ModelSolution {
  Eigen::MatrixXd w;   // num_branch x n
  Eigen::VectorXd b;   // num_branch
  Eigen::MatrixXd xi;  // num_branch x samples
  Eigen::MatrixXd z;   // samples x num_last_branch
  Eigen::MatrixXd s;   // num_branch x n
  Eigen::VectorXd u;   // num_branch
  double objective = 0.0;
};

struct BuiltModel {
  MixedIntegerQP prob;
  VariableMap map;
  TreeTopology topology;
  Hyperparameters hp;
  ModelVariant variant = ModelVariant::Margot;
  bool size_warning = false;  // 2^(depth-1) leaf slots exceed the sample count
};

BuiltModel build_margot(const Dataset& data, const Hyperparameters& hp);
BuiltModel build_hfs(const Dataset& data, const Hyperparameters& hp);
BuiltModel build_sfs(const Dataset& data, const Hyperparameters& hp);
BuiltModel build_model(ModelVariant variant, const Dataset& data,
                       const Hyperparameters& hp);

ModelSolution decode_solution(const Eigen::VectorXd& x, const VariableMap& map);
Eigen::VectorXd encode_solution(const ModelSolution& sol,
                                const VariableMap& map);

/// Worst violation per constraint family, all as nonnegative magnitudes.
struct FeasibilityReport {
  double margin = 0.0;
  double routing = 0.0;
  double assignment = 0.0;
  double linking = 0.0;
  double budget = 0.0;
  double excess = 0.0;      // u_t >= sum_j s_tj - B_t and u_t >= 0
  double variable_bounds = 0.0;
  double integrality = 0.0;
  double worst_constraint() const;
  bool feasible(double feas_tol = 1e-6, double int_tol = 1e-5) const;
};

FeasibilityReport check_feasible(const Eigen::VectorXd& x,
                                 const BuiltModel& model);
FeasibilityReport check_feasible(const ModelSolution& sol,
                                 const BuiltModel& model);

/// True when some big-M deactivated constraint sits within tol of its
/// relaxed limit, meaning the chosen constant is too small to keep that
/// constraint out of the way for this solution.
bool big_m_binding(const ModelSolution& sol, const BuiltModel& model,
                   double tol = 1e-6);

/// Copies the hyperplanes into a TreeClassifier. Pruned nodes (|w_t| <=
/// 1e-8) with ambiguous intercept (their assigned samples single-class or
/// absent) get b_t reset to the majority label, ties to +1, so routing is
/// deterministic; the reset never flips the sign of a determinate intercept.
/// Roundoff on binding routing rows is repaired with a minimal intercept
/// shift so that routing the training samples reproduces z exactly.
TreeClassifier extract_tree(const ModelSolution& sol, const VariableMap& map,
                            const Hyperparameters& hp, const Dataset& data);

struct FeatureReport {
  Eigen::VectorXi per_node;   // |{j : |w_tj| > 1e-8}| per branch node
  int distinct_features = 0;  // union over nodes
  int total_selected() const { return per_node.sum(); }
};
FeatureReport feature_report(const TreeClassifier& clf);

struct ModelDimensions {
  long continuous_vars = 0;
  long binary_vars = 0;
  long margin_rows = 0;
  long routing_rows = 0;
  long assignment_rows = 0;
  long linking_rows = 0;
  long budget_rows = 0;
  long excess_rows = 0;
  long total_vars() const { return continuous_vars + binary_vars; }
  long total_rows() const {
    return margin_rows + routing_rows + assignment_rows + linking_rows +
           budget_rows + excess_rows;
  }
};

/// Closed-form size of the formulation, for sizing checks and the dims tool.
ModelDimensions expected_dimensions(ModelVariant variant, int depth,
                                    int num_features, long num_samples);

/// Self-describing JSON dump of the MIQP (dimensions, nonzero triplets,
/// limits, binary indices, block offsets) for external cross-checking.
void dump_problem(const BuiltModel& model, const std::string& path);

}  // namespace margot
