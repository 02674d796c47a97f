#pragma once

#include <Eigen/Dense>

#include "margot/formulation.hpp"

namespace margot {

struct HeuristicConfig {
  ModelVariant mode = ModelVariant::Margot;
  Hyperparameters hp;
  double time_limit = 30.0;  // split across node subproblems, leftover rolls forward
  double qp_tol = 1e-8;
};

/// One node subproblem of the level-by-level warm start: an SVM over the
/// samples reaching the node, with the variant's feature-selection terms.
struct NodeFit {
  Eigen::VectorXd w;
  double b = 0.0;
  Eigen::VectorXd xi;  // over the node's samples, hinge at (w, b)
  Eigen::VectorXd s;   // 0/1 selector, empty in Margot mode
  double u = 0.0;      // budget excess (Sfs)
  double objective = 0.0;
  bool nudged = false;       // intercept moved to clear the routing dead zone
  bool hit_time_limit = false;
};

NodeFit ws_svm_node(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                    double C, int budget, double alpha, ModelVariant mode,
                    const Hyperparameters& hp, double time_budget,
                    double qp_tol = 1e-8);

struct HeuristicResult {
  ModelSolution solution;
  bool nudge_applied = false;
  bool big_m_exceeded = false;  // some deactivated constraint would need a larger M
  bool hit_time_limit = false;
  double wall_seconds = 0.0;
};

/// Greedy top-down construction: fit a node, split its samples by the
/// hyperplane (right on h >= 0, left on h + epsilon <= 0), recurse one level
/// down; the deepest level's partition becomes the assignment z. The result
/// is feasible for the full model by construction and is meant as a
/// branch-and-bound warm start.
HeuristicResult local_svm(const Dataset& data, const HeuristicConfig& config);

}  // namespace margot
