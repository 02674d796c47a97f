#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

#include "margot/dataset.hpp"

namespace margot {

/// Complete binary tree of the given depth. Branch nodes are 0..2^D-2 in
/// level order, leaves 2^D-1..2^(D+1)-2; node t's children are 2t+1 (left)
/// and 2t+2 (right). The "last" branch nodes are the deepest branching level,
/// whose decisions pick the leaf.
struct TreeTopology {
  int depth = 0;
  std::vector<int> branch_nodes;         // T_B
  std::vector<int> upper_branch_nodes;   // T_B minus the last level
  std::vector<int> last_branch_nodes;    // deepest branching level
  std::vector<int> leaves;

  // Per branch node t: branch nodes of the subtree rooted at t, and the
  // subset of those on the last level (split into the left/right halves for
  // upper nodes).
  std::vector<std::vector<int>> subtree;
  std::vector<std::vector<int>> subtree_last;
  std::vector<std::vector<int>> subtree_last_left;
  std::vector<std::vector<int>> subtree_last_right;

  int num_branch() const { return static_cast<int>(branch_nodes.size()); }
  bool is_last_level(int t) const;
  int last_level_offset(int t) const;  // position of t within last_branch_nodes
  static int left_child(int t) { return 2 * t + 1; }
  static int right_child(int t) { return 2 * t + 2; }
};

/// Throws std::invalid_argument unless 1 <= depth <= 16.
TreeTopology build_topology(int depth);

/// Oblique-split tree classifier. Every branch node holds a hyperplane
/// h_t(x) = w_t'x + b_t; routing goes right on h_t(x) >= 0, left otherwise.
/// Leaf labels are structural: a right child predicts +1, a left child -1.
struct TreeClassifier {
  TreeTopology topology;
  Eigen::MatrixXd weights;     // num_branch x n
  Eigen::VectorXd intercepts;  // num_branch

  std::vector<std::string> feature_names;

  int num_features() const { return static_cast<int>(weights.cols()); }
  double node_value(int t, const Eigen::VectorXd& x) const;
};

struct RoutingResult {
  int last_branch_node = 0;
  int leaf = 0;
  std::vector<int> path;  // branch nodes visited, root first
};

RoutingResult route(const TreeClassifier& clf, const Eigen::VectorXd& x);
int predict(const TreeClassifier& clf, const Eigen::VectorXd& x);
Eigen::VectorXd predict(const TreeClassifier& clf, const Eigen::MatrixXd& X);

struct Metrics {
  long tp = 0, tn = 0, fp = 0, fn = 0;
  double accuracy = 0.0;
  double balanced_accuracy = 0.0;
  // An absent actual class zeroes its recall term; flagged so reports can
  // mark the value as degenerate.
  bool positive_class_absent = false;
  bool negative_class_absent = false;
  long total() const { return tp + tn + fp + fn; }
};

Metrics compute_metrics(const Eigen::VectorXd& predicted,
                        const Eigen::VectorXd& actual);
Metrics evaluate(const TreeClassifier& clf, const Dataset& data);

/// JSON round-trip; doubles serialize shortest-exact so load(save(t)) == t.
std::string classifier_to_json(const TreeClassifier& clf);
TreeClassifier classifier_from_json(const std::string& text);
void save_classifier(const TreeClassifier& clf, const std::string& path);
TreeClassifier load_classifier(const std::string& path);

}  // namespace margot
