#include "margot/tree.hpp"

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace margot {

bool TreeTopology::is_last_level(int t) const {
  const int first_last = (1 << (depth - 1)) - 1;
  return t >= first_last && t < (1 << depth) - 1;
}

int TreeTopology::last_level_offset(int t) const {
  if (!is_last_level(t)) throw std::invalid_argument("node is not on the last level");
  return t - ((1 << (depth - 1)) - 1);
}

TreeTopology build_topology(int depth) {
  if (depth < 1 || depth > 16)
    throw std::invalid_argument("tree depth must be between 1 and 16");
  TreeTopology topo;
  topo.depth = depth;
  const int nb = (1 << depth) - 1;
  const int first_last = (1 << (depth - 1)) - 1;
  for (int t = 0; t < nb; ++t) {
    topo.branch_nodes.push_back(t);
    if (t < first_last)
      topo.upper_branch_nodes.push_back(t);
    else
      topo.last_branch_nodes.push_back(t);
  }
  for (int t = nb; t < 2 * nb + 1; ++t) topo.leaves.push_back(t);

  topo.subtree.resize(nb);
  topo.subtree_last.resize(nb);
  topo.subtree_last_left.resize(nb);
  topo.subtree_last_right.resize(nb);
  for (int t = 0; t < nb; ++t) {
    // breadth-first expansion of the branch-node subtree under t
    std::vector<int> stack = {t};
    while (!stack.empty()) {
      const int u = stack.back();
      stack.pop_back();
      if (u >= nb) continue;
      topo.subtree[t].push_back(u);
      if (u >= first_last) topo.subtree_last[t].push_back(u);
      stack.push_back(2 * u + 1);
      stack.push_back(2 * u + 2);
    }
    std::sort(topo.subtree[t].begin(), topo.subtree[t].end());
    std::sort(topo.subtree_last[t].begin(), topo.subtree_last[t].end());
    if (t < first_last) {
      const int l = 2 * t + 1;
      const int r = 2 * t + 2;
      for (int u : topo.subtree_last[t]) {
        // membership by walking up from u to t's child
        int v = u;
        while (v > l && v > r) v = (v - 1) / 2;
        (v == l ? topo.subtree_last_left[t] : topo.subtree_last_right[t])
            .push_back(u);
      }
    }
  }
  return topo;
}

double TreeClassifier::node_value(int t, const Eigen::VectorXd& x) const {
  return weights.row(t).dot(x) + intercepts(t);
}

RoutingResult route(const TreeClassifier& clf, const Eigen::VectorXd& x) {
  if (x.size() != clf.weights.cols())
    throw std::invalid_argument("route: feature count mismatch");
  RoutingResult res;
  int t = 0;
  while (true) {
    res.path.push_back(t);
    const bool right = clf.node_value(t, x) >= 0.0;
    if (clf.topology.is_last_level(t)) {
      res.last_branch_node = t;
      res.leaf = right ? TreeTopology::right_child(t) : TreeTopology::left_child(t);
      return res;
    }
    t = right ? TreeTopology::right_child(t) : TreeTopology::left_child(t);
  }
}

int predict(const TreeClassifier& clf, const Eigen::VectorXd& x) {
  const RoutingResult r = route(clf, x);
  return r.leaf == TreeTopology::right_child(r.last_branch_node) ? 1 : -1;
}

Eigen::VectorXd predict(const TreeClassifier& clf, const Eigen::MatrixXd& X) {
  Eigen::VectorXd out(X.rows());
  for (long i = 0; i < X.rows(); ++i) {
    const Eigen::VectorXd xi = X.row(i).transpose();
    out(i) = predict(clf, xi);
  }
  return out;
}

Metrics compute_metrics(const Eigen::VectorXd& predicted,
                        const Eigen::VectorXd& actual) {
  if (predicted.size() != actual.size() || predicted.size() == 0)
    throw std::invalid_argument("metrics: label vectors empty or mismatched");
  Metrics m;
  for (long i = 0; i < actual.size(); ++i) {
    if (predicted(i) != 1.0 && predicted(i) != -1.0)
      throw std::invalid_argument("metrics: predictions must be -1/+1");
    if (actual(i) != 1.0 && actual(i) != -1.0)
      throw std::invalid_argument("metrics: labels must be -1/+1");
    if (actual(i) > 0)
      (predicted(i) > 0 ? m.tp : m.fn)++;
    else
      (predicted(i) > 0 ? m.fp : m.tn)++;
  }
  m.accuracy = static_cast<double>(m.tp + m.tn) / static_cast<double>(m.total());
  m.positive_class_absent = m.tp + m.fn == 0;
  m.negative_class_absent = m.tn + m.fp == 0;
  // balanced accuracy as one exact rational (tp/p + tn/n)/2, an absent class
  // contributing 0; the only rounding is the final division
  const std::int64_t p = m.tp + m.fn;
  const std::int64_t n = m.tn + m.fp;
  std::int64_t num = 0, den = 1;
  if (p > 0 && n > 0) {
    num = m.tp * n + m.tn * p;
    den = 2 * p * n;
  } else if (p > 0) {
    num = m.tp;
    den = 2 * p;
  } else if (n > 0) {
    num = m.tn;
    den = 2 * n;
  }
  m.balanced_accuracy = static_cast<double>(num) / static_cast<double>(den);
  return m;
}

Metrics evaluate(const TreeClassifier& clf, const Dataset& data) {
  data.validate();
  return compute_metrics(predict(clf, data.X), data.y);
}

std::string classifier_to_json(const TreeClassifier& clf) {
  nlohmann::ordered_json doc;
  doc["depth"] = clf.topology.depth;
  doc["feature_names"] = clf.feature_names;
  nlohmann::ordered_json nodes = nlohmann::ordered_json::array();
  for (int t = 0; t < clf.topology.num_branch(); ++t) {
    nlohmann::ordered_json node;
    node["id"] = t;
    std::vector<double> w(clf.weights.row(t).begin(), clf.weights.row(t).end());
    node["w"] = w;
    node["b"] = clf.intercepts(t);
    nodes.push_back(std::move(node));
  }
  doc["nodes"] = std::move(nodes);
  return doc.dump(2) + "\n";
}

TreeClassifier classifier_from_json(const std::string& text) {
  const auto doc = nlohmann::json::parse(text);
  TreeClassifier clf;
  clf.topology = build_topology(doc.at("depth").get<int>());
  clf.feature_names = doc.at("feature_names").get<std::vector<std::string>>();
  const auto& nodes = doc.at("nodes");
  const int nb = clf.topology.num_branch();
  if (static_cast<int>(nodes.size()) != nb)
    throw std::runtime_error("classifier json: node count does not match depth");
  const int n = static_cast<int>(clf.feature_names.size());
  clf.weights = Eigen::MatrixXd::Zero(nb, n);
  clf.intercepts = Eigen::VectorXd::Zero(nb);
  for (const auto& node : nodes) {
    const int t = node.at("id").get<int>();
    if (t < 0 || t >= nb) throw std::runtime_error("classifier json: bad node id");
    const auto w = node.at("w").get<std::vector<double>>();
    if (static_cast<int>(w.size()) != n)
      throw std::runtime_error("classifier json: weight length mismatch");
    for (int j = 0; j < n; ++j) clf.weights(t, j) = w[j];
    clf.intercepts(t) = node.at("b").get<double>();
  }
  return clf;
}

void save_classifier(const TreeClassifier& clf, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << classifier_to_json(clf);
  if (!out) throw std::runtime_error("write failed: " + path);
}

TreeClassifier load_classifier(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return classifier_from_json(ss.str());
}

}  // namespace margot
