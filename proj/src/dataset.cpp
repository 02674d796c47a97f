#include "margot/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "margot/detail/rng.hpp"

namespace margot {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_fields(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == sep) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += ch;
    }
  }
  out.push_back(trim(cur));
  return out;
}

bool parse_double(const std::string& s, double& out) {
  const char* b = s.data();
  const char* e = b + s.size();
  auto res = std::from_chars(b, e, out);
  return res.ec == std::errc() && res.ptr == e && std::isfinite(out);
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

[[noreturn]] void fail(const std::string& path, std::size_t line,
                       const std::string& what) {
  throw std::runtime_error(path + ":" + std::to_string(line) + ": " + what);
}

}  // namespace

void Dataset::validate() const {
  if (X.rows() < 1 || X.cols() < 1)
    throw std::invalid_argument("dataset: empty feature matrix");
  if (y.size() != X.rows())
    throw std::invalid_argument("dataset: label count does not match rows");
  if (!X.allFinite()) throw std::invalid_argument("dataset: non-finite feature");
  for (long i = 0; i < y.size(); ++i)
    if (y(i) != 1.0 && y(i) != -1.0)
      throw std::invalid_argument("dataset: labels must be -1/+1");
  if (feature_names.size() != static_cast<std::size_t>(X.cols()))
    throw std::invalid_argument("dataset: feature name count mismatch");
}

Dataset load_csv(const std::string& path, const CsvOptions& options) {
  if (options.label_column.empty())
    throw std::invalid_argument("csv: label column is required");
  auto lines = read_lines(path);
  while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
  if (lines.size() < 2) throw std::runtime_error(path + ": no data rows");

  const auto header = split_fields(lines[0], ',');
  const int ncol = static_cast<int>(header.size());
  int label_col = -1;
  std::vector<bool> nominal(ncol, false);
  for (int c = 0; c < ncol; ++c)
    if (header[c] == options.label_column) label_col = c;
  if (label_col < 0)
    throw std::runtime_error(path + ": label column '" + options.label_column +
                             "' not in header");
  for (const auto& name : options.nominal_columns) {
    bool found = false;
    for (int c = 0; c < ncol; ++c)
      if (header[c] == name && c != label_col) {
        nominal[c] = true;
        found = true;
      }
    if (!found)
      throw std::runtime_error(path + ": nominal column '" + name +
                               "' not in header");
  }

  const long rows = static_cast<long>(lines.size()) - 1;
  std::vector<std::vector<std::string>> cells(rows);
  for (long i = 0; i < rows; ++i) {
    cells[i] = split_fields(lines[i + 1], ',');
    if (static_cast<int>(cells[i].size()) != ncol)
      fail(path, i + 2, "expected " + std::to_string(ncol) + " fields, got " +
                            std::to_string(cells[i].size()));
  }

  std::set<std::string> label_values;
  for (long i = 0; i < rows; ++i) label_values.insert(cells[i][label_col]);
  if (label_values.size() != 2)
    throw std::runtime_error(path + ": label column must have exactly 2 values, has " +
                             std::to_string(label_values.size()));
  std::string pos = options.positive_label;
  std::string neg;
  if (pos.empty()) {
    // no explicit choice: numeric labels order naturally, larger is positive
    double a, b;
    auto it = label_values.begin();
    const std::string first = *it++;
    const std::string second = *it;
    if (!parse_double(first, a) || !parse_double(second, b))
      throw std::runtime_error(
          path + ": non-numeric labels need an explicit positive label");
    pos = a > b ? first : second;
    neg = a > b ? second : first;
  } else {
    if (!label_values.count(pos))
      throw std::runtime_error(path + ": positive label '" + pos +
                               "' does not occur");
    for (const auto& v : label_values)
      if (v != pos) neg = v;
  }

  // categories per nominal column, sorted for a stable one-hot layout
  std::vector<std::vector<std::string>> cats(ncol);
  for (int c = 0; c < ncol; ++c) {
    if (!nominal[c]) continue;
    std::set<std::string> seen;
    for (long i = 0; i < rows; ++i) seen.insert(cells[i][c]);
    cats[c].assign(seen.begin(), seen.end());
  }

  std::vector<std::string> names;
  std::vector<int> col_offset(ncol, -1);
  for (int c = 0; c < ncol; ++c) {
    if (c == label_col) continue;
    col_offset[c] = static_cast<int>(names.size());
    if (nominal[c])
      for (const auto& cat : cats[c]) names.push_back(header[c] + "=" + cat);
    else
      names.push_back(header[c]);
  }

  Dataset data;
  data.X = Eigen::MatrixXd::Zero(rows, static_cast<long>(names.size()));
  data.y = Eigen::VectorXd::Zero(rows);
  for (long i = 0; i < rows; ++i) {
    data.y(i) = cells[i][label_col] == pos ? 1.0 : -1.0;
    for (int c = 0; c < ncol; ++c) {
      if (c == label_col) continue;
      if (nominal[c]) {
        const auto& v = cells[i][c];
        const auto it = std::lower_bound(cats[c].begin(), cats[c].end(), v);
        data.X(i, col_offset[c] + (it - cats[c].begin())) = 1.0;
      } else {
        double v;
        if (!parse_double(cells[i][c], v))
          fail(path, i + 2, "column '" + header[c] + "': cannot parse '" +
                                cells[i][c] + "' as a number");
        data.X(i, col_offset[c]) = v;
      }
    }
  }
  data.feature_names = std::move(names);
  data.provenance = {path, pos, neg};
  data.validate();
  return data;
}

Dataset load_libsvm(const std::string& path, const std::string& positive_label) {
  auto lines = read_lines(path);
  struct Row {
    double label;
    std::vector<std::pair<int, double>> entries;
  };
  std::vector<Row> parsed;
  int width = 0;
  std::set<double> labels;
  for (std::size_t li = 0; li < lines.size(); ++li) {
    const std::string line = trim(lines[li]);
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::string tok;
    ss >> tok;
    Row row;
    if (!parse_double(tok, row.label)) fail(path, li + 1, "bad label '" + tok + "'");
    labels.insert(row.label);
    while (ss >> tok) {
      const auto colon = tok.find(':');
      if (colon == std::string::npos)
        fail(path, li + 1, "expected idx:value, got '" + tok + "'");
      double idx_d, val;
      if (!parse_double(tok.substr(0, colon), idx_d) || idx_d < 1 ||
          idx_d != std::floor(idx_d))
        fail(path, li + 1, "bad feature index in '" + tok + "'");
      if (!parse_double(tok.substr(colon + 1), val))
        fail(path, li + 1, "bad feature value in '" + tok + "'");
      const int idx = static_cast<int>(idx_d);
      width = std::max(width, idx);
      row.entries.emplace_back(idx - 1, val);
    }
    parsed.push_back(std::move(row));
  }
  if (parsed.empty()) throw std::runtime_error(path + ": no data rows");
  if (labels.size() != 2)
    throw std::runtime_error(path + ": need exactly 2 label values, have " +
                             std::to_string(labels.size()));
  if (width == 0) throw std::runtime_error(path + ": no features");

  double pos_value;
  const double lo = *labels.begin();
  const double hi = *labels.rbegin();
  if (!positive_label.empty()) {
    if (!parse_double(positive_label, pos_value) ||
        (pos_value != lo && pos_value != hi))
      throw std::runtime_error(path + ": positive label '" + positive_label +
                               "' does not occur");
  } else {
    pos_value = hi;  // covers the {-1,+1} case and maps larger labels to +1
  }

  Dataset data;
  data.X = Eigen::MatrixXd::Zero(static_cast<long>(parsed.size()), width);
  data.y = Eigen::VectorXd::Zero(static_cast<long>(parsed.size()));
  for (std::size_t i = 0; i < parsed.size(); ++i) {
    data.y(static_cast<long>(i)) = parsed[i].label == pos_value ? 1.0 : -1.0;
    for (const auto& [j, v] : parsed[i].entries)
      data.X(static_cast<long>(i), j) = v;
  }
  data.feature_names.reserve(width);
  for (int j = 1; j <= width; ++j) data.feature_names.push_back("f" + std::to_string(j));
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%g", pos_value);
  std::string pos_str = buf;
  std::snprintf(buf, sizeof(buf), "%g", pos_value == lo ? hi : lo);
  data.provenance = {path, pos_str, buf};
  data.validate();
  return data;
}

Normalizer fit_normalizer(const Dataset& data) {
  data.validate();
  Normalizer norm;
  norm.min = data.X.colwise().minCoeff();
  norm.range = data.X.colwise().maxCoeff() - norm.min.transpose();
  return norm;
}

Eigen::MatrixXd apply_normalizer(const Normalizer& norm,
                                 const Eigen::MatrixXd& X) {
  if (X.cols() != norm.min.size())
    throw std::invalid_argument("normalizer: feature count mismatch");
  Eigen::MatrixXd out(X.rows(), X.cols());
  for (long j = 0; j < X.cols(); ++j) {
    if (norm.range(j) > 0.0)
      out.col(j) = (X.col(j).array() - norm.min(j)) / norm.range(j);
    else
      out.col(j).setZero();
  }
  return out;
}

Dataset apply_normalizer(const Normalizer& norm, const Dataset& data) {
  Dataset out = data;
  out.X = apply_normalizer(norm, data.X);
  return out;
}

SplitPlan split_train_test(const Dataset& data, double test_fraction,
                           std::uint64_t seed) {
  data.validate();
  if (test_fraction < 0.0 || test_fraction >= 1.0)
    throw std::invalid_argument("split: test fraction must be in [0, 1)");
  std::vector<long> pos, neg;
  for (long i = 0; i < data.rows(); ++i)
    (data.y(i) > 0 ? pos : neg).push_back(i);

  detail::Rng rng(seed);
  SplitPlan plan;
  for (auto* cls : {&pos, &neg}) {
    rng.shuffle(*cls);
    long n_test = std::lround(test_fraction * static_cast<double>(cls->size()));
    if (n_test == static_cast<long>(cls->size()) && n_test > 0) --n_test;
    for (std::size_t i = 0; i < cls->size(); ++i)
      (static_cast<long>(i) < n_test ? plan.test_indices : plan.train_indices)
          .push_back((*cls)[i]);
  }
  std::sort(plan.train_indices.begin(), plan.train_indices.end());
  std::sort(plan.test_indices.begin(), plan.test_indices.end());
  return plan;
}

SplitPlan kfold(const SplitPlan& plan, const Dataset& data, int k,
                std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("kfold: k must be at least 2");
  if (static_cast<long>(plan.train_indices.size()) < k)
    throw std::invalid_argument("kfold: fewer training samples than folds");
  std::vector<long> pos, neg;
  for (long i : plan.train_indices)
    (data.y(i) > 0 ? pos : neg).push_back(i);

  SplitPlan out = plan;
  out.folds.assign(k, {});
  detail::Rng rng(seed);
  const bool stratified =
      static_cast<int>(pos.size()) >= k && static_cast<int>(neg.size()) >= k;
  out.stratification_fallback = !stratified;

  int cursor = 0;
  if (stratified) {
    for (auto* cls : {&pos, &neg}) {
      rng.shuffle(*cls);
      for (long idx : *cls) {
        out.folds[cursor].push_back(idx);
        cursor = (cursor + 1) % k;
      }
    }
  } else {
    std::vector<long> all = plan.train_indices;
    rng.shuffle(all);
    for (long idx : all) {
      out.folds[cursor].push_back(idx);
      cursor = (cursor + 1) % k;
    }
  }
  for (auto& fold : out.folds) std::sort(fold.begin(), fold.end());
  return out;
}

Dataset subset(const Dataset& data, std::span<const long> indices) {
  if (indices.empty()) throw std::invalid_argument("subset: no indices");
  Dataset out;
  out.X.resize(static_cast<long>(indices.size()), data.X.cols());
  out.y.resize(static_cast<long>(indices.size()));
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] < 0 || indices[i] >= data.rows())
      throw std::out_of_range("subset: index out of range");
    out.X.row(static_cast<long>(i)) = data.X.row(indices[i]);
    out.y(static_cast<long>(i)) = data.y(indices[i]);
  }
  out.feature_names = data.feature_names;
  out.provenance = data.provenance;
  return out;
}

Dataset gen_partitions(const PartitionSpec& spec, std::uint64_t seed) {
  const long num_branch = (1L << spec.depth) - 1;
  const long num_leaves = 1L << spec.depth;
  if (spec.depth < 0 || spec.depth > 16)
    throw std::invalid_argument("generator: depth out of range");
  if (static_cast<long>(spec.nodes.size()) != num_branch)
    throw std::invalid_argument("generator: wrong hyperplane count");
  if (static_cast<long>(spec.leaf_labels.size()) != num_leaves)
    throw std::invalid_argument("generator: wrong leaf label count");
  for (int lab : spec.leaf_labels)
    if (lab != 1 && lab != -1)
      throw std::invalid_argument("generator: leaf labels must be -1/+1");
  for (const auto& node : spec.nodes) {
    if (node.w.norm() <= 0.0)
      throw std::invalid_argument("generator: zero hyperplane normal");
    if (node.margin < 0.0)
      throw std::invalid_argument("generator: negative margin");
  }
  if (spec.count < 1) throw std::invalid_argument("generator: count must be positive");
  if (!(spec.box_lo(0) < spec.box_hi(0)) || !(spec.box_lo(1) < spec.box_hi(1)))
    throw std::invalid_argument("generator: empty box");

  detail::Rng rng(seed);
  Dataset data;
  data.X.resize(spec.count, 2);
  data.y.resize(spec.count);
  const long max_attempts = std::max(100000L, 10000L * spec.count);
  long attempts = 0;
  for (long i = 0; i < spec.count; ++i) {
    Eigen::Vector2d x;
    while (true) {
      if (++attempts > max_attempts)
        throw std::runtime_error("generator: margin bands leave no room for points");
      x(0) = rng.uniform(spec.box_lo(0), spec.box_hi(0));
      x(1) = rng.uniform(spec.box_lo(1), spec.box_hi(1));
      bool in_band = false;
      for (const auto& node : spec.nodes) {
        const double dist = std::abs(node.w.dot(x) + node.b) / node.w.norm();
        if (dist < node.margin) {
          in_band = true;
          break;
        }
      }
      if (!in_band) break;
    }
    long t = 0;
    while (t < num_branch) {
      const auto& node = spec.nodes[static_cast<std::size_t>(t)];
      t = node.w.dot(x) + node.b >= 0.0 ? 2 * t + 2 : 2 * t + 1;
    }
    data.X.row(i) = x.transpose();
    data.y(i) = spec.leaf_labels[static_cast<std::size_t>(t - num_branch)];
  }
  data.feature_names = {"x1", "x2"};
  data.provenance = {"synthetic:partitions", "1", "-1"};
  return data;
}

// Four vertical bands with alternating labels; a depth-2 tree with splits at
// 0.5 (root), 0.25 and 0.75 classifies them perfectly.
PartitionSpec four_partitions_spec() {
  PartitionSpec spec;
  spec.depth = 2;
  spec.count = 108;
  auto cut = [](double at) { return GeneratorHyperplane{{1.0, 0.0}, -at, 0.07}; };
  spec.nodes = {cut(0.5), cut(0.25), cut(0.75)};
  spec.leaf_labels = {-1, 1, -1, 1};
  return spec;
}

// Six alternating bands; depth 3 is the minimum that separates them. Two of
// the level-3 nodes repeat the 0.5 cut so their subtrees keep a whole band on
// one side, which leaves those nodes prunable to w=0.
PartitionSpec six_partitions_spec() {
  PartitionSpec spec;
  spec.depth = 3;
  spec.count = 96;
  auto cut = [](double at) { return GeneratorHyperplane{{1.0, 0.0}, -at, 0.04}; };
  spec.nodes = {cut(3.0 / 6.0), cut(2.0 / 6.0), cut(4.0 / 6.0),
                cut(1.0 / 6.0), cut(3.0 / 6.0), cut(3.0 / 6.0),
                cut(5.0 / 6.0)};
  spec.leaf_labels = {-1, 1, -1, 1, -1, 1, -1, 1};
  return spec;
}

void save_csv(const Dataset& data, const std::string& path) {
  data.validate();
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (const auto& name : data.feature_names) out << name << ",";
  out << "label\n";
  char buf[64];
  for (long i = 0; i < data.rows(); ++i) {
    for (int j = 0; j < data.cols(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", data.X(i, j));
      out << buf << ",";
    }
    out << (data.y(i) > 0 ? "1" : "-1") << "\n";
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace margot
