#include "margot/runner.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <utility>

#include "json.hpp"
#include "margot/bnb.hpp"

namespace margot {

namespace {

using Clock = std::chrono::steady_clock;

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split_list(const std::string& value, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(value);
  while (std::getline(in, cur, sep)) {
    cur = trim(cur);
    if (!cur.empty()) out.push_back(cur);
  }
  return out;
}

double parse_num(const std::string& key, const std::string& value) {
  double v = 0.0;
  const char* b = value.data();
  const char* e = b + value.size();
  auto [p, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || p != e || !std::isfinite(v))
    throw ConfigError("config key '" + key + "': bad number '" + value + "'");
  return v;
}

long parse_integer(const std::string& key, const std::string& value) {
  long v = 0;
  const char* b = value.data();
  const char* e = b + value.size();
  auto [p, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || p != e)
    throw ConfigError("config key '" + key + "': bad integer '" + value + "'");
  return v;
}

bool parse_flag(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError("config key '" + key + "': bad flag '" + value + "'");
}

std::vector<double> parse_nums(const std::string& key,
                               const std::string& value) {
  std::vector<double> out;
  for (const auto& part : split_list(value, ','))
    out.push_back(parse_num(key, part));
  return out;
}

std::vector<int> parse_integers(const std::string& key,
                                const std::string& value) {
  std::vector<int> out;
  for (const auto& part : split_list(value, ','))
    out.push_back(static_cast<int>(parse_integer(key, part)));
  return out;
}

Eigen::Vector2d parse_point(const std::string& key, const std::string& value) {
  const auto parts = parse_nums(key, value);
  if (parts.size() != 2)
    throw ConfigError("config key '" + key + "': expected two numbers");
  return {parts[0], parts[1]};
}

std::vector<std::pair<std::string, std::string>> config_pairs(
    const std::string& text) {
  std::vector<std::pair<std::string, std::string>> pairs;
  std::istringstream in(text);
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": expected key = value");
    pairs.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    if (pairs.back().first.empty())
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": empty key");
  }
  return pairs;
}

std::vector<GeneratorHyperplane> parse_gen_nodes(const std::string& value) {
  std::vector<GeneratorHyperplane> nodes;
  for (const auto& part : split_list(value, ';')) {
    std::istringstream in(part);
    std::vector<double> v;
    std::string tok;
    while (in >> tok) v.push_back(parse_num("gen.nodes", tok));
    if (v.size() != 4)
      throw ConfigError(
          "config key 'gen.nodes': each node needs 'w0 w1 b margin'");
    GeneratorHyperplane h;
    h.w = {v[0], v[1]};
    h.b = v[2];
    h.margin = v[3];
    nodes.push_back(h);
  }
  return nodes;
}

std::vector<double> default_cost_grid(ModelVariant variant) {
  std::vector<double> grid;
  if (variant == ModelVariant::Sfs) {
    for (int i = -4; i <= 4; i += 2) grid.push_back(std::pow(10.0, i));
  } else {
    for (int i = -5; i <= 5; ++i) grid.push_back(std::pow(10.0, i));
  }
  return grid;
}

std::vector<int> default_budget_grid(ModelVariant variant, int num_features) {
  std::vector<int> grid;
  if (variant == ModelVariant::Sfs) {
    grid.push_back(1);
    return grid;
  }
  for (int b = 1; b <= 3 && b <= num_features; ++b) grid.push_back(b);
  return grid;
}

Hyperparameters base_point(const RunConfig& config) {
  Hyperparameters hp;
  hp.depth = config.depth;
  hp.epsilon = config.epsilon;
  hp.M_xi = config.M_xi;
  hp.M_h = config.M_h;
  hp.M_w = config.M_w;
  hp.alpha = config.alpha;
  return hp;
}

void apply_levels(Hyperparameters& hp, const RunConfig& config,
                  const std::vector<double>& C_levels,
                  const std::vector<int>& budget_levels) {
  if (C_levels.empty()) throw ConfigError("C: at least one value required");
  if (static_cast<int>(C_levels.size()) == 1) {
    hp.set_level_costs(std::vector<double>(
        static_cast<std::size_t>(config.depth), C_levels[0]));
  } else if (static_cast<int>(C_levels.size()) == config.depth) {
    hp.set_level_costs(C_levels);
  } else {
    throw ConfigError("C: expected 1 or depth values");
  }
  if (config.variant != ModelVariant::Margot) {
    if (budget_levels.empty())
      throw ConfigError("budgets: required for feature-selection variants");
    if (static_cast<int>(budget_levels.size()) == 1) {
      hp.set_level_budgets(std::vector<int>(
          static_cast<std::size_t>(config.depth), budget_levels[0]));
    } else if (static_cast<int>(budget_levels.size()) == config.depth) {
      hp.set_level_budgets(budget_levels);
    } else {
      throw ConfigError("budgets: expected 1 or depth values");
    }
  }
}

void check_point(const Hyperparameters& hp, ModelVariant variant,
                 int num_features) {
  try {
    hp.validate(variant, num_features);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("hyperparameters: ") + e.what());
  }
}

struct FitResult {
  BnbResult bnb;
  ModelSolution solution;
  TreeClassifier tree;
  HeuristicResult heuristic;
  bool big_m_warning = false;
  bool size_warning = false;
};

FitResult fit_model(const Dataset& train_data, ModelVariant variant,
                    const Hyperparameters& hp, double warm_start_limit,
                    double time_limit) {
  BuiltModel model = build_model(variant, train_data, hp);
  FitResult fit;
  fit.size_warning = model.size_warning;
  HeuristicConfig hc;
  hc.mode = variant;
  hc.hp = hp;
  hc.time_limit = warm_start_limit;
  fit.heuristic = local_svm(train_data, hc);

  BnbParams params;
  params.time_limit = time_limit;
  fit.bnb = solve_miqp(model.prob, params,
                       encode_solution(fit.heuristic.solution, model.map));

  if (fit.bnb.has_incumbent()) {
    fit.solution = decode_solution(fit.bnb.x, model.map);
    fit.solution.objective = fit.bnb.upper_bound;
  } else {
    fit.solution = fit.heuristic.solution;
  }
  fit.tree = extract_tree(fit.solution, model.map, hp, train_data);
  fit.big_m_warning = fit.heuristic.big_m_exceeded ||
                      big_m_binding(fit.solution, model);
  return fit;
}

struct Partition {
  Dataset train;
  std::optional<Dataset> test;
  Normalizer normalizer;
};

Partition normalized_partition(const Dataset& data, const SplitPlan& plan) {
  Partition part;
  const Dataset train_raw = subset(data, plan.train_indices);
  part.normalizer = fit_normalizer(train_raw);
  part.train = apply_normalizer(part.normalizer, train_raw);
  if (!plan.test_indices.empty())
    part.test = apply_normalizer(part.normalizer,
                                 subset(data, plan.test_indices));
  return part;
}

RunReport make_report(const RunConfig& config, const Hyperparameters& hp,
                      const FitResult& fit, const Partition& part,
                      bool stratification_fallback) {
  RunReport rep;
  rep.variant = to_string(config.variant);
  rep.depth = hp.depth;
  rep.status = to_string(fit.bnb.status);
  rep.objective = fit.bnb.upper_bound;
  rep.lower_bound = fit.bnb.lower_bound;
  rep.gap = fit.bnb.gap;
  rep.nodes = fit.bnb.stats.nodes;
  rep.first_incumbent = fit.bnb.stats.first_incumbent;
  rep.incumbent_after_root = fit.bnb.stats.incumbent_after_root;
  rep.warm_start_accepted = fit.bnb.stats.warm_start_accepted;
  rep.heuristic_nudged = fit.heuristic.nudge_applied;
  rep.big_m_warning = fit.big_m_warning;
  rep.warm_start_seconds = fit.heuristic.wall_seconds;

  rep.train_metrics = evaluate(fit.tree, part.train);
  if (part.test) rep.test_metrics = evaluate(fit.tree, *part.test);

  const FeatureReport features = feature_report(fit.tree);
  rep.features_per_node.assign(features.per_node.data(),
                               features.per_node.data() +
                                   features.per_node.size());
  rep.distinct_features = features.distinct_features;

  rep.C.assign(hp.C.data(), hp.C.data() + hp.C.size());
  if (hp.budgets.size() > 0)
    rep.budgets.assign(hp.budgets.data(),
                       hp.budgets.data() + hp.budgets.size());
  rep.alpha = hp.alpha;
  rep.epsilon = hp.epsilon;

  rep.seed = config.seed;
  rep.config_digest = config_hash(config);
  rep.dataset_source = part.train.provenance.source;
  rep.train_rows = part.train.rows();
  rep.test_rows = part.test ? part.test->rows() : 0;
  rep.num_features = part.train.cols();
  rep.stratification_fallback = stratification_fallback;
  return rep;
}

void write_outputs(const RunConfig& config, const TrainOutcome& outcome) {
  if (config.out_dir.empty()) return;
  namespace fs = std::filesystem;
  fs::create_directories(config.out_dir);
  const fs::path dir(config.out_dir);
  std::ofstream rep(dir / "report.json", std::ios::binary);
  rep << report_to_json(outcome.report) << "\n";
  save_classifier(outcome.tree, (dir / "tree.json").string());
}

TrainOutcome train_given(const RunConfig& config, const Dataset& data,
                         const SplitPlan& plan, const Hyperparameters& hp) {
  const auto t0 = Clock::now();
  Partition part = normalized_partition(data, plan);
  FitResult fit = fit_model(part.train, config.variant, hp,
                            config.warm_start_limit, config.time_limit);
  TrainOutcome outcome;
  outcome.report =
      make_report(config, hp, fit, part, plan.stratification_fallback);
  outcome.report.wall_seconds =
      std::chrono::duration<double>(Clock::now() - t0).count();
  outcome.tree = std::move(fit.tree);
  outcome.train_data = std::move(part.train);
  outcome.test_data = std::move(part.test);
  write_outputs(config, outcome);
  return outcome;
}

std::vector<long> fold_complement(const SplitPlan& plan, std::size_t fold) {
  std::vector<long> out;
  out.reserve(plan.train_indices.size());
  std::set_difference(plan.train_indices.begin(), plan.train_indices.end(),
                      plan.folds[fold].begin(), plan.folds[fold].end(),
                      std::back_inserter(out));
  return out;
}

CvOutcome run_cv(const RunConfig& config, bool feature_driven) {
  Dataset data = load_dataset(config);
  data.validate();
  SplitPlan plan = split_train_test(data, config.test_fraction, config.seed);
  plan = kfold(plan, data, config.folds, config.seed);

  const std::vector<Hyperparameters> grid =
      expand_grid(config, data.cols());

  CvOutcome outcome;
  outcome.table.reserve(grid.size());
  for (const auto& hp : grid) {
    GridPointResult row;
    row.hp = hp;
    double acc_sum = 0.0;
    for (std::size_t f = 0; f < plan.folds.size(); ++f) {
      const std::vector<long> fit_idx = fold_complement(plan, f);
      const Dataset fold_raw = subset(data, fit_idx);
      const Normalizer norm = fit_normalizer(fold_raw);
      const Dataset fold_train = apply_normalizer(norm, fold_raw);
      const Dataset fold_val =
          apply_normalizer(norm, subset(data, plan.folds[f]));
      FitResult fit = fit_model(fold_train, config.variant, hp,
                                config.warm_start_limit, config.time_limit);
      acc_sum += evaluate(fit.tree, fold_val).accuracy;
      row.total_selected_features += feature_report(fit.tree).total_selected();
    }
    row.mean_validation_accuracy =
        acc_sum / static_cast<double>(plan.folds.size());
    outcome.table.push_back(std::move(row));
  }

  std::size_t best = 0;
  if (feature_driven) {
    double gamma = 0.0;
    for (const auto& row : outcome.table)
      gamma = std::max(gamma, row.mean_validation_accuracy);
    const double floor_acc = 0.975 * gamma;
    bool found = false;
    for (std::size_t g = 0; g < outcome.table.size(); ++g) {
      const auto& row = outcome.table[g];
      if (row.mean_validation_accuracy < floor_acc) continue;
      if (!found) {
        best = g;
        found = true;
        continue;
      }
      const auto& cur = outcome.table[best];
      if (row.total_selected_features != cur.total_selected_features) {
        if (row.total_selected_features < cur.total_selected_features) best = g;
      } else if (row.mean_validation_accuracy >
                 cur.mean_validation_accuracy) {
        best = g;
      }
    }
  } else {
    for (std::size_t g = 1; g < outcome.table.size(); ++g)
      if (outcome.table[g].mean_validation_accuracy >
          outcome.table[best].mean_validation_accuracy)
        best = g;
  }
  outcome.selected = best;
  outcome.refit = train_given(config, data, plan, outcome.table[best].hp);
  return outcome;
}

nlohmann::json metrics_to_json(const Metrics& m) {
  nlohmann::json j;
  j["accuracy"] = m.accuracy;
  j["balanced_accuracy"] = m.balanced_accuracy;
  j["tp"] = m.tp;
  j["tn"] = m.tn;
  j["fp"] = m.fp;
  j["fn"] = m.fn;
  j["positive_class_absent"] = m.positive_class_absent;
  j["negative_class_absent"] = m.negative_class_absent;
  return j;
}

}  // namespace

RunConfig parse_config(const std::string& text) {
  std::map<std::string, std::string> kv;
  for (auto& [key, value] : config_pairs(text)) {
    if (!kv.emplace(key, value).second)
      throw ConfigError("config key '" + key + "' appears twice");
  }
  RunConfig config;
  config.raw_text = text;
  auto take = [&](const char* key) -> std::optional<std::string> {
    auto it = kv.find(key);
    if (it == kv.end()) return std::nullopt;
    std::string v = it->second;
    kv.erase(it);
    return v;
  };

  if (auto v = take("data.format")) config.dataset_format = *v;
  if (config.dataset_format != "csv" && config.dataset_format != "libsvm" &&
      config.dataset_format != "generator")
    throw ConfigError("data.format: expected csv, libsvm, or generator");
  if (auto v = take("data.path")) config.dataset_path = *v;
  if (auto v = take("data.label_column")) config.csv.label_column = *v;
  if (auto v = take("data.positive_label")) {
    config.csv.positive_label = *v;
    config.libsvm_positive_label = *v;
  }
  if (auto v = take("data.nominal_columns"))
    config.csv.nominal_columns = split_list(*v, ',');

  if (auto v = take("gen.preset")) {
    if (*v == "four_partitions")
      config.generator = four_partitions_spec();
    else if (*v == "six_partitions")
      config.generator = six_partitions_spec();
    else
      throw ConfigError("gen.preset: expected four_partitions or six_partitions");
    config.generator_preset_used = true;
  }
  if (auto v = take("gen.depth"))
    config.generator.depth = static_cast<int>(parse_integer("gen.depth", *v));
  if (auto v = take("gen.count"))
    config.generator.count = parse_integer("gen.count", *v);
  if (auto v = take("gen.box_lo"))
    config.generator.box_lo = parse_point("gen.box_lo", *v);
  if (auto v = take("gen.box_hi"))
    config.generator.box_hi = parse_point("gen.box_hi", *v);
  if (auto v = take("gen.nodes")) config.generator.nodes = parse_gen_nodes(*v);
  if (auto v = take("gen.leaf_labels"))
    config.generator.leaf_labels = parse_integers("gen.leaf_labels", *v);

  if (auto v = take("model")) {
    try {
      config.variant = variant_from_string(*v);
    } catch (const std::exception& e) {
      throw ConfigError(std::string("model: ") + e.what());
    }
  }
  if (auto v = take("depth"))
    config.depth = static_cast<int>(parse_integer("depth", *v));
  if (auto v = take("C")) config.C_levels = parse_nums("C", *v);
  if (auto v = take("budgets")) config.budget_levels = parse_integers("budgets", *v);
  if (auto v = take("alpha")) config.alpha = parse_num("alpha", *v);
  if (auto v = take("epsilon")) config.epsilon = parse_num("epsilon", *v);
  if (auto v = take("M_xi")) config.M_xi = parse_num("M_xi", *v);
  if (auto v = take("M_h")) config.M_h = parse_num("M_h", *v);
  if (auto v = take("M_w")) config.M_w = parse_num("M_w", *v);

  if (auto v = take("C_grid")) config.C_grid = parse_nums("C_grid", *v);
  if (auto v = take("budget_grid"))
    config.budget_grid = parse_integers("budget_grid", *v);
  if (auto v = take("alpha_grid"))
    config.alpha_grid = parse_nums("alpha_grid", *v);
  if (auto v = take("budgets_nondecreasing"))
    config.budgets_nondecreasing = parse_flag("budgets_nondecreasing", *v);

  if (auto v = take("test_fraction"))
    config.test_fraction = parse_num("test_fraction", *v);
  if (auto v = take("folds"))
    config.folds = static_cast<int>(parse_integer("folds", *v));
  if (auto v = take("seed"))
    config.seed = static_cast<std::uint64_t>(parse_integer("seed", *v));
  if (auto v = take("time_limit")) config.time_limit = parse_num("time_limit", *v);
  if (auto v = take("warm_start_limit"))
    config.warm_start_limit = parse_num("warm_start_limit", *v);
  if (auto v = take("out_dir")) config.out_dir = *v;

  if (!kv.empty())
    throw ConfigError("unknown config key '" + kv.begin()->first + "'");

  if (config.dataset_format != "generator" && config.dataset_path.empty())
    throw ConfigError("data.path: required for csv and libsvm input");
  if (config.depth < 1) throw ConfigError("depth: must be at least 1");
  if (!(config.time_limit > 0.0))
    throw ConfigError("time_limit: must be positive");
  if (!(config.warm_start_limit > 0.0))
    throw ConfigError("warm_start_limit: must be positive");
  if (!(config.test_fraction >= 0.0 && config.test_fraction < 1.0))
    throw ConfigError("test_fraction: must be in [0, 1)");
  if (config.folds < 2) throw ConfigError("folds: must be at least 2");
  return config;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string config_hash(const RunConfig& config) {
  auto pairs = config_pairs(config.raw_text);
  std::sort(pairs.begin(), pairs.end());
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&](const std::string& s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 1099511628211ull;
    }
  };
  for (const auto& [key, value] : pairs) {
    mix(key);
    mix("=");
    mix(value);
    mix("\n");
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

Dataset load_dataset(const RunConfig& config) {
  if (config.dataset_format == "csv")
    return load_csv(config.dataset_path, config.csv);
  if (config.dataset_format == "libsvm")
    return load_libsvm(config.dataset_path, config.libsvm_positive_label);
  try {
    return gen_partitions(config.generator, config.seed);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("generator: ") + e.what());
  }
}

Hyperparameters single_point(const RunConfig& config, int num_features) {
  Hyperparameters hp = base_point(config);
  apply_levels(hp, config, config.C_levels, config.budget_levels);
  check_point(hp, config.variant, num_features);
  return hp;
}

std::vector<Hyperparameters> expand_grid(const RunConfig& config,
                                         int num_features) {
  const ModelVariant variant = config.variant;
  const std::vector<double> costs =
      config.C_grid.empty() ? default_cost_grid(variant) : config.C_grid;
  std::vector<int> budgets;
  if (variant != ModelVariant::Margot)
    budgets = config.budget_grid.empty()
                  ? default_budget_grid(variant, num_features)
                  : config.budget_grid;
  std::vector<double> alphas{config.alpha};
  if (variant == ModelVariant::Sfs) {
    if (config.alpha_grid.empty()) {
      alphas.clear();
      for (int i = 0; i <= 10; ++i) alphas.push_back(std::pow(2.0, i));
    } else {
      alphas = config.alpha_grid;
    }
  }

  // level-tied cost tuples: one independent value per level, except the SFS
  // protocol where a single value covers the whole tree
  const int cost_slots = variant == ModelVariant::Sfs ? 1 : config.depth;
  std::vector<std::vector<double>> cost_tuples;
  {
    std::vector<std::size_t> ix(static_cast<std::size_t>(cost_slots), 0);
    while (true) {
      std::vector<double> tuple(static_cast<std::size_t>(config.depth));
      for (int l = 0; l < config.depth; ++l)
        tuple[static_cast<std::size_t>(l)] =
            costs[ix[static_cast<std::size_t>(std::min(l, cost_slots - 1))]];
      cost_tuples.push_back(std::move(tuple));
      int slot = cost_slots - 1;
      while (slot >= 0 && ++ix[static_cast<std::size_t>(slot)] == costs.size()) {
        ix[static_cast<std::size_t>(slot)] = 0;
        --slot;
      }
      if (slot < 0) break;
      if (cost_tuples.size() > 200000)
        throw ConfigError("grid: too many cost combinations");
    }
  }

  std::vector<std::vector<int>> budget_tuples{{}};
  if (variant != ModelVariant::Margot) {
    budget_tuples.clear();
    std::vector<std::size_t> ix(static_cast<std::size_t>(config.depth), 0);
    while (true) {
      std::vector<int> tuple(static_cast<std::size_t>(config.depth));
      bool ok = true;
      for (int l = 0; l < config.depth; ++l) {
        tuple[static_cast<std::size_t>(l)] =
            budgets[ix[static_cast<std::size_t>(l)]];
        if (config.budgets_nondecreasing && l > 0 &&
            tuple[static_cast<std::size_t>(l)] <
                tuple[static_cast<std::size_t>(l - 1)])
          ok = false;
      }
      if (ok) budget_tuples.push_back(std::move(tuple));
      int slot = config.depth - 1;
      while (slot >= 0 &&
             ++ix[static_cast<std::size_t>(slot)] == budgets.size()) {
        ix[static_cast<std::size_t>(slot)] = 0;
        --slot;
      }
      if (slot < 0) break;
      if (budget_tuples.size() > 200000)
        throw ConfigError("grid: too many budget combinations");
    }
    if (budget_tuples.empty())
      throw ConfigError("grid: no admissible budget combination");
  }

  std::vector<Hyperparameters> grid;
  for (const auto& ct : cost_tuples) {
    for (const auto& bt : budget_tuples) {
      for (double a : alphas) {
        Hyperparameters hp = base_point(config);
        hp.set_level_costs(ct);
        if (variant != ModelVariant::Margot) hp.set_level_budgets(bt);
        hp.alpha = a;
        check_point(hp, variant, num_features);
        grid.push_back(std::move(hp));
        if (grid.size() > 500000)
          throw ConfigError("grid: too many hyperparameter points");
      }
    }
  }
  if (grid.empty()) throw ConfigError("grid: empty");
  return grid;
}

int RunReport::exit_code() const {
  if (status == "Infeasible") return 2;
  if (status == "TimeLimit" && !std::isfinite(objective)) return 3;
  return 0;
}

std::string report_to_json(const RunReport& report, bool include_timing) {
  nlohmann::json j;
  j["variant"] = report.variant;
  j["depth"] = report.depth;
  j["status"] = report.status;
  j["objective"] = report.objective;
  j["lower_bound"] = report.lower_bound;
  j["gap"] = report.gap;
  j["nodes"] = report.nodes;
  j["first_incumbent"] = report.first_incumbent;
  j["incumbent_after_root"] = report.incumbent_after_root;
  j["warm_start_accepted"] = report.warm_start_accepted;
  j["heuristic_nudged"] = report.heuristic_nudged;
  j["big_m_warning"] = report.big_m_warning;
  j["train_metrics"] = metrics_to_json(report.train_metrics);
  j["test_metrics"] =
      report.test_metrics ? metrics_to_json(*report.test_metrics)
                          : nlohmann::json();
  j["features_per_node"] = report.features_per_node;
  j["distinct_features"] = report.distinct_features;
  j["C"] = report.C;
  j["budgets"] = report.budgets;
  j["alpha"] = report.alpha;
  j["epsilon"] = report.epsilon;
  j["seed"] = report.seed;
  j["config_hash"] = report.config_digest;
  j["dataset_source"] = report.dataset_source;
  j["train_rows"] = report.train_rows;
  j["test_rows"] = report.test_rows;
  j["num_features"] = report.num_features;
  j["stratification_fallback"] = report.stratification_fallback;
  if (include_timing) {
    j["wall_seconds"] = report.wall_seconds;
    j["warm_start_seconds"] = report.warm_start_seconds;
  }
  return j.dump(2);
}

TrainOutcome train(const RunConfig& config) {
  if (!config.C_grid.empty() || !config.budget_grid.empty() ||
      !config.alpha_grid.empty())
    throw ConfigError("train: grids are only valid for cross-validation");
  Dataset data = load_dataset(config);
  data.validate();
  const SplitPlan plan =
      split_train_test(data, config.test_fraction, config.seed);
  const Hyperparameters hp = single_point(config, data.cols());
  return train_given(config, data, plan, hp);
}

CvOutcome cv_standard(const RunConfig& config) { return run_cv(config, false); }

CvOutcome cv_feature_driven(const RunConfig& config) {
  return run_cv(config, true);
}

}  // namespace margot
