#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "margot/runner.hpp"

namespace {

struct CommonFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<double> time_limit;
  std::string out;
};

void add_common(CLI::App* cmd, CommonFlags& flags, bool out_is_dir) {
  cmd->add_option("--config", flags.config_path, "run configuration file")
      ->required();
  cmd->add_option("--seed", flags.seed, "override the config seed");
  cmd->add_option("--time-limit", flags.time_limit,
                  "override the training time limit (seconds)");
  cmd->add_option("--out", flags.out,
                  out_is_dir ? "output directory" : "output path");
}

margot::RunConfig resolve(const CommonFlags& flags, bool out_is_dir) {
  margot::RunConfig config = margot::load_config(flags.config_path);
  if (flags.seed) config.seed = *flags.seed;
  if (flags.time_limit) {
    if (!(*flags.time_limit > 0.0))
      throw margot::ConfigError("--time-limit: must be positive");
    config.time_limit = *flags.time_limit;
  }
  if (!flags.out.empty() && out_is_dir) config.out_dir = flags.out;
  return config;
}

nlohmann::json metrics_json(const margot::Metrics& m) {
  nlohmann::json j;
  j["accuracy"] = m.accuracy;
  j["balanced_accuracy"] = m.balanced_accuracy;
  j["tp"] = m.tp;
  j["tn"] = m.tn;
  j["fp"] = m.fp;
  j["fn"] = m.fn;
  return j;
}

nlohmann::json cv_table_json(const margot::CvOutcome& outcome) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : outcome.table) {
    nlohmann::json r;
    r["C"] = std::vector<double>(row.hp.C.data(),
                                 row.hp.C.data() + row.hp.C.size());
    if (row.hp.budgets.size() > 0)
      r["budgets"] = std::vector<int>(
          row.hp.budgets.data(), row.hp.budgets.data() + row.hp.budgets.size());
    r["alpha"] = row.hp.alpha;
    r["mean_validation_accuracy"] = row.mean_validation_accuracy;
    r["total_selected_features"] = row.total_selected_features;
    rows.push_back(std::move(r));
  }
  nlohmann::json j;
  j["selected"] = outcome.selected;
  j["table"] = std::move(rows);
  return j;
}

int run_cv_command(const CommonFlags& flags, bool feature_driven) {
  const margot::RunConfig config = resolve(flags, true);
  const margot::CvOutcome outcome = feature_driven
                                        ? margot::cv_feature_driven(config)
                                        : margot::cv_standard(config);
  nlohmann::json j = cv_table_json(outcome);
  j["refit"] = nlohmann::json::parse(
      margot::report_to_json(outcome.refit.report));
  if (!config.out_dir.empty()) {
    std::filesystem::create_directories(config.out_dir);
    std::ofstream out(std::filesystem::path(config.out_dir) / "cv.json",
                      std::ios::binary);
    out << j.dump(2) << "\n";
  }
  std::cout << j.dump(2) << "\n";
  return outcome.refit.report.exit_code();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"maximum-margin decision tree trainer"};
  app.require_subcommand(1);

  CommonFlags train_flags, eval_flags, cv_flags, cvfs_flags, synth_flags,
      plot_flags;
  std::string eval_tree, plot_tree;
  bool eval_normalize = false;

  CLI::App* cmd_train = app.add_subcommand("train", "train one model");
  add_common(cmd_train, train_flags, true);

  CLI::App* cmd_eval =
      app.add_subcommand("evaluate", "apply a saved classifier to a dataset");
  add_common(cmd_eval, eval_flags, false);
  cmd_eval->add_option("--tree", eval_tree, "classifier JSON file")->required();
  cmd_eval->add_flag("--normalize", eval_normalize,
                     "min-max normalize the dataset before applying");

  CLI::App* cmd_cv = app.add_subcommand("cv", "cross-validated training");
  add_common(cmd_cv, cv_flags, true);

  CLI::App* cmd_cvfs = app.add_subcommand(
      "cv-fs", "cross-validated training, feature-driven selection");
  add_common(cmd_cvfs, cvfs_flags, true);

  CLI::App* cmd_synth =
      app.add_subcommand("synth", "write a synthetic dataset as CSV");
  add_common(cmd_synth, synth_flags, false);

  CLI::App* cmd_plot =
      app.add_subcommand("plot", "SVG scatter with decision lines");
  add_common(cmd_plot, plot_flags, false);
  cmd_plot->add_option("--tree", plot_tree, "classifier JSON file")->required();

  CLI::App* cmd_dims =
      app.add_subcommand("dims", "print formulation size for given shape");
  std::string dims_model = "margot";
  int dims_depth = 2;
  int dims_features = 2;
  long dims_samples = 100;
  cmd_dims->add_option("--model", dims_model, "margot | hfs | sfs");
  cmd_dims->add_option("--depth", dims_depth, "tree depth");
  cmd_dims->add_option("--features", dims_features, "feature count");
  cmd_dims->add_option("--samples", dims_samples, "sample count");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 4;
  }

  try {
    if (*cmd_train) {
      const margot::RunConfig config = resolve(train_flags, true);
      const margot::TrainOutcome outcome = margot::train(config);
      std::cout << margot::report_to_json(outcome.report) << "\n";
      return outcome.report.exit_code();
    }
    if (*cmd_eval) {
      const margot::RunConfig config = resolve(eval_flags, false);
      margot::Dataset data = margot::load_dataset(config);
      data.validate();
      if (eval_normalize)
        data = margot::apply_normalizer(margot::fit_normalizer(data), data);
      const margot::TreeClassifier clf = margot::load_classifier(eval_tree);
      const margot::Metrics m = margot::evaluate(clf, data);
      nlohmann::json j = metrics_json(m);
      j["rows"] = data.rows();
      if (!eval_flags.out.empty()) {
        std::ofstream out(eval_flags.out, std::ios::binary);
        out << j.dump(2) << "\n";
      }
      std::cout << j.dump(2) << "\n";
      return 0;
    }
    if (*cmd_cv) return run_cv_command(cv_flags, false);
    if (*cmd_cvfs) return run_cv_command(cvfs_flags, true);
    if (*cmd_synth) {
      const margot::RunConfig config = resolve(synth_flags, false);
      if (synth_flags.out.empty())
        throw margot::ConfigError("synth: --out <csv path> is required");
      const margot::Dataset data = margot::load_dataset(config);
      margot::save_csv(data, synth_flags.out);
      std::cout << "wrote " << data.rows() << " samples to " << synth_flags.out
                << "\n";
      return 0;
    }
    if (*cmd_plot) {
      const margot::RunConfig config = resolve(plot_flags, false);
      if (plot_flags.out.empty())
        throw margot::ConfigError("plot: --out <svg path> is required");
      margot::Dataset data = margot::load_dataset(config);
      const margot::TreeClassifier clf = margot::load_classifier(plot_tree);
      margot::plot_2d(clf, data, plot_flags.out);
      std::cout << "wrote " << plot_flags.out << "\n";
      return 0;
    }
    if (*cmd_dims) {
      const margot::ModelVariant variant =
          margot::variant_from_string(dims_model);
      const margot::ModelDimensions dims = margot::expected_dimensions(
          variant, dims_depth, dims_features, dims_samples);
      nlohmann::json j;
      j["continuous_vars"] = dims.continuous_vars;
      j["binary_vars"] = dims.binary_vars;
      j["total_vars"] = dims.total_vars();
      j["margin_rows"] = dims.margin_rows;
      j["routing_rows"] = dims.routing_rows;
      j["assignment_rows"] = dims.assignment_rows;
      j["linking_rows"] = dims.linking_rows;
      j["budget_rows"] = dims.budget_rows;
      j["excess_rows"] = dims.excess_rows;
      j["total_rows"] = dims.total_rows();
      std::cout << j.dump(2) << "\n";
      return 0;
    }
  } catch (const margot::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 4;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
