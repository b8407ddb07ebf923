// harstack: HAR ensemble experiments (pca-sweep, compare-forests, stack).

#include "harstack/experiments.hpp"
#include "harstack/parallel.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>

namespace {

using harstack::ExperimentConfig;

struct FlagValues {
  std::string config_file;
  std::string data_dir;
  std::string out;
  std::string pca;
  std::vector<std::string> pca_grid;
  harstack::RngSeed seed = 0;
  int k = 0;
  int repeats = 0;
  double split_ratio = 0.0;
  int estimators = 0;
  unsigned workers = 0;
  bool sweep_cv = false;
  std::vector<std::string> params;
  std::vector<std::string> meta_params;
};

struct Options {
  CLI::Option* data_dir;
  CLI::Option* pca;
  CLI::Option* seed;
  CLI::Option* k;
  CLI::Option* repeats;
  CLI::Option* split_ratio;
  CLI::Option* workers;
  CLI::Option* estimators = nullptr;
  CLI::Option* pca_grid = nullptr;
  CLI::Option* sweep_cv = nullptr;
};

Options add_common(CLI::App& cmd, FlagValues& v) {
  Options o;
  cmd.add_option("--config", v.config_file, "JSON config file (flags override it)");
  o.data_dir = cmd.add_option("--data-dir", v.data_dir, "UCI HAR dataset directory (default: $HAR_DATA_DIR)");
  cmd.add_option("--out", v.out, "Directory for the JSON report and CSV files (default: JSON on stdout)");
  o.pca = cmd.add_option("--pca", v.pca, "PCA components, or 'none' for raw features");
  o.seed = cmd.add_option("--seed", v.seed, "Random seed");
  o.k = cmd.add_option("--k", v.k, "Cross-validation folds");
  o.repeats = cmd.add_option("--repeats", v.repeats, "Cross-validation repeats (0 disables CV)");
  o.split_ratio = cmd.add_option("--split-ratio", v.split_ratio, "Stack D1 fraction");
  o.workers = cmd.add_option("--workers", v.workers, "Worker threads");
  cmd.add_option("--param", v.params, "Hyperparameter override kind.key=value, e.g. extra_trees.max_depth=4");
  cmd.add_option("--meta-param", v.meta_params, "Meta-learner override key=value, e.g. l1_lambda=1e-4");
  return o;
}

std::pair<std::string, double> split_assignment(const std::string& text) {
  auto eq = text.find('=');
  if (eq == std::string::npos) throw harstack::ValidationError("expected key=value, got '" + text + "'");
  try {
    std::size_t used = 0;
    double value = std::stod(text.substr(eq + 1), &used);
    if (used != text.size() - eq - 1) throw std::invalid_argument("trailing characters");
    return {text.substr(0, eq), value};
  } catch (const std::logic_error&) {
    throw harstack::ValidationError("non-numeric value in '" + text + "'");
  }
}

ExperimentConfig resolve_config(const FlagValues& v, const Options& o, const std::string& command) {
  ExperimentConfig config;
  config.workers = harstack::default_workers();
  if (command == "pca-sweep") config.repeats = 0;
  if (const char* env = std::getenv("HAR_DATA_DIR")) config.data_dir = env;

  if (!v.config_file.empty()) {
    std::ifstream in(v.config_file);
    if (!in) throw harstack::NotFoundError("config file not found: " + v.config_file);
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw harstack::ParseError("config file " + v.config_file + ": " + e.what());
    }
    harstack::apply_config_json(config, doc);
  }

  if (o.data_dir->count()) config.data_dir = v.data_dir;
  if (o.pca->count()) config.pca = harstack::parse_pca(v.pca);
  if (o.seed->count()) config.seed = v.seed;
  if (o.k->count()) config.k = v.k;
  if (o.repeats->count()) config.repeats = v.repeats;
  if (o.split_ratio->count()) config.split_ratio = v.split_ratio;
  if (o.workers->count()) config.workers = std::max(1u, v.workers);
  if (o.estimators && o.estimators->count()) config.forest_estimators = v.estimators;
  if (o.sweep_cv && o.sweep_cv->count()) config.sweep_cv = true;
  if (o.pca_grid && o.pca_grid->count()) {
    config.pca_grid.clear();
    for (const auto& s : v.pca_grid) config.pca_grid.push_back(harstack::parse_pca(s));
  } else if (command == "pca-sweep" && o.pca->count()) {
    config.pca_grid = {config.pca};
  }
  for (const auto& p : v.params) {
    auto [key, value] = split_assignment(p);
    auto dot = key.find('.');
    if (dot == std::string::npos) throw harstack::ValidationError("--param expects kind.key=value, got '" + p + "'");
    std::string kind = key.substr(0, dot);
    const auto spec = harstack::LearnerSpec::defaults(harstack::parse_learner_kind(kind));
    harstack::validate(spec.with(key.substr(dot + 1), value));
    config.models[kind][key.substr(dot + 1)] = value;
  }
  for (const auto& p : v.meta_params) {
    auto [key, value] = split_assignment(p);
    config.meta[key] = value;
  }
  if (config.k < 2 && config.repeats > 0) throw harstack::ValidationError("--k must be at least 2");
  return config;
}

std::string escape_json(const std::string& text) { return nlohmann::json(text).dump(); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Ensemble classifiers for the UCI HAR dataset"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(harstack::kToolName) + " " + harstack::kToolVersion);

  FlagValues sweep_values;
  FlagValues forest_values;
  FlagValues stack_values;

  auto* sweep = app.add_subcommand("pca-sweep", "Accuracy grid of every model under PCA 200 / 400 / none");
  Options sweep_opts = add_common(*sweep, sweep_values);
  sweep_opts.pca_grid = sweep->add_option("--pca-grid", sweep_values.pca_grid, "PCA settings to sweep");
  sweep_opts.sweep_cv = sweep->add_flag("--cv", sweep_values.sweep_cv, "Also cross-validate every cell");

  auto* forests = app.add_subcommand("compare-forests", "Random forest vs extra trees, with and without PCA");
  Options forest_opts = add_common(*forests, forest_values);
  forest_opts.estimators = forests->add_option("--estimators", forest_values.estimators, "Trees per forest");

  auto* stack = app.add_subcommand("stack", "Train and evaluate the stacked classifier");
  Options stack_opts = add_common(*stack, stack_values);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "{\"error\":\"usage\",\"message\":" << escape_json(e.what()) << "}\n";
    return 2;
  }

  try {
    const FlagValues* values = nullptr;
    const Options* opts = nullptr;
    std::string command;
    if (sweep->parsed()) {
      values = &sweep_values, opts = &sweep_opts, command = "pca-sweep";
    } else if (forests->parsed()) {
      values = &forest_values, opts = &forest_opts, command = "compare-forests";
    } else {
      values = &stack_values, opts = &stack_opts, command = "stack";
    }
    ExperimentConfig config = resolve_config(*values, *opts, command);
    auto [train, test] = harstack::load_har(config);

    harstack::ReportBundle bundle;
    if (command == "pca-sweep") {
      bundle = harstack::cmd_pca_sweep(config, train, test);
    } else if (command == "compare-forests") {
      bundle = harstack::cmd_compare_forests(config, train, test);
    } else {
      bundle = harstack::cmd_stack(config, train, test);
    }

    if (values->out.empty()) {
      std::cout << bundle.to_json().dump(2) << '\n';
    } else {
      harstack::write_bundle(bundle, values->out);
    }
    return 0;
  } catch (const harstack::Error& e) {
    std::cerr << "{\"error\":\"" << e.kind() << "\",\"message\":" << escape_json(e.what()) << "}\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "{\"error\":\"internal\",\"message\":" << escape_json(e.what()) << "}\n";
    return 1;
  }
}
