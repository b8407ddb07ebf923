#pragma once

#include "harstack/core.hpp"
#include "harstack/har_data.hpp"
#include "harstack/stacking.hpp"

#include <json.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace harstack {

inline constexpr const char* kToolName = "harstack";
inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr const char* kHarDownloadUrl =
    "https://archive.ics.uci.edu/dataset/240/human+activity+recognition+using+smartphones";

/// nullopt = raw features (reported as "False").
using PcaSetting = std::optional<Index>;

std::string pca_label(const PcaSetting& setting);
PcaSetting parse_pca(const std::string& text);

using HyperparamOverrides = std::map<std::string, std::map<std::string, double>>;

struct ExperimentConfig {
  std::filesystem::path data_dir;
  /// Reduction used by `stack`; compare-forests runs it and raw features.
  PcaSetting pca = 200;
  /// Columns of the pca-sweep grid.
  std::vector<PcaSetting> pca_grid{200, 400, std::nullopt};
  RngSeed seed = 42;
  int k = 10;
  int repeats = 10;
  double split_ratio = 0.5;
  /// Trees per forest in compare-forests.
  int forest_estimators = 200;
  /// Cross-validate every sweep cell as well (off by default: 8 x 3 x k x repeats fits).
  bool sweep_cv = false;
  unsigned workers = 1;
  /// Per-kind hyperparameter overrides on top of each command's roster.
  HyperparamOverrides models;
  std::map<std::string, double> meta;
};

/// Overlays keys present in `doc` onto `config`.
void apply_config_json(ExperimentConfig& config, const nlohmann::json& doc);
nlohmann::json config_to_json(const ExperimentConfig& config);

/// Report body (deterministic for a given config) plus timings kept apart so
/// bodies can be compared byte for byte.
struct ReportBundle {
  std::string command;
  nlohmann::json header;
  nlohmann::json results;
  nlohmann::json timings;
  /// CSV attachments by file name.
  std::map<std::string, std::string> csv;

  /// Header and results only.
  nlohmann::json body_json() const;
  nlohmann::json to_json() const;
};

/// Train and test splits, both transformed by a PCA fitted on train when
/// `setting` has a value.
struct PreparedData {
  Dataset train;
  Dataset test;
  std::optional<double> proportion_of_variance;
};

PreparedData prepare(const Dataset& train, const Dataset& test, const PcaSetting& setting);

/// Roster used for the pca-sweep grid, in report order.
std::vector<LearnerSpec> sweep_roster(const HyperparamOverrides& overrides = {});
std::vector<LearnerSpec> stack_roster(const HyperparamOverrides& overrides = {});
LearnerSpec meta_learner_spec(const std::map<std::string, double>& overrides = {});

ReportBundle cmd_pca_sweep(const ExperimentConfig& config, const Dataset& train, const Dataset& test);
ReportBundle cmd_compare_forests(const ExperimentConfig& config, const Dataset& train, const Dataset& test);
ReportBundle cmd_stack(const ExperimentConfig& config, const Dataset& train, const Dataset& test);

/// Loads both splits from config.data_dir.
std::pair<Dataset, Dataset> load_har(const ExperimentConfig& config);

/// Writes <command>.json (header + results), <command>_timings.json and the
/// CSV attachments into `dir`; dashes in the command become underscores.
void write_bundle(const ReportBundle& bundle, const std::filesystem::path& dir);

}  // namespace harstack
