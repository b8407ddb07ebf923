#include "harstack/experiments.hpp"

#include "harstack/decomposition.hpp"
#include "harstack/evaluation.hpp"
#include "harstack/rng.hpp"

#include <algorithm>
#include <set>

#include <fstream>
#include <sstream>

namespace harstack {

using nlohmann::json;

std::string pca_label(const PcaSetting& setting) { return setting ? std::to_string(*setting) : "False"; }

PcaSetting parse_pca(const std::string& text) {
  if (text == "none" || text == "None" || text == "false" || text == "False" || text == "off") return std::nullopt;
  std::size_t used = 0;
  long long value = 0;
  try {
    value = std::stoll(text, &used);
  } catch (const std::exception&) {
    throw ValidationError("invalid PCA setting '" + text + "' (expected a component count or 'none')");
  }
  if (used != text.size() || value < 1) {
    throw ValidationError("invalid PCA setting '" + text + "' (expected a component count or 'none')");
  }
  return static_cast<Index>(value);
}

namespace {

PcaSetting pca_from_json(const json& v) {
  if (v.is_null() || (v.is_boolean() && !v.get<bool>())) return std::nullopt;
  if (v.is_number_integer()) return parse_pca(std::to_string(v.get<long long>()));
  if (v.is_string()) return parse_pca(v.get<std::string>());
  throw ValidationError("pca must be an integer, \"none\", false or null");
}

json pca_to_json(const PcaSetting& setting) { return setting ? json(*setting) : json("none"); }

void merge_overrides(HyperparamOverrides& into, const json& doc) {
  if (!doc.is_object()) throw ValidationError("models must map learner kinds to hyperparameter objects");
  for (const auto& [kind, params] : doc.items()) {
    const LearnerKind parsed = parse_learner_kind(kind);
    if (!params.is_object()) throw ValidationError("hyperparameters for " + kind + " must be an object");
    for (const auto& [key, value] : params.items()) {
      if (!value.is_number()) throw ValidationError(kind + "." + key + " must be numeric");
      validate(LearnerSpec::defaults(parsed).with(key, value.get<double>()));
      into[kind][key] = value.get<double>();
    }
  }
}

LearnerSpec apply_overrides(LearnerSpec spec, const HyperparamOverrides& overrides) {
  auto it = overrides.find(to_string(spec.kind));
  if (it != overrides.end()) {
    for (const auto& [key, value] : it->second) spec.hyperparams[key] = value;
  }
  validate(spec);
  return spec;
}

json spec_json(const LearnerSpec& spec) {
  json params = json::object();
  for (const auto& [key, value] : spec.hyperparams) params[key] = value;
  return json{{"kind", to_string(spec.kind)}, {"hyperparams", params}};
}

json cv_json(const CVReport& cv) {
  return json{{"k", cv.k},
              {"repeats", cv.repeats},
              {"seed", cv.seed},
              {"mean", cv.mean},
              {"variance", cv.variance},
              {"fold_scores", cv.fold_scores}};
}

json timing_json(const TimingReport& t) {
  return json{{"model", t.model_label}, {"fit_seconds", t.fit_seconds}, {"predict_seconds", t.predict_seconds}};
}

json metrics_json(const ClassMetrics& m) {
  return json{{"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}, {"support", m.support}};
}

ReportBundle start_bundle(const std::string& command, const ExperimentConfig& config) {
  ReportBundle bundle;
  bundle.command = command;
  bundle.header = json{{"tool", kToolName},
                       {"version", kToolVersion},
                       {"command", command},
                       {"seed", config.seed},
                       {"config", config_to_json(config)}};
  bundle.results = json::object();
  bundle.timings = json::object();
  return bundle;
}

std::string csv_number(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

}  // namespace

void apply_config_json(ExperimentConfig& config, const json& doc) {
  if (!doc.is_object()) throw ValidationError("config file must hold a JSON object");
  static const std::set<std::string> known{"data_dir", "pca",     "pca_grid",   "seed",      "k",    "repeats",
                                           "split_ratio", "estimators", "sweep_cv", "workers", "models", "meta"};
  for (const auto& [key, value] : doc.items()) {
    if (!known.contains(key)) throw ValidationError("unknown config key '" + key + "'");
  }
  try {
    if (doc.contains("data_dir")) config.data_dir = doc["data_dir"].get<std::string>();
    if (doc.contains("pca")) config.pca = pca_from_json(doc["pca"]);
    if (doc.contains("pca_grid")) {
      config.pca_grid.clear();
      for (const auto& v : doc["pca_grid"]) config.pca_grid.push_back(pca_from_json(v));
    }
    if (doc.contains("seed")) config.seed = doc["seed"].get<RngSeed>();
    if (doc.contains("k")) config.k = doc["k"].get<int>();
    if (doc.contains("repeats")) config.repeats = doc["repeats"].get<int>();
    if (doc.contains("split_ratio")) config.split_ratio = doc["split_ratio"].get<double>();
    if (doc.contains("estimators")) config.forest_estimators = doc["estimators"].get<int>();
    if (doc.contains("sweep_cv")) config.sweep_cv = doc["sweep_cv"].get<bool>();
    if (doc.contains("workers")) config.workers = doc["workers"].get<unsigned>();
    if (doc.contains("models")) merge_overrides(config.models, doc["models"]);
    if (doc.contains("meta")) {
      for (const auto& [key, value] : doc["meta"].items()) config.meta[key] = value.get<double>();
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
}

json config_to_json(const ExperimentConfig& config) {
  json grid = json::array();
  for (const auto& s : config.pca_grid) grid.push_back(pca_to_json(s));
  json models = json::object();
  for (const auto& [kind, params] : config.models) models[kind] = params;
  // workers is left out: it never changes results.
  return json{{"data_dir", config.data_dir.string()},
              {"pca", pca_to_json(config.pca)},
              {"pca_grid", grid},
              {"seed", config.seed},
              {"k", config.k},
              {"repeats", config.repeats},
              {"split_ratio", config.split_ratio},
              {"estimators", config.forest_estimators},
              {"sweep_cv", config.sweep_cv},
              {"models", models},
              {"meta", config.meta}};
}

json ReportBundle::body_json() const { return json{{"header", header}, {"results", results}}; }

json ReportBundle::to_json() const {
  return json{{"header", header}, {"results", results}, {"timings", timings}};
}

PreparedData prepare(const Dataset& train, const Dataset& test, const PcaSetting& setting) {
  if (!setting) return PreparedData{train, test, std::nullopt};
  PcaModel pca = fit_pca(train.X, *setting);
  PreparedData out;
  out.train = Dataset{pca_transform(pca, train.X), train.y, train.class_names};
  out.test = Dataset{pca_transform(pca, test.X), test.y, test.class_names};
  out.proportion_of_variance = proportion_of_variance(pca).back();
  return out;
}

std::vector<LearnerSpec> sweep_roster(const HyperparamOverrides& overrides) {
  std::vector<LearnerSpec> roster{
      LearnerSpec::defaults(LearnerKind::bagging),
      LearnerSpec::defaults(LearnerKind::cart),
      // Fully grown trees here; the depth-4 setting belongs to the stack roster.
      LearnerSpec::defaults(LearnerKind::extra_trees).with("max_depth", 0),
      LearnerSpec::defaults(LearnerKind::gradient_boosting),
      LearnerSpec::defaults(LearnerKind::knn),
      LearnerSpec::defaults(LearnerKind::logistic_ovr),
      LearnerSpec::defaults(LearnerKind::random_forest),
      LearnerSpec::defaults(LearnerKind::linear_svm),
  };
  for (auto& spec : roster) spec = apply_overrides(spec, overrides);
  return roster;
}

std::vector<LearnerSpec> stack_roster(const HyperparamOverrides& overrides) {
  auto roster = default_stack_roster();
  for (auto& spec : roster) spec = apply_overrides(spec, overrides);
  return roster;
}

LearnerSpec meta_learner_spec(const std::map<std::string, double>& overrides) {
  LearnerSpec spec = default_meta_learner();
  for (const auto& [key, value] : overrides) spec.hyperparams[key] = value;
  validate(spec);
  return spec;
}

std::pair<Dataset, Dataset> load_har(const ExperimentConfig& config) {
  if (config.data_dir.empty()) {
    throw NotFoundError(std::string("no data directory given; download the UCI HAR dataset from ") + kHarDownloadUrl +
                        ", unzip it and pass --data-dir or set HAR_DATA_DIR");
  }
  try {
    return {load_har_split(config.data_dir, HarSplit::train), load_har_split(config.data_dir, HarSplit::test)};
  } catch (const NotFoundError& e) {
    throw NotFoundError(std::string(e.what()) + "; download the UCI HAR dataset from " + kHarDownloadUrl +
                        " and point --data-dir at the unzipped 'UCI HAR Dataset' directory");
  }
}

ReportBundle cmd_pca_sweep(const ExperimentConfig& config, const Dataset& train, const Dataset& test) {
  ReportBundle bundle = start_bundle("pca-sweep", config);
  const auto roster = sweep_roster(config.models);
  json cells = json::array();
  json pov = json::object();
  json timings = json::array();
  std::string csv = "model,pca,accuracy\n";

  for (const auto& setting : config.pca_grid) {
    const PreparedData data = prepare(train, test, setting);
    if (data.proportion_of_variance) pov[pca_label(setting)] = *data.proportion_of_variance;
    for (std::size_t m = 0; m < roster.size(); ++m) {
      const auto& spec = roster[m];
      const RngSeed seed = derive_key(config.seed, "sweep-" + spec.label(), 0);
      TimedRun run = timed_fit_predict(make_learner(spec, config.workers), data.train, data.test, seed);
      json cell{{"model", spec.label()}, {"pca", pca_label(setting)}, {"accuracy", run.accuracy}, {"spec", spec_json(spec)}};
      if (config.sweep_cv) {
        CVReport cv = repeated_kfold_cv(make_learner(spec, 1), data.train.X, data.train.y, config.k, config.repeats,
                                        seed, train.n_classes(), config.workers);
        cell["cv"] = cv_json(cv);
      }
      cells.push_back(cell);
      json t = timing_json(run.timing);
      t["pca"] = pca_label(setting);
      timings.push_back(t);
      csv += spec.label() + "," + pca_label(setting) + "," + csv_number(run.accuracy) + "\n";
    }
    cells.push_back(json{{"model", "svm_rbf"}, {"pca", pca_label(setting)}, {"accuracy", "not-implemented"}});
    csv += "svm_rbf," + pca_label(setting) + ",not-implemented\n";
  }
  bundle.results = json{{"grid", cells}, {"proportion_of_variance", pov}};
  bundle.timings = json{{"runs", timings}};
  bundle.csv["pca_sweep.csv"] = csv;
  return bundle;
}

ReportBundle cmd_compare_forests(const ExperimentConfig& config, const Dataset& train, const Dataset& test) {
  ReportBundle bundle = start_bundle("compare-forests", config);
  json settings = json::array();
  json timing_rows = json::array();
  bool faster_everywhere = true;
  bool variance_ordering = true;

  std::vector<PcaSetting> grid{config.pca};
  if (config.pca) grid.push_back(std::nullopt);
  for (const PcaSetting& setting : grid) {
    const PreparedData data = prepare(train, test, setting);
    json row{{"pca", pca_label(setting)}};
    json timing_row{{"pca", pca_label(setting)}};
    double variance[2] = {0.0, 0.0};
    double fit_seconds[2] = {0.0, 0.0};
    int slot = 0;
    for (LearnerKind kind : {LearnerKind::random_forest, LearnerKind::extra_trees}) {
      LearnerSpec spec = LearnerSpec::defaults(kind)
                             .with("n_estimators", config.forest_estimators)
                             .with("max_depth", 0);
      spec = apply_overrides(spec, config.models);
      const RngSeed seed = derive_key(config.seed, "compare-" + spec.label(), 0);
      TimedRun run = timed_fit_predict(make_learner(spec, config.workers), data.train, data.test, seed);
      json entry{{"accuracy", run.accuracy}, {"spec", spec_json(spec)}};
      if (config.repeats > 0) {
        CVReport cv = repeated_kfold_cv(make_learner(spec, 1), data.train.X, data.train.y, config.k, config.repeats,
                                        seed, train.n_classes(), config.workers);
        entry["cv"] = cv_json(cv);
        variance[slot] = cv.variance;
      }
      row[spec.label()] = entry;
      timing_row[spec.label()] = timing_json(run.timing);
      fit_seconds[slot] = run.timing.fit_seconds;
      ++slot;
    }
    if (config.repeats > 0) {
      row["et_variance_within_rf_plus_0.001"] = variance[1] <= variance[0] + 0.001;
      variance_ordering = variance_ordering && variance[1] <= variance[0] + 0.001;
    }
    timing_row["et_fit_faster"] = fit_seconds[1] < fit_seconds[0];
    faster_everywhere = faster_everywhere && fit_seconds[1] < fit_seconds[0];
    settings.push_back(row);
    timing_rows.push_back(timing_row);
  }
  bundle.results = json{{"settings", settings}};
  if (config.repeats > 0) bundle.results["et_variance_ordering_holds"] = variance_ordering;
  bundle.timings = json{{"settings", timing_rows}, {"et_fit_faster_everywhere", faster_everywhere}};
  return bundle;
}

ReportBundle cmd_stack(const ExperimentConfig& config, const Dataset& train, const Dataset& test) {
  ReportBundle bundle = start_bundle("stack", config);
  const PreparedData data = prepare(train, test, config.pca);
  const auto roster = stack_roster(config.models);
  const LearnerSpec meta = meta_learner_spec(config.meta);
  StackOptions options{config.split_ratio, 2, config.workers};
  const Learner stack = make_stack_learner(roster, meta, options);

  TimedRun run = timed_fit_predict(stack, data.train, data.test, config.seed);
  const int n_classes = train.n_classes();
  ConfusionMatrix cm = confusion_matrix(data.test.y, run.predictions, n_classes);
  ClassificationReport report = classification_report(cm);
  RocCurve roc = roc_ovr(data.test.y, run.probabilities);

  json matrix = json::array();
  for (int i = 0; i < n_classes; ++i) {
    json row = json::array();
    for (int j = 0; j < n_classes; ++j) row.push_back(cm(i, j));
    matrix.push_back(row);
  }
  json per_class = json::array();
  json aucs = json::object();
  std::string roc_csv = "class,fpr,tpr\n";
  for (int c = 0; c < n_classes; ++c) {
    const std::string& name = train.class_names[static_cast<std::size_t>(c)];
    json m = metrics_json(report.per_class[static_cast<std::size_t>(c)]);
    m["class"] = name;
    per_class.push_back(m);
    const auto& curve = roc.per_class[static_cast<std::size_t>(c)];
    aucs[name] = curve.auc ? json(*curve.auc) : json(nullptr);
    for (const auto& p : curve.points) roc_csv += name + "," + csv_number(p.fpr) + "," + csv_number(p.tpr) + "\n";
  }
  json base = json::array();
  for (const auto& spec : roster) base.push_back(spec_json(spec));

  bundle.results = json{
      {"stack", {{"base_learners", base}, {"meta_learner", spec_json(meta)}, {"split_ratio", config.split_ratio}}},
      {"pca", pca_label(config.pca)},
      {"test_accuracy", run.accuracy},
      {"confusion_matrix", {{"classes", train.class_names}, {"counts", matrix}}},
      {"classification_report",
       {{"per_class", per_class},
        {"accuracy", report.accuracy},
        {"macro_avg", metrics_json(report.macro)},
        {"weighted_avg", metrics_json(report.weighted)}}},
      {"roc", {{"auc", aucs}, {"macro_auc", roc.macro_auc ? json(*roc.macro_auc) : json(nullptr)}}},
  };
  if (data.proportion_of_variance) bundle.results["proportion_of_variance"] = *data.proportion_of_variance;
  if (config.repeats > 0) {
    Learner cv_stack = make_stack_learner(roster, meta, StackOptions{config.split_ratio, 2, 1});
    CVReport cv = repeated_kfold_cv(cv_stack, data.train.X, data.train.y, config.k, config.repeats, config.seed,
                                    n_classes, config.workers);
    bundle.results["cv"] = cv_json(cv);
  }
  bundle.timings = json{{"stack", timing_json(run.timing)}};
  bundle.csv["roc.csv"] = roc_csv;
  return bundle;
}

void write_bundle(const ReportBundle& bundle, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::string stem = bundle.command;
  std::replace(stem.begin(), stem.end(), '-', '_');
  {
    std::ofstream out(dir / (stem + ".json"));
    if (!out) throw NotFoundError("cannot write report into " + dir.string());
    out << bundle.body_json().dump(2) << '\n';
  }
  {
    std::ofstream out(dir / (stem + "_timings.json"));
    out << bundle.timings.dump(2) << '\n';
  }
  for (const auto& [name, body] : bundle.csv) {
    std::ofstream out(dir / name);
    out << body;
  }
}

}  // namespace harstack
