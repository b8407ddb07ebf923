#include "harstack/stacking.hpp"

#include "harstack/base_learners.hpp"
#include "harstack/boosting.hpp"
#include "harstack/har_data.hpp"
#include "harstack/parallel.hpp"
#include "harstack/rng.hpp"
#include "harstack/tree_ensembles.hpp"

#include <cmath>
#include <optional>
#include <set>

namespace harstack {

namespace {

const std::map<LearnerKind, std::string>& kind_names() {
  static const std::map<LearnerKind, std::string> names{
      {LearnerKind::logistic_ovr, "logistic_ovr"},   {LearnerKind::linear_svm, "linear_svm"},
      {LearnerKind::gradient_boosting, "gradient_boosting"}, {LearnerKind::extra_trees, "extra_trees"},
      {LearnerKind::knn, "knn"},                     {LearnerKind::random_forest, "random_forest"},
      {LearnerKind::bagging, "bagging"},             {LearnerKind::cart, "cart"},
  };
  return names;
}

const std::set<std::string>& allowed_keys(LearnerKind kind) {
  static const std::set<std::string> logistic{"l1_lambda", "max_iters", "tol"};
  static const std::set<std::string> svm{"C", "epochs"};
  static const std::set<std::string> boosting{"n_estimators", "learning_rate", "max_depth"};
  static const std::set<std::string> forest{"n_estimators", "max_depth", "candidate_features", "min_leaf_samples"};
  static const std::set<std::string> cart{"max_depth", "min_leaf_samples"};
  static const std::set<std::string> knn{"k"};
  switch (kind) {
    case LearnerKind::logistic_ovr: return logistic;
    case LearnerKind::linear_svm: return svm;
    case LearnerKind::gradient_boosting: return boosting;
    case LearnerKind::extra_trees:
    case LearnerKind::random_forest:
    case LearnerKind::bagging: return forest;
    case LearnerKind::cart: return cart;
    case LearnerKind::knn: return knn;
  }
  return knn;
}

int as_count(const LearnerSpec& spec, const std::string& key, double fallback) {
  double v = spec.get(key, fallback);
  if (!(v >= 0.0) || v != std::floor(v)) throw ValidationError(key + " must be a non-negative integer");
  return static_cast<int>(v);
}

int as_depth(const LearnerSpec& spec, const std::string& key, int fallback) {
  int depth = as_count(spec, key, fallback == kUnlimitedDepth ? 0.0 : fallback);
  return depth == 0 ? kUnlimitedDepth : depth;
}

ForestParams forest_params(const LearnerSpec& spec, ForestKind kind, unsigned workers) {
  ForestParams p;
  p.kind = kind;
  p.n_estimators = as_count(spec, "n_estimators", 100);
  p.max_depth = as_depth(spec, "max_depth", kUnlimitedDepth);
  p.min_leaf_samples = static_cast<std::size_t>(as_count(spec, "min_leaf_samples", 1));
  if (spec.hyperparams.contains("candidate_features")) {
    p.candidate_features = static_cast<std::size_t>(as_count(spec, "candidate_features", 0));
  }
  p.workers = workers;
  return p;
}

}  // namespace

std::string to_string(LearnerKind kind) { return kind_names().at(kind); }

LearnerKind parse_learner_kind(const std::string& name) {
  for (const auto& [kind, text] : kind_names()) {
    if (text == name) return kind;
  }
  throw ValidationError("unknown learner kind '" + name + "'");
}

LearnerSpec LearnerSpec::defaults(LearnerKind kind) {
  LearnerSpec spec{kind, {}};
  switch (kind) {
    case LearnerKind::linear_svm: spec.hyperparams = {{"C", 2.0}}; break;
    case LearnerKind::gradient_boosting:
      spec.hyperparams = {{"n_estimators", 50}, {"learning_rate", 0.2}, {"max_depth", 3}};
      break;
    case LearnerKind::extra_trees: spec.hyperparams = {{"n_estimators", 100}, {"max_depth", 4}}; break;
    case LearnerKind::random_forest:
    case LearnerKind::bagging: spec.hyperparams = {{"n_estimators", 100}}; break;
    case LearnerKind::knn: spec.hyperparams = {{"k", kDefaultKnnNeighbors}}; break;
    case LearnerKind::logistic_ovr:
    case LearnerKind::cart: break;
  }
  return spec;
}

LearnerSpec LearnerSpec::with(const std::string& key, double value) const {
  LearnerSpec copy = *this;
  copy.hyperparams[key] = value;
  return copy;
}

double LearnerSpec::get(const std::string& key, double fallback) const {
  auto it = hyperparams.find(key);
  return it == hyperparams.end() ? fallback : it->second;
}

std::string LearnerSpec::label() const { return to_string(kind); }

void validate(const LearnerSpec& spec) {
  const auto& allowed = allowed_keys(spec.kind);
  for (const auto& [key, value] : spec.hyperparams) {
    if (!allowed.contains(key)) throw ValidationError(to_string(spec.kind) + " has no hyperparameter '" + key + "'");
    if (!std::isfinite(value)) throw ValidationError(key + " must be finite");
  }
}

Learner make_learner(const LearnerSpec& spec, unsigned workers) {
  validate(spec);
  TrainFn fit;
  switch (spec.kind) {
    case LearnerKind::logistic_ovr: {
      LogRegParams p;
      if (spec.hyperparams.contains("l1_lambda")) p.l1_lambda = spec.get("l1_lambda", 0.0);
      p.max_iters = as_count(spec, "max_iters", p.max_iters);
      p.tol = spec.get("tol", p.tol);
      p.workers = workers;
      fit = [p](const Matrix& X, const Labels& y, int k, RngSeed) -> std::unique_ptr<Classifier> {
        return std::make_unique<LinearOvRModel>(train_logreg_ovr(X, y, p, k));
      };
      break;
    }
    case LearnerKind::linear_svm: {
      SvmParams p;
      p.C = spec.get("C", p.C);
      p.epochs = as_count(spec, "epochs", p.epochs);
      p.workers = workers;
      fit = [p](const Matrix& X, const Labels& y, int k, RngSeed seed) -> std::unique_ptr<Classifier> {
        return std::make_unique<LinearOvRModel>(train_linear_svm_ovr(X, y, p, seed, k));
      };
      break;
    }
    case LearnerKind::gradient_boosting: {
      GradientBoostingParams p;
      p.n_estimators = as_count(spec, "n_estimators", p.n_estimators);
      p.learning_rate = spec.get("learning_rate", p.learning_rate);
      p.max_depth = as_count(spec, "max_depth", p.max_depth);
      p.workers = workers;
      fit = [p](const Matrix& X, const Labels& y, int k, RngSeed) -> std::unique_ptr<Classifier> {
        return std::make_unique<GradientBoostingModel>(train_gradient_boosting(X, y, p, k));
      };
      break;
    }
    case LearnerKind::extra_trees:
    case LearnerKind::random_forest:
    case LearnerKind::bagging: {
      ForestKind kind = spec.kind == LearnerKind::extra_trees     ? ForestKind::extra_trees
                        : spec.kind == LearnerKind::random_forest ? ForestKind::random_forest
                                                                   : ForestKind::bagging;
      ForestParams p = forest_params(spec, kind, workers);
      fit = [p](const Matrix& X, const Labels& y, int k, RngSeed seed) -> std::unique_ptr<Classifier> {
        return std::make_unique<ForestModel>(train_forest(X, y, p, seed, k));
      };
      break;
    }
    case LearnerKind::cart: {
      TreeParams p;
      p.max_depth = as_depth(spec, "max_depth", kUnlimitedDepth);
      p.min_leaf_samples = static_cast<std::size_t>(as_count(spec, "min_leaf_samples", 1));
      fit = [p](const Matrix& X, const Labels& y, int k, RngSeed seed) -> std::unique_ptr<Classifier> {
        return std::make_unique<DecisionTree>(train_cart(X, y, p, seed, k));
      };
      break;
    }
    case LearnerKind::knn: {
      int neighbors = as_count(spec, "k", kDefaultKnnNeighbors);
      fit = [neighbors](const Matrix& X, const Labels& y, int k, RngSeed) -> std::unique_ptr<Classifier> {
        return std::make_unique<KnnModel>(train_knn(X, y, neighbors, k));
      };
      break;
    }
  }
  return Learner{spec.label(), std::move(fit)};
}

std::vector<LearnerSpec> default_stack_roster() {
  return {LearnerSpec::defaults(LearnerKind::logistic_ovr), LearnerSpec::defaults(LearnerKind::linear_svm),
          LearnerSpec::defaults(LearnerKind::gradient_boosting), LearnerSpec::defaults(LearnerKind::extra_trees)};
}

LearnerSpec default_meta_learner() { return LearnerSpec::defaults(LearnerKind::logistic_ovr).with("l1_lambda", 1e-4); }

StackedModel::StackedModel(std::vector<std::unique_ptr<Classifier>> base_models, std::unique_ptr<Classifier> meta_learner,
                           double split_ratio, RngSeed seed)
    : base_(std::move(base_models)), meta_(std::move(meta_learner)), split_ratio_(split_ratio), seed_(seed) {
  if (base_.empty()) throw ValidationError("stack needs at least one base learner");
  if (!meta_) throw ValidationError("stack needs a meta-learner");
  const Index width = static_cast<Index>(base_.size()) * meta_->n_classes();
  if (meta_->n_features() != width) {
    throw ShapeError("meta-learner expects " + std::to_string(meta_->n_features()) + " inputs, stack provides " +
                     std::to_string(width));
  }
}

Matrix StackedModel::meta_features(const Matrix& X) const {
  check_features(X);
  std::vector<const Classifier*> models;
  for (const auto& m : base_) models.push_back(m.get());
  return harstack::meta_features(models, X);
}

Matrix StackedModel::predict_proba(const Matrix& X) const {
  Matrix meta = meta_features(X);
  if (meta.cols() != meta_->n_features()) throw ShapeError("meta-feature width mismatch");
  return meta_->predict_proba(meta);
}

Matrix meta_features(std::span<const Classifier* const> models, const Matrix& X) {
  if (models.empty()) throw ValidationError("no base models");
  const int n_classes = models.front()->n_classes();
  Matrix out(X.rows(), static_cast<Index>(models.size()) * n_classes);
  for (std::size_t t = 0; t < models.size(); ++t) {
    if (models[t]->n_classes() != n_classes) throw ShapeError("base models disagree on class count");
    Matrix block = models[t]->predict_proba(X);
    if (block.cols() != n_classes || block.rows() != X.rows()) throw ShapeError("base model output has wrong shape");
    out.middleCols(static_cast<Index>(t) * n_classes, n_classes) = block;
  }
  return out;
}

StackedModel train_stacked(const Matrix& X, const Labels& y, std::span<const Learner> base, const Learner& meta,
                           const StackOptions& options, RngSeed seed, int n_classes, StackFitTrace* trace) {
  if (options.levels != 2) {
    throw ValidationError("stacking supports exactly two levels, got " + std::to_string(options.levels));
  }
  if (base.empty()) throw ValidationError("stack needs at least one base learner");
  if (!(options.split_ratio > 0.0 && options.split_ratio < 1.0)) {
    throw ValidationError("split_ratio must lie strictly between 0 and 1");
  }
  if (static_cast<std::size_t>(X.rows()) != y.size()) throw ShapeError("X rows and label count differ");
  const int inferred = infer_n_classes(y);
  if (n_classes == 0) n_classes = inferred;
  if (inferred > n_classes) throw ValidationError("label exceeds declared class count");
  auto counts = class_counts(y, n_classes);
  if (std::count_if(counts.begin(), counts.end(), [](std::size_t c) { return c > 0; }) < 2) {
    throw ValidationError("training labels contain fewer than 2 classes");
  }

  std::vector<std::size_t> d1;
  std::vector<std::size_t> d2;
  stratified_partition(y, n_classes, options.split_ratio, derive_key(seed, "stack-split", 0), d1, d2);
  const Matrix X1 = take_rows(X, d1);
  const Labels y1 = take_labels(y, d1);
  const Matrix X2 = take_rows(X, d2);
  const Labels y2 = take_labels(y, d2);

  std::vector<std::unique_ptr<Classifier>> fitted(base.size());
  parallel_for(base.size(), options.workers, [&](std::size_t t) {
    try {
      fitted[t] = base[t].fit(X1, y1, n_classes, derive_key(seed, "stack-base", t));
    } catch (const std::exception& e) {
      throw ValidationError("base learner " + std::to_string(t) + " (" + base[t].name + "): " + e.what());
    }
    if (!fitted[t] || fitted[t]->n_classes() != n_classes) {
      throw ShapeError("base learner " + std::to_string(t) + " (" + base[t].name + ") returned the wrong class count");
    }
  });

  std::vector<const Classifier*> models;
  for (const auto& m : fitted) models.push_back(m.get());
  const Matrix meta_inputs = meta_features(models, X2);
  std::unique_ptr<Classifier> g;
  try {
    g = meta.fit(meta_inputs, y2, n_classes, derive_key(seed, "stack-meta", 0));
  } catch (const std::exception& e) {
    throw ValidationError("meta-learner (" + meta.name + "): " + e.what());
  }
  if (trace) {
    trace->base_rows = d1;
    trace->meta_rows = d2;
  }
  return StackedModel(std::move(fitted), std::move(g), options.split_ratio, seed);
}

StackedModel train_stacked(const Matrix& X, const Labels& y, std::span<const LearnerSpec> specs,
                           const LearnerSpec& meta_spec, const StackOptions& options, RngSeed seed, int n_classes,
                           StackFitTrace* trace) {
  std::vector<Learner> base;
  for (const auto& spec : specs) base.push_back(make_learner(spec, 1));
  return train_stacked(X, y, base, make_learner(meta_spec, 1), options, seed, n_classes, trace);
}

Labels stacked_predict(const StackedModel& model, const Matrix& X) { return predict_labels(model, X); }

Matrix stacked_predict_proba(const StackedModel& model, const Matrix& X) { return model.predict_proba(X); }

Learner make_stack_learner(std::vector<LearnerSpec> specs, LearnerSpec meta_spec, StackOptions options) {
  for (const auto& spec : specs) validate(spec);
  validate(meta_spec);
  TrainFn fit = [specs = std::move(specs), meta_spec = std::move(meta_spec), options](
                    const Matrix& X, const Labels& y, int k, RngSeed seed) -> std::unique_ptr<Classifier> {
    return std::make_unique<StackedModel>(train_stacked(X, y, specs, meta_spec, options, seed, k));
  };
  return Learner{"stack", std::move(fit)};
}

}  // namespace harstack
