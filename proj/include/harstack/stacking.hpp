#pragma once

#include "harstack/core.hpp"

#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace harstack {

enum class LearnerKind { logistic_ovr, linear_svm, gradient_boosting, extra_trees, knn, random_forest, bagging, cart };

std::string to_string(LearnerKind kind);
LearnerKind parse_learner_kind(const std::string& name);

/// A learner kind plus hyperparameter overrides. Recognised keys:
///   logistic_ovr       l1_lambda (default 1/n), max_iters, tol
///   linear_svm         C, epochs
///   gradient_boosting  n_estimators, learning_rate, max_depth
///   extra_trees, random_forest, bagging
///                      n_estimators, max_depth, candidate_features, min_leaf_samples
///   cart               max_depth, min_leaf_samples
///   knn                k
/// max_depth 0 means unlimited.
struct LearnerSpec {
  LearnerKind kind = LearnerKind::logistic_ovr;
  std::map<std::string, double> hyperparams;

  /// Kind with its stacking defaults filled in (LR one-vs-rest L1, SVM C=2,
  /// GB 50 stages at rate 0.2, ET 100 trees of depth 4).
  static LearnerSpec defaults(LearnerKind kind);

  LearnerSpec with(const std::string& key, double value) const;
  double get(const std::string& key, double fallback) const;
  std::string label() const;
};

/// Rejects keys the kind does not understand.
void validate(const LearnerSpec& spec);

Learner make_learner(const LearnerSpec& spec, unsigned workers = 1);

/// The four-model stack roster and the logistic meta-learner (l1 1e-4).
std::vector<LearnerSpec> default_stack_roster();
LearnerSpec default_meta_learner();

struct StackOptions {
  double split_ratio = 0.5;
  int levels = 2;
  unsigned workers = 1;
};

/// Row ids (into the training set) used for each stage of a stacked fit.
struct StackFitTrace {
  std::vector<std::size_t> base_rows;
  std::vector<std::size_t> meta_rows;
};

/// Two-level stacked generalisation: base learners fitted on part D1, the
/// meta-learner on their probability outputs over part D2.
class StackedModel final : public Classifier {
 public:
  StackedModel(std::vector<std::unique_ptr<Classifier>> base_models, std::unique_ptr<Classifier> meta_learner,
               double split_ratio, RngSeed seed);

  Matrix predict_proba(const Matrix& X) const override;
  int n_classes() const override { return meta_->n_classes(); }
  Index n_features() const override { return base_.front()->n_features(); }

  Matrix meta_features(const Matrix& X) const;
  std::size_t n_base() const { return base_.size(); }
  const Classifier& base(std::size_t t) const { return *base_[t]; }
  const Classifier& meta_learner() const { return *meta_; }
  double split_ratio() const { return split_ratio_; }
  RngSeed seed() const { return seed_; }

 private:
  std::vector<std::unique_ptr<Classifier>> base_;
  std::unique_ptr<Classifier> meta_;
  double split_ratio_;
  RngSeed seed_;
};

/// Horizontal concatenation of each model's probability rows, in model order.
Matrix meta_features(std::span<const Classifier* const> models, const Matrix& X);

StackedModel train_stacked(const Matrix& X, const Labels& y, std::span<const Learner> base, const Learner& meta,
                           const StackOptions& options, RngSeed seed, int n_classes = 0,
                           StackFitTrace* trace = nullptr);

StackedModel train_stacked(const Matrix& X, const Labels& y, std::span<const LearnerSpec> specs,
                           const LearnerSpec& meta_spec, const StackOptions& options, RngSeed seed, int n_classes = 0,
                           StackFitTrace* trace = nullptr);

Labels stacked_predict(const StackedModel& model, const Matrix& X);
Matrix stacked_predict_proba(const StackedModel& model, const Matrix& X);

/// Learner wrapping a whole stack, for cross-validating it like any model.
Learner make_stack_learner(std::vector<LearnerSpec> specs, LearnerSpec meta_spec, StackOptions options);

}  // namespace harstack
