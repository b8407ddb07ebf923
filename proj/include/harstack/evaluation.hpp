#pragma once

#include "harstack/core.hpp"
#include "harstack/har_data.hpp"

#include <optional>
#include <string>
#include <vector>

namespace harstack {

struct CVReport {
  std::vector<double> fold_scores;  // index = repeat * k + fold
  double mean = 0.0;
  /// Population variance (divide by the number of folds).
  double variance = 0.0;
  RngSeed seed = 0;
  int k = 0;
  int repeats = 0;
};

/// Fold id in [0, k) for every sample. Each class is shuffled and dealt
/// round-robin, continuing the deal across classes so fold sizes stay level.
std::vector<int> stratified_kfold(std::span<const ClassLabel> y, int n_classes, int k, RngSeed seed);

/// Repeat r re-partitions with stream (seed, r); each fold score is the test
/// accuracy of a fresh fit on the remaining k - 1 folds.
CVReport repeated_kfold_cv(const Learner& learner, const Matrix& X, const Labels& y, int k, int repeats, RngSeed seed,
                           int n_classes = 0, unsigned workers = 1);

/// Rows are true classes, columns predictions.
struct ConfusionMatrix {
  int n_classes = 0;
  std::vector<std::size_t> counts;

  std::size_t operator()(int truth, int predicted) const {
    return counts[static_cast<std::size_t>(truth * n_classes + predicted)];
  }
  std::size_t total() const;
  std::size_t row_sum(int truth) const;
  std::size_t col_sum(int predicted) const;
};

ConfusionMatrix confusion_matrix(std::span<const ClassLabel> y_true, std::span<const ClassLabel> y_pred,
                                 int n_classes = 0);

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
};

struct ClassificationReport {
  std::vector<ClassMetrics> per_class;
  double accuracy = 0.0;
  ClassMetrics macro;
  ClassMetrics weighted;
};

ClassificationReport classification_report(const ConfusionMatrix& cm);

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
};

struct ClassRoc {
  std::vector<RocPoint> points;
  /// Missing when the class has no positives or no negatives in y_true.
  std::optional<double> auc;
};

struct RocCurve {
  std::vector<ClassRoc> per_class;
  std::optional<double> macro_auc;
};

/// One-vs-rest ROC per score column: thresholds at every distinct score (plus
/// a +inf sentinel giving (0,0)); tied scores move as one step; AUC by
/// trapezoid.
RocCurve roc_ovr(std::span<const ClassLabel> y_true, const Matrix& scores);

struct TimingReport {
  double fit_seconds = 0.0;
  double predict_seconds = 0.0;
  std::string model_label;
};

struct TimedRun {
  TimingReport timing;
  double accuracy = 0.0;
  Labels predictions;
  Matrix probabilities;
};

TimedRun timed_fit_predict(const Learner& learner, const Dataset& train, const Dataset& test, RngSeed seed);

}  // namespace harstack
