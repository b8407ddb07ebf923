#include "doctest.h"

#include "harstack/evaluation.hpp"
#include "harstack/stacking.hpp"
#include "test_support.hpp"

#include <cmath>

using namespace harstack;
using harstack::testing::make_blobs;

namespace {

/// Pairwise-comparison AUC: P(score_pos > score_neg) + 0.5 P(tie).
double mann_whitney(const Labels& y, const Matrix& scores, int c) {
  double wins = 0.0;
  double pairs = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] != c) continue;
    for (std::size_t j = 0; j < y.size(); ++j) {
      if (y[j] == c) continue;
      const double a = scores(static_cast<Index>(i), c);
      const double b = scores(static_cast<Index>(j), c);
      wins += a > b ? 1.0 : (a == b ? 0.5 : 0.0);
      pairs += 1.0;
    }
  }
  return wins / pairs;
}

ConfusionMatrix from_rows(const std::vector<std::vector<std::size_t>>& rows) {
  ConfusionMatrix cm;
  cm.n_classes = static_cast<int>(rows.size());
  for (const auto& row : rows) cm.counts.insert(cm.counts.end(), row.begin(), row.end());
  return cm;
}

double round2(double v) { return std::round(v * 100.0) / 100.0; }

/// Fits nothing; predicts the label stored in column 0.
Learner oracle_learner() {
  class Reader final : public Classifier {
   public:
    Reader(int k, Index d) : k_(k), d_(d) {}
    Matrix predict_proba(const Matrix& X) const override {
      Matrix p = Matrix::Zero(X.rows(), k_);
      for (Index i = 0; i < X.rows(); ++i) p(i, static_cast<Index>(X(i, 0))) = 1.0;
      return p;
    }
    int n_classes() const override { return k_; }
    Index n_features() const override { return d_; }

   private:
    int k_;
    Index d_;
  };
  return {"oracle", [](const Matrix& X, const Labels&, int k, RngSeed) -> std::unique_ptr<Classifier> {
            return std::make_unique<Reader>(k, X.cols());
          }};
}

}  // namespace

TEST_CASE("stratified folds partition and balance every class") {
  Labels y;
  for (int c = 0; c < 3; ++c) y.insert(y.end(), static_cast<std::size_t>(23 + 7 * c), c);
  for (int k : {2, 5, 10}) {
    auto folds = stratified_kfold(y, 3, k, 4);
    REQUIRE(folds.size() == y.size());
    std::vector<std::vector<int>> per(static_cast<std::size_t>(k), std::vector<int>(3, 0));
    std::vector<int> sizes(static_cast<std::size_t>(k), 0);
    for (std::size_t i = 0; i < y.size(); ++i) {
      REQUIRE(folds[i] >= 0);
      REQUIRE(folds[i] < k);
      ++per[static_cast<std::size_t>(folds[i])][static_cast<std::size_t>(y[i])];
      ++sizes[static_cast<std::size_t>(folds[i])];
    }
    for (int c = 0; c < 3; ++c) {
      const double share = (23.0 + 7.0 * c) / k;
      for (int f = 0; f < k; ++f) CHECK(std::abs(per[static_cast<std::size_t>(f)][static_cast<std::size_t>(c)] - share) <= 1.0);
    }
    auto [lo, hi] = std::minmax_element(sizes.begin(), sizes.end());
    CHECK(*hi - *lo <= 1);
  }
  CHECK(stratified_kfold(y, 3, 5, 4) == stratified_kfold(y, 3, 5, 4));
  CHECK(stratified_kfold(y, 3, 5, 4) != stratified_kfold(y, 3, 5, 5));
  CHECK_THROWS_AS(stratified_kfold(y, 3, 1, 4), ValidationError);
  CHECK_THROWS_AS(stratified_kfold(y, 3, 24, 4), ValidationError);
}

TEST_CASE("cross-validation of an oracle scores perfectly") {
  Dataset d = make_blobs(12, 3, 2, 1.0, 1.0, 1);
  for (Index i = 0; i < d.X.rows(); ++i) d.X(i, 0) = d.y[static_cast<std::size_t>(i)];
  CVReport report = repeated_kfold_cv(oracle_learner(), d.X, d.y, 10, 10, 3);
  CHECK(report.fold_scores.size() == 100);
  CHECK(report.mean == 1.0);
  CHECK(report.variance == 0.0);
  CHECK(report.k == 10);
  CHECK(report.repeats == 10);
  CHECK(report.seed == 3);
}

TEST_CASE("cross-validation statistics and determinism") {
  Dataset d = make_blobs(20, 3, 4, 1.0, 1.5, 2);
  Learner knn = make_learner(LearnerSpec::defaults(LearnerKind::knn));
  CVReport serial = repeated_kfold_cv(knn, d.X, d.y, 5, 3, 9);
  CVReport parallel = repeated_kfold_cv(knn, d.X, d.y, 5, 3, 9, 0, 4);
  CHECK(serial.fold_scores == parallel.fold_scores);
  REQUIRE(serial.fold_scores.size() == 15);
  double mean = 0.0;
  for (double s : serial.fold_scores) {
    CHECK(s >= 0.0);
    CHECK(s <= 1.0);
    mean += s / 15.0;
  }
  double variance = 0.0;
  for (double s : serial.fold_scores) variance += (s - mean) * (s - mean) / 15.0;
  CHECK(serial.mean == doctest::Approx(mean).epsilon(1e-12));
  CHECK(serial.variance == doctest::Approx(variance).epsilon(1e-12));
  // Repeats re-partition, so the repeat blocks differ.
  std::vector<double> first(serial.fold_scores.begin(), serial.fold_scores.begin() + 5);
  std::vector<double> second(serial.fold_scores.begin() + 5, serial.fold_scores.begin() + 10);
  CHECK(first != second);

  CHECK_THROWS_AS(repeated_kfold_cv(knn, d.X, d.y, 5, 0, 9), ValidationError);
  CHECK_THROWS_AS(repeated_kfold_cv(knn, d.X, d.y, 21, 1, 9), ValidationError);
}

TEST_CASE("confusion matrix counts") {
  Labels truth{0, 1, 2, 2, 1, 0};
  Labels pred{0, 2, 2, 2, 1, 1};
  ConfusionMatrix cm = confusion_matrix(truth, pred);
  CHECK(cm.n_classes == 3);
  CHECK(cm(0, 0) == 1);
  CHECK(cm(0, 1) == 1);
  CHECK(cm(1, 2) == 1);
  CHECK(cm(2, 2) == 2);
  CHECK(cm.total() == 6);
  CHECK(cm.row_sum(2) == 2);
  CHECK(cm.col_sum(2) == 3);

  ConfusionMatrix diag = confusion_matrix(truth, truth, 4);
  CHECK(diag.n_classes == 4);
  for (int c = 0; c < 4; ++c)
    for (int p = 0; p < 4; ++p)
      CHECK(diag(c, p) == (c == p ? static_cast<std::size_t>(std::count(truth.begin(), truth.end(), c)) : 0u));

  CHECK_THROWS_AS(confusion_matrix(truth, Labels{0, 1}), ValidationError);
  CHECK_THROWS_AS(confusion_matrix(truth, pred, 2), ValidationError);
}

TEST_CASE("classification report from the published stack confusion matrix") {
  ConfusionMatrix cm = from_rows({{489, 5, 2, 0, 0, 0},
                                  {39, 429, 3, 0, 0, 0},
                                  {6, 12, 402, 0, 0, 0},
                                  {0, 0, 0, 437, 54, 0},
                                  {0, 0, 0, 9, 523, 0},
                                  {0, 0, 0, 0, 0, 537}});
  CHECK(cm.total() == 2947);
  ClassificationReport r = classification_report(cm);
  CHECK(r.per_class[0].precision == doctest::Approx(489.0 / 534.0));
  CHECK(round2(r.per_class[0].precision) == 0.92);
  CHECK(round2(r.per_class[0].recall) == 0.99);
  CHECK(round2(r.per_class[0].f1) == 0.95);
  CHECK(r.per_class[0].support == 496);
  CHECK(round2(r.per_class[3].precision) == 0.98);
  CHECK(round2(r.per_class[3].recall) == 0.89);
  CHECK(round2(r.per_class[3].f1) == 0.93);
  CHECK(round2(r.per_class[4].precision) == 0.91);
  CHECK(round2(r.per_class[4].recall) == 0.98);
  CHECK(round2(r.per_class[4].f1) == 0.94);
  CHECK(r.per_class[5].precision == 1.0);
  CHECK(r.per_class[5].recall == 1.0);
  CHECK(r.per_class[5].f1 == 1.0);
  CHECK(r.per_class[5].support == 537);
  CHECK(round2(r.accuracy) == 0.96);
  CHECK(round2(r.macro.precision) == 0.96);
  CHECK(round2(r.weighted.f1) == 0.96);
  CHECK(r.weighted.support == 2947);
}

TEST_CASE("report identities") {
  ClassificationReport perfect = classification_report(from_rows({{3, 0}, {0, 7}}));
  for (const auto& m : perfect.per_class) {
    CHECK(m.precision == 1.0);
    CHECK(m.recall == 1.0);
    CHECK(m.f1 == 1.0);
  }
  CHECK(perfect.accuracy == 1.0);

  // Never-predicted, never-true class: zero precision, recall and F1.
  ClassificationReport gap = classification_report(from_rows({{2, 1, 0}, {1, 3, 0}, {0, 0, 0}}));
  CHECK(gap.per_class[2].precision == 0.0);
  CHECK(gap.per_class[2].f1 == 0.0);

  Rng rng(5);
  Labels truth(300);
  Labels pred(300);
  for (std::size_t i = 0; i < 300; ++i) {
    truth[i] = static_cast<int>(rng.below(4));
    pred[i] = rng.uniform() < 0.6 ? truth[i] : static_cast<int>(rng.below(4));
  }
  ClassificationReport r = classification_report(confusion_matrix(truth, pred, 4));
  CHECK(r.accuracy == accuracy(truth, pred));
  CHECK(r.weighted.recall == r.accuracy);
  for (const auto& m : r.per_class) {
    if (m.precision + m.recall > 0) CHECK(m.f1 == doctest::Approx(2 * m.precision * m.recall / (m.precision + m.recall)));
  }
  CHECK_THROWS_AS(classification_report(from_rows({{0, 0}, {0, 0}})), ValidationError);
}

TEST_CASE("trapezoid AUC equals the Mann-Whitney statistic") {
  for (RngSeed seed = 1; seed <= 20; ++seed) {
    Rng rng = make_stream(seed, "auc");
    const std::size_t n = 20 + rng.below(181);
    const int K = 2 + static_cast<int>(rng.below(4));
    Labels y(n);
    Matrix scores(static_cast<Index>(n), K);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = static_cast<int>(rng.below(static_cast<std::size_t>(K)));
      for (int c = 0; c < K; ++c) {
        // Coarse grid so ties are common.
        scores(static_cast<Index>(i), c) = std::round(10.0 * (rng.uniform() + 0.3 * (y[i] == c))) / 10.0;
      }
    }
    RocCurve roc = roc_ovr(y, scores);
    REQUIRE(roc.per_class.size() == static_cast<std::size_t>(K));
    double macro = 0.0;
    int defined = 0;
    for (int c = 0; c < K; ++c) {
      const auto& curve = roc.per_class[static_cast<std::size_t>(c)];
      CHECK(curve.points.front().fpr == 0.0);
      CHECK(curve.points.front().tpr == 0.0);
      CHECK(curve.points.back().fpr == 1.0);
      CHECK(curve.points.back().tpr == 1.0);
      for (std::size_t p = 1; p < curve.points.size(); ++p) CHECK(curve.points[p].fpr >= curve.points[p - 1].fpr);
      if (!curve.auc) continue;
      CHECK(std::abs(*curve.auc - mann_whitney(y, scores, c)) <= 1e-9);
      macro += *curve.auc;
      ++defined;
    }
    if (defined > 0) CHECK(*roc.macro_auc == doctest::Approx(macro / defined).epsilon(1e-12));
  }
}

TEST_CASE("ROC edge cases") {
  Labels y{0, 1, 1, 0, 1};
  Matrix perfect(5, 2);
  perfect << 0.9, 0.1, 0.2, 0.8, 0.3, 0.7, 0.6, 0.4, 0.1, 0.9;
  RocCurve r = roc_ovr(y, perfect);
  CHECK(*r.per_class[0].auc == 1.0);
  CHECK(*r.per_class[1].auc == 1.0);

  Matrix flat = Matrix::Constant(5, 2, 0.5);
  RocCurve f = roc_ovr(y, flat);
  CHECK(*f.per_class[0].auc == 0.5);
  CHECK(f.per_class[0].points.size() == 2);

  // Strictly monotone transform leaves AUC unchanged.
  Matrix noisy = perfect;
  noisy(1, 1) = 0.35;
  CHECK(*roc_ovr(y, noisy).per_class[1].auc ==
        *roc_ovr(y, Matrix(noisy.array().exp() * 3.0 - 1.0)).per_class[1].auc);

  // A class absent from y_true has no AUC and stays out of the macro mean.
  Matrix three(5, 3);
  three << 0.2, 0.3, 0.5, 0.1, 0.8, 0.1, 0.3, 0.6, 0.1, 0.5, 0.2, 0.3, 0.2, 0.7, 0.1;
  RocCurve absent = roc_ovr(y, three);
  CHECK(!absent.per_class[2].auc.has_value());
  CHECK(*absent.macro_auc == doctest::Approx((*absent.per_class[0].auc + *absent.per_class[1].auc) / 2));

  CHECK_THROWS_AS(roc_ovr(y, Matrix::Zero(4, 2)), ShapeError);
}

TEST_CASE("random scores give AUC near one half") {
  Rng rng = make_stream(17, "random-auc");
  Labels y(2000);
  Matrix scores(2000, 2);
  for (std::size_t i = 0; i < 2000; ++i) {
    y[i] = static_cast<int>(rng.below(2));
    scores(static_cast<Index>(i), 0) = rng.uniform();
    scores(static_cast<Index>(i), 1) = rng.uniform();
  }
  RocCurve r = roc_ovr(y, scores);
  CHECK(std::abs(*r.per_class[0].auc - 0.5) <= 0.03);
  CHECK(std::abs(*r.per_class[1].auc - 0.5) <= 0.03);
}

TEST_CASE("timed fit and predict") {
  Dataset train = make_blobs(30, 3, 5, 2.0, 1.0, 3);
  Dataset test = make_blobs(10, 3, 5, 2.0, 1.0, 3);
  Learner et = make_learner(LearnerSpec::defaults(LearnerKind::extra_trees).with("n_estimators", 20));
  TimedRun a = timed_fit_predict(et, train, test, 5);
  TimedRun b = timed_fit_predict(et, train, test, 5);
  CHECK(a.timing.fit_seconds > 0.0);
  CHECK(a.timing.predict_seconds >= 0.0);
  CHECK(a.timing.model_label == "extra_trees");
  CHECK(a.accuracy == b.accuracy);
  CHECK(a.predictions == b.predictions);
  CHECK(a.predictions.size() == test.size());
  CHECK(a.probabilities.rows() == static_cast<Index>(test.size()));
}
