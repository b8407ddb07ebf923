#include "harstack/evaluation.hpp"

#include "harstack/parallel.hpp"
#include "harstack/rng.hpp"

#include <algorithm>
#include <chrono>
#include <numeric>

namespace harstack {

std::vector<int> stratified_kfold(std::span<const ClassLabel> y, int n_classes, int k, RngSeed seed) {
  if (k < 2) throw ValidationError("k must be at least 2");
  auto counts = class_counts(y, n_classes);
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] > 0 && counts[c] < static_cast<std::size_t>(k)) {
      throw ValidationError("class " + std::to_string(c) + " has " + std::to_string(counts[c]) +
                            " samples, fewer than k=" + std::to_string(k));
    }
  }
  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(n_classes));
  for (std::size_t i = 0; i < y.size(); ++i) by_class[static_cast<std::size_t>(y[i])].push_back(i);

  std::vector<int> fold(y.size(), 0);
  std::size_t dealt = 0;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    Rng rng = make_stream(seed, "kfold-class", c);
    shuffle(by_class[c], rng);
    for (std::size_t i : by_class[c]) fold[i] = static_cast<int>(dealt++ % static_cast<std::size_t>(k));
  }
  return fold;
}

CVReport repeated_kfold_cv(const Learner& learner, const Matrix& X, const Labels& y, int k, int repeats, RngSeed seed,
                           int n_classes, unsigned workers) {
  if (repeats < 1) throw ValidationError("repeats must be at least 1");
  if (static_cast<std::size_t>(X.rows()) != y.size()) throw ShapeError("X rows and label count differ");
  if (n_classes == 0) n_classes = infer_n_classes(y);

  std::vector<std::vector<int>> partitions;
  for (int r = 0; r < repeats; ++r) {
    partitions.push_back(stratified_kfold(y, n_classes, k, derive_key(seed, "cv-repeat", static_cast<std::uint64_t>(r))));
  }

  CVReport report;
  report.seed = seed;
  report.k = k;
  report.repeats = repeats;
  report.fold_scores.assign(static_cast<std::size_t>(k * repeats), 0.0);
  parallel_for(report.fold_scores.size(), workers, [&](std::size_t job) {
    const auto& fold_of = partitions[job / static_cast<std::size_t>(k)];
    const int held_out = static_cast<int>(job % static_cast<std::size_t>(k));
    std::vector<std::size_t> train_rows;
    std::vector<std::size_t> test_rows;
    for (std::size_t i = 0; i < fold_of.size(); ++i) (fold_of[i] == held_out ? test_rows : train_rows).push_back(i);
    auto model = learner.fit(take_rows(X, train_rows), take_labels(y, train_rows), n_classes,
                             derive_key(seed, "cv-fit", job));
    Labels predicted = predict_labels(*model, take_rows(X, test_rows));
    report.fold_scores[job] = accuracy(take_labels(y, test_rows), predicted);
  });

  const auto m = static_cast<double>(report.fold_scores.size());
  report.mean = std::accumulate(report.fold_scores.begin(), report.fold_scores.end(), 0.0) / m;
  double ss = 0.0;
  for (double s : report.fold_scores) ss += (s - report.mean) * (s - report.mean);
  report.variance = ss / m;
  return report;
}

std::size_t ConfusionMatrix::total() const { return std::accumulate(counts.begin(), counts.end(), std::size_t{0}); }

std::size_t ConfusionMatrix::row_sum(int truth) const {
  std::size_t s = 0;
  for (int j = 0; j < n_classes; ++j) s += (*this)(truth, j);
  return s;
}

std::size_t ConfusionMatrix::col_sum(int predicted) const {
  std::size_t s = 0;
  for (int i = 0; i < n_classes; ++i) s += (*this)(i, predicted);
  return s;
}

ConfusionMatrix confusion_matrix(std::span<const ClassLabel> y_true, std::span<const ClassLabel> y_pred, int n_classes) {
  if (y_true.size() != y_pred.size()) throw ValidationError("label sequences differ in length");
  if (n_classes == 0) n_classes = std::max(infer_n_classes(y_true), infer_n_classes(y_pred));
  ConfusionMatrix cm{n_classes, std::vector<std::size_t>(static_cast<std::size_t>(n_classes * n_classes), 0)};
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    if (y_true[i] < 0 || y_true[i] >= n_classes || y_pred[i] < 0 || y_pred[i] >= n_classes) {
      throw ValidationError("label out of range at position " + std::to_string(i));
    }
    ++cm.counts[static_cast<std::size_t>(y_true[i] * n_classes + y_pred[i])];
  }
  return cm;
}

namespace {
double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}
double harmonic(double p, double r) { return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r); }
}  // namespace

ClassificationReport classification_report(const ConfusionMatrix& cm) {
  const std::size_t total = cm.total();
  if (total == 0) throw ValidationError("confusion matrix is empty");
  ClassificationReport report;
  std::size_t trace = 0;
  for (int c = 0; c < cm.n_classes; ++c) {
    ClassMetrics m;
    const std::size_t hit = cm(c, c);
    trace += hit;
    m.support = cm.row_sum(c);
    m.precision = ratio(hit, cm.col_sum(c));
    m.recall = ratio(hit, m.support);
    m.f1 = harmonic(m.precision, m.recall);
    report.per_class.push_back(m);
  }
  report.accuracy = ratio(trace, total);
  const auto k = static_cast<double>(cm.n_classes);
  for (const auto& m : report.per_class) {
    const double w = static_cast<double>(m.support) / static_cast<double>(total);
    report.macro.precision += m.precision / k;
    report.macro.recall += m.recall / k;
    report.macro.f1 += m.f1 / k;
    report.weighted.precision += w * m.precision;
    report.weighted.recall += w * m.recall;
    report.weighted.f1 += w * m.f1;
  }
  report.macro.support = total;
  report.weighted.support = total;
  // Support-weighted recall is sum(hit_c) / total; use the exact ratio.
  report.weighted.recall = report.accuracy;
  return report;
}

RocCurve roc_ovr(std::span<const ClassLabel> y_true, const Matrix& scores) {
  if (static_cast<std::size_t>(scores.rows()) != y_true.size()) throw ShapeError("score rows and label count differ");
  const auto n_classes = static_cast<int>(scores.cols());
  for (ClassLabel c : y_true) {
    if (c < 0 || c >= n_classes) throw ShapeError("label outside score columns");
  }
  RocCurve curve;
  std::vector<std::size_t> order(y_true.size());
  double auc_sum = 0.0;
  int auc_count = 0;
  for (int c = 0; c < n_classes; ++c) {
    ClassRoc roc;
    std::size_t positives = 0;
    for (ClassLabel t : y_true) positives += t == c;
    const std::size_t negatives = y_true.size() - positives;

    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores(static_cast<Index>(a), c) > scores(static_cast<Index>(b), c); });
    roc.points.push_back({0.0, 0.0});
    std::size_t tp = 0;
    std::size_t fp = 0;
    for (std::size_t i = 0; i < order.size();) {
      const double level = scores(static_cast<Index>(order[i]), c);
      while (i < order.size() && scores(static_cast<Index>(order[i]), c) == level) {
        (y_true[order[i]] == c ? tp : fp) += 1;
        ++i;
      }
      roc.points.push_back({ratio(fp, negatives), ratio(tp, positives)});
    }
    if (positives > 0 && negatives > 0) {
      double area = 0.0;
      for (std::size_t p = 1; p < roc.points.size(); ++p) {
        area += (roc.points[p].fpr - roc.points[p - 1].fpr) * (roc.points[p].tpr + roc.points[p - 1].tpr) * 0.5;
      }
      roc.auc = area;
      auc_sum += area;
      ++auc_count;
    } else {
      // Undefined rates: report the degenerate diagonal endpoints only.
      roc.points = {{0.0, 0.0}, {1.0, 1.0}};
    }
    curve.per_class.push_back(std::move(roc));
  }
  if (auc_count > 0) curve.macro_auc = auc_sum / auc_count;
  return curve;
}

TimedRun timed_fit_predict(const Learner& learner, const Dataset& train, const Dataset& test, RngSeed seed) {
  using Clock = std::chrono::steady_clock;
  const int n_classes = std::max(train.n_classes(), infer_n_classes(train.y));
  TimedRun run;
  run.timing.model_label = learner.name;

  auto start = Clock::now();
  auto model = learner.fit(train.X, train.y, n_classes, seed);
  auto fitted = Clock::now();
  run.probabilities = model->predict_proba(test.X);
  run.predictions = argmax_rows(run.probabilities);
  auto predicted = Clock::now();

  run.timing.fit_seconds = std::chrono::duration<double>(fitted - start).count();
  run.timing.predict_seconds = std::chrono::duration<double>(predicted - fitted).count();
  run.accuracy = accuracy(test.y, run.predictions);
  return run;
}

}  // namespace harstack
