#include "harstack/core.hpp"

#include <algorithm>

namespace harstack {

void Classifier::check_features(const Matrix& X) const {
  if (X.cols() != n_features()) {
    throw ShapeError("expected " + std::to_string(n_features()) + " features, got " +
                     std::to_string(X.cols()));
  }
}

Labels argmax_rows(const Matrix& probabilities) {
  Labels labels(static_cast<std::size_t>(probabilities.rows()));
  for (Index i = 0; i < probabilities.rows(); ++i) {
    Index best = 0;
    for (Index k = 1; k < probabilities.cols(); ++k) {
      if (probabilities(i, k) > probabilities(i, best)) best = k;
    }
    labels[static_cast<std::size_t>(i)] = static_cast<ClassLabel>(best);
  }
  return labels;
}

Labels predict_labels(const Classifier& model, const Matrix& X) {
  if (X.cols() != model.n_features()) {
    throw ShapeError("expected " + std::to_string(model.n_features()) + " features, got " +
                     std::to_string(X.cols()));
  }
  return argmax_rows(model.predict_proba(X));
}

Matrix softmax_rows(const Matrix& scores) {
  Matrix out(scores.rows(), scores.cols());
  for (Index i = 0; i < scores.rows(); ++i) {
    double shift = scores.row(i).maxCoeff();
    out.row(i) = (scores.row(i).array() - shift).exp();
    out.row(i) /= out.row(i).sum();
  }
  return out;
}

int infer_n_classes(std::span<const ClassLabel> y) {
  if (y.empty()) throw ValidationError("empty label sequence");
  ClassLabel hi = 0;
  for (ClassLabel c : y) {
    if (c < 0) throw ValidationError("negative class label " + std::to_string(c));
    hi = std::max(hi, c);
  }
  return hi + 1;
}

std::vector<std::size_t> class_counts(std::span<const ClassLabel> y, int n_classes) {
  std::vector<std::size_t> counts(static_cast<std::size_t>(n_classes), 0);
  for (ClassLabel c : y) {
    if (c < 0 || c >= n_classes) throw ValidationError("label " + std::to_string(c) + " out of range");
    ++counts[static_cast<std::size_t>(c)];
  }
  return counts;
}

Matrix take_rows(const Matrix& X, std::span<const std::size_t> rows) {
  Matrix out(static_cast<Index>(rows.size()), X.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Index>(i)) = X.row(static_cast<Index>(rows[i]));
  return out;
}

Labels take_labels(std::span<const ClassLabel> y, std::span<const std::size_t> rows) {
  Labels out;
  out.reserve(rows.size());
  for (std::size_t r : rows) out.push_back(y[r]);
  return out;
}

double accuracy(std::span<const ClassLabel> y_true, std::span<const ClassLabel> y_pred) {
  if (y_true.size() != y_pred.size()) throw ValidationError("label sequences differ in length");
  if (y_true.empty()) throw ValidationError("empty label sequence");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < y_true.size(); ++i) hits += y_true[i] == y_pred[i];
  return static_cast<double>(hits) / static_cast<double>(y_true.size());
}

}  // namespace harstack
