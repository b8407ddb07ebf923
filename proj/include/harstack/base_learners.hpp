#pragma once

#include "harstack/core.hpp"

#include <optional>
#include <vector>

namespace harstack {

/// Logistic function 1 / (1 + e^-x), evaluated without overflow.
double sigmoid(double x) noexcept;

enum class LinearKind { logistic, svm };

/// One-vs-rest linear model: one weight row and bias per class. Probabilities
/// are the softmax of the raw per-class scores.
class LinearOvRModel final : public Classifier {
 public:
  LinearOvRModel(LinearKind kind, Matrix weights, Vector biases, double penalty);

  Matrix predict_proba(const Matrix& X) const override;
  int n_classes() const override { return static_cast<int>(weights_.rows()); }
  Index n_features() const override { return weights_.cols(); }

  /// Raw scores w_c . x + b_c, one column per class.
  Matrix decision_scores(const Matrix& X) const;

  LinearKind kind() const { return kind_; }
  const Matrix& weights() const { return weights_; }
  const Vector& biases() const { return biases_; }
  /// l1_lambda for logistic models, C for SVMs.
  double penalty() const { return penalty_; }

 private:
  LinearKind kind_;
  Matrix weights_;
  Vector biases_;
  double penalty_;
};

/// Mean binary log-loss of targets t in {0,1} at (w, b) and its gradient.
struct LogisticLossEval {
  double loss = 0.0;
  Vector grad_w;
  double grad_b = 0.0;
};
LogisticLossEval logistic_loss(const Matrix& X, const Vector& targets, const Vector& w, double b);

struct LogRegParams {
  /// Defaults to 1 / n_samples when unset.
  std::optional<double> l1_lambda;
  int max_iters = 500;
  double tol = 1e-5;
  unsigned workers = 1;
};

/// Per class: minimise mean logistic loss (class vs rest) + l1_lambda * |w|_1
/// with an unpenalised bias, by accelerated proximal gradient at step 1/L.
LinearOvRModel train_logreg_ovr(const Matrix& X, const Labels& y, const LogRegParams& params = {},
                                int n_classes = 0);

struct SvmParams {
  double C = 2.0;
  int epochs = 30;
  unsigned workers = 1;
};

/// Per-class primal objective 0.5 * (|w|^2 + b^2) + C * sum hinge, recorded
/// at the end of every epoch.
struct SvmTrace {
  std::vector<std::vector<double>> epoch_objective;  // [class][epoch]
};

double svm_objective(const Matrix& X, const Vector& signs, const Vector& w, double b, double C);

/// Pegasos-style subgradient training with seeded per-epoch shuffling.
LinearOvRModel train_linear_svm_ovr(const Matrix& X, const Labels& y, const SvmParams& params, RngSeed seed,
                                    int n_classes = 0, SvmTrace* trace = nullptr);

class KnnModel final : public Classifier {
 public:
  KnnModel(Matrix X, Labels y, int k, int n_classes);

  /// Neighbour class frequencies among the k nearest (Euclidean) training
  /// rows; equal distances resolve toward the lower training index.
  Matrix predict_proba(const Matrix& X) const override;
  int n_classes() const override { return n_classes_; }
  Index n_features() const override { return X_.cols(); }
  int k() const { return k_; }

 private:
  Matrix X_;
  Labels y_;
  Vector sq_norms_;
  int k_;
  int n_classes_;
};

inline constexpr int kDefaultKnnNeighbors = 5;

KnnModel train_knn(const Matrix& X, const Labels& y, int k = kDefaultKnnNeighbors, int n_classes = 0);

}  // namespace harstack
