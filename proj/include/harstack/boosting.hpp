#pragma once

#include "harstack/core.hpp"

#include <vector>

namespace harstack {

struct RegressionNode {
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;

  bool is_leaf() const { return feature < 0; }
};

class RegressionTree {
 public:
  explicit RegressionTree(std::vector<RegressionNode> nodes);

  double predict(const Matrix& X, Index row) const;
  const std::vector<RegressionNode>& nodes() const { return nodes_; }
  int depth() const;

 private:
  std::vector<RegressionNode> nodes_;
};

struct GradientBoostingParams {
  int n_estimators = 50;
  double learning_rate = 0.2;
  int max_depth = 3;
  unsigned workers = 1;
};

/// Multiclass gradient boosting on the multinomial deviance. Each stage holds
/// one regression tree per class.
class GradientBoostingModel final : public Classifier {
 public:
  GradientBoostingModel(Vector initial_scores, std::vector<std::vector<RegressionTree>> stages, double learning_rate,
                        int max_depth, Index n_features);

  Matrix predict_proba(const Matrix& X) const override;
  int n_classes() const override { return static_cast<int>(initial_scores_.size()); }
  Index n_features() const override { return n_features_; }

  /// Accumulated scores after the first `n_stages` stages (0 = priors only).
  Matrix raw_scores(const Matrix& X, std::size_t n_stages) const;
  Matrix staged_predict_proba(const Matrix& X, std::size_t n_stages) const;

  const Vector& initial_scores() const { return initial_scores_; }
  const std::vector<std::vector<RegressionTree>>& stages() const { return stages_; }
  double learning_rate() const { return learning_rate_; }
  int max_depth() const { return max_depth_; }

 private:
  Vector initial_scores_;
  std::vector<std::vector<RegressionTree>> stages_;
  double learning_rate_;
  int max_depth_;
  Index n_features_;
};

/// Scores start at log class priors. Every stage fits, per class, a
/// least-squares regression tree to r = 1{y=c} - p_c, sets each leaf to the
/// Newton step ((K-1)/K) sum r / sum |r|(1-|r|), and adds it scaled by the
/// learning rate. Fully deterministic.
GradientBoostingModel train_gradient_boosting(const Matrix& X, const Labels& y, const GradientBoostingParams& params,
                                              int n_classes = 0);

/// Mean negative log-likelihood of the labels under softmax(scores).
double multinomial_deviance(const Matrix& scores, const Labels& y);

/// Deviance after 0, 1, ..., n_estimators stages (entry 0 = priors only).
std::vector<double> staged_train_loss(const GradientBoostingModel& model, const Matrix& X, const Labels& y);

}  // namespace harstack
