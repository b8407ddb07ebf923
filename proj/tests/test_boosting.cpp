#include "doctest.h"

#include "harstack/boosting.hpp"
#include "test_support.hpp"

#include <numeric>

using namespace harstack;
using harstack::testing::make_blobs;

namespace {

/// Hand recursion: exhaustive least-squares splits on every feature, Newton
/// leaves, scores updated in place. Mirrors the summation order of the
/// library (index order for totals, value order for prefix sums).
struct OracleBooster {
  const Matrix& X;
  const Labels& y;
  int K;
  double lr;
  int depth;
  Matrix scores;

  OracleBooster(const Matrix& X_, const Labels& y_, int K_, double lr_, int depth_)
      : X(X_), y(y_), K(K_), lr(lr_), depth(depth_) {
    const auto n = static_cast<double>(y.size());
    scores.resize(X.rows(), K);
    for (int c = 0; c < K; ++c) {
      const double count = static_cast<double>(std::count(y.begin(), y.end(), c));
      scores.col(c).setConstant(std::log(std::max(count / n, 1e-12)));
    }
  }

  void fit_node(const std::vector<Index>& members, const std::vector<double>& r, int level, std::vector<double>& out) {
    double total = 0.0;
    double total_sq = 0.0;
    for (Index i : members) {
      total += r[static_cast<std::size_t>(i)];
      total_sq += r[static_cast<std::size_t>(i)] * r[static_cast<std::size_t>(i)];
    }
    const auto n = static_cast<double>(members.size());
    const double spread = total_sq - total * total / std::max(n, 1.0);
    double best = -1.0;
    Index best_f = -1;
    double best_v = 0.0;
    if (level < depth && members.size() >= 2 && spread > 1e-14 * std::max(1.0, total_sq)) {
      for (Index f = 0; f < X.cols(); ++f) {
        std::vector<Index> sorted = members;
        std::stable_sort(sorted.begin(), sorted.end(), [&](Index a, Index b) { return X(a, f) < X(b, f); });
        double left = 0.0;
        for (std::size_t k = 0; k + 1 < sorted.size(); ++k) {
          left += r[static_cast<std::size_t>(sorted[k])];
          if (!(X(sorted[k + 1], f) > X(sorted[k], f))) continue;
          const double nl = static_cast<double>(k + 1);
          const double right = total - left;
          const double score = left * left / nl + right * right / (n - nl);
          if (score > best) {
            best = score;
            best_f = f;
            best_v = X(sorted[k], f);
          }
        }
      }
    }
    if (best_f < 0) {
      double num = 0.0;
      double den = 0.0;
      for (Index i : members) {
        const double ri = r[static_cast<std::size_t>(i)];
        num += ri;
        den += std::abs(ri) * (1.0 - std::abs(ri));
      }
      const double value = den < 1e-10 ? 0.0 : (K - 1.0) / K * num / den;
      for (Index i : members) out[static_cast<std::size_t>(i)] = value;
      return;
    }
    std::vector<Index> left_rows;
    std::vector<Index> right_rows;
    for (Index i : members) (X(i, best_f) <= best_v ? left_rows : right_rows).push_back(i);
    fit_node(left_rows, r, level + 1, out);
    fit_node(right_rows, r, level + 1, out);
  }

  void stage() {
    Matrix p(scores.rows(), K);
    for (Index i = 0; i < scores.rows(); ++i) {
      const double peak = scores.row(i).maxCoeff();
      double z = 0.0;
      for (int c = 0; c < K; ++c) z += std::exp(scores(i, c) - peak);
      for (int c = 0; c < K; ++c) p(i, c) = std::exp(scores(i, c) - peak) / z;
    }
    std::vector<Index> all(static_cast<std::size_t>(X.rows()));
    std::iota(all.begin(), all.end(), Index{0});
    for (int c = 0; c < K; ++c) {
      std::vector<double> r(static_cast<std::size_t>(X.rows()));
      for (Index i = 0; i < X.rows(); ++i) r[static_cast<std::size_t>(i)] = (y[static_cast<std::size_t>(i)] == c) - p(i, c);
      std::vector<double> step(r.size());
      fit_node(all, r, 0, step);
      for (Index i = 0; i < X.rows(); ++i) scores(i, c) += lr * step[static_cast<std::size_t>(i)];
    }
  }
};

double oracle_deviance(const Matrix& scores, const Labels& y) {
  double total = 0.0;
  for (Index i = 0; i < scores.rows(); ++i) {
    double z = 0.0;
    for (Index c = 0; c < scores.cols(); ++c) z += std::exp(scores(i, c));
    total += -std::log(std::exp(scores(i, y[static_cast<std::size_t>(i)])) / z);
  }
  return total / static_cast<double>(scores.rows());
}

struct Toy {
  Matrix X;
  Labels y;
};

Toy eight_point_line() {
  Toy t;
  t.X.resize(8, 1);
  t.X << 0.3, 1.1, 1.9, 2.2, 3.7, 4.0, 5.6, 6.1;
  t.y = {0, 0, 0, 1, 1, 1, 1, 1};
  return t;
}

Toy eight_point_plane() {
  Toy t;
  t.X.resize(8, 2);
  t.X << 0.2, 3.1,
         1.4, 0.5,
         2.3, 2.7,
         0.9, 1.8,
         3.3, 0.1,
         2.8, 3.9,
         0.6, 2.2,
         3.9, 1.3;
  t.y = {0, 1, 2, 0, 1, 2, 0, 1};
  return t;
}

}  // namespace

TEST_CASE("staged scores match the hand recursion on 8 points") {
  struct Case {
    Toy toy;
    double lr;
    int depth;
    int stages;
  };
  for (const auto& [toy, lr, depth, stages] : {Case{eight_point_line(), 1.0, 2, 10}, Case{eight_point_plane(), 0.5, 2, 6},
                                              Case{eight_point_plane(), 1.0, 1, 4}}) {
    const int K = infer_n_classes(toy.y);
    GradientBoostingParams params;
    params.n_estimators = stages;
    params.learning_rate = lr;
    params.max_depth = depth;
    GradientBoostingModel model = train_gradient_boosting(toy.X, toy.y, params);
    OracleBooster oracle(toy.X, toy.y, K, lr, depth);
    auto losses = staged_train_loss(model, toy.X, toy.y);
    REQUIRE(losses.size() == static_cast<std::size_t>(stages) + 1);
    for (int s = 0; s <= stages; ++s) {
      CAPTURE(s);
      Matrix got = model.raw_scores(toy.X, static_cast<std::size_t>(s));
      CHECK((got - oracle.scores).cwiseAbs().maxCoeff() < 1e-9);
      CHECK(losses[static_cast<std::size_t>(s)] == doctest::Approx(oracle_deviance(oracle.scores, toy.y)).epsilon(1e-9));
      oracle.stage();
    }
  }
}

TEST_CASE("separable 8-point toy is fitted perfectly") {
  Toy toy = eight_point_line();
  GradientBoostingParams params;
  params.n_estimators = 10;
  params.learning_rate = 1.0;
  params.max_depth = 2;
  GradientBoostingModel model = train_gradient_boosting(toy.X, toy.y, params);
  CHECK(accuracy(toy.y, predict_labels(model, toy.X)) == 1.0);
  CHECK(staged_train_loss(model, toy.X, toy.y).back() < 0.01);
}

TEST_CASE("training deviance never increases") {
  Dataset d = make_blobs(40, 4, 5, 1.2, 1.0, 3);
  for (double lr : {0.05, 0.1, 0.2}) {
    GradientBoostingParams params;
    params.n_estimators = 30;
    params.learning_rate = lr;
    GradientBoostingModel model = train_gradient_boosting(d.X, d.y, params);
    auto losses = staged_train_loss(model, d.X, d.y);
    REQUIRE(losses.size() == 31);
    // Entry 0 is the prior-only deviance.
    const double prior = -std::log(0.25);
    CHECK(losses[0] == doctest::Approx(prior).epsilon(1e-12));
    for (std::size_t s = 1; s < losses.size(); ++s) {
      CAPTURE(lr);
      CAPTURE(s);
      CHECK(losses[s] <= losses[s - 1] + 1e-9);
      CHECK(losses[s] == doctest::Approx(multinomial_deviance(model.raw_scores(d.X, s), d.y)).epsilon(1e-12));
    }
  }
}

TEST_CASE("smaller learning rate learns more slowly") {
  Dataset d = make_blobs(30, 3, 4, 1.5, 1.0, 4);
  GradientBoostingParams slow;
  slow.n_estimators = 20;
  slow.learning_rate = 0.05;
  GradientBoostingParams fast = slow;
  fast.learning_rate = 0.2;
  const double slow_loss = staged_train_loss(train_gradient_boosting(d.X, d.y, slow), d.X, d.y).back();
  const double fast_loss = staged_train_loss(train_gradient_boosting(d.X, d.y, fast), d.X, d.y).back();
  CHECK(slow_loss >= fast_loss);
}

TEST_CASE("residuals sum to zero across classes at every stage") {
  Dataset d = make_blobs(20, 5, 3, 1.0, 1.0, 5);
  GradientBoostingParams params;
  params.n_estimators = 8;
  GradientBoostingModel model = train_gradient_boosting(d.X, d.y, params);
  for (std::size_t s = 0; s <= 8; ++s) {
    Matrix p = model.staged_predict_proba(d.X, s);
    for (Index i = 0; i < p.rows(); ++i) {
      double sum = 0.0;
      for (Index c = 0; c < p.cols(); ++c) sum += (d.y[static_cast<std::size_t>(i)] == c ? 1.0 : 0.0) - p(i, c);
      CHECK(std::abs(sum) <= 1e-12);
      CHECK(p.row(i).sum() == doctest::Approx(1.0).epsilon(1e-9));
    }
  }
}

TEST_CASE("prior-only model predicts the majority class") {
  Dataset d = make_blobs(10, 3, 2, 2.0, 1.0, 6);
  Labels y = d.y;
  y[0] = 1;
  y[3] = 1;
  GradientBoostingModel model = train_gradient_boosting(d.X, y, {});
  CHECK(model.stages().size() == 50);
  CHECK(model.learning_rate() == 0.2);
  CHECK(model.max_depth() == 3);
  Labels prior = argmax_rows(model.staged_predict_proba(d.X, 0));
  for (auto label : prior) CHECK(label == 1);
  CHECK(model.initial_scores()(1) == doctest::Approx(std::log(12.0 / 30.0)));
}

TEST_CASE("an absent declared class gets a floored prior") {
  Dataset d = make_blobs(10, 2, 2, 3.0, 1.0, 7);
  GradientBoostingParams params;
  params.n_estimators = 3;
  GradientBoostingModel model = train_gradient_boosting(d.X, d.y, params, 3);
  CHECK(model.n_classes() == 3);
  CHECK(model.initial_scores()(2) == doctest::Approx(std::log(1e-12)));
  Matrix p = model.predict_proba(d.X);
  for (Index i = 0; i < p.rows(); ++i) {
    CHECK(p.row(i).sum() == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(std::isfinite(p(i, 2)));
  }
}

TEST_CASE("tree depth stays within the limit and fits are worker independent") {
  Dataset d = make_blobs(30, 4, 6, 1.0, 1.0, 8);
  GradientBoostingParams params;
  params.n_estimators = 5;
  params.max_depth = 2;
  GradientBoostingModel one = train_gradient_boosting(d.X, d.y, params);
  for (const auto& stage : one.stages())
    for (const auto& tree : stage) {
      CHECK(tree.depth() <= 2);
      for (const auto& node : tree.nodes()) CHECK(std::isfinite(node.value));
    }
  params.workers = 4;
  GradientBoostingModel many = train_gradient_boosting(d.X, d.y, params);
  CHECK((one.predict_proba(d.X).array() == many.predict_proba(d.X).array()).all());
}

TEST_CASE("boosting errors") {
  Dataset d = make_blobs(5, 2, 2, 2.0, 1.0, 9);
  Labels single(d.y.size(), 0);
  CHECK_THROWS_AS(train_gradient_boosting(d.X, single, {}), ValidationError);
  GradientBoostingParams params;
  params.n_estimators = 0;
  CHECK_THROWS_AS(train_gradient_boosting(d.X, d.y, params), ValidationError);
  params.n_estimators = 2;
  params.learning_rate = 0.0;
  CHECK_THROWS_AS(train_gradient_boosting(d.X, d.y, params), ValidationError);
  params.learning_rate = 1.5;
  CHECK_THROWS_AS(train_gradient_boosting(d.X, d.y, params), ValidationError);
  params.learning_rate = 0.5;
  GradientBoostingModel model = train_gradient_boosting(d.X, d.y, params);
  CHECK_THROWS_AS(model.raw_scores(d.X, 3), ValidationError);
  CHECK_THROWS_AS(model.predict_proba(Matrix::Zero(1, 3)), ShapeError);
  CHECK_THROWS_AS(multinomial_deviance(Matrix::Zero(2, 2), Labels{0}), ShapeError);
}
