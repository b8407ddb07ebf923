#include "doctest.h"

#include "harstack/stacking.hpp"
#include "test_support.hpp"

#include <mutex>
#include <set>

using namespace harstack;
using harstack::testing::make_blobs;

namespace {

/// Returns fixed one-hot rows for whatever class it is told to vote for.
class ConstantVoter final : public Classifier {
 public:
  ConstantVoter(int vote, int n_classes, Index n_features) : vote_(vote), n_classes_(n_classes), n_features_(n_features) {}
  Matrix predict_proba(const Matrix& X) const override {
    check_features(X);
    Matrix p = Matrix::Zero(X.rows(), n_classes_);
    p.col(vote_).setOnes();
    return p;
  }
  int n_classes() const override { return n_classes_; }
  Index n_features() const override { return n_features_; }

 private:
  int vote_;
  int n_classes_;
  Index n_features_;
};

/// Oracle base learner: column 0 of X carries the true label.
class LabelReader final : public Classifier {
 public:
  LabelReader(int n_classes, Index n_features) : n_classes_(n_classes), n_features_(n_features) {}
  Matrix predict_proba(const Matrix& X) const override {
    Matrix p = Matrix::Zero(X.rows(), n_classes_);
    for (Index i = 0; i < X.rows(); ++i) p(i, static_cast<Index>(X(i, 0))) = 1.0;
    return p;
  }
  int n_classes() const override { return n_classes_; }
  Index n_features() const override { return n_features_; }

 private:
  int n_classes_;
  Index n_features_;
};

Dataset tagged_blobs(std::size_t per_class, int classes, RngSeed seed) {
  Dataset d = make_blobs(per_class, classes, 4, 3.0, 1.0, seed);
  // Column 3 holds the row id so spies can tell which rows they saw.
  for (Index i = 0; i < d.X.rows(); ++i) d.X(i, 3) = static_cast<double>(i);
  return d;
}

}  // namespace

TEST_CASE("learner specs carry the documented defaults") {
  CHECK(LearnerSpec::defaults(LearnerKind::linear_svm).get("C", 0) == 2.0);
  auto gb = LearnerSpec::defaults(LearnerKind::gradient_boosting);
  CHECK(gb.get("n_estimators", 0) == 50);
  CHECK(gb.get("learning_rate", 0) == 0.2);
  auto et = LearnerSpec::defaults(LearnerKind::extra_trees);
  CHECK(et.get("n_estimators", 0) == 100);
  CHECK(et.get("max_depth", 0) == 4);
  CHECK(LearnerSpec::defaults(LearnerKind::knn).get("k", 0) == 5);

  auto roster = default_stack_roster();
  REQUIRE(roster.size() == 4);
  CHECK(roster[0].kind == LearnerKind::logistic_ovr);
  CHECK(roster[1].kind == LearnerKind::linear_svm);
  CHECK(roster[2].kind == LearnerKind::gradient_boosting);
  CHECK(roster[3].kind == LearnerKind::extra_trees);
  auto meta = default_meta_learner();
  CHECK(meta.kind == LearnerKind::logistic_ovr);
  CHECK(meta.get("l1_lambda", 0) == 1e-4);

  for (const char* name : {"logistic_ovr", "linear_svm", "gradient_boosting", "extra_trees", "knn", "random_forest",
                           "bagging", "cart"}) {
    CHECK(to_string(parse_learner_kind(name)) == name);
  }
  CHECK_THROWS_AS(parse_learner_kind("svm_rbf"), ValidationError);
}

TEST_CASE("spec validation") {
  CHECK_THROWS_AS(validate(LearnerSpec::defaults(LearnerKind::knn).with("C", 1.0)), ValidationError);
  CHECK_THROWS_AS(make_learner(LearnerSpec::defaults(LearnerKind::cart).with("n_estimators", 3)), ValidationError);
  CHECK_THROWS_AS(make_learner(LearnerSpec::defaults(LearnerKind::knn).with("k", 2.5)), ValidationError);
  CHECK_NOTHROW(validate(LearnerSpec::defaults(LearnerKind::extra_trees).with("candidate_features", 3)));
}

TEST_CASE("every learner kind yields normalized probabilities") {
  Dataset d = make_blobs(20, 3, 5, 2.0, 1.0, 1);
  for (LearnerKind kind : {LearnerKind::logistic_ovr, LearnerKind::linear_svm, LearnerKind::gradient_boosting,
                           LearnerKind::extra_trees, LearnerKind::knn, LearnerKind::random_forest,
                           LearnerKind::bagging, LearnerKind::cart}) {
    LearnerSpec spec = LearnerSpec::defaults(kind);
    if (spec.hyperparams.contains("n_estimators")) spec = spec.with("n_estimators", 10);
    Learner learner = make_learner(spec);
    CHECK(learner.name == to_string(kind));
    auto model = learner.fit(d.X, d.y, 4, 7);
    CHECK(model->n_classes() == 4);
    Matrix p = model->predict_proba(d.X);
    for (Index i = 0; i < p.rows(); ++i) {
      CAPTURE(to_string(kind));
      CHECK(std::abs(p.row(i).sum() - 1.0) <= 1e-9);
      CHECK(p.row(i).minCoeff() >= 0.0);
    }
    auto again = learner.fit(d.X, d.y, 4, 7);
    CHECK((again->predict_proba(d.X).array() == p.array()).all());
  }
}

TEST_CASE("meta features concatenate probability blocks in learner order") {
  Dataset d = make_blobs(5, 6, 3, 2.0, 1.0, 2);
  ConstantVoter a(1, 6, 3);
  ConstantVoter b(4, 6, 3);
  Matrix X = d.X.topRows(10);
  std::vector<const Classifier*> ab{&a, &b};
  std::vector<const Classifier*> ba{&b, &a};
  Matrix m = meta_features(ab, X);
  CHECK(m.rows() == 10);
  CHECK(m.cols() == 12);
  for (Index i = 0; i < 10; ++i) {
    CHECK(m.row(i).head(6).sum() == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(m.row(i).tail(6).sum() == doctest::Approx(1.0).epsilon(1e-9));
  }
  Matrix swapped = meta_features(ba, X);
  CHECK((swapped.leftCols(6).array() == m.rightCols(6).array()).all());
  CHECK((swapped.rightCols(6).array() == m.leftCols(6).array()).all());

  ConstantVoter narrow(0, 3, 3);
  std::vector<const Classifier*> mixed{&a, &narrow};
  CHECK_THROWS_AS(meta_features(mixed, X), ShapeError);
}

TEST_CASE("base learners only ever see D1") {
  Dataset d = tagged_blobs(30, 3, 3);
  std::mutex m;
  std::set<std::size_t> seen;
  Learner spy{"spy", [&](const Matrix& X, const Labels& y, int k, RngSeed seed) {
                {
                  std::lock_guard lock(m);
                  for (Index i = 0; i < X.rows(); ++i) seen.insert(static_cast<std::size_t>(X(i, 3)));
                }
                return make_learner(LearnerSpec::defaults(LearnerKind::knn)).fit(X, y, k, seed);
              }};
  std::vector<Learner> base{spy, spy};
  Learner meta = make_learner(default_meta_learner());
  StackFitTrace trace;
  StackOptions options;
  options.workers = 2;
  train_stacked(d.X, d.y, base, meta, options, 5, 0, &trace);

  std::set<std::size_t> d1(trace.base_rows.begin(), trace.base_rows.end());
  std::set<std::size_t> d2(trace.meta_rows.begin(), trace.meta_rows.end());
  CHECK(seen == d1);
  CHECK(d1.size() + d2.size() == d.y.size());
  for (auto r : d2) CHECK(!d1.contains(r));
  auto c1 = class_counts(take_labels(d.y, trace.base_rows), 3);
  for (auto c : c1) CHECK(c == 15);
}

TEST_CASE("a perfect single base learner makes a perfect stack") {
  Dataset d = make_blobs(20, 3, 3, 1.0, 2.0, 4);
  for (Index i = 0; i < d.X.rows(); ++i) d.X(i, 0) = d.y[static_cast<std::size_t>(i)];
  Learner reader{"reader", [](const Matrix& X, const Labels&, int k, RngSeed) -> std::unique_ptr<Classifier> {
                   return std::make_unique<LabelReader>(k, X.cols());
                 }};
  std::vector<Learner> base{reader};
  StackedModel model = train_stacked(d.X, d.y, base, make_learner(default_meta_learner()), {}, 1);
  CHECK(model.n_base() == 1);
  CHECK(accuracy(d.y, stacked_predict(model, d.X)) == 1.0);
}

TEST_CASE("unanimous one-hot base outputs decide the prediction") {
  Dataset d = make_blobs(20, 3, 3, 3.0, 0.5, 6);
  std::vector<std::unique_ptr<Classifier>> base;
  base.push_back(std::make_unique<LabelReader>(3, 3));
  base.push_back(std::make_unique<LabelReader>(3, 3));
  for (Index i = 0; i < d.X.rows(); ++i) d.X(i, 0) = d.y[static_cast<std::size_t>(i)];
  std::vector<const Classifier*> views{base[0].get(), base[1].get()};
  Matrix meta_inputs = meta_features(views, d.X);
  auto meta = make_learner(default_meta_learner()).fit(meta_inputs, d.y, 3, 0);
  StackedModel model(std::move(base), std::move(meta), 0.5, 0);
  Matrix probe(3, 3);
  probe << 2, 0, 0, 0, 0, 0, 1, 0, 0;
  CHECK(stacked_predict(model, probe) == Labels{2, 0, 1});
  Matrix p = stacked_predict_proba(model, probe);
  for (Index i = 0; i < 3; ++i) CHECK(p.row(i).sum() == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("stacking with the default roster is deterministic and worker independent") {
  Dataset d = make_blobs(30, 3, 6, 2.0, 1.2, 7);
  Dataset probe = make_blobs(10, 3, 6, 2.0, 1.2, 8);
  auto roster = default_stack_roster();
  for (auto& spec : roster) {
    if (spec.hyperparams.contains("n_estimators")) spec = spec.with("n_estimators", 8);
  }
  StackOptions serial;
  StackOptions parallel;
  parallel.workers = 4;
  StackedModel a = train_stacked(d.X, d.y, roster, default_meta_learner(), serial, 9);
  StackedModel b = train_stacked(d.X, d.y, roster, default_meta_learner(), serial, 9);
  StackedModel c = train_stacked(d.X, d.y, roster, default_meta_learner(), parallel, 9);
  Matrix pa = stacked_predict_proba(a, probe.X);
  CHECK((pa.array() == stacked_predict_proba(b, probe.X).array()).all());
  CHECK((pa.array() == stacked_predict_proba(c, probe.X).array()).all());
  CHECK(a.meta_learner().n_features() == 12);
  CHECK(a.n_features() == 6);
  CHECK(a.seed() == 9);
  CHECK(a.split_ratio() == 0.5);
}

TEST_CASE("stacking errors") {
  Dataset d = make_blobs(10, 2, 3, 2.0, 1.0, 10);
  std::vector<LearnerSpec> roster{LearnerSpec::defaults(LearnerKind::knn)};
  StackOptions three;
  three.levels = 3;
  CHECK_THROWS_AS(train_stacked(d.X, d.y, roster, default_meta_learner(), three, 1), ValidationError);
  StackOptions bad_ratio;
  bad_ratio.split_ratio = 1.0;
  CHECK_THROWS_AS(train_stacked(d.X, d.y, roster, default_meta_learner(), bad_ratio, 1), ValidationError);
  std::vector<LearnerSpec> none;
  CHECK_THROWS_AS(train_stacked(d.X, d.y, none, default_meta_learner(), {}, 1), ValidationError);

  // A failing base learner is reported with its index.
  std::vector<LearnerSpec> failing{LearnerSpec::defaults(LearnerKind::knn),
                                   LearnerSpec::defaults(LearnerKind::knn).with("k", 500)};
  try {
    train_stacked(d.X, d.y, failing, default_meta_learner(), {}, 1);
    FAIL("expected failure");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("base learner 1") != std::string::npos);
  }

  // Meta width must match T * n_classes.
  std::vector<std::unique_ptr<Classifier>> base;
  base.push_back(std::make_unique<ConstantVoter>(0, 2, 3));
  auto meta = std::make_unique<ConstantVoter>(0, 2, 5);
  CHECK_THROWS_AS(StackedModel(std::move(base), std::move(meta), 0.5, 0), ShapeError);

  StackedModel ok = train_stacked(d.X, d.y, roster, default_meta_learner(), {}, 1);
  CHECK_THROWS_AS(stacked_predict(ok, Matrix::Zero(2, 4)), ShapeError);
}

TEST_CASE("a stack learner plugs into the generic learner contract") {
  Dataset d = make_blobs(20, 3, 4, 2.5, 1.0, 11);
  Learner stack = make_stack_learner({LearnerSpec::defaults(LearnerKind::knn), LearnerSpec::defaults(LearnerKind::cart)},
                                     default_meta_learner(), {});
  auto model = stack.fit(d.X, d.y, 3, 4);
  CHECK(model->n_classes() == 3);
  CHECK(accuracy(d.y, predict_labels(*model, d.X)) > 0.8);
}
