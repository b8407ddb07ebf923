#include "harstack/base_learners.hpp"

#include "harstack/parallel.hpp"
#include "harstack/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace harstack {

double sigmoid(double x) noexcept {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

namespace {

/// log(1 + e^z) without overflow.
double softplus(double z) noexcept { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

void require_two_classes(const Labels& y, int n_classes) {
  auto counts = class_counts(y, n_classes);
  auto present = std::count_if(counts.begin(), counts.end(), [](std::size_t c) { return c > 0; });
  if (present < 2) throw ValidationError("training labels contain fewer than 2 classes");
}

int resolve_classes(const Labels& y, int n_classes) {
  int inferred = infer_n_classes(y);
  if (n_classes == 0) return inferred;
  if (inferred > n_classes) throw ValidationError("label exceeds declared class count");
  return n_classes;
}

/// Largest singular value of [X 1] by power iteration on its Gram operator.
double spectral_norm_with_bias(const Matrix& X) {
  const Index d = X.cols();
  Vector v = Vector::Constant(d + 1, 1.0 / std::sqrt(static_cast<double>(d + 1)));
  double sigma_sq = 0.0;
  for (int it = 0; it < 100; ++it) {
    Vector z = X * v.head(d);
    z.array() += v(d);
    Vector next(d + 1);
    next.head(d) = X.transpose() * z;
    next(d) = z.sum();
    double norm = next.norm();
    if (norm == 0.0) return 0.0;
    double previous = sigma_sq;
    sigma_sq = norm;
    v = next / norm;
    if (std::abs(sigma_sq - previous) <= 1e-10 * sigma_sq) break;
  }
  return std::sqrt(sigma_sq);
}

double soft_threshold(double v, double t) noexcept {
  if (v > t) return v - t;
  if (v < -t) return v + t;
  return 0.0;
}

struct BinaryFit {
  Vector w;
  double b = 0.0;
};

BinaryFit fit_binary_logistic(const Matrix& X, const Vector& targets, double lambda, double lipschitz,
                              int max_iters, double tol) {
  const Index d = X.cols();
  const double step = 1.0 / lipschitz;
  const double shrink = lambda * step;

  Vector x_w = Vector::Zero(d);
  double x_b = 0.0;
  Vector y_w = x_w;
  double y_b = x_b;
  double momentum = 1.0;

  for (int it = 0; it < max_iters; ++it) {
    LogisticLossEval at = logistic_loss(X, targets, y_w, y_b);
    Vector next_w = y_w - step * at.grad_w;
    for (Index j = 0; j < d; ++j) next_w(j) = soft_threshold(next_w(j), shrink);
    double next_b = y_b - step * at.grad_b;

    // Gradient mapping L * (y - prox(y - grad / L)) vanishes at a stationary point.
    double mapping = std::max(((y_w - next_w) * lipschitz).cwiseAbs().maxCoeff(), std::abs(y_b - next_b) * lipschitz);

    double next_momentum = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * momentum * momentum));
    double beta = (momentum - 1.0) / next_momentum;
    // Adaptive restart when the momentum direction opposes the proximal step.
    double alignment = (y_w - next_w).dot(next_w - x_w) + (y_b - next_b) * (next_b - x_b);
    if (alignment > 0.0) {
      next_momentum = 1.0;
      beta = 0.0;
    }
    y_w = next_w + beta * (next_w - x_w);
    y_b = next_b + beta * (next_b - x_b);
    x_w = std::move(next_w);
    x_b = next_b;
    momentum = next_momentum;
    if (mapping <= tol) break;
  }
  return {std::move(x_w), x_b};
}

}  // namespace

LinearOvRModel::LinearOvRModel(LinearKind kind, Matrix weights, Vector biases, double penalty)
    : kind_(kind), weights_(std::move(weights)), biases_(std::move(biases)), penalty_(penalty) {
  if (biases_.size() != weights_.rows()) throw ShapeError("one bias per weight row required");
  if (!weights_.allFinite() || !biases_.allFinite()) throw ValidationError("non-finite linear model parameters");
}

Matrix LinearOvRModel::decision_scores(const Matrix& X) const {
  check_features(X);
  Matrix scores = X * weights_.transpose();
  scores.rowwise() += biases_.transpose();
  return scores;
}

Matrix LinearOvRModel::predict_proba(const Matrix& X) const { return softmax_rows(decision_scores(X)); }

LogisticLossEval logistic_loss(const Matrix& X, const Vector& targets, const Vector& w, double b) {
  const auto n = static_cast<double>(X.rows());
  Vector z = X * w;
  z.array() += b;
  LogisticLossEval out;
  Vector residual(z.size());
  for (Index i = 0; i < z.size(); ++i) {
    out.loss += softplus(z(i)) - targets(i) * z(i);
    residual(i) = sigmoid(z(i)) - targets(i);
  }
  out.loss /= n;
  out.grad_w = X.transpose() * residual / n;
  out.grad_b = residual.sum() / n;
  return out;
}

LinearOvRModel train_logreg_ovr(const Matrix& X, const Labels& y, const LogRegParams& params, int n_classes) {
  if (static_cast<std::size_t>(X.rows()) != y.size()) throw ShapeError("X rows and label count differ");
  n_classes = resolve_classes(y, n_classes);
  require_two_classes(y, n_classes);
  const double lambda = params.l1_lambda.value_or(1.0 / static_cast<double>(X.rows()));
  if (!(lambda >= 0.0)) throw ValidationError("l1_lambda must be non-negative");
  if (params.max_iters < 1) throw ValidationError("max_iters must be positive");

  const double sigma = spectral_norm_with_bias(X);
  // Logistic curvature is at most 1/4; pad the power-iteration estimate.
  const double lipschitz = std::max(1e-12, 1.05 * sigma * sigma / (4.0 * static_cast<double>(X.rows())));

  Matrix weights(n_classes, X.cols());
  Vector biases(n_classes);
  parallel_for(static_cast<std::size_t>(n_classes), params.workers, [&](std::size_t c) {
    Vector targets(X.rows());
    for (Index i = 0; i < X.rows(); ++i) targets(i) = y[static_cast<std::size_t>(i)] == static_cast<ClassLabel>(c);
    BinaryFit fit = fit_binary_logistic(X, targets, lambda, lipschitz, params.max_iters, params.tol);
    weights.row(static_cast<Index>(c)) = fit.w.transpose();
    biases(static_cast<Index>(c)) = fit.b;
  });
  return LinearOvRModel(LinearKind::logistic, std::move(weights), std::move(biases), lambda);
}

double svm_objective(const Matrix& X, const Vector& signs, const Vector& w, double b, double C) {
  Vector margins = ((X * w).array() + b).matrix().cwiseProduct(signs);
  double hinge = (1.0 - margins.array()).max(0.0).sum();
  return 0.5 * (w.squaredNorm() + b * b) + C * hinge;
}

LinearOvRModel train_linear_svm_ovr(const Matrix& X, const Labels& y, const SvmParams& params, RngSeed seed,
                                    int n_classes, SvmTrace* trace) {
  if (static_cast<std::size_t>(X.rows()) != y.size()) throw ShapeError("X rows and label count differ");
  if (!(params.C > 0.0)) throw ValidationError("C must be positive");
  if (params.epochs < 1) throw ValidationError("epochs must be positive");
  n_classes = resolve_classes(y, n_classes);
  require_two_classes(y, n_classes);

  const Index n = X.rows();
  const Index d = X.cols();
  const double lambda = 1.0 / (params.C * static_cast<double>(n));

  Matrix weights(n_classes, d);
  Vector biases(n_classes);
  if (trace) trace->epoch_objective.assign(static_cast<std::size_t>(n_classes), {});

  parallel_for(static_cast<std::size_t>(n_classes), params.workers, [&](std::size_t c) {
    Vector signs(n);
    for (Index i = 0; i < n; ++i) signs(i) = y[static_cast<std::size_t>(i)] == static_cast<ClassLabel>(c) ? 1.0 : -1.0;

    // Bias rides along as a constant unit feature, so it is regularised with w.
    Vector w = Vector::Zero(d);
    double b = 0.0;
    Vector avg_w = Vector::Zero(d);
    double avg_b = 0.0;
    std::vector<std::size_t> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::uint64_t t = 0;
    for (int epoch = 0; epoch < params.epochs; ++epoch) {
      Rng rng = make_stream(seed, "svm-epoch", static_cast<std::uint64_t>(c) * 1000003ULL + epoch);
      shuffle(order, rng);
      for (std::size_t i : order) {
        ++t;
        const double eta = 1.0 / (lambda * static_cast<double>(t));
        const auto row = X.row(static_cast<Index>(i));
        const double s = signs(static_cast<Index>(i));
        const double margin = s * (row.dot(w) + b);
        const double decay = 1.0 - 1.0 / static_cast<double>(t);
        w *= decay;
        b *= decay;
        if (margin < 1.0) {
          w.noalias() += (eta * s) * row.transpose();
          b += eta * s;
        }
        // Running average of iterates.
        const double mix = 1.0 / static_cast<double>(t);
        avg_w += mix * (w - avg_w);
        avg_b += mix * (b - avg_b);
      }
      if (trace) {
        trace->epoch_objective[c].push_back(svm_objective(X, signs, avg_w, avg_b, params.C));
      }
    }
    weights.row(static_cast<Index>(c)) = avg_w.transpose();
    biases(static_cast<Index>(c)) = avg_b;
  });
  return LinearOvRModel(LinearKind::svm, std::move(weights), std::move(biases), params.C);
}

KnnModel::KnnModel(Matrix X, Labels y, int k, int n_classes)
    : X_(std::move(X)), y_(std::move(y)), k_(k), n_classes_(n_classes) {
  if (static_cast<std::size_t>(X_.rows()) != y_.size()) throw ShapeError("X rows and label count differ");
  if (k_ < 1 || k_ > X_.rows()) {
    throw ValidationError("k=" + std::to_string(k_) + " outside [1, " + std::to_string(X_.rows()) + "]");
  }
  sq_norms_ = X_.rowwise().squaredNorm();
}

Matrix KnnModel::predict_proba(const Matrix& Q) const {
  check_features(Q);
  const Index n_train = X_.rows();
  const auto k = static_cast<std::size_t>(k_);
  Matrix proba = Matrix::Zero(Q.rows(), n_classes_);
  constexpr Index kBlock = 256;
  std::vector<std::pair<double, Index>> candidates(static_cast<std::size_t>(n_train));
  for (Index start = 0; start < Q.rows(); start += kBlock) {
    const Index rows = std::min(kBlock, Q.rows() - start);
    // |q - x|^2 = |q|^2 + |x|^2 - 2 q.x, batched as one product per block.
    Matrix dist = -2.0 * (Q.middleRows(start, rows) * X_.transpose());
    Vector q_norms = Q.middleRows(start, rows).rowwise().squaredNorm();
    for (Index r = 0; r < rows; ++r) {
      for (Index j = 0; j < n_train; ++j) {
        candidates[static_cast<std::size_t>(j)] = {std::max(0.0, dist(r, j) + q_norms(r) + sq_norms_(j)), j};
      }
      std::nth_element(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(k - 1), candidates.end());
      for (std::size_t m = 0; m < k; ++m) {
        proba(start + r, y_[static_cast<std::size_t>(candidates[m].second)]) += 1.0;
      }
    }
  }
  proba /= static_cast<double>(k);
  return proba;
}

KnnModel train_knn(const Matrix& X, const Labels& y, int k, int n_classes) {
  n_classes = resolve_classes(y, n_classes);
  return KnnModel(X, y, k, n_classes);
}

}  // namespace harstack
