#include "harstack/boosting.hpp"

#include "harstack/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iterator>
#include <numeric>
#include <optional>

namespace harstack {

namespace {

constexpr double kNewtonGuard = 1e-10;
constexpr double kPriorFloor = 1e-12;

using ColumnMatrix = Eigen::MatrixXd;

constexpr std::size_t kMaxBins = 256;

/// Every feature reduced to at most 256 ordered bins. Cut b separates bin b
/// from bin b + 1 and sits midway between the neighbouring distinct values,
/// so a feature with at most 256 distinct values loses nothing.
struct BinnedFeatures {
  Index n = 0;
  Index d = 0;
  std::vector<std::uint8_t> codes;  // column-major n x d
  std::vector<std::vector<double>> cuts;

  const std::uint8_t* col(Index f) const { return codes.data() + static_cast<std::size_t>(f * n); }
};

double midpoint(double below, double above) {
  double t = below + 0.5 * (above - below);
  return t > below ? t : above;
}

BinnedFeatures bin_features(const ColumnMatrix& columns) {
  BinnedFeatures binned;
  binned.n = columns.rows();
  binned.d = columns.cols();
  binned.codes.resize(static_cast<std::size_t>(binned.n * binned.d));
  binned.cuts.resize(static_cast<std::size_t>(binned.d));
  std::vector<double> sorted;
  for (Index f = 0; f < binned.d; ++f) {
    const double* col = columns.col(f).data();
    sorted.assign(col, col + binned.n);
    std::sort(sorted.begin(), sorted.end());
    auto& cuts = binned.cuts[static_cast<std::size_t>(f)];
    std::vector<double> uniques;
    std::unique_copy(sorted.begin(), sorted.end(), std::back_inserter(uniques));
    if (uniques.size() <= kMaxBins) {
      for (std::size_t u = 0; u + 1 < uniques.size(); ++u) cuts.push_back(midpoint(uniques[u], uniques[u + 1]));
    } else {
      // Quantile cuts: after the sample at rank j * n / 256, up to the next
      // larger value.
      for (std::size_t j = 1; j < kMaxBins; ++j) {
        const double at = sorted[j * sorted.size() / kMaxBins];
        auto next = std::upper_bound(uniques.begin(), uniques.end(), at);
        if (next == uniques.end()) break;
        const double cut = midpoint(at, *next);
        if (cuts.empty() || cut > cuts.back()) cuts.push_back(cut);
      }
    }
    std::uint8_t* codes = binned.codes.data() + static_cast<std::size_t>(f * binned.n);
    for (Index i = 0; i < binned.n; ++i) {
      codes[i] = static_cast<std::uint8_t>(std::upper_bound(cuts.begin(), cuts.end(), col[i]) - cuts.begin());
    }
  }
  return binned;
}

struct Bin {
  double sum = 0.0;
  std::int64_t count = 0;
};

using Histogram = std::vector<Bin>;  // d x 256

struct FitResult {
  RegressionTree tree;
  std::vector<int> leaf_of;  // node index reached by every training sample
};

/// Least-squares tree on residual histograms. Splits are scanned per feature
/// in increasing threshold order and the first strict maximum of
/// SL^2/nL + SR^2/nR wins.
class RegressionTreeFitter {
 public:
  RegressionTreeFitter(const BinnedFeatures& binned, const Vector& residual, int max_depth)
      : binned_(binned), residual_(residual), max_depth_(max_depth) {}

  FitResult fit(int n_classes) {
    const auto n = static_cast<std::size_t>(binned_.n);
    rows_.resize(n);
    std::iota(rows_.begin(), rows_.end(), 0u);
    leaf_of_.assign(n, 0);
    nodes_.assign(1, RegressionNode{});
    Histogram root = build(0, n);
    grow(0, 0, n, 0, root);

    const double factor = static_cast<double>(n_classes - 1) / static_cast<double>(n_classes);
    for (auto& [id, begin, end] : leaves_) {
      double numerator = 0.0;
      double denominator = 0.0;
      for (std::size_t k = begin; k < end; ++k) {
        const double r = residual_(rows_[k]);
        numerator += r;
        denominator += std::abs(r) * (1.0 - std::abs(r));
        leaf_of_[rows_[k]] = id;
      }
      nodes_[static_cast<std::size_t>(id)].value = denominator < kNewtonGuard ? 0.0 : factor * numerator / denominator;
    }
    return FitResult{RegressionTree(std::move(nodes_)), std::move(leaf_of_)};
  }

 private:
  struct Leaf {
    int id;
    std::size_t begin;
    std::size_t end;
  };

  Histogram build(std::size_t begin, std::size_t end) const {
    Histogram hist(static_cast<std::size_t>(binned_.d) * kMaxBins);
    for (Index f = 0; f < binned_.d; ++f) {
      const std::uint8_t* codes = binned_.col(f);
      Bin* bins = hist.data() + static_cast<std::size_t>(f) * kMaxBins;
      for (std::size_t k = begin; k < end; ++k) {
        const std::uint32_t i = rows_[k];
        Bin& bin = bins[codes[i]];
        bin.sum += residual_(i);
        ++bin.count;
      }
    }
    return hist;
  }

  void grow(int id, std::size_t begin, std::size_t end, int depth, const Histogram& hist) {
    double sum = 0.0;
    double sum_sq = 0.0;
    for (std::size_t k = begin; k < end; ++k) {
      const double r = residual_(rows_[k]);
      sum += r;
      sum_sq += r * r;
    }
    const auto count = static_cast<std::int64_t>(end - begin);
    const double spread = sum_sq - sum * sum / static_cast<double>(std::max<std::int64_t>(count, 1));
    if (depth >= max_depth_ || count < 2 || !(spread > 1e-14 * std::max(1.0, sum_sq))) {
      leaves_.push_back({id, begin, end});
      return;
    }

    double best_score = -1.0;
    int best_feature = -1;
    std::size_t best_bin = 0;
    for (Index f = 0; f < binned_.d; ++f) {
      const Bin* bins = hist.data() + static_cast<std::size_t>(f) * kMaxBins;
      const std::size_t n_bins = binned_.cuts[static_cast<std::size_t>(f)].size() + 1;
      double left_sum = 0.0;
      std::int64_t left_count = 0;
      std::size_t last = 0;
      for (std::size_t b = 0; b < n_bins; ++b) {
        if (bins[b].count == 0) continue;
        if (left_count > 0) {
          const double right_sum = sum - left_sum;
          const double score = left_sum * left_sum / static_cast<double>(left_count) +
                               right_sum * right_sum / static_cast<double>(count - left_count);
          if (score > best_score) {
            best_score = score;
            best_feature = static_cast<int>(f);
            best_bin = last;
          }
        }
        left_sum += bins[b].sum;
        left_count += bins[b].count;
        last = b;
      }
    }
    if (best_feature < 0) {
      leaves_.push_back({id, begin, end});
      return;
    }

    const std::uint8_t* codes = binned_.col(best_feature);
    auto middle = std::stable_partition(rows_.begin() + static_cast<std::ptrdiff_t>(begin),
                                        rows_.begin() + static_cast<std::ptrdiff_t>(end),
                                        [&](std::uint32_t i) { return codes[i] <= best_bin; });
    const auto mid = static_cast<std::size_t>(middle - rows_.begin());
    const int left = static_cast<int>(nodes_.size());
    nodes_.emplace_back();
    nodes_.emplace_back();
    auto& node = nodes_[static_cast<std::size_t>(id)];
    node.feature = best_feature;
    node.threshold = binned_.cuts[static_cast<std::size_t>(best_feature)][best_bin];
    node.left = left;
    node.right = left + 1;

    if (depth + 1 >= max_depth_) {
      leaves_.push_back({left, begin, mid});
      leaves_.push_back({left + 1, mid, end});
      return;
    }
    // Histogram the smaller child; the sibling is the parent minus it.
    const bool left_smaller = mid - begin <= end - mid;
    Histogram small = left_smaller ? build(begin, mid) : build(mid, end);
    Histogram large(hist.size());
    for (std::size_t b = 0; b < hist.size(); ++b) {
      large[b].sum = hist[b].sum - small[b].sum;
      large[b].count = hist[b].count - small[b].count;
    }
    grow(left, begin, mid, depth + 1, left_smaller ? small : large);
    grow(left + 1, mid, end, depth + 1, left_smaller ? large : small);
  }

  const BinnedFeatures& binned_;
  const Vector& residual_;
  int max_depth_;
  std::vector<std::uint32_t> rows_;
  std::vector<int> leaf_of_;
  std::vector<RegressionNode> nodes_;
  std::vector<Leaf> leaves_;
};

}  // namespace

RegressionTree::RegressionTree(std::vector<RegressionNode> nodes) : nodes_(std::move(nodes)) {
  if (nodes_.empty()) throw ValidationError("regression tree without nodes");
}

double RegressionTree::predict(const Matrix& X, Index row) const {
  std::size_t at = 0;
  while (!nodes_[at].is_leaf()) {
    const auto& node = nodes_[at];
    at = static_cast<std::size_t>(X(row, node.feature) < node.threshold ? node.left : node.right);
  }
  return nodes_[at].value;
}

int RegressionTree::depth() const {
  std::vector<int> depth(nodes_.size(), 0);
  int deepest = 0;
  for (std::size_t id = 0; id < nodes_.size(); ++id) {
    const auto& node = nodes_[id];
    if (node.is_leaf()) continue;
    depth[static_cast<std::size_t>(node.left)] = depth[id] + 1;
    depth[static_cast<std::size_t>(node.right)] = depth[id] + 1;
    deepest = std::max(deepest, depth[id] + 1);
  }
  return deepest;
}

GradientBoostingModel::GradientBoostingModel(Vector initial_scores, std::vector<std::vector<RegressionTree>> stages,
                                             double learning_rate, int max_depth, Index n_features)
    : initial_scores_(std::move(initial_scores)),
      stages_(std::move(stages)),
      learning_rate_(learning_rate),
      max_depth_(max_depth),
      n_features_(n_features) {
  for (const auto& stage : stages_) {
    if (static_cast<Index>(stage.size()) != initial_scores_.size()) throw ShapeError("one tree per class per stage");
  }
}

Matrix GradientBoostingModel::raw_scores(const Matrix& X, std::size_t n_stages) const {
  check_features(X);
  if (n_stages > stages_.size()) throw ValidationError("stage index beyond fitted stages");
  Matrix scores = initial_scores_.transpose().replicate(X.rows(), 1);
  for (std::size_t s = 0; s < n_stages; ++s) {
    for (std::size_t c = 0; c < stages_[s].size(); ++c) {
      const auto& tree = stages_[s][c];
      for (Index i = 0; i < X.rows(); ++i) scores(i, static_cast<Index>(c)) += learning_rate_ * tree.predict(X, i);
    }
  }
  return scores;
}

Matrix GradientBoostingModel::staged_predict_proba(const Matrix& X, std::size_t n_stages) const {
  return softmax_rows(raw_scores(X, n_stages));
}

Matrix GradientBoostingModel::predict_proba(const Matrix& X) const { return staged_predict_proba(X, stages_.size()); }

double multinomial_deviance(const Matrix& scores, const Labels& y) {
  if (static_cast<std::size_t>(scores.rows()) != y.size()) throw ShapeError("score rows and label count differ");
  double total = 0.0;
  for (Index i = 0; i < scores.rows(); ++i) {
    const double peak = scores.row(i).maxCoeff();
    const double log_norm = peak + std::log((scores.row(i).array() - peak).exp().sum());
    total += log_norm - scores(i, y[static_cast<std::size_t>(i)]);
  }
  return total / static_cast<double>(scores.rows());
}

GradientBoostingModel train_gradient_boosting(const Matrix& X, const Labels& y, const GradientBoostingParams& params,
                                              int n_classes) {
  if (X.rows() == 0 || static_cast<std::size_t>(X.rows()) != y.size()) throw ShapeError("X rows and label count differ");
  if (params.n_estimators < 1) throw ValidationError("n_estimators must be at least 1");
  if (!(params.learning_rate > 0.0 && params.learning_rate <= 1.0)) {
    throw ValidationError("learning_rate must lie in (0, 1]");
  }
  if (params.max_depth < 1) throw ValidationError("max_depth must be at least 1");
  const int inferred = infer_n_classes(y);
  if (n_classes == 0) n_classes = inferred;
  if (inferred > n_classes) throw ValidationError("label exceeds declared class count");
  const auto counts = class_counts(y, n_classes);
  if (std::count_if(counts.begin(), counts.end(), [](std::size_t c) { return c > 0; }) < 2) {
    throw ValidationError("training labels contain fewer than 2 classes");
  }

  const Index n = X.rows();
  Vector initial(n_classes);
  for (int c = 0; c < n_classes; ++c) {
    const double prior = static_cast<double>(counts[static_cast<std::size_t>(c)]) / static_cast<double>(n);
    initial(c) = std::log(std::max(prior, kPriorFloor));
  }

  const ColumnMatrix columns = X;
  const BinnedFeatures binned = bin_features(columns);
  Matrix scores = initial.transpose().replicate(n, 1);
  std::vector<std::vector<RegressionTree>> stages;
  stages.reserve(static_cast<std::size_t>(params.n_estimators));

  for (int stage = 0; stage < params.n_estimators; ++stage) {
    const Matrix proba = softmax_rows(scores);
    std::vector<std::optional<FitResult>> fits(static_cast<std::size_t>(n_classes));
    parallel_for(fits.size(), params.workers, [&](std::size_t c) {
      Vector residual(n);
      for (Index i = 0; i < n; ++i) {
        residual(i) = (y[static_cast<std::size_t>(i)] == static_cast<ClassLabel>(c) ? 1.0 : 0.0) -
                      proba(i, static_cast<Index>(c));
      }
      fits[c].emplace(RegressionTreeFitter(binned, residual, params.max_depth).fit(n_classes));
    });
    std::vector<RegressionTree> trees;
    trees.reserve(fits.size());
    for (std::size_t c = 0; c < fits.size(); ++c) {
      const auto& fit = *fits[c];
      const auto& nodes = fit.tree.nodes();
      for (Index i = 0; i < n; ++i) {
        scores(i, static_cast<Index>(c)) +=
            params.learning_rate * nodes[static_cast<std::size_t>(fit.leaf_of[static_cast<std::size_t>(i)])].value;
      }
      trees.push_back(fit.tree);
    }
    stages.push_back(std::move(trees));
  }
  return GradientBoostingModel(std::move(initial), std::move(stages), params.learning_rate, params.max_depth, X.cols());
}

std::vector<double> staged_train_loss(const GradientBoostingModel& model, const Matrix& X, const Labels& y) {
  std::vector<double> losses;
  losses.reserve(model.stages().size() + 1);
  Matrix scores = model.raw_scores(X, 0);
  losses.push_back(multinomial_deviance(scores, y));
  for (const auto& stage : model.stages()) {
    for (std::size_t c = 0; c < stage.size(); ++c) {
      for (Index i = 0; i < X.rows(); ++i) scores(i, static_cast<Index>(c)) += model.learning_rate() * stage[c].predict(X, i);
    }
    losses.push_back(multinomial_deviance(scores, y));
  }
  return losses;
}

}  // namespace harstack
