#pragma once

#include "harstack/core.hpp"
#include "harstack/rng.hpp"

#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace harstack {

inline constexpr int kUnlimitedDepth = std::numeric_limits<int>::max();

enum class Splitter {
  best,    // midpoints of sorted distinct values
  random,  // one uniform threshold in [min, max) per candidate feature
};

struct TreeParams {
  int max_depth = kUnlimitedDepth;
  std::size_t min_leaf_samples = 1;
  /// Features examined per node; 0 means all of them.
  std::size_t candidate_features = 0;
  Splitter splitter = Splitter::best;
  /// Best splitter over all features: keep per-feature presorted sample lists
  /// instead of sorting at every node. Same splits either way.
  bool presorted = true;
};

/// Flat tree node. Internal nodes send x left iff x[feature] < threshold;
/// leaves own n_classes entries of `DecisionTree::leaf_counts()`.
struct TreeNode {
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  int depth = 0;
  std::size_t counts_offset = 0;

  bool is_leaf() const { return feature < 0; }
};

struct SplitChoice {
  Index feature = 0;
  double threshold = 0.0;
  /// Sample-weighted Gini impurity of the two children.
  double impurity = 0.0;
};

class DecisionTree final : public Classifier {
 public:
  DecisionTree(std::vector<TreeNode> nodes, std::vector<std::uint32_t> leaf_counts, int n_classes, Index n_features);

  Matrix predict_proba(const Matrix& X) const override;
  int n_classes() const override { return n_classes_; }
  Index n_features() const override { return n_features_; }

  /// Adds this tree's leaf class frequencies for row `row` of X into `out`.
  void accumulate_proba(const Matrix& X, Index row, double* out) const;

  const std::vector<TreeNode>& nodes() const { return nodes_; }
  std::span<const std::uint32_t> leaf_counts(const TreeNode& leaf) const;
  int depth() const;

 private:
  std::size_t find_leaf(const Matrix& X, Index row) const;

  std::vector<TreeNode> nodes_;
  std::vector<std::uint32_t> leaf_counts_;
  int n_classes_;
  Index n_features_;
};

/// Greedy top-down Gini tree on the listed rows (duplicates allowed, as in a
/// bootstrap sample). Leaves store raw class counts.
DecisionTree train_cart(const Matrix& X, const Labels& y, const TreeParams& params, Rng& rng, int n_classes = 0,
                        std::span<const std::size_t> rows = {});
DecisionTree train_cart(const Matrix& X, const Labels& y, const TreeParams& params, RngSeed seed,
                        int n_classes = 0);

/// Extra-trees node split. Draws `candidate_features` distinct features
/// (sorted ascending after drawing), then one uniform threshold per
/// non-constant candidate in that order, and keeps the lowest child Gini.
/// Returns nullopt when every candidate is constant or no draw leaves at
/// least `min_leaf_samples` on both sides.
std::optional<SplitChoice> extra_trees_node_split(const Matrix& X, const Labels& y, int n_classes,
                                                  std::span<const std::size_t> rows, std::size_t candidate_features,
                                                  Rng& rng, std::size_t min_leaf_samples = 1);

/// Exhaustive best split over all features (lowest feature, then lowest
/// threshold on ties).
std::optional<SplitChoice> best_node_split(const Matrix& X, const Labels& y, int n_classes,
                                           std::span<const std::size_t> rows, std::size_t min_leaf_samples = 1);

enum class ForestKind { bagging, random_forest, extra_trees };

std::string to_string(ForestKind kind);
ForestKind parse_forest_kind(const std::string& name);

struct ForestParams {
  ForestKind kind = ForestKind::extra_trees;
  int n_estimators = 100;
  int max_depth = kUnlimitedDepth;
  std::size_t min_leaf_samples = 1;
  /// Overrides ceil(sqrt(d)) for random_forest / extra_trees.
  std::optional<std::size_t> candidate_features;
  unsigned workers = 1;
};

/// Receives (tree index, root sample rows) before each tree grows. May be
/// called from several threads at once.
using RootSampleObserver = std::function<void(std::size_t, std::span<const std::size_t>)>;

class ForestModel final : public Classifier {
 public:
  ForestModel(ForestKind kind, std::vector<DecisionTree> trees, RngSeed seed = 0);

  /// Mean of per-tree leaf class distributions.
  Matrix predict_proba(const Matrix& X) const override;
  int n_classes() const override { return trees_.front().n_classes(); }
  Index n_features() const override { return trees_.front().n_features(); }

  ForestKind kind() const { return kind_; }
  const std::vector<DecisionTree>& trees() const { return trees_; }
  RngSeed seed() const { return seed_; }

 private:
  ForestKind kind_;
  std::vector<DecisionTree> trees_;
  RngSeed seed_;
};

std::size_t default_candidate_features(ForestKind kind, Index n_features);

/// bagging: bootstrap + all features, best splits. random_forest: bootstrap +
/// ceil(sqrt(d)) candidates, best splits. extra_trees: every sample once +
/// ceil(sqrt(d)) candidates, random thresholds. Tree i draws from stream
/// (seed, kind, i).
ForestModel train_forest(const Matrix& X, const Labels& y, const ForestParams& params, RngSeed seed,
                         int n_classes = 0, const RootSampleObserver& observer = {});

}  // namespace harstack
