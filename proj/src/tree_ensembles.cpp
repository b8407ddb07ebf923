#include "harstack/tree_ensembles.hpp"

#include "harstack/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace harstack {

namespace {

using ColumnMatrix = Eigen::MatrixXd;

/// Per-feature value ranks, distinct values and sample order, shared by every
/// tree of a forest.
struct FeatureIndex {
  Index n = 0;
  Index d = 0;
  std::vector<std::uint32_t> ranks;  // column-major n x d
  std::vector<std::vector<double>> uniques;
  std::vector<std::vector<std::uint32_t>> order;

  const std::uint32_t* rank_col(Index f) const { return ranks.data() + static_cast<std::size_t>(f * n); }
};

FeatureIndex build_index(const ColumnMatrix& columns) {
  FeatureIndex index;
  index.n = columns.rows();
  index.d = columns.cols();
  index.ranks.resize(static_cast<std::size_t>(index.n * index.d));
  index.uniques.resize(static_cast<std::size_t>(index.d));
  index.order.resize(static_cast<std::size_t>(index.d));
  for (Index f = 0; f < index.d; ++f) {
    const double* col = columns.col(f).data();
    auto& order = index.order[static_cast<std::size_t>(f)];
    order.resize(static_cast<std::size_t>(index.n));
    std::iota(order.begin(), order.end(), 0u);
    std::stable_sort(order.begin(), order.end(), [col](std::uint32_t a, std::uint32_t b) { return col[a] < col[b]; });
    auto& uniques = index.uniques[static_cast<std::size_t>(f)];
    std::uint32_t* ranks = index.ranks.data() + static_cast<std::size_t>(f * index.n);
    for (std::uint32_t s : order) {
      if (uniques.empty() || col[s] > uniques.back()) uniques.push_back(col[s]);
      ranks[s] = static_cast<std::uint32_t>(uniques.size() - 1);
    }
  }
  return index;
}

double midpoint_threshold(double below, double above) {
  double t = below + 0.5 * (above - below);
  return t > below ? t : above;
}

struct SplitScratch {
  std::vector<std::uint64_t> keys;
  std::vector<std::int64_t> left;
  std::vector<std::int64_t> right;
};

constexpr unsigned kLabelBits = 16;

std::vector<std::size_t> draw_candidates(Index n_features, std::size_t count, Rng& rng) {
  const auto d = static_cast<std::size_t>(n_features);
  if (count == 0 || count >= d) {
    std::vector<std::size_t> all(d);
    std::iota(all.begin(), all.end(), std::size_t{0});
    return all;
  }
  auto picked = sample_without_replacement(d, count, rng);
  std::sort(picked.begin(), picked.end());
  return picked;
}

double squared_sum(const std::vector<std::int64_t>& counts) {
  std::int64_t s = 0;
  for (auto c : counts) s += c * c;
  return static_cast<double>(s);
}

/// Running Gini bookkeeping for a left-to-right scan over sorted samples.
/// Maximising sum_k cL_k^2 / nL + sum_k cR_k^2 / nR minimises child Gini.
struct GiniScan {
  std::vector<std::int64_t> left;
  std::vector<std::int64_t> right;
  std::int64_t sq_left = 0;
  std::int64_t sq_right = 0;

  void reset(const std::vector<std::int64_t>& total) {
    left.assign(total.size(), 0);
    right = total;
    sq_left = 0;
    sq_right = 0;
    for (auto c : total) sq_right += c * c;
  }
  void move_left(std::size_t label) {
    sq_left += 2 * left[label] + 1;
    ++left[label];
    sq_right -= 2 * right[label] - 1;
    --right[label];
  }
  double score(std::int64_t n_left, std::int64_t n_right) const {
    return static_cast<double>(sq_left) / static_cast<double>(n_left) +
           static_cast<double>(sq_right) / static_cast<double>(n_right);
  }
};

std::vector<std::int64_t> label_totals(const Labels& y, int n_classes, std::span<const std::size_t> rows) {
  std::vector<std::int64_t> total(static_cast<std::size_t>(n_classes), 0);
  for (std::size_t r : rows) ++total[static_cast<std::size_t>(y[r])];
  return total;
}

std::optional<SplitChoice> random_split(const ColumnMatrix& X, const Labels& y, int n_classes,
                                        std::span<const std::size_t> rows, const std::vector<std::size_t>& candidates,
                                        Rng& rng, std::size_t min_leaf, SplitScratch& scratch) {
  const auto n = static_cast<std::int64_t>(rows.size());
  const auto leaf_floor = static_cast<std::int64_t>(std::max<std::size_t>(min_leaf, 1));
  std::optional<SplitChoice> best;
  double best_score = -1.0;
  for (std::size_t f : candidates) {
    const double* col = X.col(static_cast<Index>(f)).data();
    double lo = col[rows[0]];
    double hi = lo;
    for (std::size_t r : rows) {
      lo = std::min(lo, col[r]);
      hi = std::max(hi, col[r]);
    }
    if (!(hi > lo)) continue;
    const double threshold = rng.uniform(lo, hi);

    scratch.left.assign(static_cast<std::size_t>(n_classes), 0);
    scratch.right.assign(static_cast<std::size_t>(n_classes), 0);
    std::int64_t n_left = 0;
    for (std::size_t r : rows) {
      auto label = static_cast<std::size_t>(y[r]);
      if (col[r] < threshold) {
        ++scratch.left[label];
        ++n_left;
      } else {
        ++scratch.right[label];
      }
    }
    const std::int64_t n_right = n - n_left;
    if (n_left < leaf_floor || n_right < leaf_floor) continue;
    const double score = squared_sum(scratch.left) / static_cast<double>(n_left) +
                         squared_sum(scratch.right) / static_cast<double>(n_right);
    if (score > best_score) {
      best_score = score;
      best = SplitChoice{static_cast<Index>(f), threshold, (static_cast<double>(n) - score) / static_cast<double>(n)};
    }
  }
  return best;
}

/// Exhaustive midpoint search over the candidates, sorting packed
/// (rank, label) keys per feature.
std::optional<SplitChoice> sorted_best_split(const FeatureIndex& index, const Labels& y, int n_classes,
                                             std::span<const std::size_t> rows,
                                             const std::vector<std::size_t>& candidates, std::size_t min_leaf,
                                             SplitScratch& scratch) {
  const auto n = static_cast<std::int64_t>(rows.size());
  const auto leaf_floor = static_cast<std::int64_t>(std::max<std::size_t>(min_leaf, 1));
  const auto total = label_totals(y, n_classes, rows);
  constexpr std::uint64_t kLabelMask = (std::uint64_t{1} << kLabelBits) - 1;

  std::optional<SplitChoice> best;
  double best_score = -1.0;
  GiniScan scan;
  auto& keys = scratch.keys;
  for (std::size_t f : candidates) {
    const std::uint32_t* ranks = index.rank_col(static_cast<Index>(f));
    keys.clear();
    for (std::size_t r : rows) keys.push_back((std::uint64_t{ranks[r]} << kLabelBits) | static_cast<std::uint64_t>(y[r]));
    std::sort(keys.begin(), keys.end());
    if ((keys.front() >> kLabelBits) == (keys.back() >> kLabelBits)) continue;

    scan.reset(total);
    for (std::int64_t i = 0; i + 1 < n; ++i) {
      const std::uint64_t key = keys[static_cast<std::size_t>(i)];
      scan.move_left(static_cast<std::size_t>(key & kLabelMask));
      const std::uint64_t here = key >> kLabelBits;
      const std::uint64_t next = keys[static_cast<std::size_t>(i + 1)] >> kLabelBits;
      if (next == here) continue;
      const std::int64_t n_left = i + 1;
      const std::int64_t n_right = n - n_left;
      if (n_left < leaf_floor || n_right < leaf_floor) continue;
      const double score = scan.score(n_left, n_right);
      if (score > best_score) {
        const auto& uniques = index.uniques[f];
        best_score = score;
        best = SplitChoice{static_cast<Index>(f), midpoint_threshold(uniques[here], uniques[next]),
                           (static_cast<double>(n) - score) / static_cast<double>(n)};
      }
    }
  }
  return best;
}

struct Pending {
  int node;
  std::size_t begin;
  std::size_t end;
};

class TreeBuilder {
 public:
  TreeBuilder(int n_classes, Index n_features) : n_classes_(n_classes), n_features_(n_features) {
    nodes_.push_back(TreeNode{});
  }

  void make_leaf(int id, std::span<const std::size_t> members, const Labels& y) {
    TreeNode& leaf = nodes_[static_cast<std::size_t>(id)];
    leaf.feature = -1;
    leaf.counts_offset = counts_.size();
    counts_.resize(counts_.size() + static_cast<std::size_t>(n_classes_), 0);
    for (std::size_t r : members) ++counts_[leaf.counts_offset + static_cast<std::size_t>(y[r])];
  }

  template <class Members>
  void make_leaf_from(int id, const Members& members, const Labels& y) {
    TreeNode& leaf = nodes_[static_cast<std::size_t>(id)];
    leaf.feature = -1;
    leaf.counts_offset = counts_.size();
    counts_.resize(counts_.size() + static_cast<std::size_t>(n_classes_), 0);
    for (auto r : members) ++counts_[leaf.counts_offset + static_cast<std::size_t>(y[r])];
  }

  /// Turns `id` into an internal node; returns (left, right) child ids.
  std::pair<int, int> split(int id, const SplitChoice& choice) {
    const int depth = nodes_[static_cast<std::size_t>(id)].depth;
    const int left = static_cast<int>(nodes_.size());
    nodes_.push_back(TreeNode{.depth = depth + 1});
    nodes_.push_back(TreeNode{.depth = depth + 1});
    TreeNode& node = nodes_[static_cast<std::size_t>(id)];
    node.feature = static_cast<int>(choice.feature);
    node.threshold = choice.threshold;
    node.left = left;
    node.right = left + 1;
    return {left, left + 1};
  }

  int depth(int id) const { return nodes_[static_cast<std::size_t>(id)].depth; }

  DecisionTree finish() && { return DecisionTree(std::move(nodes_), std::move(counts_), n_classes_, n_features_); }

 private:
  int n_classes_;
  Index n_features_;
  std::vector<TreeNode> nodes_;
  std::vector<std::uint32_t> counts_;
};

bool is_pure(const Labels& y, std::span<const std::size_t> members) {
  for (std::size_t r : members)
    if (y[r] != y[members.front()]) return false;
  return true;
}

bool can_split(const TreeParams& params, int depth, std::size_t size) {
  return depth < params.max_depth && size >= 2 * std::max<std::size_t>(params.min_leaf_samples, 1);
}

/// Depth-first growth; every node sorts (or scans) its own samples.
DecisionTree grow_tree(const ColumnMatrix& X, const FeatureIndex& index, const Labels& y, int n_classes,
                       std::vector<std::size_t> rows, const TreeParams& params, Rng& rng) {
  TreeBuilder builder(n_classes, X.cols());
  SplitScratch scratch;
  std::vector<Pending> stack{{0, 0, rows.size()}};
  while (!stack.empty()) {
    Pending job = stack.back();
    stack.pop_back();
    std::span<const std::size_t> members(rows.data() + job.begin, job.end - job.begin);

    std::optional<SplitChoice> choice;
    if (!is_pure(y, members) && can_split(params, builder.depth(job.node), members.size())) {
      auto candidates = draw_candidates(X.cols(), params.candidate_features, rng);
      choice = params.splitter == Splitter::best
                   ? sorted_best_split(index, y, n_classes, members, candidates, params.min_leaf_samples, scratch)
                   : random_split(X, y, n_classes, members, candidates, rng, params.min_leaf_samples, scratch);
    }
    if (!choice) {
      builder.make_leaf(job.node, members, y);
      continue;
    }
    const double* col = X.col(choice->feature).data();
    const double threshold = choice->threshold;
    auto first = rows.begin() + static_cast<std::ptrdiff_t>(job.begin);
    auto last = rows.begin() + static_cast<std::ptrdiff_t>(job.end);
    auto middle = std::stable_partition(first, last, [&](std::size_t r) { return col[r] < threshold; });
    const std::size_t mid = job.begin + static_cast<std::size_t>(middle - first);
    auto [left, right] = builder.split(job.node, *choice);
    // Right pushed first so the left subtree grows first.
    stack.push_back({right, mid, job.end});
    stack.push_back({left, job.begin, mid});
  }
  return std::move(builder).finish();
}

/// Best-split growth over all features with per-feature sample lists kept in
/// value order; a split stably partitions every list, so no node sorts.
DecisionTree grow_tree_presorted(const ColumnMatrix& X, const FeatureIndex& index, const Labels& y, int n_classes,
                                 const std::vector<std::size_t>& rows, const TreeParams& params) {
  const auto d = static_cast<std::size_t>(X.cols());
  const std::size_t m = rows.size();
  const auto leaf_floor = static_cast<std::int64_t>(std::max<std::size_t>(params.min_leaf_samples, 1));

  // Multiplicity of every sample (bootstrap rows may repeat).
  std::vector<std::uint32_t> multiplicity(static_cast<std::size_t>(X.rows()), 0);
  for (std::size_t r : rows) ++multiplicity[r];
  std::vector<std::vector<std::uint32_t>> lists(d);
  for (std::size_t f = 0; f < d; ++f) {
    auto& list = lists[f];
    list.reserve(m);
    for (std::uint32_t s : index.order[f]) list.insert(list.end(), multiplicity[s], s);
  }

  TreeBuilder builder(n_classes, X.cols());
  GiniScan scan;
  std::vector<std::uint32_t> buffer(m);
  std::vector<char> goes_left(static_cast<std::size_t>(X.rows()), 0);
  std::vector<Pending> stack{{0, 0, m}};
  while (!stack.empty()) {
    Pending job = stack.back();
    stack.pop_back();
    const auto n = static_cast<std::int64_t>(job.end - job.begin);
    const std::uint32_t* any = lists[0].data() + job.begin;
    std::span<const std::uint32_t> members(any, static_cast<std::size_t>(n));

    bool pure = true;
    for (auto s : members) pure = pure && y[s] == y[members.front()];
    std::optional<SplitChoice> best;
    if (!pure && can_split(params, builder.depth(job.node), members.size())) {
      std::vector<std::int64_t> total(static_cast<std::size_t>(n_classes), 0);
      for (auto s : members) ++total[static_cast<std::size_t>(y[s])];
      double best_score = -1.0;
      for (std::size_t f = 0; f < d; ++f) {
        const std::uint32_t* list = lists[f].data() + job.begin;
        const std::uint32_t* ranks = index.rank_col(static_cast<Index>(f));
        if (ranks[list[0]] == ranks[list[n - 1]]) continue;
        scan.reset(total);
        for (std::int64_t i = 0; i + 1 < n; ++i) {
          scan.move_left(static_cast<std::size_t>(y[list[i]]));
          const std::uint32_t here = ranks[list[i]];
          const std::uint32_t next = ranks[list[i + 1]];
          if (next == here) continue;
          const std::int64_t n_left = i + 1;
          const std::int64_t n_right = n - n_left;
          if (n_left < leaf_floor || n_right < leaf_floor) continue;
          const double score = scan.score(n_left, n_right);
          if (score > best_score) {
            best_score = score;
            best = SplitChoice{static_cast<Index>(f), midpoint_threshold(index.uniques[f][here], index.uniques[f][next]),
                               (static_cast<double>(n) - score) / static_cast<double>(n)};
          }
        }
      }
    }
    if (!best) {
      builder.make_leaf_from(job.node, members, y);
      continue;
    }

    const double* col = X.col(best->feature).data();
    std::size_t n_left = 0;
    for (auto s : members) {
      goes_left[s] = col[s] < best->threshold;
      n_left += goes_left[s];
    }
    for (std::size_t f = 0; f < d; ++f) {
      std::uint32_t* list = lists[f].data() + job.begin;
      std::size_t l = 0;
      std::size_t r = n_left;
      for (std::int64_t i = 0; i < n; ++i) {
        const std::uint32_t s = list[i];
        buffer[goes_left[s] ? l++ : r++] = s;
      }
      std::copy(buffer.begin(), buffer.begin() + n, list);
    }
    const std::size_t mid = job.begin + n_left;
    auto [left, right] = builder.split(job.node, *best);
    stack.push_back({right, mid, job.end});
    stack.push_back({left, job.begin, mid});
  }
  return std::move(builder).finish();
}

DecisionTree grow(const ColumnMatrix& X, const FeatureIndex& index, const Labels& y, int n_classes,
                  std::vector<std::size_t> rows, const TreeParams& params, Rng& rng) {
  if (rows.empty()) throw ValidationError("cannot grow a tree on empty data");
  const bool all_features = params.candidate_features == 0 || params.candidate_features >= static_cast<std::size_t>(X.cols());
  if (params.splitter == Splitter::best && all_features && params.presorted) {
    return grow_tree_presorted(X, index, y, n_classes, rows, params);
  }
  return grow_tree(X, index, y, n_classes, std::move(rows), params, rng);
}

int resolve_classes(const Labels& y, int n_classes) {
  int inferred = infer_n_classes(y);
  if (n_classes == 0) return inferred;
  if (inferred > n_classes) throw ValidationError("label exceeds declared class count");
  if (n_classes > (1 << kLabelBits)) throw ValidationError("too many classes");
  return n_classes;
}

std::vector<std::size_t> all_rows(std::size_t n) {
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return rows;
}

void check_training_shape(const Matrix& X, const Labels& y) {
  if (X.rows() == 0 || y.empty()) throw ValidationError("empty training data");
  if (static_cast<std::size_t>(X.rows()) != y.size()) throw ShapeError("X rows and label count differ");
}

}  // namespace

DecisionTree::DecisionTree(std::vector<TreeNode> nodes, std::vector<std::uint32_t> leaf_counts, int n_classes,
                           Index n_features)
    : nodes_(std::move(nodes)), leaf_counts_(std::move(leaf_counts)), n_classes_(n_classes), n_features_(n_features) {
  if (nodes_.empty()) throw ValidationError("tree without nodes");
}

std::size_t DecisionTree::find_leaf(const Matrix& X, Index row) const {
  std::size_t at = 0;
  while (!nodes_[at].is_leaf()) {
    const TreeNode& node = nodes_[at];
    at = static_cast<std::size_t>(X(row, node.feature) < node.threshold ? node.left : node.right);
  }
  return at;
}

std::span<const std::uint32_t> DecisionTree::leaf_counts(const TreeNode& leaf) const {
  return {leaf_counts_.data() + leaf.counts_offset, static_cast<std::size_t>(n_classes_)};
}

void DecisionTree::accumulate_proba(const Matrix& X, Index row, double* out) const {
  auto counts = leaf_counts(nodes_[find_leaf(X, row)]);
  double total = 0.0;
  for (auto c : counts) total += c;
  for (int k = 0; k < n_classes_; ++k) out[k] += counts[static_cast<std::size_t>(k)] / total;
}

Matrix DecisionTree::predict_proba(const Matrix& X) const {
  check_features(X);
  Matrix proba = Matrix::Zero(X.rows(), n_classes_);
  for (Index i = 0; i < X.rows(); ++i) accumulate_proba(X, i, proba.row(i).data());
  return proba;
}

int DecisionTree::depth() const {
  int deepest = 0;
  for (const auto& node : nodes_) deepest = std::max(deepest, node.depth);
  return deepest;
}

DecisionTree train_cart(const Matrix& X, const Labels& y, const TreeParams& params, Rng& rng, int n_classes,
                        std::span<const std::size_t> rows) {
  check_training_shape(X, y);
  if (params.max_depth < 1) throw ValidationError("max_depth must be at least 1");
  n_classes = resolve_classes(y, n_classes);
  std::vector<std::size_t> members = rows.empty() ? all_rows(y.size()) : std::vector<std::size_t>(rows.begin(), rows.end());
  const ColumnMatrix columns = X;
  const FeatureIndex index = build_index(columns);
  return grow(columns, index, y, n_classes, std::move(members), params, rng);
}

DecisionTree train_cart(const Matrix& X, const Labels& y, const TreeParams& params, RngSeed seed, int n_classes) {
  Rng rng = make_stream(seed, "cart", 0);
  return train_cart(X, y, params, rng, n_classes);
}

std::optional<SplitChoice> extra_trees_node_split(const Matrix& X, const Labels& y, int n_classes,
                                                  std::span<const std::size_t> rows, std::size_t candidate_features,
                                                  Rng& rng, std::size_t min_leaf_samples) {
  if (rows.size() < 2) return std::nullopt;
  SplitScratch scratch;
  const ColumnMatrix columns = X;
  auto candidates = draw_candidates(X.cols(), candidate_features, rng);
  return random_split(columns, y, n_classes, rows, candidates, rng, min_leaf_samples, scratch);
}

std::optional<SplitChoice> best_node_split(const Matrix& X, const Labels& y, int n_classes,
                                           std::span<const std::size_t> rows, std::size_t min_leaf_samples) {
  if (rows.size() < 2) return std::nullopt;
  SplitScratch scratch;
  std::vector<std::size_t> candidates(static_cast<std::size_t>(X.cols()));
  std::iota(candidates.begin(), candidates.end(), std::size_t{0});
  const FeatureIndex index = build_index(X);
  return sorted_best_split(index, y, n_classes, rows, candidates, min_leaf_samples, scratch);
}

std::string to_string(ForestKind kind) {
  switch (kind) {
    case ForestKind::bagging: return "bagging";
    case ForestKind::random_forest: return "random_forest";
    case ForestKind::extra_trees: return "extra_trees";
  }
  return "unknown";
}

ForestKind parse_forest_kind(const std::string& name) {
  if (name == "bagging") return ForestKind::bagging;
  if (name == "random_forest") return ForestKind::random_forest;
  if (name == "extra_trees") return ForestKind::extra_trees;
  throw ValidationError("unknown forest kind '" + name + "'");
}

ForestModel::ForestModel(ForestKind kind, std::vector<DecisionTree> trees, RngSeed seed)
    : kind_(kind), trees_(std::move(trees)), seed_(seed) {
  if (trees_.empty()) throw ValidationError("forest needs at least one tree");
  for (const auto& tree : trees_) {
    if (tree.n_features() != trees_.front().n_features() || tree.n_classes() != trees_.front().n_classes()) {
      throw ShapeError("forest trees disagree on feature or class count");
    }
  }
}

Matrix ForestModel::predict_proba(const Matrix& X) const {
  check_features(X);
  Matrix proba = Matrix::Zero(X.rows(), n_classes());
  for (Index i = 0; i < X.rows(); ++i) {
    double* out = proba.row(i).data();
    for (const auto& tree : trees_) tree.accumulate_proba(X, i, out);
  }
  proba /= static_cast<double>(trees_.size());
  return proba;
}

std::size_t default_candidate_features(ForestKind kind, Index n_features) {
  if (kind == ForestKind::bagging) return 0;
  return static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n_features))));
}

ForestModel train_forest(const Matrix& X, const Labels& y, const ForestParams& params, RngSeed seed, int n_classes,
                         const RootSampleObserver& observer) {
  check_training_shape(X, y);
  if (params.n_estimators < 1) throw ValidationError("n_estimators must be at least 1");
  if (params.max_depth < 1) throw ValidationError("max_depth must be at least 1");
  n_classes = resolve_classes(y, n_classes);

  TreeParams tree_params;
  tree_params.max_depth = params.max_depth;
  tree_params.min_leaf_samples = params.min_leaf_samples;
  tree_params.candidate_features = params.candidate_features.value_or(default_candidate_features(params.kind, X.cols()));
  tree_params.splitter = params.kind == ForestKind::extra_trees ? Splitter::random : Splitter::best;
  const bool bootstrap = params.kind != ForestKind::extra_trees;
  const std::string tag = "forest-" + to_string(params.kind);

  const ColumnMatrix columns = X;
  const FeatureIndex index = tree_params.splitter == Splitter::best ? build_index(columns) : FeatureIndex{};
  const std::size_t n = y.size();
  std::vector<std::optional<DecisionTree>> grown(static_cast<std::size_t>(params.n_estimators));
  parallel_for(grown.size(), params.workers, [&](std::size_t t) {
    Rng rng = make_stream(seed, tag, t);
    std::vector<std::size_t> rows;
    if (bootstrap) {
      rows.resize(n);
      for (auto& r : rows) r = rng.below(n);
    } else {
      rows = all_rows(n);
    }
    if (observer) observer(t, rows);
    grown[t].emplace(grow(columns, index, y, n_classes, std::move(rows), tree_params, rng));
  });

  std::vector<DecisionTree> trees;
  trees.reserve(grown.size());
  for (auto& tree : grown) trees.push_back(std::move(*tree));
  return ForestModel(params.kind, std::move(trees), seed);
}

}  // namespace harstack
