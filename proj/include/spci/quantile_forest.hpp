#pragma once

#include <limits>
#include <numeric>
#include <utility>

#include "spci/core.hpp"

namespace spci {

// ---------------------------------------------------------------------------
// Forest configuration
// ---------------------------------------------------------------------------

struct ForestParams {
    int n_trees = 50;
    int min_leaf_size = 5;
    int max_depth = -1;          // < 0: unbounded
    int features_per_split = 0;  // 0: ceil(d / 3)
    bool bootstrap_per_tree = true;
    RngSeed seed{};
    bool parallel = true;        // shard trees over threads; schedule-free either way

    void validate(std::size_t d) const {
        if (n_trees < 1) throw DomainError("n_trees must be >= 1");
        if (min_leaf_size < 1) throw DomainError("min_leaf_size must be >= 1");
        if (features_per_split < 0 || static_cast<std::size_t>(features_per_split) > d)
            throw DomainError("features_per_split must be in [0, d]");
    }

    std::size_t resolved_mtry(std::size_t d) const {
        if (features_per_split > 0) return static_cast<std::size_t>(features_per_split);
        return (d + 2) / 3;  // ceil(d/3)
    }
};

// ---------------------------------------------------------------------------
// Trees
// ---------------------------------------------------------------------------

/// Flat node: split_feature < 0 marks a leaf. Leaves hold the indices of all
/// training rows whose feature vector falls in the leaf's region, so leaves
/// partition the training set.
struct TreeNode {
    int split_feature = -1;
    double split_threshold = 0.0;
    int left = -1;
    int right = -1;
    std::vector<int> member_indices;  // populated for leaves only

    bool is_leaf() const { return split_feature < 0; }
};

struct Tree {
    std::vector<TreeNode> nodes;  // nodes[0] is the root

    int route(std::span<const double> x) const {
        int idx = 0;
        while (!nodes[idx].is_leaf()) {
            const TreeNode& node = nodes[idx];
            idx = (x[node.split_feature] <= node.split_threshold) ? node.left : node.right;
        }
        return idx;
    }
};

namespace detail {

struct SplitCandidate {
    bool found = false;
    int feature = -1;
    double threshold = 0.0;
    double child_sse = std::numeric_limits<double>::infinity();
};

/// Best variance-reduction split for one feature over the rows in `rows`.
/// Thresholds are midpoints between consecutive distinct values; children
/// must each keep at least min_leaf rows. Ties keep the smallest threshold
/// because the scan goes left to right and only strict improvements win.
inline void scan_feature(const Matrix& x, const std::vector<double>& y,
                         const std::vector<int>& rows, int feature, int min_leaf,
                         std::vector<std::pair<double, double>>& scratch,
                         SplitCandidate& best) {
    const std::size_t n = rows.size();
    scratch.clear();
    scratch.reserve(n);
    for (int r : rows) scratch.emplace_back(x.at(r, feature), y[r]);
    std::sort(scratch.begin(), scratch.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    if (scratch.front().first == scratch.back().first) return;  // constant feature

    double total_sum = 0.0, total_sum2 = 0.0;
    for (const auto& vt : scratch) {
        total_sum += vt.second;
        total_sum2 += vt.second * vt.second;
    }

    double left_sum = 0.0, left_sum2 = 0.0;
    for (std::size_t i = 1; i < n; ++i) {
        left_sum += scratch[i - 1].second;
        left_sum2 += scratch[i - 1].second * scratch[i - 1].second;
        if (i < static_cast<std::size_t>(min_leaf) || n - i < static_cast<std::size_t>(min_leaf))
            continue;
        if (scratch[i - 1].first == scratch[i].first) continue;  // no boundary here
        const double right_sum = total_sum - left_sum;
        const double right_sum2 = total_sum2 - left_sum2;
        const double sse_left = left_sum2 - left_sum * left_sum / static_cast<double>(i);
        const double sse_right =
            right_sum2 - right_sum * right_sum / static_cast<double>(n - i);
        const double sse = sse_left + sse_right;
        if (sse < best.child_sse) {
            best.found = true;
            best.feature = feature;
            best.threshold = 0.5 * (scratch[i - 1].first + scratch[i].first);
            best.child_sse = sse;
        }
    }
}

/// Grow one CART-style regression tree on the given row multiset (bootstrap
/// draws keep duplicates). mtry feature subsets are resampled per node.
inline Tree grow_tree(const Matrix& x, const std::vector<double>& y,
                      const std::vector<int>& sample_rows, const ForestParams& params,
                      std::mt19937_64& rng) {
    Tree tree;
    const std::size_t d = x.n_cols;
    const std::size_t mtry = std::min(params.resolved_mtry(d), d);
    std::vector<int> feature_pool(d);
    std::iota(feature_pool.begin(), feature_pool.end(), 0);
    std::vector<std::pair<double, double>> scratch;

    struct Frame {
        std::vector<int> rows;
        int depth;
        int node_index;
    };

    tree.nodes.emplace_back();
    std::vector<Frame> stack;
    stack.push_back({sample_rows, 0, 0});

    while (!stack.empty()) {
        Frame frame = std::move(stack.back());
        stack.pop_back();
        const std::vector<int>& rows = frame.rows;

        bool stop = rows.size() < 2 * static_cast<std::size_t>(params.min_leaf_size);
        if (!stop && params.max_depth >= 0 && frame.depth >= params.max_depth) stop = true;
        if (!stop) {
            const double first = y[rows.front()];
            stop = std::all_of(rows.begin(), rows.end(),
                               [&](int r) { return y[r] == first; });
        }

        SplitCandidate best;
        if (!stop) {
            // Sample mtry features without replacement, then scan in
            // ascending index order so equal-gain ties pick the lowest index.
            for (std::size_t i = 0; i < mtry; ++i) {
                std::uniform_int_distribution<std::size_t> pick(i, d - 1);
                std::swap(feature_pool[i], feature_pool[pick(rng)]);
            }
            std::sort(feature_pool.begin(), feature_pool.begin() + mtry);
            for (std::size_t i = 0; i < mtry; ++i)
                scan_feature(x, y, rows, feature_pool[i], params.min_leaf_size, scratch, best);
        }

        if (stop || !best.found) {
            tree.nodes[frame.node_index].split_feature = -1;
            continue;
        }

        std::vector<int> left_rows, right_rows;
        left_rows.reserve(rows.size());
        right_rows.reserve(rows.size());
        for (int r : rows) {
            if (x.at(r, best.feature) <= best.threshold)
                left_rows.push_back(r);
            else
                right_rows.push_back(r);
        }

        const int left_index = static_cast<int>(tree.nodes.size());
        tree.nodes.emplace_back();
        const int right_index = static_cast<int>(tree.nodes.size());
        tree.nodes.emplace_back();
        TreeNode& node = tree.nodes[frame.node_index];
        node.split_feature = best.feature;
        node.split_threshold = best.threshold;
        node.left = left_index;
        node.right = right_index;

        stack.push_back({std::move(right_rows), frame.depth + 1, right_index});
        stack.push_back({std::move(left_rows), frame.depth + 1, left_index});
    }
    return tree;
}

/// Route every training row to its leaf; leaf membership defines node size.
inline void populate_members(Tree& tree, const Matrix& x) {
    for (auto& node : tree.nodes) node.member_indices.clear();
    for (std::size_t r = 0; r < x.n_rows; ++r)
        tree.nodes[tree.route(x.row(r))].member_indices.push_back(static_cast<int>(r));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Quantile regression forest
// ---------------------------------------------------------------------------

struct WeightVector {
    std::vector<double> weights;

    double sum() const { return std::accumulate(weights.begin(), weights.end(), 0.0); }
};

/// Forest over (features, targets) whose leaves induce data-adaptive weights
/// on the training targets; weights define an estimated conditional CDF and
/// its quantiles.
struct QuantileForest {
    std::vector<Tree> trees;
    Matrix training_features;
    std::vector<double> training_targets;
    ForestParams params;

    std::size_t n_training_rows() const { return training_targets.size(); }
};

/// Fit K trees on (features, targets). Degenerate inputs (too few rows to
/// split) yield single-leaf trees rather than an error; only an empty
/// training set is rejected.
inline QuantileForest fit_forest(const Matrix& features, const std::vector<double>& targets,
                                 const ForestParams& params) {
    if (targets.empty() || features.n_rows == 0)
        throw InsufficientDataError("cannot fit a forest on an empty training set");
    if (features.n_rows != targets.size())
        throw ShapeError("forest: feature rows != targets");
    params.validate(features.n_cols);

    QuantileForest forest;
    forest.training_features = features;
    forest.training_targets = targets;
    forest.params = params;
    forest.trees.resize(params.n_trees);

    const std::size_t n = targets.size();
    parallel_for(static_cast<std::size_t>(params.n_trees), params.parallel, [&](std::size_t k) {
        auto rng = params.seed.child(k).engine();
        std::vector<int> rows(n);
        if (params.bootstrap_per_tree) {
            std::uniform_int_distribution<std::size_t> pick(0, n - 1);
            for (std::size_t i = 0; i < n; ++i) rows[i] = static_cast<int>(pick(rng));
        } else {
            std::iota(rows.begin(), rows.end(), 0);
        }
        forest.trees[k] = detail::grow_tree(features, targets, rows, params, rng);
        detail::populate_members(forest.trees[k], features);
    });
    return forest;
}

inline QuantileForest fit_forest(const LaggedResidualSet& data, const ForestParams& params) {
    return fit_forest(data.features, data.targets, params);
}

/// Data-adaptive weights at query x: per tree, rows sharing x's leaf get
/// 1/(node size), averaged over trees. Sums to 1 up to float accumulation.
inline WeightVector forest_weights(const QuantileForest& forest, std::span<const double> x) {
    if (x.size() != forest.training_features.n_cols)
        throw ShapeError("query dimension " + std::to_string(x.size()) +
                         " != training dimension " +
                         std::to_string(forest.training_features.n_cols));
    WeightVector wv;
    wv.weights.assign(forest.n_training_rows(), 0.0);
    const double inv_k = 1.0 / static_cast<double>(forest.trees.size());
    for (const Tree& tree : forest.trees) {
        const auto& members = tree.nodes[tree.route(x)].member_indices;
        const double contribution = inv_k / static_cast<double>(members.size());
        for (int t : members) wv.weights[t] += contribution;
    }
    return wv;
}

/// Cumulative weight tolerance used when inverting step CDFs. Matches the
/// tolerance at which forest weights are guaranteed to sum to one, and keeps
/// the uniform-weight case consistent with the ceil(p*n) order statistic.
inline constexpr double kCumWeightTol = 1e-9;

/// Sorted (target, cumulative weight) view of a weighted empirical
/// distribution; supports repeated quantile queries.
class WeightedTargetDistribution {
public:
    WeightedTargetDistribution(const std::vector<double>& targets,
                               const std::vector<double>& weights) {
        entries_.reserve(targets.size());
        for (std::size_t t = 0; t < targets.size(); ++t)
            if (weights[t] > 0.0) entries_.emplace_back(targets[t], weights[t]);
        std::sort(entries_.begin(), entries_.end(),
                  [](const auto& a, const auto& b) { return a.first < b.first; });
        double cum = 0.0;
        for (auto& e : entries_) {
            cum += e.second;
            e.second = cum;  // second now holds the cumulative weight
        }
    }

    bool empty() const { return entries_.empty(); }

    /// inf{z in targets : F(z) >= p}; p=0 yields the smallest and p=1 the
    /// largest positive-weight target.
    double quantile(double p) const {
        if (!(p >= 0.0 && p <= 1.0)) throw DomainError("quantile level must be in [0, 1]");
        if (entries_.empty()) throw EmptyInputError("empty weighted distribution");
        for (const auto& e : entries_)
            if (e.second >= p - kCumWeightTol) return e.first;
        return entries_.back().first;
    }

private:
    std::vector<std::pair<double, double>> entries_;
};

/// Estimated conditional CDF: sum of weights of training targets <= z.
inline double conditional_cdf(const QuantileForest& forest, std::span<const double> x,
                              double z) {
    WeightVector wv = forest_weights(forest, x);
    double f = 0.0;
    for (std::size_t t = 0; t < wv.weights.size(); ++t)
        if (forest.training_targets[t] <= z) f += wv.weights[t];
    return f;
}

/// Smallest training target whose estimated conditional CDF reaches p.
inline double conditional_quantile(const QuantileForest& forest, std::span<const double> x,
                                   double p) {
    if (!(p >= 0.0 && p <= 1.0)) throw DomainError("quantile level must be in [0, 1]");
    WeightVector wv = forest_weights(forest, x);
    return WeightedTargetDistribution(forest.training_targets, wv.weights).quantile(p);
}

/// Asymmetric check loss whose minimizer is the alpha-quantile. Validation
/// metric only; tree fitting uses variance splits.
inline double pinball_loss(double x, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("pinball alpha must be in (0, 1)");
    return x >= 0.0 ? alpha * x : (alpha - 1.0) * x;
}

}  // namespace spci
