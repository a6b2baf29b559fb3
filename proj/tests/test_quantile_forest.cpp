#include <catch2/catch_amalgamated.hpp>

#include "oracles.hpp"
#include "spci/core.hpp"
#include "spci/quantile_forest.hpp"

using namespace spci;

namespace {

/// Random small training set plus a random query point.
struct RandomInstance {
    Matrix x;
    std::vector<double> y;
    std::vector<double> query;
};

RandomInstance random_instance(RngSeed seed, std::size_t max_rows = 50, std::size_t max_dim = 4) {
    auto rng = seed.engine();
    std::uniform_int_distribution<std::size_t> rows_pick(2, max_rows);
    std::uniform_int_distribution<std::size_t> dim_pick(1, max_dim);
    std::normal_distribution<double> gauss;
    RandomInstance inst;
    const std::size_t n = rows_pick(rng), d = dim_pick(rng);
    inst.x = Matrix(n, d);
    inst.y.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) inst.x.at(i, j) = gauss(rng);
        inst.y[i] = gauss(rng);
    }
    inst.query.resize(d);
    for (auto& q : inst.query) q = gauss(rng);
    return inst;
}

ForestParams small_params(RngSeed seed, int trees = 7) {
    ForestParams p;
    p.n_trees = trees;
    p.min_leaf_size = 2;
    p.seed = seed;
    return p;
}

}  // namespace

TEST_CASE("degenerate forests") {
    SECTION("constant targets give single-leaf trees") {
        Matrix x(20, 3);
        auto rng = RngSeed{1, 0}.engine();
        std::normal_distribution<double> gauss;
        for (auto& v : x.data) v = gauss(rng);
        std::vector<double> y(20, 4.25);
        QuantileForest forest = fit_forest(x, y, small_params({1, 1}));
        for (const Tree& tree : forest.trees) {
            REQUIRE(tree.nodes.size() == 1);
            REQUIRE(tree.nodes[0].member_indices.size() == 20);
        }
    }
    SECTION("one training row gives identical single-leaf trees") {
        Matrix x(1, 2);
        x.at(0, 0) = 1.0;
        x.at(0, 1) = 2.0;
        ForestParams p;
        p.n_trees = 3;
        p.min_leaf_size = 1;
        QuantileForest forest = fit_forest(x, {5.0}, p);
        REQUIRE(forest.trees.size() == 3);
        for (const Tree& tree : forest.trees) {
            REQUIRE(tree.nodes.size() == 1);
            REQUIRE(tree.nodes[0].member_indices == std::vector<int>{0});
        }
    }
    SECTION("empty training set is rejected") {
        Matrix x(0, 2);
        CHECK_THROWS_AS(fit_forest(x, {}, ForestParams{}), InsufficientDataError);
    }
}

TEST_CASE("first split matches the brute-force variance optimum") {
    // Targets are a step function of feature 0; nearly every tree's root
    // split threshold must sit between the largest negative and smallest
    // positive value of that feature.
    auto rng = RngSeed{2024, 3}.engine();
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    Matrix x(200, 2);
    std::vector<double> y(200);
    double max_neg = -1.0, min_pos = 1.0;
    for (std::size_t i = 0; i < 200; ++i) {
        const double v = unif(rng);
        x.at(i, 0) = v;
        x.at(i, 1) = unif(rng);
        y[i] = v > 0.0 ? 1.0 : 0.0;
        if (v > 0.0) min_pos = std::min(min_pos, v);
        else max_neg = std::max(max_neg, v);
    }
    ForestParams p;
    p.n_trees = 40;
    p.min_leaf_size = 5;
    p.features_per_split = 2;   // consider both features at every node
    p.bootstrap_per_tree = false;  // root split must then be the exact optimum
    p.seed = {77, 0};
    QuantileForest forest = fit_forest(x, y, p);

    std::vector<int> all_rows(200);
    std::iota(all_rows.begin(), all_rows.end(), 0);
    oracle::BestSplit expect = oracle::best_split(x, y, all_rows, 5);
    REQUIRE(expect.found);

    int good = 0;
    for (const Tree& tree : forest.trees) {
        REQUIRE_FALSE(tree.nodes[0].is_leaf());
        if (tree.nodes[0].split_feature == expect.feature &&
            tree.nodes[0].split_threshold > max_neg &&
            tree.nodes[0].split_threshold < min_pos)
            ++good;
        // without bootstrap all trees see the same rows: exact agreement
        REQUIRE(tree.nodes[0].split_feature == expect.feature);
        REQUIRE(tree.nodes[0].split_threshold == expect.threshold);
    }
    CHECK(good >= 36);  // >= 90%; the optimum always sits in the gap, so 40/40

    // With bootstrap on, each root optimizes its own resample: its threshold
    // separates that resample's classes, so the split feature is forced even
    // when the exact threshold wanders outside the full-sample gap.
    p.bootstrap_per_tree = true;
    QuantileForest boot = fit_forest(x, y, p);
    for (const Tree& tree : boot.trees) {
        REQUIRE_FALSE(tree.nodes[0].is_leaf());
        REQUIRE(tree.nodes[0].split_feature == 0);
    }
}

TEST_CASE("forest weights: forced arithmetic examples") {
    SECTION("single tree, single leaf: uniform weights") {
        Matrix x(4, 1);
        for (int i = 0; i < 4; ++i) x.at(i, 0) = i;
        ForestParams p;
        p.n_trees = 1;
        p.max_depth = 0;
        QuantileForest forest = fit_forest(x, {1, 2, 3, 4}, p);
        WeightVector w = forest_weights(forest, std::vector<double>{0.0});
        REQUIRE(w.weights.size() == 4);
        for (double v : w.weights) CHECK(v == 0.25);
    }
    SECTION("two hand-built trees: [0.25, 0.5, 0.25]") {
        QuantileForest forest;
        forest.training_features = Matrix(3, 1);
        forest.training_features.at(0, 0) = 0.0;
        forest.training_features.at(1, 0) = 1.0;
        forest.training_features.at(2, 0) = 2.0;
        forest.training_targets = {10.0, 20.0, 30.0};
        // tree 1: x <= 1.5 -> leaf {0, 1}; tree 2: x <= 0.5 -> {0}, else {1, 2}
        Tree t1;
        t1.nodes.resize(3);
        t1.nodes[0].split_feature = 0;
        t1.nodes[0].split_threshold = 1.5;
        t1.nodes[0].left = 1;
        t1.nodes[0].right = 2;
        t1.nodes[1].member_indices = {0, 1};
        t1.nodes[2].member_indices = {2};
        Tree t2;
        t2.nodes.resize(3);
        t2.nodes[0].split_feature = 0;
        t2.nodes[0].split_threshold = 0.5;
        t2.nodes[0].left = 1;
        t2.nodes[0].right = 2;
        t2.nodes[1].member_indices = {0};
        t2.nodes[2].member_indices = {1, 2};
        forest.trees = {t1, t2};
        // query x = 1.0 lands in {0,1} under tree 1 and {1,2} under tree 2
        WeightVector w = forest_weights(forest, std::vector<double>{1.0});
        CHECK(w.weights[0] == 0.25);
        CHECK(w.weights[1] == 0.5);
        CHECK(w.weights[2] == 0.25);
    }
    SECTION("dimension mismatch raises ShapeError") {
        Matrix x(4, 2);
        QuantileForest forest = fit_forest(x, {1, 2, 3, 4}, small_params({3, 3}));
        CHECK_THROWS_AS(forest_weights(forest, std::vector<double>{1.0}), ShapeError);
    }
}

TEST_CASE("cdf and quantile: forced examples") {
    Matrix x(4, 1);
    for (int i = 0; i < 4; ++i) x.at(i, 0) = i;
    ForestParams p;
    p.n_trees = 3;
    p.max_depth = 0;  // single-leaf forest: uniform weights
    QuantileForest forest = fit_forest(x, {1, 2, 3, 4}, p);
    const std::vector<double> q{0.0};

    CHECK(conditional_cdf(forest, q, 2.5) == Catch::Approx(0.5).margin(1e-12));
    CHECK(conditional_cdf(forest, q, 0.5) == 0.0);
    CHECK(conditional_cdf(forest, q, 4.0) == Catch::Approx(1.0).margin(1e-12));
    CHECK(conditional_cdf(forest, q, 99.0) == Catch::Approx(1.0).margin(1e-12));

    QuantileForest forest2 = fit_forest(x, {10, 20, 30, 40}, p);
    CHECK(conditional_quantile(forest2, q, 0.5) == 20.0);
    CHECK(conditional_quantile(forest2, q, 0.0) == 10.0);
    CHECK(conditional_quantile(forest2, q, 1.0) == 40.0);
    CHECK_THROWS_AS(conditional_quantile(forest2, q, 1.5), DomainError);
    CHECK_THROWS_AS(conditional_quantile(forest2, q, -0.1), DomainError);
}

TEST_CASE("oracle suite on random instances") {
    // Weights sum to one, positive weights only on leaf-sharing rows, CDF and
    // quantile agree exactly with independent scans, and both are monotone.
    auto meta_rng = RngSeed{555, 0}.engine();
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int trial = 0; trial < 120; ++trial) {
        RandomInstance inst = random_instance(RngSeed{555, static_cast<std::uint64_t>(trial + 1)});
        QuantileForest forest =
            fit_forest(inst.x, inst.y, small_params({99, static_cast<std::uint64_t>(trial)}));

        WeightVector w = forest_weights(forest, inst.query);
        REQUIRE(std::abs(w.sum() - 1.0) < 1e-9);
        std::vector<double> expect = oracle::forest_weights(forest, inst.query);
        for (std::size_t t = 0; t < expect.size(); ++t) {
            REQUIRE(w.weights[t] >= 0.0);
            REQUIRE(w.weights[t] == Catch::Approx(expect[t]).margin(1e-12));
            if (expect[t] == 0.0) REQUIRE(w.weights[t] == 0.0);
        }

        // CDF sweep over all target values plus surrounding points
        std::vector<double> zs = inst.y;
        zs.push_back(-1e9);
        zs.push_back(1e9);
        std::sort(zs.begin(), zs.end());
        double prev = -1.0;
        for (double z : zs) {
            const double f = conditional_cdf(forest, inst.query, z);
            REQUIRE(f == Catch::Approx(oracle::cdf(inst.y, w.weights, z)).margin(1e-12));
            REQUIRE(f >= prev);  // monotone in z
            REQUIRE((f >= 0.0 && f <= 1.0 + 1e-12));
            prev = f;
        }

        // quantile inversion at random levels, exact vs. the oracle scan
        double prev_q = -std::numeric_limits<double>::infinity();
        std::vector<double> levels{0.0, 1.0};
        for (int i = 0; i < 20; ++i) levels.push_back(unit(meta_rng));
        std::sort(levels.begin(), levels.end());
        for (double pl : levels) {
            const double qv = conditional_quantile(forest, inst.query, pl);
            REQUIRE(qv == oracle::quantile(inst.y, w.weights, pl));
            REQUIRE(qv >= prev_q);  // monotone in p
            prev_q = qv;
            // Galois: F(Q(p)) >= p (up to the documented tolerance)
            REQUIRE(conditional_cdf(forest, inst.query, qv) >= pl - 1e-9);
        }
    }
}

TEST_CASE("single-leaf forest equals the empirical quantile for every x") {
    auto rng = RngSeed{31, 0}.engine();
    std::normal_distribution<double> gauss;
    Matrix x(37, 2);
    std::vector<double> y(37);
    for (std::size_t i = 0; i < 37; ++i) {
        x.at(i, 0) = gauss(rng);
        x.at(i, 1) = gauss(rng);
        y[i] = gauss(rng);
    }
    ForestParams p;
    p.n_trees = 5;
    p.max_depth = 0;
    p.seed = {31, 1};
    QuantileForest forest = fit_forest(x, y, p);
    for (int i = 0; i < 10; ++i) {
        const std::vector<double> q{gauss(rng), gauss(rng)};
        for (double pl : {0.0, 0.05, 0.25, 0.5, 0.9, 1.0})
            REQUIRE(conditional_quantile(forest, q, pl) == oracle::empirical_quantile(y, pl));
    }
}

TEST_CASE("fixed seed gives identical forests under any schedule") {
    RandomInstance inst = random_instance({404, 0}, 200, 5);
    ForestParams p = small_params({404, 1}, 16);
    p.parallel = true;
    QuantileForest parallel_fit = fit_forest(inst.x, inst.y, p);
    p.parallel = false;
    QuantileForest serial_fit = fit_forest(inst.x, inst.y, p);
    REQUIRE(parallel_fit.trees.size() == serial_fit.trees.size());
    for (std::size_t k = 0; k < parallel_fit.trees.size(); ++k) {
        const auto& a = parallel_fit.trees[k].nodes;
        const auto& b = serial_fit.trees[k].nodes;
        REQUIRE(a.size() == b.size());
        for (std::size_t i = 0; i < a.size(); ++i) {
            REQUIRE(a[i].split_feature == b[i].split_feature);
            REQUIRE(a[i].split_threshold == b[i].split_threshold);
            REQUIRE(a[i].member_indices == b[i].member_indices);
        }
    }
}

TEST_CASE("median estimate improves with more data (consistency smoke)") {
    // Y | X ~ Normal(X[0], 1): the true conditional median is X[0].
    auto make_mae = [](std::size_t rows, std::uint64_t seed) {
        auto rng = RngSeed{seed, 0}.engine();
        std::normal_distribution<double> gauss;
        std::uniform_real_distribution<double> unif(-2.0, 2.0);
        Matrix x(rows, 1);
        std::vector<double> y(rows);
        for (std::size_t i = 0; i < rows; ++i) {
            x.at(i, 0) = unif(rng);
            y[i] = x.at(i, 0) + gauss(rng);
        }
        ForestParams p;
        p.n_trees = 30;
        // consistency needs node sizes growing with the sample
        p.min_leaf_size = static_cast<int>(rows / 40);
        p.seed = {seed, 1};
        QuantileForest forest = fit_forest(x, y, p);
        double mae = 0.0;
        const int queries = 60;
        for (int i = 0; i < queries; ++i) {
            const std::vector<double> q{unif(rng)};
            mae += std::abs(conditional_quantile(forest, q, 0.5) - q[0]);
        }
        return mae / queries;
    };
    double mae_small = 0.0, mae_large = 0.0;
    for (std::uint64_t s = 1; s <= 3; ++s) {
        mae_small += make_mae(200, s);
        mae_large += make_mae(2000, s + 100);
    }
    CHECK(mae_large < mae_small);
}

TEST_CASE("pinball loss") {
    CHECK(pinball_loss(2.0, 0.1) == Catch::Approx(0.2));
    CHECK(pinball_loss(-2.0, 0.1) == Catch::Approx(1.8));
    for (double a : {0.05, 0.3, 0.77}) CHECK(pinball_loss(0.0, a) == 0.0);
    CHECK_THROWS_AS(pinball_loss(1.0, 0.0), DomainError);
    CHECK_THROWS_AS(pinball_loss(1.0, 1.0), DomainError);
}
