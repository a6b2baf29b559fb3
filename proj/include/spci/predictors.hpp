#pragma once

#include <memory>

#include "spci/quantile_forest.hpp"

namespace spci {

// ---------------------------------------------------------------------------
// Point predictors
// ---------------------------------------------------------------------------

class PointPredictor {
public:
    virtual ~PointPredictor() = default;
    virtual void fit(const Matrix& features, const std::vector<double>& responses,
                     RngSeed seed) = 0;
    virtual double predict(std::span<const double> x) const = 0;
    virtual std::unique_ptr<PointPredictor> clone_unfitted() const = 0;
};

namespace detail {

/// Solve (X'WX) beta = X'Wy by Gaussian elimination with partial pivoting.
/// A rank-deficient system is retried with 1e-8 ridge jitter on the Gram
/// diagonal.
inline std::vector<double> solve_weighted_normal_equations(const Matrix& x,
                                                           const std::vector<double>& y,
                                                           const std::vector<double>& w,
                                                           bool intercept) {
    const std::size_t n = x.n_rows;
    const std::size_t d = x.n_cols + (intercept ? 1 : 0);
    auto column = [&](std::size_t r, std::size_t j) -> double {
        if (intercept) return j == 0 ? 1.0 : x.at(r, j - 1);
        return x.at(r, j);
    };

    std::vector<double> gram(d * d, 0.0), rhs(d, 0.0);
    for (std::size_t r = 0; r < n; ++r) {
        const double wr = w[r];
        for (std::size_t i = 0; i < d; ++i) {
            const double xi = column(r, i);
            rhs[i] += wr * xi * y[r];
            for (std::size_t j = i; j < d; ++j) gram[i * d + j] += wr * xi * column(r, j);
        }
    }
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < i; ++j) gram[i * d + j] = gram[j * d + i];

    double scale = 0.0;
    for (std::size_t i = 0; i < d; ++i) scale = std::max(scale, std::abs(gram[i * d + i]));
    const double pivot_tol = std::max(scale, 1.0) * 1e-12;

    auto eliminate = [&](std::vector<double> a, std::vector<double> b,
                         std::vector<double>& out) -> bool {
        for (std::size_t col = 0; col < d; ++col) {
            std::size_t pivot = col;
            for (std::size_t r = col + 1; r < d; ++r)
                if (std::abs(a[r * d + col]) > std::abs(a[pivot * d + col])) pivot = r;
            if (std::abs(a[pivot * d + col]) < pivot_tol) return false;
            if (pivot != col) {
                for (std::size_t j = 0; j < d; ++j) std::swap(a[col * d + j], a[pivot * d + j]);
                std::swap(b[col], b[pivot]);
            }
            for (std::size_t r = col + 1; r < d; ++r) {
                const double f = a[r * d + col] / a[col * d + col];
                if (f == 0.0) continue;
                for (std::size_t j = col; j < d; ++j) a[r * d + j] -= f * a[col * d + j];
                b[r] -= f * b[col];
            }
        }
        out.assign(d, 0.0);
        for (std::size_t i = d; i-- > 0;) {
            double acc = b[i];
            for (std::size_t j = i + 1; j < d; ++j) acc -= a[i * d + j] * out[j];
            out[i] = acc / a[i * d + i];
        }
        return true;
    };

    std::vector<double> beta;
    if (eliminate(gram, rhs, beta)) return beta;
    for (std::size_t i = 0; i < d; ++i) gram[i * d + i] += 1e-8;
    if (!eliminate(gram, rhs, beta))
        throw DomainError("least squares: singular system even with ridge jitter");
    return beta;
}

}  // namespace detail

/// Ordinary least squares with intercept.
class LeastSquares : public PointPredictor {
public:
    void fit(const Matrix& features, const std::vector<double>& responses,
             RngSeed /*seed*/) override {
        if (features.n_rows < 1) throw InsufficientDataError("least squares: no rows");
        std::vector<double> w(features.n_rows, 1.0);
        coef_ = detail::solve_weighted_normal_equations(features, responses, w, true);
    }

    double predict(std::span<const double> x) const override {
        double v = coef_[0];
        for (std::size_t j = 0; j < x.size(); ++j) v += coef_[j + 1] * x[j];
        return v;
    }

    std::unique_ptr<PointPredictor> clone_unfitted() const override {
        return std::make_unique<LeastSquares>();
    }

    const std::vector<double>& coefficients() const { return coef_; }

private:
    std::vector<double> coef_;  // [intercept, slopes...]
};

/// Least squares where row i of n gets weight decay^(n-1-i): the newest row
/// carries full weight. decay = 1 reduces to ordinary least squares.
class ExponentiallyWeightedLeastSquares : public PointPredictor {
public:
    explicit ExponentiallyWeightedLeastSquares(double decay = 0.99) : decay_(decay) {
        if (!(decay > 0.0 && decay <= 1.0)) throw DomainError("decay must be in (0, 1]");
    }

    void fit(const Matrix& features, const std::vector<double>& responses,
             RngSeed /*seed*/) override {
        const std::size_t n = features.n_rows;
        if (n < 1) throw InsufficientDataError("weighted least squares: no rows");
        std::vector<double> w(n);
        double acc = 1.0;
        for (std::size_t i = n; i-- > 0;) {
            w[i] = acc;
            acc *= decay_;
        }
        coef_ = detail::solve_weighted_normal_equations(features, responses, w, true);
    }

    double predict(std::span<const double> x) const override {
        double v = coef_[0];
        for (std::size_t j = 0; j < x.size(); ++j) v += coef_[j + 1] * x[j];
        return v;
    }

    std::unique_ptr<PointPredictor> clone_unfitted() const override {
        return std::make_unique<ExponentiallyWeightedLeastSquares>(decay_);
    }

    const std::vector<double>& coefficients() const { return coef_; }

private:
    double decay_;
    std::vector<double> coef_;
};

/// Random forest point predictor: the quantile-forest tree builder with
/// leaf-mean aggregation.
class RegressionForest : public PointPredictor {
public:
    explicit RegressionForest(ForestParams params = {}) : params_(params) {}

    void fit(const Matrix& features, const std::vector<double>& responses,
             RngSeed seed) override {
        ForestParams p = params_;
        p.seed = seed;
        forest_ = fit_forest(features, responses, p);
        leaf_means_.assign(forest_.trees.size(), {});
        for (std::size_t k = 0; k < forest_.trees.size(); ++k) {
            const Tree& tree = forest_.trees[k];
            leaf_means_[k].assign(tree.nodes.size(), 0.0);
            for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
                const auto& members = tree.nodes[i].member_indices;
                if (members.empty()) continue;
                double sum = 0.0;
                for (int t : members) sum += responses[t];
                leaf_means_[k][i] = sum / static_cast<double>(members.size());
            }
        }
    }

    double predict(std::span<const double> x) const override {
        double sum = 0.0;
        for (std::size_t k = 0; k < forest_.trees.size(); ++k)
            sum += leaf_means_[k][forest_.trees[k].route(x)];
        return sum / static_cast<double>(forest_.trees.size());
    }

    std::unique_ptr<PointPredictor> clone_unfitted() const override {
        return std::make_unique<RegressionForest>(params_);
    }

private:
    ForestParams params_;
    QuantileForest forest_;
    std::vector<std::vector<double>> leaf_means_;
};

// ---------------------------------------------------------------------------
// Bootstrap ensembles with leave-one-out aggregation
// ---------------------------------------------------------------------------

enum class Aggregator { Mean, Median };

/// Aggregate a set of scalars. Values are sorted first so the result is
/// invariant under permutation of the models, bitwise.
inline double aggregate(std::vector<double> values, Aggregator how) {
    if (values.empty()) throw EmptyInputError("aggregate: no values");
    std::sort(values.begin(), values.end());
    if (how == Aggregator::Median) {
        const std::size_t n = values.size();
        return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
    }
    double sum = 0.0;
    for (double v : values) sum += v;
    return sum / static_cast<double>(values.size());
}

struct BootstrapEnsemble {
    std::vector<std::vector<int>> index_sets;               // multisets, one per model
    std::vector<std::unique_ptr<PointPredictor>> models;
    Aggregator aggregator = Aggregator::Mean;
    std::size_t train_rows = 0;

    std::size_t size() const { return models.size(); }
};

/// Fit B bootstrap models on rows sampled i.i.d. with replacement from the
/// training rows. Each model consumes its own RNG stream so fitting order
/// (or parallel schedule) cannot change the result.
inline BootstrapEnsemble fit_ensemble(const TimeSeriesDataset& data,
                                      const PointPredictor& prototype, int b_models,
                                      Aggregator aggregator, RngSeed seed,
                                      bool parallel = true) {
    data.validate();
    const std::size_t t_rows = data.train_size;
    if (b_models < 1) throw DomainError("B must be >= 1");
    if (t_rows < 2) throw InsufficientDataError("ensemble needs >= 2 training rows");

    BootstrapEnsemble ens;
    ens.aggregator = aggregator;
    ens.train_rows = t_rows;
    ens.index_sets.resize(b_models);
    ens.models.resize(b_models);

    parallel_for(static_cast<std::size_t>(b_models), parallel, [&](std::size_t b) {
        const RngSeed model_seed = seed.child(b);
        auto rng = model_seed.child(0).engine();
        std::uniform_int_distribution<std::size_t> pick(0, t_rows - 1);
        std::vector<int> rows(t_rows);
        for (std::size_t i = 0; i < t_rows; ++i) rows[i] = static_cast<int>(pick(rng));
        ens.index_sets[b] = rows;

        Matrix x(t_rows, data.features.n_cols);
        std::vector<double> y(t_rows);
        for (std::size_t i = 0; i < t_rows; ++i) {
            const int r = rows[i];
            std::copy_n(data.features.row(r).begin(), x.n_cols, x.row(i).begin());
            y[i] = data.responses[r];
        }
        ens.models[b] = prototype.clone_unfitted();
        ens.models[b]->fit(x, y, model_seed.child(1));
    });
    return ens;
}

/// Aggregate all B model predictions at x.
inline double ensemble_predict(const BootstrapEnsemble& ensemble, std::span<const double> x) {
    std::vector<double> preds(ensemble.size());
    for (std::size_t b = 0; b < ensemble.size(); ++b) preds[b] = ensemble.models[b]->predict(x);
    return aggregate(std::move(preds), ensemble.aggregator);
}

struct LooResult {
    std::vector<double> residuals;
    std::vector<int> fallback_indices;  // rows contained in every bootstrap sample
};

/// Leave-one-out residuals at the given training indices: each row is
/// predicted by aggregating only the models whose bootstrap sample excludes
/// it. Rows drawn into every sample fall back to the all-model aggregate and
/// are flagged.
inline LooResult loo_residuals_at(const BootstrapEnsemble& ensemble,
                                  const TimeSeriesDataset& data,
                                  const std::vector<int>& indices) {
    const std::size_t b_models = ensemble.size();
    std::vector<std::vector<char>> in_sample(b_models,
                                             std::vector<char>(ensemble.train_rows, 0));
    for (std::size_t b = 0; b < b_models; ++b)
        for (int r : ensemble.index_sets[b]) in_sample[b][r] = 1;

    LooResult result;
    result.residuals.resize(indices.size());
    std::vector<double> preds;
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const int t = indices[i];
        preds.clear();
        for (std::size_t b = 0; b < b_models; ++b)
            if (!in_sample[b][t]) preds.push_back(ensemble.models[b]->predict(data.features.row(t)));
        if (preds.empty()) {
            result.fallback_indices.push_back(t);
            for (std::size_t b = 0; b < b_models; ++b)
                preds.push_back(ensemble.models[b]->predict(data.features.row(t)));
        }
        result.residuals[i] = data.responses[t] - aggregate(preds, ensemble.aggregator);
    }
    return result;
}

inline LooResult loo_residuals(const BootstrapEnsemble& ensemble, const TimeSeriesDataset& data) {
    std::vector<int> all(ensemble.train_rows);
    std::iota(all.begin(), all.end(), 0);
    return loo_residuals_at(ensemble, data, all);
}

}  // namespace spci
