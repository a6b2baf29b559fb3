#pragma once

#include "spci/predictors.hpp"

namespace spci {

// ---------------------------------------------------------------------------
// Empirical quantiles
// ---------------------------------------------------------------------------

/// Fixed convention shared by every method: the ceil(p*n)-th order statistic
/// (1-indexed), with p = 0 mapping to the minimum. The returned value is
/// always an element of the input.
struct EmpiricalQuantileConvention {
    static constexpr const char* rule = "order statistic at ceil(p*n); p=0 -> minimum";

    static std::size_t rank(double p, std::size_t n) {
        // ceil with a small slack so p*n that is mathematically integral but
        // rounds a hair above it does not jump an order statistic.
        auto k = static_cast<long long>(std::ceil(p * static_cast<double>(n) - kCumWeightTol));
        k = std::max<long long>(1, std::min<long long>(k, static_cast<long long>(n)));
        return static_cast<std::size_t>(k);
    }
};

inline double empirical_quantile(std::span<const double> values, double p) {
    if (values.empty()) throw EmptyInputError("empirical quantile of an empty set");
    if (!(p >= 0.0 && p <= 1.0)) throw DomainError("quantile level must be in [0, 1]");
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    return sorted[EmpiricalQuantileConvention::rank(p, sorted.size()) - 1];
}

inline double empirical_quantile(const ResidualWindow& window, double p) {
    return empirical_quantile(std::span<const double>(window.to_vector()), p);
}

// ---------------------------------------------------------------------------
// Split conformal
// ---------------------------------------------------------------------------

/// Fitted split-conformal constructor: a point predictor trained on one half
/// of the training rows and a fixed residual set from the other half, giving
/// constant-width intervals.
struct SplitConformal {
    std::unique_ptr<PointPredictor> predictor;
    std::vector<int> fit_indices;          // I1
    std::vector<int> calibration_indices;  // I2
    std::vector<double> calibration_residuals;
    double alpha = 0.1;
    double lower_offset = 0.0;
    double upper_offset = 0.0;

    PredictionInterval predict(std::span<const double> x) const {
        PredictionInterval pi;
        pi.method = Method::Split;
        pi.point = predictor->predict(x);
        pi.lower = pi.point + lower_offset;
        pi.upper = pi.point + upper_offset;
        return pi;
    }
};

inline SplitConformal split_conformal(const TimeSeriesDataset& data,
                                      const PointPredictor& prototype, double alpha,
                                      RngSeed seed) {
    data.validate();
    if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("alpha must be in (0, 1)");
    if (data.train_size < 4) throw InsufficientDataError("split conformal needs >= 4 train rows");

    std::vector<int> order(data.train_size);
    std::iota(order.begin(), order.end(), 0);
    auto rng = seed.engine();
    std::shuffle(order.begin(), order.end(), rng);

    SplitConformal sc;
    sc.alpha = alpha;
    const std::size_t half = data.train_size / 2;
    sc.fit_indices.assign(order.begin(), order.begin() + half);
    sc.calibration_indices.assign(order.begin() + half, order.end());
    std::sort(sc.fit_indices.begin(), sc.fit_indices.end());
    std::sort(sc.calibration_indices.begin(), sc.calibration_indices.end());

    Matrix x(sc.fit_indices.size(), data.features.n_cols);
    std::vector<double> y(sc.fit_indices.size());
    for (std::size_t i = 0; i < sc.fit_indices.size(); ++i) {
        const int r = sc.fit_indices[i];
        std::copy_n(data.features.row(r).begin(), x.n_cols, x.row(i).begin());
        y[i] = data.responses[r];
    }
    sc.predictor = prototype.clone_unfitted();
    sc.predictor->fit(x, y, seed.child(1));

    sc.calibration_residuals.reserve(sc.calibration_indices.size());
    for (int r : sc.calibration_indices)
        sc.calibration_residuals.push_back(data.responses[r] -
                                           sc.predictor->predict(data.features.row(r)));
    sc.lower_offset = empirical_quantile(sc.calibration_residuals, alpha / 2.0);
    sc.upper_offset = empirical_quantile(sc.calibration_residuals, 1.0 - alpha / 2.0);
    return sc;
}

// ---------------------------------------------------------------------------
// EnbPI
// ---------------------------------------------------------------------------

/// EnbPI band around a given point prediction: empirical alpha/2 and
/// 1 - alpha/2 quantiles of the current residual window. The caller pushes
/// the realized residual afterwards.
inline PredictionInterval enbpi_interval(const ResidualWindow& window, double point,
                                         double alpha) {
    if (window.empty()) throw EmptyInputError("EnbPI: empty residual window");
    std::vector<double> sorted = window.to_vector();
    std::sort(sorted.begin(), sorted.end());
    PredictionInterval pi;
    pi.method = Method::EnbPI;
    pi.point = point;
    pi.lower = point + sorted[EmpiricalQuantileConvention::rank(alpha / 2.0, sorted.size()) - 1];
    pi.upper =
        point + sorted[EmpiricalQuantileConvention::rank(1.0 - alpha / 2.0, sorted.size()) - 1];
    return pi;
}

inline PredictionInterval enbpi_step(const BootstrapEnsemble& ensemble,
                                     const ResidualWindow& window, std::span<const double> x_t,
                                     double alpha) {
    return enbpi_interval(window, ensemble_predict(ensemble, x_t), alpha);
}

// ---------------------------------------------------------------------------
// SPCI
// ---------------------------------------------------------------------------

struct SpciConfig {
    double alpha = 0.1;
    std::size_t w = 20;              // residual feature window
    ForestParams forest{};
    int beta_grid_size = 21;         // odd keeps alpha/2 on the grid
    int refit_stride = 1;
    std::size_t residual_capacity = 0;  // 0: number of training residuals
    bool normalize_heteroskedastic = false;
    std::optional<double> fixed_beta;   // bypasses the width search when set

    void validate() const {
        if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("alpha must be in (0, 1)");
        if (beta_grid_size < 2) throw DomainError("beta_grid_size must be >= 2");
        if (refit_stride < 1) throw DomainError("refit_stride must be >= 1");
        if (w < 1) throw DomainError("w must be >= 1");
        if (fixed_beta && !(*fixed_beta >= 0.0 && *fixed_beta <= alpha))
            throw DomainError("fixed beta must be in [0, alpha]");
    }
};

struct BetaSearchResult {
    double beta = 0.0;
    double lower_quantile = 0.0;
    double upper_quantile = 0.0;

    double width() const { return upper_quantile - lower_quantile; }
};

/// Minimize Q(1 - alpha + beta) - Q(beta) over the uniform grid
/// {0, alpha/(g-1), ..., alpha}; ties resolve to the smallest beta.
inline BetaSearchResult spci_beta_search(const QuantileForest& forest,
                                         std::span<const double> x_query, double alpha,
                                         int grid_size) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("alpha must be in (0, 1)");
    if (grid_size < 2) throw DomainError("beta grid size must be >= 2");
    WeightVector wv = forest_weights(forest, x_query);
    WeightedTargetDistribution dist(forest.training_targets, wv.weights);

    BetaSearchResult best;
    double best_width = std::numeric_limits<double>::infinity();
    for (int g = 0; g < grid_size; ++g) {
        const double beta = alpha * static_cast<double>(g) / static_cast<double>(grid_size - 1);
        const double lo = dist.quantile(beta);
        const double hi = dist.quantile(1.0 - alpha + beta);
        if (hi - lo < best_width) {
            best_width = hi - lo;
            best = BetaSearchResult{beta, lo, hi};
        }
    }
    return best;
}

/// Mutable companion of the SPCI loop: the fitted quantile forest and the
/// step counter driving the refit stride.
struct SpciState {
    QuantileForest forest;
    bool fitted = false;
    long step = 0;
};

/// One SPCI step around an externally supplied point prediction. Refits the
/// QRF on the lagged residual set every refit_stride steps; the width search
/// runs every step at the current query feature. The caller pushes the
/// realized residual after observing y_t.
inline PredictionInterval spci_interval(const ResidualWindow& window, double point,
                                        const SpciConfig& config, SpciState& state) {
    config.validate();
    if (window.size() < config.w + 1)
        throw InsufficientDataError("SPCI needs a residual window longer than w");

    if (!state.fitted || state.step % config.refit_stride == 0) {
        LaggedResidualSet lagged = build_lagged_residual_set(window, config.w);
        ForestParams params = config.forest;
        params.seed = config.forest.seed.child(static_cast<std::uint64_t>(state.step));
        state.forest = fit_forest(lagged, params);
        state.fitted = true;
    }
    ++state.step;

    std::vector<double> query(config.w);
    for (std::size_t j = 0; j < config.w; ++j) query[j] = window[window.size() - 1 - j];

    BetaSearchResult search;
    if (config.fixed_beta) {
        WeightVector wv = forest_weights(state.forest, query);
        WeightedTargetDistribution dist(state.forest.training_targets, wv.weights);
        search.beta = *config.fixed_beta;
        search.lower_quantile = dist.quantile(search.beta);
        search.upper_quantile = dist.quantile(1.0 - config.alpha + search.beta);
    } else {
        search = spci_beta_search(state.forest, query, config.alpha, config.beta_grid_size);
    }

    PredictionInterval pi;
    pi.method = Method::SPCI;
    pi.point = point;
    pi.lower = point + search.lower_quantile;
    pi.upper = point + search.upper_quantile;
    pi.beta = search.beta;
    return pi;
}

inline PredictionInterval spci_step(const BootstrapEnsemble& ensemble,
                                    const ResidualWindow& window, std::span<const double> x_t,
                                    const SpciConfig& config, SpciState& state) {
    return spci_interval(window, ensemble_predict(ensemble, x_t), config, state);
}

/// Heteroskedastic variant: the window holds residuals divided by sigma, and
/// interval endpoints scale the quantiles back by sigma at x_t. The caller
/// pushes (y_t - point) / sigma afterwards.
inline PredictionInterval spci_interval_normalized(const ResidualWindow& window, double point,
                                                   const SpciConfig& config, SpciState& state,
                                                   double sigma_at_x) {
    if (!(sigma_at_x > 0.0))
        throw NonpositiveScaleError("sigma estimate must be strictly positive");
    PredictionInterval pi = spci_interval(window, point, config, state);
    pi.lower = point + sigma_at_x * (pi.lower - point);
    pi.upper = point + sigma_at_x * (pi.upper - point);
    return pi;
}

inline PredictionInterval spci_step_normalized(const BootstrapEnsemble& ensemble,
                                               const ResidualWindow& window,
                                               std::span<const double> x_t,
                                               const SpciConfig& config, SpciState& state,
                                               double sigma_at_x) {
    return spci_interval_normalized(window, ensemble_predict(ensemble, x_t), config, state,
                                    sigma_at_x);
}

// ---------------------------------------------------------------------------
// AdaptiveCI baseline
// ---------------------------------------------------------------------------

/// Online significance level: alpha rises while intervals cover and drops on
/// every miss, clamped away from 0 and 1.
struct AdaptiveAlphaState {
    double alpha_t = 0.1;
    double gamma = 0.005;
    double target_alpha = 0.1;

    static constexpr double kMinAlpha = 0.001;
    static constexpr double kMaxAlpha = 0.999;
};

/// Interval from a conditional-quantile model of Y given X at the current
/// significance level.
inline PredictionInterval adaptive_ci_step(const AdaptiveAlphaState& state,
                                           const QuantileForest& y_quantile_model,
                                           std::span<const double> x_t) {
    WeightVector wv = forest_weights(y_quantile_model, x_t);
    WeightedTargetDistribution dist(y_quantile_model.training_targets, wv.weights);
    PredictionInterval pi;
    pi.method = Method::AdaptiveCI;
    pi.lower = dist.quantile(state.alpha_t / 2.0);
    pi.upper = dist.quantile(1.0 - state.alpha_t / 2.0);
    pi.point = dist.quantile(0.5);
    return pi;
}

/// err_t = 1 on a miss; alpha_{t+1} = clamp(alpha_t + gamma (target - err)).
inline void adaptive_ci_observe(AdaptiveAlphaState& state, bool covered) {
    const double err = covered ? 0.0 : 1.0;
    state.alpha_t = std::clamp(state.alpha_t + state.gamma * (state.target_alpha - err),
                               AdaptiveAlphaState::kMinAlpha, AdaptiveAlphaState::kMaxAlpha);
}

// ---------------------------------------------------------------------------
// Weighted-quantile baseline
// ---------------------------------------------------------------------------

/// Geometric-weight empirical quantiles of the residual window: residual
/// aged a (0 = newest) gets weight decay^a. decay = 1 recovers EnbPI.
inline PredictionInterval weighted_quantile_step(const ResidualWindow& window, double point,
                                                 double alpha, double decay) {
    if (window.empty()) throw EmptyInputError("weighted quantile: empty residual window");
    if (!(decay > 0.0 && decay <= 1.0)) throw DomainError("decay must be in (0, 1]");
    const std::size_t n = window.size();
    std::vector<double> values(n), weights(n);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        values[i] = window[i];
        weights[i] = std::pow(decay, static_cast<double>(n - 1 - i));
        total += weights[i];
    }
    for (double& w : weights) w /= total;
    WeightedTargetDistribution dist(values, weights);
    PredictionInterval pi;
    pi.method = Method::WeightedQuantile;
    pi.point = point;
    pi.lower = point + dist.quantile(alpha / 2.0);
    pi.upper = point + dist.quantile(1.0 - alpha / 2.0);
    return pi;
}

}  // namespace spci
