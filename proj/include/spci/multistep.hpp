#pragma once

#include "spci/conformal.hpp"

namespace spci {

/// Divide-and-conquer S-step-ahead plan: one bootstrap ensemble per horizon
/// fit on lagged pairs (X_t, Y_{t+s-1}), one residual window per horizon
/// filled with LOO residuals sampled every S steps, and one QRF per horizon
/// refit at the start of each prediction block.
struct MultiStepPlan {
    int horizon = 1;
    std::vector<BootstrapEnsemble> ensembles;      // index s-1
    std::vector<ResidualWindow> residual_windows;  // index s-1
    std::vector<SpciState> qrf_states;             // index s-1
    std::vector<std::vector<int>> residual_indices;  // train indices used per horizon
};

namespace detail {

/// Lagged training set for horizon s: rows t = 1..T-s+1 keep the features at
/// t and the response at t+s-1.
inline TimeSeriesDataset lagged_pairs(const TimeSeriesDataset& data, int s) {
    const std::size_t rows = data.train_size - static_cast<std::size_t>(s) + 1;
    TimeSeriesDataset out;
    out.features = Matrix(rows, data.features.n_cols);
    out.responses.resize(rows);
    for (std::size_t t = 0; t < rows; ++t) {
        std::copy_n(data.features.row(t).begin(), out.features.n_cols,
                    out.features.row(t).begin());
        out.responses[t] = data.responses[t + static_cast<std::size_t>(s) - 1];
    }
    out.train_size = rows;
    return out;
}

/// LOO sampling grid t = 1, 1+S, ... restricted to rows where the horizon's
/// lagged pair exists (0-based here).
inline std::vector<int> residual_grid(std::size_t train_size, int s_horizon, int step) {
    std::vector<int> grid;
    const auto limit = static_cast<long>(train_size) - static_cast<long>(s_horizon) + 1;
    for (long t = 0; t < limit; t += step) grid.push_back(static_cast<int>(t));
    return grid;
}

}  // namespace detail

/// Fit the S lagged ensembles and seed the per-horizon residual windows.
/// Horizon s consumes the seed stream seed.child(s), so S = 1 reproduces the
/// single-step fit_ensemble + loo_residuals pipeline exactly.
inline MultiStepPlan fit_multistep(const TimeSeriesDataset& data,
                                   const PointPredictor& prototype, int horizon, int b_models,
                                   Aggregator aggregator, RngSeed seed, bool parallel = true) {
    data.validate();
    if (horizon < 1) throw DomainError("horizon must be >= 1");
    if (data.train_size <= static_cast<std::size_t>(horizon))
        throw InsufficientDataError("multistep needs more training rows than the horizon");

    MultiStepPlan plan;
    plan.horizon = horizon;
    plan.ensembles.reserve(horizon);
    plan.residual_windows.reserve(horizon);
    plan.qrf_states.assign(horizon, SpciState{});

    for (int s = 1; s <= horizon; ++s) {
        TimeSeriesDataset lagged = detail::lagged_pairs(data, s);
        plan.ensembles.push_back(fit_ensemble(lagged, prototype, b_models, aggregator,
                                              seed.child(static_cast<std::uint64_t>(s)),
                                              parallel));
        const std::vector<int> grid = detail::residual_grid(data.train_size, s, horizon);
        LooResult loo = loo_residuals_at(plan.ensembles.back(), lagged, grid);
        ResidualWindow window(std::max<std::size_t>(1, loo.residuals.size()));
        for (double r : loo.residuals) window.push(r);
        plan.residual_windows.push_back(std::move(window));
        plan.residual_indices.push_back(grid);
    }
    return plan;
}

/// Construct the S intervals of one block from the most recent available
/// feature. All S QRFs are refit at the start of the block; nothing observed
/// inside the block feeds any interval of the same block. After the block
/// resolves, push each realized residual via observe_block.
inline std::vector<PredictionInterval> multistep_predict_block(MultiStepPlan& plan,
                                                               std::span<const double> x_query,
                                                               const SpciConfig& config) {
    config.validate();
    std::vector<PredictionInterval> intervals;
    intervals.reserve(plan.horizon);
    for (int s = 1; s <= plan.horizon; ++s) {
        const ResidualWindow& window = plan.residual_windows[s - 1];
        if (window.size() < config.w + 1)
            throw InsufficientDataError("horizon " + std::to_string(s) +
                                        ": residual window shorter than w+1");
        const double point = ensemble_predict(plan.ensembles[s - 1], x_query);
        SpciConfig horizon_config = config;
        horizon_config.forest.seed = config.forest.seed.child(static_cast<std::uint64_t>(s));
        PredictionInterval pi =
            spci_interval(window, point, horizon_config, plan.qrf_states[s - 1]);
        pi.method = Method::MultiStepSPCI;
        intervals.push_back(pi);
    }
    return intervals;
}

/// Feed the S realized residuals (y - point, per horizon) back into their
/// windows once the block's outcomes are available.
inline void observe_block(MultiStepPlan& plan, std::span<const double> realized_residuals) {
    if (realized_residuals.size() != static_cast<std::size_t>(plan.horizon))
        throw ShapeError("observe_block expects one residual per horizon");
    for (int s = 0; s < plan.horizon; ++s)
        plan.residual_windows[s].push(realized_residuals[s]);
}

}  // namespace spci
