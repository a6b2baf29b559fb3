#pragma once

#include <filesystem>
#include <json.hpp>

#include "spci/csv.hpp"
#include "spci/multistep.hpp"
#include "spci/simulation.hpp"

namespace spci {

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

struct PerStep {
    long t = 0;
    double y_true = 0.0;
    double point = 0.0;
    double lower = 0.0;
    double upper = 0.0;
    bool covered = false;
    double width = 0.0;
};

struct CoverageReport {
    double marginal_coverage = 0.0;
    double mean_width = 0.0;
    std::vector<PerStep> per_step;
    int trials = 1;
    double coverage_sd = 0.0;
    double width_sd = 0.0;
};

inline CoverageReport marginal_metrics(const std::vector<PredictionInterval>& intervals,
                                       std::span<const double> truths) {
    if (intervals.size() != truths.size())
        throw ShapeError("marginal metrics: intervals and truths differ in length");
    if (intervals.empty()) throw EmptyInputError("marginal metrics: no steps");
    CoverageReport report;
    report.per_step.reserve(intervals.size());
    double covered = 0.0, width = 0.0;
    for (std::size_t i = 0; i < intervals.size(); ++i) {
        const PredictionInterval& pi = intervals[i];
        PerStep step;
        step.t = pi.time_index;
        step.y_true = truths[i];
        step.point = pi.point;
        step.lower = pi.lower;
        step.upper = pi.upper;
        step.covered = pi.covers(truths[i]);
        step.width = pi.width();
        covered += step.covered ? 1.0 : 0.0;
        width += step.width;
        report.per_step.push_back(step);
    }
    report.marginal_coverage = covered / static_cast<double>(intervals.size());
    report.mean_width = width / static_cast<double>(intervals.size());
    return report;
}

/// Trailing-window means of the coverage flag and interval width, defined
/// from step `window` onwards.
struct RollingSeries {
    std::size_t window = 0;
    std::size_t start_step = 0;  // index (1-based step count) of the first entry
    std::vector<double> coverage;
    std::vector<double> width;
};

inline RollingSeries rolling_metrics(const std::vector<PerStep>& steps, std::size_t window) {
    if (window < 1) throw DomainError("rolling window must be >= 1");
    if (steps.size() < window)
        throw InsufficientDataError("rolling metrics need at least `window` steps");
    RollingSeries out;
    out.window = window;
    out.start_step = window;
    double cov = 0.0, wid = 0.0;
    for (std::size_t i = 0; i < steps.size(); ++i) {
        cov += steps[i].covered ? 1.0 : 0.0;
        wid += steps[i].width;
        if (i + 1 >= window) {
            if (i + 1 > window) {
                cov -= steps[i - window].covered ? 1.0 : 0.0;
                wid -= steps[i - window].width;
            }
            out.coverage.push_back(cov / static_cast<double>(window));
            out.width.push_back(wid / static_cast<double>(window));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Feedback-ordering audit
// ---------------------------------------------------------------------------

/// Instrumentation hook for the sequential loops: every interval must be
/// constructed strictly before its own outcome is observed.
struct LeakageAudit {
    long last_observed = -1;

    void on_interval(long t) {
        if (t <= last_observed)
            throw std::logic_error("leakage: interval at t=" + std::to_string(t) +
                                   " constructed after observing index " +
                                   std::to_string(last_observed));
    }
    void on_observe(long t) { last_observed = std::max(last_observed, t); }
};

// ---------------------------------------------------------------------------
// Experiment configuration
// ---------------------------------------------------------------------------

enum class PointKind { Forest, Ols, Ewls };

inline std::string point_kind_name(PointKind k) {
    switch (k) {
        case PointKind::Forest: return "forest";
        case PointKind::Ols: return "ls";
        case PointKind::Ewls: return "ewls";
    }
    return "unknown";
}

struct CsvSource {
    std::string path;
    std::string target;               // column name, or numeric index if digits
    std::vector<std::string> exogenous;
};

struct ExperimentConfig {
    Method method = Method::SPCI;
    double alpha = 0.1;
    std::vector<std::uint64_t> seeds{1};

    std::optional<SimulationSpec> sim;
    std::optional<CsvSource> csv;
    std::size_t ar_lags = 8;            // lag features for AR1/CSV data
    bool include_time_feature = true;   // Nstat only

    double train_frac = 0.8;
    std::size_t train_size = 0;         // explicit override when > 0

    int bootstrap_b = 25;
    Aggregator aggregator = Aggregator::Mean;
    PointKind point_predictor = PointKind::Forest;
    int point_trees = 10;               // trees per bootstrap forest model
    double ewls_decay = 0.99;

    ForestParams qrf{};                 // SPCI / AdaptiveCI quantile forest
    std::size_t w = 20;
    int beta_grid = 21;
    int refit_stride = 1;
    std::size_t residual_capacity = 0;
    bool normalize = false;
    int horizon = 4;                    // multistep-spci only

    double wq_decay = 0.99;             // weighted-quantile baseline
    double adaptive_gamma = 0.005;

    std::size_t burn_in = 0;            // > 0 enables the rolling-refit preset
    std::size_t rolling_refit_t0 = 0;   // rolling window for point-predictor refits

    std::size_t rolling_window = 0;     // 0: 100 when >= 1000 test steps, else 50
    std::string out_dir;

    void validate() const {
        if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("alpha must be in (0, 1)");
        if (!(train_frac > 0.0 && train_frac < 1.0))
            throw DomainError("train fraction must be in (0, 1)");
        if (seeds.empty()) throw DomainError("at least one seed is required");
        if (!sim && !csv) throw DomainError("config needs a simulation spec or a CSV source");
    }
};

// ---------------------------------------------------------------------------
// Data preparation
// ---------------------------------------------------------------------------

struct TrialData {
    TimeSeriesDataset dataset;
    std::vector<double> sigma;  // aligned with rows; empty unless provided by the generator
};

inline TrialData prepare_trial_data(const ExperimentConfig& config, std::uint64_t seed_value) {
    TrialData td;
    const RngSeed data_seed{seed_value, 100};
    if (config.sim) {
        SimulationSpec spec = *config.sim;
        spec.seed = data_seed;
        spec.validate();
        switch (spec.kind) {
            case SimKind::Nstat: {
                NstatSeries sim = generate_nstat(spec.n, spec.w, spec.rho, spec.seed);
                td.dataset = nstat_dataset(sim, config.include_time_feature);
                break;
            }
            case SimKind::Hetero: {
                HeteroData sim = generate_hetero(spec.n, spec.d, spec.seed);
                td.dataset.features = std::move(sim.features);
                td.dataset.responses = std::move(sim.responses);
                td.sigma = std::move(sim.sigma);
                break;
            }
            case SimKind::Drift:
            case SimKind::Changepoint: {
                LinearRegimeData sim = (spec.kind == SimKind::Drift)
                                           ? generate_drift(spec.n, spec.seed)
                                           : generate_changepoint(spec.n, spec.seed);
                td.dataset.features = std::move(sim.features);
                td.dataset.responses = std::move(sim.responses);
                break;
            }
            case SimKind::AR1: {
                std::vector<double> series =
                    generate_ar1(spec.n, spec.ar_coef, spec.noise_sd, spec.seed);
                td.dataset = build_autoregressive_features(series, config.ar_lags);
                break;
            }
        }
    } else {
        const CsvTable table = load_csv(config.csv->path);
        std::size_t target = 0;
        const std::string& t = config.csv->target;
        if (!t.empty() && t.find_first_not_of("0123456789") == std::string::npos)
            target = static_cast<std::size_t>(std::stoul(t));
        else
            target = table.column_index(t);
        std::vector<std::size_t> exog;
        for (const auto& name : config.csv->exogenous) {
            if (!name.empty() && name.find_first_not_of("0123456789") == std::string::npos)
                exog.push_back(static_cast<std::size_t>(std::stoul(name)));
            else
                exog.push_back(table.column_index(name));
        }
        td.dataset = dataset_from_table(table, target, exog, config.ar_lags);
    }

    const std::size_t rows = td.dataset.size();
    std::size_t train = config.train_size;
    if (config.burn_in > 0) train = config.burn_in;
    if (train == 0)
        train = static_cast<std::size_t>(std::llround(config.train_frac * static_cast<double>(rows)));
    train = std::min(std::max<std::size_t>(train, 1), rows - 1);
    td.dataset.train_size = train;
    td.dataset.validate();
    return td;
}

// ---------------------------------------------------------------------------
// Sequential runners
// ---------------------------------------------------------------------------

namespace detail {

inline std::unique_ptr<PointPredictor> make_point_predictor(const ExperimentConfig& config,
                                                            bool parallel_trees) {
    switch (config.point_predictor) {
        case PointKind::Ols: return std::make_unique<LeastSquares>();
        case PointKind::Ewls:
            return std::make_unique<ExponentiallyWeightedLeastSquares>(config.ewls_decay);
        case PointKind::Forest: {
            ForestParams params;
            params.n_trees = config.point_trees;
            params.parallel = parallel_trees;
            return std::make_unique<RegressionForest>(params);
        }
    }
    throw DomainError("unknown point predictor kind");
}

inline Matrix train_features(const TimeSeriesDataset& data, std::size_t from, std::size_t count) {
    Matrix x(count, data.features.n_cols);
    for (std::size_t i = 0; i < count; ++i)
        std::copy_n(data.features.row(from + i).begin(), x.n_cols, x.row(i).begin());
    return x;
}

}  // namespace detail

/// One trial of one method on one realization. The heavy QRF refits run with
/// `inner_parallel` tree fitting; pass false when trials themselves run in
/// parallel.
inline std::vector<PerStep> run_single_trial(const ExperimentConfig& config,
                                             std::uint64_t seed_value, bool inner_parallel) {
    config.validate();
    const TrialData td = prepare_trial_data(config, seed_value);
    const TimeSeriesDataset& data = td.dataset;
    const std::size_t train = data.train_size;
    const std::size_t n = data.size();
    const RngSeed fit_seed{seed_value, 200};

    SpciConfig spci_cfg;
    spci_cfg.alpha = config.alpha;
    spci_cfg.w = config.w;
    spci_cfg.forest = config.qrf;
    spci_cfg.forest.parallel = inner_parallel;
    spci_cfg.forest.seed = fit_seed.child(5);
    spci_cfg.beta_grid_size = config.beta_grid;
    spci_cfg.refit_stride = config.refit_stride;

    const bool needs_sigma = config.normalize && config.method == Method::SPCI;
    if (needs_sigma && td.sigma.empty())
        throw DomainError("normalized SPCI requires a data source that provides sigma");

    LeakageAudit audit;
    std::vector<PredictionInterval> intervals;
    std::vector<double> truths;
    intervals.reserve(n - train);
    truths.reserve(n - train);

    auto record = [&](PredictionInterval pi, std::size_t t) {
        pi.time_index = static_cast<long>(t);
        intervals.push_back(pi);
        truths.push_back(data.responses[t]);
        audit.on_observe(static_cast<long>(t));
    };

    if (config.burn_in > 0 && config.method != Method::Split) {
        // Rolling-refit regime: a single point predictor refit each step on
        // the trailing min(t, T0) rows; residual feedback as usual.
        auto predictor = detail::make_point_predictor(config, inner_parallel);
        Matrix x0 = detail::train_features(data, 0, train);
        std::vector<double> y0(data.responses.begin(), data.responses.begin() + train);
        predictor->fit(x0, y0, fit_seed.child(1));

        ResidualWindow window(config.residual_capacity ? config.residual_capacity : train);
        for (std::size_t i = 0; i < train; ++i)
            window.push(data.responses[i] - predictor->predict(data.features.row(i)));

        SpciState state;
        for (std::size_t t = train; t < n; ++t) {
            if (config.rolling_refit_t0 > 0) {
                const std::size_t lo = t > config.rolling_refit_t0 ? t - config.rolling_refit_t0 : 0;
                Matrix xr = detail::train_features(data, lo, t - lo);
                std::vector<double> yr(data.responses.begin() + lo, data.responses.begin() + t);
                predictor->fit(xr, yr, fit_seed.child(1).child(t));
            }
            audit.on_interval(static_cast<long>(t));
            const double point = predictor->predict(data.features.row(t));
            PredictionInterval pi;
            switch (config.method) {
                case Method::SPCI: pi = spci_interval(window, point, spci_cfg, state); break;
                case Method::EnbPI: pi = enbpi_interval(window, point, config.alpha); break;
                case Method::WeightedQuantile:
                    pi = weighted_quantile_step(window, point, config.alpha, config.wq_decay);
                    break;
                default:
                    throw DomainError("burn-in preset supports spci, enbpi and weighted-quantile");
            }
            record(pi, t);
            window.push(data.responses[t] - point);
        }
        return marginal_metrics(intervals, truths).per_step;
    }

    switch (config.method) {
        case Method::Split: {
            auto proto = detail::make_point_predictor(config, inner_parallel);
            SplitConformal sc = split_conformal(data, *proto, config.alpha, fit_seed.child(3));
            for (std::size_t t = train; t < n; ++t) {
                audit.on_interval(static_cast<long>(t));
                record(sc.predict(data.features.row(t)), t);
            }
            break;
        }
        case Method::AdaptiveCI: {
            Matrix x0 = detail::train_features(data, 0, train);
            std::vector<double> y0(data.responses.begin(), data.responses.begin() + train);
            ForestParams qp = config.qrf;
            qp.parallel = inner_parallel;
            qp.seed = fit_seed.child(7);
            QuantileForest qrf_y = fit_forest(x0, y0, qp);
            AdaptiveAlphaState state;
            state.alpha_t = config.alpha;
            state.target_alpha = config.alpha;
            state.gamma = config.adaptive_gamma;
            for (std::size_t t = train; t < n; ++t) {
                audit.on_interval(static_cast<long>(t));
                PredictionInterval pi = adaptive_ci_step(state, qrf_y, data.features.row(t));
                record(pi, t);
                adaptive_ci_observe(state, pi.covers(data.responses[t]));
            }
            break;
        }
        case Method::MultiStepSPCI: {
            auto proto = detail::make_point_predictor(config, inner_parallel);
            MultiStepPlan plan = fit_multistep(data, *proto, config.horizon, config.bootstrap_b,
                                               config.aggregator, fit_seed, inner_parallel);
            const auto s_steps = static_cast<std::size_t>(config.horizon);
            for (std::size_t t = train; t < n; t += s_steps) {
                audit.on_interval(static_cast<long>(t));
                auto block = multistep_predict_block(plan, data.features.row(t), spci_cfg);
                const std::size_t in_range = std::min(s_steps, n - t);
                for (std::size_t s = 0; s < in_range; ++s) record(block[s], t + s);
                if (in_range == s_steps) {
                    std::vector<double> realized(s_steps);
                    for (std::size_t s = 0; s < s_steps; ++s)
                        realized[s] = data.responses[t + s] - block[s].point;
                    observe_block(plan, realized);
                }
            }
            break;
        }
        default: {  // EnbPI, SPCI, WeightedQuantile share the LOO-ensemble prelude
            auto proto = detail::make_point_predictor(config, inner_parallel);
            BootstrapEnsemble ens = fit_ensemble(data, *proto, config.bootstrap_b,
                                                 config.aggregator, fit_seed, inner_parallel);
            LooResult loo = loo_residuals(ens, data);
            ResidualWindow window(config.residual_capacity ? config.residual_capacity : train);
            for (std::size_t i = 0; i < train; ++i) {
                double r = loo.residuals[i];
                if (needs_sigma) {
                    if (!(td.sigma[i] > 0.0))
                        throw NonpositiveScaleError("sigma must be positive on training rows");
                    r /= td.sigma[i];
                }
                window.push(r);
            }
            SpciState state;
            for (std::size_t t = train; t < n; ++t) {
                audit.on_interval(static_cast<long>(t));
                const double point = ensemble_predict(ens, data.features.row(t));
                PredictionInterval pi;
                double sigma_t = 1.0;
                switch (config.method) {
                    case Method::SPCI:
                        if (needs_sigma) {
                            sigma_t = td.sigma[t];
                            pi = spci_interval_normalized(window, point, spci_cfg, state, sigma_t);
                        } else {
                            pi = spci_interval(window, point, spci_cfg, state);
                        }
                        break;
                    case Method::EnbPI:
                        pi = enbpi_interval(window, point, config.alpha);
                        break;
                    case Method::WeightedQuantile:
                        pi = weighted_quantile_step(window, point, config.alpha, config.wq_decay);
                        break;
                    default: throw DomainError("unsupported method in ensemble loop");
                }
                record(pi, t);
                window.push((data.responses[t] - point) / (needs_sigma ? sigma_t : 1.0));
            }
            break;
        }
    }
    return marginal_metrics(intervals, truths).per_step;
}

// ---------------------------------------------------------------------------
// Multi-trial experiments and artifacts
// ---------------------------------------------------------------------------

struct TrialOutcome {
    std::uint64_t seed = 0;
    CoverageReport report;
    RollingSeries rolling;
};

struct ExperimentResult {
    std::vector<TrialOutcome> trials;
    double mean_coverage = 0.0;
    double coverage_sd = 0.0;
    double mean_width = 0.0;
    double width_sd = 0.0;
};

namespace detail {

inline CoverageReport report_from_steps(std::vector<PerStep> steps) {
    CoverageReport report;
    report.per_step = std::move(steps);
    double cov = 0.0, wid = 0.0;
    for (const PerStep& s : report.per_step) {
        cov += s.covered ? 1.0 : 0.0;
        wid += s.width;
    }
    const auto n = static_cast<double>(report.per_step.size());
    report.marginal_coverage = cov / n;
    report.mean_width = wid / n;
    return report;
}

inline std::pair<double, double> mean_sd(const std::vector<double>& v) {
    const auto n = static_cast<double>(v.size());
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= n;
    if (v.size() < 2) return {mean, 0.0};
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return {mean, std::sqrt(ss / (n - 1.0))};
}

}  // namespace detail

inline ExperimentResult run_experiment(const ExperimentConfig& config) {
    config.validate();
    const bool parallel_trials = config.seeds.size() > 1;
    ExperimentResult result;
    result.trials.resize(config.seeds.size());

    parallel_for(config.seeds.size(), parallel_trials, [&](std::size_t i) {
        TrialOutcome outcome;
        outcome.seed = config.seeds[i];
        outcome.report =
            detail::report_from_steps(run_single_trial(config, config.seeds[i], !parallel_trials));
        std::size_t window = config.rolling_window;
        if (window == 0) window = outcome.report.per_step.size() >= 1000 ? 100 : 50;
        if (outcome.report.per_step.size() >= window)
            outcome.rolling = rolling_metrics(outcome.report.per_step, window);
        result.trials[i] = std::move(outcome);
    });

    std::vector<double> coverages, widths;
    for (const auto& t : result.trials) {
        coverages.push_back(t.report.marginal_coverage);
        widths.push_back(t.report.mean_width);
    }
    std::tie(result.mean_coverage, result.coverage_sd) = detail::mean_sd(coverages);
    std::tie(result.mean_width, result.width_sd) = detail::mean_sd(widths);
    return result;
}

// ---------------------------------------------------------------------------
// Artifact emission
// ---------------------------------------------------------------------------

inline nlohmann::json config_to_json(const ExperimentConfig& c) {
    nlohmann::json j;
    j["method"] = method_name(c.method);
    j["alpha"] = c.alpha;
    j["seeds"] = c.seeds;
    if (c.sim) {
        j["sim"] = {{"kind", sim_name(c.sim->kind)}, {"n", c.sim->n},     {"w", c.sim->w},
                    {"rho", c.sim->rho},             {"d", c.sim->d},     {"ar_coef", c.sim->ar_coef},
                    {"noise_sd", c.sim->noise_sd}};
    }
    if (c.csv) {
        j["csv"] = {{"path", c.csv->path},
                    {"target", c.csv->target},
                    {"exogenous", c.csv->exogenous}};
    }
    j["ar_lags"] = c.ar_lags;
    j["include_time_feature"] = c.include_time_feature;
    j["train_frac"] = c.train_frac;
    j["train_size"] = c.train_size;
    j["bootstrap_b"] = c.bootstrap_b;
    j["aggregator"] = c.aggregator == Aggregator::Mean ? "mean" : "median";
    j["point_predictor"] = point_kind_name(c.point_predictor);
    j["point_trees"] = c.point_trees;
    j["ewls_decay"] = c.ewls_decay;
    j["qrf"] = {{"n_trees", c.qrf.n_trees},
                {"min_leaf_size", c.qrf.min_leaf_size},
                {"max_depth", c.qrf.max_depth},
                {"features_per_split", c.qrf.features_per_split},
                {"bootstrap_per_tree", c.qrf.bootstrap_per_tree}};
    j["w"] = c.w;
    j["beta_grid"] = c.beta_grid;
    j["refit_stride"] = c.refit_stride;
    j["residual_capacity"] = c.residual_capacity;
    j["normalize"] = c.normalize;
    j["horizon"] = c.horizon;
    j["wq_decay"] = c.wq_decay;
    j["adaptive_gamma"] = c.adaptive_gamma;
    j["burn_in"] = c.burn_in;
    j["rolling_refit_t0"] = c.rolling_refit_t0;
    j["rolling_window"] = c.rolling_window;
    return j;
}

/// Write per-step, rolling, and summary artifacts under config.out_dir.
inline void write_artifacts(const ExperimentConfig& config, const ExperimentResult& result) {
    if (config.out_dir.empty()) return;
    namespace fs = std::filesystem;
    fs::create_directories(config.out_dir);
    const fs::path base(config.out_dir);

    for (const auto& trial : result.trials) {
        std::vector<std::vector<double>> rows;
        rows.reserve(trial.report.per_step.size());
        for (const PerStep& s : trial.report.per_step)
            rows.push_back({static_cast<double>(s.t), s.y_true, s.point, s.lower, s.upper,
                            s.covered ? 1.0 : 0.0, s.width});
        write_csv((base / ("steps_seed" + std::to_string(trial.seed) + ".csv")).string(),
                  {"t", "y_true", "point", "lower", "upper", "covered", "width"}, rows);
    }

    {
        std::ofstream out(base / "rolling.csv");
        out << "t,metric,value,method,trial\n";
        for (const auto& trial : result.trials) {
            const RollingSeries& r = trial.rolling;
            for (std::size_t i = 0; i < r.coverage.size(); ++i) {
                const std::size_t t = r.start_step + i;
                out << t << ",coverage," << format_full(r.coverage[i]) << ','
                    << method_name(config.method) << ',' << trial.seed << '\n';
                out << t << ",width," << format_full(r.width[i]) << ','
                    << method_name(config.method) << ',' << trial.seed << '\n';
            }
        }
    }

    nlohmann::json metrics;
    metrics["config"] = config_to_json(config);
    metrics["mean_coverage"] = result.mean_coverage;
    metrics["coverage_sd"] = result.coverage_sd;
    metrics["mean_width"] = result.mean_width;
    metrics["width_sd"] = result.width_sd;
    metrics["trials"] = nlohmann::json::array();
    for (const auto& trial : result.trials)
        metrics["trials"].push_back({{"seed", trial.seed},
                                     {"coverage", trial.report.marginal_coverage},
                                     {"mean_width", trial.report.mean_width},
                                     {"steps", trial.report.per_step.size()}});
    std::ofstream(base / "metrics.json") << metrics.dump(2) << '\n';
    std::ofstream(base / "config.json") << config_to_json(config).dump(2) << '\n';
}

}  // namespace spci
