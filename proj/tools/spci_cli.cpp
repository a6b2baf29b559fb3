// Command-line front end: run one experiment, benchmark several methods
// side by side, or dump simulated series to CSV.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

#include "spci/evaluation.hpp"

namespace {

spci::Method parse_method(const std::string& name) {
    using spci::Method;
    if (name == "split") return Method::Split;
    if (name == "enbpi") return Method::EnbPI;
    if (name == "spci") return Method::SPCI;
    if (name == "adaptive-ci") return Method::AdaptiveCI;
    if (name == "weighted-quantile") return Method::WeightedQuantile;
    if (name == "multistep-spci") return Method::MultiStepSPCI;
    throw CLI::ValidationError("--method", "unknown method '" + name + "'");
}

spci::SimKind parse_sim(const std::string& name) {
    using spci::SimKind;
    if (name == "nstat") return SimKind::Nstat;
    if (name == "hetero") return SimKind::Hetero;
    if (name == "drift") return SimKind::Drift;
    if (name == "changepoint") return SimKind::Changepoint;
    if (name == "ar1") return SimKind::AR1;
    throw CLI::ValidationError("--sim", "unknown simulation '" + name + "'");
}

std::vector<std::uint64_t> parse_seeds(const std::string& csv) {
    std::vector<std::uint64_t> seeds;
    std::string cur;
    for (char c : csv + ",") {
        if (c == ',') {
            if (!cur.empty()) seeds.push_back(std::stoull(cur));
            cur.clear();
        } else if (!std::isspace(static_cast<unsigned char>(c))) {
            cur.push_back(c);
        }
    }
    if (seeds.empty()) throw CLI::ValidationError("--seeds", "no seeds given");
    return seeds;
}

struct CliOptions {
    std::string method = "spci";
    double alpha = 0.1;
    std::string sim;
    std::size_t sim_n = 0;  // 0: per-kind default
    std::string data;
    std::string target_col;
    std::vector<std::string> exog_cols;
    std::size_t ar_lags = 8;
    double train_frac = 0.8;
    std::size_t train_size = 0;
    int bootstrap = 25;
    int trees = 50;
    int point_trees = 10;
    std::string point_predictor;
    std::size_t window = 20;
    int horizon = 4;
    int beta_grid = 21;
    int refit_stride = 1;
    std::size_t rolling_window = 0;
    std::string seeds = "1";
    std::string out;
    bool normalize = false;
    bool no_time_feature = false;
    std::size_t burn_in = 0;
    std::size_t refit_t0 = 0;
    double decay = 0.99;
};

void add_common_flags(CLI::App* cmd, CliOptions& opt) {
    cmd->add_option("--alpha", opt.alpha, "significance level")->check(CLI::Range(1e-6, 0.999999));
    cmd->add_option("--sim", opt.sim, "simulation kind: nstat|hetero|drift|changepoint|ar1");
    cmd->add_option("--sim-n", opt.sim_n, "simulated series length (0 = per-kind default)");
    cmd->add_option("--data", opt.data, "CSV path (header required, rows in temporal order)");
    cmd->add_option("--target-col", opt.target_col, "target column name or index");
    cmd->add_option("--exog-col", opt.exog_cols, "exogenous column name or index (repeatable)");
    cmd->add_option("--ar-lags", opt.ar_lags, "autoregressive lag features for csv/ar1 data");
    cmd->add_option("--train-frac", opt.train_frac, "training fraction");
    cmd->add_option("--train-size", opt.train_size, "explicit training rows (overrides fraction)");
    cmd->add_option("--bootstrap", opt.bootstrap, "bootstrap models B");
    cmd->add_option("--trees", opt.trees, "QRF trees");
    cmd->add_option("--point-trees", opt.point_trees, "trees per bootstrap forest model");
    cmd->add_option("--point-predictor", opt.point_predictor, "forest|ls|ewls");
    cmd->add_option("--window", opt.window, "residual feature window w");
    cmd->add_option("--horizon", opt.horizon, "multi-step horizon S");
    cmd->add_option("--beta-grid", opt.beta_grid, "beta search grid size");
    cmd->add_option("--refit-stride", opt.refit_stride, "QRF refit stride");
    cmd->add_option("--rolling-window", opt.rolling_window, "rolling metric window (0 = auto)");
    cmd->add_option("--seeds", opt.seeds, "comma-separated seeds");
    cmd->add_option("--out", opt.out, "output directory");
    cmd->add_option("--burn-in", opt.burn_in, "train on the first N rows, test on the rest");
    cmd->add_option("--refit-t0", opt.refit_t0, "rolling point-predictor refit window");
    cmd->add_option("--decay", opt.decay, "decay for ewls / weighted-quantile");
    cmd->add_flag("--normalize", opt.normalize, "normalize residuals by the generator's sigma");
    cmd->add_flag("--no-time-feature", opt.no_time_feature, "drop the mod-12 feature (nstat)");
}

std::size_t default_sim_n(spci::SimKind kind, std::size_t w) {
    switch (kind) {
        case spci::SimKind::Nstat: return 1200 + w;
        case spci::SimKind::Hetero: return 1200;
        case spci::SimKind::Drift:
        case spci::SimKind::Changepoint: return 2000;
        case spci::SimKind::AR1: return 1200;
    }
    return 1200;
}

spci::ExperimentConfig build_config(const CliOptions& opt) {
    spci::ExperimentConfig cfg;
    cfg.method = parse_method(opt.method);
    cfg.alpha = opt.alpha;
    cfg.seeds = parse_seeds(opt.seeds);
    cfg.ar_lags = opt.ar_lags;
    cfg.include_time_feature = !opt.no_time_feature;
    cfg.train_frac = opt.train_frac;
    cfg.train_size = opt.train_size;
    cfg.bootstrap_b = opt.bootstrap;
    cfg.point_trees = opt.point_trees;
    cfg.qrf.n_trees = opt.trees;
    cfg.w = opt.window;
    cfg.beta_grid = opt.beta_grid;
    cfg.refit_stride = opt.refit_stride;
    cfg.rolling_window = opt.rolling_window;
    cfg.normalize = opt.normalize;
    cfg.horizon = opt.horizon;
    cfg.wq_decay = opt.decay;
    cfg.ewls_decay = opt.decay;
    cfg.burn_in = opt.burn_in;
    cfg.rolling_refit_t0 = opt.refit_t0;
    cfg.out_dir = opt.out;

    if (!opt.sim.empty()) {
        spci::SimulationSpec spec;
        spec.kind = parse_sim(opt.sim);
        spec.n = opt.sim_n ? opt.sim_n : default_sim_n(spec.kind, cfg.w);
        spec.w = cfg.w;
        cfg.sim = spec;
        // Scenario presets: drift/changepoint follow the burn-in plus
        // rolling-refit protocol with a weighted linear point predictor.
        if (spec.kind == spci::SimKind::Drift || spec.kind == spci::SimKind::Changepoint) {
            if (cfg.burn_in == 0) cfg.burn_in = 100;
            if (cfg.rolling_refit_t0 == 0)
                cfg.rolling_refit_t0 = spec.kind == spci::SimKind::Drift ? 300 : 200;
            if (opt.point_predictor.empty()) cfg.point_predictor = spci::PointKind::Ewls;
        }
    } else if (!opt.data.empty()) {
        spci::CsvSource src;
        src.path = opt.data;
        src.target = opt.target_col;
        src.exogenous = opt.exog_cols;
        cfg.csv = src;
    } else {
        throw CLI::ValidationError("--sim/--data", "choose a simulation or a CSV file");
    }

    if (!opt.point_predictor.empty()) {
        if (opt.point_predictor == "forest") cfg.point_predictor = spci::PointKind::Forest;
        else if (opt.point_predictor == "ls") cfg.point_predictor = spci::PointKind::Ols;
        else if (opt.point_predictor == "ewls") cfg.point_predictor = spci::PointKind::Ewls;
        else throw CLI::ValidationError("--point-predictor", "forest|ls|ewls");
    }
    return cfg;
}

void print_summary(const spci::ExperimentConfig& cfg, const spci::ExperimentResult& res) {
    std::printf("%-18s coverage %.4g (sd %.4g)  width %.4g (sd %.4g)  [%zu trial%s]\n",
                spci::method_name(cfg.method).c_str(), res.mean_coverage, res.coverage_sd,
                res.mean_width, res.width_sd, res.trials.size(),
                res.trials.size() == 1 ? "" : "s");
}

int cmd_run(const CliOptions& opt) {
    spci::ExperimentConfig cfg = build_config(opt);
    spci::ExperimentResult res = spci::run_experiment(cfg);
    print_summary(cfg, res);
    spci::write_artifacts(cfg, res);
    if (!cfg.out_dir.empty()) std::printf("artifacts written to %s\n", cfg.out_dir.c_str());
    return 0;
}

int cmd_bench(const CliOptions& opt, const std::vector<std::string>& methods) {
    std::vector<std::string> to_run = methods;
    if (to_run.empty())
        to_run = {"split", "enbpi", "spci", "adaptive-ci", "weighted-quantile"};
    for (const auto& m : to_run) {
        CliOptions per = opt;
        per.method = m;
        if (!per.out.empty()) per.out += "/" + m;
        spci::ExperimentConfig cfg = build_config(per);
        spci::ExperimentResult res = spci::run_experiment(cfg);
        print_summary(cfg, res);
        spci::write_artifacts(cfg, res);
    }
    return 0;
}

int cmd_simulate(const CliOptions& opt) {
    if (opt.sim.empty()) throw CLI::ValidationError("--sim", "simulate requires --sim");
    if (opt.out.empty()) throw CLI::ValidationError("--out", "simulate requires --out <file.csv>");
    const spci::SimKind kind = parse_sim(opt.sim);
    const auto seeds = parse_seeds(opt.seeds);
    const spci::RngSeed seed{seeds.front(), 100};
    const std::size_t n = opt.sim_n ? opt.sim_n : default_sim_n(kind, opt.window);

    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;
    switch (kind) {
        case spci::SimKind::Nstat: {
            auto sim = spci::generate_nstat(n, opt.window, 0.6, seed);
            columns = {"t_mod12", "y"};
            for (std::size_t i = 0; i < sim.series.size(); ++i)
                rows.push_back({sim.time_feature[i], sim.series[i]});
            break;
        }
        case spci::SimKind::Hetero: {
            auto sim = spci::generate_hetero(n, 20, seed);
            for (std::size_t j = 0; j < sim.features.n_cols; ++j)
                columns.push_back("x" + std::to_string(j + 1));
            columns.push_back("sigma");
            columns.push_back("y");
            for (std::size_t i = 0; i < sim.responses.size(); ++i) {
                std::vector<double> row(sim.features.row(i).begin(), sim.features.row(i).end());
                row.push_back(sim.sigma[i]);
                row.push_back(sim.responses[i]);
                rows.push_back(std::move(row));
            }
            break;
        }
        case spci::SimKind::Drift:
        case spci::SimKind::Changepoint: {
            auto sim = kind == spci::SimKind::Drift ? spci::generate_drift(n, seed)
                                                    : spci::generate_changepoint(n, seed);
            for (std::size_t j = 0; j < 4; ++j) columns.push_back("x" + std::to_string(j + 1));
            columns.push_back("y");
            for (std::size_t i = 0; i < sim.responses.size(); ++i) {
                std::vector<double> row(sim.features.row(i).begin(), sim.features.row(i).end());
                row.push_back(sim.responses[i]);
                rows.push_back(std::move(row));
            }
            break;
        }
        case spci::SimKind::AR1: {
            auto series = spci::generate_ar1(n, 0.8, 1.0, seed);
            columns = {"y"};
            for (double v : series) rows.push_back({v});
            break;
        }
    }
    spci::write_csv(opt.out, columns, rows);
    std::printf("wrote %zu rows to %s\n", rows.size(), opt.out.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Sequential conformal prediction intervals for time series"};
    app.require_subcommand(1);
    CliOptions opt;
    std::vector<std::string> bench_methods;

    CLI::App* run = app.add_subcommand("run", "run one experiment");
    run->add_option("--method", opt.method,
                    "split|enbpi|spci|adaptive-ci|weighted-quantile|multistep-spci");
    add_common_flags(run, opt);

    CLI::App* bench = app.add_subcommand("bench", "compare methods on one data source");
    bench->add_option("--methods", bench_methods, "subset of methods to run");
    add_common_flags(bench, opt);

    CLI::App* simulate = app.add_subcommand("simulate", "dump generator output to CSV");
    add_common_flags(simulate, opt);

    try {
        app.parse(argc, argv);
        if (run->parsed()) return cmd_run(opt);
        if (bench->parsed()) return cmd_bench(opt, bench_methods);
        if (simulate->parsed()) return cmd_simulate(opt);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
