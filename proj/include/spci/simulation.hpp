#pragma once

#include <array>
#include <iostream>

#include "spci/core.hpp"

namespace spci {

// ---------------------------------------------------------------------------
// Synthetic data regimes
// ---------------------------------------------------------------------------

enum class SimKind { Nstat, Hetero, Drift, Changepoint, AR1 };

inline std::string sim_name(SimKind k) {
    switch (k) {
        case SimKind::Nstat: return "nstat";
        case SimKind::Hetero: return "hetero";
        case SimKind::Drift: return "drift";
        case SimKind::Changepoint: return "changepoint";
        case SimKind::AR1: return "ar1";
    }
    return "unknown";
}

struct SimulationSpec {
    SimKind kind = SimKind::Nstat;
    std::size_t n = 1220;
    RngSeed seed{};
    // kind-specific knobs
    std::size_t w = 20;        // Nstat autoregressive feature window
    double rho = 0.6;          // Nstat AR(1) error coefficient
    std::size_t d = 20;        // Hetero feature dimension
    double ar_coef = 0.8;      // AR1
    double noise_sd = 1.0;     // AR1

    void validate() const {
        if (n < 10) throw DomainError("simulation length must be >= 10");
        if (kind == SimKind::Nstat && n <= w)
            throw InsufficientDataError("Nstat needs n > w");
        if (kind == SimKind::Changepoint && n < 1501)
            throw InsufficientDataError("changepoint series needs N >= 1501");
    }
};

/// log(t') sin(2 pi t' / 12) with t' = mod(t, 12); the t' = 0 singularity is
/// closed by its continuous limit, 0.
inline double nstat_time_factor(long t) {
    const long tp = ((t % 12) + 12) % 12;
    if (tp == 0) return 0.0;
    return std::log(static_cast<double>(tp)) *
           std::sin(2.0 * 3.14159265358979323846 * static_cast<double>(tp) / 12.0);
}

/// (|u| + u^2 + |u|^3)^(1/4) for u = beta' x.
inline double quartic_link(double u) {
    const double a = std::abs(u);
    return std::pow(a + u * u + a * a * a, 0.25);
}

struct NstatSeries {
    std::vector<double> series;        // y_1..y_N (first w entries are warm-up)
    std::vector<double> time_feature;  // mod(t, 12), aligned with series
    std::vector<double> beta;          // the link coefficients drawn for this seed
    std::size_t w = 0;
};

/// Non-stationary series: y_t = g(t) h(x_t) + e_t with autoregressive
/// features, AR(1) errors, and a period-12 time effect. Warm-up responses
/// are i.i.d. standard normal; beta is drawn once per seed from U[0,1]^w.
inline NstatSeries generate_nstat(std::size_t n, std::size_t w, double rho, RngSeed seed) {
    if (w < 1) throw DomainError("nstat window must be >= 1");
    if (n <= w) throw InsufficientDataError("nstat needs n > w");
    NstatSeries out;
    out.w = w;
    out.series.resize(n);
    out.time_feature.resize(n);
    auto rng = seed.engine();
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    out.beta.resize(w);
    for (auto& b : out.beta) b = unit(rng);

    double err = (std::abs(rho) < 1.0) ? gauss(rng) / std::sqrt(1.0 - rho * rho) : gauss(rng);
    for (std::size_t i = 0; i < n; ++i) {
        const long t = static_cast<long>(i) + 1;
        out.time_feature[i] = static_cast<double>(((t % 12) + 12) % 12);
        if (i < w) {
            out.series[i] = gauss(rng);
            continue;
        }
        double u = 0.0;
        for (std::size_t j = 0; j < w; ++j) u += out.beta[j] * out.series[i - w + j];
        err = rho * err + gauss(rng);
        out.series[i] = nstat_time_factor(t) * quartic_link(u) + err;
    }
    return out;
}

/// Dataset view of an Nstat series: responses y_t with features
/// [mod(t,12)?, y_{t-w}, ..., y_{t-1}].
inline TimeSeriesDataset nstat_dataset(const NstatSeries& sim, bool include_time_feature) {
    TimeSeriesDataset ds =
        build_autoregressive_features(std::span<const double>(sim.series), sim.w);
    if (!include_time_feature) return ds;
    Matrix with_time(ds.features.n_rows, ds.features.n_cols + 1);
    for (std::size_t i = 0; i < ds.features.n_rows; ++i) {
        with_time.at(i, 0) = sim.time_feature[i + sim.w];
        std::copy_n(ds.features.row(i).begin(), ds.features.n_cols,
                    with_time.row(i).begin() + 1);
    }
    ds.features = std::move(with_time);
    return ds;
}

struct HeteroData {
    Matrix features;               // N x d, entries U[0, e^{0.01 mod(t,100)})
    std::vector<double> responses;
    std::vector<double> sigma;     // true conditional scale 1'x_t
    std::vector<double> beta;
};

/// GARCH-style heteroskedastic data: y_t = f(x_t) + sigma(x_t) z_t with
/// sigma(x) = sum of the (nonnegative) feature entries.
inline HeteroData generate_hetero(std::size_t n, std::size_t d, RngSeed seed) {
    if (d < 1) throw DomainError("hetero dimension must be >= 1");
    HeteroData out;
    out.features = Matrix(n, d);
    out.responses.resize(n);
    out.sigma.resize(n);
    auto rng = seed.engine();
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    out.beta.resize(d);
    for (auto& b : out.beta) b = unit(rng);

    for (std::size_t i = 0; i < n; ++i) {
        const long t = static_cast<long>(i) + 1;
        const double bound = std::exp(0.01 * static_cast<double>(((t % 100) + 100) % 100));
        double s = 0.0, u = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double v = bound * unit(rng);
            out.features.at(i, j) = v;
            s += v;
            u += out.beta[j] * v;
        }
        out.sigma[i] = s;
        out.responses[i] = quartic_link(u) + s * gauss(rng);
    }
    return out;
}

struct LinearRegimeData {
    Matrix features;                             // N x 4, i.i.d. standard normal
    std::vector<double> responses;
    std::vector<std::array<double, 4>> beta_path;
    std::vector<std::size_t> change_indices;     // 1-based; empty for pure drift
};

/// Distribution drift: beta interpolates linearly from (2,1,0,0) at i=1 to
/// (0,0,2,1) at i=N; y_i = x_i' beta_i + N(0,1).
inline LinearRegimeData generate_drift(std::size_t n, RngSeed seed) {
    if (n < 2) throw InsufficientDataError("drift needs N >= 2");
    LinearRegimeData out;
    out.features = Matrix(n, 4);
    out.responses.resize(n);
    out.beta_path.resize(n);
    const std::array<double, 4> beta_first{2.0, 1.0, 0.0, 0.0};
    const std::array<double, 4> beta_last{0.0, 0.0, 2.0, 1.0};
    auto rng = seed.engine();
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double frac = static_cast<double>(i) / static_cast<double>(n - 1);
        double y = 0.0;
        for (std::size_t j = 0; j < 4; ++j) {
            out.beta_path[i][j] = beta_first[j] + frac * (beta_last[j] - beta_first[j]);
            const double x = gauss(rng);
            out.features.at(i, j) = x;
            y += x * out.beta_path[i][j];
        }
        out.responses[i] = y + gauss(rng);
    }
    return out;
}

/// Changepoints at i = 500 and 1500 (1-based): beta jumps between three
/// fixed regimes.
inline LinearRegimeData generate_changepoint(std::size_t n, RngSeed seed) {
    if (n < 1501) throw InsufficientDataError("changepoint series needs N >= 1501");
    LinearRegimeData out;
    out.features = Matrix(n, 4);
    out.responses.resize(n);
    out.beta_path.resize(n);
    out.change_indices = {500, 1500};
    auto rng = seed.engine();
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t idx = i + 1;
        std::array<double, 4> beta{};
        if (idx <= 500)
            beta = {2.0, 1.0, 0.0, 0.0};
        else if (idx <= 1500)
            beta = {0.0, -2.0, -1.0, 0.0};
        else
            beta = {0.0, 0.0, 2.0, 1.0};
        out.beta_path[i] = beta;
        double y = 0.0;
        for (std::size_t j = 0; j < 4; ++j) {
            const double x = gauss(rng);
            out.features.at(i, j) = x;
            y += x * beta[j];
        }
        out.responses[i] = y + gauss(rng);
    }
    return out;
}

/// AR(1) series x_t = a x_{t-1} + e_t with a stationary start when |a| < 1.
inline std::vector<double> generate_ar1(std::size_t n, double a, double noise_sd,
                                        RngSeed seed) {
    std::vector<double> x(n);
    auto rng = seed.engine();
    std::normal_distribution<double> gauss(0.0, 1.0);
    if (std::abs(a) >= 1.0) {
        std::cerr << "warning: AR(1) coefficient |a| >= 1 is non-stationary\n";
        x[0] = noise_sd * gauss(rng);
    } else {
        x[0] = noise_sd / std::sqrt(1.0 - a * a) * gauss(rng);
    }
    for (std::size_t i = 1; i < n; ++i) x[i] = a * x[i - 1] + noise_sd * gauss(rng);
    return x;
}

}  // namespace spci
