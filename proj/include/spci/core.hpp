#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace spci {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

struct InsufficientDataError : std::runtime_error {
    explicit InsufficientDataError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DomainError : std::runtime_error {
    explicit DomainError(const std::string& msg) : std::runtime_error(msg) {}
};

struct EmptyInputError : std::runtime_error {
    explicit EmptyInputError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NonpositiveScaleError : std::runtime_error {
    explicit NonpositiveScaleError(const std::string& msg) : std::runtime_error(msg) {}
};

// ---------------------------------------------------------------------------
// Deterministic RNG streams
// ---------------------------------------------------------------------------

/// splitmix64 finalizer; used to derive independent stream ids.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// A (master_seed, stream_id) pair. Identical pairs yield bit-identical
/// engines regardless of which thread or schedule consumes them, which is
/// what makes parallel tree fitting reproducible.
struct RngSeed {
    std::uint64_t master_seed = 0;
    std::uint64_t stream_id = 0;

    /// Derive a sub-stream. child(a) != child(b) for a != b in practice.
    RngSeed child(std::uint64_t tag) const {
        return RngSeed{master_seed, mix64(stream_id ^ mix64(tag + 0x9e3779b97f4a7c15ULL))};
    }

    std::mt19937_64 engine() const {
        return std::mt19937_64(mix64(master_seed ^ mix64(stream_id)));
    }
};

/// Run fn(i) for i in [0, n). Work is sharded over at most max_threads
/// workers; fn must only write to slot i so the result is schedule-free.
template <typename Fn>
void parallel_for(std::size_t n, bool parallel, Fn&& fn) {
    if (n == 0) return;
    const std::size_t hw = std::max<std::size_t>(1, std::thread::hardware_concurrency());
    const std::size_t workers = parallel ? std::min(hw, n) : 1;
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            for (std::size_t i = w; i < n; i += workers) fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

// ---------------------------------------------------------------------------
// Dense row-major matrix
// ---------------------------------------------------------------------------

struct Matrix {
    std::size_t n_rows = 0;
    std::size_t n_cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : n_rows(rows), n_cols(cols), data(rows * cols, fill) {}

    double& at(std::size_t r, std::size_t c) { return data[r * n_cols + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * n_cols + c]; }

    std::span<const double> row(std::size_t r) const {
        return std::span<const double>(data.data() + r * n_cols, n_cols);
    }
    std::span<double> row(std::size_t r) {
        return std::span<double>(data.data() + r * n_cols, n_cols);
    }
};

// ---------------------------------------------------------------------------
// Core time-series types
// ---------------------------------------------------------------------------

/// Ordered (feature, response) pairs with a train/test boundary.
/// Row order is temporal: row i precedes row i+1.
struct TimeSeriesDataset {
    Matrix features;                  // rows = time indices, cols = feature dims
    std::vector<double> responses;    // length = features.n_rows
    std::size_t train_size = 0;       // first train_size rows are training data

    std::size_t size() const { return responses.size(); }
    std::size_t test_size() const { return size() - train_size; }

    void validate() const {
        if (features.n_rows != responses.size())
            throw ShapeError("dataset: feature rows (" + std::to_string(features.n_rows) +
                             ") != responses (" + std::to_string(responses.size()) + ")");
        if (train_size < 1 || train_size > size())
            throw DomainError("dataset: train_size must be in [1, N]");
    }
};

/// Sliding FIFO buffer of the most recent prediction residuals.
/// Pushing beyond capacity evicts exactly the oldest element.
class ResidualWindow {
public:
    ResidualWindow() : capacity_(1) {}
    explicit ResidualWindow(std::size_t capacity) : capacity_(capacity) {
        if (capacity_ < 1) throw DomainError("ResidualWindow capacity must be >= 1");
    }
    ResidualWindow(std::size_t capacity, std::span<const double> initial)
        : ResidualWindow(capacity) {
        for (double v : initial) push(v);
    }

    void push(double residual) {
        values_.push_back(residual);
        if (values_.size() > capacity_) values_.pop_front();
    }

    std::size_t size() const { return values_.size(); }
    std::size_t capacity() const { return capacity_; }
    bool empty() const { return values_.empty(); }
    double operator[](std::size_t i) const { return values_[i]; }  // 0 = oldest
    double newest() const { return values_.back(); }

    std::vector<double> to_vector() const {
        return std::vector<double>(values_.begin(), values_.end());
    }

private:
    std::size_t capacity_;
    std::deque<double> values_;
};

/// Pure-value counterpart of ResidualWindow::push.
inline ResidualWindow push_residual(const ResidualWindow& window, double residual) {
    ResidualWindow out = window;
    out.push(residual);
    return out;
}

/// Autoregression-on-residuals training set: row t' holds the w residuals
/// preceding target residual t'+w, ordered newest first. `query` is the
/// feature for the next, not-yet-observed residual.
struct LaggedResidualSet {
    Matrix features;               // shape (T~, w); row t' = [e_{t'+w-1}, ..., e_{t'}]
    std::vector<double> targets;   // targets[t'] = e_{t'+w}
    std::size_t window = 0;        // w
    std::vector<double> query;     // [e_last, ..., e_{last-w+1}]

    std::size_t size() const { return targets.size(); }
};

enum class Method { Split, EnbPI, SPCI, AdaptiveCI, WeightedQuantile, MultiStepSPCI };

inline std::string method_name(Method m) {
    switch (m) {
        case Method::Split: return "split";
        case Method::EnbPI: return "enbpi";
        case Method::SPCI: return "spci";
        case Method::AdaptiveCI: return "adaptive-ci";
        case Method::WeightedQuantile: return "weighted-quantile";
        case Method::MultiStepSPCI: return "multistep-spci";
    }
    return "unknown";
}

/// One [lower, upper] prediction band around a point prediction.
struct PredictionInterval {
    long time_index = -1;
    double point = 0.0;
    double lower = 0.0;
    double upper = 0.0;
    std::optional<double> beta;    // width-minimizing offset, when applicable
    Method method = Method::SPCI;

    double width() const { return upper - lower; }
    bool covers(double y) const { return lower <= y && y <= upper; }
};

// ---------------------------------------------------------------------------
// Feature construction
// ---------------------------------------------------------------------------

/// Build an autoregressive dataset: row i has features
/// [series[i], ..., series[i+tau-1]] (oldest to newest lag) and response
/// series[i+tau]. train_size is left at N for the caller to set.
inline TimeSeriesDataset build_autoregressive_features(std::span<const double> series,
                                                       std::size_t tau) {
    if (tau < 1) throw DomainError("autoregressive window must be >= 1");
    if (series.size() <= tau)
        throw InsufficientDataError("series length " + std::to_string(series.size()) +
                                    " too short for window " + std::to_string(tau));
    const std::size_t n = series.size() - tau;
    TimeSeriesDataset ds;
    ds.features = Matrix(n, tau);
    ds.responses.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < tau; ++j) ds.features.at(i, j) = series[i + j];
        ds.responses[i] = series[i + tau];
    }
    ds.train_size = n;
    return ds;
}

/// Build the lagged residual set (features newest first) plus the query
/// feature for the next residual.
inline LaggedResidualSet build_lagged_residual_set(const ResidualWindow& window,
                                                   std::size_t w) {
    if (w < 1) throw DomainError("residual feature window must be >= 1");
    const std::size_t len = window.size();
    if (len <= w)
        throw InsufficientDataError("residual window length " + std::to_string(len) +
                                    " too short for lag " + std::to_string(w));
    const std::size_t t_rows = len - w;
    LaggedResidualSet out;
    out.window = w;
    out.features = Matrix(t_rows, w);
    out.targets.resize(t_rows);
    for (std::size_t t = 0; t < t_rows; ++t) {
        for (std::size_t j = 0; j < w; ++j) out.features.at(t, j) = window[t + w - 1 - j];
        out.targets[t] = window[t + w];
    }
    out.query.resize(w);
    for (std::size_t j = 0; j < w; ++j) out.query[j] = window[len - 1 - j];
    return out;
}

}  // namespace spci
