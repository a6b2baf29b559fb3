#pragma once

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "spci/core.hpp"

namespace spci {

struct CsvError : std::runtime_error {
    explicit CsvError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Plain numeric CSV with a required header row. No quoting or escaping;
/// rows are assumed to be in temporal order.
struct CsvTable {
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;

    std::size_t n_rows() const { return rows.size(); }
    std::size_t n_cols() const { return columns.size(); }

    std::size_t column_index(const std::string& name) const {
        for (std::size_t i = 0; i < columns.size(); ++i)
            if (columns[i] == name) return i;
        throw CsvError("no column named '" + name + "'");
    }

    std::vector<double> column(std::size_t idx) const {
        if (idx >= n_cols()) throw CsvError("column index out of range");
        std::vector<double> out(rows.size());
        for (std::size_t r = 0; r < rows.size(); ++r) out[r] = rows[r][idx];
        return out;
    }
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            cells.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    cells.push_back(cur);
    return cells;
}

inline double parse_numeric_cell(const std::string& cell, std::size_t row_number,
                                 std::size_t col) {
    if (cell.empty())
        throw CsvError("row " + std::to_string(row_number) + ", column " +
                       std::to_string(col + 1) + ": missing value");
    const char* begin = cell.c_str();
    char* end = nullptr;
    double v = std::strtod(begin, &end);
    if (end != begin + cell.size())
        throw CsvError("row " + std::to_string(row_number) + ", column " +
                       std::to_string(col + 1) + ": malformed numeric '" + cell + "'");
    return v;
}

}  // namespace detail

/// Load a numeric CSV. Missing or malformed cells raise CsvError with the
/// offending 1-based data-row number; values are never imputed.
inline CsvTable load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw CsvError("cannot open '" + path + "'");
    CsvTable table;
    std::string line;
    if (!std::getline(in, line)) throw CsvError("'" + path + "': empty file (header required)");
    table.columns = detail::split_csv_line(line);
    std::size_t row_number = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        ++row_number;
        auto cells = detail::split_csv_line(line);
        if (cells.size() != table.columns.size())
            throw CsvError("row " + std::to_string(row_number) + ": expected " +
                           std::to_string(table.columns.size()) + " cells, got " +
                           std::to_string(cells.size()));
        std::vector<double> row(cells.size());
        for (std::size_t c = 0; c < cells.size(); ++c)
            row[c] = detail::parse_numeric_cell(cells[c], row_number, c);
        table.rows.push_back(std::move(row));
    }
    return table;
}

/// Full-precision formatting so emitted files re-ingest losslessly.
inline std::string format_full(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline void write_csv(const std::string& path, const std::vector<std::string>& columns,
                      const std::vector<std::vector<double>>& rows) {
    std::ofstream out(path);
    if (!out) throw CsvError("cannot write '" + path + "'");
    for (std::size_t c = 0; c < columns.size(); ++c) {
        if (c) out << ',';
        out << columns[c];
    }
    out << '\n';
    for (const auto& row : rows) {
        for (std::size_t c = 0; c < row.size(); ++c) {
            if (c) out << ',';
            out << format_full(row[c]);
        }
        out << '\n';
    }
}

/// Assemble a dataset from a loaded table: optional exogenous columns
/// (treated as known at prediction time) concatenated with `ar_lags`
/// autoregressive lags of the target, oldest lag first.
inline TimeSeriesDataset dataset_from_table(const CsvTable& table, std::size_t target_col,
                                            const std::vector<std::size_t>& exog_cols,
                                            std::size_t ar_lags) {
    if (target_col >= table.n_cols()) throw CsvError("target column index out of range");
    for (auto c : exog_cols) {
        if (c >= table.n_cols()) throw CsvError("exogenous column index out of range");
        if (c == target_col) throw CsvError("target column listed as exogenous");
    }
    if (exog_cols.empty() && ar_lags == 0)
        throw CsvError("no features: provide exogenous columns or ar_lags >= 1");
    const std::vector<double> y = table.column(target_col);
    const std::size_t start = ar_lags;  // first row with a full lag vector
    if (y.size() <= start)
        throw InsufficientDataError("CSV has too few rows for " + std::to_string(ar_lags) +
                                    " autoregressive lags");
    const std::size_t n = y.size() - start;
    const std::size_t d = exog_cols.size() + ar_lags;
    TimeSeriesDataset ds;
    ds.features = Matrix(n, d);
    ds.responses.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t t = i + start;
        std::size_t col = 0;
        for (auto c : exog_cols) ds.features.at(i, col++) = table.rows[t][c];
        for (std::size_t j = 0; j < ar_lags; ++j)
            ds.features.at(i, col++) = y[t - ar_lags + j];
        ds.responses[i] = y[t];
    }
    ds.train_size = n;
    return ds;
}

}  // namespace spci
