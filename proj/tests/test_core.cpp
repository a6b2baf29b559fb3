#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>

#include "spci/core.hpp"
#include "spci/csv.hpp"

using namespace spci;

TEST_CASE("autoregressive feature construction") {
    SECTION("basic lag layout, oldest to newest") {
        const std::vector<double> series{1, 2, 3, 4};
        TimeSeriesDataset ds = build_autoregressive_features(series, 2);
        REQUIRE(ds.size() == 2);
        CHECK(ds.features.at(0, 0) == 1.0);
        CHECK(ds.features.at(0, 1) == 2.0);
        CHECK(ds.features.at(1, 0) == 2.0);
        CHECK(ds.features.at(1, 1) == 3.0);
        CHECK(ds.responses == std::vector<double>{3, 4});
    }
    SECTION("series shorter than window + 1 is rejected") {
        const std::vector<double> series{5};
        CHECK_THROWS_AS(build_autoregressive_features(series, 1), InsufficientDataError);
    }
    SECTION("constant series") {
        const std::vector<double> series{0, 0, 0, 0, 0};
        TimeSeriesDataset ds = build_autoregressive_features(series, 3);
        REQUIRE(ds.size() == 2);
        for (std::size_t i = 0; i < 2; ++i) {
            CHECK(ds.responses[i] == 0.0);
            for (std::size_t j = 0; j < 3; ++j) CHECK(ds.features.at(i, j) == 0.0);
        }
    }
}

TEST_CASE("residual window is FIFO with bounded capacity") {
    SECTION("push beyond capacity evicts the oldest") {
        ResidualWindow w(3);
        for (double v : {1.0, 2.0, 3.0}) w.push(v);
        ResidualWindow w2 = push_residual(w, 4.0);
        REQUIRE(w2.size() == 3);
        CHECK(w2[0] == 2.0);
        CHECK(w2[1] == 3.0);
        CHECK(w2[2] == 4.0);
        // original untouched by the value-returning push
        CHECK(w[0] == 1.0);
    }
    SECTION("push into empty window") {
        ResidualWindow w(2);
        w.push(7.0);
        REQUIRE(w.size() == 1);
        CHECK(w[0] == 7.0);
    }
    SECTION("property: contents equal the tail of the push sequence") {
        auto rng = RngSeed{42, 0}.engine();
        std::normal_distribution<double> gauss;
        ResidualWindow w(50);
        std::vector<double> reference;
        for (int i = 0; i < 1000; ++i) {
            const double v = gauss(rng);
            w.push(v);
            reference.push_back(v);
            const std::size_t expect = std::min<std::size_t>(reference.size(), 50);
            REQUIRE(w.size() == expect);
        }
        for (std::size_t i = 0; i < 50; ++i) CHECK(w[i] == reference[950 + i]);
    }
}

TEST_CASE("lagged residual set") {
    SECTION("newest-first rows, targets, and query") {
        ResidualWindow w(10);
        const std::vector<double> r{1.5, -2.0, 3.25, 0.5};  // r1..r4
        for (double v : r) w.push(v);
        LaggedResidualSet lag = build_lagged_residual_set(w, 2);
        REQUIRE(lag.size() == 2);
        CHECK(lag.features.at(0, 0) == r[1]);
        CHECK(lag.features.at(0, 1) == r[0]);
        CHECK(lag.features.at(1, 0) == r[2]);
        CHECK(lag.features.at(1, 1) == r[1]);
        CHECK(lag.targets == std::vector<double>{r[2], r[3]});
        REQUIRE(lag.query.size() == 2);
        CHECK(lag.query[0] == r[3]);
        CHECK(lag.query[1] == r[2]);
    }
    SECTION("window no longer than w is rejected") {
        ResidualWindow w(10);
        w.push(1.0);
        w.push(2.0);
        CHECK_THROWS_AS(build_lagged_residual_set(w, 2), InsufficientDataError);
    }
    SECTION("index arithmetic against an independent enumerator, length 100 / w 20") {
        auto rng = RngSeed{7, 1}.engine();
        std::normal_distribution<double> gauss;
        std::vector<double> res(100);
        for (auto& v : res) v = gauss(rng);
        ResidualWindow w(100);
        for (double v : res) w.push(v);
        LaggedResidualSet lag = build_lagged_residual_set(w, 20);
        REQUIRE(lag.size() == 80);
        for (std::size_t t = 0; t < 80; ++t) {
            REQUIRE(lag.targets[t] == res[t + 20]);
            for (std::size_t j = 0; j < 20; ++j)
                REQUIRE(lag.features.at(t, j) == res[t + 20 - 1 - j]);
        }
        // overlap consistency: first feature of row t equals target of row t-1
        for (std::size_t t = 1; t < 80; ++t)
            REQUIRE(lag.features.at(t, 0) == lag.targets[t - 1]);
    }
    SECTION("lag consistency: targets plus first w residuals rebuild the sequence") {
        auto rng = RngSeed{9, 2}.engine();
        std::normal_distribution<double> gauss;
        for (std::size_t w_lag : {1u, 3u, 7u}) {
            std::vector<double> res(40);
            for (auto& v : res) v = gauss(rng);
            ResidualWindow w(40);
            for (double v : res) w.push(v);
            LaggedResidualSet lag = build_lagged_residual_set(w, w_lag);
            std::vector<double> rebuilt(res.begin(), res.begin() + w_lag);
            for (double t : lag.targets) rebuilt.push_back(t);
            REQUIRE(rebuilt == res);
        }
    }
}

TEST_CASE("rng streams are reproducible and child streams distinct") {
    const RngSeed a{123, 4};
    auto e1 = a.engine();
    auto e2 = a.engine();
    for (int i = 0; i < 5; ++i) REQUIRE(e1() == e2());
    auto c1 = a.child(1).engine();
    auto c2 = a.child(2).engine();
    CHECK(c1() != c2());
}

TEST_CASE("dataset invariants") {
    TimeSeriesDataset ds;
    ds.features = Matrix(3, 2);
    ds.responses = {1, 2};
    ds.train_size = 2;
    CHECK_THROWS_AS(ds.validate(), ShapeError);
    ds.responses = {1, 2, 3};
    ds.train_size = 4;
    CHECK_THROWS_AS(ds.validate(), DomainError);
    ds.train_size = 2;
    CHECK_NOTHROW(ds.validate());
}

TEST_CASE("csv ingestion") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "spci_csv_test";
    fs::create_directories(dir);

    SECTION("round trip at full precision") {
        auto rng = RngSeed{11, 0}.engine();
        std::normal_distribution<double> gauss;
        std::vector<std::vector<double>> rows;
        for (int i = 0; i < 25; ++i) rows.push_back({gauss(rng) * 1e-7, gauss(rng) * 1e9});
        const std::string path = (dir / "roundtrip.csv").string();
        write_csv(path, {"a", "y"}, rows);
        CsvTable table = load_csv(path);
        REQUIRE(table.n_rows() == 25);
        REQUIRE(table.columns == std::vector<std::string>{"a", "y"});
        for (int i = 0; i < 25; ++i) {
            REQUIRE(table.rows[i][0] == rows[i][0]);
            REQUIRE(table.rows[i][1] == rows[i][1]);
        }
    }
    SECTION("malformed numeric reports the row") {
        const std::string path = (dir / "bad.csv").string();
        std::ofstream(path) << "x,y\n1.0,2.0\n1.5,oops\n";
        try {
            load_csv(path);
            FAIL("expected CsvError");
        } catch (const CsvError& e) {
            CHECK(std::string(e.what()).find("row 2") != std::string::npos);
        }
    }
    SECTION("missing value is rejected, never imputed") {
        const std::string path = (dir / "missing.csv").string();
        std::ofstream(path) << "x,y\n1.0,\n";
        CHECK_THROWS_AS(load_csv(path), CsvError);
    }
    SECTION("dataset assembly: exogenous plus autoregressive lags") {
        const std::string path = (dir / "mix.csv").string();
        std::ofstream(path) << "e,y\n10,1\n20,2\n30,3\n40,4\n";
        CsvTable table = load_csv(path);
        TimeSeriesDataset ds = dataset_from_table(table, 1, {0}, 2);
        REQUIRE(ds.size() == 2);
        // row 0 is time index 2: exog e=30, lags [1, 2], response 3
        CHECK(ds.features.at(0, 0) == 30.0);
        CHECK(ds.features.at(0, 1) == 1.0);
        CHECK(ds.features.at(0, 2) == 2.0);
        CHECK(ds.responses[0] == 3.0);
        CHECK_THROWS_AS(dataset_from_table(table, 1, {}, 0), CsvError);
    }
}
