#include <gtest/gtest.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lobq/cli.hpp"

namespace {

struct Outcome {
    int code = 0;
    std::string out;
    std::string err;
};

Outcome invoke(std::vector<std::string> args) {
    args.insert(args.begin(), "lobq");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    Outcome o;
    o.code = lobq::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    o.out = out.str();
    o.err = err.str();
    return o;
}

std::vector<std::string> csv_rows(const std::string& text) {
    std::vector<std::string> rows;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line))
        if (!line.empty() && line.front() != '#') rows.push_back(line);
    return rows;
}

std::vector<double> fields(const std::string& row) {
    std::vector<double> v;
    std::istringstream in(row);
    std::string cell;
    while (std::getline(in, cell, ',')) v.push_back(std::stod(cell));
    return v;
}

std::string temp_path(const std::string& name) { return (std::filesystem::temp_directory_path() / ("lobq_cli_" + name)).string(); }

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

} // namespace

TEST(CliDuration, FirstRowIsOne) {
    const auto o = invoke({"duration", "--lambda", "12", "--mu-theta", "13", "--a", "4", "--b", "5", "--t-grid", "0:10:0.01"});
    ASSERT_EQ(o.code, 0) << o.err;
    const auto rows = csv_rows(o.out);
    ASSERT_EQ(rows.front(), "t,survival,tail_asymptote");
    ASSERT_EQ(rows.size(), 1002u);
    const auto first = fields(rows[1]);
    EXPECT_EQ(first[0], 0.0);
    EXPECT_EQ(first[1], 1.0);
    const auto last = fields(rows.back());
    EXPECT_NEAR(last[0], 10.0, 1e-12);
    EXPECT_NEAR(last[1], lobq::survival_duration(4, 5, 10.0, lobq::ModelParams::from_rates(12, 13)), 1e-12);
    EXPECT_NEAR(last[2], 20.0 * 625.0 / (144.0 * 4.0) / 100.0, 1e-12);
}

TEST(CliDuration, BalancedTailColumn) {
    const auto o = invoke({"duration", "--lambda", "10", "--mu", "10", "--a", "4", "--b", "5", "--t-grid", "1,100"});
    ASSERT_EQ(o.code, 0) << o.err;
    const auto rows = csv_rows(o.out);
    EXPECT_NEAR(fields(rows[2])[2], 20.0 / (lobq::detail::kPi * 10.0 * 100.0), 1e-15);
}

TEST(CliDuration, EchoesResolvedConfig) {
    const auto o = invoke({"duration", "--lambda", "12", "--mu-theta", "13", "--a", "4", "--b", "5", "--t-grid", "0,1"});
    ASSERT_EQ(o.out.rfind("# config: ", 0), 0u);
    const auto j = nlohmann::json::parse(o.out.substr(10, o.out.find('\n') - 10));
    EXPECT_EQ(j["lambda"], 12);
    EXPECT_EQ(j["mu"], 13);
    EXPECT_EQ(j["theta"], 0);
    EXPECT_EQ(j["ask"], 4);
    EXPECT_EQ(j["subcommand"], "duration");
}

TEST(CliProbUp, DiagonalAndSymmetry) {
    for (const std::vector<std::string>& rates : {std::vector<std::string>{"--lambda", "1", "--mu", "1"}, {"--lambda", "12", "--mu", "13"}}) {
        std::vector<std::string> args{"prob-up", "--n-grid", "1:20", "--p-grid", "1:20"};
        args.insert(args.end(), rates.begin(), rates.end());
        const auto start = std::chrono::steady_clock::now();
        const auto o = invoke(args);
        const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        ASSERT_EQ(o.code, 0) << o.err;
        EXPECT_LT(seconds, 5.0);
        const auto rows = csv_rows(o.out);
        ASSERT_EQ(rows.size(), 401u);
        std::vector<std::vector<double>> phi(21, std::vector<double>(21));
        for (std::size_t i = 1; i < rows.size(); ++i) {
            const auto v = fields(rows[i]);
            phi[static_cast<int>(v[0])][static_cast<int>(v[1])] = v[2];
        }
        for (int n = 1; n <= 20; ++n) {
            EXPECT_NEAR(phi[n][n], 0.5, 1e-8);
            for (int p = 1; p <= 20; ++p) EXPECT_NEAR(phi[n][p] + phi[p][n], 1.0, 1e-8);
        }
    }
}

TEST(CliPriceStats, Json) {
    const auto o = invoke({"price-stats", "--lambda", "12", "--mu", "13", "--f", "1:2:0.6,2:1:0.4", "--a", "1", "--b", "1", "--lags", "4"});
    ASSERT_EQ(o.code, 0) << o.err;
    const auto j = nlohmann::json::parse(o.out);
    EXPECT_EQ(j["autocov"].size(), 4u);
    EXPECT_EQ(j["regime"], "unbalanced");
    const double c = 2.0 * j["p_cont"].get<double>() - 1.0;
    EXPECT_NEAR(j["autocov"][2].get<double>(), c * c, 1e-14);
    EXPECT_NEAR(j["depth"].get<double>(), 2.0, 1e-15);
}

TEST(CliVol, UnitSigma) {
    const auto o = invoke({"vol", "--tick", "1", "--lambda", "0.31830988618379067", "--mu", "0.31830988618379067", "--f", "1:1:1"});
    ASSERT_EQ(o.code, 0) << o.err;
    const auto j = nlohmann::json::parse(o.out);
    EXPECT_NEAR(j["predicted"]["sigma"].get<double>(), 1.0, 1e-12);
    EXPECT_EQ(j["predicted"]["regime"], "balanced");
}

TEST(CliPipeline, SimulateThenEstimate) {
    const auto log = temp_path("pipeline.csv.gz");
    const auto path = temp_path("pipeline_path.csv");
    auto o = invoke({"simulate", "--lambda", "12", "--mu", "9", "--theta", "4", "--f", "1:2:0.6,2:1:0.4", "--time", "500", "--seed", "9",
                     "--event-log", log, "-o", path});
    ASSERT_EQ(o.code, 0) << o.err;
    o = invoke({"estimate", "--log", log});
    ASSERT_EQ(o.code, 0) << o.err;
    const auto j = nlohmann::json::parse(o.out);
    EXPECT_NEAR(j["lambda_hat"].get<double>(), 12.0, 3.0 * j["lambda_se"].get<double>());
    EXPECT_NEAR(j["mu_theta_hat"].get<double>(), 13.0, 3.0 * j["mu_theta_se"].get<double>());
    EXPECT_EQ(j["parse"]["malformed_rows"], 0);
    std::filesystem::remove(log);
    std::filesystem::remove(path);
}

TEST(CliDeterminism, ByteIdenticalOutputs) {
    const auto out = temp_path("det.csv");
    const auto log = temp_path("det_log.csv");
    const std::vector<std::string> args{"simulate", "--lambda", "12", "--mu", "13", "--f", "2:3:0.5,3:2:0.5", "--events", "20000",
                                        "--seed", "3", "--event-log", log, "-o", out};
    ASSERT_EQ(invoke(args).code, 0);
    const auto first_out = slurp(out), first_log = slurp(log);
    ASSERT_EQ(invoke(args).code, 0);
    EXPECT_FALSE(first_out.empty());
    EXPECT_EQ(slurp(out), first_out);
    EXPECT_EQ(slurp(log), first_log);
    auto other = args;
    other[10] = "4";
    ASSERT_EQ(invoke(other).code, 0);
    EXPECT_NE(slurp(out), first_out);
    std::filesystem::remove(out);
    std::filesystem::remove(log);
}

TEST(CliHelp, DocumentsUnits) {
    for (const std::string sub : {"duration", "prob-up", "price-stats", "simulate", "estimate", "vol", "xval"}) {
        const auto o = invoke({sub, "--help"});
        EXPECT_EQ(o.code, 0) << sub;
        const bool units = o.out.find("[orders") != std::string::npos || o.out.find("[seconds]") != std::string::npos;
        EXPECT_TRUE(units) << sub;
    }
    const auto sim = invoke({"simulate", "--help"}).out;
    for (const char* unit : {"[seconds]", "[price units]", "[orders/second]", "[price changes]"}) EXPECT_NE(sim.find(unit), std::string::npos) << unit;
    EXPECT_NE(invoke({"estimate", "--help"}).out.find("[shares/batch]"), std::string::npos);
}

TEST(CliErrors, ExitCodesAndJson) {
    auto o = invoke({"duration", "--lambda", "1", "--mu", "1"});
    EXPECT_EQ(o.code, 2);
    auto j = nlohmann::json::parse(o.err);
    EXPECT_EQ(j["error"]["exit_code"], 2);
    EXPECT_EQ(j["error"]["kind"], "usage");

    o = invoke({"duration", "--lambda", "-1", "--mu", "1", "--a", "1", "--b", "1", "--t-grid", "1"});
    EXPECT_EQ(o.code, 2);
    o = invoke({"frobnicate"});
    EXPECT_EQ(o.code, 2);
    o = invoke({"simulate", "--f", "1:1:1"});
    EXPECT_EQ(o.code, 2) << "no horizon";
    o = invoke({"simulate", "--f", "1:1:1", "--time", "1", "--events", "3"});
    EXPECT_EQ(o.code, 2) << "two horizons";

    const auto bad = temp_path("bad.csv");
    {
        std::ofstream f(bad);
        f << lobq::kEventLogHeader << "\nnot,a,row\nnor,this,one\n";
    }
    o = invoke({"estimate", "--log", bad});
    EXPECT_EQ(o.code, 1);
    j = nlohmann::json::parse(o.err);
    EXPECT_EQ(j["error"]["kind"], "runtime");
    std::filesystem::remove(bad);

    o = invoke({"xval", "--criteria", "2"});
    EXPECT_EQ(o.code, lobq::cli::exit_xval_failed) << "the tail criterion fails for the unbalanced case";
    EXPECT_NE(o.out.find("criterion 2: FAIL"), std::string::npos);
}

TEST(CliConfig, FlagsOverrideFile) {
    const auto toml = temp_path("cfg.toml");
    {
        std::ofstream f(toml);
        f << "lambda = 5\nmu = 13\na = 2\nb = 3\nt-grid = \"0,1\"\n";
    }
    auto o = invoke({"duration", "--config", toml, "--lambda", "12"});
    ASSERT_EQ(o.code, 0) << o.err;
    auto j = nlohmann::json::parse(o.out.substr(10, o.out.find('\n') - 10));
    EXPECT_EQ(j["lambda"], 12);
    EXPECT_EQ(j["mu"], 13);
    EXPECT_EQ(j["ask"], 2);

    const auto json = temp_path("cfg.json");
    {
        std::ofstream f(json);
        f << R"({"duration": {"lambda": 7, "mu": 8, "a": 1, "b": 1, "t-grid": "0,2"}})";
    }
    o = invoke({"duration", "--config", json, "--mu", "9"});
    ASSERT_EQ(o.code, 0) << o.err;
    j = nlohmann::json::parse(o.out.substr(10, o.out.find('\n') - 10));
    EXPECT_EQ(j["lambda"], 7);
    EXPECT_EQ(j["mu"], 9);
    EXPECT_EQ(j["t-grid"], "0,2");

    {
        std::ofstream f(json);
        f << R"({"lambda": 7, "no-such-option": 1})";
    }
    EXPECT_EQ(invoke({"duration", "--config", json, "--a", "1", "--b", "1", "--t-grid", "1"}).code, 2);
    std::filesystem::remove(toml);
    std::filesystem::remove(json);
}
