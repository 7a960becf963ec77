#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "lobq/estimation.hpp"
#include "lobq/xval.hpp"

using namespace lobq;

namespace {

const ModelParams kFigure = ModelParams::from_rates(12.0, 13.0);

/// Captures lobq warnings written to std::clog.
class WarningCapture {
public:
    WarningCapture() : old_(std::clog.rdbuf(buf_.rdbuf())) {}
    ~WarningCapture() { std::clog.rdbuf(old_); }
    std::string text() const { return buf_.str(); }

private:
    std::ostringstream buf_;
    std::streambuf* old_;
};

std::string temp_path(const std::string& name) { return (std::filesystem::temp_directory_path() / ("lobq_test_" + name)).string(); }

std::vector<EventRecord> simulated_log(const ModelParams& params, const QueueDist& f, Horizon horizon, std::uint64_t seed) {
    SimConfig cfg;
    cfg.seed = seed;
    cfg.horizon = horizon;
    cfg.initial_price = 100.0;
    return simulate_with_log(params, ReplenishmentLaw::from(f), cfg).second;
}

std::string header_and(const std::string& rows) { return std::string(kEventLogHeader) + "\n" + rows; }

ParsedLog parse_text(const std::string& text, const ParseOptions& opts = {}) {
    std::istringstream in(text);
    return parse_event_log(in, opts);
}

} // namespace

TEST(ParseEventLog, EmptyInput) {
    EXPECT_TRUE(parse_text("").records.empty());
    EXPECT_TRUE(parse_text(header_and("")).records.empty());
}

TEST(ParseEventLog, SmallFixtureRoundTrip) {
    const auto parsed = parse_text(header_and("0.5,bid,limit,3,4,100.01\n"
                                              "0.75,ask,market,3,3,100.01\n"
                                              "1.25,ask,cancel,3,2,100.01\n"));
    ASSERT_EQ(parsed.records.size(), 3u);
    EXPECT_TRUE(parsed.malformed.empty());
    const EventRecord first{0.5, Side::bid, EventKind::limit, 3, 4, 100.01};
    EXPECT_EQ(parsed.records[0], first);
    EXPECT_EQ(parsed.records[1].kind, EventKind::market);
    EXPECT_EQ(parsed.records[2].side, Side::ask);
    EXPECT_EQ(parsed.records[2].ask_queue_after, 2);

    std::ostringstream out;
    write_event_log_csv(out, parsed.records);
    EXPECT_EQ(parse_text(out.str()).records, parsed.records);
}

TEST(ParseEventLog, CommentsSkipped) {
    const auto parsed = parse_text("# generated\n" + header_and("# note\n1,bid,limit,1,1,10\n"));
    EXPECT_EQ(parsed.records.size(), 1u);
}

TEST(ParseEventLog, MissingHeaderRejected) { EXPECT_THROW(parse_text("1,bid,limit,1,1,10\n"), EventLogError); }

TEST(ParseEventLog, SimulatorRoundTrip) {
    const auto log = simulated_log(kFigure, asymmetric_reference_f(), Horizon::events(5000), 3);
    for (const std::string name : {"roundtrip.csv", "roundtrip.csv.gz"}) {
        const auto path = temp_path(name);
        write_event_log_file(path, log);
        const auto parsed = parse_event_log_file(path);
        EXPECT_EQ(parsed.records, log) << name;
        std::filesystem::remove(path);
    }
}

TEST(ParseEventLog, GzipIsCompressed) {
    const auto log = simulated_log(kFigure, asymmetric_reference_f(), Horizon::events(5000), 3);
    const auto plain = temp_path("size.csv");
    const auto gz = temp_path("size.csv.gz");
    write_event_log_file(plain, log);
    write_event_log_file(gz, log);
    EXPECT_LT(std::filesystem::file_size(gz), std::filesystem::file_size(plain) / 2);
    std::filesystem::remove(plain);
    std::filesystem::remove(gz);
}

TEST(ParseEventLog, UnreadableFile) { EXPECT_THROW(parse_event_log_file(temp_path("does_not_exist.csv")), EventLogError); }

TEST(ParseEventLog, MalformedAboveThresholdAborts) {
    std::string rows;
    for (int i = 0; i < 98; ++i) rows += std::to_string(i) + ",bid,limit,1,1,10\n";
    rows += "98,bid,oops,1,1,10\n99,sideways,limit,1,1,10\n";
    try {
        parse_text(header_and(rows));
        FAIL() << "expected EventLogError";
    } catch (const EventLogError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("line 100"), std::string::npos) << msg;
        EXPECT_NE(msg.find("line 101"), std::string::npos) << msg;
    }
}

TEST(ParseEventLog, MalformedBelowThresholdWarns) {
    std::string rows;
    for (int i = 0; i < 199; ++i) rows += std::to_string(i) + ",bid,limit,1,1,10\n";
    rows += "199,bid,limit,x,1,10\n";
    WarningCapture warnings;
    const auto parsed = parse_text(header_and(rows));
    EXPECT_EQ(parsed.records.size(), 199u);
    ASSERT_EQ(parsed.malformed.size(), 1u);
    EXPECT_EQ(parsed.malformed[0].line, 201u);
    EXPECT_NE(warnings.text().find("line 201"), std::string::npos);
}

TEST(ParseEventLog, DecreasingTimestampIsMalformed) {
    std::string rows;
    for (int i = 0; i < 200; ++i) rows += std::to_string(i) + ",bid,limit,1,1,10\n";
    rows += "50,bid,limit,1,1,10\n";
    WarningCapture warnings;
    const auto parsed = parse_text(header_and(rows));
    ASSERT_EQ(parsed.malformed.size(), 1u);
    EXPECT_EQ(parsed.malformed[0].reason, "timestamp decreases");
}

TEST(ParseEventLog, BatchSizeRescales) {
    ParseOptions opts;
    opts.batch_size = 100.0;
    const auto parsed = parse_text(header_and("0,bid,limit,250,100,10\n"), opts);
    ASSERT_EQ(parsed.records.size(), 1u);
    EXPECT_EQ(parsed.records[0].bid_queue_after, 3);
    EXPECT_EQ(parsed.records[0].ask_queue_after, 1);
    EXPECT_THROW(parse_text("", ParseOptions{0.0, 0.01}), std::invalid_argument);
}

TEST(EstimateIntensities, SingleLimitEvent) {
    const std::vector<EventRecord> log{{0.0, Side::bid, EventKind::limit, 2, 2, 10.0}, {1.0, Side::ask, EventKind::market, 2, 1, 10.0}};
    WarningCapture warnings;
    const auto e = estimate_intensities(log);
    EXPECT_DOUBLE_EQ(e.elapsed(), 1.0);
    EXPECT_DOUBLE_EQ(e.lambda_bid, 1.0);
    EXPECT_DOUBLE_EQ(e.lambda_ask, 0.0);
    EXPECT_DOUBLE_EQ(e.mu_theta_ask, 1.0);
    EXPECT_DOUBLE_EQ(e.lambda_hat, 0.5);
}

TEST(EstimateIntensities, NoRemovalsWarns) {
    const std::vector<EventRecord> log{{0.0, Side::bid, EventKind::limit, 2, 2, 10.0}, {2.0, Side::ask, EventKind::limit, 2, 3, 10.0}};
    WarningCapture warnings;
    const auto e = estimate_intensities(log);
    EXPECT_EQ(e.mu_theta_hat, 0.0);
    EXPECT_DOUBLE_EQ(e.lambda_hat, 0.5);
    EXPECT_NE(warnings.text().find("mu+theta estimate is 0"), std::string::npos);
    ASSERT_TRUE(e.balance_diagnostic.has_value());
    EXPECT_DOUBLE_EQ(*e.balance_diagnostic, 1.0);
}

TEST(EstimateIntensities, Errors) {
    EXPECT_THROW(estimate_intensities({}), EventLogError);
    const std::vector<EventRecord> one{{1.0, Side::bid, EventKind::limit, 1, 1, 10.0}};
    EXPECT_THROW(estimate_intensities(one), EventLogError);
}

TEST(EstimateIntensities, RecoversGeneratorWithinThreeSE) {
    const ModelParams params{2204.0, 700.0, 1631.0, 0.01};
    const auto log = simulated_log(params, asymmetric_reference_f(), Horizon::time(10.0), 11);
    const auto e = estimate_intensities(log, {std::pair{0.0, 10.0}});
    EXPECT_NEAR(e.lambda_hat, params.lambda, 3.0 * e.lambda_se);
    EXPECT_NEAR(e.mu_theta_hat, params.mu_theta(), 3.0 * e.mu_theta_se);
    EXPECT_NEAR(e.lambda_se, std::sqrt(2.0 * params.lambda * 10.0) / 20.0, 0.05 * e.lambda_se);
}

TEST(EstimateIntensities, ErrorShrinksLikeInverseRootT) {
    // RMS relative error over replicates at T = 60, 600, 6000 s; log-log slope near -1/2.
    const auto f = asymmetric_reference_f();
    const int reps = 48;
    std::vector<double> log_t, log_err;
    for (double T : {60.0, 600.0, 6000.0}) {
        double ss = 0.0;
        for (int r = 0; r < reps; ++r) {
            const auto log = simulated_log(kFigure, f, Horizon::time(T), 1000 + r);
            const auto e = estimate_intensities(log, {std::pair{0.0, T}});
            const double dl = e.lambda_hat / kFigure.lambda - 1.0;
            const double dm = e.mu_theta_hat / kFigure.mu_theta() - 1.0;
            ss += dl * dl + dm * dm;
        }
        log_t.push_back(std::log(T));
        log_err.push_back(0.5 * std::log(ss / (2.0 * reps)));
    }
    const double slope = (log_err.back() - log_err.front()) / (log_t.back() - log_t.front());
    EXPECT_NEAR(slope, -0.5, 0.15);
}

TEST(EstimateReplenishment, SingleUpMoveIsPointMass) {
    const std::vector<EventRecord> log{{0.0, Side::ask, EventKind::market, 2, 1, 10.00}, {0.5, Side::ask, EventKind::market, 3, 7, 10.01}};
    const auto r = estimate_replenishment(log);
    EXPECT_EQ(r.up_moves, 1u);
    EXPECT_NEAR(r.tick, 0.01, 1e-15);
    ASSERT_EQ(r.f_hat.atoms().size(), 1u);
    EXPECT_EQ(r.f_hat.prob(3, 7), 1.0);
}

TEST(EstimateReplenishment, DownMovesPooledSwapped) {
    const std::vector<EventRecord> log{{0.0, Side::ask, EventKind::market, 2, 1, 10.0},
                                       {0.5, Side::ask, EventKind::market, 3, 7, 11.0},
                                       {0.9, Side::bid, EventKind::market, 2, 5, 10.0}};
    EXPECT_EQ(estimate_replenishment(log).f_hat.atoms().size(), 1u);
    const auto pooled = estimate_replenishment(log, {true, std::nullopt});
    EXPECT_EQ(pooled.down_moves, 1u);
    EXPECT_DOUBLE_EQ(pooled.f_hat.prob(5, 2), 0.5);
    EXPECT_DOUBLE_EQ(pooled.f_hat.prob(3, 7), 0.5);
}

TEST(EstimateReplenishment, MultiTickJumpsExcluded) {
    const std::vector<EventRecord> log{{0.0, Side::ask, EventKind::market, 2, 1, 10.0},
                                       {0.5, Side::ask, EventKind::market, 3, 7, 11.0},
                                       {0.9, Side::ask, EventKind::market, 4, 4, 13.0}};
    WarningCapture warnings;
    const auto r = estimate_replenishment(log);
    EXPECT_EQ(r.multi_tick_jumps, 1u);
    EXPECT_EQ(r.up_moves, 1u);
    EXPECT_NE(warnings.text().find("multi-tick"), std::string::npos);
}

TEST(EstimateReplenishment, NoPriceChanges) {
    const std::vector<EventRecord> log{{0.0, Side::bid, EventKind::limit, 2, 2, 10.0}, {1.0, Side::bid, EventKind::limit, 3, 2, 10.0}};
    EXPECT_THROW(estimate_replenishment(log), EventLogError);
}

TEST(EstimateReplenishment, RecoversKnownF) {
    const auto f = asymmetric_reference_f();
    const auto log = simulated_log(kFigure, f, Horizon::price_changes(20000), 5);
    const auto r = estimate_replenishment(log, {true, kFigure.tick});
    EXPECT_GE(r.up_moves + r.down_moves, 10000u);
    EXPECT_LE(total_variation(r.f_hat, f), 0.02);
    EXPECT_GT(r.asymmetry, 0.7);
    EXPECT_NEAR(r.asymmetry, asymmetry_mass(f), 0.02);
    double total = 0.0;
    for (const auto& a : r.f_hat.atoms()) {
        EXPECT_GE(a.bid, 1);
        EXPECT_GE(a.ask, 1);
        total += a.p;
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
}

TEST(EstimateReplenishment, InferredTickDropsRepresentationNoise) {
    const std::vector<EventRecord> log{{0.0, Side::ask, EventKind::market, 2, 1, 100.13}, {0.5, Side::ask, EventKind::market, 3, 7, 100.14}};
    EXPECT_EQ(*infer_tick(log), 0.01);
}

TEST(QueueDistCsv, RoundTrip) {
    const auto f = asymmetric_reference_f();
    std::stringstream io;
    write_queue_dist_csv(io, f);
    const auto back = read_queue_dist_csv(io);
    EXPECT_LT(total_variation(back, f), 1e-15);
}

TEST(RealizedVolatility, ConstantPrice) {
    PriceSeries s;
    s.times = {0.0};
    s.prices = {10.0};
    s.t_end = 100.0;
    EXPECT_EQ(realized_volatility(s, 10.0), 0.0);
}

TEST(RealizedVolatility, DeterministicDrift) {
    PriceSeries s;
    for (int k = 0; k <= 20; ++k) {
        s.times.push_back(10.0 * k + 5.0);
        s.prices.push_back(0.01 * k);
    }
    s.t_end = 205.0;
    EXPECT_NEAR(realized_volatility(s, 10.0), 0.0, 1e-15);
}

TEST(RealizedVolatility, Errors) {
    PriceSeries s;
    s.times = {0.0};
    s.prices = {10.0};
    s.t_end = 15.0;
    EXPECT_THROW(realized_volatility(s, 10.0), EventLogError);
    EXPECT_THROW(realized_volatility(s, 0.0), std::invalid_argument);
    EXPECT_THROW(realized_volatility(PriceSeries{}, 1.0), EventLogError);
}

TEST(RealizedVolatility, FromLogMatchesFromPath) {
    SimConfig cfg;
    cfg.seed = 4;
    cfg.horizon = Horizon::time(2000.0);
    cfg.initial_price = 50.0;
    const auto [path, log] = simulate_with_log(kFigure, ReplenishmentLaw::from(asymmetric_reference_f()), cfg);
    auto from_log = PriceSeries::from_log(log);
    from_log.times.front() = 0.0;
    from_log.t_end = path.horizon;
    EXPECT_NEAR(realized_volatility(from_log, 60.0), realized_volatility(PriceSeries::from_path(path), 60.0), 1e-12);
}

// Balanced durations have infinite mean, so one path can freeze for a long stretch;
// Monte Carlo error comes from the spread over independent paths.
struct ReplicatedVol {
    double mean = 0.0;
    double se = 0.0;
};

ReplicatedVol replicated_realized_vol(const ModelParams& params, const QueueDist& f, double window, double windows, int reps, std::uint64_t seed) {
    const auto vols = parallel_map<double>(static_cast<std::size_t>(reps), [&](std::size_t r) {
        SimConfig cfg;
        cfg.seed = seed;
        cfg.horizon = Horizon::time(window * windows);
        return realized_volatility(PriceSeries::from_path(simulate(params, f, cfg, r)), window);
    });
    ReplicatedVol out;
    for (double v : vols) out.mean += v / reps;
    double ss = 0.0;
    for (double v : vols) ss += (v - out.mean) * (v - out.mean);
    out.se = std::sqrt(ss / (reps - 1) / reps);
    return out;
}

// Balanced model at the parameters of the diffusion-limit acceptance check, 10-minute windows.
TEST(RealizedVolatility, BalancedPathNearWindowedPrediction) {
    const auto params = ModelParams::from_rates(10.0, 10.0);
    const auto f = symmetric_reference_f();
    const double window = 600.0;
    const auto vol = replicated_realized_vol(params, f, window, 50, 24, 21);
    const double predicted = vol_balanced(params, f, orders_for_window(window));
    EXPECT_NEAR(vol.mean / predicted, 1.0, 0.15);
}

TEST(PredictedVsRealized, RatioNearTickRootPiN) {
    const auto params = ModelParams::from_rates(10.0, 10.0);
    const auto log = simulated_log(params, symmetric_reference_f(), Horizon::time(600.0 * 400), 22);
    const auto c = predicted_vs_realized(log, 600.0);
    EXPECT_NEAR(c.expected_ratio, params.tick * std::sqrt(detail::kPi * orders_for_window(600.0)), 1e-12);
    EXPECT_NEAR(c.ratio / c.expected_ratio, 1.0, 0.15);
}

TEST(PredictedVsRealized, DepthRatioFour) {
    // D = 6 vs D = 24 at equal lambda: predictor ratio 2, realized ratio 2 within Monte Carlo error.
    const auto params = ModelParams::from_rates(10.0, 10.0);
    const QueueDist shallow({{2, 3, 0.5}, {3, 2, 0.5}}, true);
    const QueueDist deep({{4, 6, 0.5}, {6, 4, 0.5}}, true);
    ASSERT_DOUBLE_EQ(depth(deep), 4.0 * depth(shallow));
    std::vector<std::pair<std::string, std::vector<EventRecord>>> assets{
        {"shallow", simulated_log(params, shallow, Horizon::time(600.0 * 50), 31)},
        {"deep", simulated_log(params, deep, Horizon::time(600.0 * 50), 32)}};
    const auto rows = predicted_vs_realized(assets, 600.0);
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(rows[0].name, "shallow");
    EXPECT_EQ(rows[1].name, "deep");
    EXPECT_NEAR(rows[0].predictor / rows[1].predictor, 2.0, 0.05);

    const auto a = replicated_realized_vol(params, shallow, 600.0, 50, 24, 33);
    const auto b = replicated_realized_vol(params, deep, 600.0, 50, 24, 34);
    const double ratio = a.mean / b.mean;
    const double se = ratio * std::hypot(a.se / a.mean, b.se / b.mean);
    EXPECT_NEAR(ratio, 2.0, 3.0 * se);
}

TEST(PredictedVsRealized, EmptyLogIsError) {
    EXPECT_THROW(predicted_vs_realized(std::vector<EventRecord>{}, 600.0), EventLogError);
    const nlohmann::json j = to_json(VolatilityComparison{});
    EXPECT_TRUE(j.contains("ratio"));
}
