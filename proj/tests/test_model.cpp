#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "lobq/model.hpp"

using namespace lobq;

namespace {

QueueDist symmetric_f() { return QueueDist({{2, 3, 0.5}, {3, 2, 0.5}}, true); }

} // namespace

TEST(ModelParams, Validation) {
    EXPECT_NO_THROW(ModelParams::from_rates(12, 13));
    EXPECT_THROW(ModelParams::from_rates(0, 13), std::invalid_argument);
    EXPECT_THROW(ModelParams::from_rates(1, 0), std::invalid_argument);
    EXPECT_THROW((ModelParams{1, -1, 2, 1}.validate()), std::invalid_argument);
    EXPECT_THROW(ModelParams::from_rates(1, 1, 0.0), std::invalid_argument);
    const ModelParams p{2204, 700, 1631, 0.01};
    EXPECT_DOUBLE_EQ(p.mu_theta(), 2331);
    EXPECT_DOUBLE_EQ(p.event_rate(), 2 * (2204 + 2331));
    EXPECT_TRUE(ModelParams::from_rates(10, 10).balanced());
    EXPECT_FALSE(ModelParams::from_rates(12, 13).balanced());
}

TEST(QueueDist, Validation) {
    EXPECT_THROW(QueueDist({}), std::invalid_argument);
    EXPECT_THROW(QueueDist({{0, 1, 1.0}}), std::invalid_argument);
    EXPECT_THROW(QueueDist({{1, 1, 0.5}}), std::invalid_argument);
    EXPECT_THROW(QueueDist({{1, 1, 0.5}, {1, 1, 0.5}}), std::invalid_argument);
    EXPECT_THROW(QueueDist({{1, 2, 1.0}}, true), std::invalid_argument);
    EXPECT_NO_THROW(symmetric_f());
}

TEST(QueueDist, FromWeightsNormalisesAndMerges) {
    const auto f = QueueDist::from_weights({{1, 2, 3.0}, {2, 1, 1.0}, {1, 2, 1.0}, {5, 5, 0.0}});
    EXPECT_EQ(f.atoms().size(), 2u);
    EXPECT_DOUBLE_EQ(f.prob(1, 2), 0.8);
    EXPECT_DOUBLE_EQ(f.prob(2, 1), 0.2);
    EXPECT_EQ(f.prob(5, 5), 0.0);
    EXPECT_THROW(QueueDist::from_weights({{1, 1, 0.0}}), std::invalid_argument);
}

TEST(QueueDist, SwapSampleAndDistance) {
    const QueueDist f({{1, 2, 0.25}, {3, 1, 0.75}});
    const auto g = f.swapped();
    EXPECT_EQ(g.prob(2, 1), 0.25);
    EXPECT_EQ(g.prob(1, 3), 0.75);
    EXPECT_FALSE(f.is_swap_symmetric());
    EXPECT_TRUE(symmetric_f().is_swap_symmetric());
    EXPECT_EQ(f.max_queue(), 3);
    EXPECT_EQ(f.sample(0.0), std::pair(1, 2));
    EXPECT_EQ(f.sample(0.2499), std::pair(1, 2));
    EXPECT_EQ(f.sample(0.25), std::pair(3, 1));
    EXPECT_EQ(f.sample(0.9999999), std::pair(3, 1));
    EXPECT_DOUBLE_EQ(total_variation(f, f), 0.0);
    EXPECT_DOUBLE_EQ(total_variation(f, g), 1.0);
    EXPECT_DOUBLE_EQ(total_variation(QueueDist::point_mass(1, 1), QueueDist({{1, 1, 0.5}, {2, 2, 0.5}})), 0.5);
}

TEST(ApplyEvent, OrdinaryRemovalLeavesPrice) {
    Rng rng(1);
    const auto law = ReplenishmentLaw::from(QueueDist::point_mass(2, 3));
    const auto t = apply_event({0, 5, 4}, {Side::ask, EventKind::market}, law, rng);
    EXPECT_EQ(t.state, (BookState{0, 5, 3}));
    EXPECT_EQ(t.price_move, 0);
}

TEST(ApplyEvent, AskDepletionMovesUpAndReplenishes) {
    Rng rng(1);
    const auto law = ReplenishmentLaw::from(QueueDist::point_mass(2, 3));
    const auto t = apply_event({0, 5, 1}, {Side::ask, EventKind::cancel}, law, rng);
    EXPECT_EQ(t.state, (BookState{1, 2, 3}));
    EXPECT_EQ(t.price_move, +1);
}

TEST(ApplyEvent, BidDepletionUsesSwappedLaw) {
    Rng rng(1);
    const auto law = ReplenishmentLaw::from(QueueDist::point_mass(2, 3));
    const auto t = apply_event({0, 1, 4}, {Side::bid, EventKind::market}, law, rng);
    EXPECT_EQ(t.state, (BookState{-1, 3, 2}));
    EXPECT_EQ(t.price_move, -1);
}

TEST(Step, BalancedIncrementsAreFair) {
    const auto params = ModelParams::from_rates(3.0, 3.0);
    const auto law = ReplenishmentLaw::from(symmetric_f());
    Rng rng(2024);
    BookState s{0, 3, 3};
    const int n = 1'000'000;
    int ups = 0;
    for (int i = 0; i < n; ++i) {
        const auto r = step(s, params, law, rng);
        ups += r.event.kind == EventKind::limit;
        s = r.state;
    }
    const double frac = static_cast<double>(ups) / n;
    EXPECT_NEAR(frac, 0.5, 3.0 * std::sqrt(0.25 / n));
}

TEST(Step, SingleEventDepletionProbability) {
    // From (1, 1) any removal empties a queue, so the first event moves the price w.p. m / (lambda + m).
    const auto params = ModelParams::from_rates(1.0, 1000.0);
    const auto law = ReplenishmentLaw::from(QueueDist::point_mass(1, 1));
    Rng rng(7);
    const int n = 100'000;
    int moved = 0;
    for (int i = 0; i < n; ++i) moved += step({0, 1, 1}, params, law, rng).price_move != 0;
    const double p = 1000.0 / 1001.0;
    EXPECT_NEAR(static_cast<double>(moved) / n, p, 3.0 * std::sqrt(p * (1 - p) / n) + 1.0 / n);
}

TEST(FirstPassage, SymmetricStartIsFair) {
    const auto params = ModelParams::from_rates(5.0, 5.0);
    const int n = 100'000;
    int ups = 0;
    for (int i = 0; i < n; ++i) {
        Rng rng(99, i);
        ups += first_passage(params, 3, 3, rng).move > 0;
    }
    EXPECT_NEAR(static_cast<double>(ups) / n, 0.5, 3.0 * std::sqrt(0.25 / n));
}

TEST(Simulate, QueuesNeverEmptyAndPricesConsistent) {
    const ModelParams params{2.0, 1.5, 1.0, 0.5};
    SimConfig cfg;
    cfg.seed = 5;
    cfg.horizon = Horizon::events(200'000);
    cfg.initial_price = 10.0;
    const auto [path, log] = simulate_with_log(params, ReplenishmentLaw::from(QueueDist({{1, 1, 0.3}, {2, 4, 0.7}})), cfg);
    ASSERT_EQ(log.size(), 200'000u);
    for (const auto& r : log) {
        ASSERT_GE(r.bid_queue_after, 1);
        ASSERT_GE(r.ask_queue_after, 1);
    }
    EXPECT_DOUBLE_EQ(path.price_at(path.horizon), log.back().bid_price_after);
    EXPECT_EQ(path.change_times.size(), path.moves.size());
    for (std::size_t i = 1; i < path.change_times.size(); ++i) ASSERT_GE(path.change_times[i], path.change_times[i - 1]);
}

TEST(Simulate, InterEventTimesHaveTheModelRate) {
    const auto params = ModelParams::from_rates(12.0, 13.0);
    SimConfig cfg;
    cfg.seed = 8;
    cfg.horizon = Horizon::events(200'000);
    const auto [path, log] = simulate_with_log(params, ReplenishmentLaw::from(symmetric_f()), cfg);
    const double mean = log.back().timestamp / static_cast<double>(log.size());
    const double expected = 1.0 / params.event_rate();
    EXPECT_NEAR(mean, expected, 3.0 * expected / std::sqrt(static_cast<double>(log.size())));
    // second moment of an exponential is 2 mean^2
    double prev = 0.0, m2 = 0.0;
    for (const auto& r : log) {
        m2 += (r.timestamp - prev) * (r.timestamp - prev);
        prev = r.timestamp;
    }
    m2 /= static_cast<double>(log.size());
    EXPECT_NEAR(m2 / (2 * expected * expected), 1.0, 0.03);
}

TEST(Simulate, SymmetricMovesHaveZeroMean) {
    const auto params = ModelParams::from_rates(4.0, 4.0);
    SimConfig cfg;
    cfg.seed = 21;
    cfg.horizon = Horizon::price_changes(100'000);
    const auto path = simulate(params, symmetric_f(), cfg);
    ASSERT_EQ(path.moves.size(), 100'000u);
    double sum = 0;
    for (int m : path.moves) sum += m;
    EXPECT_LE(std::abs(sum / path.moves.size()), 3.0 / std::sqrt(static_cast<double>(path.moves.size())));
}

TEST(Simulate, Reproducible) {
    const auto params = ModelParams::from_rates(1.0, 1.3);
    SimConfig cfg;
    cfg.seed = 77;
    cfg.horizon = Horizon::time(500.0);
    const auto a = simulate(params, symmetric_f(), cfg, 3);
    const auto b = simulate(params, symmetric_f(), cfg, 3);
    const auto c = simulate(params, symmetric_f(), cfg, 4);
    EXPECT_EQ(a, b);
    EXPECT_NE(a, c);
    std::ostringstream sa, sb;
    write_price_path_csv(sa, a);
    write_price_path_csv(sb, b);
    EXPECT_EQ(sa.str(), sb.str());
}

TEST(Simulate, HorizonKinds) {
    const auto params = ModelParams::from_rates(1.0, 1.0);
    SimConfig cfg;
    cfg.horizon = Horizon::time(10.0);
    EXPECT_DOUBLE_EQ(simulate(params, symmetric_f(), cfg).horizon, 10.0);
    cfg.horizon = Horizon::price_changes(17);
    EXPECT_EQ(simulate(params, symmetric_f(), cfg).moves.size(), 17u);
    cfg.horizon = Horizon::time(-1.0);
    EXPECT_THROW(simulate(params, symmetric_f(), cfg), std::invalid_argument);
    cfg.horizon = Horizon::time(1.0);
    cfg.initial_state = BookState{0, 0, 2};
    EXPECT_THROW(simulate(params, symmetric_f(), cfg), std::invalid_argument);
}

TEST(Simulate, InitialStateOverridesDraw) {
    const auto params = ModelParams::from_rates(1.0, 1.0);
    SimConfig cfg;
    cfg.horizon = Horizon::events(1);
    cfg.initial_state = BookState{0, 7, 9};
    const auto [path, log] = simulate_with_log(params, ReplenishmentLaw::from(symmetric_f()), cfg);
    ASSERT_EQ(log.size(), 1u);
    EXPECT_EQ(std::abs(log[0].bid_queue_after - 7) + std::abs(log[0].ask_queue_after - 9), 1);
}

TEST(PricePathIo, CsvAndJson) {
    PricePath p;
    p.initial_price = 100;
    p.tick = 0.5;
    p.change_times = {0.25, 1.5};
    p.moves = {1, 1};
    p.horizon = 2;
    std::ostringstream os;
    write_price_path_csv(os, p);
    EXPECT_EQ(os.str(), "time,cumulative_price\n0,100\n0.25,100.5\n1.5,101\n");
    const auto j = price_path_json(p);
    EXPECT_EQ(j["moves"].size(), 2u);
    EXPECT_EQ(j["tick"], 0.5);
    EXPECT_EQ(p.ticks_at(1.0), 1);
    EXPECT_EQ(p.ticks_at(1.5), 2);
    EXPECT_EQ(p.count_at(0.1), 0u);
}

TEST(RescaledSeries, ZeroMovesGiveZeros) {
    PricePath p;
    p.horizon = 1e6;
    const std::vector<double> grid{0.0, 0.5, 1.0};
    for (double v : rescaled_series(p, 50, Regime::balanced, grid)) EXPECT_EQ(v, 0.0);
}

TEST(RescaledSeries, UnitScaleIsThePriceItself) {
    const auto params = ModelParams::from_rates(1.0, 1.3, 0.25);
    SimConfig cfg;
    cfg.seed = 3;
    cfg.horizon = Horizon::time(100.0);
    const auto path = simulate(params, symmetric_f(), cfg);
    const std::vector<double> grid{0.0, 10.0, 55.5, 100.0};
    const auto r = rescaled_series(path, 1, Regime::unbalanced, grid);
    for (std::size_t i = 0; i < grid.size(); ++i) EXPECT_DOUBLE_EQ(r[i], path.price_at(grid[i]) - path.initial_price);
    const std::vector<double> late{101.0};
    EXPECT_THROW(rescaled_series(path, 1, Regime::unbalanced, late), std::out_of_range);
}

TEST(EventLogCsv, Format) {
    const std::vector<EventRecord> log{{0.5, Side::bid, EventKind::limit, 3, 2, 99.99}, {1.25, Side::ask, EventKind::cancel, 3, 1, 99.99}};
    std::ostringstream os;
    write_event_log_csv(os, log);
    EXPECT_EQ(os.str(), "timestamp,side,kind,bid_queue_after,ask_queue_after,bid_price_after\n"
                        "0.5,bid,limit,3,2,99.99\n1.25,ask,cancel,3,1,99.99\n");
}
