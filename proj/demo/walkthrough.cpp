// Closed forms for a small book, then a simulate/estimate round trip.
#include <cstdio>

#include "lobq/analytics.hpp"
#include "lobq/estimation.hpp"
#include "lobq/model.hpp"

int main() {
    using namespace lobq;
    const auto params = ModelParams::from_rates(12.0, 13.0);
    const QueueDist f({{1, 1, 0.1}, {1, 2, 0.25}, {1, 3, 0.15}, {2, 1, 0.1}, {2, 2, 0.1}, {2, 3, 0.15}, {3, 2, 0.15}});

    std::printf("duration, bid 5 / ask 4, lambda 12, mu+theta 13\n");
    for (double t : {0.1, 1.0, 10.0, 100.0})
        std::printf("  P[tau > %6.1f] = %.6f\n", t, survival_duration(5, 4, t, params));
    const auto tail = tail_law(5, 4, params);
    std::printf("  tail ~ %.4f t^-%d, E[tau] = %.6f\n", tail.prefactor, tail.exponent, expected_duration(5, 4, params));

    std::printf("probability of an up move\n      ");
    for (int p = 1; p <= 5; ++p) std::printf("  p=%d   ", p);
    std::printf("\n");
    const auto phi = HittingTablePair::solve(params, 400, 5);
    for (int n = 1; n <= 5; ++n) {
        std::printf("  n=%d ", n);
        for (int p = 1; p <= 5; ++p) std::printf(" %.5f", phi.best().at(n, p));
        std::printf("\n");
    }

    const double pc = p_cont(f, params);
    std::printf("price-change chain: p_cont = %.6f, lag-2 autocov = %.6f\n", pc, autocov_from(2, pc));
    std::printf("volatility per sqrt(second): %.6f\n", vol_unbalanced(params, f));

    const ModelParams market{2204.0, 700.0, 1631.0, 0.01};
    SimConfig sim;
    sim.seed = 11;
    sim.horizon = Horizon::time(10.0);
    sim.initial_price = 100.0;
    const auto [path, log] = simulate_with_log(market, ReplenishmentLaw::from(f), sim);
    const auto rates = estimate_intensities(log);
    const auto rep = estimate_replenishment(log, {true, market.tick});
    std::printf("10 s of simulated trading: %zu events, %zu price changes\n", log.size(), path.moves.size());
    std::printf("  lambda_hat = %.1f +- %.1f (true 2204), mu_theta_hat = %.1f +- %.1f (true 2331)\n", rates.lambda_hat,
                rates.lambda_se, rates.mu_theta_hat, rates.mu_theta_se);
    std::printf("  total variation(f_hat, f) = %.4f\n", total_variation(rep.f_hat, f));
}
