// Cross-validation: brute-force oracles and Monte Carlo comparisons for the
// closed forms in analytics.hpp, plus the acceptance suite built from them.
//
// Oracles
//   oracle_queue_survival  uniformized birth-death chain with absorbing 0
//   oracle_dirichlet       SOR solve of the exit problem on a truncated quadrant
//
// Reports carry no timings, so a fixed seed always gives the same JSON.

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "lobq/analytics.hpp"
#include "lobq/estimation.hpp"
#include "lobq/log.hpp"
#include "lobq/model.hpp"
#include "lobq/parallel.hpp"
#include "lobq/random.hpp"

namespace lobq {

class OracleError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct OracleConfig {
    int queue_truncation = 400;
    std::uint64_t time_step_budget = 1'000'000; // uniformized steps
    std::uint64_t mc_paths = 100'000;
    std::uint64_t mc_seed = 20240607;
    double tolerance = 1e-6;

    void validate(int max_queue) const {
        if (queue_truncation <= 10 * max_queue)
            throw std::invalid_argument("OracleConfig: queue_truncation must exceed 10 x the largest initial queue");
        if (time_step_budget == 0 || mc_paths == 0) throw std::invalid_argument("OracleConfig: budgets must be positive");
        if (!(tolerance > 0.0)) throw std::invalid_argument("OracleConfig: tolerance must be positive");
    }
};

// ---------------------------------------------------------------------------
// Uniformization oracle

/// Single-queue rates; a zero birth rate is allowed (pure death).
struct BirthDeathRates {
    double birth = 0.0;
    double death = 1.0;

    static BirthDeathRates from(const ModelParams& p) { return {p.lambda, p.mu_theta()}; }
};

struct OracleCurve {
    std::vector<double> values;
    double error_bound = 0.0;    // certified bound on max |value - exact|
    std::uint64_t steps = 0;     // uniformized steps used
};

namespace detail {

inline double poisson_pmf(std::uint64_t k, double mean) {
    if (mean == 0.0) return k == 0 ? 1.0 : 0.0;
    const double kd = static_cast<double>(k);
    return std::exp(kd * std::log(mean) - mean - std::lgamma(kd + 1.0));
}

/// P[K > k] for K ~ Poisson(mean), k >= mean, summed term by term.
inline double poisson_upper_tail(std::uint64_t k, double mean) {
    double total = 0.0;
    for (std::uint64_t j = k + 1;; ++j) {
        const double term = poisson_pmf(j, mean);
        total += term;
        if (term <= 1e-18 * total || term < 1e-300) break;
    }
    return total;
}

/// Not-yet-absorbed mass after k jumps of the uniformized chain, k = 0..steps.
/// Mass reaching the truncation level is frozen there and reported separately:
/// it is not absorbed yet, but its future is unknown.
struct JumpChainSurvival {
    std::vector<double> alive;    // mass on 1..N-1
    std::vector<double> overflow; // mass frozen at N
};

inline JumpChainSurvival jump_chain_survival(int x, BirthDeathRates r, int truncation, std::uint64_t steps) {
    const double up = r.birth / (r.birth + r.death);
    const double down = 1.0 - up;
    const int N = truncation;
    std::vector<double> p(static_cast<std::size_t>(N) + 1, 0.0), next(p.size());
    p[static_cast<std::size_t>(x)] = 1.0;
    JumpChainSurvival out;
    out.alive.reserve(steps + 1);
    out.overflow.reserve(steps + 1);
    int hi = x; // highest occupied level
    for (std::uint64_t k = 0;; ++k) {
        double alive = 0.0;
        for (int i = 1; i < N; ++i) alive += p[static_cast<std::size_t>(i)];
        out.alive.push_back(alive);
        out.overflow.push_back(p[static_cast<std::size_t>(N)]);
        if (k == steps) break;
        std::fill(next.begin(), next.end(), 0.0);
        next[static_cast<std::size_t>(N)] = p[static_cast<std::size_t>(N)];
        const int top = std::min(hi, N - 1);
        for (int i = 1; i <= top; ++i) {
            const double m = p[static_cast<std::size_t>(i)];
            if (m == 0.0) continue;
            next[static_cast<std::size_t>(i + 1)] += up * m;
            next[static_cast<std::size_t>(i - 1)] += down * m;
        }
        next[0] = 0.0; // absorbed
        hi = std::min(hi + 1, N);
        p.swap(next);
    }
    return out;
}

inline std::uint64_t uniformization_steps(double mean) {
    return static_cast<std::uint64_t>(std::ceil(mean + 12.0 * std::sqrt(mean) + 40.0));
}

} // namespace detail

/// P[sigma > t] for one queue started at x, by uniformization at rate birth + death.
/// Throws OracleError when the certified error bound exceeds 1e-10.
inline OracleCurve oracle_queue_survival(int x, std::span<const double> t_grid, BirthDeathRates rates, const OracleConfig& cfg) {
    if (x < 1) throw std::invalid_argument("oracle_queue_survival: x must be >= 1");
    if (!(rates.birth >= 0.0) || !(rates.death > 0.0)) throw std::invalid_argument("oracle_queue_survival: bad rates");
    if (x >= cfg.queue_truncation) throw std::invalid_argument("oracle_queue_survival: start above truncation");
    double t_max = 0.0;
    for (double t : t_grid) {
        if (!(t >= 0.0) || !std::isfinite(t)) throw std::invalid_argument("oracle_queue_survival: times must be finite and >= 0");
        t_max = std::max(t_max, t);
    }
    const double total = rates.birth + rates.death;
    const std::uint64_t steps = detail::uniformization_steps(total * t_max);
    if (steps > cfg.time_step_budget) throw OracleError("oracle_queue_survival: time-step budget exceeded");
    const auto chain = detail::jump_chain_survival(x, rates, cfg.queue_truncation, steps);

    OracleCurve out;
    out.steps = steps;
    out.values.reserve(t_grid.size());
    for (double t : t_grid) {
        const double mean = total * t;
        double lo = 0.0, unknown = 0.0;
        for (std::uint64_t k = 0; k <= steps; ++k) {
            const double w = detail::poisson_pmf(k, mean);
            lo += w * chain.alive[k];
            unknown += w * chain.overflow[k];
        }
        unknown += detail::poisson_upper_tail(steps, mean);
        out.values.push_back(std::clamp(lo + 0.5 * unknown, 0.0, 1.0));
        out.error_bound = std::max(out.error_bound, 0.5 * unknown + 1e-15);
    }
    if (out.error_bound > 1e-10)
        throw OracleError("oracle_queue_survival: truncation error bound " + std::to_string(out.error_bound) + " exceeds 1e-10");
    return out;
}

/// P[tau > t | bid, ask] as the product of two uniformized single-queue survivals.
inline OracleCurve oracle_survival(int bid, int ask, std::span<const double> t_grid, const ModelParams& params, const OracleConfig& cfg) {
    params.validate();
    cfg.validate(std::max(bid, ask));
    const auto rates = BirthDeathRates::from(params);
    const auto sb = oracle_queue_survival(bid, t_grid, rates, cfg);
    const auto sa = oracle_queue_survival(ask, t_grid, rates, cfg);
    OracleCurve out;
    out.steps = sb.steps;
    out.values.resize(t_grid.size());
    for (std::size_t i = 0; i < t_grid.size(); ++i) out.values[i] = sb.values[i] * sa.values[i];
    out.error_bound = sb.error_bound + sa.error_bound;
    return out;
}

/// E[exp(-s sigma)] from the uniformized chain: sum_k P[absorbed at jump k] (L / (L + s))^k.
inline double oracle_hitting_laplace(double s, int x, BirthDeathRates rates, const OracleConfig& cfg) {
    if (!(s >= 0.0)) throw std::invalid_argument("oracle_hitting_laplace: s must be nonnegative");
    if (x < 1) throw std::invalid_argument("oracle_hitting_laplace: x must be >= 1");
    const double total = rates.birth + rates.death;
    const double z = total / (total + s);
    // Absorption needs at least x jumps; run until the neglected mass z^k is negligible
    // or the chain has (almost) surely been absorbed.
    std::uint64_t steps = std::min<std::uint64_t>(cfg.time_step_budget, 200000);
    if (s > 0.0) steps = std::min<std::uint64_t>(steps, static_cast<std::uint64_t>(std::ceil(40.0 / -std::log(z))) + x);
    const auto chain = detail::jump_chain_survival(x, rates, cfg.queue_truncation, steps);
    double value = 0.0, zk = 1.0;
    for (std::uint64_t k = 1; k <= steps; ++k) {
        zk *= z;
        value += (chain.alive[k - 1] - chain.alive[k] - (chain.overflow[k] - chain.overflow[k - 1])) * zk;
    }
    const double unknown = (chain.alive[steps] + chain.overflow[steps]) * zk;
    if (unknown > 1e-10) throw OracleError("oracle_hitting_laplace: unresolved mass " + std::to_string(unknown));
    return value;
}

// ---------------------------------------------------------------------------
// Dirichlet oracle

/// Exit-side probabilities on {1..N}^2 from red-black successive over-relaxation on
/// the harmonic equation of the embedded walk; far edge from the quadrant angle value.
///
/// The iteration runs on y = phi (u/d)^{(b+a)/2} (u, d the up/down jump probabilities),
/// whose equation y = sqrt(u d)/2 (sum of the four neighbours) is symmetric. Iterating
/// on phi directly amplifies rounding noise by up to (d/u)^N when u < d.
class DirichletGrid {
public:
    DirichletGrid(const ModelParams& params, int truncation, std::optional<double> tol = std::nullopt, std::uint64_t max_sweeps = 1'000'000)
        : n_(truncation) {
        params.validate();
        if (truncation < 2) throw std::invalid_argument("DirichletGrid: truncation must be >= 2");
        const double up = params.lambda / (params.lambda + params.mu_theta());
        const double down = 1.0 - up;
        const double log_ratio = std::log(down / up);
        if (std::abs(log_ratio) * (n_ + 1) > 1300.0) throw OracleError("DirichletGrid: drift too strong for this truncation");
        const int W = n_ + 2;
        weight_.resize(2 * static_cast<std::size_t>(W));
        for (std::size_t k = 0; k < weight_.size(); ++k) weight_[k] = std::exp(0.5 * static_cast<double>(k) * log_ratio);
        v_.assign(static_cast<std::size_t>(W) * W, 0.0);
        auto at = [this, W](int b, int a) -> double& { return v_[static_cast<std::size_t>(b) * W + a]; };
        for (int b = 0; b <= n_ + 1; ++b) {
            for (int a = 0; a <= n_ + 1; ++a) {
                const double w = weight_[static_cast<std::size_t>(b + a)];
                if (b == 0) at(b, a) = 0.0;
                else if (a == 0) at(b, a) = 1.0 / w;
                else at(b, a) = quadrant_angle_value(b, a) / w; // far edge, and the initial guess inside
            }
        }
        const double coupling = 0.5 * std::sqrt(up * down);
        const double jacobi_radius = 4.0 * coupling * std::cos(kPi / (n_ + 1));
        const double omega = 2.0 / (1.0 + std::sqrt(1.0 - jacobi_radius * jacobi_radius));
        // Rounding keeps the per-sweep change near N * eps, so stop there and then run
        // enough further sweeps to shrink the remaining error by 1e3 (rate omega - 1).
        const double stop = tol.value_or(std::max(1e-14, 50.0 * n_ * std::numeric_limits<double>::epsilon()));
        const auto polish = static_cast<std::uint64_t>(std::ceil(std::log(1e3) / std::max(2.0 - omega, 1e-6)));
        std::optional<std::uint64_t> stop_at;
        for (sweeps_ = 1;; ++sweeps_) {
            double change = 0.0;
            for (int colour = 0; colour < 2; ++colour) {
                for (int b = 1; b <= n_; ++b) {
                    double* row = &at(b, 0);
                    const double* above = &at(b + 1, 0);
                    const double* below = &at(b - 1, 0);
                    for (int a = 1 + ((b + colour) & 1); a <= n_; a += 2) {
                        const double target = coupling * (above[a] + row[a + 1] + below[a] + row[a - 1]);
                        const double delta = omega * (target - row[a]);
                        row[a] += delta;
                        change = std::max(change, std::abs(delta));
                    }
                }
            }
            if (!stop_at && change < stop) stop_at = sweeps_ + polish;
            if (stop_at && sweeps_ >= *stop_at) break;
            if (sweeps_ >= max_sweeps) throw OracleError("DirichletGrid: SOR did not converge");
        }
    }

    int truncation() const { return n_; }
    std::uint64_t sweeps() const { return sweeps_; }

    double at(int bid, int ask) const {
        if (bid < 1 || ask < 1 || bid > n_ || ask > n_) throw std::out_of_range("DirichletGrid: state outside the grid");
        return v_[static_cast<std::size_t>(bid) * (n_ + 2) + ask] * weight_[static_cast<std::size_t>(bid + ask)];
    }

private:
    int n_;
    std::uint64_t sweeps_ = 0;
    std::vector<double> weight_; // (d/u)^{k/2}
    std::vector<double> v_;      // y on {0..N+1}^2
};

struct DirichletOracleResult {
    double value = 0.0;       // solve at 2 x truncation
    double sensitivity = 0.0; // |value(2N) - value(N)|
    int truncation = 0;
};

/// Truncated solves at N and 2N, for many states at once.
class DirichletOracle {
public:
    DirichletOracle(const ModelParams& params, const OracleConfig& cfg)
        : coarse_(params, cfg.queue_truncation), fine_(params, 2 * cfg.queue_truncation), cfg_(cfg) {}

    DirichletOracleResult operator()(int bid, int ask) const {
        cfg_.validate(std::max(bid, ask));
        const double v = fine_.at(bid, ask);
        return {v, std::abs(v - coarse_.at(bid, ask)), cfg_.queue_truncation};
    }

private:
    DirichletGrid coarse_;
    DirichletGrid fine_;
    OracleConfig cfg_;
};

inline DirichletOracleResult oracle_dirichlet(int bid, int ask, const ModelParams& params, const OracleConfig& cfg) {
    if (bid < 1 || ask < 1) throw std::invalid_argument("oracle_dirichlet: queues must be >= 1");
    cfg.validate(std::max(bid, ask));
    return DirichletOracle(params, cfg)(bid, ask);
}

// ---------------------------------------------------------------------------
// Reports

enum class PassRule {
    abs_tol,   // |analytic - oracle| <= tolerance at every point
    rel_tol,   // |analytic - oracle| <= tolerance |oracle|
    se_band,   // |analytic - oracle| <= tolerance * se
    at_most,   // analytic <= oracle (bounds)
    less_than, // analytic < tolerance (scalar diagnostics)
    greater_than,
};

inline std::string_view to_string(PassRule r) {
    switch (r) {
    case PassRule::abs_tol: return "abs_tol";
    case PassRule::rel_tol: return "rel_tol";
    case PassRule::se_band: return "se_band";
    case PassRule::at_most: return "at_most";
    case PassRule::less_than: return "less_than";
    case PassRule::greater_than: return "greater_than";
    }
    return "?";
}

struct ComparisonReport {
    std::string quantity;
    std::string description;
    std::string abscissa_name;
    std::vector<double> abscissa;
    std::vector<double> analytic;
    std::vector<double> oracle;
    std::vector<double> se; // empty for deterministic oracles
    PassRule rule = PassRule::abs_tol;
    double tolerance = 0.0;
    double max_abs_deviation = 0.0;
    double max_se_multiple = 0.0; // max |deviation| / se where se > 0
    bool stochastic = false;
    bool passed = false;
    nlohmann::json details = nlohmann::json::object();

    /// Fills the deviation fields and the verdict from the stored values.
    ComparisonReport& evaluate() {
        if (analytic.size() != oracle.size()) throw std::logic_error("ComparisonReport: size mismatch");
        if (!se.empty() && se.size() != analytic.size()) throw std::logic_error("ComparisonReport: se size mismatch");
        stochastic = !se.empty();
        max_abs_deviation = 0.0;
        max_se_multiple = 0.0;
        passed = !analytic.empty();
        for (std::size_t i = 0; i < analytic.size(); ++i) {
            const double dev = std::abs(analytic[i] - oracle[i]);
            if (!std::isfinite(dev) && rule != PassRule::less_than && rule != PassRule::greater_than) passed = false;
            max_abs_deviation = std::max(max_abs_deviation, dev);
            if (stochastic && se[i] > 0.0) max_se_multiple = std::max(max_se_multiple, dev / se[i]);
            bool ok = false;
            switch (rule) {
            case PassRule::abs_tol: ok = dev <= tolerance; break;
            case PassRule::rel_tol: ok = dev <= tolerance * std::abs(oracle[i]); break;
            case PassRule::se_band: ok = dev <= tolerance * (stochastic ? se[i] : 0.0); break;
            case PassRule::at_most: ok = analytic[i] <= oracle[i]; break;
            case PassRule::less_than: ok = analytic[i] < tolerance; break;
            case PassRule::greater_than: ok = analytic[i] > tolerance; break;
            }
            if (!ok) passed = false;
        }
        return *this;
    }
};

inline nlohmann::json to_json(const ComparisonReport& r) {
    nlohmann::json j{{"quantity", r.quantity},
                     {"description", r.description},
                     {"rule", to_string(r.rule)},
                     {"tolerance", r.tolerance},
                     {"stochastic", r.stochastic},
                     {"max_abs_deviation", r.max_abs_deviation},
                     {"passed", r.passed},
                     {"abscissa_name", r.abscissa_name},
                     {"abscissa", r.abscissa},
                     {"analytic", r.analytic},
                     {"oracle", r.oracle}};
    if (r.stochastic) {
        j["se"] = r.se;
        j["max_se_multiple"] = r.max_se_multiple;
    }
    if (!r.details.empty()) j["details"] = r.details;
    return j;
}

// ---------------------------------------------------------------------------
// Monte Carlo comparisons

enum class McQuantity {
    duration_survival,
    tail_slope,
    first_move_probability,
    p_n,
    autocovariance,
    expected_duration,
    diffusion_vol_balanced,
    diffusion_vol_unbalanced,
};

inline std::string_view to_string(McQuantity q) {
    switch (q) {
    case McQuantity::duration_survival: return "duration_survival";
    case McQuantity::tail_slope: return "tail_slope";
    case McQuantity::first_move_probability: return "first_move_probability";
    case McQuantity::p_n: return "p_n";
    case McQuantity::autocovariance: return "autocovariance";
    case McQuantity::expected_duration: return "expected_duration";
    case McQuantity::diffusion_vol_balanced: return "diffusion_vol_balanced";
    case McQuantity::diffusion_vol_unbalanced: return "diffusion_vol_unbalanced";
    }
    return "?";
}

/// What to compare and how. Fields not used by a quantity are ignored.
struct McRequest {
    McQuantity quantity = McQuantity::duration_survival;
    int bid = 4;
    int ask = 5;
    std::vector<double> t_grid;        // duration_survival
    std::vector<int> orders{1, 2, 3};  // p_n: move indices; autocovariance: lags k
    std::uint64_t moves = 1'000'000;   // autocovariance: total simulated moves
    std::uint64_t scale_n = 200;       // diffusion: the n of the rescaling
    double eval_time = 1.0;            // diffusion: rescaled time
    std::optional<double> tolerance;   // replaces the default pass rule tolerance
    std::optional<PassRule> rule;
    std::uint64_t stream = 0;          // first RNG stream used
};

namespace detail {

struct MeanSe {
    double mean = 0.0;
    double se = 0.0;
};

inline MeanSe mean_se(std::span<const double> xs) {
    MeanSe out;
    const auto n = static_cast<double>(xs.size());
    if (xs.empty()) return out;
    for (double v : xs) out.mean += v;
    out.mean /= n;
    if (xs.size() < 2) return out;
    double ss = 0.0;
    for (double v : xs) ss += (v - out.mean) * (v - out.mean);
    out.se = std::sqrt(ss / (n - 1.0) / n);
    return out;
}

inline double binomial_se(double p, std::uint64_t n) { return std::sqrt(std::max(p * (1.0 - p), 0.0) / static_cast<double>(n)); }

inline double normal_cdf(double x, double sd) { return 0.5 * std::erfc(-x / (sd * std::sqrt(2.0))); }

} // namespace detail

/// Kolmogorov-Smirnov distance between a sample and N(0, sd^2).
inline double ks_distance_normal(std::vector<double> sample, double sd) {
    if (sample.empty()) throw std::invalid_argument("ks_distance_normal: empty sample");
    std::sort(sample.begin(), sample.end());
    const auto n = static_cast<double>(sample.size());
    double d = 0.0;
    for (std::size_t i = 0; i < sample.size(); ++i) {
        const double F = detail::normal_cdf(sample[i], sd);
        d = std::max({d, (static_cast<double>(i) + 1.0) / n - F, F - static_cast<double>(i) / n});
    }
    return d;
}

struct LogLogFit {
    double slope = 0.0;
    double intercept = 0.0;
};

inline LogLogFit loglog_fit(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("loglog_fit: need two or more points");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const auto n = static_cast<double>(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!(x[i] > 0.0) || !(y[i] > 0.0)) throw std::domain_error("loglog_fit: values must be positive");
        const double lx = std::log(x[i]), ly = std::log(y[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    LogLogFit f;
    f.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    f.intercept = (sy - f.slope * sx) / n;
    return f;
}

/// Log-spaced grid with `per_decade` points per decade from lo to hi inclusive.
inline std::vector<double> log_grid(double lo, double hi, int per_decade) {
    if (!(lo > 0.0) || !(hi > lo) || per_decade < 1) throw std::invalid_argument("log_grid: bad range");
    const double decades = std::log10(hi / lo);
    const int steps = static_cast<int>(std::lround(decades * per_decade));
    std::vector<double> g(static_cast<std::size_t>(steps) + 1);
    for (int i = 0; i <= steps; ++i) g[static_cast<std::size_t>(i)] = lo * std::pow(10.0, decades * i / steps);
    return g;
}

/// Evenly spaced grid lo, lo + step, ... up to hi (inclusive within rounding).
inline std::vector<double> linear_grid(double lo, double hi, double step) {
    if (!(step > 0.0) || !(hi >= lo)) throw std::invalid_argument("linear_grid: bad range");
    const auto count = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9)) + 1;
    std::vector<double> g(count);
    for (std::size_t i = 0; i < count; ++i) g[i] = lo + static_cast<double>(i) * step;
    return g;
}

/// Tail exponent and prefactor of the analytic survival: slope of a log-log fit over the
/// last two decades of a grid spanning 1e-2 to 1e4 mean inter-event times, and
/// t^exponent P[tau > t] at the last grid point.
inline std::pair<ComparisonReport, ComparisonReport> tail_checks(int bid, int ask, const ModelParams& params) {
    const double event_time = 1.0 / params.event_rate();
    const auto grid = log_grid(1e-2 * event_time, 1e4 * event_time, 10);
    const QuadSpec tight{1e-300, 1e-10};
    const auto surv = survival_duration_curve(bid, ask, grid, params, tight);
    std::vector<double> tx, ty;
    for (std::size_t i = 0; i < grid.size(); ++i)
        if (grid[i] >= 1e2 * event_time * (1.0 - 1e-12)) {
            tx.push_back(grid[i]);
            ty.push_back(surv[i]);
        }
    const TailLaw law = tail_law(bid, ask, params);
    const auto fit = loglog_fit(tx, ty);

    ComparisonReport slope;
    slope.quantity = std::string(to_string(McQuantity::tail_slope));
    slope.description = "log-log slope of P[tau > t] over the last two decades vs -exponent";
    slope.abscissa_name = "fit_range";
    slope.abscissa = {tx.front(), tx.back()};
    slope.analytic = {fit.slope};
    slope.oracle = {-static_cast<double>(law.exponent)};
    slope.rule = PassRule::abs_tol;
    slope.tolerance = 0.1;
    slope.details = {{"bid", bid}, {"ask", ask}, {"params", params}, {"grid_t", grid}, {"survival", surv}};
    slope.evaluate();

    ComparisonReport pref;
    pref.quantity = "tail_prefactor";
    pref.description = "t^exponent P[tau > t] at the last grid point vs the tail_law prefactor";
    pref.abscissa_name = "t";
    pref.abscissa = {grid.back()};
    pref.analytic = {std::pow(grid.back(), law.exponent) * surv.back()};
    pref.oracle = {law.prefactor};
    pref.rule = PassRule::rel_tol;
    pref.tolerance = 0.05;
    pref.evaluate();
    return {std::move(slope), std::move(pref)};
}

/// Drives the simulator against one closed form.
inline ComparisonReport mc_compare(const McRequest& req, const ModelParams& params, const QueueDist& f, const OracleConfig& cfg) {
    params.validate();
    ComparisonReport r;
    r.quantity = std::string(to_string(req.quantity));
    const std::uint64_t paths = cfg.mc_paths;
    const std::uint64_t seed = cfg.mc_seed;
    const auto law = ReplenishmentLaw::from(f);
    r.details = {{"params", params}, {"paths", paths}, {"seed", seed}, {"stream", req.stream}};

    switch (req.quantity) {
    case McQuantity::duration_survival: {
        if (req.t_grid.empty()) throw std::invalid_argument("mc_compare: duration_survival needs a time grid");
        const auto durations = parallel_map<double>(paths, [&](std::size_t i) {
            Rng rng(seed, req.stream + i);
            return first_passage(params, req.bid, req.ask, rng).duration;
        });
        std::vector<double> sorted = durations;
        std::sort(sorted.begin(), sorted.end());
        r.description = "P[tau > t] vs empirical survival of simulated first durations";
        r.abscissa_name = "t";
        r.abscissa = req.t_grid;
        r.analytic = survival_duration_curve(req.bid, req.ask, req.t_grid, params);
        for (double t : req.t_grid) {
            const auto above = static_cast<double>(sorted.end() - std::upper_bound(sorted.begin(), sorted.end(), t));
            const double p = above / static_cast<double>(paths);
            r.oracle.push_back(p);
            r.se.push_back(detail::binomial_se(p, paths));
        }
        r.rule = PassRule::abs_tol;
        r.tolerance = 0.01;
        r.details["bid"] = req.bid;
        r.details["ask"] = req.ask;
        break;
    }
    case McQuantity::tail_slope:
        return tail_checks(req.bid, req.ask, params).first;
    case McQuantity::first_move_probability: {
        const auto ups = parallel_map<double>(paths, [&](std::size_t i) {
            Rng rng(seed, req.stream + i);
            return first_passage(params, req.bid, req.ask, rng).move > 0 ? 1.0 : 0.0;
        });
        const auto ms = detail::mean_se(ups);
        r.description = "P[first move up | bid, ask] vs simulated frequency";
        r.abscissa_name = "state";
        r.analytic = {prob_first_up(req.bid, req.ask, params)};
        r.oracle = {ms.mean};
        r.se = {detail::binomial_se(ms.mean, paths)};
        r.rule = PassRule::se_band;
        r.tolerance = 3.0;
        r.abscissa = {0.0};
        r.details["bid"] = req.bid;
        r.details["ask"] = req.ask;
        break;
    }
    case McQuantity::p_n: {
        const int n_max = *std::max_element(req.orders.begin(), req.orders.end());
        if (n_max < 1) throw std::invalid_argument("mc_compare: p_n needs n >= 1");
        SimConfig sc;
        sc.seed = seed;
        sc.horizon = Horizon::price_changes(static_cast<std::uint64_t>(n_max));
        sc.initial_state = BookState{0, req.bid, req.ask};
        const auto seqs = parallel_map<std::vector<int>>(paths, [&](std::size_t i) { return simulate(params, law, sc, req.stream + i).moves; });
        const double p1 = prob_first_up(req.bid, req.ask, params);
        const double pc = p_cont(f, params);
        r.description = "P[n-th move up | bid, ask] vs simulated frequency";
        r.abscissa_name = "n";
        for (int n : req.orders) {
            double up = 0.0;
            for (const auto& s : seqs) up += s[static_cast<std::size_t>(n - 1)] > 0 ? 1.0 : 0.0;
            const double p = up / static_cast<double>(paths);
            r.abscissa.push_back(n);
            r.analytic.push_back(n == 1 ? p1 : p_n_from(n, p1, pc));
            r.oracle.push_back(p);
            r.se.push_back(detail::binomial_se(p, paths));
        }
        r.rule = PassRule::se_band;
        r.tolerance = 3.0;
        r.details["bid"] = req.bid;
        r.details["ask"] = req.ask;
        r.details["p_cont"] = pc;
        break;
    }
    case McQuantity::autocovariance: {
        // Independent paths, each started from f; per-path estimates give the standard error.
        const std::uint64_t n_paths = std::max<std::uint64_t>(std::min<std::uint64_t>(paths, 100), 2);
        const std::uint64_t per_path = std::max<std::uint64_t>(req.moves / n_paths, 16);
        SimConfig sc;
        sc.seed = seed;
        sc.horizon = Horizon::price_changes(per_path);
        const auto paths_moves =
            parallel_map<std::vector<int>>(n_paths, [&](std::size_t i) { return simulate(params, law, sc, req.stream + i).moves; });
        // Centre on the pooled mean: per-path means would bias lag 1 by about Var(path mean).
        double mean = 0.0;
        std::size_t total = 0;
        for (const auto& m : paths_moves) {
            for (int v : m) mean += v;
            total += m.size();
        }
        mean /= static_cast<double>(total);
        std::vector<std::vector<double>> estimates;
        for (const auto& moves : paths_moves) {
            std::vector<double> out;
            for (int k : req.orders) {
                const auto lag = static_cast<std::size_t>(k - 1);
                double s = 0.0;
                for (std::size_t j = 0; j + lag < moves.size(); ++j) s += (moves[j] - mean) * (moves[j + lag] - mean);
                out.push_back(s / static_cast<double>(moves.size() - lag));
            }
            estimates.push_back(std::move(out));
        }
        const double pc = p_cont(f, params);
        r.description = "Cov(X_1, X_k) = (2 p_cont - 1)^(k-1) vs sample autocovariance of simulated moves";
        r.abscissa_name = "k";
        for (std::size_t q = 0; q < req.orders.size(); ++q) {
            std::vector<double> col;
            for (const auto& e : estimates) col.push_back(e[q]);
            const auto ms = detail::mean_se(col);
            r.abscissa.push_back(req.orders[q]);
            r.analytic.push_back(autocov_from(req.orders[q], pc));
            r.oracle.push_back(ms.mean);
            r.se.push_back(ms.se);
        }
        r.rule = PassRule::se_band;
        r.tolerance = 3.0;
        r.details["p_cont"] = pc;
        r.details["moves"] = n_paths * per_path;
        r.details["independent_paths"] = n_paths;
        break;
    }
    case McQuantity::expected_duration: {
        const auto durations = parallel_map<double>(paths, [&](std::size_t i) {
            Rng rng(seed, req.stream + i);
            return first_passage(params, req.bid, req.ask, rng).duration;
        });
        const auto ms = detail::mean_se(durations);
        r.description = "E[tau | bid, ask] vs mean simulated duration";
        r.abscissa_name = "state";
        r.abscissa = {0.0};
        r.analytic = {expected_duration(req.bid, req.ask, params)};
        r.oracle = {ms.mean};
        r.se = {ms.se};
        r.rule = PassRule::rel_tol;
        r.tolerance = 0.01;
        r.details["bid"] = req.bid;
        r.details["ask"] = req.ask;
        break;
    }
    case McQuantity::diffusion_vol_balanced:
    case McQuantity::diffusion_vol_unbalanced: {
        const bool balanced = req.quantity == McQuantity::diffusion_vol_balanced;
        const Regime regime = balanced ? Regime::balanced : Regime::unbalanced;
        const double horizon = req.eval_time * diffusion_time_scale(req.scale_n, regime);
        SimConfig sc;
        sc.seed = seed;
        sc.horizon = Horizon::time(horizon);
        const std::vector<double> at{req.eval_time};
        const auto values = parallel_map<double>(paths, [&](std::size_t i) {
            return rescaled_series(simulate(params, law, sc, req.stream + i), req.scale_n, regime, at).front();
        });
        double ss = 0.0;
        for (double v : values) ss += v * v;
        const auto n = static_cast<double>(values.size());
        const auto ms = detail::mean_se(values);
        double var = 0.0;
        for (double v : values) var += (v - ms.mean) * (v - ms.mean);
        const double sd = std::sqrt(var / (n - 1.0));
        const double target = (balanced ? vol_balanced(params, f) : vol_unbalanced(params, f)) * std::sqrt(req.eval_time);
        r.description = balanced ? "sample SD of the n log n rescaled price vs tick sqrt(pi lambda / D(f))"
                                 : "sample SD of the n rescaled price vs tick / sqrt(m(f))";
        r.abscissa_name = "t";
        r.abscissa = {req.eval_time};
        r.analytic = {target};
        r.oracle = {sd};
        r.se = {sd / std::sqrt(2.0 * (n - 1.0))};
        r.rule = PassRule::rel_tol;
        r.tolerance = 0.10;
        const double ks = ks_distance_normal(values, target);
        r.details["n"] = req.scale_n;
        r.details["ks_distance"] = ks;
        r.details["sample_mean"] = ms.mean;
        r.details["root_mean_square"] = std::sqrt(ss / n);
        break;
    }
    }
    if (req.rule) r.rule = *req.rule;
    if (req.tolerance) r.tolerance = *req.tolerance;
    return r.evaluate();
}

// ---------------------------------------------------------------------------
// Acceptance suite

/// Replenishment laws used by the suite.
inline QueueDist symmetric_reference_f() { return QueueDist({{2, 3, 0.5}, {3, 2, 0.5}}, true); }

/// Most mass where the ask queue is at least the bid queue (sum over ask >= bid is 0.75).
inline QueueDist asymmetric_reference_f() {
    return QueueDist({{1, 1, 0.10}, {1, 2, 0.25}, {1, 3, 0.15}, {2, 1, 0.10}, {2, 2, 0.10}, {2, 3, 0.15}, {3, 2, 0.15}});
}

struct SuiteConfig {
    std::uint64_t seed = 20240607;
    /// Multiplies every Monte Carlo budget; values below 1 trade power for speed.
    double mc_scale = 1.0;
    int queue_truncation = 400;

    std::uint64_t scaled(std::uint64_t n) const {
        return std::max<std::uint64_t>(2, static_cast<std::uint64_t>(std::llround(static_cast<double>(n) * mc_scale)));
    }
    OracleConfig oracle(std::uint64_t paths, std::uint64_t stream_block) const {
        OracleConfig c;
        c.queue_truncation = queue_truncation;
        c.mc_paths = scaled(paths);
        // One seed per criterion keeps criteria independent of each other.
        std::uint64_t s = seed ^ (stream_block * 0x9E3779B97F4A7C15ULL);
        c.mc_seed = splitmix64(s);
        return c;
    }
};

struct CriterionResult {
    int id = 0;
    std::string title;
    std::vector<std::string> covers; // analytics operations certified here
    std::vector<ComparisonReport> reports;
    bool passed = false;
};

struct Criterion {
    int id;
    std::string title;
    std::vector<std::string> covers;
    std::function<std::vector<ComparisonReport>(const SuiteConfig&)> run;
};

namespace detail {

inline ComparisonReport scalar_report(std::string quantity, std::string description, double analytic, double reference, PassRule rule,
                                      double tolerance) {
    ComparisonReport r;
    r.quantity = std::move(quantity);
    r.description = std::move(description);
    r.abscissa_name = "index";
    r.abscissa = {0.0};
    r.analytic = {analytic};
    r.oracle = {reference};
    r.rule = rule;
    r.tolerance = tolerance;
    return r.evaluate();
}

inline std::vector<ComparisonReport> criterion_duration(const SuiteConfig& sc) {
    const auto params = ModelParams::from_rates(12.0, 13.0);
    const auto grid = linear_grid(0.0, 10.0, 0.01);
    const auto cfg = sc.oracle(100'000, 1);
    std::vector<ComparisonReport> out;

    ComparisonReport det;
    det.quantity = "duration_survival_oracle";
    det.description = "P[tau > t | bid 4, ask 5] vs uniformized birth-death chains";
    det.abscissa_name = "t";
    det.abscissa = grid;
    det.analytic = survival_duration_curve(4, 5, grid, params);
    const auto oracle = oracle_survival(4, 5, grid, params, cfg);
    det.oracle = oracle.values;
    det.rule = PassRule::abs_tol;
    det.tolerance = 1e-6;
    det.details = {{"oracle_error_bound", oracle.error_bound}, {"uniformized_steps", oracle.steps}, {"params", params}};
    out.push_back(det.evaluate());

    McRequest mc;
    mc.quantity = McQuantity::duration_survival;
    mc.bid = 4;
    mc.ask = 5;
    mc.t_grid = grid;
    out.push_back(mc_compare(mc, params, QueueDist::point_mass(4, 5), cfg));

    // psi through the survival factorisation, and the Laplace transform of one queue.
    ComparisonReport fac;
    fac.quantity = "psi_factorisation";
    fac.description = "((mu+theta)/lambda)^(x/2) psi_x(t) vs uniformized single-queue survival";
    fac.abscissa_name = "t";
    const std::vector<double> tf{0.05, 0.2, 1.0, 3.0, 10.0};
    fac.abscissa = tf;
    const auto single = oracle_queue_survival(4, tf, BirthDeathRates::from(params), cfg);
    for (double t : tf) fac.analytic.push_back(std::pow(params.mu_theta() / params.lambda, 2.0) * psi(4, t, params));
    fac.oracle = single.values;
    fac.rule = PassRule::abs_tol;
    fac.tolerance = 1e-6;
    out.push_back(fac.evaluate());

    ComparisonReport lap;
    lap.quantity = "hitting_laplace";
    lap.description = "E[exp(-s sigma)] for one queue at x = 4 vs the uniformized chain";
    lap.abscissa_name = "s";
    for (double s : {0.1, 1.0, 10.0}) {
        lap.abscissa.push_back(s);
        lap.analytic.push_back(hitting_laplace(s, 4, params));
        lap.oracle.push_back(oracle_hitting_laplace(s, 4, BirthDeathRates::from(params), cfg));
    }
    lap.rule = PassRule::abs_tol;
    lap.tolerance = 1e-8;
    out.push_back(lap.evaluate());
    return out;
}

inline std::vector<ComparisonReport> criterion_tail(const SuiteConfig&) {
    std::vector<ComparisonReport> out;
    for (const auto& params : {ModelParams::from_rates(12.0, 13.0), ModelParams::from_rates(12.5, 12.5)}) {
        auto [slope, pref] = tail_checks(4, 5, params);
        const std::string regime = params.balanced() ? "balanced" : "unbalanced";
        slope.quantity += "_" + regime;
        pref.quantity += "_" + regime;
        slope.description += params.balanced() ? " (balanced)" : " (lambda < mu+theta)";
        pref.description += params.balanced() ? " (balanced)" : " (lambda < mu+theta)";
        out.push_back(std::move(slope));
        out.push_back(std::move(pref));
    }
    return out;
}

inline std::vector<ComparisonReport> criterion_hitting(const SuiteConfig& sc) {
    OracleConfig cfg = sc.oracle(1, 3);
    std::vector<ComparisonReport> out;
    const auto balanced = ModelParams::from_rates(1.0, 1.0);
    const DirichletOracle oracle(balanced, cfg);

    ComparisonReport grid;
    grid.quantity = "prob_up_balanced_oracle";
    grid.description = "phi(n, p) closed form vs truncated Dirichlet solve, n, p in 1..20";
    grid.abscissa_name = "state_index (20 (n - 1) + p - 1)";
    ComparisonReport sens;
    sens.quantity = "dirichlet_truncation_sensitivity";
    sens.description = "|phi at truncation 2N - phi at N| on the grid";
    sens.abscissa_name = grid.abscissa_name;
    std::vector<std::vector<double>> phi(21, std::vector<double>(21));
    for (int n = 1; n <= 20; ++n) {
        for (int p = 1; p <= 20; ++p) {
            phi[n][p] = prob_up_balanced(n, p);
            const auto o = oracle(n, p);
            const double idx = 20.0 * (n - 1) + (p - 1);
            grid.abscissa.push_back(idx);
            grid.analytic.push_back(phi[n][p]);
            grid.oracle.push_back(o.value);
            sens.abscissa.push_back(idx);
            sens.analytic.push_back(o.sensitivity);
            sens.oracle.push_back(0.0);
        }
    }
    grid.rule = PassRule::abs_tol;
    grid.tolerance = 1e-4;
    grid.details = {{"truncation", cfg.queue_truncation}};
    out.push_back(grid.evaluate());
    sens.rule = PassRule::abs_tol;
    sens.tolerance = 1e-6;
    out.push_back(sens.evaluate());

    ComparisonReport diag;
    diag.quantity = "prob_up_diagonal";
    diag.description = "phi(n, n) = 1/2";
    diag.abscissa_name = "n";
    ComparisonReport sym;
    sym.quantity = "prob_up_symmetry";
    sym.description = "phi(n, p) + phi(p, n) = 1";
    sym.abscissa_name = grid.abscissa_name;
    for (int n = 1; n <= 20; ++n) {
        diag.abscissa.push_back(n);
        diag.analytic.push_back(phi[n][n]);
        diag.oracle.push_back(0.5);
        for (int p = 1; p <= 20; ++p) {
            sym.abscissa.push_back(20.0 * (n - 1) + (p - 1));
            sym.analytic.push_back(phi[n][p] + phi[p][n]);
            sym.oracle.push_back(1.0);
        }
    }
    diag.rule = sym.rule = PassRule::abs_tol;
    diag.tolerance = sym.tolerance = 1e-8;
    out.push_back(diag.evaluate());
    out.push_back(sym.evaluate());

    // General rates: the LU / sine-transform table against the SOR oracle.
    const auto drift = ModelParams::from_rates(12.0, 13.0);
    const DirichletOracle drift_oracle(drift, cfg);
    ComparisonReport num;
    num.quantity = "prob_up_numeric_oracle";
    num.description = "phi(n, p) for lambda = 12, mu+theta = 13 vs SOR Dirichlet solve";
    num.abscissa_name = "state_index (20 (n - 1) + p - 1)";
    const HittingTablePair tables = HittingTablePair::solve(drift, cfg.queue_truncation, 20);
    for (int n = 1; n <= 20; n += 3) {
        for (int p = 1; p <= 20; p += 3) {
            num.abscissa.push_back(20.0 * (n - 1) + (p - 1));
            num.analytic.push_back(tables.best().at(n, p));
            num.oracle.push_back(drift_oracle(n, p).value);
        }
    }
    num.rule = PassRule::abs_tol;
    num.tolerance = 1e-6;
    out.push_back(num.evaluate());
    return out;
}

inline std::vector<ComparisonReport> criterion_price_chain(const SuiteConfig& sc) {
    const auto params = ModelParams::from_rates(12.0, 13.0);
    const auto fa = asymmetric_reference_f();
    const auto fs = symmetric_reference_f();
    std::vector<ComparisonReport> out;

    out.push_back(scalar_report("asymmetry_mass", "sum over ask >= bid of f exceeds 0.7", asymmetry_mass(fa), 0.7,
                                PassRule::greater_than, 0.7));
    const double pc = p_cont(fa, params);
    out.push_back(scalar_report("p_cont", "p_cont < 1/2 for the asymmetric f", pc, 0.5, PassRule::less_than, 0.5));

    McRequest ac;
    ac.quantity = McQuantity::autocovariance;
    ac.orders = {1, 2, 3, 4, 5};
    ac.moves = sc.scaled(1'000'000);
    ac.stream = 0;
    auto cfg = sc.oracle(100, 4);
    cfg.mc_paths = 100;
    auto asym = mc_compare(ac, params, fa, cfg);
    asym.description += " (asymmetric f)";
    out.push_back(std::move(asym));

    ac.orders = {2, 3, 4, 5};
    ac.stream = 1'000'000;
    auto sym = mc_compare(ac, params, fs, cfg);
    sym.description += " (swap-symmetric f, analytic value 0)";
    out.push_back(std::move(sym));

    McRequest pn;
    pn.quantity = McQuantity::p_n;
    pn.bid = 1;
    pn.ask = 3;
    pn.orders = {1, 2, 3, 4, 5};
    pn.stream = 2'000'000;
    out.push_back(mc_compare(pn, params, fa, sc.oracle(100'000, 4)));
    return out;
}

inline std::vector<ComparisonReport> criterion_expected_duration(const SuiteConfig& sc) {
    std::vector<ComparisonReport> out;
    std::uint64_t stream = 0;
    for (const auto& params : {ModelParams::from_rates(1.0, 2.0), ModelParams::from_rates(12.0, 13.0)}) {
        for (const auto& [x, y] : {std::pair{1, 1}, std::pair{4, 5}}) {
            McRequest req;
            req.quantity = McQuantity::expected_duration;
            req.bid = x;
            req.ask = y;
            req.stream = stream;
            stream += 10'000'000;
            auto r = mc_compare(req, params, QueueDist::point_mass(x, y), sc.oracle(1'000'000, 5));
            r.description += " (lambda " + format_double(params.lambda) + ", mu+theta " + format_double(params.mu_theta()) + ", state " +
                             std::to_string(x) + "," + std::to_string(y) + ")";
            out.push_back(std::move(r));
        }
    }
    ComparisonReport bound;
    bound.quantity = "expected_duration_bound";
    bound.description = "E[tau | x, y] <= min(x, y) / (mu+theta - lambda) on x, y in 1..6";
    bound.abscissa_name = "index";
    for (const auto& params : {ModelParams::from_rates(1.0, 2.0), ModelParams::from_rates(12.0, 13.0), ModelParams::from_rates(1.0, 1.3)}) {
        for (int x = 1; x <= 6; ++x) {
            for (int y = 1; y <= 6; ++y) {
                bound.abscissa.push_back(static_cast<double>(bound.abscissa.size()));
                bound.analytic.push_back(expected_duration(x, y, params));
                bound.oracle.push_back(std::min(x, y) / (params.mu_theta() - params.lambda));
            }
        }
    }
    bound.rule = PassRule::at_most;
    out.push_back(bound.evaluate());
    return out;
}

inline std::vector<ComparisonReport> criterion_balanced_diffusion(const SuiteConfig& sc) {
    const auto params = ModelParams::from_rates(10.0, 10.0);
    McRequest req;
    req.quantity = McQuantity::diffusion_vol_balanced;
    req.scale_n = 200;
    auto sd = mc_compare(req, params, symmetric_reference_f(), sc.oracle(2000, 6));
    const double ks = sd.details["ks_distance"].get<double>();
    auto ks_report = scalar_report("diffusion_ks_balanced", "KS distance of the rescaled price at t = 1 to N(0, sigma^2)", ks, 0.05,
                                   PassRule::less_than, 0.05);
    ks_report.details = {{"paths", sd.details["paths"]}};
    return {std::move(sd), std::move(ks_report)};
}

inline std::vector<ComparisonReport> criterion_unbalanced_diffusion(const SuiteConfig& sc) {
    const auto params = ModelParams::from_rates(1.0, 1.3);
    McRequest req;
    req.quantity = McQuantity::diffusion_vol_unbalanced;
    req.scale_n = 2000;
    const auto f = symmetric_reference_f();
    auto sd = mc_compare(req, params, f, sc.oracle(2000, 7));
    sd.details["m_f"] = expected_duration_f(f, params);
    return {std::move(sd)};
}

inline std::vector<ComparisonReport> criterion_estimation(const SuiteConfig& sc) {
    ModelParams params{2204.0, 700.0, 1631.0, 0.01};
    const auto f = asymmetric_reference_f();
    const auto cfg = sc.oracle(1, 8);
    SimConfig sim;
    sim.seed = cfg.mc_seed;
    sim.horizon = Horizon::time(60.0 * std::min(1.0, sc.mc_scale));
    sim.initial_price = 100.0;
    const auto [path, log] = simulate_with_log(params, ReplenishmentLaw::from(f), sim);
    const auto est = estimate_intensities(log, {std::pair{0.0, sim.horizon.value}});
    std::vector<ComparisonReport> out;

    ComparisonReport rates;
    rates.quantity = "estimate_intensities";
    rates.description = "recovered lambda and mu+theta vs generator values, 3 Poisson SE";
    rates.abscissa_name = "rate (0 lambda, 1 mu+theta)";
    rates.abscissa = {0.0, 1.0};
    rates.analytic = {params.lambda, params.mu_theta()};
    rates.oracle = {est.lambda_hat, est.mu_theta_hat};
    rates.se = {est.lambda_se, est.mu_theta_se};
    rates.rule = PassRule::se_band;
    rates.tolerance = 3.0;
    rates.details = {{"events", log.size()}, {"seconds", sim.horizon.value}};
    out.push_back(rates.evaluate());

    const auto rep = estimate_replenishment(log, {true, params.tick});
    const double changes = static_cast<double>(rep.up_moves + rep.down_moves);
    out.push_back(scalar_report("price_changes_used", "one-tick price changes feeding f_hat (at least 1e4)", changes, 1e4,
                                PassRule::greater_than, 1e4 - 0.5));
    auto tv = scalar_report("f_hat_total_variation", "total variation between f_hat and the generating f", total_variation(rep.f_hat, f),
                            0.0, PassRule::abs_tol, 0.02);
    tv.details = {{"f_hat", queue_dist_json(rep.f_hat)}, {"up_moves", rep.up_moves}, {"down_moves", rep.down_moves}};
    out.push_back(std::move(tv));
    return out;
}

} // namespace detail

/// Criteria 1-8 with the analytics operations each one certifies.
inline const std::vector<Criterion>& acceptance_criteria() {
    static const std::vector<Criterion> registry{
        {1, "Duration law vs uniformization and Monte Carlo", {"survival_duration", "psi", "hitting_laplace"}, detail::criterion_duration},
        {2, "Tail exponents and prefactors", {"tail_law"}, detail::criterion_tail},
        {3, "Hitting probability vs Dirichlet solve", {"prob_up_balanced", "prob_up_numeric"}, detail::criterion_hitting},
        {4, "Price-change chain autocovariances", {"p_cont", "p_n", "autocov_moves"}, detail::criterion_price_chain},
        {5, "Expected duration vs simulated means", {"expected_duration"}, detail::criterion_expected_duration},
        {6, "Balanced diffusion limit", {"vol_balanced", "depth"}, detail::criterion_balanced_diffusion},
        {7, "Unbalanced diffusion limit", {"vol_unbalanced", "expected_duration_f"}, detail::criterion_unbalanced_diffusion},
        {8, "Estimation consistency", {"estimate_intensities", "estimate_replenishment"}, detail::criterion_estimation},
    };
    return registry;
}

/// Analytics operations that must each be certified by some registered criterion.
inline const std::vector<std::string>& analytics_operations() {
    static const std::vector<std::string> ops{"hitting_laplace", "psi",   "survival_duration", "tail_law",      "prob_up_balanced",
                                              "prob_up_numeric", "p_cont", "p_n",              "autocov_moves", "depth",
                                              "vol_balanced",    "expected_duration", "expected_duration_f", "vol_unbalanced"};
    return ops;
}

/// Operations without a registered comparison (empty when coverage is complete).
inline std::vector<std::string> coverage_gaps(const std::vector<Criterion>& registry = acceptance_criteria()) {
    std::set<std::string> covered;
    for (const auto& c : registry) covered.insert(c.covers.begin(), c.covers.end());
    std::vector<std::string> gaps;
    for (const auto& op : analytics_operations())
        if (!covered.count(op)) gaps.push_back(op);
    return gaps;
}

inline CriterionResult run_criterion(const Criterion& c, const SuiteConfig& sc) {
    CriterionResult r{c.id, c.title, c.covers, c.run(sc), false};
    r.passed = !r.reports.empty() && std::all_of(r.reports.begin(), r.reports.end(), [](const auto& x) { return x.passed; });
    return r;
}

inline CriterionResult run_criterion(int id, const SuiteConfig& sc) {
    for (const auto& c : acceptance_criteria())
        if (c.id == id) return run_criterion(c, sc);
    throw std::invalid_argument("run_criterion: unknown criterion " + std::to_string(id));
}

struct SuiteReport {
    SuiteConfig config;
    std::vector<CriterionResult> criteria;
    std::vector<std::string> coverage_gaps;
    bool passed = false;
};

inline SuiteReport run_suite(const SuiteConfig& sc, const std::vector<int>& ids = {1, 2, 3, 4, 5, 6, 7, 8}) {
    SuiteReport rep;
    rep.config = sc;
    for (int id : ids) rep.criteria.push_back(run_criterion(id, sc));
    rep.coverage_gaps = coverage_gaps();
    rep.passed = rep.coverage_gaps.empty() &&
                 std::all_of(rep.criteria.begin(), rep.criteria.end(), [](const auto& c) { return c.passed; });
    return rep;
}

inline nlohmann::json to_json(const CriterionResult& c) {
    auto reports = nlohmann::json::array();
    for (const auto& r : c.reports) reports.push_back(to_json(r));
    return {{"id", c.id}, {"title", c.title}, {"covers", c.covers}, {"passed", c.passed}, {"reports", reports}};
}

inline nlohmann::json to_json(const SuiteReport& s) {
    auto crit = nlohmann::json::array();
    for (const auto& c : s.criteria) crit.push_back(to_json(c));
    return {{"config", {{"seed", s.config.seed}, {"mc_scale", s.config.mc_scale}, {"queue_truncation", s.config.queue_truncation}}},
            {"criteria", crit},
            {"coverage", {{"required", analytics_operations()}, {"missing", s.coverage_gaps}}},
            {"passed", s.passed}};
}

/// One line per report and a verdict line per criterion.
inline void write_suite_table(std::ostream& os, const SuiteReport& s) {
    for (const auto& c : s.criteria) {
        os << "criterion " << c.id << ": " << (c.passed ? "PASS" : "FAIL") << "  " << c.title << '\n';
        for (const auto& r : c.reports) {
            os << "    " << (r.passed ? "pass" : "FAIL") << "  " << std::left << std::setw(34) << r.quantity << std::right
               << " max|dev| " << std::setw(12) << std::setprecision(4) << std::scientific << r.max_abs_deviation << std::defaultfloat;
            if (r.stochastic) os << "  max dev/SE " << std::setprecision(3) << std::fixed << r.max_se_multiple << std::defaultfloat;
            os << "  rule " << to_string(r.rule) << ' ' << std::setprecision(6) << r.tolerance << '\n';
        }
    }
    os << "coverage: " << (s.coverage_gaps.empty() ? "complete" : "missing");
    for (const auto& g : s.coverage_gaps) os << ' ' << g;
    os << '\n' << "suite: " << (s.passed ? "PASS" : "FAIL") << '\n';
}

} // namespace lobq
