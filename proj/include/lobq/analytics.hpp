// Closed-form quantities of the two-queue model.
//
// Argument order is (bid, ask) everywhere in this header. Each queue is a
// birth-death process with birth rate lambda and death rate mu + theta, so
// the time until the next price move is the minimum of two independent
// first-passage times to zero.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <fftw3.h>

#include "lobq/log.hpp"
#include "lobq/model.hpp"
#include "lobq/numerics.hpp"

namespace lobq {

using detail::kPi;

/// Clamps a computed probability into [0, 1], warning when the excursion exceeds 1e-8.
inline double clamp_probability(double v, const char* what) {
    if (v < -1e-8 || v > 1.0 + 1e-8)
        log_warning(std::string(what) + ": value " + std::to_string(v) + " clamped to [0,1]");
    return std::clamp(v, 0.0, 1.0);
}

/// E[exp(-s sigma)] for the first time a queue started at x reaches zero.
inline double hitting_laplace(double s, int x, const ModelParams& params) {
    params.validate();
    if (!(s >= 0.0)) throw std::invalid_argument("hitting_laplace: s must be nonnegative");
    if (x < 1) throw std::invalid_argument("hitting_laplace: x must be >= 1");
    const double lam = params.lambda;
    const double mt = params.mu_theta();
    const double b = lam + mt + s;
    // Smaller root of lam X^2 - b X + mt, written without cancellation.
    const double root = 2.0 * mt / (b + std::sqrt(b * b - 4.0 * lam * mt));
    return std::pow(root, x);
}

namespace detail {

/// Integrand of psi: (n/u) I_n(2 sqrt(lam mt) u) e^{-u (lam + mt)} times e^{log_weight}.
/// With log_weight = (n/2) log(mt/lam) it is the density of the hitting time of zero.
struct HittingDensity {
    int n;
    double arg_scale; // 2 sqrt(lam mt)
    double decay;     // (sqrt(lam) - sqrt(mt))^2
    double log_weight;

    HittingDensity(int n_, const ModelParams& p, bool with_prefactor) : n(n_) {
        const double lam = p.lambda;
        const double mt = p.mu_theta();
        arg_scale = 2.0 * std::sqrt(lam * mt);
        const double d = lam - mt;
        decay = d * d / ((std::sqrt(lam) + std::sqrt(mt)) * (std::sqrt(lam) + std::sqrt(mt)));
        log_weight = with_prefactor ? 0.5 * n * std::log(mt / lam) : 0.0;
    }

    double operator()(double u) const {
        if (u == 0.0) return n == 1 ? 0.5 * arg_scale * std::exp(log_weight) : 0.0;
        const double i_scaled = bessel_i_scaled(n, arg_scale * u);
        if (i_scaled == 0.0) return 0.0;
        return n / u * std::exp(std::log(i_scaled) + log_weight - decay * u);
    }
};

/// Integral of the density over [t, inf); algebraic tail handled in the balanced case.
inline double density_tail(const HittingDensity& g, double t, const ModelParams& p, const QuadSpec& spec) {
    const double lam = p.lambda;
    const double time_scale = 1.0 / (lam + p.mu_theta()) + t / 8.0;
    if (!p.balanced()) return integrate_semi_infinite(g, t, g.decay, spec, time_scale);

    // Balanced: g(u) ~ n / sqrt(4 pi lam) u^{-3/2} (1 - (4n^2-1)/(16 lam u)), so the
    // tail beyond T is n / sqrt(pi lam T) with relative error (4n^2-1)/(48 lam T).
    const double n = g.n;
    const double c2 = (4.0 * n * n) / 48.0;
    const double lamT_rel = c2 / (0.25 * spec.rel_tol);
    const double lamT_abs = std::pow(c2 * n / (std::sqrt(kPi) * 0.25 * spec.abs_tol), 2.0 / 3.0);
    const double cutoff = std::max({64.0 * t, std::min(lamT_rel, lamT_abs) / lam, t + 64.0 * time_scale});
    const auto breaks = geometric_breaks(t, cutoff, time_scale);
    const double weight = std::exp(g.log_weight);
    return adaptive_simpson(g, breaks, spec) + weight * n / std::sqrt(kPi * lam * cutoff);
}

} // namespace detail

/// psi_n(t) = int_t^inf (n/u) I_n(2 sqrt(lambda (mu+theta)) u) e^{-u (lambda+mu+theta)} du.
inline double psi(int n, double t, const ModelParams& params, const QuadSpec& spec = {}) {
    params.validate();
    if (n < 1) throw std::invalid_argument("psi: n must be >= 1");
    if (!(t >= 0.0)) throw std::invalid_argument("psi: t must be nonnegative");
    if (std::isinf(t)) return 0.0;
    detail::HittingDensity g(n, params, false);
    // psi_n(0) = (min/max)^{n/2}; near t = 0 subtract the head instead of integrating the tail.
    const double lam = params.lambda;
    const double mt = params.mu_theta();
    const double at_zero = std::pow(std::min(lam, mt) / std::max(lam, mt), 0.5 * n);
    if (t == 0.0) return at_zero;
    const double head = integrate_finite(g, 0.0, t, spec);
    if (head < 0.5 * at_zero) return std::max(0.0, at_zero - head);
    return std::max(0.0, detail::density_tail(g, t, params, spec));
}

/// P[sigma > t] for a single queue started at x, sigma its first hitting time of zero.
/// Equals ((mu+theta)/lambda)^{x/2} psi_x(t); when lambda > mu+theta it includes the
/// mass 1 - ((mu+theta)/lambda)^x of never hitting zero.
inline double queue_survival(int x, double t, const ModelParams& params, const QuadSpec& spec = {}) {
    params.validate();
    if (x < 1) throw std::invalid_argument("queue_survival: x must be >= 1");
    if (!(t >= 0.0)) throw std::invalid_argument("queue_survival: t must be nonnegative");
    const double defect = params.lambda > params.mu_theta() ? 1.0 - std::pow(params.mu_theta() / params.lambda, x) : 0.0;
    if (std::isinf(t)) return defect;
    const double weight = std::exp(0.5 * x * std::log(params.mu_theta() / params.lambda));
    return clamp_probability(defect + weight * psi(x, t, params, spec), "queue_survival");
}

/// P[tau > t | bid queue, ask queue]: the product of the two single-queue survivals.
inline double survival_duration(int bid, int ask, double t, const ModelParams& params, const QuadSpec& spec = {}) {
    if (bid < 1 || ask < 1) throw std::invalid_argument("survival_duration: queues must be >= 1");
    if (t == 0.0) return 1.0;
    return queue_survival(bid, t, params, spec) * queue_survival(ask, t, params, spec);
}

/// Single-queue survival on many times at once: the value at the largest time
/// comes from the tail integral, the others by adding the density integral
/// between consecutive times.
inline std::vector<double> queue_survival_curve(int x, std::span<const double> t_grid, const ModelParams& params, const QuadSpec& spec = {}) {
    params.validate();
    if (x < 1) throw std::invalid_argument("queue_survival_curve: x must be >= 1");
    std::vector<std::size_t> order(t_grid.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        if (!(t_grid[i] >= 0.0) || !std::isfinite(t_grid[i])) throw std::invalid_argument("queue_survival_curve: times must be finite and >= 0");
        order[i] = i;
    }
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return t_grid[a] > t_grid[b]; });
    std::vector<double> out(t_grid.size());
    if (order.empty()) return out;
    detail::HittingDensity g(x, params, true);
    double value = queue_survival(x, t_grid[order.front()], params, spec);
    double prev_t = t_grid[order.front()];
    out[order.front()] = value;
    for (std::size_t k = 1; k < order.size(); ++k) {
        const double t = t_grid[order[k]];
        if (t < prev_t) value += integrate_finite(g, t, prev_t, spec);
        prev_t = t;
        out[order[k]] = clamp_probability(value, "queue_survival_curve");
    }
    return out;
}

inline std::vector<double> survival_duration_curve(int bid, int ask, std::span<const double> t_grid, const ModelParams& params,
                                                   const QuadSpec& spec = {}) {
    if (bid < 1 || ask < 1) throw std::invalid_argument("survival_duration_curve: queues must be >= 1");
    auto sb = queue_survival_curve(bid, t_grid, params, spec);
    const auto sa = queue_survival_curve(ask, t_grid, params, spec);
    for (std::size_t i = 0; i < sb.size(); ++i) sb[i] = t_grid[i] == 0.0 ? 1.0 : sb[i] * sa[i];
    return sb;
}

/// Regularly varying tail P[tau > t] ~ prefactor * t^{-exponent}.
struct TailLaw {
    int exponent = 2;
    double prefactor = 0.0;
};

/// Tail constants of the duration law: exponent 2 when lambda < mu+theta, 1 when balanced.
inline TailLaw tail_law(int bid, int ask, const ModelParams& params) {
    params.validate();
    if (bid < 1 || ask < 1) throw std::invalid_argument("tail_law: queues must be >= 1");
    const double lam = params.lambda;
    const double mt = params.mu_theta();
    const double xy = static_cast<double>(bid) * ask;
    if (params.balanced()) return {1, xy / (kPi * lam)};
    if (lam > mt) throw std::domain_error("tail_law: requires lambda <= mu + theta");
    const double s = lam + mt;
    return {2, xy * s * s / (4.0 * lam * lam * (mt - lam) * (mt - lam))};
}

namespace detail {

// e^{-r(t) p} sin(n t) cos(t/2) / sin(t/2) with r(t) = acosh(2 - cos t).
// Using s = sin(t/2): e^{-r} = (sqrt(1+s^2) - s)^2 = (sqrt(1+s^2) + s)^{-2}.
inline double exit_weight(double t, int p) {
    const double s = std::sin(0.5 * t);
    return std::pow(std::sqrt(1.0 + s * s) + s, -2.0 * p);
}

} // namespace detail

/// Default accuracy for prob_up_balanced.
inline constexpr QuadSpec kHittingQuadSpec{1e-13, 1e-12};

/// Probability that the ask queue empties before the bid queue when
/// lambda = mu + theta (then independent of the rates).
inline double prob_up_balanced(int bid, int ask, const QuadSpec& spec = kHittingQuadSpec) {
    if (bid < 1 || ask < 1) throw std::invalid_argument("prob_up_balanced: queues must be >= 1");
    constexpr double eps = 1e-6;
    const int n = bid;
    const int p = ask;
    auto near_zero = [n, p](double t) { return 2.0 * n * detail::exit_weight(t, p); };
    auto integrand = [n, p](double t) {
        return detail::exit_weight(t, p) * std::sin(n * t) * std::cos(0.5 * t) / std::sin(0.5 * t);
    };
    const double v = integrate_finite(near_zero, 0.0, eps, spec) + integrate_finite(integrand, eps, kPi, spec);
    return clamp_probability(v / kPi, "prob_up_balanced");
}

/// Continuum-limit guess 1 - (2/pi) atan(ask/bid) used on the far edge of a truncated grid.
inline double quadrant_angle_value(double bid, double ask) { return 1.0 - 2.0 / kPi * std::atan2(ask, bid); }

namespace detail {

// In-place 2-D DST-I (unnormalised, FFTW_RODFT00) of an n x n row-major array.
inline void dst1_2d(std::vector<double>& data, int n) {
    static std::mutex planner_mutex;
    fftw_plan plan;
    {
        std::lock_guard lock(planner_mutex);
        plan = fftw_plan_r2r_2d(n, n, data.data(), data.data(), FFTW_RODFT00, FFTW_RODFT00, FFTW_ESTIMATE);
    }
    if (plan == nullptr) throw std::runtime_error("dst1_2d: FFTW planning failed");
    fftw_execute(plan);
    std::lock_guard lock(planner_mutex);
    fftw_destroy_plan(plan);
}

} // namespace detail

/// P[ask empties first] on the truncated quadrant {1..N}^2 for lambda <= mu + theta,
/// from the embedded jump chain: each jump hits either side with probability 1/2 and is
/// +1 with probability u = lambda/(lambda+mu+theta). Boundary: 0 on the empty-bid axis,
/// 1 on the empty-ask axis, the quadrant angle value beyond N.
///
/// With d = 1 - u, phi = (d/u)^{(b+a)/2} y turns the system into
/// y - (sqrt(ud)/2)(K y + y K) = r with K the path adjacency matrix, which the 2-D sine
/// transform diagonalises. The rounding error of phi(b, a) then grows like
/// (d/u)^{(b+a)/2}, so when that weight exceeds 1e5 at queues up to `accurate_up_to`
/// the unscaled system is solved with a sparse LU instead.
class HittingTable {
public:
    HittingTable(const ModelParams& params, int truncation, int accurate_up_to = 0) : n_(truncation) {
        params.validate();
        if (truncation < 2) throw std::invalid_argument("HittingTable: truncation must be >= 2");
        if (params.lambda > params.mu_theta() && !params.balanced())
            throw std::domain_error("HittingTable: requires lambda <= mu + theta (otherwise neither queue may empty)");
        up_ = params.balanced() ? 0.5 : params.lambda / (params.lambda + params.mu_theta());
        const double log_ratio = std::log((1.0 - up_) / up_);
        const int q = accurate_up_to > 0 ? std::min(accurate_up_to, truncation) : truncation;
        if (log_ratio * q <= std::log(1e5) && log_ratio * truncation <= 690.0)
            solve_transform(log_ratio);
        else
            solve_sparse();
    }

    int truncation() const { return n_; }

    double at(int bid, int ask) const {
        if (bid < 1 || ask < 1 || bid > n_ || ask > n_) throw std::out_of_range("HittingTable: state outside the grid");
        return std::clamp(values_[index(bid, ask)], 0.0, 1.0);
    }

    /// Grid size beyond which the far edge cannot change values at queues <= max_queue by
    /// more than e^{-80}: with drift towards the axes the chance of travelling d cells
    /// outward is at most (u/d)^d.
    static int drift_truncation(const ModelParams& params, int requested, int max_queue) {
        if (params.balanced()) return requested;
        const double log_ratio = std::log(params.mu_theta() / params.lambda);
        const double reach = std::ceil(80.0 / log_ratio);
        if (reach >= requested) return requested;
        return std::min(requested, std::max(2 * max_queue, max_queue + static_cast<int>(reach)));
    }

private:
    std::size_t index(int b, int a) const { return static_cast<std::size_t>(b - 1) * n_ + (a - 1); }

    // Right-hand side of the unscaled system: known neighbour values times their probability.
    double boundary_term(int b, int a) const {
        const int N = n_;
        double r = 0.0;
        if (a == 1) r += 0.5 * (1.0 - up_);
        if (b == N) r += 0.5 * up_ * quadrant_angle_value(N + 1, a);
        if (a == N) r += 0.5 * up_ * quadrant_angle_value(b, N + 1);
        return r;
    }

    void solve_transform(double log_ratio) {
        const int N = n_;
        const auto weight = [log_ratio](int b, int a) { return std::exp(0.5 * (b + a) * log_ratio); };
        const double coupling = 0.5 * std::sqrt(up_ * (1.0 - up_));
        std::vector<double> work(static_cast<std::size_t>(N) * N);
        for (int b = 1; b <= N; ++b)
            for (int a = 1; a <= N; ++a) work[index(b, a)] = boundary_term(b, a) / weight(b, a);
        detail::dst1_2d(work, N);
        std::vector<double> eig(N);
        for (int j = 1; j <= N; ++j) eig[j - 1] = 2.0 * std::cos(j * kPi / (N + 1));
        const double norm = 4.0 * (N + 1.0) * (N + 1.0);
        for (int i = 0; i < N; ++i)
            for (int j = 0; j < N; ++j) work[static_cast<std::size_t>(i) * N + j] /= norm * (1.0 - coupling * (eig[i] + eig[j]));
        detail::dst1_2d(work, N);
        values_.resize(work.size());
        for (int b = 1; b <= N; ++b)
            for (int a = 1; a <= N; ++a) values_[index(b, a)] = work[index(b, a)] * weight(b, a);
    }

    void solve_sparse() {
        const int N = n_;
        const double down = 1.0 - up_;
        std::vector<Eigen::Triplet<double>> triplets;
        triplets.reserve(static_cast<std::size_t>(5) * N * N);
        Eigen::VectorXd rhs(static_cast<Eigen::Index>(N) * N);
        for (int b = 1; b <= N; ++b) {
            for (int a = 1; a <= N; ++a) {
                const auto row = static_cast<Eigen::Index>(index(b, a));
                triplets.emplace_back(row, row, 1.0);
                rhs[row] = boundary_term(b, a);
                if (b < N) triplets.emplace_back(row, static_cast<Eigen::Index>(index(b + 1, a)), -0.5 * up_);
                if (b > 1) triplets.emplace_back(row, static_cast<Eigen::Index>(index(b - 1, a)), -0.5 * down);
                if (a < N) triplets.emplace_back(row, static_cast<Eigen::Index>(index(b, a + 1)), -0.5 * up_);
                if (a > 1) triplets.emplace_back(row, static_cast<Eigen::Index>(index(b, a - 1)), -0.5 * down);
            }
        }
        Eigen::SparseMatrix<double> A(rhs.size(), rhs.size());
        A.setFromTriplets(triplets.begin(), triplets.end());
        Eigen::SparseLU<Eigen::SparseMatrix<double>> solver;
        solver.compute(A);
        if (solver.info() != Eigen::Success) throw std::runtime_error("HittingTable: sparse factorisation failed");
        const Eigen::VectorXd x = solver.solve(rhs);
        if (solver.info() != Eigen::Success) throw std::runtime_error("HittingTable: sparse solve failed");
        values_.assign(x.data(), x.data() + x.size());
    }

    int n_;
    double up_ = 0.5;
    std::vector<double> values_;
};

/// Coarse and fine tables for a sensitivity check; identical when the drift makes the
/// far edge irrelevant.
struct HittingTablePair {
    HittingTable coarse;
    std::optional<HittingTable> fine;
    const HittingTable& best() const { return fine ? *fine : coarse; }
    double sensitivity(int bid, int ask) const { return fine ? std::abs(fine->at(bid, ask) - coarse.at(bid, ask)) : 0.0; }

    static HittingTablePair solve(const ModelParams& params, int truncation, int max_queue) {
        const int n1 = HittingTable::drift_truncation(params, truncation, max_queue);
        const int n2 = HittingTable::drift_truncation(params, 2 * truncation, max_queue);
        HittingTablePair out{HittingTable(params, n1, max_queue), std::nullopt};
        if (n2 != n1) out.fine.emplace(params, n2, max_queue);
        return out;
    }
};

/// Ask-empties-first probability for general rates. Solves at `truncation` and at
/// twice that, warns when the two differ by more than 1e-6, and returns the finer value.
inline double prob_up_numeric(int bid, int ask, const ModelParams& params, int truncation = 400) {
    if (bid < 1 || ask < 1) throw std::invalid_argument("prob_up_numeric: queues must be >= 1");
    if (truncation < 2 * std::max(bid, ask)) throw std::invalid_argument("prob_up_numeric: truncation must be at least twice the queue sizes");
    const auto tables = HittingTablePair::solve(params, truncation, std::max(bid, ask));
    const double sens = tables.sensitivity(bid, ask);
    if (sens > 1e-6) log_warning("prob_up_numeric: boundary sensitivity " + std::to_string(sens) + " exceeds 1e-6");
    return tables.best().at(bid, ask);
}

/// Sum over i <= j of f(i, j) (bid i, ask j): mass where the ask queue is at least the bid queue.
inline double asymmetry_mass(const QueueDist& f) {
    double s = 0.0;
    for (const auto& a : f.atoms())
        if (a.ask >= a.bid) s += a.p;
    return s;
}

/// Probability that two successive price moves have the same sign.
inline double p_cont(const QueueDist& f, const ModelParams& params, int truncation = 400) {
    params.validate();
    double s = 0.0;
    if (params.balanced()) {
        for (const auto& a : f.atoms()) s += a.p * prob_up_balanced(a.bid, a.ask);
    } else {
        const auto tables = HittingTablePair::solve(params, std::max(truncation, 2 * f.max_queue()), f.max_queue());
        double s_coarse = 0.0;
        for (const auto& a : f.atoms()) {
            s += a.p * tables.best().at(a.bid, a.ask);
            s_coarse += a.p * tables.coarse.at(a.bid, a.ask);
        }
        if (std::abs(s - s_coarse) > 1e-6)
            log_warning("p_cont: truncation sensitivity " + std::to_string(std::abs(s - s_coarse)) + " exceeds 1e-6");
    }
    return clamp_probability(s, "p_cont");
}

/// First-move-up probability from (bid, ask).
inline double prob_first_up(int bid, int ask, const ModelParams& params) {
    return params.balanced() ? prob_up_balanced(bid, ask) : prob_up_numeric(bid, ask, params);
}

/// P[X_n = +1 | bid, ask] = (1 + (2 p_cont - 1)^{n-1} (2 p_1 - 1)) / 2 given p_cont and p_1.
inline double p_n_from(int n, double p_first, double p_continue) {
    if (n < 1) throw std::invalid_argument("p_n: n must be >= 1");
    return clamp_probability(0.5 * (1.0 + std::pow(2.0 * p_continue - 1.0, n - 1) * (2.0 * p_first - 1.0)), "p_n");
}

inline double p_n(int n, int bid, int ask, const QueueDist& f, const ModelParams& params) {
    if (n < 1) throw std::invalid_argument("p_n: n must be >= 1");
    const double p1 = prob_first_up(bid, ask, params);
    if (n == 1) return p1;
    return p_n_from(n, p1, p_cont(f, params));
}

/// Cov(X_1, X_k) = (2 p_cont - 1)^{k-1} for moves normalised to +-1.
inline double autocov_from(int k, double p_continue) {
    if (k < 1) throw std::invalid_argument("autocov_moves: k must be >= 1");
    return std::pow(2.0 * p_continue - 1.0, k - 1);
}

inline double autocov_moves(int k, const QueueDist& f, const ModelParams& params) {
    if (k == 1) return 1.0;
    return autocov_from(k, p_cont(f, params));
}

/// D(f) = sum i j f(i, j).
inline double depth(const QueueDist& f) {
    double d = 0.0;
    for (const auto& a : f.atoms()) d += static_cast<double>(a.bid) * a.ask * a.p;
    return d;
}

/// Balanced-flow diffusion coefficient tick * sqrt(pi lambda / D(f)) per unit of rescaled time.
inline double vol_balanced(const ModelParams& params, const QueueDist& f) {
    params.validate();
    if (!params.balanced(1e-9)) log_warning("vol_balanced: lambda != mu + theta; the balanced limit does not apply");
    const double d = depth(f);
    if (!(d > 0.0)) throw std::domain_error("vol_balanced: D(f) must be positive");
    return params.tick * std::sqrt(kPi * params.lambda / d);
}

/// Windowed form tick * sqrt(n pi lambda / D(f)), n the order count of the window.
inline double vol_balanced(const ModelParams& params, const QueueDist& f, double n) {
    if (!(n > 0.0)) throw std::invalid_argument("vol_balanced: n must be positive");
    return vol_balanced(params, f) * std::sqrt(n);
}

/// Solves n log n = window for n > 1 (time scale of the balanced limit).
inline double orders_for_window(double window) {
    if (!(window > 0.0)) throw std::invalid_argument("orders_for_window: window must be positive");
    double n = std::max(2.0, window / std::max(1.0, std::log(std::max(window, 2.0))));
    for (int i = 0; i < 100; ++i) {
        const double f = n * std::log(n) - window;
        const double step = f / (std::log(n) + 1.0);
        n = std::max(1.0 + 1e-12, n - step);
        if (std::abs(step) < 1e-14 * n) break;
    }
    return n;
}

namespace detail {

// Survival of one queue on a segment [lo, hi] given its value at hi.
struct SegmentSurvival {
    const HittingDensity* g;
    double hi;
    double at_hi;
    QuadSpec spec;
    double operator()(double t) const {
        if (t >= hi) return at_hi;
        return at_hi + adaptive_simpson(*g, std::vector<double>{t, hi}, spec);
    }
};

} // namespace detail

/// E[tau | bid, ask] = int_0^inf P[tau > t] dt, requires lambda < mu + theta.
inline double expected_duration(int bid, int ask, const ModelParams& params, const QuadSpec& spec = {}) {
    params.validate();
    if (bid < 1 || ask < 1) throw std::invalid_argument("expected_duration: queues must be >= 1");
    if (params.balanced() || params.lambda > params.mu_theta())
        throw std::domain_error("expected_duration: requires lambda < mu + theta (the mean is infinite otherwise)");
    const detail::HittingDensity gb(bid, params, true);
    const detail::HittingDensity ga(ask, params, true);
    const double decay = gb.decay;
    const double scale = 1.0 / (params.lambda + params.mu_theta());

    // Cut-off where the remaining product tail is below abs_tol / 2.
    double cutoff = 1.0 / decay;
    for (int i = 0; i < 200; ++i) {
        const double tail = queue_survival(bid, cutoff, params, spec) * queue_survival(ask, cutoff, params, spec);
        if (tail / (2.0 * decay) < 0.5 * spec.abs_tol) break;
        cutoff *= 2.0;
    }
    const auto breaks = detail::geometric_breaks(0.0, cutoff, scale);
    const std::size_t k = breaks.size();
    std::vector<double> sb(k), sa(k);
    sb[k - 1] = queue_survival(bid, breaks[k - 1], params, spec);
    sa[k - 1] = queue_survival(ask, breaks[k - 1], params, spec);
    for (std::size_t i = k - 1; i-- > 0;) {
        sb[i] = sb[i + 1] + integrate_finite(gb, breaks[i], breaks[i + 1], spec);
        sa[i] = sa[i + 1] + integrate_finite(ga, breaks[i], breaks[i + 1], spec);
    }
    QuadSpec inner = spec;
    inner.abs_tol = spec.abs_tol * 0.01;
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < k; ++i) {
        const detail::SegmentSurvival fb{&gb, breaks[i + 1], sb[i + 1], inner};
        const detail::SegmentSurvival fa{&ga, breaks[i + 1], sa[i + 1], inner};
        auto product = [&](double t) { return fb(t) * fa(t); };
        total += detail::adaptive_simpson(product, std::vector<double>{breaks[i], breaks[i + 1]}, spec);
    }
    return total;
}

/// int_0^inf psi_bid(t) psi_ask(t) dt: the duration mean without the ((mu+theta)/lambda)^{(bid+ask)/2} factor.
inline double expected_duration_unnormalized(int bid, int ask, const ModelParams& params, const QuadSpec& spec = {}) {
    const double factor = std::exp(0.5 * (bid + ask) * std::log(params.mu_theta() / params.lambda));
    return expected_duration(bid, ask, params, spec) / factor;
}

/// m(f) = sum f(i, j) E[tau | i, j].
inline double expected_duration_f(const QueueDist& f, const ModelParams& params, const QuadSpec& spec = {}) {
    double m = 0.0;
    for (const auto& a : f.atoms()) m += a.p * expected_duration(a.bid, a.ask, params, spec);
    return m;
}

/// Diffusion coefficient tick / sqrt(m) of the n-rescaled price when lambda < mu + theta.
inline double vol_unbalanced_from_mean(double mean_duration, double tick) {
    if (!(mean_duration > 0.0)) throw std::domain_error("vol_unbalanced: mean duration must be positive");
    return tick / std::sqrt(mean_duration);
}

inline double vol_unbalanced(const ModelParams& params, const QueueDist& f, const QuadSpec& spec = {}) {
    return vol_unbalanced_from_mean(expected_duration_f(f, params, spec), params.tick);
}

} // namespace lobq
