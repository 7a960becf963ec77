// Scaled modified Bessel functions and adaptive quadrature.
//
// Everything here is a pure function of its arguments. Integrals use a
// globally adaptive Simpson rule: the panel with the largest Richardson error
// estimate is bisected until the summed estimate meets the tolerance. The
// bisection order only depends on the integrand values, so results are
// bit-reproducible.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <queue>
#include <stdexcept>
#include <string>
#include <vector>

namespace lobq {

/// Raised when an adaptive integration cannot meet its tolerance.
class QuadratureError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct QuadSpec {
    double abs_tol = 1e-10;
    double rel_tol = 1e-8;
    std::size_t max_subdivisions = std::size_t{1} << 20;

    void validate() const {
        if (!(abs_tol > 0.0) || !(rel_tol > 0.0) || max_subdivisions < 1)
            throw std::invalid_argument("QuadSpec: tolerances must be positive and max_subdivisions >= 1");
    }
};

namespace detail {

inline constexpr double kPi = 3.14159265358979323846;

// e^{-z} I_n(z) from the ascending series. The running sum is rescaled so
// large arguments cannot overflow; the prefactor is applied in log space.
inline double bessel_series_scaled(int n, double z) {
    const double q = 0.25 * z * z;
    double term = 1.0;
    double sum = 1.0;
    double log_scale = 0.0;
    for (int k = 1; k < 100000; ++k) {
        term *= q / (static_cast<double>(k) * static_cast<double>(k + n));
        sum += term;
        if (sum > 1e250) {
            sum *= 1e-250;
            term *= 1e-250;
            log_scale += 250.0 * std::log(10.0);
        }
        if (term < 1e-17 * sum && static_cast<double>(k) * (k + n) > q) break;
    }
    const double log_prefactor = n * std::log(0.5 * z) - std::lgamma(n + 1.0) - z;
    return std::exp(log_prefactor + log_scale + std::log(sum));
}

// Hankel expansion e^{-z} I_n(z) ~ (2 pi z)^{-1/2} sum_k (-1)^k a_k(n) / z^k.
// Returns nothing when the series does not reach full precision before its
// terms start to grow, or when cancellation would cost more than one digit.
inline std::optional<double> bessel_hankel_scaled(int n, double z) {
    const double mu = 4.0 * static_cast<double>(n) * static_cast<double>(n);
    double term = 1.0;
    double sum = 1.0;
    double max_term = 1.0;
    double prev_abs = std::numeric_limits<double>::infinity();
    for (int k = 1; k < 400; ++k) {
        const double odd = 2.0 * k - 1.0;
        term *= -(mu - odd * odd) / (8.0 * k * z);
        const double a = std::abs(term);
        sum += term;
        max_term = std::max(max_term, a);
        if (a <= 1e-17 * std::abs(sum)) {
            if (max_term > 10.0 * std::abs(sum)) return std::nullopt;
            return sum / std::sqrt(2.0 * kPi * z);
        }
        if (odd * odd > mu && a > prev_abs) return std::nullopt;
        prev_abs = a;
    }
    return std::nullopt;
}

// Miller backward recurrence normalised by e^z = I_0 + 2 sum_{k>=1} I_k.
// Start index chosen so I_N / I_0 < e^{-40}.
inline double bessel_miller_scaled(int n, double z) {
    const int start = n + 20 + static_cast<int>(std::ceil(std::sqrt(80.0 * z) + z / 16.0));
    const double two_over_z = 2.0 / z;
    double next = 0.0;  // I_{k+1}
    double cur = 1e-280; // I_k
    double norm = 0.0;
    double wanted = 0.0;
    for (int k = start; k >= 1; --k) {
        const double prev = k * two_over_z * cur + next; // I_{k-1}
        norm += 2.0 * cur;
        if (k == n) wanted = cur;
        next = cur;
        cur = prev;
        if (cur > 1e250) {
            cur *= 1e-250;
            next *= 1e-250;
            norm *= 1e-250;
            wanted *= 1e-250;
        }
    }
    norm += cur;
    if (n == 0) wanted = cur;
    return wanted / norm;
}

} // namespace detail

/// e^{-z} I_n(z) for integer n >= 0 and z >= 0. The result lies in [0, 1].
inline double bessel_i_scaled(int n, double z) {
    if (n < 0) throw std::domain_error("bessel_i_scaled: negative order");
    if (!(z >= 0.0)) throw std::domain_error("bessel_i_scaled: argument must be nonnegative");
    if (z == 0.0) return n == 0 ? 1.0 : 0.0;
    if (std::isinf(z)) return 0.0;
    if (z < std::max(30.0, static_cast<double>(n))) return detail::bessel_series_scaled(n, z);
    if (auto v = detail::bessel_hankel_scaled(n, z)) return *v;
    return detail::bessel_miller_scaled(n, z);
}

namespace detail {

struct SimpsonPanel {
    double a, b;
    double fa, flm, fm, frm, fb;
    double estimate; // five-point Simpson plus Richardson correction
    double error;

    bool operator<(const SimpsonPanel& other) const {
        if (error != other.error) return error < other.error;
        return a > other.a; // ties: leftmost first
    }
};

template <class F>
SimpsonPanel make_panel(F& fn, double a, double b, double fa, double fm, double fb) {
    const double h = b - a;
    const double flm = fn(a + 0.25 * h);
    const double frm = fn(a + 0.75 * h);
    const double coarse = h / 6.0 * (fa + 4.0 * fm + fb);
    const double fine = h / 12.0 * (fa + 4.0 * flm + 2.0 * fm + 4.0 * frm + fb);
    const double diff = fine - coarse;
    return SimpsonPanel{a, b, fa, flm, fm, frm, fb, fine + diff / 15.0, std::abs(diff) / 15.0};
}

inline void check_finite(double v, double x) {
    if (!std::isfinite(v))
        throw QuadratureError("integrand is not finite at x = " + std::to_string(x));
}

/// Adaptive Simpson over consecutive panels [breaks[i], breaks[i+1]].
template <class F>
double adaptive_simpson(F& fn, const std::vector<double>& breaks, const QuadSpec& spec) {
    spec.validate();
    if (breaks.size() < 2) return 0.0;
    auto eval = [&fn](double x) {
        const double v = fn(x);
        check_finite(v, x);
        return v;
    };

    std::priority_queue<SimpsonPanel> heap;
    double total = 0.0;
    double total_err = 0.0;
    double frozen_err = 0.0;
    double frozen_sum = 0.0;
    double f_left = eval(breaks.front());
    for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
        const double a = breaks[i];
        const double b = breaks[i + 1];
        if (!(b > a)) continue;
        const double fb = eval(b);
        const double fm = eval(0.5 * (a + b));
        SimpsonPanel p = make_panel(eval, a, b, f_left, fm, fb);
        total += p.estimate;
        total_err += p.error;
        heap.push(p);
        f_left = fb;
    }

    std::size_t splits = 0;
    while (!heap.empty()) {
        const double tol = std::max(spec.abs_tol, spec.rel_tol * std::abs(total));
        if (total_err <= tol) break;
        SimpsonPanel p = heap.top();
        heap.pop();
        const double mid = 0.5 * (p.a + p.b);
        if (!(mid > p.a && mid < p.b) || (p.b - p.a) < 64.0 * std::numeric_limits<double>::epsilon() * std::max(std::abs(p.a), std::abs(p.b))) {
            // Cannot bisect further: keep the estimate and carry its error.
            frozen_err += p.error;
            frozen_sum += p.estimate;
            if (frozen_err > tol) throw QuadratureError("adaptive Simpson: panel width underflow before tolerance was met");
            continue;
        }
        if (++splits > spec.max_subdivisions)
            throw QuadratureError("adaptive Simpson: no convergence within " + std::to_string(spec.max_subdivisions) + " subdivisions");
        SimpsonPanel left = make_panel(eval, p.a, mid, p.fa, p.flm, p.fm);
        SimpsonPanel right = make_panel(eval, mid, p.b, p.fm, p.frm, p.fb);
        total += left.estimate + right.estimate - p.estimate;
        total_err += left.error + right.error - p.error;
        heap.push(left);
        heap.push(right);
    }

    // Re-sum in panel order so rounding does not depend on the split history.
    std::vector<SimpsonPanel> panels;
    panels.reserve(heap.size());
    while (!heap.empty()) {
        panels.push_back(heap.top());
        heap.pop();
    }
    std::sort(panels.begin(), panels.end(), [](const SimpsonPanel& x, const SimpsonPanel& y) { return x.a < y.a; });
    double sum = frozen_sum;
    for (const auto& p : panels) sum += p.estimate;
    return sum;
}

/// Breakpoints a, a+w, a+3w, a+7w, ... capped at b, with the first panel
/// split into `first_split` equal parts.
inline std::vector<double> geometric_breaks(double a, double b, double first_width, int first_split = 8) {
    std::vector<double> out;
    out.push_back(a);
    double w = std::min(first_width, b - a);
    for (int i = 1; i <= first_split; ++i) out.push_back(a + w * i / first_split);
    double x = a + w;
    while (x < b) {
        w *= 2.0;
        x = std::min(b, x + w);
        out.push_back(x);
    }
    out.back() = b;
    return out;
}

} // namespace detail

/// Integral of fn over [a, b]. The interval is seeded with 16 equal panels.
template <class F>
double integrate_finite(F&& fn, double a, double b, const QuadSpec& spec = {}) {
    if (!(a <= b)) throw std::invalid_argument("integrate_finite: requires a <= b");
    if (a == b) return 0.0;
    constexpr int kSeed = 16;
    std::vector<double> breaks(kSeed + 1);
    for (int i = 0; i <= kSeed; ++i) breaks[i] = a + (b - a) * i / kSeed;
    breaks.back() = b;
    return detail::adaptive_simpson(fn, breaks, spec);
}

/// Integral of fn over [a, inf) for integrands bounded by C e^{-decay_rate u}.
///
/// The cut-off T is the first point of a doubling sequence where
/// |fn(T)| / decay_rate < abs_tol / 2. `feature_scale` sets the width of the
/// first panel (defaults to 1 / decay_rate); pass the integrand's natural
/// time scale when it varies much faster than its decay.
template <class F>
double integrate_semi_infinite(F&& fn, double a, double decay_rate, const QuadSpec& spec = {}, double feature_scale = 0.0) {
    spec.validate();
    if (!(decay_rate > 0.0) || !std::isfinite(decay_rate))
        throw std::invalid_argument("integrate_semi_infinite: decay_rate must be positive");
    const double scale = feature_scale > 0.0 ? feature_scale : 1.0 / decay_rate;
    const double tail_target = 0.5 * spec.abs_tol * decay_rate;
    double span = std::max(scale, 1.0 / decay_rate);
    double cutoff = a + span;
    bool ok = false;
    for (int i = 0; i < 200; ++i) {
        const double v1 = std::abs(fn(cutoff));
        const double v2 = std::abs(fn(cutoff + 1.0 / decay_rate));
        if (std::isfinite(v1) && std::isfinite(v2) && v1 < tail_target && v2 < tail_target) {
            ok = true;
            break;
        }
        span *= 2.0;
        cutoff = a + span;
    }
    if (!ok) throw QuadratureError("integrate_semi_infinite: integrand does not decay at the declared rate");
    const auto breaks = detail::geometric_breaks(a, cutoff, scale);
    return detail::adaptive_simpson(fn, breaks, spec);
}

} // namespace lobq
