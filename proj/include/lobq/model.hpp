// Two-queue Markov model of the best bid and ask.
//
// Limit orders arrive on each side at rate lambda, market orders at rate mu
// and cancellations at rate theta. Orders have unit size. When a queue is
// depleted the price moves one tick (ask depleted: up, bid depleted: down)
// and both queues are redrawn from the replenishment law: f after an up-move,
// f with its arguments swapped after a down-move.

#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "lobq/event_log.hpp"
#include "lobq/log.hpp"
#include "lobq/random.hpp"

namespace lobq {

/// Order-flow intensities per side (events per second) and tick size.
struct ModelParams {
    double lambda = 1.0;
    double mu = 1.0;
    double theta = 0.0;
    double tick = 1.0;

    double mu_theta() const { return mu + theta; }
    /// Rate of order-book events summed over both sides.
    double event_rate() const { return 2.0 * (lambda + mu + theta); }
    bool balanced(double rel_tol = 1e-12) const {
        return std::abs(lambda - mu_theta()) <= rel_tol * std::max(lambda, mu_theta());
    }

    void validate() const {
        if (!(lambda > 0.0) || !std::isfinite(lambda)) throw std::invalid_argument("ModelParams: lambda must be positive");
        if (!(mu >= 0.0) || !(theta >= 0.0)) throw std::invalid_argument("ModelParams: mu and theta must be nonnegative");
        if (!(mu_theta() > 0.0) || !std::isfinite(mu_theta())) throw std::invalid_argument("ModelParams: mu + theta must be positive");
        if (!(tick > 0.0) || !std::isfinite(tick)) throw std::invalid_argument("ModelParams: tick must be positive");
    }

    /// Convenience for callers that only know the combined removal rate.
    static ModelParams from_rates(double lambda, double mu_theta, double tick = 1.0) {
        ModelParams p{lambda, mu_theta, 0.0, tick};
        p.validate();
        return p;
    }
};

inline void to_json(nlohmann::json& j, const ModelParams& p) {
    j = {{"lambda", p.lambda}, {"mu", p.mu}, {"theta", p.theta}, {"tick", p.tick}};
}

struct QueueAtom {
    int bid = 1;
    int ask = 1;
    double p = 1.0;

    friend bool operator==(const QueueAtom&, const QueueAtom&) = default;
};

/// Finitely supported law of (bid queue, ask queue) right after a price move.
class QueueDist {
public:
    /// Atoms must have positive probabilities summing to one (within 1e-12),
    /// queue sizes >= 1 and no repeated (bid, ask) pair. With `symmetric` set,
    /// f(i, j) = f(j, i) is also enforced.
    explicit QueueDist(std::vector<QueueAtom> atoms, bool symmetric = false)
        : atoms_(std::move(atoms)), symmetric_(symmetric) {
        if (atoms_.empty()) throw std::invalid_argument("QueueDist: empty support");
        std::sort(atoms_.begin(), atoms_.end(), [](const QueueAtom& a, const QueueAtom& b) {
            return std::pair(a.bid, a.ask) < std::pair(b.bid, b.ask);
        });
        double total = 0.0;
        for (std::size_t i = 0; i < atoms_.size(); ++i) {
            const auto& a = atoms_[i];
            if (a.bid < 1 || a.ask < 1) throw std::invalid_argument("QueueDist: queue sizes must be >= 1");
            if (!(a.p > 0.0)) throw std::invalid_argument("QueueDist: probabilities must be positive");
            if (i > 0 && atoms_[i - 1].bid == a.bid && atoms_[i - 1].ask == a.ask)
                throw std::invalid_argument("QueueDist: repeated atom");
            total += a.p;
        }
        if (std::abs(total - 1.0) > 1e-12) throw std::invalid_argument("QueueDist: probabilities must sum to 1");
        if (symmetric_ && !is_swap_symmetric()) throw std::invalid_argument("QueueDist: flagged symmetric but f(i,j) != f(j,i)");
        cdf_.reserve(atoms_.size());
        double c = 0.0;
        for (const auto& a : atoms_) cdf_.push_back(c += a.p);
    }

    static QueueDist point_mass(int bid, int ask) { return QueueDist({{bid, ask, 1.0}}); }

    /// Normalises nonnegative weights; repeated pairs are merged and zero weights dropped.
    static QueueDist from_weights(const std::vector<QueueAtom>& weights) {
        std::map<std::pair<int, int>, double> merged;
        double total = 0.0;
        for (const auto& w : weights) {
            if (!(w.p >= 0.0) || !std::isfinite(w.p)) throw std::invalid_argument("QueueDist: weights must be nonnegative");
            if (w.p == 0.0) continue;
            merged[{w.bid, w.ask}] += w.p;
            total += w.p;
        }
        if (!(total > 0.0)) throw std::invalid_argument("QueueDist: weights sum to zero");
        std::vector<QueueAtom> atoms;
        for (const auto& [key, w] : merged) atoms.push_back({key.first, key.second, w / total});
        // Push the rounding residue into the largest atom so the sum is 1 to ~ulp.
        double s = 0.0;
        for (const auto& a : atoms) s += a.p;
        auto largest = std::max_element(atoms.begin(), atoms.end(), [](auto& a, auto& b) { return a.p < b.p; });
        largest->p += 1.0 - s;
        return QueueDist(std::move(atoms));
    }

    const std::vector<QueueAtom>& atoms() const { return atoms_; }
    bool symmetric_flag() const { return symmetric_; }

    /// The law with bid and ask exchanged (f~(x, y) = f(y, x)).
    QueueDist swapped() const {
        std::vector<QueueAtom> out;
        out.reserve(atoms_.size());
        for (const auto& a : atoms_) out.push_back({a.ask, a.bid, a.p});
        return QueueDist(std::move(out), symmetric_);
    }

    double prob(int bid, int ask) const {
        auto it = std::lower_bound(atoms_.begin(), atoms_.end(), std::pair(bid, ask),
                                   [](const QueueAtom& a, const std::pair<int, int>& k) { return std::pair(a.bid, a.ask) < k; });
        return (it != atoms_.end() && it->bid == bid && it->ask == ask) ? it->p : 0.0;
    }

    bool is_swap_symmetric(double tol = 1e-12) const {
        for (const auto& a : atoms_)
            if (std::abs(a.p - prob(a.ask, a.bid)) > tol) return false;
        return true;
    }

    int max_queue() const {
        int m = 0;
        for (const auto& a : atoms_) m = std::max({m, a.bid, a.ask});
        return m;
    }

    /// Maps u in [0, 1) to an atom by inverse CDF.
    std::pair<int, int> sample(double u) const {
        auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
        const std::size_t i = std::min<std::size_t>(it - cdf_.begin(), atoms_.size() - 1);
        return {atoms_[i].bid, atoms_[i].ask};
    }

private:
    std::vector<QueueAtom> atoms_;
    std::vector<double> cdf_;
    bool symmetric_ = false;
};

/// Total-variation distance between two queue laws.
inline double total_variation(const QueueDist& a, const QueueDist& b) {
    double s = 0.0;
    for (const auto& x : a.atoms()) s += std::abs(x.p - b.prob(x.bid, x.ask));
    for (const auto& y : b.atoms())
        if (a.prob(y.bid, y.ask) == 0.0) s += y.p;
    return 0.5 * s;
}

/// Replenishment after up-moves (f) and down-moves (f~).
struct ReplenishmentLaw {
    QueueDist after_up;
    QueueDist after_down;
    bool asymmetric_override = false;

    /// f~ = f with swapped arguments.
    static ReplenishmentLaw from(const QueueDist& f) { return {f, f.swapped(), false}; }

    /// An explicit f~. Analytic price-chain and diffusion results assume
    /// f~ = f o swap, so this is accepted with a warning.
    static ReplenishmentLaw with_override(const QueueDist& f, const QueueDist& f_down) {
        if (total_variation(f.swapped(), f_down) > 1e-12)
            log_warning("replenishment override: f~ differs from f with swapped arguments; "
                        "price-change chain and diffusion-limit formulas do not apply");
        return {f, f_down, true};
    }
};

/// Price in ticks and the two queue sizes.
struct BookState {
    long long bid_price = 0; // in ticks; the ask is one tick above
    int bid_queue = 1;
    int ask_queue = 1;

    friend bool operator==(const BookState&, const BookState&) = default;
};

struct OrderEvent {
    Side side = Side::bid;
    EventKind kind = EventKind::limit;
    int delta() const { return kind == EventKind::limit ? +1 : -1; }
};

/// Draws the type of the next event with one uniform.
inline OrderEvent draw_event(const ModelParams& params, Rng& rng) {
    const double per_side = params.lambda + params.mu + params.theta;
    double u = rng.uniform() * 2.0 * per_side;
    Side side = Side::bid;
    if (u >= per_side) {
        side = Side::ask;
        u -= per_side;
    }
    if (u < params.lambda) return {side, EventKind::limit};
    if (u < params.lambda + params.mu) return {side, EventKind::market};
    return {side, EventKind::cancel};
}

struct Transition {
    BookState state;
    int price_move = 0; // -1, 0, +1 ticks
};

/// Applies one unit event; a depletion moves the price and redraws both queues.
inline Transition apply_event(const BookState& s, const OrderEvent& ev, const ReplenishmentLaw& law, Rng& rng) {
    Transition out{s, 0};
    int& queue = ev.side == Side::ask ? out.state.ask_queue : out.state.bid_queue;
    queue += ev.delta();
    if (queue > 0) return out;
    // Events change one side by one unit, so both queues can never hit zero together.
    assert((ev.side == Side::ask ? out.state.bid_queue : out.state.ask_queue) > 0);
    const bool up = ev.side == Side::ask;
    const auto [b, a] = (up ? law.after_up : law.after_down).sample(rng.uniform());
    out.state.bid_price += up ? 1 : -1;
    out.state.bid_queue = b;
    out.state.ask_queue = a;
    out.price_move = up ? 1 : -1;
    return out;
}

struct StepResult {
    BookState state;
    double elapsed = 0.0;
    int price_move = 0;
    OrderEvent event;
};

/// One event of the chain: exponential holding time at rate 2(lambda+mu+theta),
/// then the event type, then (on depletion) the replenishment draw.
inline StepResult step(const BookState& s, const ModelParams& params, const ReplenishmentLaw& law, Rng& rng) {
    const double dt = rng.exponential(params.event_rate());
    const OrderEvent ev = draw_event(params, rng);
    const Transition t = apply_event(s, ev, law, rng);
    return {t.state, dt, t.price_move, ev};
}

/// Price-change epochs and signed moves of one simulated path.
struct PricePath {
    double initial_price = 0.0;
    double tick = 1.0;
    double horizon = 0.0; // the path is known on [0, horizon]
    std::vector<double> change_times;
    std::vector<int> moves; // +1 / -1 ticks

    std::size_t count_at(double t) const {
        return static_cast<std::size_t>(std::upper_bound(change_times.begin(), change_times.end(), t) - change_times.begin());
    }
    /// Net displacement Z_{N_t} in ticks.
    long long ticks_at(double t) const {
        const std::size_t n = count_at(t);
        long long z = 0;
        for (std::size_t i = 0; i < n; ++i) z += moves[i];
        return z;
    }
    double price_at(double t) const { return initial_price + tick * static_cast<double>(ticks_at(t)); }

    friend bool operator==(const PricePath&, const PricePath&) = default;
};

/// CSV with columns time,cumulative_price; the first row is the starting price at t = 0.
inline void write_price_path_csv(std::ostream& os, const PricePath& path) {
    os << "time,cumulative_price\n";
    os << "0," << format_double(path.initial_price) << '\n';
    long long z = 0;
    for (std::size_t i = 0; i < path.moves.size(); ++i) {
        z += path.moves[i];
        os << format_double(path.change_times[i]) << ',' << format_double(path.initial_price + path.tick * static_cast<double>(z)) << '\n';
    }
}

inline nlohmann::json price_path_json(const PricePath& path) {
    return {{"initial_price", path.initial_price},
            {"tick", path.tick},
            {"horizon", path.horizon},
            {"change_times", path.change_times},
            {"moves", path.moves}};
}

struct Horizon {
    enum class Kind { time, events, price_changes };
    Kind kind = Kind::time;
    double value = 1.0;

    static Horizon time(double seconds) { return {Kind::time, seconds}; }
    static Horizon events(std::uint64_t n) { return {Kind::events, static_cast<double>(n)}; }
    static Horizon price_changes(std::uint64_t n) { return {Kind::price_changes, static_cast<double>(n)}; }
};

struct SimConfig {
    std::uint64_t seed = 1;
    Horizon horizon;
    std::optional<BookState> initial_state; // nullopt: draw the queues from f
    double initial_price = 0.0;

    void validate() const {
        if (!(horizon.value > 0.0) || !std::isfinite(horizon.value)) throw std::invalid_argument("SimConfig: horizon must be positive");
        if (initial_state && (initial_state->bid_queue < 1 || initial_state->ask_queue < 1))
            throw std::invalid_argument("SimConfig: initial queues must be >= 1");
    }
};

namespace detail {

struct NoEventSink {
    void operator()(double, const OrderEvent&, const BookState&) const {}
};

template <class Sink>
PricePath run_path(const ModelParams& params, const ReplenishmentLaw& law, const SimConfig& cfg, std::uint64_t path_index, Sink&& sink) {
    params.validate();
    cfg.validate();
    Rng rng(cfg.seed, path_index);
    BookState state;
    if (cfg.initial_state) {
        state = *cfg.initial_state;
    } else {
        const auto [b, a] = law.after_up.sample(rng.uniform());
        state = {0, b, a};
    }
    PricePath path;
    path.initial_price = cfg.initial_price + params.tick * static_cast<double>(state.bid_price);
    path.tick = params.tick;

    const double rate = params.event_rate();
    const auto kind = cfg.horizon.kind;
    const double limit = cfg.horizon.value;
    double t = 0.0;
    std::uint64_t events = 0;
    for (;;) {
        if (kind == Horizon::Kind::events && static_cast<double>(events) >= limit) break;
        if (kind == Horizon::Kind::price_changes && static_cast<double>(path.moves.size()) >= limit) break;
        const double dt = rng.exponential(rate);
        if (kind == Horizon::Kind::time && t + dt > limit) {
            t = limit;
            break;
        }
        t += dt;
        ++events;
        const OrderEvent ev = draw_event(params, rng);
        const Transition tr = apply_event(state, ev, law, rng);
        state = tr.state;
        if (tr.price_move != 0) {
            path.change_times.push_back(t);
            path.moves.push_back(tr.price_move);
        }
        sink(t, ev, state);
    }
    path.horizon = t;
    return path;
}

} // namespace detail

/// Simulates one path. Path `path_index` uses its own RNG stream derived from
/// (cfg.seed, path_index); the same inputs always give the same path.
inline PricePath simulate(const ModelParams& params, const ReplenishmentLaw& law, const SimConfig& cfg, std::uint64_t path_index = 0) {
    return detail::run_path(params, law, cfg, path_index, detail::NoEventSink{});
}

inline PricePath simulate(const ModelParams& params, const QueueDist& f, const SimConfig& cfg, std::uint64_t path_index = 0) {
    return simulate(params, ReplenishmentLaw::from(f), cfg, path_index);
}

/// Simulates one path and records every order-book event.
inline std::pair<PricePath, std::vector<EventRecord>> simulate_with_log(const ModelParams& params, const ReplenishmentLaw& law,
                                                                        const SimConfig& cfg, std::uint64_t path_index = 0) {
    std::vector<EventRecord> log;
    const double p0 = cfg.initial_price;
    const double tick = params.tick;
    auto sink = [&](double t, const OrderEvent& ev, const BookState& s) {
        log.push_back({t, ev.side, ev.kind, s.bid_queue, s.ask_queue, p0 + tick * static_cast<double>(s.bid_price)});
    };
    PricePath path = detail::run_path(params, law, cfg, path_index, sink);
    return {std::move(path), std::move(log)};
}

struct FirstPassage {
    double duration = 0.0;
    int move = 0; // +1 if the ask queue empties first
};

/// Time until the first price change from (bid, ask) and its direction.
inline FirstPassage first_passage(const ModelParams& params, int bid, int ask, Rng& rng) {
    const double rate = params.event_rate();
    const double per_side = params.lambda + params.mu_theta();
    const double up_share = params.lambda;
    double t = 0.0;
    for (;;) {
        t += rng.exponential(rate);
        double u = rng.uniform() * 2.0 * per_side;
        int* q = &bid;
        if (u >= per_side) {
            q = &ask;
            u -= per_side;
        }
        *q += u < up_share ? 1 : -1;
        if (*q == 0) return {t, q == &ask ? 1 : -1};
    }
}

enum class Regime { balanced, unbalanced };

/// Time-scale factor: n log n (balanced) or n (unbalanced).
inline double diffusion_time_scale(std::uint64_t n, Regime regime) {
    const double x = static_cast<double>(n);
    return regime == Regime::balanced ? x * std::log(x) : x;
}

/// Rescaled price tick * Z_{N(t zeta(n))} / sqrt(n) on the grid, measured from the initial price.
inline std::vector<double> rescaled_series(const PricePath& path, std::uint64_t n, Regime regime, std::span<const double> t_grid) {
    if (n < 1) throw std::invalid_argument("rescaled_series: n must be positive");
    if (regime == Regime::balanced && n < 2) throw std::invalid_argument("rescaled_series: balanced scaling needs n >= 2");
    const double zeta = diffusion_time_scale(n, regime);
    const double norm = path.tick / std::sqrt(static_cast<double>(n));
    std::vector<double> out;
    out.reserve(t_grid.size());
    for (double t : t_grid) {
        if (!(t >= 0.0)) throw std::invalid_argument("rescaled_series: negative time");
        const double real_t = t * zeta;
        if (real_t > path.horizon * (1.0 + 1e-12))
            throw std::out_of_range("rescaled_series: path horizon " + std::to_string(path.horizon) +
                                    " is shorter than the requested time " + std::to_string(real_t));
        out.push_back(norm * static_cast<double>(path.ticks_at(real_t)));
    }
    return out;
}

} // namespace lobq
