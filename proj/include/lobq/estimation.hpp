// Estimators for tick-event logs: order-flow intensities, the empirical
// replenishment law and realized volatility.
//
// Log format: see event_log.hpp. Files may be gzip-compressed.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>
#include <zlib.h>

#include "lobq/analytics.hpp"
#include "lobq/event_log.hpp"
#include "lobq/log.hpp"
#include "lobq/model.hpp"
#include "lobq/parallel.hpp"

namespace lobq {

/// Raised for unreadable or unusable input data.
class EventLogError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct MalformedRow {
    std::size_t line = 0; // 1-based line number in the file
    std::string reason;
};

struct ParseOptions {
    /// Shares per batch; queue sizes are converted to ceil(shares / batch_size).
    double batch_size = 1.0;
    /// Parsing fails when more than this fraction of data rows is malformed.
    double max_malformed_fraction = 0.01;
};

struct ParsedLog {
    std::vector<EventRecord> records;
    std::vector<MalformedRow> malformed;
    std::size_t data_rows = 0;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' || s.back() == '\n')) s.remove_suffix(1);
    return s;
}

inline bool parse_real(std::string_view s, double& out) {
    const std::string buf(s);
    if (buf.empty()) return false;
    char* end = nullptr;
    out = std::strtod(buf.c_str(), &end);
    return end == buf.c_str() + buf.size() && std::isfinite(out);
}

inline bool parse_count(std::string_view s, double& out) {
    return parse_real(s, out) && out >= 0.0;
}

/// Incremental row parser shared by the stream and gzip readers.
class LogRowParser {
public:
    explicit LogRowParser(ParseOptions opts) : opts_(opts) {
        if (!(opts_.batch_size > 0.0)) throw std::invalid_argument("parse_event_log: batch size must be positive");
    }

    void feed(std::string_view raw) {
        ++line_;
        const std::string_view row = trim(raw);
        if (row.empty() || row.front() == '#') return;
        if (!seen_header_) {
            seen_header_ = true;
            if (row == kEventLogHeader) return;
            throw EventLogError("parse_event_log: line " + std::to_string(line_) + ": expected header '" + std::string(kEventLogHeader) + "'");
        }
        ++out_.data_rows;
        std::string reason;
        if (auto rec = parse_row(row, reason)) {
            if (!out_.records.empty() && rec->timestamp < out_.records.back().timestamp) {
                out_.malformed.push_back({line_, "timestamp decreases"});
                return;
            }
            out_.records.push_back(*rec);
        } else {
            out_.malformed.push_back({line_, reason});
        }
    }

    ParsedLog finish() {
        const double bad = static_cast<double>(out_.malformed.size());
        if (out_.data_rows > 0 && bad > opts_.max_malformed_fraction * static_cast<double>(out_.data_rows)) {
            std::ostringstream msg;
            msg << "parse_event_log: " << out_.malformed.size() << " of " << out_.data_rows << " rows malformed";
            const std::size_t shown = std::min<std::size_t>(out_.malformed.size(), 5);
            for (std::size_t i = 0; i < shown; ++i) msg << "; line " << out_.malformed[i].line << ": " << out_.malformed[i].reason;
            throw EventLogError(msg.str());
        }
        for (const auto& m : out_.malformed) log_warning("parse_event_log: skipped line " + std::to_string(m.line) + ": " + m.reason);
        return std::move(out_);
    }

private:
    std::optional<EventRecord> parse_row(std::string_view row, std::string& reason) const {
        std::string_view fields[6];
        std::size_t count = 0;
        while (true) {
            const auto comma = row.find(',');
            if (count == 6) {
                reason = "too many fields";
                return std::nullopt;
            }
            fields[count++] = trim(row.substr(0, comma));
            if (comma == std::string_view::npos) break;
            row.remove_prefix(comma + 1);
        }
        if (count != 6) {
            reason = "expected 6 fields";
            return std::nullopt;
        }
        EventRecord r;
        double bq = 0.0, aq = 0.0;
        if (!parse_real(fields[0], r.timestamp)) {
            reason = "bad timestamp";
            return std::nullopt;
        }
        if (fields[1] == "bid") r.side = Side::bid;
        else if (fields[1] == "ask") r.side = Side::ask;
        else {
            reason = "bad side";
            return std::nullopt;
        }
        if (fields[2] == "limit") r.kind = EventKind::limit;
        else if (fields[2] == "market") r.kind = EventKind::market;
        else if (fields[2] == "cancel") r.kind = EventKind::cancel;
        else {
            reason = "bad kind";
            return std::nullopt;
        }
        if (!parse_count(fields[3], bq) || !parse_count(fields[4], aq)) {
            reason = "bad queue size";
            return std::nullopt;
        }
        if (!parse_real(fields[5], r.bid_price_after)) {
            reason = "bad price";
            return std::nullopt;
        }
        if (opts_.batch_size == 1.0 && (bq != std::floor(bq) || aq != std::floor(aq))) {
            reason = "queue size is not an integer";
            return std::nullopt;
        }
        const double bb = std::ceil(bq / opts_.batch_size);
        const double ab = std::ceil(aq / opts_.batch_size);
        if (bb > 1e9 || ab > 1e9) {
            reason = "queue size out of range";
            return std::nullopt;
        }
        r.bid_queue_after = static_cast<int>(bb);
        r.ask_queue_after = static_cast<int>(ab);
        return r;
    }

    ParseOptions opts_;
    ParsedLog out_;
    std::size_t line_ = 0;
    bool seen_header_ = false;
};

} // namespace detail

/// Parses an event log from a stream in one pass. Lines starting with # are skipped;
/// an empty stream gives no records.
inline ParsedLog parse_event_log(std::istream& in, const ParseOptions& opts = {}) {
    detail::LogRowParser parser(opts);
    std::string line;
    while (std::getline(in, line)) parser.feed(line);
    if (in.bad()) throw EventLogError("parse_event_log: read error");
    return parser.finish();
}

/// Parses an event log file; gzip input is detected and decompressed transparently.
inline ParsedLog parse_event_log_file(const std::string& path, const ParseOptions& opts = {}) {
    gzFile file = gzopen(path.c_str(), "rb");
    if (file == nullptr) throw EventLogError("parse_event_log: cannot open '" + path + "'");
    detail::LogRowParser parser(opts);
    std::string pending;
    char buf[1 << 16];
    try {
        for (;;) {
            const int got = gzread(file, buf, sizeof buf);
            if (got < 0) {
                int errnum = 0;
                throw EventLogError("parse_event_log: read error in '" + path + "': " + gzerror(file, &errnum));
            }
            if (got == 0) break;
            pending.append(buf, static_cast<std::size_t>(got));
            std::size_t start = 0;
            for (std::size_t nl; (nl = pending.find('\n', start)) != std::string::npos; start = nl + 1)
                parser.feed(std::string_view(pending).substr(start, nl - start));
            pending.erase(0, start);
        }
    } catch (...) {
        gzclose(file);
        throw;
    }
    gzclose(file);
    if (!pending.empty()) parser.feed(pending);
    return parser.finish();
}

/// Writes an event log; paths ending in ".gz" are gzip-compressed. Each comment
/// line is written as "# <comment>" before the header.
inline void write_event_log_file(const std::string& path, std::span<const EventRecord> records,
                                 std::span<const std::string> comments = {}) {
    std::ostringstream text;
    for (const auto& c : comments) text << "# " << c << '\n';
    write_event_log_csv(text, records);
    const std::string data = text.str();
    const bool gz = path.size() >= 3 && path.compare(path.size() - 3, 3, ".gz") == 0;
    gzFile file = gzopen(path.c_str(), gz ? "wb" : "wbT");
    if (file == nullptr) throw EventLogError("write_event_log: cannot open '" + path + "'");
    std::size_t offset = 0;
    while (offset < data.size()) {
        const auto chunk = static_cast<unsigned>(std::min<std::size_t>(data.size() - offset, 1u << 20));
        if (gzwrite(file, data.data() + offset, chunk) != static_cast<int>(chunk)) {
            gzclose(file);
            throw EventLogError("write_event_log: write error on '" + path + "'");
        }
        offset += chunk;
    }
    if (gzclose(file) != Z_OK) throw EventLogError("write_event_log: close failed on '" + path + "'");
}

// ---------------------------------------------------------------------------
// Intensities

struct SideCounts {
    std::size_t limit = 0;
    std::size_t market = 0;
    std::size_t cancel = 0;
    std::size_t removals() const { return market + cancel; }
};

struct IntensityEstimate {
    double t_start = 0.0;
    double t_end = 0.0;
    SideCounts bid;
    SideCounts ask;
    double lambda_bid = 0.0;
    double lambda_ask = 0.0;
    double mu_theta_bid = 0.0;
    double mu_theta_ask = 0.0;
    double lambda_hat = 0.0;   // average over the two sides
    double mu_theta_hat = 0.0; // average over the two sides
    double lambda_se = 0.0;    // Poisson standard errors
    double mu_theta_se = 0.0;
    std::optional<double> balance_diagnostic; // |mu_theta_hat - lambda_hat| / lambda_hat

    double elapsed() const { return t_end - t_start; }
};

struct IntensityOptions {
    /// Sample window; defaults to the first and last timestamps of the log.
    std::optional<std::pair<double, double>> window;
};

/// Counts per side and kind divided by the window length, then averaged over the sides.
inline IntensityEstimate estimate_intensities(std::span<const EventRecord> log, const IntensityOptions& opts = {}) {
    if (log.empty()) throw EventLogError("estimate_intensities: empty log");
    IntensityEstimate e;
    if (opts.window) {
        std::tie(e.t_start, e.t_end) = *opts.window;
    } else {
        e.t_start = log.front().timestamp;
        e.t_end = log.back().timestamp;
    }
    const double T = e.elapsed();
    if (!(T > 0.0) || !std::isfinite(T)) throw EventLogError("estimate_intensities: sample window must have positive length");
    std::size_t used = 0;
    for (const auto& r : log) {
        if (r.timestamp < e.t_start || r.timestamp > e.t_end) continue;
        ++used;
        SideCounts& c = r.side == Side::bid ? e.bid : e.ask;
        switch (r.kind) {
        case EventKind::limit: ++c.limit; break;
        case EventKind::market: ++c.market; break;
        case EventKind::cancel: ++c.cancel; break;
        }
    }
    if (used == 0) throw EventLogError("estimate_intensities: no events inside the sample window");
    e.lambda_bid = static_cast<double>(e.bid.limit) / T;
    e.lambda_ask = static_cast<double>(e.ask.limit) / T;
    e.mu_theta_bid = static_cast<double>(e.bid.removals()) / T;
    e.mu_theta_ask = static_cast<double>(e.ask.removals()) / T;
    const double limits = static_cast<double>(e.bid.limit + e.ask.limit);
    const double removals = static_cast<double>(e.bid.removals() + e.ask.removals());
    e.lambda_hat = limits / (2.0 * T);
    e.mu_theta_hat = removals / (2.0 * T);
    e.lambda_se = std::sqrt(limits) / (2.0 * T);
    e.mu_theta_se = std::sqrt(removals) / (2.0 * T);
    if (e.lambda_hat > 0.0) e.balance_diagnostic = std::abs(e.mu_theta_hat - e.lambda_hat) / e.lambda_hat;
    if (removals == 0.0) log_warning("estimate_intensities: no market orders or cancellations; mu+theta estimate is 0");
    if (limits == 0.0) log_warning("estimate_intensities: no limit orders; lambda estimate is 0");
    return e;
}

// ---------------------------------------------------------------------------
// Replenishment law

struct ReplenishmentOptions {
    /// Also use down-moves, with the queues swapped (assumes f~(x, y) = f(y, x)).
    bool pool_swapped = false;
    /// Tick size; inferred as the smallest nonzero price change when unset.
    std::optional<double> tick;
};

struct ReplenishmentEstimate {
    QueueDist f_hat = QueueDist::point_mass(1, 1);
    double tick = 1.0;
    std::size_t up_moves = 0;   // one-tick increases used
    std::size_t down_moves = 0; // one-tick decreases (used only when pooling)
    std::size_t multi_tick_jumps = 0;
    std::size_t empty_queue_rows = 0; // one-tick moves followed by an empty queue, skipped
    bool pooled = false;
    double asymmetry = 0.0; // sum over ask >= bid of f_hat
};

/// Smallest positive absolute change of bid_price_after between consecutive rows.
inline std::optional<double> infer_tick(std::span<const EventRecord> log) {
    std::optional<double> tick;
    for (std::size_t i = 1; i < log.size(); ++i) {
        const double d = std::abs(log[i].bid_price_after - log[i - 1].bid_price_after);
        if (d > 0.0 && (!tick || d < *tick)) tick = d;
    }
    if (tick) {
        // Drop decimal representation noise from differences of prices.
        const double scale = std::pow(10.0, 9 - static_cast<int>(std::floor(std::log10(*tick))));
        tick = std::round(*tick * scale) / scale;
    }
    return tick;
}

/// Histogram of (bid_queue_after, ask_queue_after) right after one-tick price increases.
inline ReplenishmentEstimate estimate_replenishment(std::span<const EventRecord> log, const ReplenishmentOptions& opts = {}) {
    ReplenishmentEstimate out;
    const auto tick = opts.tick ? opts.tick : infer_tick(log);
    if (!tick) throw EventLogError("estimate_replenishment: no price changes found");
    if (!(*tick > 0.0)) throw std::invalid_argument("estimate_replenishment: tick must be positive");
    out.tick = *tick;
    out.pooled = opts.pool_swapped;
    std::map<std::pair<int, int>, double> counts;
    for (std::size_t i = 1; i < log.size(); ++i) {
        const double d = log[i].bid_price_after - log[i - 1].bid_price_after;
        if (d == 0.0) continue;
        const double ticks = std::round(std::abs(d) / out.tick);
        if (ticks != 1.0) {
            ++out.multi_tick_jumps;
            continue;
        }
        const int b = log[i].bid_queue_after;
        const int a = log[i].ask_queue_after;
        if (d > 0.0) {
            if (b < 1 || a < 1) {
                ++out.empty_queue_rows;
                continue;
            }
            ++out.up_moves;
            counts[{b, a}] += 1.0;
        } else {
            if (!opts.pool_swapped) continue;
            if (b < 1 || a < 1) {
                ++out.empty_queue_rows;
                continue;
            }
            ++out.down_moves;
            counts[{a, b}] += 1.0;
        }
    }
    if (out.multi_tick_jumps > 0)
        log_warning("estimate_replenishment: " + std::to_string(out.multi_tick_jumps) + " multi-tick price jumps excluded");
    if (counts.empty()) throw EventLogError("estimate_replenishment: no price changes found");
    std::vector<QueueAtom> w;
    w.reserve(counts.size());
    for (const auto& [key, c] : counts) w.push_back({key.first, key.second, c});
    out.f_hat = QueueDist::from_weights(w);
    out.asymmetry = asymmetry_mass(out.f_hat);
    return out;
}

/// f as sparse CSV with header i,j,p (i the bid queue, j the ask queue).
inline void write_queue_dist_csv(std::ostream& os, const QueueDist& f) {
    os << "i,j,p\n";
    for (const auto& a : f.atoms()) os << a.bid << ',' << a.ask << ',' << format_double(a.p) << '\n';
}

/// Reads the i,j,p CSV written by write_queue_dist_csv; weights are renormalised.
inline QueueDist read_queue_dist_csv(std::istream& in) {
    std::string line;
    std::vector<QueueAtom> w;
    std::size_t line_no = 0;
    bool header = false;
    while (std::getline(in, line)) {
        ++line_no;
        const auto row = detail::trim(line);
        if (row.empty() || row.front() == '#') continue;
        if (!header) {
            header = true;
            if (row == "i,j,p") continue;
        }
        double i = 0, j = 0, p = 0;
        std::string_view rest = row;
        std::string_view parts[3];
        for (int k = 0; k < 3; ++k) {
            const auto comma = rest.find(',');
            if ((comma == std::string_view::npos) != (k == 2)) throw EventLogError("queue distribution CSV: line " + std::to_string(line_no) + ": expected i,j,p");
            parts[k] = detail::trim(rest.substr(0, comma));
            if (comma != std::string_view::npos) rest.remove_prefix(comma + 1);
        }
        if (!detail::parse_count(parts[0], i) || !detail::parse_count(parts[1], j) || !detail::parse_count(parts[2], p) ||
            i != std::floor(i) || j != std::floor(j))
            throw EventLogError("queue distribution CSV: line " + std::to_string(line_no) + ": bad values");
        w.push_back({static_cast<int>(i), static_cast<int>(j), p});
    }
    if (w.empty()) throw EventLogError("queue distribution CSV: no rows");
    return QueueDist::from_weights(w);
}

// ---------------------------------------------------------------------------
// Volatility

/// Piecewise-constant price series: prices[i] holds from times[i] until times[i + 1].
struct PriceSeries {
    std::vector<double> times;
    std::vector<double> prices;
    double t_end = 0.0; // series known up to here

    double at(double t) const {
        const auto it = std::upper_bound(times.begin(), times.end(), t);
        if (it == times.begin()) throw std::out_of_range("PriceSeries: time before the first observation");
        return prices[static_cast<std::size_t>(it - times.begin()) - 1];
    }

    static PriceSeries from_log(std::span<const EventRecord> log) {
        PriceSeries s;
        for (const auto& r : log) {
            if (!s.prices.empty() && s.prices.back() == r.bid_price_after) continue;
            s.times.push_back(r.timestamp);
            s.prices.push_back(r.bid_price_after);
        }
        if (!log.empty()) s.t_end = log.back().timestamp;
        return s;
    }

    static PriceSeries from_path(const PricePath& path) {
        PriceSeries s;
        s.times.push_back(0.0);
        s.prices.push_back(path.initial_price);
        long long z = 0;
        for (std::size_t i = 0; i < path.moves.size(); ++i) {
            z += path.moves[i];
            s.times.push_back(path.change_times[i]);
            s.prices.push_back(path.initial_price + path.tick * static_cast<double>(z));
        }
        s.t_end = path.horizon;
        return s;
    }
};

/// Sample standard deviation of price increments over consecutive non-overlapping windows
/// starting at the first observation.
inline double realized_volatility(const PriceSeries& series, double window) {
    if (!(window > 0.0)) throw std::invalid_argument("realized_volatility: window must be positive");
    if (series.times.empty() || series.times.size() != series.prices.size())
        throw EventLogError("realized_volatility: empty price series");
    const double t0 = series.times.front();
    const auto windows = static_cast<std::size_t>(std::floor((series.t_end - t0) / window));
    if (windows < 2) throw EventLogError("realized_volatility: series spans fewer than 2 windows");
    std::vector<double> inc(windows);
    double prev = series.at(t0);
    for (std::size_t k = 0; k < windows; ++k) {
        const double next = series.at(t0 + static_cast<double>(k + 1) * window);
        inc[k] = next - prev;
        prev = next;
    }
    double mean = 0.0;
    for (double v : inc) mean += v;
    mean /= static_cast<double>(windows);
    double ss = 0.0;
    for (double v : inc) ss += (v - mean) * (v - mean);
    return std::sqrt(ss / static_cast<double>(windows - 1));
}

/// Estimates from one log: intensities, f_hat and the volatility comparison.
struct VolatilityComparison {
    std::string name;
    IntensityEstimate intensities;
    ReplenishmentEstimate replenishment;
    double window = 0.0;
    double depth = 0.0;               // D(f_hat)
    double predictor = 0.0;           // sqrt(lambda_hat / D(f_hat))
    double realized = 0.0;            // realized volatility over `window`
    double ratio = 0.0;               // realized / predictor
    double orders_in_window = 0.0;    // n with n log n = window
    double expected_ratio = 0.0;      // tick sqrt(pi n)
    double predicted_volatility = 0.0; // tick sqrt(n pi lambda_hat / D(f_hat))
};

struct ComparisonOptions {
    ReplenishmentOptions replenishment{true, std::nullopt};
    IntensityOptions intensities;
};

inline VolatilityComparison predicted_vs_realized(std::span<const EventRecord> log, double window, const ComparisonOptions& opts = {},
                                                  std::string name = "asset") {
    if (log.empty()) throw EventLogError("predicted_vs_realized: empty log");
    VolatilityComparison c;
    c.name = std::move(name);
    c.window = window;
    c.intensities = estimate_intensities(log, opts.intensities);
    c.replenishment = estimate_replenishment(log, opts.replenishment);
    c.depth = depth(c.replenishment.f_hat);
    c.predictor = std::sqrt(c.intensities.lambda_hat / c.depth);
    c.realized = realized_volatility(PriceSeries::from_log(log), window);
    c.ratio = c.realized / c.predictor;
    c.orders_in_window = orders_for_window(window);
    c.expected_ratio = c.replenishment.tick * std::sqrt(kPi * c.orders_in_window);
    c.predicted_volatility = c.expected_ratio * c.predictor;
    return c;
}

/// One comparison per asset, computed in parallel, in input order.
inline std::vector<VolatilityComparison> predicted_vs_realized(std::span<const std::pair<std::string, std::vector<EventRecord>>> assets,
                                                               double window, const ComparisonOptions& opts = {}) {
    return parallel_map<VolatilityComparison>(assets.size(), [&](std::size_t i) {
        return predicted_vs_realized(assets[i].second, window, opts, assets[i].first);
    });
}

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::json queue_dist_json(const QueueDist& f) {
    auto rows = nlohmann::json::array();
    for (const auto& a : f.atoms()) rows.push_back({a.bid, a.ask, a.p});
    return rows;
}

inline nlohmann::json to_json(const IntensityEstimate& e) {
    auto side = [](const SideCounts& c, double lam, double mt) {
        return nlohmann::json{{"limit", c.limit}, {"market", c.market}, {"cancel", c.cancel}, {"lambda", lam}, {"mu_theta", mt}};
    };
    return {{"lambda_hat", e.lambda_hat},
            {"mu_theta_hat", e.mu_theta_hat},
            {"lambda_se", e.lambda_se},
            {"mu_theta_se", e.mu_theta_se},
            {"balance_diagnostic", e.balance_diagnostic ? nlohmann::json(*e.balance_diagnostic) : nlohmann::json(nullptr)},
            {"sample_window", {e.t_start, e.t_end}},
            {"event_counts",
             {{"limit", e.bid.limit + e.ask.limit}, {"market", e.bid.market + e.ask.market}, {"cancel", e.bid.cancel + e.ask.cancel}}},
            {"per_side", {{"bid", side(e.bid, e.lambda_bid, e.mu_theta_bid)}, {"ask", side(e.ask, e.lambda_ask, e.mu_theta_ask)}}}};
}

inline nlohmann::json to_json(const ReplenishmentEstimate& r) {
    return {{"f_hat", queue_dist_json(r.f_hat)},
            {"tick", r.tick},
            {"up_moves", r.up_moves},
            {"down_moves", r.down_moves},
            {"multi_tick_jumps", r.multi_tick_jumps},
            {"empty_queue_rows", r.empty_queue_rows},
            {"pooled_swapped_down_moves", r.pooled},
            {"asymmetry_mass", r.asymmetry},
            {"depth", depth(r.f_hat)}};
}

/// EstimationResult document: intensities with the fitted f_hat.
inline nlohmann::json estimation_result_json(const IntensityEstimate& e, const ReplenishmentEstimate& r) {
    auto j = to_json(e);
    j["replenishment"] = to_json(r);
    j["f_hat"] = std::move(j["replenishment"]["f_hat"]);
    j["replenishment"].erase("f_hat");
    return j;
}

inline nlohmann::json to_json(const VolatilityComparison& c) {
    return {{"name", c.name},
            {"window", c.window},
            {"lambda_hat", c.intensities.lambda_hat},
            {"mu_theta_hat", c.intensities.mu_theta_hat},
            {"depth", c.depth},
            {"predictor", c.predictor},
            {"realized_volatility", c.realized},
            {"ratio", c.ratio},
            {"orders_in_window", c.orders_in_window},
            {"expected_ratio", c.expected_ratio},
            {"predicted_volatility", c.predicted_volatility},
            {"tick", c.replenishment.tick}};
}

} // namespace lobq
