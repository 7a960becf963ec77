// Tick-event records shared by the simulator (writer) and the estimators
// (reader). CSV header:
//
//   timestamp,side,kind,bid_queue_after,ask_queue_after,bid_price_after
//
// side is `bid` or `ask`; kind is `limit`, `market` or `cancel`.

#pragma once

#include <cstdio>
#include <cstdlib>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

namespace lobq {

enum class Side { bid, ask };
enum class EventKind { limit, market, cancel };

struct EventRecord {
    double timestamp = 0.0;
    Side side = Side::bid;
    EventKind kind = EventKind::limit;
    int bid_queue_after = 0;
    int ask_queue_after = 0;
    double bid_price_after = 0.0;

    friend bool operator==(const EventRecord&, const EventRecord&) = default;
};

inline constexpr std::string_view kEventLogHeader =
    "timestamp,side,kind,bid_queue_after,ask_queue_after,bid_price_after";

inline std::string_view to_string(Side s) { return s == Side::bid ? "bid" : "ask"; }

inline std::string_view to_string(EventKind k) {
    switch (k) {
    case EventKind::limit: return "limit";
    case EventKind::market: return "market";
    case EventKind::cancel: return "cancel";
    }
    return "?";
}

/// Shortest decimal form that reads back to the same double.
inline std::string format_double(double v) {
    char buf[32];
    for (int precision = 15; precision <= 17; ++precision) {
        std::snprintf(buf, sizeof buf, "%.*g", precision, v);
        if (std::strtod(buf, nullptr) == v) break;
    }
    return buf;
}

inline void write_event_log_csv(std::ostream& os, std::span<const EventRecord> records) {
    os << kEventLogHeader << '\n';
    for (const auto& r : records) {
        os << format_double(r.timestamp) << ',' << to_string(r.side) << ',' << to_string(r.kind) << ','
           << r.bid_queue_after << ',' << r.ask_queue_after << ',' << format_double(r.bid_price_after) << '\n';
    }
}

} // namespace lobq
