#pragma once

#include <CLI11.hpp>

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lobq/analytics.hpp"
#include "lobq/estimation.hpp"
#include "lobq/model.hpp"
#include "lobq/parallel.hpp"
#include "lobq/xval.hpp"

namespace lobq::cli {

enum ExitCode : int { exit_ok = 0, exit_runtime = 1, exit_usage = 2, exit_xval_failed = 3 };

/// Bad or missing arguments detected after parsing.
class UsageError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Everything one invocation may use; each subcommand binds the fields it needs.
struct RunConfig {
    std::string subcommand;

    // model
    double lambda = 1.0;
    double mu = 1.0;
    double theta = 0.0;
    std::optional<double> mu_theta;
    double tick = 1.0;
    std::string f;
    std::string f_down;

    // output
    std::string format = "csv";
    std::string output;
    std::uint64_t seed = 1;

    // grids and queues
    std::string t_grid;
    std::string n_grid = "1:20";
    std::string p_grid = "1:20";
    int bid = 0;
    int ask = 0;
    int truncation = 400;
    int lags = 5;

    // simulate
    std::optional<double> horizon_time;
    std::optional<std::uint64_t> horizon_events;
    std::optional<std::uint64_t> horizon_moves;
    double initial_price = 0.0;
    std::string event_log;

    // estimate and vol
    std::vector<std::string> logs;
    double batch_size = 1.0;
    double max_malformed = 0.01;
    std::string time_window;
    bool pool_swapped = true;
    std::optional<double> price_tick;
    std::string f_out;
    std::optional<double> window;

    // xval
    std::uint64_t suite_seed = 20240607;
    double mc_scale = 1.0;
    std::string criteria = "1:8";

    ModelParams params() const {
        ModelParams p{lambda, mu, theta, tick};
        if (mu_theta) {
            p.mu = *mu_theta;
            p.theta = 0.0;
        }
        p.validate();
        return p;
    }
};

namespace detail {

inline std::string trimmed(std::string s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> parts;
    std::string item;
    std::istringstream in(s);
    while (std::getline(in, item, sep)) parts.push_back(trimmed(item));
    return parts;
}

inline double to_real(const std::string& s, const std::string& what) {
    double v = 0.0;
    if (!lobq::detail::parse_real(s, v)) throw UsageError(what + ": '" + s + "' is not a number");
    return v;
}

inline int to_int(const std::string& s, const std::string& what) {
    const double v = to_real(s, what);
    if (v != std::floor(v) || std::abs(v) > 1e9) throw UsageError(what + ": '" + s + "' is not an integer");
    return static_cast<int>(v);
}

} // namespace detail

/// Real grid: "lo:hi:step", "log:lo:hi:points_per_decade" or a comma list.
inline std::vector<double> parse_real_grid(const std::string& spec, const std::string& what) {
    if (detail::trimmed(spec).empty()) throw UsageError(what + ": grid is required");
    const auto parts = detail::split(spec, ':');
    std::vector<double> grid;
    if (parts.size() == 4 && parts[0] == "log") {
        const double lo = detail::to_real(parts[1], what), hi = detail::to_real(parts[2], what);
        const int per = detail::to_int(parts[3], what);
        if (!(lo > 0.0) || !(hi >= lo) || per < 1) throw UsageError(what + ": log grid needs 0 < lo <= hi and points per decade >= 1");
        grid = log_grid(lo, hi, per);
    } else if (parts.size() == 3) {
        const double lo = detail::to_real(parts[0], what), hi = detail::to_real(parts[1], what), step = detail::to_real(parts[2], what);
        if (!(step > 0.0) || !(hi >= lo)) throw UsageError(what + ": range needs lo <= hi and step > 0");
        const double count = std::floor((hi - lo) / step * (1.0 + 1e-12) + 1e-9);
        if (count > 1e7) throw UsageError(what + ": more than 1e7 grid points");
        for (std::int64_t k = 0; k <= static_cast<std::int64_t>(count); ++k) grid.push_back(lo + static_cast<double>(k) * step);
    } else if (parts.size() == 1) {
        for (const auto& item : detail::split(spec, ',')) grid.push_back(detail::to_real(item, what));
    } else {
        throw UsageError(what + ": expected lo:hi:step, log:lo:hi:per_decade or a comma list");
    }
    for (double t : grid)
        if (!std::isfinite(t)) throw UsageError(what + ": grid values must be finite");
    return grid;
}

/// Integer grid: "lo:hi", "lo:hi:step" or a comma list.
inline std::vector<int> parse_int_grid(const std::string& spec, const std::string& what) {
    if (detail::trimmed(spec).empty()) throw UsageError(what + ": grid is required");
    const auto parts = detail::split(spec, ':');
    std::vector<int> grid;
    if (parts.size() == 2 || parts.size() == 3) {
        const int lo = detail::to_int(parts[0], what), hi = detail::to_int(parts[1], what);
        const int step = parts.size() == 3 ? detail::to_int(parts[2], what) : 1;
        if (step < 1 || hi < lo) throw UsageError(what + ": range needs lo <= hi and step >= 1");
        for (int v = lo; v <= hi; v += step) grid.push_back(v);
    } else if (parts.size() == 1) {
        for (const auto& item : detail::split(spec, ',')) grid.push_back(detail::to_int(item, what));
    } else {
        throw UsageError(what + ": expected lo:hi[:step] or a comma list");
    }
    return grid;
}

/// f from an i,j,p CSV file, or inline as "i:j:p[,i:j:p...]" (weights are normalised).
inline QueueDist parse_queue_dist(const std::string& spec, const std::string& what = "--f") {
    if (detail::trimmed(spec).empty()) throw UsageError(what + " is required");
    if (std::filesystem::is_regular_file(spec)) {
        std::ifstream in(spec);
        if (!in) throw std::runtime_error(what + ": cannot open '" + spec + "'");
        return read_queue_dist_csv(in);
    }
    std::vector<QueueAtom> weights;
    for (const auto& atom : detail::split(spec, ',')) {
        const auto f = detail::split(atom, ':');
        if (f.size() != 3) throw UsageError(what + ": '" + spec + "' is neither a file nor i:j:p[,i:j:p...]");
        weights.push_back({detail::to_int(f[0], what), detail::to_int(f[1], what), detail::to_real(f[2], what)});
    }
    return QueueDist::from_weights(weights);
}

/// Accepts JSON (first character '{') or TOML. Keys outside any section go to the
/// active subcommand unless they name a global option.
class ConfigFile : public CLI::ConfigTOML {
public:
    explicit ConfigFile(const CLI::App& root) : root_(&root) {}

    std::vector<CLI::ConfigItem> from_config(std::istream& in) const override {
        const std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
        const auto first = text.find_first_not_of(" \t\r\n");
        std::vector<CLI::ConfigItem> items;
        if (first != std::string::npos && text[first] == '{') {
            nlohmann::json doc;
            try {
                doc = nlohmann::json::parse(text);
            } catch (const nlohmann::json::parse_error& e) {
                throw CLI::ConfigError(std::string("config: invalid JSON: ") + e.what());
            }
            flatten(doc, {}, items);
        } else {
            std::istringstream toml(text);
            items = CLI::ConfigTOML::from_config(toml);
        }
        const auto active = root_->get_subcommands();
        if (active.empty()) return items;
        for (auto& item : items)
            if (item.parents.empty() && item.name != "++" && item.name != "--" && root_->get_option_no_throw("--" + item.name) == nullptr)
                item.parents = {active.front()->get_name()};
        return items;
    }

private:
    static std::string scalar(const nlohmann::json& v) {
        if (v.is_string()) return v.get<std::string>();
        if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
        if (v.is_number()) return v.dump();
        throw CLI::ConfigError("config: unsupported JSON value " + v.dump());
    }

    static void flatten(const nlohmann::json& node, std::vector<std::string> parents, std::vector<CLI::ConfigItem>& out) {
        if (!node.is_object()) throw CLI::ConfigError("config: expected a JSON object");
        for (const auto& [key, value] : node.items()) {
            if (value.is_null()) continue;
            if (value.is_object()) {
                auto sub = parents;
                sub.push_back(key);
                flatten(value, sub, out);
                continue;
            }
            CLI::ConfigItem item;
            item.parents = parents;
            item.name = key;
            if (value.is_array())
                for (const auto& v : value) item.inputs.push_back(scalar(v));
            else
                item.inputs.push_back(scalar(value));
            out.push_back(std::move(item));
        }
    }

    const CLI::App* root_;
};

/// Resolved option values of a subcommand (command line, then config file, then defaults).
inline nlohmann::json resolved_config(const CLI::App& sub) {
    auto typed = [](const std::string& s) -> nlohmann::json {
        if (s == "true") return true;
        if (s == "false") return false;
        std::int64_t i = 0;
        const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), i);
        if (ec == std::errc() && end == s.data() + s.size()) return i;
        double v = 0.0;
        if (!s.empty() && lobq::detail::parse_real(s, v)) return v;
        return s;
    };
    nlohmann::json j = nlohmann::json::object();
    j["subcommand"] = sub.get_name();
    for (const CLI::Option* op : sub.get_options()) {
        const std::string name = op->get_single_name();
        if (op == sub.get_help_ptr() || name == "output") continue;
        if (op->get_expected_min() == 0) {
            const auto def = op->get_default_str();
            j[name] = op->count() > 0 ? op->as<bool>() : (def == "1" || def == "true");
            continue;
        }
        const auto& results = op->results();
        const bool many = op->get_items_expected_max() > 1;
        if (op->count() == 0 && many) {
            j[name] = nlohmann::json::array();
        } else if (op->count() == 0) {
            const auto def = op->get_default_str();
            j[name] = def.empty() ? nlohmann::json(nullptr) : typed(def);
        } else if (results.size() == 1 && !many) {
            j[name] = typed(results.front());
        } else {
            auto arr = nlohmann::json::array();
            for (const auto& r : results) arr.push_back(typed(r));
            j[name] = arr;
        }
    }
    if (j.contains("mu-theta") && !j["mu-theta"].is_null()) {
        j["mu"] = j["mu-theta"];
        j["theta"] = 0;
    }
    return j;
}

namespace detail {

inline void emit(const RunConfig& cfg, std::ostream& out, const std::string& text) {
    if (cfg.output.empty()) {
        out << text;
        out.flush();
        return;
    }
    std::ofstream file(cfg.output, std::ios::binary);
    if (!file) throw std::runtime_error("cannot open output '" + cfg.output + "'");
    file << text;
    if (!file) throw std::runtime_error("write failed on '" + cfg.output + "'");
}

inline std::string csv_preamble(const nlohmann::json& echo) { return "# config: " + echo.dump() + "\n"; }

inline std::string json_text(const nlohmann::json& j) { return j.dump(2) + "\n"; }

inline std::string num(double v) { return format_double(v); }

inline std::pair<int, int> queues(const RunConfig& cfg) {
    if (cfg.bid < 1 || cfg.ask < 1) throw UsageError("--bid and --ask must be >= 1");
    return {cfg.bid, cfg.ask};
}

} // namespace detail

inline void cmd_duration(const RunConfig& cfg, const nlohmann::json& echo, std::ostream& out) {
    const auto params = cfg.params();
    const auto [bid, ask] = detail::queues(cfg);
    const auto t = parse_real_grid(cfg.t_grid, "--t-grid");
    for (double v : t)
        if (v < 0.0) throw UsageError("--t-grid: times must be >= 0");
    const auto survival = survival_duration_curve(bid, ask, t, params);
    std::optional<TailLaw> tail;
    if (params.lambda <= params.mu_theta() || params.balanced()) tail = tail_law(bid, ask, params);
    auto asymptote = [&](double x) {
        if (!tail) return std::numeric_limits<double>::quiet_NaN();
        return tail->prefactor * std::pow(x, -tail->exponent);
    };
    if (cfg.format == "json") {
        std::vector<double> tails;
        for (double x : t) tails.push_back(asymptote(x));
        nlohmann::json j{{"config", echo}, {"t", t}, {"survival", survival}};
        if (tail) {
            j["tail_asymptote"] = tails;
            j["tail_law"] = {{"exponent", tail->exponent}, {"prefactor", tail->prefactor}};
        }
        detail::emit(cfg, out, detail::json_text(j));
        return;
    }
    std::ostringstream csv;
    csv << detail::csv_preamble(echo) << "t,survival,tail_asymptote\n";
    for (std::size_t i = 0; i < t.size(); ++i) csv << detail::num(t[i]) << ',' << detail::num(survival[i]) << ',' << detail::num(asymptote(t[i])) << '\n';
    detail::emit(cfg, out, csv.str());
}

inline void cmd_prob_up(const RunConfig& cfg, const nlohmann::json& echo, std::ostream& out) {
    const auto params = cfg.params();
    const auto ns = parse_int_grid(cfg.n_grid, "--n-grid");
    const auto ps = parse_int_grid(cfg.p_grid, "--p-grid");
    int max_queue = 0;
    for (int v : ns) max_queue = std::max(max_queue, v);
    for (int v : ps) max_queue = std::max(max_queue, v);
    if (*std::min_element(ns.begin(), ns.end()) < 1 || *std::min_element(ps.begin(), ps.end()) < 1)
        throw UsageError("--n-grid, --p-grid: queue sizes must be >= 1");
    if (cfg.truncation < 2 * max_queue) throw UsageError("--truncation must be at least twice the largest queue");

    const std::size_t cols = ps.size();
    std::vector<double> phi;
    std::vector<double> sensitivity;
    if (params.balanced()) {
        phi = parallel_map<double>(ns.size() * cols, [&](std::size_t k) { return prob_up_balanced(ns[k / cols], ps[k % cols]); });
    } else {
        const auto tables = HittingTablePair::solve(params, cfg.truncation, max_queue);
        for (int n : ns)
            for (int p : ps) {
                phi.push_back(tables.best().at(n, p));
                sensitivity.push_back(tables.sensitivity(n, p));
            }
    }
    if (cfg.format == "json") {
        nlohmann::json j{{"config", echo}, {"n", ns}, {"p", ps}, {"phi", phi}, {"method", params.balanced() ? "integral" : "dirichlet"}};
        if (!sensitivity.empty()) j["truncation_sensitivity"] = sensitivity;
        detail::emit(cfg, out, detail::json_text(j));
        return;
    }
    std::ostringstream csv;
    csv << detail::csv_preamble(echo) << "n,p,phi\n";
    for (std::size_t k = 0; k < phi.size(); ++k) csv << ns[k / cols] << ',' << ps[k % cols] << ',' << detail::num(phi[k]) << '\n';
    detail::emit(cfg, out, csv.str());
}

inline void cmd_price_stats(const RunConfig& cfg, const nlohmann::json& echo, std::ostream& out) {
    const auto params = cfg.params();
    const auto f = parse_queue_dist(cfg.f);
    const auto [bid, ask] = detail::queues(cfg);
    if (cfg.lags < 1) throw UsageError("--lags must be >= 1");
    const double pc = p_cont(f, params, cfg.truncation);
    const double p1 = prob_first_up(bid, ask, params);
    std::vector<double> pn, cov;
    for (int k = 1; k <= cfg.lags; ++k) {
        pn.push_back(p_n_from(k, p1, pc));
        cov.push_back(autocov_from(k, pc));
    }
    nlohmann::json j{{"config", echo},
                     {"p_cont", pc},
                     {"asymmetry_mass", asymmetry_mass(f)},
                     {"depth", depth(f)},
                     {"prob_first_up", p1},
                     {"p_n", pn},
                     {"autocov", cov}};
    if (params.balanced()) {
        j["regime"] = "balanced";
        j["vol"] = vol_balanced(params, f);
    } else if (params.lambda < params.mu_theta()) {
        j["regime"] = "unbalanced";
        j["expected_duration_f"] = expected_duration_f(f, params);
        j["vol"] = vol_unbalanced(params, f);
    } else {
        j["regime"] = "lambda > mu + theta";
    }
    detail::emit(cfg, out, detail::json_text(j));
}

inline void cmd_simulate(const RunConfig& cfg, const nlohmann::json& echo, std::ostream& out) {
    const auto params = cfg.params();
    const auto f = parse_queue_dist(cfg.f);
    const auto law = cfg.f_down.empty() ? ReplenishmentLaw::from(f) : ReplenishmentLaw::with_override(f, parse_queue_dist(cfg.f_down, "--f-down"));
    SimConfig sim;
    sim.seed = cfg.seed;
    sim.initial_price = cfg.initial_price;
    const int horizons = static_cast<int>(cfg.horizon_time.has_value()) + static_cast<int>(cfg.horizon_events.has_value()) +
                         static_cast<int>(cfg.horizon_moves.has_value());
    if (horizons != 1) throw UsageError("give exactly one of --time, --events, --moves");
    if (cfg.horizon_time) sim.horizon = Horizon::time(*cfg.horizon_time);
    if (cfg.horizon_events) sim.horizon = Horizon::events(*cfg.horizon_events);
    if (cfg.horizon_moves) sim.horizon = Horizon::price_changes(*cfg.horizon_moves);
    if ((cfg.bid > 0) != (cfg.ask > 0)) throw UsageError("--bid and --ask must be given together");
    if (cfg.bid > 0) sim.initial_state = BookState{0, cfg.bid, cfg.ask};
    sim.validate();

    PricePath path;
    if (cfg.event_log.empty()) {
        path = simulate(params, law, sim);
    } else {
        auto [p, log] = simulate_with_log(params, law, sim);
        path = std::move(p);
        const std::vector<std::string> comments{"config: " + echo.dump()};
        write_event_log_file(cfg.event_log, log, comments);
    }
    if (cfg.format == "json") {
        detail::emit(cfg, out, detail::json_text({{"config", echo}, {"path", price_path_json(path)}}));
        return;
    }
    std::ostringstream csv;
    csv << detail::csv_preamble(echo);
    write_price_path_csv(csv, path);
    detail::emit(cfg, out, csv.str());
}

inline std::optional<std::pair<double, double>> parse_time_window(const std::string& spec) {
    if (detail::trimmed(spec).empty()) return std::nullopt;
    const auto parts = detail::split(spec, ':');
    if (parts.size() != 2) throw UsageError("--time-window: expected t0:t1");
    const double t0 = detail::to_real(parts[0], "--time-window"), t1 = detail::to_real(parts[1], "--time-window");
    if (!(t1 > t0)) throw UsageError("--time-window: needs t0 < t1");
    return std::pair{t0, t1};
}

inline void cmd_estimate(const RunConfig& cfg, const nlohmann::json& echo, std::ostream& out) {
    if (cfg.logs.size() != 1) throw UsageError("estimate takes exactly one --log");
    const auto parsed = parse_event_log_file(cfg.logs.front(), {cfg.batch_size, cfg.max_malformed});
    const auto intens = estimate_intensities(parsed.records, {parse_time_window(cfg.time_window)});
    const auto rep = estimate_replenishment(parsed.records, {cfg.pool_swapped, cfg.price_tick});
    auto j = estimation_result_json(intens, rep);
    j["config"] = echo;
    j["parse"] = {{"data_rows", parsed.data_rows}, {"malformed_rows", parsed.malformed.size()}};
    if (!cfg.f_out.empty()) {
        std::ofstream file(cfg.f_out, std::ios::binary);
        if (!file) throw std::runtime_error("cannot open '" + cfg.f_out + "'");
        file << detail::csv_preamble(echo);
        write_queue_dist_csv(file, rep.f_hat);
        if (!file) throw std::runtime_error("write failed on '" + cfg.f_out + "'");
    }
    detail::emit(cfg, out, detail::json_text(j));
}

inline void cmd_vol(const RunConfig& cfg, const nlohmann::json& echo, std::ostream& out) {
    nlohmann::json j{{"config", echo}};
    if (cfg.window && !(*cfg.window > 0.0)) throw UsageError("--window must be positive");
    if (!cfg.f.empty()) {
        const auto params = cfg.params();
        const auto f = parse_queue_dist(cfg.f);
        nlohmann::json pred{{"depth", depth(f)}};
        if (params.balanced()) {
            pred["regime"] = "balanced";
            pred["sigma"] = vol_balanced(params, f);
            if (cfg.window) {
                const double n = orders_for_window(*cfg.window);
                pred["orders_in_window"] = n;
                pred["sigma_window"] = vol_balanced(params, f, n);
            }
        } else if (params.lambda < params.mu_theta()) {
            pred["regime"] = "unbalanced";
            pred["expected_duration_f"] = expected_duration_f(f, params);
            pred["sigma"] = vol_unbalanced(params, f);
            if (cfg.window) pred["sigma_window"] = pred["sigma"].get<double>() * std::sqrt(*cfg.window);
        } else {
            throw UsageError("vol: requires lambda <= mu + theta");
        }
        j["predicted"] = pred;
    } else if (cfg.logs.empty()) {
        throw UsageError("vol: give --f (with rates) or at least one --log");
    }
    if (!cfg.logs.empty()) {
        if (!cfg.window) throw UsageError("vol: --window is required with --log");
        std::vector<std::pair<std::string, std::vector<EventRecord>>> assets;
        for (const auto& path : cfg.logs)
            assets.emplace_back(std::filesystem::path(path).filename().string(), parse_event_log_file(path, {cfg.batch_size, cfg.max_malformed}).records);
        ComparisonOptions opts;
        opts.replenishment = {cfg.pool_swapped, cfg.price_tick};
        opts.intensities = {parse_time_window(cfg.time_window)};
        auto arr = nlohmann::json::array();
        for (const auto& c : predicted_vs_realized(assets, *cfg.window, opts)) arr.push_back(to_json(c));
        j["assets"] = arr;
    }
    detail::emit(cfg, out, detail::json_text(j));
}

inline int cmd_xval(const RunConfig& cfg, const nlohmann::json& echo, std::ostream& out) {
    if (!(cfg.mc_scale > 0.0)) throw UsageError("--mc-scale must be positive");
    const auto ids = parse_int_grid(cfg.criteria, "--criteria");
    const auto& registry = acceptance_criteria();
    for (int id : ids)
        if (std::none_of(registry.begin(), registry.end(), [&](const Criterion& c) { return c.id == id; }))
            throw UsageError("--criteria: no criterion " + std::to_string(id));
    SuiteConfig sc;
    sc.seed = cfg.suite_seed;
    sc.mc_scale = cfg.mc_scale;
    sc.queue_truncation = cfg.truncation;
    const auto report = run_suite(sc, ids);
    if (!cfg.output.empty()) {
        auto j = to_json(report);
        j["run_config"] = echo;
        detail::emit(cfg, out, detail::json_text(j));
    }
    write_suite_table(out, report);
    out.flush();
    return report.passed ? exit_ok : exit_xval_failed;
}

namespace detail {

inline void add_model_options(CLI::App& sub, RunConfig& cfg, bool with_f = true) {
    sub.add_option("--lambda", cfg.lambda, "limit order arrival rate per side [orders/second]");
    auto* mu = sub.add_option("--mu", cfg.mu, "market order rate per side [orders/second]");
    auto* theta = sub.add_option("--theta", cfg.theta, "cancellation rate per side [orders/second]");
    sub.add_option("--mu-theta", cfg.mu_theta, "combined removal rate mu + theta per side [orders/second]; sets mu, theta = 0")
        ->excludes(mu)
        ->excludes(theta);
    sub.add_option("--tick", cfg.tick, "tick size [price units]");
    if (with_f)
        sub.add_option("--f", cfg.f, "queue sizes after a price move: i,j,p CSV file or inline i:j:p[,i:j:p...] [i bid, j ask, in orders]");
}

inline void add_output_options(CLI::App& sub, RunConfig& cfg, bool with_format) {
    sub.add_option("-o,--output", cfg.output, "output file (default: stdout)");
    if (with_format) sub.add_option("--format", cfg.format, "output format")->check(CLI::IsMember({"csv", "json"}));
}

inline void write_error(std::ostream& err, int code, std::string_view kind, std::string_view message) {
    const nlohmann::json j{{"error", {{"exit_code", code}, {"kind", kind}, {"message", message}}}};
    err << j.dump() << '\n';
    err.flush();
}

} // namespace detail

/// Runs one command line; returns the process exit code.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    RunConfig cfg;
    unsigned threads = 0;
    bool quiet = false;

    CLI::App app{"Queue-reactive limit order book model: analytics, simulation, estimation and cross-validation.\n"
                 "Units: rates per side in orders/second, times in seconds, queue sizes in orders\n"
                 "(batches of --batch-size shares for estimation), prices in price units, moves in ticks.",
                 "lobq"};
    app.option_defaults()->always_capture_default();
    app.require_subcommand(1);
    app.set_config("--config", "", "JSON or TOML config file; command-line flags take precedence")->check(CLI::ExistingFile);
    app.config_formatter(std::make_shared<ConfigFile>(app));
    app.allow_config_extras(CLI::config_extras_mode::error);
    app.add_option("--threads", threads, "worker threads for Monte Carlo and grids (0: all cores)");
    app.add_flag("--quiet", quiet, "suppress warnings");

    auto sub = [&](const char* name, const char* description) {
        auto* s = app.add_subcommand(name, description);
        s->fallthrough();
        s->option_defaults()->always_capture_default();
        s->footer("Global options (--config, --threads, --quiet) may follow the subcommand.");
        return s;
    };

    auto* duration = sub("duration", "survival P[tau > t] of the time to the next price move, with its tail asymptote");
    detail::add_model_options(*duration, cfg, false);
    duration->add_option("--ask,--a", cfg.ask, "initial ask queue [orders]")->required();
    duration->add_option("--bid,--b", cfg.bid, "initial bid queue [orders]")->required();
    duration->add_option("--t-grid", cfg.t_grid, "times [seconds]: lo:hi:step, log:lo:hi:per_decade or t1,t2,...")->required();
    detail::add_output_options(*duration, cfg, true);

    auto* prob_up = sub("prob-up", "probability phi(n, p) that the next move is up, bid queue n and ask queue p");
    detail::add_model_options(*prob_up, cfg, false);
    prob_up->add_option("--n-grid", cfg.n_grid, "bid queue sizes [orders]: lo:hi[:step] or list");
    prob_up->add_option("--p-grid", cfg.p_grid, "ask queue sizes [orders]: lo:hi[:step] or list");
    prob_up->add_option("--truncation", cfg.truncation, "largest queue of the Dirichlet grid when lambda != mu + theta [orders]");
    detail::add_output_options(*prob_up, cfg, true);

    auto* price_stats = sub("price-stats", "price-change chain: p_cont, p_n, lag autocovariances, depth and volatility (JSON)");
    detail::add_model_options(*price_stats, cfg);
    price_stats->add_option("--bid,--b", cfg.bid, "initial bid queue [orders]")->required();
    price_stats->add_option("--ask,--a", cfg.ask, "initial ask queue [orders]")->required();
    price_stats->add_option("--lags", cfg.lags, "number of moves k for p_n and Cov(X_1, X_k) [moves]");
    price_stats->add_option("--truncation", cfg.truncation, "largest queue of the Dirichlet grid [orders]");
    detail::add_output_options(*price_stats, cfg, false);

    auto* simulate_cmd = sub("simulate", "simulate one price path; optionally write the event log");
    detail::add_model_options(*simulate_cmd, cfg);
    simulate_cmd->add_option("--f-down", cfg.f_down, "override for the law after a down move (default: f with swapped arguments)");
    simulate_cmd->add_option("--time", cfg.horizon_time, "horizon [seconds]");
    simulate_cmd->add_option("--events", cfg.horizon_events, "horizon [order book events]");
    simulate_cmd->add_option("--moves", cfg.horizon_moves, "horizon [price changes]");
    simulate_cmd->add_option("--bid,--b", cfg.bid, "initial bid queue [orders] (default: drawn from f)");
    simulate_cmd->add_option("--ask,--a", cfg.ask, "initial ask queue [orders] (default: drawn from f)");
    simulate_cmd->add_option("--initial-price", cfg.initial_price, "starting bid price [price units]");
    simulate_cmd->add_option("--seed", cfg.seed, "random seed");
    simulate_cmd->add_option("--event-log", cfg.event_log, "event log CSV to write (gzip when the name ends in .gz)");
    detail::add_output_options(*simulate_cmd, cfg, true);

    auto add_log_options = [&](CLI::App& s) {
        s.add_option("--batch-size", cfg.batch_size, "shares per queue unit; queues become ceil(q / batch) [shares/batch]");
        s.add_option("--max-malformed", cfg.max_malformed, "largest tolerated fraction of malformed rows");
        s.add_option("--time-window", cfg.time_window, "estimation window t0:t1 [seconds] (default: whole log)");
        s.add_flag("--pool-swapped,!--no-pool-swapped", cfg.pool_swapped, "pool swapped post-down-move queues into f_hat")
            ->default_str(cfg.pool_swapped ? "true" : "false");
        s.add_option("--price-tick", cfg.price_tick, "tick size [price units] (default: inferred from the log)");
    };

    auto* estimate = sub("estimate", "estimate lambda, mu + theta and f from an event log (JSON)");
    estimate->add_option("--log", cfg.logs, "event log CSV, optionally gzip [timestamps in seconds]")->required()->expected(1);
    add_log_options(*estimate);
    estimate->add_option("--f-out", cfg.f_out, "write f_hat as i,j,p CSV");
    detail::add_output_options(*estimate, cfg, false);

    auto* vol = sub("vol", "predicted volatility from (rates, f) and, given logs, predicted vs realized (JSON)");
    detail::add_model_options(*vol, cfg);
    vol->add_option("--log", cfg.logs, "event logs to compare [timestamps in seconds]");
    vol->add_option("--window", cfg.window, "realized-volatility window [seconds]");
    add_log_options(*vol);
    detail::add_output_options(*vol, cfg, false);

    auto* xval = sub("xval", "run the cross-validation suite; prints one line per check and exits 3 on failure");
    xval->add_option("--seed", cfg.suite_seed, "base random seed");
    xval->add_option("--mc-scale", cfg.mc_scale, "multiplier on every Monte Carlo budget");
    xval->add_option("--truncation", cfg.truncation, "oracle queue truncation [orders]");
    xval->add_option("--criteria", cfg.criteria, "criteria to run: lo:hi or list");
    xval->add_option("-o,--output", cfg.output, "JSON report file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        detail::write_error(err, exit_usage, "usage", e.what());
        return exit_usage;
    }

    worker_threads().store(threads);
    warnings_enabled().store(!quiet);
    CLI::App* active = app.get_subcommands().front();
    cfg.subcommand = active->get_name();
    try {
        const auto echo = resolved_config(*active);
        if (active == duration) cmd_duration(cfg, echo, out);
        else if (active == prob_up) cmd_prob_up(cfg, echo, out);
        else if (active == price_stats) cmd_price_stats(cfg, echo, out);
        else if (active == simulate_cmd) cmd_simulate(cfg, echo, out);
        else if (active == estimate) cmd_estimate(cfg, echo, out);
        else if (active == vol) cmd_vol(cfg, echo, out);
        else if (active == xval) return cmd_xval(cfg, echo, out);
        return exit_ok;
    } catch (const std::invalid_argument& e) {
        detail::write_error(err, exit_usage, "usage", e.what());
        return exit_usage;
    } catch (const std::domain_error& e) {
        detail::write_error(err, exit_usage, "usage", e.what());
        return exit_usage;
    } catch (const std::exception& e) {
        detail::write_error(err, exit_runtime, "runtime", e.what());
        return exit_runtime;
    }
}

} // namespace lobq::cli
