// Acceptance checks: one verdict line per criterion.
//
//   lobq_acceptance [--criterion N]... [--lobq PATH] [--mc-scale S]
//
// Criteria 1-8 run the registered comparisons in process. Criterion 9 runs
// `lobq xval` twice with the same seed and requires exit 0 from both runs and
// byte-identical JSON reports.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <sys/wait.h>

#include "lobq/xval.hpp"

namespace {

struct Verdict {
    bool passed = false;
    std::string title;
    std::vector<std::string> notes;
};

Verdict run_registered(int id, const lobq::SuiteConfig& sc) {
    const auto result = lobq::run_criterion(id, sc);
    Verdict v{result.passed, result.title, {}};
    for (const auto& r : result.reports) {
        std::string line = std::string(r.passed ? "pass" : "FAIL") + "  " + r.quantity + "  max|dev| " + std::to_string(r.max_abs_deviation);
        if (r.stochastic) line += "  max dev/SE " + std::to_string(r.max_se_multiple);
        line += "  " + std::string(lobq::to_string(r.rule)) + " " + std::to_string(r.tolerance);
        v.notes.push_back(std::move(line));
    }
    return v;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

int exit_status(int raw) { return raw != -1 && WIFEXITED(raw) ? WEXITSTATUS(raw) : -1; }

Verdict run_end_to_end(const std::string& lobq, const lobq::SuiteConfig& sc) {
    Verdict v{false, "End-to-end xval: exit 0 and byte-identical reports", {}};
    if (lobq.empty() || !std::filesystem::exists(lobq)) {
        v.notes.push_back("lobq executable not found: '" + lobq + "'");
        return v;
    }
    const auto dir = std::filesystem::temp_directory_path() / ("lobq_acceptance_" + std::to_string(::getpid()));
    std::filesystem::create_directories(dir);
    std::vector<int> codes;
    std::vector<std::string> reports;
    for (int run = 0; run < 2; ++run) {
        const auto report = dir / ("report" + std::to_string(run) + ".json");
        const std::string cmd = "\"" + lobq + "\" xval --seed " + std::to_string(sc.seed) + " --mc-scale " + std::to_string(sc.mc_scale) +
                                " -o \"" + report.string() + "\" > \"" + (dir / "table.txt").string() + "\" 2>&1";
        codes.push_back(exit_status(std::system(cmd.c_str())));
        reports.push_back(slurp(report));
        v.notes.push_back("run " + std::to_string(run + 1) + ": exit " + std::to_string(codes.back()) + ", report " +
                          std::to_string(reports.back().size()) + " bytes");
    }
    const bool identical = !reports[0].empty() && reports[0] == reports[1];
    v.notes.push_back(std::string("reports ") + (identical ? "byte-identical" : "differ"));
    v.passed = identical && codes[0] == 0 && codes[1] == 0;
    std::filesystem::remove_all(dir);
    return v;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"acceptance criteria 1-9"};
    std::vector<int> ids;
    std::string lobq;
    lobq::SuiteConfig sc;
    app.add_option("--criterion", ids, "criteria to run (default: all)")->check(CLI::Range(1, 9));
    app.add_option("--lobq", lobq, "path of the lobq executable (criterion 9)");
    app.add_option("--mc-scale", sc.mc_scale, "Monte Carlo budget multiplier")->check(CLI::PositiveNumber);
    CLI11_PARSE(app, argc, argv);
    if (ids.empty()) ids = {1, 2, 3, 4, 5, 6, 7, 8, 9};

    bool all = true;
    for (int id : ids) {
        const auto start = std::chrono::steady_clock::now();
        Verdict v;
        try {
            v = id == 9 ? run_end_to_end(lobq, sc) : run_registered(id, sc);
        } catch (const std::exception& e) {
            v.notes.push_back(std::string("error: ") + e.what());
        }
        const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::cout << "criterion " << id << ": " << (v.passed ? "PASS" : "FAIL") << "  " << v.title << "  (" << seconds << " s)\n";
        for (const auto& n : v.notes) std::cout << "    " << n << '\n';
        std::cout.flush();
        all = all && v.passed;
    }
    return all ? 0 : 1;
}
