#pragma once

#include <atomic>
#include <iostream>
#include <mutex>
#include <string_view>

namespace lobq {

inline std::atomic<bool>& warnings_enabled() {
    static std::atomic<bool> enabled{true};
    return enabled;
}

inline void log_warning(std::string_view message) {
    if (!warnings_enabled().load()) return;
    static std::mutex m;
    std::lock_guard lock(m);
    std::clog << "lobq: warning: " << message << '\n';
}

} // namespace lobq
