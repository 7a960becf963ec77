#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace lobq {

/// Number of worker threads used by Monte Carlo drivers; 0 means hardware concurrency.
inline std::atomic<unsigned>& worker_threads() {
    static std::atomic<unsigned> n{0};
    return n;
}

inline unsigned resolved_worker_threads() {
    unsigned n = worker_threads().load();
    if (n == 0) n = std::max(1u, std::thread::hardware_concurrency());
    return n;
}

/// out[i] = fn(i) for i in [0, count). Output order is fixed, so any
/// sequential reduction over the result is independent of thread count.
template <class T, class F>
std::vector<T> parallel_map(std::size_t count, F&& fn) {
    std::vector<T> out(count);
    const unsigned threads = std::min<std::size_t>(resolved_worker_threads(), std::max<std::size_t>(count, 1));
    if (threads <= 1) {
        for (std::size_t i = 0; i < count; ++i) out[i] = fn(i);
        return out;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= count) return;
            try {
                out[i] = fn(i);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) error = std::current_exception();
                next.store(count);
                return;
            }
        }
    };
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    pool.clear();
    if (error) std::rethrow_exception(error);
    return out;
}

} // namespace lobq
