#pragma once

#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace mvlme {

/// Runs fn(0..count-1) across up to hardware_concurrency() threads. Work is
/// partitioned statically by index, results are whatever fn writes into
/// caller-owned slots, so output ordering is independent of the schedule.
/// The first exception (by index) is rethrown.
inline void parallel_for(int count, const std::function<void(int)>& fn) {
    if (count <= 0) return;
    unsigned hw = std::thread::hardware_concurrency();
    int n_threads = static_cast<int>(hw == 0 ? 1 : hw);
    if (n_threads > count) n_threads = count;
    if (n_threads <= 1) {
        for (int i = 0; i < count; ++i) fn(i);
        return;
    }
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(count));
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(n_threads));
    for (int t = 0; t < n_threads; ++t) {
        pool.emplace_back([&, t]() {
            for (int i = t; i < count; i += n_threads) {
                try {
                    fn(i);
                } catch (...) {
                    errors[static_cast<std::size_t>(i)] = std::current_exception();
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

}  // namespace mvlme
