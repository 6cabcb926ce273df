#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <thread>
#include <vector>

namespace ragqa {

/// Calls fn(i) for every i in [0, n) on up to max_parallel threads. fn must
/// not throw.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t max_parallel, Fn&& fn) {
    const std::size_t workers = std::clamp<std::size_t>(max_parallel, 1, std::max<std::size_t>(n, 1));
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t t = 0; t < workers; ++t) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) fn(i);
        });
    }
}

inline std::size_t default_parallelism() {
    return std::max(1u, std::thread::hardware_concurrency());
}

}  // namespace ragqa
