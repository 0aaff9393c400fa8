#pragma once

// parallel_for over [0, n): each index is processed exactly once and writes
// only to its own slot, so results are identical for every thread count.

#include <atomic>
#include <cstddef>
#include <thread>
#include <vector>

namespace kcal {

template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
    if (threads <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        while (true) {
            std::size_t i = next.fetch_add(1);
            if (i >= n) break;
            fn(i);
        }
    };
    std::vector<std::thread> pool;
    int nt = std::min<int>(threads, static_cast<int>(n));
    pool.reserve(static_cast<std::size_t>(nt) - 1);
    for (int t = 1; t < nt; ++t) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();
}

} // namespace kcal
