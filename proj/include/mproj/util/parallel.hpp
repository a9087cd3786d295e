#pragma once

#include <algorithm>
#include <functional>
#include <thread>
#include <vector>

namespace mproj {

/// Runs fn(i) for i in [0, n). With threads <= 1 the loop is serial. Work is
/// split into contiguous blocks, so results must not depend on iteration
/// interleaving (every caller in this codebase writes disjoint outputs).
inline void parallel_for(int64_t n, int threads, const std::function<void(int64_t)>& fn) {
    if (n <= 0) return;
    threads = std::max(1, threads);
    if (threads == 1 || n == 1) {
        for (int64_t i = 0; i < n; ++i) fn(i);
        return;
    }
    const int nt = static_cast<int>(std::min<int64_t>(threads, n));
    std::vector<std::thread> pool;
    pool.reserve(nt);
    const int64_t chunk = (n + nt - 1) / nt;
    for (int t = 0; t < nt; ++t) {
        const int64_t lo = t * chunk, hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &fn] {
            for (int64_t i = lo; i < hi; ++i) fn(i);
        });
    }
    for (auto& th : pool) th.join();
}

}  // namespace mproj
