#pragma once

#include <algorithm>
#include <thread>
#include <vector>

namespace posekit {

/// Runs fn(i) for i in [0, count) split into static contiguous chunks.
/// Each index is processed exactly once by exactly one thread, so results
/// are independent of the thread count as long as fn(i) only writes state
/// owned by index i.
template <typename Fn>
void parallel_for(int64_t count, int threads, Fn&& fn) {
    threads = std::max(1, threads);
    if (threads == 1 || count <= 1) {
        for (int64_t i = 0; i < count; ++i) fn(i);
        return;
    }
    int actual = int(std::min<int64_t>(threads, count));
    int64_t chunk = (count + actual - 1) / actual;
    std::vector<std::thread> pool;
    pool.reserve(size_t(actual));
    for (int t = 0; t < actual; ++t) {
        int64_t lo = t * chunk;
        int64_t hi = std::min(count, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &fn] {
            for (int64_t i = lo; i < hi; ++i) fn(i);
        });
    }
    for (auto& th : pool) th.join();
}

}  // namespace posekit
