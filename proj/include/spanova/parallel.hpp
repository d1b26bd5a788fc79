#pragma once

#include <algorithm>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace spanova {

// contiguous block split; results must not depend on which thread runs an
// index, so callers draw from per-index substreams
inline void parallel_for(int threads, long count, const std::function<void(long)>& fn) {
    if (count <= 0) return;
    if (threads <= 1 || count == 1) {
        for (long i = 0; i < count; ++i) fn(i);
        return;
    }
    const int nt = static_cast<int>(std::min<long>(threads, count));
    std::vector<std::thread> pool;
    std::exception_ptr firstError;
    std::mutex errMutex;
    for (int t = 0; t < nt; ++t) {
        const long lo = count * t / nt;
        const long hi = count * (t + 1) / nt;
        pool.emplace_back([&, lo, hi] {
            try {
                for (long i = lo; i < hi; ++i) fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> g(errMutex);
                if (!firstError) firstError = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    if (firstError) std::rethrow_exception(firstError);
}

}  // namespace spanova
