#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace rankbsde {

/// Worker count for path-parallel loops. Results never depend on it: every
/// index writes only its own output slot and reductions run afterwards in
/// index order.
struct ExecutionPolicy {
    unsigned threads = 1;
};

/// Calls body(i) for i in [0, count) using contiguous static chunks.
template <typename Body>
void parallel_for(std::size_t count, const ExecutionPolicy& policy, Body&& body) {
    const std::size_t workers =
        std::min<std::size_t>(std::max(1u, policy.threads), std::max<std::size_t>(count, 1));
    if (workers <= 1) {
        for (std::size_t i = 0; i < count; ++i) body(i);
        return;
    }
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    const std::size_t chunk = (count + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t begin = w * chunk;
        const std::size_t end = std::min(count, begin + chunk);
        if (begin >= end) break;
        pool.emplace_back([&, begin, end] {
            try {
                for (std::size_t i = begin; i < end; ++i) body(i);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

}  // namespace rankbsde
