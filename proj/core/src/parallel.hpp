#pragma once

// Internal helper: run independent grid cells on a small worker pool. Each
// cell writes only its own result slot, so aggregation is order-independent;
// the first exception (by cell index) is rethrown once all workers stop.

#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace stackelgrad::detail {

template <typename Fn>
void parallel_for(std::size_t count, int jobs, Fn&& body) {
    if (count == 0) return;
    std::size_t workers = jobs < 1 ? 1 : static_cast<std::size_t>(jobs);
    if (workers > count) workers = count;

    if (workers == 1) {
        for (std::size_t i = 0; i < count; ++i) body(i);
        return;
    }

    std::atomic<std::size_t> next{0};
    std::mutex mu;
    std::exception_ptr error;
    std::size_t error_index = count;

    auto run = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= count) return;
            try {
                body(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(mu);
                if (i < error_index) {
                    error_index = i;
                    error = std::current_exception();
                }
            }
        }
    };

    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(run);
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace stackelgrad::detail
