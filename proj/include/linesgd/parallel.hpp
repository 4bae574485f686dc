#pragma once
#include <atomic>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace linesgd {

// Runs body(0..items-1) across up to `threads` workers. Work items must write
// only to their own output slots; then the schedule cannot affect results.
inline void run_workers(int threads, int items, const std::function<void(int)>& body) {
    threads = std::max(1, threads);
    if (threads == 1 || items <= 1) {
        for (int i = 0; i < items; ++i) body(i);
        return;
    }
    std::atomic<int> next{0};
    std::mutex mu;
    std::exception_ptr error;
    auto loop = [&]() {
        try {
            for (int i = next.fetch_add(1); i < items; i = next.fetch_add(1)) body(i);
        } catch (...) {
            const std::lock_guard<std::mutex> lock(mu);
            if (!error) error = std::current_exception();
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    for (int t = 0; t < threads; ++t) pool.emplace_back(loop);
    for (std::thread& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

} // namespace linesgd
