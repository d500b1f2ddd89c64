#include "neuromerge/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace neuromerge {

namespace {
std::atomic<std::size_t> g_thread_limit{0};
// Nested loops run serially on the worker that reaches them.
thread_local bool t_in_parallel = false;
}

void set_thread_limit(std::size_t threads) { g_thread_limit.store(threads); }

std::size_t thread_limit() {
    const std::size_t limit = g_thread_limit.load();
    if (limit != 0) return limit;
    return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t begin, std::size_t end,
                  const std::function<void(std::size_t)>& body) {
    if (end <= begin) return;
    const std::size_t count = end - begin;
    const std::size_t workers = std::min(thread_limit(), count);
    if (workers <= 1 || t_in_parallel) {
        for (std::size_t i = begin; i < end; ++i) body(i);
        return;
    }

    std::atomic<std::size_t> next{begin};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        const bool was_parallel = t_in_parallel;
        t_in_parallel = true;
        struct Restore {
            bool value;
            ~Restore() { t_in_parallel = value; }
        } restore{was_parallel};
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= end) return;
            try {
                body(i);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                next.store(end);
                return;
            }
        }
    };

    std::vector<std::jthread> pool;
    pool.reserve(workers - 1);
    for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(worker);
    worker();
    pool.clear();
    if (failure) std::rethrow_exception(failure);
}

} // namespace neuromerge
