#pragma once

#include <algorithm>
#include <charconv>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string_view>
#include <thread>
#include <vector>

namespace quopt {

namespace detail {

/// Single out-of-line body shared by the serial and threaded paths, so both
/// execute identically compiled floating-point code.
template <typename Fn>
[[gnu::noinline]] void run_block(Fn& fn, std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) fn(i);
}

}  // namespace detail

/// Runs fn(i) for i in [0, n) split into contiguous blocks over `jobs` threads.
/// Callers must only write to disjoint outputs per index; results are then
/// independent of the job count. The first exception thrown is rethrown.
template <typename Fn>
void parallel_for(std::size_t n, int jobs, Fn&& fn) {
    const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(jobs, 1)));
    if (workers <= 1) {
        detail::run_block(fn, 0, n);
        return;
    }
    std::exception_ptr first_error;
    std::mutex error_mutex;
    {
        std::vector<std::jthread> pool;
        pool.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w) {
            const std::size_t begin = n * w / workers;
            const std::size_t end = n * (w + 1) / workers;
            pool.emplace_back([&, begin, end] {
                try {
                    detail::run_block(fn, begin, end);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!first_error) first_error = std::current_exception();
                }
            });
        }
    }
    if (first_error) std::rethrow_exception(first_error);
}

/// Job count from QUOPT_JOBS, falling back to 1.
inline int default_jobs() {
    const char* env = std::getenv("QUOPT_JOBS");
    if (env == nullptr) return 1;
    const std::string_view text(env);
    int value = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size() || value < 1) return 1;
    return value;
}

}  // namespace quopt
