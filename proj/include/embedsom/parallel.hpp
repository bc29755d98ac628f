#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace embedsom {

/// Number of workers to use when the caller passes 0.
inline std::size_t default_workers() noexcept {
    return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

/// Splits [0, n) into `workers` contiguous ranges and runs `fn(begin, end)`
/// on each, joining before return. Rethrows the first worker exception.
template <typename Fn>
void parallel_for_ranges(std::size_t n, std::size_t workers, Fn &&fn) {
    if (workers == 0)
        workers = default_workers();
    workers = std::min(workers, std::max<std::size_t>(1, n));
    if (workers <= 1) {
        fn(std::size_t{0}, n);
        return;
    }
    std::vector<std::thread> threads;
    std::vector<std::exception_ptr> errors(workers);
    const std::size_t step = (n + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t b = std::min(n, w * step);
        const std::size_t e = std::min(n, b + step);
        threads.emplace_back([&, w, b, e] {
            try {
                fn(b, e);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto &t : threads)
        t.join();
    for (auto &err : errors)
        if (err)
            std::rethrow_exception(err);
}

}  // namespace embedsom
