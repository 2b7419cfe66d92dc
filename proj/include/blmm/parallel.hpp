#pragma once

#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace blmm {

// Static block partition over [0, count). Each index is visited exactly once
// and results must be written to per-index slots, so output is independent of
// the thread count.
template <typename Body>
void parallel_for(std::size_t count, int threads, Body&& body) {
    if (threads < 1) threads = 1;
    if (threads == 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) body(i);
        return;
    }
    const std::size_t nt = std::min<std::size_t>(threads, count);
    std::vector<std::thread> pool;
    pool.reserve(nt);
    std::vector<std::exception_ptr> errors(nt);
    const std::size_t chunk = (count + nt - 1) / nt;
    for (std::size_t t = 0; t < nt; ++t) {
        pool.emplace_back([&, t]() {
            const std::size_t lo = t * chunk;
            const std::size_t hi = std::min(count, lo + chunk);
            try {
                for (std::size_t i = lo; i < hi; ++i) body(i);
            } catch (...) {
                errors[t] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace blmm
