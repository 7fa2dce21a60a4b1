#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace rbmdc {

/// Runs `body(chunk_index, begin, end)` over fixed-size chunks of [0, n).
/// Chunk boundaries depend only on `n` and `chunk`, never on `workers`, so
/// any per-chunk partial result reduced in chunk order is identical for every
/// worker count.
inline void for_each_chunk(std::size_t n, std::size_t chunk, unsigned workers,
                           const std::function<void(std::size_t, std::size_t, std::size_t)>& body) {
    if (n == 0) return;
    chunk = std::max<std::size_t>(chunk, 1);
    const std::size_t chunks = (n + chunk - 1) / chunk;
    auto run = [&](std::size_t c) {
        const std::size_t begin = c * chunk;
        body(c, begin, std::min(n, begin + chunk));
    };
    if (workers <= 1 || chunks == 1) {
        for (std::size_t c = 0; c < chunks; ++c) run(c);
        return;
    }
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    const unsigned count = static_cast<unsigned>(std::min<std::size_t>(workers, chunks));
    pool.reserve(count);
    for (unsigned w = 0; w < count; ++w) {
        pool.emplace_back([&, w] {
            for (std::size_t c = w; c < chunks; c += count) {
                try {
                    run(c);
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                    return;
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

}  // namespace rbmdc
