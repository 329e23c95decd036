#pragma once

#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace cycle {

// Index-parallel loop; work items must be independent. Results keyed by index
// stay deterministic regardless of scheduling.
inline void parallel_for(std::size_t count, int jobs, const std::function<void(std::size_t)>& body) {
    if (jobs <= 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) body(i);
        return;
    }
    const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(jobs), count);
    std::vector<std::thread> threads;
    threads.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        threads.emplace_back([w, workers, count, &body] {
            for (std::size_t i = w; i < count; i += workers) body(i);
        });
    }
    for (std::thread& t : threads) t.join();
}

}  // namespace cycle
