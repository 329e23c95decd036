#pragma once

#include <cstdint>
#include <mutex>
#include <string>
#include <unordered_map>

#include "cycle/corpus.hpp"
#include "cycle/minilang.hpp"

namespace cycle {

// Shared execution dedup: each (problem, exact source) pair runs the
// interpreter at most once. Get-or-compute is atomic under one lock.
class ExecCache {
public:
    SuiteReport get_or_run(const Problem& problem, const std::string& source,
                           std::int64_t step_limit = kDefaultStepLimit) {
        std::string key = problem.id;
        key.push_back('\0');
        key += source;
        std::lock_guard<std::mutex> lock(mutex_);
        auto it = entries_.find(key);
        if (it != entries_.end()) {
            ++hits_;
            return it->second;
        }
        ++misses_;
        SuiteReport report = run_tests(source, problem.suite, step_limit);
        entries_.emplace(std::move(key), report);
        return report;
    }

    std::uint64_t hits() const {
        std::lock_guard<std::mutex> lock(mutex_);
        return hits_;
    }
    std::uint64_t misses() const {
        std::lock_guard<std::mutex> lock(mutex_);
        return misses_;
    }

    void reset_counters() {
        std::lock_guard<std::mutex> lock(mutex_);
        hits_ = 0;
        misses_ = 0;
    }

private:
    mutable std::mutex mutex_;
    std::unordered_map<std::string, SuiteReport> entries_;
    std::uint64_t hits_ = 0;
    std::uint64_t misses_ = 0;
};

inline SuiteReport cached_execute(ExecCache& cache, const Problem& problem,
                                  const std::string& source) {
    return cache.get_or_run(problem, source);
}

}  // namespace cycle
