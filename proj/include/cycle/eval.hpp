#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cycle/refine.hpp"

namespace cycle {

class InvalidArgs : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class NoTransitions : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Probability that a uniformly random k-subset of n samples (c of them
// correct) contains at least one correct sample: 1 - C(n-c,k)/C(n,k).
double pass_at_k(int n, int c, int k);

// rate[s] = fraction of sessions Solved with steps_used <= s, s in [0, max_steps].
std::vector<double> step_curve(const std::vector<RefineSession>& sessions, int max_steps);

// Exact copies over all refinement transitions (attempt i-1 -> i, i >= 1).
double exact_copy_rate(const std::vector<RefineSession>& sessions, const Vocab& vocab);

// Mean token-level Levenshtein distance across all refinement transitions.
double mean_token_edit_distance(const std::vector<RefineSession>& sessions, const Vocab& vocab);

struct EvalReport {
    std::string benchmark;
    double one_time_pass_rate = 0.0;
    std::vector<double> per_step_cumulative_pass_rate;
    double exact_copy_rate = 0.0;
    std::optional<double> mean_edit_distance;  // absent when no transitions happened
    std::optional<double> pass_at_k;           // present when k sessions per problem were run
    double wallclock_seconds = 0.0;
    std::uint64_t executions_performed = 0;
    std::uint64_t cache_hits = 0;
};

struct EvalOptions {
    SessionOptions session;
    int sessions_per_problem = 1;  // k; >1 enables refine-the-top-k
    int jobs = 1;
    std::string benchmark = "test";
};

struct EvalOutcome {
    EvalReport report;
    std::vector<RefineSession> sessions;  // problem-major, k sessions each
};

EvalOutcome evaluate(const DecoderFactory& decoder_factory, const Vocab& vocab,
                     const std::vector<const Problem*>& problems, ExecCache& cache,
                     const EvalOptions& options);

// Plot-ready emission. The CSVs carry no wall-clock column so reruns with an
// identical config and seed are byte-identical.
void write_eval_report_json(const EvalReport& report, const std::string& path);
void write_eval_report_csv(const std::vector<EvalReport>& reports, const std::string& path);
void write_step_curve_csv(const EvalReport& report, const std::string& path);

}  // namespace cycle
