#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cycle/decoding.hpp"
#include "cycle/exec_cache.hpp"
#include "cycle/pipeline.hpp"
#include "cycle/prompt.hpp"
#include "cycle/tokenizer.hpp"

namespace cycle {

enum class StopReason { Solved, MaxSteps, ExactCopy };

const char* stop_reason_name(StopReason reason);

struct Attempt {
    std::string source;
    SuiteReport report;
    std::string feedback;
};

// One problem's full iterative-refinement trajectory.
struct RefineSession {
    std::string problem_id;
    std::vector<Attempt> attempts;
    StopReason stop_reason = StopReason::MaxSteps;
    int steps_used = 0;
};

struct SessionOptions {
    int max_steps = 4;
    DecodeStrategy decode = DecodeStrategy::nucleus(0.95, 0.8);
    int max_new_tokens = 64;
    int feedback_max_cases = 3;
    bool include_feedback = true;  // false = feedback-removal mode
    std::uint64_t seed = 0;
};

// Token-level comparison of what the model actually emitted; no
// normalization, so whitespace-token differences count.
bool is_exact_copy(const Vocab& vocab, const std::string& a, const std::string& b);

RefineSession run_session(const DecoderFactory& decoder_factory, const Vocab& vocab,
                          const Problem& problem, ExecCache& cache, const SessionOptions& options);

// As run_session but with a caller-supplied first attempt (used for beam
// initial candidates).
RefineSession run_session_from(const DecoderFactory& decoder_factory, const Vocab& vocab,
                               const Problem& problem, ExecCache& cache,
                               const SessionOptions& options, const std::string& initial_source);

// k independent sessions: nucleus/greedy seeds k sampling streams; beam uses
// the width-k initial set and refines each candidate with the same strategy.
std::vector<RefineSession> refine_topk(const DecoderFactory& decoder_factory, const Vocab& vocab,
                                       const Problem& problem, ExecCache& cache, int k,
                                       const SessionOptions& options);

void save_sessions(const std::vector<RefineSession>& sessions, const std::string& path);

}  // namespace cycle
