#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cycle/corpus.hpp"
#include "cycle/decoding.hpp"
#include "cycle/exec_cache.hpp"
#include "cycle/model.hpp"
#include "cycle/prompt.hpp"
#include "cycle/tokenizer.hpp"

namespace cycle {

struct TrainSchedule {
    long long warmup_steps = 20;
    double lr_max = 1e-3;
    double lr_min = 1e-5;
    int batch_size = 16;
};

struct LossTrace {
    std::vector<double> step_losses;
    std::vector<double> epoch_valid_losses;  // empty when no validation set given
};

// Canonical-cap of phase-I sampling; synthetic problems stay far below it.
inline constexpr int kMaxSolutionsPerProblem = 50;

// Finetune encodings for one split; over-long instances are dropped and
// counted, never truncated.
std::vector<EncodedInstance> build_finetune_instances(const Dataset& dataset,
                                                      const std::string& split, const Vocab& vocab,
                                                      int context_len,
                                                      std::size_t* dropped = nullptr);

// Deterministic shuffled passes over the instances with fresh per-step PGM
// masks; validation loss (no update) is computed after each epoch.
LossTrace train_phase(LanguageModel& model, const std::vector<EncodedInstance>& instances,
                      int epochs, const TrainSchedule& schedule, double pgm_ratio,
                      std::uint64_t seed,
                      const std::vector<EncodedInstance>* validation = nullptr);

// As train_phase, but the epoch streams are provided by the caller (used for
// the phase-II data mixture, which re-mixes every epoch).
LossTrace train_streamed(LanguageModel& model,
                         const std::function<std::vector<const EncodedInstance*>(int epoch)>& epoch_stream,
                         int epochs, const TrainSchedule& schedule, double pgm_ratio,
                         std::uint64_t seed,
                         const std::vector<EncodedInstance>* validation = nullptr);

struct FaultyPair {
    std::string fg;
    std::string ef;
};

struct ProblemDistill {
    std::string problem_id;
    int n_sampled = 0;
    int n_correct = 0;  // distinct correct generations
    std::vector<FaultyPair> faulty;
    std::optional<std::string> kept_correct;
};

struct DistillReport {
    std::vector<ProblemDistill> per_problem;
    std::uint64_t cache_hits = 0;
    std::uint64_t cache_misses = 0;
};

using DecoderFactory = std::function<std::unique_ptr<Decoder>()>;

struct DistillOptions {
    int n_samples = 10;
    DecodeStrategy decode = DecodeStrategy::nucleus(0.95, 0.8);
    int max_new_tokens = 64;
    int feedback_max_cases = 3;
    std::uint64_t seed = 0;
    int jobs = 1;
};

DistillReport distill(const DecoderFactory& decoder_factory, const Vocab& vocab,
                      const std::vector<const Problem*>& problems, ExecCache& cache,
                      const DistillOptions& options);

struct RefineRecord {
    RefineInstance instance;
    std::string problem_id;
};

struct ReinforceRecord {
    std::string nl;
    std::string solution;
    std::string problem_id;
};

struct RefineData {
    std::vector<RefineRecord> refine;
    std::vector<ReinforceRecord> reinforce;
};

// Pairs every faulty generation with a verified-correct target: the model's
// own correct generation when one exists, else the first canonical solution.
RefineData build_refine_dataset(const DistillReport& report,
                                const std::vector<const Problem*>& problems);

// Exact-count mixture: round(ratio * epoch_size) refine instances, the rest
// canonical, drawn without replacement (pools reshuffle on exhaustion), then
// fully shuffled.
std::vector<const EncodedInstance*> mix_epoch(const std::vector<EncodedInstance>& refine_pool,
                                              const std::vector<EncodedInstance>& canonical_pool,
                                              double refine_ratio, std::size_t epoch_size,
                                              std::mt19937_64& rng);

void save_distill_report(const DistillReport& report, const std::string& path);
DistillReport load_distill_report(const std::string& path);
void save_refine_data(const RefineData& data, const std::string& path);
RefineData load_refine_data(const std::string& path);

}  // namespace cycle
