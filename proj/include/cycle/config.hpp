#pragma once

#include <cstdint>
#include <string>

#include "cycle/corpus.hpp"
#include "cycle/model.hpp"

namespace cycle {

// Single source of truth for a full run; defaults mirror the training and
// inference regimen the pipeline is built around.
struct RunConfig {
    std::uint64_t seed = 7;

    ModelConfig model{4, 4, 128, 512, 0, "double"};  // vocab_size set after vocab build

    // corpus
    int train_count = 200;
    int valid_count = 30;
    int test_count = 50;
    FamilyWeights family_mix = kDefaultFamilyMix;
    int max_desc_tokens = 512;
    bool apply_dedup = false;  // character-level similarity is degenerate on templated text
    double dedup_threshold = 0.60;

    // training
    int batch_size = 16;
    int ft_epochs = 30;
    int refine_epochs = 12;
    long long warmup_steps = 20;
    double ft_lr_max = 1e-3;
    double refine_lr_max = 5e-4;
    double lr_min = 1e-5;
    double pgm_ratio = 0.05;
    double refine_ratio = 0.25;

    // distillation + inference
    int distill_samples = 10;
    double distill_temperature = 0.8;
    int max_refine_steps = 4;
    std::string decode = "nucleus";  // greedy | nucleus | beam
    double top_p = 0.95;
    double temperature = 0.8;
    int beam_width = 5;
    int max_new_tokens = 64;
    int topk_sessions = 1;

    int jobs = 1;
    std::string out_dir = "runs/default";

    void validate() const;  // throws InvalidConfig
    std::uint64_t hash() const;

    std::string to_json_string() const;
    static RunConfig from_json_string(const std::string& text);
    static RunConfig load(const std::string& path);
    void save(const std::string& path) const;
};

}  // namespace cycle
