#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "cycle/minilang.hpp"
#include "cycle/tokenizer.hpp"

namespace cycle {

inline constexpr const char* kCorpusSchema = "cycle-corpus/1";
inline constexpr const char* kGeneratorVersion = "minilang-gen/1";

struct Problem {
    std::string id;
    std::string description;
    int arity = 1;
    std::vector<std::string> canonical_solutions;
    std::vector<TestCase> suite;
    std::string split;  // train | valid | test

    bool operator==(const Problem& other) const;
};

struct Dataset {
    std::vector<Problem> problems;
    std::uint64_t seed = 0;
    std::string generator_version = kGeneratorVersion;

    bool operator==(const Dataset& other) const;
    std::vector<const Problem*> split(const std::string& name) const;
};

class InvalidConfig : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class SchemaError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Weights over {affine, min-max, conditional, composite}; must be
// non-negative and sum to 1.
using FamilyWeights = std::array<double, 4>;

inline constexpr FamilyWeights kDefaultFamilyMix = {0.25, 0.25, 0.25, 0.25};

// Deterministic in (seed, counts, weights). Every canonical solution is
// verified against the generated suite before the problem is emitted.
Dataset generate_problems(std::uint64_t seed, const std::map<std::string, int>& count_per_split,
                          const FamilyWeights& family_mix = kDefaultFamilyMix);

Dataset filter_by_length(const Dataset& dataset, const Vocab& vocab, int max_tokens = 512);

// Drops every eval problem whose description has normalized character-level
// Levenshtein similarity above the threshold with any train description.
Dataset fuzzy_dedup(const Dataset& eval_set, const Dataset& train_set, double threshold = 0.60);

void save_dataset(const Dataset& dataset, const std::string& path);
Dataset load_dataset(const std::string& path);

}  // namespace cycle
