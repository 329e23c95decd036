#pragma once

#include <random>
#include <string>
#include <vector>

#include "cycle/model.hpp"

namespace cycle {

struct DecodeStrategy {
    enum class Kind { Greedy, Nucleus, Beam };

    Kind kind = Kind::Nucleus;
    double top_p = 0.95;
    double temperature = 0.8;
    int beam_width = 5;

    static DecodeStrategy greedy() { return {Kind::Greedy, 0.0, 0.0, 1}; }
    static DecodeStrategy nucleus(double top_p, double temperature) {
        return {Kind::Nucleus, top_p, temperature, 1};
    }
    static DecodeStrategy beam(int width) { return {Kind::Beam, 0.0, 0.0, width}; }
};

DecodeStrategy parse_strategy(const std::string& name, double top_p, double temperature, int width);

// Sampled/greedy generation; returns the generated ids without the EOS
// terminator. Stops at EOS, max_new, or a full context window.
std::vector<int> generate(Decoder& decoder, const std::vector<int>& prompt, int max_new,
                          const DecodeStrategy& strategy, std::mt19937_64& rng, int eos_id);

struct BeamResult {
    std::vector<int> tokens;  // without EOS
    double score = 0.0;       // cumulative log-probability
};

// Width beams ranked by descending cumulative log-probability.
std::vector<BeamResult> beam_search(Decoder& decoder, const std::vector<int>& prompt, int width,
                                    int max_new, int eos_id);

}  // namespace cycle
