#pragma once

#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "cycle/model.hpp"
#include "cycle/tokenizer.hpp"

namespace cycle {

class EmptyComponent : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// The (NL, FG, EF, target) quadruple used for self-refinement training.
struct RefineInstance {
    std::string nl;
    std::string fg;
    std::string ef;
    std::string target;
};

// Six-segment aggregation: docstring-wrapped description, negative prefix,
// faulty code, execution prefix, comment-prefixed feedback, positive prefix.
std::string aggregate_prompt(const std::string& nl, const std::string& fg, const std::string& ef);

struct EncodedInstance {
    std::vector<int> ids;
    std::vector<char> loss_mask;  // true exactly on target tokens and the EOS
    int fg_begin = 0;             // [fg_begin, fg_end) token positions of FG
    int fg_end = 0;

    bool has_fg_span() const { return fg_end > fg_begin; }
};

EncodedInstance encode_finetune(const Vocab& vocab, const std::string& nl,
                                const std::string& solution, int context_len);

EncodedInstance encode_refine(const Vocab& vocab, const RefineInstance& instance, int context_len);

// Exactly round(p * span) distinct positions drawn uniformly without
// replacement from [fg_begin, fg_end); sorted ascending.
std::vector<int> sample_pgm_mask(int fg_begin, int fg_end, double p, std::mt19937_64& rng);

// TrainItem with the given positions marked attention-invisible.
TrainItem to_train_item(const EncodedInstance& instance, const std::vector<int>& pgm_positions = {});

// The token-id prompt an initial (non-refinement) generation starts from.
std::vector<int> finetune_prompt_ids(const Vocab& vocab, const std::string& nl);

// Prompt ids for a refinement step; when include_feedback is false the EF
// segment is blanked while both surrounding prefixes stay in place.
std::vector<int> refine_prompt_ids(const Vocab& vocab, const std::string& nl, const std::string& fg,
                                   const std::string& ef, bool include_feedback = true);

}  // namespace cycle
