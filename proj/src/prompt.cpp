#include "cycle/prompt.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "cycle/rng.hpp"

namespace cycle {

namespace {

std::string docstring(const std::string& nl) { return "\"\"\"" + nl + "\"\"\"\n"; }

std::string comment_lines(const std::string& text) {
    std::string out;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t nl = text.find('\n', pos);
        std::string line = text.substr(pos, nl == std::string::npos ? std::string::npos : nl - pos);
        out += "# " + line + "\n";
        if (nl == std::string::npos) break;
        pos = nl + 1;
    }
    return out;
}

void append(std::vector<int>& ids, const std::vector<int>& more) {
    ids.insert(ids.end(), more.begin(), more.end());
}

}  // namespace

std::string aggregate_prompt(const std::string& nl, const std::string& fg, const std::string& ef) {
    if (nl.empty() || fg.empty() || ef.empty()) {
        throw EmptyComponent("aggregate_prompt requires non-empty nl, fg, and ef");
    }
    std::string out = docstring(nl);
    out += Vocab::kNegPrefixText;
    out += fg;
    out += '\n';
    out += Vocab::kExecPrefixText;
    out += comment_lines(ef);
    out += Vocab::kPosPrefixText;
    return out;
}

EncodedInstance encode_finetune(const Vocab& vocab, const std::string& nl,
                                const std::string& solution, int context_len) {
    if (nl.empty() || solution.empty()) throw EmptyComponent("empty finetune component");
    EncodedInstance inst;
    append(inst.ids, vocab.encode(docstring(nl)));
    inst.ids.push_back(Vocab::kPosPrefix);
    std::size_t target_begin = inst.ids.size();
    append(inst.ids, vocab.encode(solution));
    inst.ids.push_back(Vocab::kEos);
    if (static_cast<int>(inst.ids.size()) > context_len) {
        throw ContextOverflow("finetune instance exceeds context length");
    }
    inst.loss_mask.assign(inst.ids.size(), 0);
    std::fill(inst.loss_mask.begin() + static_cast<std::ptrdiff_t>(target_begin),
              inst.loss_mask.end(), 1);
    return inst;
}

EncodedInstance encode_refine(const Vocab& vocab, const RefineInstance& instance, int context_len) {
    if (instance.nl.empty() || instance.fg.empty() || instance.ef.empty() ||
        instance.target.empty()) {
        throw EmptyComponent("empty refine component");
    }
    EncodedInstance inst;
    append(inst.ids, vocab.encode(docstring(instance.nl)));
    inst.ids.push_back(Vocab::kNegPrefix);
    inst.fg_begin = static_cast<int>(inst.ids.size());
    append(inst.ids, vocab.encode(instance.fg));
    inst.fg_end = static_cast<int>(inst.ids.size());
    append(inst.ids, vocab.encode("\n"));
    inst.ids.push_back(Vocab::kExecPrefix);
    append(inst.ids, vocab.encode(comment_lines(instance.ef)));
    inst.ids.push_back(Vocab::kPosPrefix);
    std::size_t target_begin = inst.ids.size();
    append(inst.ids, vocab.encode(instance.target));
    inst.ids.push_back(Vocab::kEos);
    if (static_cast<int>(inst.ids.size()) > context_len) {
        throw ContextOverflow("refine instance exceeds context length");
    }
    inst.loss_mask.assign(inst.ids.size(), 0);
    std::fill(inst.loss_mask.begin() + static_cast<std::ptrdiff_t>(target_begin),
              inst.loss_mask.end(), 1);
    return inst;
}

std::vector<int> sample_pgm_mask(int fg_begin, int fg_end, double p, std::mt19937_64& rng) {
    if (p < 0.0 || p > 1.0) throw std::invalid_argument("pgm ratio must be in [0, 1]");
    const int span = std::max(0, fg_end - fg_begin);
    const int count = static_cast<int>(std::llround(p * span));
    std::vector<int> positions(static_cast<std::size_t>(span));
    for (int i = 0; i < span; ++i) positions[static_cast<std::size_t>(i)] = fg_begin + i;
    // Partial Fisher-Yates: the first `count` slots are a uniform subset.
    for (int i = 0; i < count; ++i) {
        int j = static_cast<int>(rand_int(rng, i, span - 1));
        std::swap(positions[static_cast<std::size_t>(i)], positions[static_cast<std::size_t>(j)]);
    }
    positions.resize(static_cast<std::size_t>(count));
    std::sort(positions.begin(), positions.end());
    return positions;
}

TrainItem to_train_item(const EncodedInstance& instance, const std::vector<int>& pgm_positions) {
    TrainItem item;
    item.ids = instance.ids;
    item.loss_mask = instance.loss_mask;
    if (!pgm_positions.empty()) {
        item.invisible.assign(instance.ids.size(), 0);
        for (int pos : pgm_positions) {
            if (pos < instance.fg_begin || pos >= instance.fg_end) {
                throw std::invalid_argument("pgm position outside the faulty-generation span");
            }
            item.invisible[static_cast<std::size_t>(pos)] = 1;
        }
    }
    return item;
}

std::vector<int> finetune_prompt_ids(const Vocab& vocab, const std::string& nl) {
    std::vector<int> ids = vocab.encode(docstring(nl));
    ids.push_back(Vocab::kPosPrefix);
    return ids;
}

std::vector<int> refine_prompt_ids(const Vocab& vocab, const std::string& nl, const std::string& fg,
                                   const std::string& ef, bool include_feedback) {
    std::vector<int> ids = vocab.encode(docstring(nl));
    ids.push_back(Vocab::kNegPrefix);
    append(ids, vocab.encode(fg));
    append(ids, vocab.encode("\n"));
    ids.push_back(Vocab::kExecPrefix);
    if (include_feedback) append(ids, vocab.encode(comment_lines(ef)));
    ids.push_back(Vocab::kPosPrefix);
    return ids;
}

}  // namespace cycle
