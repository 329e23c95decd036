#include "cycle/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <stdexcept>

#include <json.hpp>

namespace cycle {

namespace {

const char* kSpecialNames[7] = {
    "<BOS>", "<EOS>", "<PAD>", "<NEG_PREFIX>", "<EXEC_PREFIX>", "<POS_PREFIX>", "<UNK>",
};

bool is_special_name(const std::string& token) {
    for (const char* name : kSpecialNames) {
        if (token == name) return true;
    }
    return false;
}

const std::vector<std::string>& fixed_tokens() {
    static const std::vector<std::string> tokens = {
        // MiniLang keywords, builtins, identifiers
        "return", "max", "min", "abs", "lt", "eq", "ite",
        "x", "y", "z", "t0", "t1", "t2", "t3",
        // operators and punctuation
        "+", "-", "*", "/", "(", ")", ",", "=", ".", ":", "#", "\"\"\"",
        " ", "\n",
        // digits
        "0", "1", "2", "3", "4", "5", "6", "7", "8", "9",
        // feedback vocabulary
        "ALL", "TESTS", "PASSED", "FAILED", "case", "input", "expected", "got",
        "ERROR", "Syntax", "DivByZero", "Overflow", "UnboundIdentifier",
        "StepLimitExceeded",
    };
    return tokens;
}

}  // namespace

void Vocab::add(const std::string& token) {
    if (token_to_id_.count(token)) return;
    int id = static_cast<int>(id_to_token_.size());
    id_to_token_.push_back(token);
    token_to_id_.emplace(token, id);
}

void Vocab::finish() {
    by_first_char_.clear();
    max_token_len_ = 0;
    for (int id = kUnk + 1; id < size(); ++id) {
        const std::string& tok = id_to_token_[static_cast<std::size_t>(id)];
        by_first_char_[tok[0]].push_back(id);
        max_token_len_ = std::max(max_token_len_, tok.size());
    }
    for (auto& [ch, ids] : by_first_char_) {
        std::sort(ids.begin(), ids.end(), [this](int a, int b) {
            const std::string& ta = id_to_token_[static_cast<std::size_t>(a)];
            const std::string& tb = id_to_token_[static_cast<std::size_t>(b)];
            if (ta.size() != tb.size()) return ta.size() > tb.size();
            return ta < tb;
        });
    }
}

Vocab Vocab::build(const std::vector<std::string>& corpus_texts) {
    Vocab vocab;
    for (const char* name : kSpecialNames) vocab.add(name);
    for (const std::string& tok : fixed_tokens()) vocab.add(tok);
    // Harvest lowercase words from the corpus texts, sorted for determinism.
    std::set<std::string> words;
    for (const std::string& text : corpus_texts) {
        std::string word;
        for (char c : text) {
            if (std::islower(static_cast<unsigned char>(c))) {
                word.push_back(c);
            } else {
                if (!word.empty()) words.insert(word);
                word.clear();
            }
        }
        if (!word.empty()) words.insert(word);
    }
    for (const std::string& word : words) vocab.add(word);
    vocab.finish();
    return vocab;
}

std::vector<int> Vocab::encode(const std::string& text) const {
    std::vector<int> ids;
    std::size_t pos = 0;
    std::size_t unk_start = std::string::npos;
    while (pos < text.size()) {
        int matched = -1;
        std::size_t matched_len = 0;
        auto it = by_first_char_.find(text[pos]);
        if (it != by_first_char_.end()) {
            for (int id : it->second) {
                const std::string& tok = id_to_token_[static_cast<std::size_t>(id)];
                if (text.compare(pos, tok.size(), tok) == 0) {
                    // Word tokens must not match inside a longer alphanumeric run.
                    bool word_like = std::isalnum(static_cast<unsigned char>(tok.back()));
                    if (word_like && pos + tok.size() < text.size() &&
                        std::isalpha(static_cast<unsigned char>(text[pos + tok.size()])) &&
                        std::isalpha(static_cast<unsigned char>(tok.back()))) {
                        continue;
                    }
                    matched = id;
                    matched_len = tok.size();
                    break;
                }
            }
        }
        if (matched >= 0) {
            if (unk_start != std::string::npos) {
                ids.push_back(kUnk);
                unk_start = std::string::npos;
            }
            ids.push_back(matched);
            pos += matched_len;
        } else {
            if (unk_start == std::string::npos) unk_start = pos;
            ++pos;
        }
    }
    if (unk_start != std::string::npos) ids.push_back(kUnk);
    return ids;
}

std::string Vocab::decode(const std::vector<int>& ids) const {
    std::string out;
    for (int id : ids) {
        if (id < 0 || id >= size()) {
            throw std::out_of_range("token id out of range: " + std::to_string(id));
        }
        switch (id) {
            case kBos:
            case kEos:
            case kPad:
            case kUnk:
                break;
            case kNegPrefix:
                out += kNegPrefixText;
                break;
            case kExecPrefix:
                out += kExecPrefixText;
                break;
            case kPosPrefix:
                out += kPosPrefixText;
                break;
            default:
                out += id_to_token_[static_cast<std::size_t>(id)];
                break;
        }
    }
    return out;
}

const std::string& Vocab::token(int id) const {
    if (id < 0 || id >= size()) {
        throw std::out_of_range("token id out of range: " + std::to_string(id));
    }
    return id_to_token_[static_cast<std::size_t>(id)];
}

int Vocab::id_of(const std::string& token) const {
    auto it = token_to_id_.find(token);
    return it == token_to_id_.end() ? -1 : it->second;
}

void Vocab::save(const std::string& path) const {
    nlohmann::json j = id_to_token_;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write vocab file: " + path);
    out << j.dump() << '\n';
}

Vocab Vocab::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read vocab file: " + path);
    nlohmann::json j;
    in >> j;
    Vocab vocab;
    for (const auto& tok : j) vocab.add(tok.get<std::string>());
    if (vocab.size() <= kUnk || !is_special_name(vocab.id_to_token_[0])) {
        throw std::runtime_error("malformed vocab file: " + path);
    }
    vocab.finish();
    return vocab;
}

}  // namespace cycle
