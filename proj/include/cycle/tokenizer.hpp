#pragma once

#include <string>
#include <unordered_map>
#include <vector>

namespace cycle {

// Closed word-level vocabulary over MiniLang source, description text, and
// feedback text. Specials occupy the first six ids, UNK the seventh; none of
// them are ever produced by plain-text segmentation.
class Vocab {
public:
    enum Special : int {
        kBos = 0,
        kEos = 1,
        kPad = 2,
        kNegPrefix = 3,
        kExecPrefix = 4,
        kPosPrefix = 5,
        kUnk = 6,
    };

    static constexpr const char* kNegPrefixText = "# INCORRECT SOLUTION\n";
    static constexpr const char* kExecPrefixText = "# EXECUTION RESULT\n";
    static constexpr const char* kPosPrefixText = "# CORRECT SOLUTION\n";

    static Vocab build(const std::vector<std::string>& corpus_texts);

    int size() const { return static_cast<int>(id_to_token_.size()); }

    // Greedy longest-match segmentation; unmatchable spans collapse to UNK.
    std::vector<int> encode(const std::string& text) const;

    // Concatenation of token texts. BOS/EOS/PAD/UNK render empty; the three
    // prefix specials render their template lines.
    std::string decode(const std::vector<int>& ids) const;

    const std::string& token(int id) const;
    int id_of(const std::string& token) const;

    void save(const std::string& path) const;
    static Vocab load(const std::string& path);

    bool operator==(const Vocab& other) const { return id_to_token_ == other.id_to_token_; }

private:
    void add(const std::string& token);
    void finish();

    std::vector<std::string> id_to_token_;
    std::unordered_map<std::string, int> token_to_id_;
    // Plain tokens grouped by first byte, longest first, for greedy matching.
    std::unordered_map<char, std::vector<int>> by_first_char_;
    std::size_t max_token_len_ = 0;
};

}  // namespace cycle
