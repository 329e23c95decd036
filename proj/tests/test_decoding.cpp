#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <vector>

#include "cycle/decoding.hpp"

using namespace cycle;

namespace {

// Position-indexed logits table; ignores token identity, so path scores are
// independent across steps and beam search is exact.
class ToyDecoder : public Decoder {
public:
    ToyDecoder(Eigen::MatrixXd table, int capacity) : table_(std::move(table)), capacity_(capacity) {}

    Eigen::VectorXd prime(const std::vector<int>& prompt) override {
        used_ = static_cast<int>(prompt.size());
        pos_ = 0;
        return row();
    }
    Eigen::VectorXd append(int) override {
        ++pos_;
        ++used_;
        return row();
    }
    std::unique_ptr<Decoder> clone() const override { return std::make_unique<ToyDecoder>(*this); }
    int remaining_capacity() const override { return capacity_ - used_; }

private:
    Eigen::VectorXd row() const {
        int r = std::min<int>(pos_, static_cast<int>(table_.rows()) - 1);
        return table_.row(r).transpose();
    }

    Eigen::MatrixXd table_;
    int capacity_ = 0;
    int pos_ = 0;
    int used_ = 0;
};

Eigen::VectorXd log_softmax_row(const Eigen::VectorXd& logits) {
    double mx = logits.maxCoeff();
    double lse = std::log((logits.array() - mx).exp().sum()) + mx;
    return logits.array() - lse;
}

// All sequences the search space admits: t tokens then EOS (t < max), or
// max non-EOS tokens; used as the brute-force oracle.
std::vector<BeamResult> enumerate_paths(const Eigen::MatrixXd& table, int max_new, int eos_id,
                                        int width) {
    std::vector<Eigen::VectorXd> logp;
    for (int r = 0; r < max_new; ++r) {
        int row = std::min<int>(r, static_cast<int>(table.rows()) - 1);
        logp.push_back(log_softmax_row(table.row(row).transpose()));
    }
    const int vocab = static_cast<int>(table.cols());
    std::vector<BeamResult> all;
    std::vector<int> path;
    auto rec = [&](auto&& self, int depth, double score) -> void {
        if (depth < max_new) {
            all.push_back({path, score + logp[static_cast<std::size_t>(depth)](eos_id)});
        } else {
            all.push_back({path, score});
            return;
        }
        for (int tok = 0; tok < vocab; ++tok) {
            if (tok == eos_id) continue;
            path.push_back(tok);
            self(self, depth + 1, score + logp[static_cast<std::size_t>(depth)](tok));
            path.pop_back();
        }
    };
    rec(rec, 0, 0.0);
    std::sort(all.begin(), all.end(), [](const BeamResult& a, const BeamResult& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.tokens < b.tokens;
    });
    all.resize(static_cast<std::size_t>(width));
    return all;
}

Eigen::MatrixXd toy_table() {
    // 3 decision steps, vocab 4, EOS = 3 kept improbable
    Eigen::MatrixXd table(3, 4);
    table << 2.0, 1.1, 0.3, -10.0,
             0.4, 2.2, 1.0, -10.0,
             1.5, 0.2, 2.4, -10.0;
    return table;
}

}  // namespace

TEST_CASE("nucleus with temperature below 1e-6 equals greedy") {
    ToyDecoder base(toy_table(), 100);
    std::mt19937_64 rng(1);
    auto greedy = generate(base, {9, 9}, 3, DecodeStrategy::greedy(), rng, 3);
    ToyDecoder again(toy_table(), 100);
    auto cold = generate(again, {9, 9}, 3, DecodeStrategy::nucleus(0.95, 1e-7), rng, 3);
    CHECK(greedy == cold);
    CHECK(greedy == std::vector<int>{0, 1, 2});
}

TEST_CASE("tiny top_p keeps only the argmax") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        ToyDecoder d(toy_table(), 100);
        auto out = generate(d, {0}, 3, DecodeStrategy::nucleus(0.05, 1.0), rng, 3);
        CHECK(out == std::vector<int>{0, 1, 2});
    }
}

TEST_CASE("fixed seed makes nucleus sampling reproducible") {
    std::mt19937_64 rng_a(42);
    std::mt19937_64 rng_b(42);
    ToyDecoder a(toy_table(), 100);
    ToyDecoder b(toy_table(), 100);
    auto strategy = DecodeStrategy::nucleus(0.95, 0.8);
    CHECK(generate(a, {0}, 3, strategy, rng_a, 3) == generate(b, {0}, 3, strategy, rng_b, 3));
}

TEST_CASE("top_p = 1 with temperature 1 samples the full distribution") {
    // a near-uniform row must eventually produce more than one distinct first token
    Eigen::MatrixXd table(1, 4);
    table << 0.0, 0.01, 0.02, -30.0;
    std::mt19937_64 rng(5);
    std::set<int> seen;
    for (int trial = 0; trial < 200; ++trial) {
        ToyDecoder d(table, 100);
        auto out = generate(d, {0}, 1, DecodeStrategy::nucleus(1.0, 1.0), rng, 3);
        REQUIRE(out.size() == 1);
        seen.insert(out[0]);
    }
    CHECK(seen.size() == 3);
}

TEST_CASE("generate stops at EOS") {
    Eigen::MatrixXd table(3, 4);
    table << 2.0, 0.0, 0.0, -10.0,
             0.0, 2.0, 0.0, -10.0,
             0.0, 0.0, 0.0, 10.0;  // EOS wins at the third step
    ToyDecoder d(table, 100);
    std::mt19937_64 rng(1);
    auto out = generate(d, {0}, 10, DecodeStrategy::greedy(), rng, 3);
    CHECK(out == std::vector<int>{0, 1});
}

TEST_CASE("generate respects max_new and context capacity") {
    Eigen::MatrixXd table = toy_table();
    std::mt19937_64 rng(1);
    ToyDecoder d(table, 100);
    CHECK(generate(d, {0}, 2, DecodeStrategy::greedy(), rng, 3).size() == 2);
    ToyDecoder tight(table, 4);  // prompt uses 2 slots
    auto out = generate(tight, {0, 0}, 10, DecodeStrategy::greedy(), rng, 3);
    CHECK(out.size() == 3);  // prime emits one, two appends fill the window
}

TEST_CASE("beam width 1 equals greedy token-for-token") {
    std::mt19937_64 rng(1);
    ToyDecoder a(toy_table(), 100);
    auto greedy = generate(a, {0}, 3, DecodeStrategy::greedy(), rng, 3);
    ToyDecoder b(toy_table(), 100);
    auto beams = beam_search(b, {0}, 1, 3, 3);
    REQUIRE(beams.size() == 1);
    CHECK(beams[0].tokens == greedy);
}

TEST_CASE("beam scores are non-increasing") {
    ToyDecoder d(toy_table(), 100);
    auto beams = beam_search(d, {0}, 5, 3, 3);
    for (std::size_t i = 1; i < beams.size(); ++i) {
        CHECK(beams[i].score <= beams[i - 1].score);
    }
}

TEST_CASE("beam matches exhaustive path enumeration on the toy distribution") {
    for (int width : {1, 2, 5, 8}) {
        ToyDecoder d(toy_table(), 100);
        auto beams = beam_search(d, {0}, width, 3, 3);
        auto oracle = enumerate_paths(toy_table(), 3, 3, width);
        REQUIRE(beams.size() == oracle.size());
        for (std::size_t i = 0; i < beams.size(); ++i) {
            CHECK(beams[i].tokens == oracle[i].tokens);
            CHECK(beams[i].score == doctest::Approx(oracle[i].score).epsilon(1e-12));
        }
    }
}

TEST_CASE("beam collects EOS-terminated candidates") {
    Eigen::MatrixXd table(2, 3);
    table << 1.0, 0.9, 1.1,   // EOS (id 2) is the best first move
             5.0, 0.0, -5.0;
    ToyDecoder d(table, 100);
    auto beams = beam_search(d, {0}, 2, 2, 2);
    REQUIRE(beams.size() == 2);
    CHECK(beams[0].tokens.empty());  // immediate EOS outranks everything
}

TEST_CASE("parse_strategy maps names and rejects unknowns") {
    CHECK(parse_strategy("greedy", 0.9, 0.5, 3).kind == DecodeStrategy::Kind::Greedy);
    DecodeStrategy n = parse_strategy("nucleus", 0.9, 0.5, 3);
    CHECK(n.kind == DecodeStrategy::Kind::Nucleus);
    CHECK(n.top_p == 0.9);
    CHECK(n.temperature == 0.5);
    DecodeStrategy b = parse_strategy("beam", 0.9, 0.5, 3);
    CHECK(b.kind == DecodeStrategy::Kind::Beam);
    CHECK(b.beam_width == 3);
    CHECK_THROWS(parse_strategy("sampling", 0.9, 0.5, 3));
}
