#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "cycle/corpus.hpp"
#include "cycle/edit_distance.hpp"
#include "cycle/minilang.hpp"

using namespace cycle;

namespace {

// Full-matrix DP Levenshtein, kept separate from the production two-row
// implementation on purpose.
std::size_t dp_levenshtein(const std::string& a, const std::string& b) {
    std::vector<std::vector<std::size_t>> d(a.size() + 1, std::vector<std::size_t>(b.size() + 1));
    for (std::size_t i = 0; i <= a.size(); ++i) d[i][0] = i;
    for (std::size_t j = 0; j <= b.size(); ++j) d[0][j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j) {
            std::size_t sub = d[i - 1][j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            d[i][j] = std::min({d[i - 1][j] + 1, d[i][j - 1] + 1, sub});
        }
    }
    return d[a.size()][b.size()];
}

Vocab corpus_vocab(const Dataset& dataset) {
    std::vector<std::string> texts;
    for (const Problem& p : dataset.problems) {
        texts.push_back(p.description);
        for (const std::string& sol : p.canonical_solutions) texts.push_back(sol);
    }
    return Vocab::build(texts);
}

Problem make_problem(std::string id, std::string description, std::string split) {
    Problem p;
    p.id = std::move(id);
    p.description = std::move(description);
    p.arity = 1;
    p.canonical_solutions = {"return x"};
    p.suite = {{{0}, 0}, {{1}, 1}, {{-2}, -2}};
    p.split = std::move(split);
    return p;
}

}  // namespace

TEST_CASE("generation is deterministic in the seed") {
    auto counts = std::map<std::string, int>{{"train", 10}, {"valid", 3}, {"test", 5}};
    Dataset a = generate_problems(7, counts);
    Dataset b = generate_problems(7, counts);
    CHECK(a == b);
    Dataset c = generate_problems(8, counts);
    CHECK_FALSE(a == c);
}

TEST_CASE("every canonical solution passes its suite") {
    Dataset dataset = generate_problems(3, {{"train", 25}, {"test", 10}});
    for (const Problem& p : dataset.problems) {
        CHECK(p.suite.size() >= 4);
        CHECK(p.arity >= 1);
        CHECK(p.arity <= 3);
        CHECK_FALSE(p.canonical_solutions.empty());
        for (const std::string& sol : p.canonical_solutions) {
            CHECK(run_tests(sol, p.suite).all_pass);
        }
        // boundary coverage: at least one zero input and one negative input
        bool has_zero = false, has_negative = false;
        for (const TestCase& c : p.suite) {
            for (std::int64_t v : c.inputs) {
                if (v == 0) has_zero = true;
                if (v < 0) has_negative = true;
            }
        }
        CHECK(has_zero);
        CHECK(has_negative);
    }
}

TEST_CASE("ids are unique and splits disjoint") {
    Dataset dataset = generate_problems(9, {{"train", 15}, {"valid", 5}, {"test", 5}});
    std::set<std::string> ids;
    std::set<std::string> descriptions;
    for (const Problem& p : dataset.problems) {
        CHECK(ids.insert(p.id).second);
        CHECK(descriptions.insert(p.description).second);
    }
    CHECK(dataset.split("train").size() == 15);
    CHECK(dataset.split("valid").size() == 5);
    CHECK(dataset.split("test").size() == 5);
}

TEST_CASE("family weights steer generation") {
    Dataset affine_only = generate_problems(5, {{"train", 12}}, {1.0, 0.0, 0.0, 0.0});
    for (const Problem& p : affine_only.problems) {
        CHECK(p.id.rfind("affine-", 0) == 0);
    }
    CHECK_THROWS_AS(generate_problems(5, {{"train", 12}}, {0.5, 0.5, 0.5, 0.5}), InvalidConfig);
    CHECK_THROWS_AS(generate_problems(5, {{"train", 12}}, {2.0, -1.0, 0.0, 0.0}), InvalidConfig);
    CHECK_THROWS_AS(generate_problems(5, {{"train", 0}}), InvalidConfig);
    CHECK_THROWS_AS(generate_problems(5, {}), InvalidConfig);
}

TEST_CASE("filter_by_length keeps short descriptions and drops long ones") {
    Dataset dataset = generate_problems(13, {{"train", 8}});
    Vocab vocab = corpus_vocab(dataset);
    Dataset same = filter_by_length(dataset, vocab, 512);
    CHECK(same == dataset);
    Dataset empty = filter_by_length(dataset, vocab, 0);
    CHECK(empty.problems.empty());
}

TEST_CASE("fuzzy_dedup removes similar eval descriptions") {
    Dataset train;
    train.problems = {make_problem("t-1", "return max", "train")};
    Dataset eval_set;
    eval_set.problems = {
        make_problem("e-1", "return max", "test"),   // identical: similarity 1.0
        make_problem("e-2", "return min", "test"),   // distance 3 -> similarity 0.7
        make_problem("e-3", "aaaa", "test"),         // nothing shared with "return max"
    };
    // "max" -> "min" is two substitutions, so distance 2 over length 10
    CHECK(dp_levenshtein("return max", "return min") == 2);
    CHECK(normalized_similarity(std::string("return max"), std::string("return min")) ==
          doctest::Approx(0.8));
    Dataset out = fuzzy_dedup(eval_set, train, 0.60);
    REQUIRE(out.problems.size() == 1);
    CHECK(out.problems[0].id == "e-3");
}

TEST_CASE("dedup soundness on generated data") {
    Dataset dataset = generate_problems(21, {{"train", 20}, {"test", 10}});
    Dataset train;
    Dataset eval_set;
    for (const Problem& p : dataset.problems) {
        (p.split == "train" ? train : eval_set).problems.push_back(p);
    }
    const double threshold = 0.90;
    Dataset out = fuzzy_dedup(eval_set, train, threshold);
    for (const Problem& e : out.problems) {
        for (const Problem& t : train.problems) {
            double dist = static_cast<double>(dp_levenshtein(e.description, t.description));
            double denom = static_cast<double>(std::max(e.description.size(), t.description.size()));
            CHECK(1.0 - dist / denom <= threshold);
        }
    }
}

TEST_CASE("normalized similarity agrees with the DP oracle") {
    std::vector<std::string> samples = {"",     "a",         "ab",         "return max",
                                        "abcd", "return min", "given x,",  "aaaa", "bbbb"};
    for (const std::string& a : samples) {
        for (const std::string& b : samples) {
            CHECK(levenshtein(a, b) == dp_levenshtein(a, b));
        }
    }
    CHECK(normalized_similarity(std::string("aaaa"), std::string("bbbb")) == doctest::Approx(0.0));
}

TEST_CASE("save/load round trip") {
    Dataset dataset = generate_problems(31, {{"train", 3}});
    std::string path = "corpus_roundtrip_test.jsonl";
    save_dataset(dataset, path);
    Dataset loaded = load_dataset(path);
    CHECK(loaded == dataset);
    std::remove(path.c_str());
}

TEST_CASE("schema failures") {
    std::string path = "corpus_schema_test.jsonl";
    {
        std::ofstream out(path);  // empty file
    }
    CHECK_THROWS_AS(load_dataset(path), SchemaError);
    {
        std::ofstream out(path);
        out << "{\"schema\":\"cycle-corpus/1\",\"seed\":1,\"generator_version\":\"other-gen/9\"}\n";
    }
    try {
        load_dataset(path);
        CHECK(false);
    } catch (const SchemaError& e) {
        CHECK(std::string(e.what()).find("other-gen/9") != std::string::npos);
    }
    {
        std::ofstream out(path);
        out << "{\"schema\":\"wrong/0\"}\n";
    }
    CHECK_THROWS_AS(load_dataset(path), SchemaError);
    CHECK_THROWS_AS(load_dataset("does_not_exist.jsonl"), IoError);
    std::remove(path.c_str());
}
