#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include "cycle/pipeline.hpp"

using namespace cycle;

namespace {

// Emits a fixed token sequence (then EOS forever) regardless of the prompt.
class ScriptedDecoder : public Decoder {
public:
    ScriptedDecoder(std::vector<int> script, int vocab_size)
        : script_(std::move(script)), vocab_(vocab_size) {}

    Eigen::VectorXd prime(const std::vector<int>&) override { return logits(); }
    Eigen::VectorXd append(int) override {
        ++cursor_;
        return logits();
    }
    std::unique_ptr<Decoder> clone() const override {
        return std::make_unique<ScriptedDecoder>(*this);
    }
    int remaining_capacity() const override { return 1 << 20; }

private:
    Eigen::VectorXd logits() const {
        Eigen::VectorXd out = Eigen::VectorXd::Constant(vocab_, -100.0);
        int tok = cursor_ < script_.size() ? script_[cursor_] : Vocab::kEos;
        out(tok) = 100.0;
        return out;
    }

    std::vector<int> script_;
    std::size_t cursor_ = 0;
    int vocab_ = 0;
};

struct Fixture {
    Vocab vocab;
    Problem problem;

    Fixture()
        : vocab(Vocab::build({"given x, return x plus one.", "return x + 1", "return x + 2",
                              "return x - 1", "return 0"})) {
        problem.id = "toy-train-0001";
        problem.description = "given x, return x plus one.";
        problem.arity = 1;
        problem.canonical_solutions = {"return x + 1"};
        problem.suite = {{{0}, 1}, {{4}, 5}, {{-2}, -1}};
        problem.split = "train";
    }

    DecoderFactory scripted(std::vector<std::string> sources) const {
        auto scripts = std::make_shared<std::vector<std::string>>(std::move(sources));
        auto cursor = std::make_shared<std::size_t>(0);
        const Vocab* v = &vocab;
        return [scripts, cursor, v]() -> std::unique_ptr<Decoder> {
            std::size_t i = std::min(*cursor, scripts->size() - 1);
            ++*cursor;
            return std::make_unique<ScriptedDecoder>(v->encode((*scripts)[i]), v->size());
        };
    }
};

EncodedInstance dummy_instance() {
    EncodedInstance inst;
    inst.ids = {7, 8, 9, Vocab::kEos};
    inst.loss_mask = {0, 1, 1, 1};
    return inst;
}

}  // namespace

TEST_CASE("build_finetune_instances drops and counts oversized instances") {
    Dataset dataset = generate_problems(7, {{"train", 6}});
    std::vector<std::string> texts;
    for (const Problem& p : dataset.problems) {
        texts.push_back(p.description);
        for (const std::string& s : p.canonical_solutions) texts.push_back(s);
    }
    Vocab vocab = Vocab::build(texts);

    std::size_t dropped = 0;
    auto all = build_finetune_instances(dataset, "train", vocab, 512, &dropped);
    CHECK(dropped == 0);
    CHECK_FALSE(all.empty());

    std::size_t dropped_small = 0;
    auto none = build_finetune_instances(dataset, "train", vocab, 3, &dropped_small);
    CHECK(none.empty());
    CHECK(dropped_small == all.size());
}

TEST_CASE("train_phase: step count, validation cadence, determinism") {
    Dataset dataset = generate_problems(7, {{"train", 6}, {"valid", 2}});
    std::vector<std::string> texts;
    for (const Problem& p : dataset.problems) {
        texts.push_back(p.description);
        for (const std::string& s : p.canonical_solutions) texts.push_back(s);
    }
    Vocab vocab = Vocab::build(texts);
    auto train = build_finetune_instances(dataset, "train", vocab, 256);
    auto valid = build_finetune_instances(dataset, "valid", vocab, 256);

    ModelConfig cfg{2, 2, 16, 256, vocab.size(), "double"};
    TrainSchedule schedule{2, 1e-3, 1e-5, 4};

    auto run = [&]() {
        auto model = create_model(cfg, 99);
        return train_phase(*model, train, 2, schedule, 0.0, 1234, &valid);
    };
    LossTrace a = run();
    LossTrace b = run();
    const std::size_t steps_per_epoch = (train.size() + 3) / 4;
    CHECK(a.step_losses.size() == steps_per_epoch * 2);
    CHECK(a.epoch_valid_losses.size() == 2);
    CHECK(a.step_losses == b.step_losses);  // bitwise determinism
    CHECK(a.epoch_valid_losses == b.epoch_valid_losses);
}

TEST_CASE("distill gathers faults, keeps the first correct, dedups execution") {
    Fixture fx;
    // 5 samples: faulty, duplicate faulty, correct, second correct (not kept),
    // a different faulty
    auto factory = fx.scripted({"return x + 2", "return x + 2", "return x + 1",
                                "return x + 1", "return x - 1"});
    ExecCache cache;
    DistillOptions options;
    options.n_samples = 5;
    options.decode = DecodeStrategy::greedy();
    options.jobs = 1;
    DistillReport report = distill(factory, fx.vocab, {&fx.problem}, cache, options);

    REQUIRE(report.per_problem.size() == 1);
    const ProblemDistill& entry = report.per_problem[0];
    CHECK(entry.n_sampled == 5);
    CHECK(entry.n_correct == 1);  // duplicates collapsed
    REQUIRE(entry.kept_correct.has_value());
    CHECK(*entry.kept_correct == "return x + 1");
    REQUIRE(entry.faulty.size() == 2);
    CHECK(entry.faulty[0].fg == "return x + 2");
    CHECK(entry.faulty[1].fg == "return x - 1");
    CHECK(entry.faulty[0].ef.rfind("FAILED", 0) == 0);

    // distinct sources execute once; the two duplicates only hit the cache
    CHECK(report.cache_misses == 3);
    CHECK(report.cache_hits == 2);
}

TEST_CASE("distill on an always-correct model yields no faults") {
    Fixture fx;
    auto factory = fx.scripted({"return x + 1"});
    ExecCache cache;
    DistillOptions options;
    options.n_samples = 4;
    options.decode = DecodeStrategy::greedy();
    DistillReport report = distill(factory, fx.vocab, {&fx.problem}, cache, options);
    CHECK(report.per_problem[0].faulty.empty());
    CHECK(report.per_problem[0].kept_correct.has_value());
}

TEST_CASE("build_refine_dataset pairs faults with verified targets") {
    Fixture fx;
    DistillReport report;
    ProblemDistill entry;
    entry.problem_id = fx.problem.id;
    entry.n_sampled = 3;
    entry.faulty = {{"return x + 2", "fb"}, {"", "fb-empty"}};

    SUBCASE("own correct generation wins over the canonical") {
        entry.n_correct = 1;
        entry.kept_correct = "return 1 + x";  // equivalent but distinct text
        report.per_problem = {entry};
        RefineData data = build_refine_dataset(report, {&fx.problem});
        REQUIRE(data.refine.size() == 1);  // empty fg dropped
        CHECK(data.refine[0].instance.target == "return 1 + x");
        CHECK(data.refine[0].instance.fg == "return x + 2");
        CHECK(data.refine[0].instance.nl == fx.problem.description);
        REQUIRE(data.reinforce.size() == 1);
        CHECK(data.reinforce[0].solution == "return 1 + x");
    }
    SUBCASE("canonical fallback when nothing correct was kept") {
        report.per_problem = {entry};
        RefineData data = build_refine_dataset(report, {&fx.problem});
        REQUIRE(data.refine.size() == 1);
        CHECK(data.refine[0].instance.target == "return x + 1");
        CHECK(data.reinforce.empty());
    }
    SUBCASE("zero faults still produce the reinforce set") {
        entry.faulty.clear();
        entry.kept_correct = "return x + 1";
        report.per_problem = {entry};
        RefineData data = build_refine_dataset(report, {&fx.problem});
        CHECK(data.refine.empty());
        CHECK(data.reinforce.size() == 1);
    }
    SUBCASE("a target failing the suite is rejected") {
        entry.kept_correct = "return x + 2";  // wrong: must be revalidated
        report.per_problem = {entry};
        CHECK_THROWS(build_refine_dataset(report, {&fx.problem}));
    }
}

TEST_CASE("mix_epoch composes exact counts") {
    std::vector<EncodedInstance> refine_pool(30, dummy_instance());
    std::vector<EncodedInstance> canonical_pool(500, dummy_instance());
    std::mt19937_64 rng(5);

    auto count_refine = [&](const std::vector<const EncodedInstance*>& stream) {
        std::size_t n = 0;
        for (const EncodedInstance* p : stream) {
            if (p >= refine_pool.data() && p < refine_pool.data() + refine_pool.size()) ++n;
        }
        return n;
    };

    auto stream = mix_epoch(refine_pool, canonical_pool, 0.25, 400, rng);
    CHECK(stream.size() == 400);
    CHECK(count_refine(stream) == 100);  // exactly ratio * E

    CHECK(count_refine(mix_epoch(refine_pool, canonical_pool, 0.0, 200, rng)) == 0);
    CHECK(count_refine(mix_epoch(refine_pool, canonical_pool, 1.0, 200, rng)) == 200);

    CHECK_THROWS_AS(mix_epoch({}, canonical_pool, 0.5, 100, rng), InvalidConfig);
    CHECK_THROWS_AS(mix_epoch(refine_pool, {}, 0.5, 100, rng), InvalidConfig);
    CHECK_THROWS_AS(mix_epoch(refine_pool, canonical_pool, 1.5, 100, rng), InvalidConfig);
    CHECK_THROWS_AS(mix_epoch(refine_pool, canonical_pool, 0.5, 0, rng), InvalidConfig);
    // empty pool is fine when the mixture never needs it
    CHECK(mix_epoch({}, canonical_pool, 0.0, 50, rng).size() == 50);
}

TEST_CASE("distill/refine data round-trip through JSONL") {
    Fixture fx;
    auto factory = fx.scripted({"return x + 2", "return x + 1", "return 0"});
    ExecCache cache;
    DistillOptions options;
    options.n_samples = 3;
    options.decode = DecodeStrategy::greedy();
    DistillReport report = distill(factory, fx.vocab, {&fx.problem}, cache, options);

    std::string dpath = "distill_roundtrip_test.jsonl";
    save_distill_report(report, dpath);
    DistillReport loaded = load_distill_report(dpath);
    REQUIRE(loaded.per_problem.size() == report.per_problem.size());
    CHECK(loaded.cache_hits == report.cache_hits);
    CHECK(loaded.per_problem[0].problem_id == report.per_problem[0].problem_id);
    CHECK(loaded.per_problem[0].n_correct == report.per_problem[0].n_correct);
    CHECK(loaded.per_problem[0].faulty.size() == report.per_problem[0].faulty.size());
    CHECK(loaded.per_problem[0].faulty[0].ef == report.per_problem[0].faulty[0].ef);
    std::remove(dpath.c_str());

    RefineData data = build_refine_dataset(report, {&fx.problem});
    std::string rpath = "refine_roundtrip_test.jsonl";
    save_refine_data(data, rpath);
    RefineData rloaded = load_refine_data(rpath);
    REQUIRE(rloaded.refine.size() == data.refine.size());
    REQUIRE(rloaded.reinforce.size() == data.reinforce.size());
    for (std::size_t i = 0; i < data.refine.size(); ++i) {
        CHECK(rloaded.refine[i].instance.fg == data.refine[i].instance.fg);
        CHECK(rloaded.refine[i].instance.target == data.refine[i].instance.target);
        CHECK(rloaded.refine[i].problem_id == data.refine[i].problem_id);
    }
    std::remove(rpath.c_str());
}
