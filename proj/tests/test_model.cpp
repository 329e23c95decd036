#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <random>
#include <vector>

#include "cycle/model.hpp"
#include "cycle/rng.hpp"

using namespace cycle;

namespace {

ModelConfig tiny_config(int vocab = 11) {
    ModelConfig cfg;
    cfg.layers = 2;
    cfg.heads = 2;
    cfg.dim = 16;
    cfg.context_len = 32;
    cfg.vocab_size = vocab;
    return cfg;
}

TrainItem random_item(std::mt19937_64& rng, int vocab, int len, bool with_invisible) {
    TrainItem item;
    for (int t = 0; t < len; ++t) {
        item.ids.push_back(static_cast<int>(rand_int(rng, 0, vocab - 1)));
        item.loss_mask.push_back(t >= len / 2 ? 1 : 0);
    }
    if (with_invisible) {
        item.invisible.assign(item.ids.size(), 0);
        item.invisible[1] = 1;
        item.invisible[2] = 1;
    }
    return item;
}

}  // namespace

TEST_CASE("lr_at follows warmup then cosine") {
    CHECK(lr_at(0, 10, 100, 1e-3, 1e-5) == 0.0);
    CHECK(lr_at(10, 10, 100, 1e-3, 1e-5) == doctest::Approx(1e-3));
    CHECK(lr_at(5, 10, 100, 1e-3, 1e-5) == doctest::Approx(5e-4));
    // tau = 1/2 -> midpoint
    CHECK(lr_at(55, 10, 100, 1e-3, 1e-5) == doctest::Approx((1e-3 + 1e-5) / 2.0));
    CHECK(lr_at(100, 10, 100, 1e-3, 1e-5) == doctest::Approx(1e-5));
    CHECK_THROWS_AS(lr_at(-1, 10, 100, 1e-3, 1e-5), InvalidSchedule);
    CHECK_THROWS_AS(lr_at(101, 10, 100, 1e-3, 1e-5), InvalidSchedule);
    CHECK_THROWS_AS(lr_at(5, 100, 100, 1e-3, 1e-5), InvalidSchedule);
    CHECK_THROWS_AS(lr_at(5, 10, 100, 1e-5, 1e-3), InvalidSchedule);
}

TEST_CASE("loss_masked on uniform logits equals ln(vocab)") {
    MatD logits = MatD::Zero(3, 4);
    std::vector<int> targets = {1, 2, 3};
    std::vector<char> mask = {1, 1, 1};
    CHECK(loss_masked(logits, targets, mask) == doctest::Approx(std::log(4.0)));
}

TEST_CASE("loss_masked on a confident correct position is near zero") {
    MatD logits = MatD::Zero(2, 4);
    logits(1, 2) = 100.0;
    std::vector<int> targets = {0, 2};
    std::vector<char> mask = {0, 1};
    CHECK(loss_masked(logits, targets, mask) == doctest::Approx(0.0).epsilon(1e-9));
    CHECK_THROWS_AS(loss_masked(logits, targets, {0, 0}), EmptyLossMask);
}

TEST_CASE("loss gradient is exactly zero at mask-false rows and matches finite differences") {
    std::mt19937_64 rng(5);
    MatD logits(4, 6);
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 6; ++j) logits(i, j) = rand_real(rng) * 4.0 - 2.0;
    }
    std::vector<int> targets = {1, 5, 0, 3};
    std::vector<char> mask = {1, 0, 1, 0};
    MatD grad = loss_masked_grad(logits, targets, mask);
    for (int j = 0; j < 6; ++j) {
        CHECK(grad(1, j) == 0.0);  // exact zero, not approximately
        CHECK(grad(3, j) == 0.0);
    }
    const double h = 1e-6;
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 6; ++j) {
            MatD lo = logits, hi = logits;
            lo(i, j) -= h;
            hi(i, j) += h;
            double fd = (loss_masked(hi, targets, mask) - loss_masked(lo, targets, mask)) / (2 * h);
            CHECK(grad(i, j) == doctest::Approx(fd).epsilon(1e-5));
        }
    }
}

TEST_CASE("analytic gradients match central finite differences") {
    Transformer<double> model(tiny_config(), 123);
    std::mt19937_64 rng(99);
    TrainItem item_a = random_item(rng, 11, 12, true);
    TrainItem item_b = random_item(rng, 11, 9, false);
    std::vector<const TrainItem*> batch = {&item_a, &item_b};

    model.zero_grads();
    model.accumulate_batch(batch);

    // flatten: sample 500 coordinates uniformly over all parameters
    std::vector<std::pair<std::size_t, std::size_t>> coords;  // tensor idx, flat offset
    std::size_t total = 0;
    for (std::size_t t = 0; t < model.tensors().size(); ++t) {
        total += static_cast<std::size_t>(model.tensors()[t].w.size());
    }
    for (int s = 0; s < 500; ++s) {
        std::size_t flat = static_cast<std::size_t>(
            rand_int(rng, 0, static_cast<std::int64_t>(total) - 1));
        for (std::size_t t = 0; t < model.tensors().size(); ++t) {
            std::size_t n = static_cast<std::size_t>(model.tensors()[t].w.size());
            if (flat < n) {
                coords.push_back({t, flat});
                break;
            }
            flat -= n;
        }
    }

    const double h = 1e-5;
    int good = 0;
    double worst = 0.0;
    for (auto [t, off] : coords) {
        double* w = model.tensors()[t].w.data();
        double saved = w[off];
        w[off] = saved + h;
        double up = model.batch_loss(batch);
        w[off] = saved - h;
        double down = model.batch_loss(batch);
        w[off] = saved;
        double fd = (up - down) / (2 * h);
        double analytic = model.tensors()[t].g.data()[off];
        double rel = std::abs(fd - analytic) / std::max({std::abs(fd), std::abs(analytic), 1e-8});
        worst = std::max(worst, rel);
        if (rel <= 1e-4) ++good;
    }
    CHECK(good >= 495);  // >= 99% of 500
    CHECK(worst <= 1e-3);
}

TEST_CASE("causality: a later token never affects earlier logits") {
    Transformer<double> model(tiny_config(), 7);
    std::mt19937_64 rng(3);
    std::vector<int> ids;
    for (int t = 0; t < 10; ++t) ids.push_back(static_cast<int>(rand_int(rng, 0, 10)));
    MatD base = model.forward(ids);
    for (int t = 1; t < 10; ++t) {
        std::vector<int> changed = ids;
        changed[static_cast<std::size_t>(t)] = (changed[static_cast<std::size_t>(t)] + 1) % 11;
        MatD out = model.forward(changed);
        for (int s = 0; s < t; ++s) {
            CHECK((out.row(s) - base.row(s)).cwiseAbs().maxCoeff() == 0.0);
        }
    }
}

TEST_CASE("PGM invisibility: masked positions do not influence other logits") {
    Transformer<double> model(tiny_config(), 17);
    std::mt19937_64 rng(29);
    for (int trial = 0; trial < 100; ++trial) {
        int len = static_cast<int>(rand_int(rng, 4, 16));
        std::vector<int> ids;
        for (int t = 0; t < len; ++t) ids.push_back(static_cast<int>(rand_int(rng, 0, 10)));
        std::vector<char> invisible(static_cast<std::size_t>(len), 0);
        int pos = static_cast<int>(rand_int(rng, 0, len - 1));
        invisible[static_cast<std::size_t>(pos)] = 1;

        MatD base = model.forward(ids, &invisible);
        std::vector<int> changed = ids;
        changed[static_cast<std::size_t>(pos)] = (ids[static_cast<std::size_t>(pos)] + 5) % 11;
        MatD out = model.forward(changed, &invisible);
        for (int s = 0; s < len; ++s) {
            if (s == pos) continue;
            CHECK((out.row(s) - base.row(s)).cwiseAbs().maxCoeff() <= 1e-9);
        }
    }
}

TEST_CASE("attention rows are probability distributions") {
    Transformer<double> model(tiny_config(), 11);
    std::vector<int> ids = {1, 2, 3, 4, 5, 6, 7, 8};
    std::vector<char> invisible = {0, 1, 0, 0, 1, 0, 0, 0};
    Transformer<double>::Cache cache;
    model.forward_cached(ids, &invisible, cache);
    for (const auto& layer : cache.layers) {
        for (const auto& probs : layer.probs) {
            for (int t = 0; t < probs.rows(); ++t) {
                double sum = probs.row(t).sum();
                CHECK(std::abs(sum - 1.0) <= 1e-12);
                for (int s = 0; s < probs.cols(); ++s) {
                    if (s > t) CHECK(probs(t, s) == 0.0);        // causal
                    if (invisible[static_cast<std::size_t>(s)]) {
                        CHECK(probs(t, s) == 0.0);               // PGM key removal, self included
                    }
                }
            }
        }
    }
}

TEST_CASE("single-token input gives one logits row") {
    Transformer<double> model(tiny_config(), 11);
    MatD out = model.forward({3});
    CHECK(out.rows() == 1);
    CHECK(out.cols() == 11);
    CHECK_THROWS_AS(model.forward(std::vector<int>(40, 1)), ContextOverflow);
    CHECK_THROWS_AS(model.forward({}), std::invalid_argument);
}

TEST_CASE("training is deterministic and lr=0 leaves parameters unchanged") {
    std::mt19937_64 rng(17);
    TrainItem item = random_item(rng, 11, 10, false);
    std::vector<const TrainItem*> batch = {&item};

    Transformer<double> a(tiny_config(), 55);
    Transformer<double> b(tiny_config(), 55);
    for (int s = 0; s < 5; ++s) {
        double la = a.train_batch(batch, 1e-3);
        double lb = b.train_batch(batch, 1e-3);
        CHECK(la == lb);
    }
    for (std::size_t t = 0; t < a.tensors().size(); ++t) {
        CHECK((a.tensors()[t].w - b.tensors()[t].w).cwiseAbs().maxCoeff() == 0.0);
    }

    Transformer<double> c(tiny_config(), 55);
    MatD before = c.tensors()[0].w;
    double loss = c.train_batch(batch, 0.0);
    CHECK(std::isfinite(loss));
    CHECK((c.tensors()[0].w - before).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("loss strictly decreases over the first 20 steps on a tiny batch") {
    std::mt19937_64 rng(19);
    TrainItem item = random_item(rng, 11, 12, false);
    std::vector<const TrainItem*> batch = {&item};
    Transformer<double> model(tiny_config(), 2024);
    std::vector<double> losses;
    for (int s = 0; s < 20; ++s) losses.push_back(model.train_batch(batch, 3e-3));
    for (std::size_t s = 1; s < losses.size(); ++s) CHECK(losses[s] < losses[s - 1]);
}

TEST_CASE("checkpoint round trip preserves behavior") {
    ModelConfig cfg = tiny_config();
    auto model = create_model(cfg, 77);
    std::string path = "ckpt_roundtrip_test.bin";
    model->save(path);
    auto loaded = load_model(path);
    CHECK(loaded->config().layers == cfg.layers);
    CHECK(loaded->config().vocab_size == cfg.vocab_size);
    CHECK(loaded->step() == model->step());

    std::mt19937_64 rng(31);
    TrainItem item = random_item(rng, 11, 10, false);
    std::vector<const TrainItem*> batch = {&item};
    CHECK(model->batch_loss(batch) == loaded->batch_loss(batch));
    std::remove(path.c_str());
}

TEST_CASE("incremental decoder matches the full forward pass") {
    auto model = create_model(tiny_config(), 91);
    std::vector<int> prompt = {1, 4, 2, 9, 3};
    auto decoder = model->make_decoder();
    Eigen::VectorXd inc = decoder->prime(prompt);

    // full-forward oracle at the same positions
    Transformer<double> full(tiny_config(), 91);
    MatD logits = full.forward(prompt);
    CHECK((inc - logits.row(logits.rows() - 1).transpose()).cwiseAbs().maxCoeff() <= 1e-9);

    std::vector<int> extended = prompt;
    for (int tok : {5, 7, 0}) {
        Eigen::VectorXd next = decoder->append(tok);
        extended.push_back(tok);
        MatD ref = full.forward(extended);
        CHECK((next - ref.row(ref.rows() - 1).transpose()).cwiseAbs().maxCoeff() <= 1e-9);
    }
    CHECK(decoder->remaining_capacity() == tiny_config().context_len - 8);

    auto clone = decoder->clone();
    CHECK((clone->append(2) - decoder->append(2)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("single precision trains and stays finite") {
    ModelConfig cfg = tiny_config();
    cfg.precision = "single";
    auto model = create_model(cfg, 13);
    std::mt19937_64 rng(47);
    TrainItem item = random_item(rng, 11, 10, false);
    std::vector<const TrainItem*> batch = {&item};
    double first = model->train_batch(batch, 1e-3);
    double later = 0.0;
    for (int s = 0; s < 10; ++s) later = model->train_batch(batch, 1e-3);
    CHECK(std::isfinite(later));
    CHECK(later < first);
}

TEST_CASE("config validation") {
    ModelConfig cfg = tiny_config();
    cfg.heads = 3;  // 16 % 3 != 0
    CHECK_THROWS(cfg.validate());
    cfg = tiny_config();
    cfg.vocab_size = 0;
    CHECK_THROWS(cfg.validate());
    cfg = tiny_config();
    cfg.precision = "half";
    CHECK_THROWS(cfg.validate());
}
