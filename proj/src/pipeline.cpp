#include "cycle/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include <json.hpp>

#include "cycle/parallel.hpp"
#include "cycle/rng.hpp"

namespace cycle {

namespace {

using nlohmann::json;

void shuffle_indices(std::vector<std::size_t>& indices, std::mt19937_64& rng) {
    for (std::size_t i = indices.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(rand_int(rng, 0, static_cast<std::int64_t>(i) - 1));
        std::swap(indices[i - 1], indices[j]);
    }
}

double validation_loss(const LanguageModel& model, const std::vector<EncodedInstance>& validation) {
    std::vector<TrainItem> items;
    std::vector<const TrainItem*> refs;
    items.reserve(validation.size());
    for (const EncodedInstance& inst : validation) items.push_back(to_train_item(inst));
    for (const TrainItem& item : items) refs.push_back(&item);
    return model.batch_loss(refs);
}

LossTrace run_epochs(LanguageModel& model,
                     const std::function<std::vector<const EncodedInstance*>(int)>& epoch_stream,
                     int epochs, const TrainSchedule& schedule, double pgm_ratio,
                     std::uint64_t seed, const std::vector<EncodedInstance>* validation) {
    if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
    if (schedule.batch_size < 1) throw std::invalid_argument("batch size must be >= 1");

    // Steps per epoch may vary with stream size; pin the schedule to the
    // first epoch's length, which is constant for all our streams.
    std::vector<const EncodedInstance*> first = epoch_stream(0);
    if (first.empty()) throw std::invalid_argument("no training instances");
    const long long steps_per_epoch =
        (static_cast<long long>(first.size()) + schedule.batch_size - 1) / schedule.batch_size;
    const long long total_steps = steps_per_epoch * epochs;
    const long long warmup = std::min<long long>(schedule.warmup_steps, total_steps - 1);

    LossTrace trace;
    std::mt19937_64 pgm_rng(derive_seed(seed, "pgm"));
    long long global_step = 0;
    for (int epoch = 0; epoch < epochs; ++epoch) {
        std::vector<const EncodedInstance*> stream = epoch == 0 ? std::move(first) : epoch_stream(epoch);
        for (std::size_t begin = 0; begin < stream.size(); begin += static_cast<std::size_t>(schedule.batch_size)) {
            std::size_t end = std::min(stream.size(), begin + static_cast<std::size_t>(schedule.batch_size));
            std::vector<TrainItem> items;
            items.reserve(end - begin);
            for (std::size_t i = begin; i < end; ++i) {
                const EncodedInstance& inst = *stream[i];
                std::vector<int> mask;
                if (pgm_ratio > 0.0 && inst.has_fg_span()) {
                    mask = sample_pgm_mask(inst.fg_begin, inst.fg_end, pgm_ratio, pgm_rng);
                }
                items.push_back(to_train_item(inst, mask));
            }
            std::vector<const TrainItem*> refs;
            refs.reserve(items.size());
            for (const TrainItem& item : items) refs.push_back(&item);
            double lr = lr_at(global_step, warmup, total_steps, schedule.lr_max, schedule.lr_min);
            trace.step_losses.push_back(model.train_batch(refs, lr));
            ++global_step;
        }
        if (validation && !validation->empty()) {
            trace.epoch_valid_losses.push_back(validation_loss(model, *validation));
        }
    }
    return trace;
}

}  // namespace

std::vector<EncodedInstance> build_finetune_instances(const Dataset& dataset,
                                                      const std::string& split, const Vocab& vocab,
                                                      int context_len, std::size_t* dropped) {
    std::vector<EncodedInstance> out;
    std::size_t dropped_count = 0;
    for (const Problem* p : dataset.split(split)) {
        int used = 0;
        for (const std::string& solution : p->canonical_solutions) {
            if (used >= kMaxSolutionsPerProblem) break;
            try {
                out.push_back(encode_finetune(vocab, p->description, solution, context_len));
                ++used;
            } catch (const ContextOverflow&) {
                ++dropped_count;
            }
        }
    }
    if (dropped) *dropped = dropped_count;
    return out;
}

LossTrace train_phase(LanguageModel& model, const std::vector<EncodedInstance>& instances,
                      int epochs, const TrainSchedule& schedule, double pgm_ratio,
                      std::uint64_t seed, const std::vector<EncodedInstance>* validation) {
    auto stream = [&instances, seed](int epoch) {
        std::vector<std::size_t> order(instances.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::mt19937_64 rng(derive_seed(seed, "epoch-shuffle", static_cast<std::uint64_t>(epoch)));
        shuffle_indices(order, rng);
        std::vector<const EncodedInstance*> out;
        out.reserve(order.size());
        for (std::size_t i : order) out.push_back(&instances[i]);
        return out;
    };
    return run_epochs(model, stream, epochs, schedule, pgm_ratio, seed, validation);
}

LossTrace train_streamed(LanguageModel& model,
                         const std::function<std::vector<const EncodedInstance*>(int)>& epoch_stream,
                         int epochs, const TrainSchedule& schedule, double pgm_ratio,
                         std::uint64_t seed, const std::vector<EncodedInstance>* validation) {
    return run_epochs(model, epoch_stream, epochs, schedule, pgm_ratio, seed, validation);
}

DistillReport distill(const DecoderFactory& decoder_factory, const Vocab& vocab,
                      const std::vector<const Problem*>& problems, ExecCache& cache,
                      const DistillOptions& options) {
    DistillReport report;
    report.per_problem.resize(problems.size());
    const std::uint64_t hits_before = cache.hits();
    const std::uint64_t misses_before = cache.misses();
    parallel_for(problems.size(), options.jobs, [&](std::size_t idx) {
        const Problem& problem = *problems[idx];
        ProblemDistill entry;
        entry.problem_id = problem.id;
        std::mt19937_64 rng(derive_seed(options.seed, "distill", idx));
        std::vector<int> prompt = finetune_prompt_ids(vocab, problem.description);
        std::set<std::string> seen;
        for (int s = 0; s < options.n_samples; ++s) {
            ++entry.n_sampled;
            std::string source;
            try {
                auto decoder = decoder_factory();
                std::vector<int> ids =
                    generate(*decoder, prompt, options.max_new_tokens, options.decode, rng,
                             Vocab::kEos);
                source = vocab.decode(ids);
            } catch (const ContextOverflow&) {
                source.clear();
            }
            bool duplicate = !seen.insert(source).second;
            SuiteReport suite_report = cache.get_or_run(problem, source);  // duplicates hit the cache
            if (duplicate) continue;
            if (suite_report.all_pass) {
                ++entry.n_correct;
                if (!entry.kept_correct) entry.kept_correct = source;
            } else {
                entry.faulty.push_back(
                    {source, render_feedback(suite_report, problem.suite, options.feedback_max_cases)});
            }
        }
        report.per_problem[idx] = std::move(entry);
    });
    report.cache_hits = cache.hits() - hits_before;
    report.cache_misses = cache.misses() - misses_before;
    return report;
}

RefineData build_refine_dataset(const DistillReport& report,
                                const std::vector<const Problem*>& problems) {
    RefineData data;
    for (const ProblemDistill& entry : report.per_problem) {
        const Problem* problem = nullptr;
        for (const Problem* p : problems) {
            if (p->id == entry.problem_id) {
                problem = p;
                break;
            }
        }
        if (!problem) throw std::invalid_argument("distill report references unknown problem " +
                                                  entry.problem_id);
        std::string target =
            entry.kept_correct ? *entry.kept_correct : problem->canonical_solutions.front();
        if (!run_tests(target, problem->suite).all_pass) {
            throw std::logic_error("refine target does not pass the suite for " + problem->id);
        }
        for (const FaultyPair& pair : entry.faulty) {
            // An empty generation (immediate EOS) leaves nothing to refine and
            // cannot be expressed in the aggregation template.
            if (pair.fg.empty()) continue;
            data.refine.push_back({{problem->description, pair.fg, pair.ef, target}, problem->id});
        }
        if (entry.kept_correct) {
            data.reinforce.push_back({problem->description, *entry.kept_correct, problem->id});
        }
    }
    return data;
}

std::vector<const EncodedInstance*> mix_epoch(const std::vector<EncodedInstance>& refine_pool,
                                              const std::vector<EncodedInstance>& canonical_pool,
                                              double refine_ratio, std::size_t epoch_size,
                                              std::mt19937_64& rng) {
    if (refine_ratio < 0.0 || refine_ratio > 1.0) {
        throw InvalidConfig("refine_ratio must be in [0, 1]");
    }
    if (epoch_size == 0) throw InvalidConfig("epoch size must be positive");
    const std::size_t n_refine =
        static_cast<std::size_t>(std::llround(refine_ratio * static_cast<double>(epoch_size)));
    const std::size_t n_canonical = epoch_size - n_refine;
    if (n_refine > 0 && refine_pool.empty()) throw InvalidConfig("refine pool is empty");
    if (n_canonical > 0 && canonical_pool.empty()) throw InvalidConfig("canonical pool is empty");

    auto draw = [&rng](const std::vector<EncodedInstance>& pool, std::size_t count,
                       std::vector<const EncodedInstance*>& out) {
        std::vector<std::size_t> order(pool.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        shuffle_indices(order, rng);
        std::size_t cursor = 0;
        for (std::size_t i = 0; i < count; ++i) {
            if (cursor == order.size()) {  // pool exhausted: reshuffle and reuse
                shuffle_indices(order, rng);
                cursor = 0;
            }
            out.push_back(&pool[order[cursor++]]);
        }
    };

    std::vector<const EncodedInstance*> stream;
    stream.reserve(epoch_size);
    draw(refine_pool, n_refine, stream);
    draw(canonical_pool, n_canonical, stream);
    for (std::size_t i = stream.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(rand_int(rng, 0, static_cast<std::int64_t>(i) - 1));
        std::swap(stream[i - 1], stream[j]);
    }
    return stream;
}

void save_distill_report(const DistillReport& report, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write distill report: " + path);
    json header = {{"schema", "cycle-distill/1"},
                   {"cache_hits", report.cache_hits},
                   {"cache_misses", report.cache_misses}};
    out << header.dump() << '\n';
    for (const ProblemDistill& entry : report.per_problem) {
        json faulty = json::array();
        for (const FaultyPair& pair : entry.faulty) {
            faulty.push_back({{"fg", pair.fg}, {"ef", pair.ef}});
        }
        json line = {{"problem_id", entry.problem_id},
                     {"n_sampled", entry.n_sampled},
                     {"n_correct", entry.n_correct},
                     {"faulty", faulty}};
        if (entry.kept_correct) line["kept_correct"] = *entry.kept_correct;
        out << line.dump() << '\n';
    }
}

DistillReport load_distill_report(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read distill report: " + path);
    std::string line;
    if (!std::getline(in, line)) throw SchemaError("empty distill report: " + path);
    json header = json::parse(line);
    if (header.value("schema", "") != "cycle-distill/1") {
        throw SchemaError("unexpected distill schema in " + path);
    }
    DistillReport report;
    report.cache_hits = header.value("cache_hits", std::uint64_t{0});
    report.cache_misses = header.value("cache_misses", std::uint64_t{0});
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j = json::parse(line);
        ProblemDistill entry;
        entry.problem_id = j.at("problem_id").get<std::string>();
        entry.n_sampled = j.at("n_sampled").get<int>();
        entry.n_correct = j.at("n_correct").get<int>();
        for (const auto& pair : j.at("faulty")) {
            entry.faulty.push_back({pair.at("fg").get<std::string>(), pair.at("ef").get<std::string>()});
        }
        if (j.contains("kept_correct")) entry.kept_correct = j["kept_correct"].get<std::string>();
        report.per_problem.push_back(std::move(entry));
    }
    return report;
}

void save_refine_data(const RefineData& data, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write refine data: " + path);
    json header = {{"schema", "cycle-refine-data/1"}};
    out << header.dump() << '\n';
    for (const RefineRecord& r : data.refine) {
        json line = {{"kind", "refine"},     {"nl", r.instance.nl}, {"fg", r.instance.fg},
                     {"ef", r.instance.ef},  {"target", r.instance.target},
                     {"problem_id", r.problem_id}};
        out << line.dump() << '\n';
    }
    for (const ReinforceRecord& r : data.reinforce) {
        json line = {{"kind", "reinforce"},
                     {"nl", r.nl},
                     {"solution", r.solution},
                     {"problem_id", r.problem_id}};
        out << line.dump() << '\n';
    }
}

RefineData load_refine_data(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read refine data: " + path);
    std::string line;
    if (!std::getline(in, line)) throw SchemaError("empty refine data: " + path);
    json header = json::parse(line);
    if (header.value("schema", "") != "cycle-refine-data/1") {
        throw SchemaError("unexpected refine-data schema in " + path);
    }
    RefineData data;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j = json::parse(line);
        if (j.at("kind") == "refine") {
            data.refine.push_back({{j.at("nl").get<std::string>(), j.at("fg").get<std::string>(),
                                    j.at("ef").get<std::string>(), j.at("target").get<std::string>()},
                                   j.at("problem_id").get<std::string>()});
        } else {
            data.reinforce.push_back({j.at("nl").get<std::string>(), j.at("solution").get<std::string>(),
                                      j.at("problem_id").get<std::string>()});
        }
    }
    return data;
}

}  // namespace cycle
