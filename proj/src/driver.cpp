#include "cycle/driver.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cycle/rng.hpp"

namespace cycle {

namespace fs = std::filesystem;

namespace {

RunPaths paths_for(const RunConfig& config) {
    fs::create_directories(config.out_dir);
    return RunPaths{config.out_dir};
}

void write_manifest(const RunConfig& config, const RunPaths& paths, const std::string& stage,
                    const std::vector<std::string>& inputs,
                    const std::vector<std::string>& outputs) {
    nlohmann::json j = {
        {"stage", stage},
        {"config_hash", config.hash()},
        {"seed", config.seed},
        {"inputs", inputs},
        {"outputs", outputs},
    };
    std::ofstream out(paths.manifest(stage), std::ios::binary);
    if (!out) throw IoError("cannot write manifest for stage " + stage);
    out << j.dump(2) << '\n';
}

void write_loss_csv(const LossTrace& trace, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write loss trace: " + path);
    char buf[40];
    out << "step,train_loss\n";
    for (std::size_t i = 0; i < trace.step_losses.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.12g", trace.step_losses[i]);
        out << i << ',' << buf << '\n';
    }
    out << "epoch,valid_loss\n";
    for (std::size_t i = 0; i < trace.epoch_valid_losses.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.12g", trace.epoch_valid_losses[i]);
        out << i << ',' << buf << '\n';
    }
}

std::vector<std::string> dataset_texts(const Dataset& dataset) {
    std::vector<std::string> texts;
    for (const Problem& p : dataset.problems) {
        texts.push_back(p.description);
        for (const std::string& sol : p.canonical_solutions) texts.push_back(sol);
    }
    return texts;
}

std::unique_ptr<LanguageModel> load_latest_model(const RunPaths& paths) {
    if (fs::exists(paths.ckpt_refine())) return load_model(paths.ckpt_refine());
    return load_model(paths.ckpt_ft());
}

TrainSchedule schedule_from(const RunConfig& config, double lr_max) {
    TrainSchedule s;
    s.warmup_steps = config.warmup_steps;
    s.lr_max = lr_max;
    s.lr_min = config.lr_min;
    s.batch_size = config.batch_size;
    return s;
}

std::string fmt_setting(const char* key, double value) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%s=%g", key, value);
    return buf;
}

}  // namespace

DecodeStrategy decode_strategy_from(const RunConfig& config) {
    return parse_strategy(config.decode, config.top_p, config.temperature, config.beam_width);
}

Dataset stage_corpus(const RunConfig& config) {
    config.validate();
    RunPaths paths = paths_for(config);
    config.save(paths.config());

    Dataset dataset = generate_problems(config.seed,
                                        {{"train", config.train_count},
                                         {"valid", config.valid_count},
                                         {"test", config.test_count}},
                                        config.family_mix);
    Vocab vocab = Vocab::build(dataset_texts(dataset));
    dataset = filter_by_length(dataset, vocab, config.max_desc_tokens);
    if (config.apply_dedup) {
        Dataset train_only;
        Dataset eval_only;
        train_only.seed = eval_only.seed = dataset.seed;
        for (Problem& p : dataset.problems) {
            (p.split == "train" ? train_only : eval_only).problems.push_back(std::move(p));
        }
        eval_only = fuzzy_dedup(eval_only, train_only, config.dedup_threshold);
        dataset.problems = std::move(train_only.problems);
        for (Problem& p : eval_only.problems) dataset.problems.push_back(std::move(p));
    }
    save_dataset(dataset, paths.corpus());
    vocab.save(paths.vocab());
    write_manifest(config, paths, "corpus", {}, {paths.corpus(), paths.vocab()});
    return dataset;
}

LossTrace stage_train_ft(const RunConfig& config) {
    config.validate();
    RunPaths paths = paths_for(config);
    Dataset dataset = load_dataset(paths.corpus());
    Vocab vocab = Vocab::load(paths.vocab());

    ModelConfig model_cfg = config.model;
    model_cfg.vocab_size = vocab.size();
    auto model = create_model(model_cfg, derive_seed(config.seed, "model-init"));

    std::size_t dropped = 0;
    auto train = build_finetune_instances(dataset, "train", vocab, model_cfg.context_len, &dropped);
    auto valid = build_finetune_instances(dataset, "valid", vocab, model_cfg.context_len);
    LossTrace trace =
        train_phase(*model, train, config.ft_epochs, schedule_from(config, config.ft_lr_max),
                    /*pgm_ratio=*/0.0, derive_seed(config.seed, "train-ft"),
                    valid.empty() ? nullptr : &valid);

    model->save(paths.ckpt_ft());
    write_loss_csv(trace, paths.loss_ft());
    write_manifest(config, paths, "train-ft", {paths.corpus(), paths.vocab()},
                   {paths.ckpt_ft(), paths.loss_ft()});
    return trace;
}

DistillReport stage_distill(const RunConfig& config) {
    config.validate();
    RunPaths paths = paths_for(config);
    Dataset dataset = load_dataset(paths.corpus());
    Vocab vocab = Vocab::load(paths.vocab());
    auto model = load_model(paths.ckpt_ft());

    DistillOptions options;
    options.n_samples = config.distill_samples;
    options.decode = DecodeStrategy::nucleus(config.top_p, config.distill_temperature);
    options.max_new_tokens = config.max_new_tokens;
    options.seed = derive_seed(config.seed, "distill");
    options.jobs = config.jobs;

    ExecCache cache;
    std::vector<const Problem*> train = dataset.split("train");
    DistillReport report = distill([&] { return model->make_decoder(); }, vocab, train, cache,
                                   options);
    save_distill_report(report, paths.distill());
    save_refine_data(build_refine_dataset(report, train), paths.refine_data());
    write_manifest(config, paths, "distill", {paths.ckpt_ft(), paths.corpus(), paths.vocab()},
                   {paths.distill(), paths.refine_data()});
    return report;
}

LossTrace stage_train_refine(const RunConfig& config) {
    config.validate();
    RunPaths paths = paths_for(config);
    Dataset dataset = load_dataset(paths.corpus());
    Vocab vocab = Vocab::load(paths.vocab());
    RefineData data = load_refine_data(paths.refine_data());
    auto model = load_model(paths.ckpt_ft());  // phase-II continues from phase-I weights
    const int context_len = model->config().context_len;

    std::vector<EncodedInstance> refine_pool;
    for (const RefineRecord& record : data.refine) {
        try {
            refine_pool.push_back(encode_refine(vocab, record.instance, context_len));
        } catch (const ContextOverflow&) {
            // over-long aggregations are dropped, matching phase-I policy
        }
    }

    // Problems whose own correct generation was kept train on it instead of
    // the canonical solutions.
    std::map<std::string, const ReinforceRecord*> reinforced;
    for (const ReinforceRecord& record : data.reinforce) reinforced[record.problem_id] = &record;
    std::vector<EncodedInstance> canonical_pool;
    for (const Problem* p : dataset.split("train")) {
        auto it = reinforced.find(p->id);
        try {
            if (it != reinforced.end()) {
                canonical_pool.push_back(
                    encode_finetune(vocab, it->second->nl, it->second->solution, context_len));
            } else {
                for (const std::string& sol : p->canonical_solutions) {
                    canonical_pool.push_back(encode_finetune(vocab, p->description, sol,
                                                             context_len));
                }
            }
        } catch (const ContextOverflow&) {
        }
    }

    double ratio = config.refine_ratio;
    if (refine_pool.empty()) ratio = 0.0;
    if (canonical_pool.empty()) ratio = 1.0;
    const std::size_t epoch_size = refine_pool.size() + canonical_pool.size();
    if (epoch_size == 0) throw InvalidConfig("no training data for the refinement phase");

    std::mt19937_64 mix_rng(derive_seed(config.seed, "mix"));
    auto epoch_stream = [&](int) {
        return mix_epoch(refine_pool, canonical_pool, ratio, epoch_size, mix_rng);
    };

    auto valid = build_finetune_instances(dataset, "valid", vocab, context_len);
    LossTrace trace = train_streamed(*model, epoch_stream, config.refine_epochs,
                                     schedule_from(config, config.refine_lr_max),
                                     config.pgm_ratio, derive_seed(config.seed, "train-refine"),
                                     valid.empty() ? nullptr : &valid);

    model->save(paths.ckpt_refine());
    write_loss_csv(trace, paths.loss_refine());
    write_manifest(config, paths, "train-refine",
                   {paths.ckpt_ft(), paths.corpus(), paths.vocab(), paths.refine_data()},
                   {paths.ckpt_refine(), paths.loss_refine()});
    return trace;
}

EvalReport stage_eval(const RunConfig& config, bool no_feedback, const std::string& tag) {
    config.validate();
    RunPaths paths = paths_for(config);
    Dataset dataset = load_dataset(paths.corpus());
    Vocab vocab = Vocab::load(paths.vocab());
    auto model = load_latest_model(paths);

    EvalOptions options;
    options.session.max_steps = config.max_refine_steps;
    options.session.decode = decode_strategy_from(config);
    options.session.max_new_tokens = config.max_new_tokens;
    options.session.include_feedback = !no_feedback;
    options.session.seed = derive_seed(config.seed, "eval");
    options.sessions_per_problem = config.topk_sessions;
    options.jobs = config.jobs;
    options.benchmark = "minilang-test";

    ExecCache cache;
    EvalOutcome outcome = evaluate([&] { return model->make_decoder(); }, vocab,
                                   dataset.split("test"), cache, options);
    save_sessions(outcome.sessions, paths.sessions(tag));
    write_eval_report_json(outcome.report, paths.eval_json(tag));
    write_eval_report_csv({outcome.report}, paths.eval_csv(tag));
    write_step_curve_csv(outcome.report, paths.step_curve(tag));
    write_manifest(config, paths, "eval" + tag, {paths.corpus(), paths.vocab()},
                   {paths.sessions(tag), paths.eval_json(tag), paths.eval_csv(tag),
                    paths.step_curve(tag)});
    return outcome.report;
}

EvalReport run_all(const RunConfig& config) {
    stage_corpus(config);
    stage_train_ft(config);
    stage_distill(config);
    stage_train_refine(config);
    return stage_eval(config);
}

namespace {

// Runs the shared upstream stages once per seed, then reruns phase-II and
// eval per grid point in its own subdirectory.
void copy_base_artifacts(const RunPaths& base, const RunPaths& point, bool with_refine_data) {
    fs::create_directories(point.dir);
    const auto overwrite = fs::copy_options::overwrite_existing;
    fs::copy_file(base.corpus(), point.corpus(), overwrite);
    fs::copy_file(base.vocab(), point.vocab(), overwrite);
    fs::copy_file(base.ckpt_ft(), point.ckpt_ft(), overwrite);
    if (with_refine_data) fs::copy_file(base.refine_data(), point.refine_data(), overwrite);
}

}  // namespace

std::vector<AblationRow> stage_ablate(const RunConfig& config, const std::string& study,
                                      const std::vector<std::uint64_t>& seeds) {
    config.validate();
    if (seeds.empty()) throw InvalidConfig("ablation needs at least one seed");
    if (study != "pgm" && study != "mixture" && study != "feedback") {
        throw InvalidConfig("study must be one of pgm|mixture|feedback");
    }
    RunPaths root = paths_for(config);

    std::vector<AblationRow> rows;
    for (std::uint64_t seed : seeds) {
        RunConfig base = config;
        base.seed = seed;
        base.out_dir = root.dir + "/ablate/seed" + std::to_string(seed);
        RunPaths base_paths = paths_for(base);
        stage_corpus(base);
        stage_train_ft(base);
        stage_distill(base);

        if (study == "feedback") {
            stage_train_refine(base);
            for (bool no_feedback : {false, true}) {
                AblationRow row;
                row.study = study;
                row.setting = no_feedback ? "feedback=off" : "feedback=on";
                row.seed = seed;
                row.report = stage_eval(base, no_feedback, no_feedback ? "_nofb" : "");
                rows.push_back(std::move(row));
            }
            continue;
        }

        const bool is_pgm = (study == "pgm");
        const std::vector<double> grid = is_pgm ? std::vector<double>{0.0, 0.05, 0.15, 0.30}
                                                : std::vector<double>{0.0, 0.25, 0.5, 0.75, 1.0};
        for (double value : grid) {
            RunConfig point = base;
            if (is_pgm) {
                point.pgm_ratio = value;
            } else {
                point.refine_ratio = value;
            }
            point.out_dir = base.out_dir + "/" + fmt_setting(is_pgm ? "pgm" : "mix", value);
            copy_base_artifacts(base_paths, paths_for(point), /*with_refine_data=*/true);
            stage_train_refine(point);
            AblationRow row;
            row.study = study;
            row.setting = fmt_setting(is_pgm ? "pgm" : "mix", value);
            row.seed = seed;
            row.report = stage_eval(point);
            rows.push_back(std::move(row));
        }
    }

    write_ablation_outputs(rows, root.dir + "/ablation_" + study + ".csv",
                           root.dir + "/ablation_" + study + ".json");
    return rows;
}

namespace {

std::string fmt6(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

double final_rate(const EvalReport& r) {
    return r.per_step_cumulative_pass_rate.empty() ? 0.0
                                                   : r.per_step_cumulative_pass_rate.back();
}

}  // namespace

void write_ablation_outputs(const std::vector<AblationRow>& rows, const std::string& csv_path,
                            const std::string& summary_path) {
    std::ofstream csv(csv_path, std::ios::binary);
    if (!csv) throw IoError("cannot write ablation csv: " + csv_path);
    csv << "benchmark,study,setting,seed,one_time_pass_rate,final_pass_rate,exact_copy_rate\n";
    for (const AblationRow& row : rows) {
        csv << row.report.benchmark << ',' << row.study << ',' << row.setting << ',' << row.seed
            << ',' << fmt6(row.report.one_time_pass_rate) << ',' << fmt6(final_rate(row.report))
            << ',' << fmt6(row.report.exact_copy_rate) << '\n';
    }

    // mean/stddev over seeds per setting
    std::map<std::string, std::vector<const AblationRow*>> by_setting;
    for (const AblationRow& row : rows) by_setting[row.setting].push_back(&row);
    nlohmann::json summary = nlohmann::json::array();
    for (const auto& [setting, group] : by_setting) {
        auto stats = [&](auto metric) {
            double mean = 0.0;
            for (const AblationRow* row : group) mean += metric(row->report);
            mean /= static_cast<double>(group.size());
            double var = 0.0;
            for (const AblationRow* row : group) {
                double d = metric(row->report) - mean;
                var += d * d;
            }
            var /= static_cast<double>(group.size());
            return std::pair<double, double>(mean, std::sqrt(var));
        };
        auto [pass_mean, pass_sd] = stats(final_rate);
        auto [copy_mean, copy_sd] =
            stats([](const EvalReport& r) { return r.exact_copy_rate; });
        summary.push_back({{"study", group.front()->study},
                           {"setting", setting},
                           {"seeds", group.size()},
                           {"final_pass_rate_mean", pass_mean},
                           {"final_pass_rate_stddev", pass_sd},
                           {"exact_copy_rate_mean", copy_mean},
                           {"exact_copy_rate_stddev", copy_sd}});
    }
    std::ofstream out(summary_path, std::ios::binary);
    if (!out) throw IoError("cannot write ablation summary: " + summary_path);
    out << summary.dump(2) << '\n';
}

std::string stage_report(const RunConfig& config) {
    RunPaths paths{config.out_dir};
    std::ostringstream out;
    out << "run directory: " << paths.dir << '\n';
    if (fs::exists(paths.corpus())) {
        Dataset dataset = load_dataset(paths.corpus());
        out << "corpus: " << dataset.problems.size() << " problems ("
            << dataset.split("train").size() << " train, " << dataset.split("valid").size()
            << " valid, " << dataset.split("test").size() << " test)\n";
    }
    if (fs::exists(paths.distill())) {
        DistillReport report = load_distill_report(paths.distill());
        std::size_t faulty = 0;
        std::size_t correct = 0;
        for (const ProblemDistill& p : report.per_problem) {
            faulty += p.faulty.size();
            if (p.kept_correct) ++correct;
        }
        out << "distill: " << faulty << " faulty pairs, " << correct
            << " problems with a kept correct generation\n";
    }
    for (const std::string& tag : {std::string(), std::string("_nofb")}) {
        if (!fs::exists(paths.eval_json(tag))) continue;
        std::ifstream in(paths.eval_json(tag), std::ios::binary);
        nlohmann::json j = nlohmann::json::parse(in);
        std::vector<double> curve = j.at("per_step_cumulative_pass_rate").get<std::vector<double>>();
        out << "eval" << (tag.empty() ? "" : " (no feedback)") << ": pass@step0 "
            << fmt6(j.at("one_time_pass_rate").get<double>()) << ", pass@final "
            << fmt6(curve.empty() ? 0.0 : curve.back()) << ", exact-copy rate "
            << fmt6(j.at("exact_copy_rate").get<double>()) << '\n';
    }
    return out.str();
}

}  // namespace cycle
