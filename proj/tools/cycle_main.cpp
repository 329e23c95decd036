// cycle: train a small code LM to repair its own faulty programs using
// execution feedback, then measure how much iterative refinement buys.

#include <cstdio>
#include <exception>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cycle/driver.hpp"

namespace {

struct CommonFlags {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<int> jobs;
    std::optional<std::string> out_dir;
    std::optional<double> pgm_ratio;
    std::optional<double> mix_ratio;
    std::optional<int> max_steps;
    std::optional<std::string> decode;
    std::optional<double> top_p;
    std::optional<double> temperature;
    std::optional<int> beam_width;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
    cmd->add_option("--config", flags.config_path, "JSON run configuration");
    cmd->add_option("--seed", flags.seed, "master seed override");
    cmd->add_option("--jobs", flags.jobs, "worker threads for sampling/eval");
    cmd->add_option("--out", flags.out_dir, "run directory override");
    cmd->add_option("--pgm-ratio", flags.pgm_ratio, "past-generation mask ratio");
    cmd->add_option("--mix-ratio", flags.mix_ratio, "refinement-sample mixture ratio");
    cmd->add_option("--max-steps", flags.max_steps, "refinement step budget");
    cmd->add_option("--decode", flags.decode, "greedy | nucleus | beam")
        ->check(CLI::IsMember({"greedy", "nucleus", "beam"}));
    cmd->add_option("--top-p", flags.top_p, "nucleus probability mass");
    cmd->add_option("--temperature", flags.temperature, "sampling temperature");
    cmd->add_option("--beam-width", flags.beam_width, "beam width");
}

cycle::RunConfig resolve(const CommonFlags& flags) {
    cycle::RunConfig config =
        flags.config_path.empty() ? cycle::RunConfig{} : cycle::RunConfig::load(flags.config_path);
    if (flags.seed) config.seed = *flags.seed;
    if (flags.jobs) config.jobs = *flags.jobs;
    if (flags.out_dir) config.out_dir = *flags.out_dir;
    if (flags.pgm_ratio) config.pgm_ratio = *flags.pgm_ratio;
    if (flags.mix_ratio) config.refine_ratio = *flags.mix_ratio;
    if (flags.max_steps) config.max_refine_steps = *flags.max_steps;
    if (flags.decode) config.decode = *flags.decode;
    if (flags.top_p) config.top_p = *flags.top_p;
    if (flags.temperature) config.temperature = *flags.temperature;
    if (flags.beam_width) config.beam_width = *flags.beam_width;
    config.validate();
    return config;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"self-refinement training and evaluation for a tiny code LM"};
    app.require_subcommand(1);

    CommonFlags flags;
    bool no_feedback = false;
    std::string study = "feedback";
    std::vector<std::uint64_t> ablate_seeds;

    CLI::App* cmd_corpus = app.add_subcommand("corpus", "generate the synthetic problem corpus");
    CLI::App* cmd_ft = app.add_subcommand("train-ft", "phase-I fine-tune on canonical solutions");
    CLI::App* cmd_distill =
        app.add_subcommand("distill", "sample the model and harvest faulty generations");
    CLI::App* cmd_refine =
        app.add_subcommand("train-refine", "phase-II training on the refinement mixture");
    CLI::App* cmd_eval = app.add_subcommand("eval", "run the iterative-refinement benchmark");
    CLI::App* cmd_all = app.add_subcommand("run", "all stages end to end");
    CLI::App* cmd_ablate = app.add_subcommand("ablate", "sweep one knob over several seeds");
    CLI::App* cmd_report = app.add_subcommand("report", "summarize the artifacts of a run");

    for (CLI::App* cmd : {cmd_corpus, cmd_ft, cmd_distill, cmd_refine, cmd_eval, cmd_all,
                          cmd_ablate, cmd_report}) {
        add_common(cmd, flags);
    }
    cmd_eval->add_flag("--no-feedback", no_feedback,
                       "blank the execution-feedback segment at inference time");
    cmd_ablate->add_option("--study", study, "pgm | mixture | feedback")
        ->check(CLI::IsMember({"pgm", "mixture", "feedback"}));
    cmd_ablate->add_option("--seeds", ablate_seeds, "seeds to sweep (default: config seed)");

    CLI11_PARSE(app, argc, argv);

    try {
        cycle::RunConfig config = resolve(flags);
        if (cmd_corpus->parsed()) {
            cycle::Dataset dataset = cycle::stage_corpus(config);
            std::cout << "generated " << dataset.problems.size() << " problems -> "
                      << config.out_dir << '\n';
        } else if (cmd_ft->parsed()) {
            cycle::LossTrace trace = cycle::stage_train_ft(config);
            std::cout << "phase-I done; final step loss "
                      << (trace.step_losses.empty() ? 0.0 : trace.step_losses.back()) << '\n';
        } else if (cmd_distill->parsed()) {
            cycle::DistillReport report = cycle::stage_distill(config);
            std::size_t faulty = 0;
            for (const auto& p : report.per_problem) faulty += p.faulty.size();
            std::cout << "distilled " << faulty << " faulty pairs (cache hits "
                      << report.cache_hits << ", misses " << report.cache_misses << ")\n";
        } else if (cmd_refine->parsed()) {
            cycle::LossTrace trace = cycle::stage_train_refine(config);
            std::cout << "phase-II done; final step loss "
                      << (trace.step_losses.empty() ? 0.0 : trace.step_losses.back()) << '\n';
        } else if (cmd_eval->parsed()) {
            cycle::EvalReport report = cycle::stage_eval(config, no_feedback,
                                                         no_feedback ? "_nofb" : "");
            double final_rate = report.per_step_cumulative_pass_rate.empty()
                                    ? 0.0
                                    : report.per_step_cumulative_pass_rate.back();
            std::cout << "pass@step0 " << report.one_time_pass_rate << ", pass@final "
                      << final_rate << ", exact-copy rate " << report.exact_copy_rate << '\n';
        } else if (cmd_all->parsed()) {
            cycle::EvalReport report = cycle::run_all(config);
            double final_rate = report.per_step_cumulative_pass_rate.empty()
                                    ? 0.0
                                    : report.per_step_cumulative_pass_rate.back();
            std::cout << "pipeline done; pass@step0 " << report.one_time_pass_rate
                      << ", pass@final " << final_rate << '\n';
        } else if (cmd_ablate->parsed()) {
            if (ablate_seeds.empty()) ablate_seeds = {config.seed};
            auto rows = cycle::stage_ablate(config, study, ablate_seeds);
            std::cout << "ablation (" << study << "): " << rows.size() << " rows -> "
                      << config.out_dir << "/ablation_" << study << ".csv\n";
        } else if (cmd_report->parsed()) {
            std::cout << cycle::stage_report(config);
        }
    } catch (const cycle::InvalidConfig& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
