#pragma once

#include <string>
#include <vector>

#include "cycle/config.hpp"
#include "cycle/eval.hpp"
#include "cycle/pipeline.hpp"

namespace cycle {

// File layout of a run directory. Every stage reads and writes only through
// these paths, so stages can be re-run in isolation.
struct RunPaths {
    std::string dir;

    std::string config() const { return dir + "/config.json"; }
    std::string corpus() const { return dir + "/corpus.jsonl"; }
    std::string vocab() const { return dir + "/vocab.json"; }
    std::string ckpt_ft() const { return dir + "/ckpt_ft.bin"; }
    std::string loss_ft() const { return dir + "/loss_ft.csv"; }
    std::string distill() const { return dir + "/distill.jsonl"; }
    std::string refine_data() const { return dir + "/refine_data.jsonl"; }
    std::string ckpt_refine() const { return dir + "/ckpt_refine.bin"; }
    std::string loss_refine() const { return dir + "/loss_refine.csv"; }
    std::string sessions(const std::string& tag) const {
        return dir + "/sessions" + tag + ".jsonl";
    }
    std::string eval_json(const std::string& tag) const {
        return dir + "/eval_report" + tag + ".json";
    }
    std::string eval_csv(const std::string& tag) const {
        return dir + "/eval_report" + tag + ".csv";
    }
    std::string step_curve(const std::string& tag) const {
        return dir + "/step_curve" + tag + ".csv";
    }
    std::string manifest(const std::string& stage) const {
        return dir + "/" + stage + ".manifest.json";
    }
};

DecodeStrategy decode_strategy_from(const RunConfig& config);

// Each stage validates the config, consumes upstream artifacts from the run
// directory, and records a manifest next to its outputs.
Dataset stage_corpus(const RunConfig& config);
LossTrace stage_train_ft(const RunConfig& config);
DistillReport stage_distill(const RunConfig& config);
LossTrace stage_train_refine(const RunConfig& config);

// Runs the refinement benchmark on the latest checkpoint (phase-II when
// present, else phase-I). `tag` suffixes the artifact names; no_feedback
// blanks the execution-feedback segment at inference time.
EvalReport stage_eval(const RunConfig& config, bool no_feedback = false,
                      const std::string& tag = "");

// corpus -> train-ft -> distill -> train-refine -> eval.
EvalReport run_all(const RunConfig& config);

struct AblationRow {
    std::string study;    // pgm | mixture | feedback
    std::string setting;  // e.g. "pgm=0.05"
    std::uint64_t seed = 0;
    EvalReport report;
};

// Sweeps one knob across the given seeds; upstream stages are shared per
// seed, the swept stage reruns per grid point. Study is one of
// pgm (mask ratio), mixture (refine-sample ratio), feedback (EF on/off).
std::vector<AblationRow> stage_ablate(const RunConfig& config, const std::string& study,
                                      const std::vector<std::uint64_t>& seeds);

void write_ablation_outputs(const std::vector<AblationRow>& rows, const std::string& csv_path,
                            const std::string& summary_path);

// Human-readable digest of whatever artifacts exist in the run directory.
std::string stage_report(const RunConfig& config);

}  // namespace cycle
