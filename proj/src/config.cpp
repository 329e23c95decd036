#include "cycle/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace cycle {

void RunConfig::validate() const {
    // vocab_size is filled in after the vocabulary is built, so only the
    // architecture shape is checked here.
    if (model.layers < 1 || model.heads < 1 || model.dim < 1 || model.context_len < 1) {
        throw InvalidConfig("model dimensions must be positive");
    }
    if (model.dim % model.heads != 0) throw InvalidConfig("dim must be divisible by heads");
    if (model.precision != "double" && model.precision != "single") {
        throw InvalidConfig("precision must be 'double' or 'single'");
    }
    if (train_count < 1 || valid_count < 0 || test_count < 1) {
        throw InvalidConfig("corpus split counts must be positive (valid may be 0)");
    }
    double mix_sum = 0.0;
    for (double w : family_mix) {
        if (w < 0.0) throw InvalidConfig("family mix weights must be non-negative");
        mix_sum += w;
    }
    if (std::abs(mix_sum - 1.0) > 1e-9) throw InvalidConfig("family mix must sum to 1");
    if (max_desc_tokens < 1) throw InvalidConfig("max_desc_tokens must be positive");
    if (dedup_threshold <= 0.0 || dedup_threshold >= 1.0) {
        throw InvalidConfig("dedup_threshold must lie in (0, 1)");
    }
    if (batch_size < 1) throw InvalidConfig("batch_size must be positive");
    if (ft_epochs < 1 || refine_epochs < 1) throw InvalidConfig("epoch counts must be positive");
    if (warmup_steps < 0) throw InvalidConfig("warmup_steps must be non-negative");
    if (ft_lr_max <= 0.0 || refine_lr_max <= 0.0 || lr_min < 0.0 || lr_min > ft_lr_max ||
        lr_min > refine_lr_max) {
        throw InvalidConfig("learning rates must satisfy 0 <= lr_min <= lr_max");
    }
    if (pgm_ratio < 0.0 || pgm_ratio > 1.0) throw InvalidConfig("pgm_ratio must lie in [0, 1]");
    if (refine_ratio < 0.0 || refine_ratio > 1.0) {
        throw InvalidConfig("refine_ratio must lie in [0, 1]");
    }
    if (distill_samples < 1) throw InvalidConfig("distill_samples must be positive");
    if (distill_temperature < 0.0) throw InvalidConfig("distill_temperature must be non-negative");
    if (max_refine_steps < 0) throw InvalidConfig("max_refine_steps must be non-negative");
    if (decode != "greedy" && decode != "nucleus" && decode != "beam") {
        throw InvalidConfig("decode must be one of greedy|nucleus|beam");
    }
    if (top_p <= 0.0 || top_p > 1.0) throw InvalidConfig("top_p must lie in (0, 1]");
    if (temperature < 0.0) throw InvalidConfig("temperature must be non-negative");
    if (beam_width < 1) throw InvalidConfig("beam_width must be positive");
    if (max_new_tokens < 1) throw InvalidConfig("max_new_tokens must be positive");
    if (topk_sessions < 1) throw InvalidConfig("topk_sessions must be positive");
    if (jobs < 1) throw InvalidConfig("jobs must be positive");
    if (out_dir.empty()) throw InvalidConfig("out_dir must be set");
}

namespace {

nlohmann::json to_json(const RunConfig& c) {
    return nlohmann::json{
        {"seed", c.seed},
        {"model",
         {{"layers", c.model.layers},
          {"heads", c.model.heads},
          {"dim", c.model.dim},
          {"context_len", c.model.context_len},
          {"precision", c.model.precision}}},
        {"corpus",
         {{"train", c.train_count},
          {"valid", c.valid_count},
          {"test", c.test_count},
          {"family_mix", c.family_mix},
          {"max_desc_tokens", c.max_desc_tokens},
          {"apply_dedup", c.apply_dedup},
          {"dedup_threshold", c.dedup_threshold}}},
        {"train",
         {{"batch_size", c.batch_size},
          {"ft_epochs", c.ft_epochs},
          {"refine_epochs", c.refine_epochs},
          {"warmup_steps", c.warmup_steps},
          {"ft_lr_max", c.ft_lr_max},
          {"refine_lr_max", c.refine_lr_max},
          {"lr_min", c.lr_min},
          {"pgm_ratio", c.pgm_ratio},
          {"refine_ratio", c.refine_ratio}}},
        {"inference",
         {{"distill_samples", c.distill_samples},
          {"distill_temperature", c.distill_temperature},
          {"max_refine_steps", c.max_refine_steps},
          {"decode", c.decode},
          {"top_p", c.top_p},
          {"temperature", c.temperature},
          {"beam_width", c.beam_width},
          {"max_new_tokens", c.max_new_tokens},
          {"topk_sessions", c.topk_sessions}}},
        {"jobs", c.jobs},
        {"out_dir", c.out_dir},
    };
}

template <class T>
void maybe(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

RunConfig parse_json(const nlohmann::json& j) {
    RunConfig c;
    maybe(j, "seed", c.seed);
    if (j.contains("model")) {
        const auto& m = j.at("model");
        maybe(m, "layers", c.model.layers);
        maybe(m, "heads", c.model.heads);
        maybe(m, "dim", c.model.dim);
        maybe(m, "context_len", c.model.context_len);
        maybe(m, "precision", c.model.precision);
    }
    if (j.contains("corpus")) {
        const auto& s = j.at("corpus");
        maybe(s, "train", c.train_count);
        maybe(s, "valid", c.valid_count);
        maybe(s, "test", c.test_count);
        maybe(s, "family_mix", c.family_mix);
        maybe(s, "max_desc_tokens", c.max_desc_tokens);
        maybe(s, "apply_dedup", c.apply_dedup);
        maybe(s, "dedup_threshold", c.dedup_threshold);
    }
    if (j.contains("train")) {
        const auto& t = j.at("train");
        maybe(t, "batch_size", c.batch_size);
        maybe(t, "ft_epochs", c.ft_epochs);
        maybe(t, "refine_epochs", c.refine_epochs);
        maybe(t, "warmup_steps", c.warmup_steps);
        maybe(t, "ft_lr_max", c.ft_lr_max);
        maybe(t, "refine_lr_max", c.refine_lr_max);
        maybe(t, "lr_min", c.lr_min);
        maybe(t, "pgm_ratio", c.pgm_ratio);
        maybe(t, "refine_ratio", c.refine_ratio);
    }
    if (j.contains("inference")) {
        const auto& i = j.at("inference");
        maybe(i, "distill_samples", c.distill_samples);
        maybe(i, "distill_temperature", c.distill_temperature);
        maybe(i, "max_refine_steps", c.max_refine_steps);
        maybe(i, "decode", c.decode);
        maybe(i, "top_p", c.top_p);
        maybe(i, "temperature", c.temperature);
        maybe(i, "beam_width", c.beam_width);
        maybe(i, "max_new_tokens", c.max_new_tokens);
        maybe(i, "topk_sessions", c.topk_sessions);
    }
    maybe(j, "jobs", c.jobs);
    maybe(j, "out_dir", c.out_dir);
    return c;
}

}  // namespace

std::string RunConfig::to_json_string() const { return to_json(*this).dump(2); }

RunConfig RunConfig::from_json_string(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
        return parse_json(j);
    } catch (const nlohmann::json::exception& e) {
        throw InvalidConfig(std::string("bad config: ") + e.what());
    }
}

RunConfig RunConfig::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read config: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return from_json_string(buf.str());
}

void RunConfig::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write config: " + path);
    out << to_json_string() << '\n';
}

std::uint64_t RunConfig::hash() const {
    // FNV-1a over the canonical dump; out_dir and jobs do not affect results,
    // so they are excluded from the fingerprint.
    nlohmann::json j = to_json(*this);
    j.erase("out_dir");
    j.erase("jobs");
    std::string text = j.dump();
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace cycle
