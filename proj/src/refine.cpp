#include "cycle/refine.hpp"

#include <fstream>

#include <json.hpp>

#include "cycle/rng.hpp"

namespace cycle {

namespace {

std::string generate_source(const DecoderFactory& decoder_factory, const std::vector<int>& prompt,
                            const DecodeStrategy& decode, int max_new, std::mt19937_64& rng,
                            const Vocab& vocab) {
    try {
        auto decoder = decoder_factory();
        std::vector<int> ids = generate(*decoder, prompt, max_new, decode, rng, Vocab::kEos);
        return vocab.decode(ids);
    } catch (const ContextOverflow&) {
        return {};  // an unusable attempt; the suite will report it as ERROR
    }
}

Attempt make_attempt(std::string source, const Problem& problem, ExecCache& cache,
                     int feedback_max_cases) {
    Attempt attempt;
    attempt.source = std::move(source);
    attempt.report = cache.get_or_run(problem, attempt.source);
    attempt.feedback = render_feedback(attempt.report, problem.suite, feedback_max_cases);
    return attempt;
}

RefineSession run_session_impl(const DecoderFactory& decoder_factory, const Vocab& vocab,
                               const Problem& problem, ExecCache& cache,
                               const SessionOptions& options, const std::string* initial_source) {
    RefineSession session;
    session.problem_id = problem.id;
    std::mt19937_64 rng(derive_seed(options.seed, "session"));

    std::string first = initial_source
                            ? *initial_source
                            : generate_source(decoder_factory,
                                              finetune_prompt_ids(vocab, problem.description),
                                              options.decode, options.max_new_tokens, rng, vocab);
    session.attempts.push_back(make_attempt(std::move(first), problem, cache,
                                            options.feedback_max_cases));
    if (session.attempts.back().report.all_pass) {
        session.stop_reason = StopReason::Solved;
        session.steps_used = 0;
        return session;
    }

    for (int step = 1; step <= options.max_steps; ++step) {
        const Attempt& prev = session.attempts.back();
        std::vector<int> prompt = refine_prompt_ids(vocab, problem.description, prev.source,
                                                    prev.feedback, options.include_feedback);
        std::string source = generate_source(decoder_factory, prompt, options.decode,
                                             options.max_new_tokens, rng, vocab);
        bool copy = is_exact_copy(vocab, source, prev.source);
        session.attempts.push_back(
            make_attempt(std::move(source), problem, cache, options.feedback_max_cases));
        session.steps_used = step;
        if (session.attempts.back().report.all_pass) {
            session.stop_reason = StopReason::Solved;
            return session;
        }
        if (copy) {
            session.stop_reason = StopReason::ExactCopy;
            return session;
        }
    }
    session.stop_reason = StopReason::MaxSteps;
    return session;
}

}  // namespace

const char* stop_reason_name(StopReason reason) {
    switch (reason) {
        case StopReason::Solved: return "Solved";
        case StopReason::MaxSteps: return "MaxSteps";
        case StopReason::ExactCopy: return "ExactCopy";
    }
    return "MaxSteps";
}

bool is_exact_copy(const Vocab& vocab, const std::string& a, const std::string& b) {
    return vocab.encode(a) == vocab.encode(b);
}

RefineSession run_session(const DecoderFactory& decoder_factory, const Vocab& vocab,
                          const Problem& problem, ExecCache& cache, const SessionOptions& options) {
    return run_session_impl(decoder_factory, vocab, problem, cache, options, nullptr);
}

RefineSession run_session_from(const DecoderFactory& decoder_factory, const Vocab& vocab,
                               const Problem& problem, ExecCache& cache,
                               const SessionOptions& options, const std::string& initial_source) {
    return run_session_impl(decoder_factory, vocab, problem, cache, options, &initial_source);
}

std::vector<RefineSession> refine_topk(const DecoderFactory& decoder_factory, const Vocab& vocab,
                                       const Problem& problem, ExecCache& cache, int k,
                                       const SessionOptions& options) {
    if (k < 1) throw std::invalid_argument("k must be >= 1");
    std::vector<RefineSession> sessions;
    sessions.reserve(static_cast<std::size_t>(k));
    if (options.decode.kind == DecodeStrategy::Kind::Beam) {
        auto decoder = decoder_factory();
        auto beams = beam_search(*decoder, finetune_prompt_ids(vocab, problem.description), k,
                                 options.max_new_tokens, Vocab::kEos);
        for (std::size_t i = 0; i < beams.size(); ++i) {
            SessionOptions opts = options;
            opts.seed = derive_seed(options.seed, "topk-beam", i);
            sessions.push_back(run_session_from(decoder_factory, vocab, problem, cache, opts,
                                                vocab.decode(beams[i].tokens)));
        }
    } else {
        for (int i = 0; i < k; ++i) {
            SessionOptions opts = options;
            opts.seed = derive_seed(options.seed, "topk", static_cast<std::uint64_t>(i));
            sessions.push_back(run_session(decoder_factory, vocab, problem, cache, opts));
        }
    }
    return sessions;
}

void save_sessions(const std::vector<RefineSession>& sessions, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write sessions file: " + path);
    nlohmann::json header = {{"schema", "cycle-sessions/1"}};
    out << header.dump() << '\n';
    for (const RefineSession& session : sessions) {
        nlohmann::json attempts = nlohmann::json::array();
        for (const Attempt& a : session.attempts) {
            attempts.push_back({{"source", a.source},
                                {"pass", a.report.all_pass},
                                {"feedback", a.feedback}});
        }
        nlohmann::json line = {{"problem_id", session.problem_id},
                               {"attempts", attempts},
                               {"stop_reason", stop_reason_name(session.stop_reason)},
                               {"steps_used", session.steps_used}};
        out << line.dump() << '\n';
    }
}

}  // namespace cycle
