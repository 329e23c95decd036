#include "cycle/eval.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "cycle/edit_distance.hpp"
#include "cycle/parallel.hpp"
#include "cycle/rng.hpp"

namespace cycle {

double pass_at_k(int n, int c, int k) {
    if (n < 1 || c < 0 || c > n || k < 1 || k > n) throw InvalidArgs("pass_at_k arguments");
    if (n - c < k) return 1.0;
    // 1 - prod_{i=0..k-1} (n-c-i)/(n-i), stable for large n.
    double prod = 1.0;
    for (int i = 0; i < k; ++i) {
        prod *= static_cast<double>(n - c - i) / static_cast<double>(n - i);
    }
    return 1.0 - prod;
}

std::vector<double> step_curve(const std::vector<RefineSession>& sessions, int max_steps) {
    std::vector<double> curve(static_cast<std::size_t>(max_steps) + 1, 0.0);
    if (sessions.empty()) return curve;
    for (int s = 0; s <= max_steps; ++s) {
        int solved = 0;
        for (const RefineSession& session : sessions) {
            if (session.stop_reason == StopReason::Solved && session.steps_used <= s) ++solved;
        }
        curve[static_cast<std::size_t>(s)] =
            static_cast<double>(solved) / static_cast<double>(sessions.size());
    }
    return curve;
}

namespace {

template <class Fn>
void for_each_transition(const std::vector<RefineSession>& sessions, Fn&& fn) {
    for (const RefineSession& session : sessions) {
        for (std::size_t i = 1; i < session.attempts.size(); ++i) {
            fn(session.attempts[i - 1].source, session.attempts[i].source);
        }
    }
}

}  // namespace

double exact_copy_rate(const std::vector<RefineSession>& sessions, const Vocab& vocab) {
    std::size_t transitions = 0;
    std::size_t copies = 0;
    for_each_transition(sessions, [&](const std::string& prev, const std::string& next) {
        ++transitions;
        if (is_exact_copy(vocab, prev, next)) ++copies;
    });
    if (transitions == 0) return 0.0;
    return static_cast<double>(copies) / static_cast<double>(transitions);
}

double mean_token_edit_distance(const std::vector<RefineSession>& sessions, const Vocab& vocab) {
    std::size_t transitions = 0;
    double total = 0.0;
    for_each_transition(sessions, [&](const std::string& prev, const std::string& next) {
        ++transitions;
        total += static_cast<double>(levenshtein(vocab.encode(prev), vocab.encode(next)));
    });
    if (transitions == 0) throw NoTransitions("no refinement transitions recorded");
    return total / static_cast<double>(transitions);
}

EvalOutcome evaluate(const DecoderFactory& decoder_factory, const Vocab& vocab,
                     const std::vector<const Problem*>& problems, ExecCache& cache,
                     const EvalOptions& options) {
    if (options.sessions_per_problem < 1) throw InvalidArgs("sessions_per_problem must be >= 1");
    auto t0 = std::chrono::steady_clock::now();
    const std::uint64_t hits_before = cache.hits();
    const std::uint64_t misses_before = cache.misses();

    const int k = options.sessions_per_problem;
    std::vector<std::vector<RefineSession>> per_problem(problems.size());
    parallel_for(problems.size(), options.jobs, [&](std::size_t idx) {
        SessionOptions session = options.session;
        session.seed = derive_seed(options.session.seed, "eval-problem", idx);
        if (k == 1) {
            per_problem[idx] = {run_session(decoder_factory, vocab, *problems[idx], cache, session)};
        } else {
            per_problem[idx] =
                refine_topk(decoder_factory, vocab, *problems[idx], cache, k, session);
        }
    });

    EvalOutcome outcome;
    outcome.report.benchmark = options.benchmark;
    std::vector<RefineSession> primary;  // first session per problem drives the step metrics
    double pass_k_total = 0.0;
    for (std::size_t idx = 0; idx < per_problem.size(); ++idx) {
        auto& sessions = per_problem[idx];
        if (!sessions.empty()) primary.push_back(sessions.front());
        int solved = 0;
        for (const RefineSession& s : sessions) {
            if (s.stop_reason == StopReason::Solved) ++solved;
        }
        int n = static_cast<int>(sessions.size());
        pass_k_total += pass_at_k(n, solved, std::min(k, n));
        for (RefineSession& s : sessions) outcome.sessions.push_back(std::move(s));
    }

    outcome.report.per_step_cumulative_pass_rate = step_curve(primary, options.session.max_steps);
    outcome.report.one_time_pass_rate = outcome.report.per_step_cumulative_pass_rate.front();
    outcome.report.exact_copy_rate = exact_copy_rate(outcome.sessions, vocab);
    try {
        outcome.report.mean_edit_distance = mean_token_edit_distance(outcome.sessions, vocab);
    } catch (const NoTransitions&) {
        outcome.report.mean_edit_distance.reset();
    }
    if (k > 1 && !problems.empty()) {
        outcome.report.pass_at_k = pass_k_total / static_cast<double>(problems.size());
    }
    outcome.report.executions_performed = cache.misses() - misses_before;
    outcome.report.cache_hits = cache.hits() - hits_before;
    outcome.report.wallclock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return outcome;
}

namespace {

std::string fmt_rate(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

}  // namespace

void write_eval_report_json(const EvalReport& report, const std::string& path) {
    nlohmann::json j = {
        {"benchmark", report.benchmark},
        {"one_time_pass_rate", report.one_time_pass_rate},
        {"per_step_cumulative_pass_rate", report.per_step_cumulative_pass_rate},
        {"exact_copy_rate", report.exact_copy_rate},
        {"wallclock_seconds", report.wallclock_seconds},
        {"executions_performed", report.executions_performed},
        {"cache_hits", report.cache_hits},
    };
    j["mean_edit_distance"] =
        report.mean_edit_distance ? nlohmann::json(*report.mean_edit_distance) : nlohmann::json();
    j["pass_at_k"] = report.pass_at_k ? nlohmann::json(*report.pass_at_k) : nlohmann::json();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write eval report: " + path);
    out << j.dump(2) << '\n';
}

void write_eval_report_csv(const std::vector<EvalReport>& reports, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write eval csv: " + path);
    out << "benchmark,one_time_pass_rate,final_pass_rate,exact_copy_rate,mean_edit_distance,"
           "pass_at_k,executions_performed,cache_hits\n";
    for (const EvalReport& r : reports) {
        double final_rate = r.per_step_cumulative_pass_rate.empty()
                                ? 0.0
                                : r.per_step_cumulative_pass_rate.back();
        out << r.benchmark << ',' << fmt_rate(r.one_time_pass_rate) << ',' << fmt_rate(final_rate)
            << ',' << fmt_rate(r.exact_copy_rate) << ','
            << (r.mean_edit_distance ? fmt_rate(*r.mean_edit_distance) : std::string()) << ','
            << (r.pass_at_k ? fmt_rate(*r.pass_at_k) : std::string()) << ','
            << r.executions_performed << ',' << r.cache_hits << '\n';
    }
}

void write_step_curve_csv(const EvalReport& report, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write step curve csv: " + path);
    out << "step,cumulative_pass_rate\n";
    for (std::size_t s = 0; s < report.per_step_cumulative_pass_rate.size(); ++s) {
        out << s << ',' << fmt_rate(report.per_step_cumulative_pass_rate[s]) << '\n';
    }
}

}  // namespace cycle
