#include "cycle/decoding.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace cycle {

namespace {

int argmax_first(const Eigen::VectorXd& logits) {
    int best = 0;
    for (int i = 1; i < logits.size(); ++i) {
        if (logits(i) > logits(best)) best = i;
    }
    return best;
}

int sample_nucleus(const Eigen::VectorXd& logits, double top_p, double temperature,
                   std::mt19937_64& rng) {
    Eigen::VectorXd scaled = logits / temperature;
    double mx = scaled.maxCoeff();
    Eigen::VectorXd probs = (scaled.array() - mx).exp();
    probs /= probs.sum();
    std::vector<int> order(static_cast<std::size_t>(probs.size()));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&probs](int a, int b) {
        if (probs(a) != probs(b)) return probs(a) > probs(b);
        return a < b;
    });
    // Smallest prefix whose cumulative mass reaches top_p.
    double cum = 0.0;
    std::size_t keep = 0;
    while (keep < order.size()) {
        cum += probs(order[keep]);
        ++keep;
        if (cum >= top_p) break;
    }
    double u = rand_real(rng) * cum;
    double acc = 0.0;
    for (std::size_t i = 0; i < keep; ++i) {
        acc += probs(order[i]);
        if (u < acc) return order[i];
    }
    return order[keep - 1];
}

Eigen::VectorXd log_softmax(const Eigen::VectorXd& logits) {
    double mx = logits.maxCoeff();
    double lse = std::log((logits.array() - mx).exp().sum()) + mx;
    return logits.array() - lse;
}

}  // namespace

DecodeStrategy parse_strategy(const std::string& name, double top_p, double temperature,
                              int width) {
    if (name == "greedy") return DecodeStrategy::greedy();
    if (name == "nucleus") return DecodeStrategy::nucleus(top_p, temperature);
    if (name == "beam") return DecodeStrategy::beam(width);
    throw std::invalid_argument("unknown decode strategy: " + name);
}

std::vector<int> generate(Decoder& decoder, const std::vector<int>& prompt, int max_new,
                          const DecodeStrategy& strategy, std::mt19937_64& rng, int eos_id) {
    if (strategy.kind == DecodeStrategy::Kind::Beam) {
        auto beams = beam_search(decoder, prompt, strategy.beam_width, max_new, eos_id);
        return beams.front().tokens;
    }
    const bool greedy = strategy.kind == DecodeStrategy::Kind::Greedy ||
                        strategy.temperature < 1e-6;  // temperature -> 0 limit
    std::vector<int> out;
    Eigen::VectorXd logits = decoder.prime(prompt);
    for (int n = 0; n < max_new; ++n) {
        int token = greedy ? argmax_first(logits)
                           : sample_nucleus(logits, strategy.top_p, strategy.temperature, rng);
        if (token == eos_id) break;
        out.push_back(token);
        if (decoder.remaining_capacity() <= 0) break;
        logits = decoder.append(token);
    }
    return out;
}

std::vector<BeamResult> beam_search(Decoder& decoder, const std::vector<int>& prompt, int width,
                                    int max_new, int eos_id) {
    if (width < 1) throw std::invalid_argument("beam width must be >= 1");
    struct Beam {
        std::vector<int> tokens;
        double score = 0.0;
        std::unique_ptr<Decoder> decoder;
        Eigen::VectorXd logits;
    };

    std::vector<Beam> active;
    {
        Beam root;
        root.decoder = decoder.clone();
        root.logits = root.decoder->prime(prompt);
        active.push_back(std::move(root));
    }
    std::vector<BeamResult> finished;

    for (int n = 0; n < max_new && !active.empty(); ++n) {
        struct Candidate {
            std::size_t beam;
            int token;
            double score;
        };
        std::vector<Candidate> candidates;
        for (std::size_t b = 0; b < active.size(); ++b) {
            Eigen::VectorXd logp = log_softmax(active[b].logits);
            for (int tok = 0; tok < logp.size(); ++tok) {
                candidates.push_back({b, tok, active[b].score + logp(tok)});
            }
        }
        // The active frontier keeps full width; finished beams compete only in
        // the final ranking. A narrower frontier would drop prefixes that can
        // still head top-width paths.
        std::size_t want = std::min<std::size_t>(static_cast<std::size_t>(width),
                                                 candidates.size());
        std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(want),
                          candidates.end(), [](const Candidate& a, const Candidate& b) {
                              if (a.score != b.score) return a.score > b.score;
                              if (a.beam != b.beam) return a.beam < b.beam;
                              return a.token < b.token;
                          });
        candidates.resize(want);

        std::vector<Beam> next;
        bool at_capacity = !active.empty() && active.front().decoder->remaining_capacity() <= 0;
        for (const Candidate& c : candidates) {
            if (c.token == eos_id) {
                finished.push_back({active[c.beam].tokens, c.score});
                continue;
            }
            Beam beam;
            beam.tokens = active[c.beam].tokens;
            beam.tokens.push_back(c.token);
            beam.score = c.score;
            if (n + 1 < max_new && !at_capacity) {
                beam.decoder = active[c.beam].decoder->clone();
                beam.logits = beam.decoder->append(c.token);
            }
            next.push_back(std::move(beam));
        }
        if (at_capacity) {
            // Window full: remaining beams terminate by length.
            for (Beam& b : next) finished.push_back({std::move(b.tokens), b.score});
            next.clear();
        }
        active = std::move(next);
    }
    for (Beam& b : active) finished.push_back({std::move(b.tokens), b.score});
    std::sort(finished.begin(), finished.end(), [](const BeamResult& a, const BeamResult& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.tokens < b.tokens;
    });
    if (finished.size() > static_cast<std::size_t>(width)) {
        finished.resize(static_cast<std::size_t>(width));
    }
    return finished;
}

}  // namespace cycle
