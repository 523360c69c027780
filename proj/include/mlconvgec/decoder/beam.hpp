#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <vector>

#include "mlconvgec/common/error.hpp"
#include "mlconvgec/model/network.hpp"

namespace mlconvgec {

/// Next-token log-probabilities given the tokens generated so far (BOS excluded).
using StepScorer = std::function<std::vector<double>(std::span<const int>)>;

struct Hypothesis {
    std::vector<int> tokens;          // generated tokens, EOS included when finished
    double model_score = 0.0;         // Σ step_scores
    bool finished = false;
    std::vector<double> step_scores;  // log-prob of each token in `tokens`
};

struct SearchResult {
    std::vector<Hypothesis> nbest;  // best first
    bool truncated = false;         // nothing finished within max_len
};

struct SearchOptions {
    std::size_t beam = 12;
    std::size_t max_len = 0;      // required, > 0
    int eos = Vocabulary::eos_index;
    std::vector<int> banned;      // never generated
};

/// log((1/k) Σ_m exp(lp_m)) elementwise.
inline std::vector<double> ensemble_logprobs(std::span<const std::vector<double>> dists) {
    if (dists.empty()) fail(ErrorCategory::contract, "ensemble needs at least one model");
    const std::size_t v = dists[0].size();
    for (const auto& d : dists) {
        if (d.size() != v) {
            fail(ErrorCategory::contract, "ensemble members disagree on vocabulary size (" + std::to_string(v) +
                                              " vs " + std::to_string(d.size()) + ")");
        }
    }
    if (dists.size() == 1) return dists[0];
    const double log_k = std::log(static_cast<double>(dists.size()));
    std::vector<double> out(v);
    for (std::size_t i = 0; i < v; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (const auto& d : dists) mx = std::max(mx, d[i]);
        if (mx == -std::numeric_limits<double>::infinity()) {
            out[i] = mx;
            continue;
        }
        double s = 0.0;
        for (const auto& d : dists) s += std::exp(d[i] - mx);
        out[i] = mx + (std::log(s) - log_k);
    }
    return out;
}

namespace detail {

inline std::vector<double> score_step(std::span<const StepScorer> models, std::span<const int> prefix) {
    if (models.size() == 1) return models[0](prefix);
    std::vector<std::vector<double>> dists;
    dists.reserve(models.size());
    for (const auto& m : models) dists.push_back(m(prefix));
    return ensemble_logprobs(dists);
}

}  // namespace detail

/// Left-to-right beam search. Each step expands every active hypothesis over
/// the vocabulary and keeps the global top `beam` candidates (ties: earlier
/// hypothesis, then lower token index); candidates ending in EOS move to the
/// finished pool. Stops once `beam` hypotheses have finished and the worst of
/// the best `beam` finished scores is at least the best active score, when no
/// active hypotheses remain, or at max_len.
inline SearchResult beam_search(std::span<const StepScorer> models, const SearchOptions& opt) {
    if (models.empty()) fail(ErrorCategory::contract, "beam search needs at least one model");
    if (opt.beam < 1) fail(ErrorCategory::config, "beam width must be at least 1");
    if (opt.max_len < 1) fail(ErrorCategory::config, "max_len must be at least 1");

    struct Candidate {
        double score;
        std::size_t hyp;
        int token;
        double step;
    };
    auto better = [](const Candidate& a, const Candidate& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.hyp != b.hyp) return a.hyp < b.hyp;
        return a.token < b.token;
    };
    auto by_score = [](const Hypothesis& a, const Hypothesis& b) { return a.model_score > b.model_score; };

    std::vector<Hypothesis> active(1), finished;
    std::vector<double> step;
    std::vector<Candidate> cands;
    for (std::size_t len = 0; len < opt.max_len && !active.empty(); ++len) {
        cands.clear();
        for (std::size_t h = 0; h < active.size(); ++h) {
            step = detail::score_step(models, active[h].tokens);
            for (std::size_t v = 0; v < step.size(); ++v) {
                const int tok = static_cast<int>(v);
                if (std::find(opt.banned.begin(), opt.banned.end(), tok) != opt.banned.end()) continue;
                if (std::isnan(step[v]) || step[v] == -std::numeric_limits<double>::infinity()) continue;
                cands.push_back({active[h].model_score + step[v], h, tok, step[v]});
            }
        }
        const std::size_t keep = std::min(opt.beam, cands.size());
        std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep), cands.end(), better);

        std::vector<Hypothesis> next;
        for (std::size_t c = 0; c < keep; ++c) {
            const auto& cand = cands[c];
            Hypothesis h = active[cand.hyp];
            h.step_scores.push_back(cand.step);
            h.tokens.push_back(cand.token);
            h.model_score = cand.score;
            if (cand.token == opt.eos) {
                h.finished = true;
                finished.push_back(std::move(h));
            } else {
                next.push_back(std::move(h));
            }
        }
        active = std::move(next);

        if (finished.size() >= opt.beam && !active.empty()) {
            std::stable_sort(finished.begin(), finished.end(), by_score);
            if (finished[opt.beam - 1].model_score >= active.front().model_score) break;
        }
    }

    SearchResult res;
    std::stable_sort(finished.begin(), finished.end(), by_score);
    if (finished.empty()) {
        res.truncated = true;
        std::stable_sort(active.begin(), active.end(), by_score);
        finished = std::move(active);
    }
    if (finished.size() > opt.beam) finished.resize(opt.beam);
    res.nbest = std::move(finished);
    return res;
}

/// Stepwise argmax (lowest index on ties) until EOS or max_len.
inline Hypothesis greedy_search(const StepScorer& model, const SearchOptions& opt) {
    Hypothesis h;
    while (h.tokens.size() < opt.max_len) {
        const auto step = model(h.tokens);
        int best = -1;
        for (std::size_t v = 0; v < step.size(); ++v) {
            const int tok = static_cast<int>(v);
            if (std::find(opt.banned.begin(), opt.banned.end(), tok) != opt.banned.end()) continue;
            if (best < 0 || step[v] > step[static_cast<std::size_t>(best)]) best = tok;
        }
        if (best < 0) break;
        h.tokens.push_back(best);
        h.step_scores.push_back(step[static_cast<std::size_t>(best)]);
        h.model_score += step[static_cast<std::size_t>(best)];
        if (best == opt.eos) {
            h.finished = true;
            break;
        }
    }
    return h;
}

// ---------------------------------------------------------------------------
// Model-level wrappers

inline std::size_t default_max_len(std::size_t source_len) { return 2 * source_len + 5; }

/// Scorer over one parameter set for a fixed source; encodes once.
inline StepScorer model_scorer(const ModelParams& params, std::span<const int> source) {
    auto enc = std::make_shared<EncoderOutput>(encode(source, params));
    const std::size_t limit = params.config().max_positions;
    return [&params, enc, limit](std::span<const int> generated) {
        std::vector<int> prefix;
        prefix.reserve(generated.size() + 1);
        prefix.push_back(Vocabulary::bos_index);
        prefix.insert(prefix.end(), generated.begin(), generated.end());
        if (prefix.size() > limit) fail(ErrorCategory::length, "hypothesis exceeds the model's max positions");
        return decode_step(prefix, *enc, params);
    };
}

struct DecodeOptions {
    std::size_t beam = 12;
    std::size_t max_len = 0;  // 0 → 2·|source| + 5, capped by max positions
};

/// Beam search over an ensemble of models sharing the target vocabulary.
/// `source` ends with EOS.
inline SearchResult decode_sentence(std::span<const ModelParams* const> models, std::span<const int> source,
                                    const DecodeOptions& opt) {
    if (models.empty()) fail(ErrorCategory::contract, "decoding needs at least one checkpoint");
    const auto& first = models[0]->config();
    std::size_t max_len = opt.max_len ? opt.max_len : default_max_len(source.size());
    for (const auto* m : models) {
        if (m->config().tgt_vocab != first.tgt_vocab || m->config().src_vocab != first.src_vocab) {
            fail(ErrorCategory::contract, "ensemble members have different vocabulary sizes");
        }
        max_len = std::min(max_len, m->config().max_positions - 1);
    }
    std::vector<StepScorer> scorers;
    for (const auto* m : models) scorers.push_back(model_scorer(*m, source));
    SearchOptions so;
    so.beam = opt.beam;
    so.max_len = std::max<std::size_t>(1, max_len);
    so.banned = {Vocabulary::pad_index, Vocabulary::bos_index};
    return beam_search(scorers, so);
}

}  // namespace mlconvgec
