#pragma once

#include <chrono>

#include "mlconvgec/pipeline/synth.hpp"
#include "mlconvgec/textprep/vocab.hpp"
#include "mlconvgec/trainer/train.hpp"

namespace mlconvgec::oracle {

struct OverfitSetup {
    Vocabulary src_vocab, tgt_vocab;
    std::vector<TokenPair> pairs;
    std::vector<M2Sentence> gold;
    std::vector<Tokens> targets;
};

inline std::vector<int> with_eos(std::vector<int> v) {
    v.push_back(Vocabulary::eos_index);
    return v;
}

/// Word-level encoding of the synthetic corpus with gold M2 from the
/// reference alignment.
inline OverfitSetup overfit_setup(std::size_t n = 50, std::uint64_t seed = 7) {
    OverfitSetup s;
    std::vector<Tokens> src, tgt;
    for (const auto& p : synthetic_corpus(n, seed)) {
        src.push_back(p.source);
        tgt.push_back(p.target);
    }
    s.src_vocab = build_vocab(src, 1000);
    s.tgt_vocab = build_vocab(tgt, 1000);
    for (std::size_t i = 0; i < src.size(); ++i) {
        s.pairs.push_back({with_eos(s.src_vocab.encode(src[i])), with_eos(s.tgt_vocab.encode(tgt[i]))});
        s.gold.push_back(parse_m2(format_m2(src[i], extract_system_edits(src[i], tgt[i]))).front());
    }
    s.targets = tgt;
    return s;
}

inline ModelConfig overfit_model_config(const OverfitSetup& s) {
    ModelConfig c;
    c.embed_dim = 32;
    c.hidden_dim = 64;
    c.layers = 2;
    c.src_vocab = s.src_vocab.size();
    c.tgt_vocab = s.tgt_vocab.size();
    c.max_positions = 32;
    c.dropout = 0.0;
    return c;
}

/// Hyperparameters for the overfit run. The defaults (lr 0.25, momentum 0.99,
/// clip 0.1, F0.5-only annealing) diverge or stall on 50 pairs.
inline TrainConfig overfit_train_config() {
    TrainConfig t;
    t.lr = 0.02;
    t.momentum = 0.95;
    t.batch_size = 5;
    t.clip = 1.0;
    t.anneal_trigger = AnnealTrigger::f05_or_nll;
    t.patience = 1000;
    t.max_epochs = 200;
    t.seed = 1;
    return t;
}

struct OverfitOutcome {
    TrainResult result;
    double final_nll = 0;
    double exact_match = 0;
    double seconds = 0;
    bool best_monotone = true;
};

inline double exact_match_rate(const OverfitSetup& s, const ModelParams& p) {
    std::size_t hits = 0;
    const ModelParams* members[] = {&p};
    for (std::size_t i = 0; i < s.pairs.size(); ++i) {
        DecodeOptions opt;
        opt.beam = 1;
        const auto r = decode_sentence(members, s.pairs[i].source, opt);
        if (s.tgt_vocab.decode(r.nbest.front().tokens) == s.targets[i]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(s.pairs.size());
}

/// Trains on the pairs with the pairs themselves as dev set, stopping once
/// the training NLL and the exact-match rate both reach their targets.
inline OverfitOutcome run_overfit(const TrainConfig& tc, double nll_target = 0.1, double match_target = 0.95) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto s = overfit_setup();
    ModelParams init(overfit_model_config(s));
    Rng rng(tc.seed);
    init_params(init, rng);

    std::vector<std::vector<int>> sources;
    for (const auto& p : s.pairs) sources.push_back(p.source);
    auto eval = make_dev_evaluator(sources, s.gold, [&](const std::vector<int>& t) { return s.tgt_vocab.decode(t); });

    OverfitOutcome out;
    double prev_best = -1.0;
    out.result = train(s.pairs, s.pairs, init, tc, eval, [&](const EpochLog&, const ModelParams& cur, const TrainResult& r) {
        if (r.best_f05 < prev_best) out.best_monotone = false;
        prev_best = r.best_f05;
        return mean_nll(s.pairs, cur) < nll_target && exact_match_rate(s, cur) >= match_target;
    });
    out.final_nll = mean_nll(s.pairs, out.result.last);
    out.exact_match = exact_match_rate(s, out.result.last);
    out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

}  // namespace mlconvgec::oracle
