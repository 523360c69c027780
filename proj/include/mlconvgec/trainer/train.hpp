#pragma once

#include <algorithm>
#include <chrono>
#include <functional>
#include <limits>
#include <numeric>
#include <sstream>
#include <thread>

#include "mlconvgec/common/text.hpp"
#include "mlconvgec/decoder/beam.hpp"
#include "mlconvgec/metrics/m2.hpp"
#include "mlconvgec/model/network.hpp"
#include "mlconvgec/trainer/optim.hpp"

namespace mlconvgec {

/// Scores the current parameters on the dev set.
using DevEvaluator = std::function<ScoreReport(const ModelParams&)>;

struct EpochLog {
    std::size_t epoch = 0;
    double train_nll = 0, dev_nll = 0;
    ScoreReport dev;
    double lr = 0;  // rate used during the epoch
    double seconds = 0;
    bool improved = false, annealed = false;
    std::size_t steps = 0;

    /// key=value line; everything but seconds is deterministic.
    std::string line() const {
        std::ostringstream os;
        os << "epoch=" << epoch << " train_nll=" << format_fixed(train_nll, 6) << " dev_nll=" << format_fixed(dev_nll, 6)
           << " dev_p=" << format_fixed(dev.precision, 4) << " dev_r=" << format_fixed(dev.recall, 4)
           << " dev_f05=" << format_fixed(dev.f05, 4) << " lr=" << format_double(lr) << " steps=" << steps
           << " improved=" << improved << " annealed=" << annealed << " seconds=" << format_fixed(seconds, 3);
        return os.str();
    }
};

struct TrainResult {
    ModelParams best, last;
    std::size_t best_epoch = 0;
    double best_f05 = -1.0, best_dev_nll = std::numeric_limits<double>::infinity();
    std::vector<EpochLog> epochs;
    std::size_t dropped = 0;  // pairs longer than max_positions
};

/// Called after every epoch with the current parameters; returning true
/// stops training.
using EpochHook = std::function<bool(const EpochLog&, const ModelParams& current, const TrainResult&)>;

namespace detail {

/// Seeded shuffle, stable sort by total length, fixed-size chunks, then a
/// seeded shuffle of the chunk order.
inline std::vector<std::vector<std::size_t>> make_batches(const std::vector<TokenPair>& data, std::size_t batch_size,
                                                          Rng& rng) {
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return data[a].source.size() + data[a].target.size() < data[b].source.size() + data[b].target.size();
    });
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t i = 0; i < order.size(); i += batch_size) {
        batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                             order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), i + batch_size)));
    }
    rng.shuffle(batches);
    return batches;
}

inline void add_into(Gradients& dst, const Gradients& src) {
    for (std::size_t i = 0; i < dst.size(); ++i)
        for (std::size_t k = 0; k < dst[i].size(); ++k) dst[i][k] += src[i][k];
}

/// Gradient of the batch-mean loss. Each pair gets its own dropout stream and
/// its own buffer; buffers are summed in pair order, so the result does not
/// depend on the thread count.
inline double batch_gradient(const std::vector<TokenPair>& data, const std::vector<std::size_t>& batch,
                             const ModelParams& params, Rng& rng, std::size_t threads, Gradients& out) {
    const std::size_t n = batch.size();
    const double w = 1.0 / static_cast<double>(n);
    std::vector<std::uint64_t> seeds(n);
    for (auto& s : seeds) s = rng.next_u64();
    std::vector<double> losses(n);
    std::vector<Gradients> bufs(n);
    std::vector<std::exception_ptr> errors(n);
    auto work = [&](std::size_t k) {
        try {
            Rng r(seeds[k]);
            bufs[k] = zero_gradients(params);
            const auto& p = data[batch[k]];
            losses[k] = forward_nll(p.source, p.target, params, Mode::train, &r, &bufs[k], w).loss;
        } catch (...) {
            errors[k] = std::current_exception();
        }
    };
    const std::size_t t = std::min(threads, n);
    if (t <= 1) {
        for (std::size_t k = 0; k < n; ++k) work(k);
    } else {
        std::vector<std::thread> pool;
        for (std::size_t id = 0; id < t; ++id) {
            pool.emplace_back([&, id] {
                for (std::size_t k = id; k < n; k += t) work(k);
            });
        }
        for (auto& th : pool) th.join();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    double total = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        add_into(out, bufs[k]);
        total += losses[k];
    }
    return total * w;
}

inline bool fits(const TokenPair& p, const ModelConfig& cfg) {
    return !p.source.empty() && !p.target.empty() && p.source.size() <= cfg.max_positions &&
           p.target.size() <= cfg.max_positions;
}

}  // namespace detail

/// Mean teacher-forced NLL without dropout.
inline double mean_nll(const std::vector<TokenPair>& data, const ModelParams& params) {
    if (data.empty()) return 0.0;
    double total = 0.0;
    for (const auto& p : data) total += forward_nll(p.source, p.target, params, Mode::inference, nullptr).loss;
    return total / static_cast<double>(data.size());
}

/// Dev evaluator: decode each source (beam 1 by default), turn the output
/// tokens into words with `to_words`, and score against the gold M2.
inline DevEvaluator make_dev_evaluator(std::vector<std::vector<int>> sources, std::vector<M2Sentence> gold,
                                       std::function<Tokens(const std::vector<int>&)> to_words, std::size_t beam = 1) {
    if (sources.size() != gold.size()) {
        fail(ErrorCategory::alignment, "dev sources and gold annotations differ in count");
    }
    return [sources = std::move(sources), gold = std::move(gold), to_words = std::move(to_words), beam](const ModelParams& p) {
        std::vector<Tokens> hyps;
        hyps.reserve(sources.size());
        const ModelParams* members[] = {&p};
        for (const auto& s : sources) {
            DecodeOptions opt;
            opt.beam = beam;
            auto r = decode_sentence(members, s, opt);
            hyps.push_back(to_words(r.nbest.front().tokens));
        }
        return m2_score(hyps, gold);
    };
}

/// Epoch loop with NAG updates, dev-F0.5 model selection (ties broken by the
/// lower dev NLL), annealing on epochs without progress and patience-based
/// stopping.
inline TrainResult train(const std::vector<TokenPair>& corpus, const std::vector<TokenPair>& dev, ModelParams params,
                         const TrainConfig& cfg, const DevEvaluator& evaluate, const EpochHook& on_epoch = {}) {
    cfg.validate();
    if (!evaluate) fail(ErrorCategory::contract, "train needs a dev evaluator");
    TrainResult res;
    std::vector<TokenPair> data;
    for (const auto& p : corpus) {
        if (detail::fits(p, params.config())) {
            data.push_back(p);
        } else {
            ++res.dropped;
        }
    }
    if (data.empty()) fail(ErrorCategory::training, "training corpus is empty after length filtering");
    std::vector<TokenPair> dev_kept;
    for (const auto& p : dev)
        if (detail::fits(p, params.config())) dev_kept.push_back(p);

    Rng rng(cfg.seed);
    OptimizerState st(params.arrays(), cfg.lr);
    const auto& names = params.names();
    res.best = params;
    std::size_t since = 0;
    double lowest_dev_nll = std::numeric_limits<double>::infinity();

    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        EpochLog log;
        log.epoch = epoch;
        log.lr = st.lr;
        double loss_sum = 0.0;
        for (const auto& batch : detail::make_batches(data, cfg.batch_size, rng)) {
            Gradients g = zero_gradients(params);
            loss_sum += detail::batch_gradient(data, batch, params, rng, cfg.threads, g) * static_cast<double>(batch.size());
            if (cfg.clip > 0.0) clip_gradients(g, cfg.clip);
            nag_step(params.arrays(), g, st, cfg.momentum, &names);
            ++log.steps;
        }
        log.train_nll = loss_sum / static_cast<double>(data.size());
        log.dev_nll = mean_nll(dev_kept, params);
        try {
            log.dev = evaluate(params);
        } catch (const Error& e) {
            fail(e.category(), "dev evaluation failed after epoch " + std::to_string(epoch) + ": " + e.what());
        }

        log.improved = log.dev.f05 > res.best_f05 || (log.dev.f05 == res.best_f05 && log.dev_nll < res.best_dev_nll);
        if (log.improved) {
            res.best = params;
            res.best_epoch = epoch;
            res.best_f05 = log.dev.f05;
            res.best_dev_nll = log.dev_nll;
        }
        const bool progress =
            log.improved || (cfg.anneal_trigger == AnnealTrigger::f05_or_nll && log.dev_nll < lowest_dev_nll);
        lowest_dev_nll = std::min(lowest_dev_nll, log.dev_nll);
        if (progress) {
            since = 0;
        } else {
            ++since;
            st.set_lr(st.lr * cfg.anneal_factor);
            log.annealed = true;
        }
        log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        res.epochs.push_back(log);
        if (on_epoch && on_epoch(log, params, res)) break;
        if (since > cfg.patience) break;
    }
    res.last = std::move(params);
    return res;
}

}  // namespace mlconvgec
