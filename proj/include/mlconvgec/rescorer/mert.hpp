#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "mlconvgec/common/rng.hpp"
#include "mlconvgec/metrics/m2.hpp"
#include "mlconvgec/rescorer/features.hpp"

namespace mlconvgec {

struct MertOptions {
    std::size_t restarts = 8;            // restart 0 starts from the initial weights
    std::size_t random_directions = 0;   // extra random directions per round, besides the coordinate axes
    std::size_t max_rounds = 100;
    std::uint64_t seed = 1;
    std::vector<bool> free;              // per weight; empty means all free
    double beta = 0.5;
};

struct MertResult {
    Weights weights;
    double f_score = 0.0;          // dev F at the returned weights
    double initial_f_score = 0.0;  // dev F at the initial weights
    std::vector<std::string> warnings;
};

/// Per-hypothesis feature vectors and M2 statistics, fixed during tuning.
struct MertProblem {
    std::vector<std::vector<std::vector<double>>> features;  // [sentence][rank][feature]
    std::vector<std::vector<EditStats>> stats;               // [sentence][rank]
    double beta = 0.5;

    static MertProblem build(const FeatureNbest& nbest, const std::vector<M2Sentence>& gold, const Weights& w,
                             double beta = 0.5) {
        if (nbest.size() != gold.size()) {
            fail(ErrorCategory::alignment, "n-best covers " + std::to_string(nbest.size()) + " sentences, gold has " +
                                               std::to_string(gold.size()));
        }
        MertProblem p;
        p.beta = beta;
        for (std::size_t s = 0; s < nbest.size(); ++s) {
            if (nbest[s].empty()) fail(ErrorCategory::contract, "sentence " + std::to_string(s) + " has no hypotheses");
            auto& fv = p.features.emplace_back();
            auto& st = p.stats.emplace_back();
            for (std::size_t r = 0; r < nbest[s].size(); ++r) {
                fv.push_back(feature_vector(nbest[s][r], r, w));
                st.push_back(best_annotator_stats(extract_system_edits(gold[s].source, nbest[s][r].hypothesis), gold[s]));
            }
        }
        return p;
    }

    /// Index of the best hypothesis; ties go to the earlier one.
    std::size_t argmax(std::size_t s, const std::vector<double>& w) const {
        std::size_t best = 0;
        double best_score = dot(w, features[s][0]);
        for (std::size_t r = 1; r < features[s].size(); ++r) {
            const double v = dot(w, features[s][r]);
            if (v > best_score) {
                best_score = v;
                best = r;
            }
        }
        return best;
    }

    double evaluate(const std::vector<double>& w) const {
        EditStats total;
        for (std::size_t s = 0; s < features.size(); ++s) total += stats[s][argmax(s, w)];
        return make_report(total, beta).f05;
    }
};

namespace detail {

struct Line {
    double slope, intercept;
    std::size_t rank;
};

/// Breakpoints of one sentence's upper envelope of score lines a + γb,
/// with the argmax rank on each piece from γ = -∞ upwards.
inline void upper_envelope(std::vector<Line> lines, std::vector<double>& breaks, std::vector<std::size_t>& ranks) {
    std::sort(lines.begin(), lines.end(), [](const Line& x, const Line& y) {
        if (x.slope != y.slope) return x.slope < y.slope;
        if (x.intercept != y.intercept) return x.intercept > y.intercept;
        return x.rank < y.rank;
    });
    std::vector<Line> hull;
    std::vector<double> xs;  // xs[i]: where hull[i+1] overtakes hull[i]
    for (const auto& l : lines) {
        if (!hull.empty() && hull.back().slope == l.slope) continue;  // dominated or a later duplicate
        while (!hull.empty()) {
            const double x = (hull.back().intercept - l.intercept) / (l.slope - hull.back().slope);
            if (!xs.empty() && x <= xs.back()) {
                hull.pop_back();
                xs.pop_back();
                continue;
            }
            xs.push_back(x);
            break;
        }
        hull.push_back(l);
    }
    breaks = xs;
    ranks.clear();
    for (const auto& l : hull) ranks.push_back(l.rank);
}

}  // namespace detail

struct LineSearchResult {
    double step = 0.0;
    double f_score = -1.0;
};

/// Exact search of corpus F along w + γd: merges every sentence's envelope
/// breakpoints, sweeps the intervals, and returns the midpoint of the best
/// one (±1 beyond the outermost breakpoints). Earlier intervals win ties.
inline LineSearchResult line_search(const MertProblem& p, const std::vector<double>& w, const std::vector<double>& d) {
    struct Event {
        double x;
        std::size_t sentence;
        std::size_t from, to;
    };
    std::vector<Event> events;
    std::vector<std::size_t> current(p.features.size());
    for (std::size_t s = 0; s < p.features.size(); ++s) {
        std::vector<detail::Line> lines;
        for (std::size_t r = 0; r < p.features[s].size(); ++r) {
            lines.push_back({dot(d, p.features[s][r]), dot(w, p.features[s][r]), r});
        }
        std::vector<double> xs;
        std::vector<std::size_t> ranks;
        detail::upper_envelope(std::move(lines), xs, ranks);
        current[s] = ranks.front();
        for (std::size_t i = 0; i < xs.size(); ++i) events.push_back({xs[i], s, ranks[i], ranks[i + 1]});
    }
    std::sort(events.begin(), events.end(), [](const Event& a, const Event& b) { return a.x < b.x; });

    EditStats total;
    for (std::size_t s = 0; s < current.size(); ++s) total += p.stats[s][current[s]];
    auto f_of = [&] { return make_report(total, p.beta).f05; };

    LineSearchResult best;
    auto consider = [&](double lo, double hi) {
        const double f = f_of();
        if (f <= best.f_score) return;
        best.f_score = f;
        if (std::isinf(lo) && std::isinf(hi)) best.step = 0.0;
        else if (std::isinf(lo)) best.step = hi - 1.0;
        else if (std::isinf(hi)) best.step = lo + 1.0;
        else best.step = 0.5 * (lo + hi);
    };
    const double inf = std::numeric_limits<double>::infinity();
    double lo = -inf;
    for (std::size_t i = 0; i < events.size();) {
        const double x = events[i].x;
        if (x > lo) consider(lo, x);
        for (; i < events.size() && events[i].x == x; ++i) {
            const auto& e = events[i];
            auto sub = p.stats[e.sentence][e.from];
            total.tp -= sub.tp;
            total.fp -= sub.fp;
            total.fn -= sub.fn;
            total += p.stats[e.sentence][e.to];
        }
        lo = x;
    }
    consider(lo, inf);
    return best;
}

namespace detail {

inline std::vector<double> optimize_from(const MertProblem& p, std::vector<double> w, const std::vector<bool>& free,
                                         const MertOptions& opt, Rng& rng, double& f) {
    f = p.evaluate(w);
    for (std::size_t round = 0; round < opt.max_rounds; ++round) {
        std::vector<std::vector<double>> dirs;
        for (std::size_t i = 0; i < w.size(); ++i) {
            if (!free[i]) continue;
            std::vector<double> d(w.size(), 0.0);
            d[i] = 1.0;
            dirs.push_back(std::move(d));
        }
        for (std::size_t k = 0; k < opt.random_directions; ++k) {
            std::vector<double> d(w.size(), 0.0);
            for (std::size_t i = 0; i < w.size(); ++i)
                if (free[i]) d[i] = rng.uniform(-1.0, 1.0);
            dirs.push_back(std::move(d));
        }
        bool moved = false;
        for (const auto& d : dirs) {
            const auto ls = line_search(p, w, d);
            if (!(ls.f_score > f)) continue;
            std::vector<double> cand = w;
            for (std::size_t i = 0; i < w.size(); ++i) cand[i] += ls.step * d[i];
            const double fc = p.evaluate(cand);  // direct check; only strict gains are taken
            if (fc > f) {
                w = std::move(cand);
                f = fc;
                moved = true;
            }
        }
        if (!moved) break;
    }
    return w;
}

}  // namespace detail

/// Minimum error rate training of the log-linear weights against corpus F.
inline MertResult mert(const FeatureNbest& nbest, const std::vector<M2Sentence>& gold, const Weights& initial,
                       const MertOptions& opt = {}) {
    if (opt.restarts < 1) fail(ErrorCategory::config, "MERT needs at least one restart");
    std::vector<bool> free = opt.free.empty() ? std::vector<bool>(initial.values.size(), true) : opt.free;
    if (free.size() != initial.values.size()) fail(ErrorCategory::config, "free-weight mask does not match the weights");
    const auto p = MertProblem::build(nbest, gold, initial, opt.beta);

    MertResult res;
    res.weights = initial;
    res.initial_f_score = res.f_score = p.evaluate(initial.values);
    bool any_choice = false;
    for (const auto& s : p.features) any_choice = any_choice || s.size() > 1;
    if (!any_choice) {
        res.warnings.push_back("every sentence has a single hypothesis; returning the initial weights");
        return res;
    }
    Rng rng(opt.seed);
    for (std::size_t r = 0; r < opt.restarts; ++r) {
        std::vector<double> start = initial.values;
        if (r > 0)
            for (std::size_t i = 0; i < start.size(); ++i)
                if (free[i]) start[i] = rng.uniform(-1.0, 1.0);
        double f = 0.0;
        auto w = detail::optimize_from(p, start, free, opt, rng, f);
        if (f > res.f_score) {
            res.f_score = f;
            res.weights.values = std::move(w);
        }
    }
    return res;
}

}  // namespace mlconvgec
