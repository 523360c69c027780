#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <vector>

#include "mlconvgec/common/text.hpp"

namespace mlconvgec {

namespace detail {

using NgramCounts = std::map<Tokens, std::size_t>;

inline NgramCounts ngram_counts(const Tokens& s, std::size_t n) {
    NgramCounts c;
    for (std::size_t i = 0; i + n <= s.size(); ++i) ++c[Tokens(s.begin() + static_cast<std::ptrdiff_t>(i), s.begin() + static_cast<std::ptrdiff_t>(i + n))];
    return c;
}

inline std::size_t overlap(const NgramCounts& a, const NgramCounts& b) {
    std::size_t s = 0;
    for (const auto& [g, c] : a) {
        auto it = b.find(g);
        if (it != b.end()) s += std::min(c, it->second);
    }
    return s;
}

}  // namespace detail

/// Sufficient statistics: hyp length, ref length, then (matches, total) per order.
struct GleuStats {
    static constexpr std::size_t max_order = 4;
    double hyp_len = 0, ref_len = 0;
    std::array<double, 2 * max_order> ngram{};

    GleuStats& operator+=(const GleuStats& o) {
        hyp_len += o.hyp_len;
        ref_len += o.ref_len;
        for (std::size_t i = 0; i < ngram.size(); ++i) ngram[i] += o.ngram[i];
        return *this;
    }
};

/// Per order n: matches = max(|h ∩ r| − |h ∩ s′|, 0), where s′ holds the
/// source n-grams that never occur in the reference; total = max(|h| + 1 − n, 0).
inline GleuStats gleu_stats(const Tokens& source, const Tokens& hyp, const Tokens& ref) {
    GleuStats st;
    st.hyp_len = static_cast<double>(hyp.size());
    st.ref_len = static_cast<double>(ref.size());
    for (std::size_t n = 1; n <= GleuStats::max_order; ++n) {
        const auto h = detail::ngram_counts(hyp, n), r = detail::ngram_counts(ref, n);
        auto s_only = detail::ngram_counts(source, n);
        for (auto it = s_only.begin(); it != s_only.end();) it = r.count(it->first) ? s_only.erase(it) : std::next(it);
        const double good = static_cast<double>(detail::overlap(h, r));
        const double bad = static_cast<double>(detail::overlap(h, s_only));
        st.ngram[2 * (n - 1)] = std::max(good - bad, 0.0);
        st.ngram[2 * (n - 1) + 1] = std::max(static_cast<double>(hyp.size()) + 1.0 - static_cast<double>(n), 0.0);
    }
    return st;
}

/// Geometric mean of the n-gram precisions times exp(min(0, 1 − r/c)); any
/// zero statistic gives 0.
inline double gleu_from_stats(const GleuStats& st) {
    if (st.hyp_len == 0 || st.ref_len == 0) return 0.0;
    for (double v : st.ngram)
        if (v == 0) return 0.0;
    double log_prec = 0.0;
    for (std::size_t n = 0; n < GleuStats::max_order; ++n) log_prec += std::log(st.ngram[2 * n] / st.ngram[2 * n + 1]);
    log_prec /= static_cast<double>(GleuStats::max_order);
    const double g = std::exp(std::min(0.0, 1.0 - st.ref_len / st.hyp_len) + log_prec);
    return std::clamp(g, 0.0, 1.0);
}

/// Corpus GLEU; with several references per sentence the statistics of every
/// (sentence, reference) pair are summed.
inline double gleu(const std::vector<Tokens>& sources, const std::vector<Tokens>& hyps,
                   const std::vector<std::vector<Tokens>>& refs) {
    if (sources.size() != hyps.size() || sources.size() != refs.size()) {
        fail(ErrorCategory::alignment, "GLEU inputs differ in sentence count");
    }
    GleuStats total;
    for (std::size_t i = 0; i < hyps.size(); ++i) {
        if (refs[i].empty()) fail(ErrorCategory::contract, "sentence " + std::to_string(i) + " has no reference");
        for (const auto& r : refs[i]) total += gleu_stats(sources[i], hyps[i], r);
    }
    return gleu_from_stats(total);
}

}  // namespace mlconvgec
