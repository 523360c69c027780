#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "mlconvgec/common/text.hpp"

namespace mlconvgec {

enum class EditOp { match, substitute, remove, insert };

struct AlignStep {
    EditOp op;
    std::size_t src;  // source index the step consumes, or the insertion point
    std::size_t hyp;  // hypothesis index the step consumes, or the position after it
};

/// Minimal unit-cost Levenshtein alignment. Among minimal alignments the one
/// with the most substitutions is kept (so swapping the inputs only swaps
/// deletions and insertions); remaining ties are broken in the backtrace,
/// which runs from the end and prefers match, substitution, deletion, insertion.
inline std::vector<AlignStep> align_tokens(const Tokens& src, const Tokens& hyp) {
    const std::size_t n = src.size(), m = hyp.size();
    // Cell value: cost * (n + m + 1) - substitutions, so cost dominates.
    const long long big = static_cast<long long>(n + m + 1);
    std::vector<long long> d((n + 1) * (m + 1));
    auto at = [&](std::size_t i, std::size_t j) -> long long& { return d[i * (m + 1) + j]; };
    for (std::size_t i = 0; i <= n; ++i) at(i, 0) = static_cast<long long>(i) * big;
    for (std::size_t j = 0; j <= m; ++j) at(0, j) = static_cast<long long>(j) * big;
    for (std::size_t i = 1; i <= n; ++i)
        for (std::size_t j = 1; j <= m; ++j) {
            const long long diag = at(i - 1, j - 1) + (src[i - 1] == hyp[j - 1] ? 0 : big - 1);
            at(i, j) = std::min({diag, at(i - 1, j) + big, at(i, j - 1) + big});
        }

    std::vector<AlignStep> steps;
    std::size_t i = n, j = m;
    while (i > 0 || j > 0) {
        const long long cur = at(i, j);
        if (i > 0 && j > 0 && src[i - 1] == hyp[j - 1] && cur == at(i - 1, j - 1)) {
            steps.push_back({EditOp::match, --i, --j});
        } else if (i > 0 && j > 0 && src[i - 1] != hyp[j - 1] && cur == at(i - 1, j - 1) + big - 1) {
            steps.push_back({EditOp::substitute, --i, --j});
        } else if (i > 0 && cur == at(i - 1, j) + big) {
            steps.push_back({EditOp::remove, --i, j});
        } else {
            steps.push_back({EditOp::insert, i, --j});
        }
    }
    return {steps.rbegin(), steps.rend()};
}

struct EditCounts {
    std::size_t substitutions = 0, deletions = 0, insertions = 0;
    bool operator==(const EditCounts&) const = default;
};

inline EditCounts count_edits(const Tokens& src, const Tokens& hyp) {
    EditCounts c;
    for (const auto& s : align_tokens(src, hyp)) {
        if (s.op == EditOp::substitute) ++c.substitutions;
        if (s.op == EditOp::remove) ++c.deletions;
        if (s.op == EditOp::insert) ++c.insertions;
    }
    return c;
}

struct Edit {
    std::size_t start = 0, end = 0;  // source token span [start, end)
    std::string replacement;         // space-joined tokens, empty for deletion
    bool operator==(const Edit&) const = default;
    auto operator<=>(const Edit&) const = default;
};

/// Span edits from the alignment, with each run of adjacent non-match steps
/// merged into one edit.
inline std::vector<Edit> extract_system_edits(const Tokens& src, const Tokens& hyp) {
    std::vector<Edit> edits;
    const auto steps = align_tokens(src, hyp);
    std::size_t k = 0;
    while (k < steps.size()) {
        if (steps[k].op == EditOp::match) {
            ++k;
            continue;
        }
        Edit e;
        e.start = steps[k].src;
        e.end = e.start;
        Tokens repl;
        for (; k < steps.size() && steps[k].op != EditOp::match; ++k) {
            if (steps[k].op != EditOp::insert) e.end = steps[k].src + 1;
            if (steps[k].op != EditOp::remove) repl.push_back(hyp[steps[k].hyp]);
        }
        e.replacement = join(repl);
        edits.push_back(std::move(e));
    }
    return edits;
}

}  // namespace mlconvgec
