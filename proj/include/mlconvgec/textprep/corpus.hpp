#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "mlconvgec/common/text.hpp"

namespace mlconvgec {

struct SentencePair {
    Tokens source;
    Tokens target;

    bool operator==(const SentencePair&) const = default;
};

struct ParallelCorpus {
    std::vector<SentencePair> pairs;

    std::size_t size() const noexcept { return pairs.size(); }
    bool empty() const noexcept { return pairs.empty(); }
};

struct IngestReport {
    std::size_t read = 0;
    std::size_t kept = 0;
};

/// Whitespace-tokenizes line-aligned text and drops pairs whose target is
/// unchanged from the source.
inline ParallelCorpus make_parallel(const std::vector<std::string>& source_lines,
                                    const std::vector<std::string>& target_lines, IngestReport* report = nullptr) {
    if (source_lines.size() != target_lines.size()) {
        fail(ErrorCategory::alignment, "parallel corpus is not line-aligned: " + std::to_string(source_lines.size()) +
                                           " source lines vs " + std::to_string(target_lines.size()) +
                                           " target lines");
    }
    ParallelCorpus corpus;
    for (std::size_t i = 0; i < source_lines.size(); ++i) {
        SentencePair p{split_ws(source_lines[i]), split_ws(target_lines[i])};
        if (p.source == p.target) continue;
        corpus.pairs.push_back(std::move(p));
    }
    if (report) *report = {source_lines.size(), corpus.size()};
    return corpus;
}

inline ParallelCorpus load_parallel(const std::filesystem::path& source, const std::filesystem::path& target,
                                    IngestReport* report = nullptr) {
    const auto src = read_lines(source);
    const auto tgt = read_lines(target);
    if (src.size() != tgt.size()) {
        fail(ErrorCategory::alignment, source.string() + " has " + std::to_string(src.size()) + " lines but " +
                                           target.string() + " has " + std::to_string(tgt.size()));
    }
    return make_parallel(src, tgt, report);
}

inline std::vector<Tokens> read_tokenized(const std::filesystem::path& path) {
    std::vector<Tokens> out;
    for (const auto& line : read_lines(path)) out.push_back(split_ws(line));
    return out;
}

}  // namespace mlconvgec
