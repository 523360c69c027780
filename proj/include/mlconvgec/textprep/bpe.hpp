#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "mlconvgec/common/text.hpp"

namespace mlconvgec {

/// Byte pair encoding with the "@@" continuation convention: every subword
/// except the last of a word carries a trailing "@@".
///
/// Literal '@' characters are escaped to private-use code points before
/// segmentation, so a subword never contains '@' and the marker is
/// unambiguous for every input.
namespace bpe {

inline constexpr std::string_view marker = "@@";
inline constexpr std::string_view version_header = "#version: mlconvgec-bpe 1";

// U+E000 stands for '@'; U+E001 escapes a literal U+E000 or U+E001.
inline constexpr std::string_view esc_at = "\xEE\x80\x80";
inline constexpr std::string_view esc_prefix = "\xEE\x80\x81";

inline std::string escape(std::string_view word) {
    std::string out;
    for (const auto& ch : utf8_chars(word)) {
        if (ch == "@") {
            out += esc_at;
        } else if (ch == esc_at || ch == esc_prefix) {
            out += esc_prefix;
            out += ch;
        } else {
            out += ch;
        }
    }
    return out;
}

inline std::string unescape(std::string_view word) {
    std::string out;
    const auto chars = utf8_chars(word);
    for (std::size_t i = 0; i < chars.size(); ++i) {
        if (chars[i] == esc_prefix && i + 1 < chars.size()) {
            out += chars[++i];
        } else if (chars[i] == esc_at) {
            out += '@';
        } else {
            out += chars[i];
        }
    }
    return out;
}

}  // namespace bpe

using SymbolPair = std::pair<std::string, std::string>;

struct BpeModel {
    /// Merge rules in learning order.
    std::vector<SymbolPair> merges;

    std::string serialize() const {
        std::string out(bpe::version_header);
        out += "\n";
        for (const auto& [l, r] : merges) out += l + " " + r + "\n";
        return out;
    }

    static BpeModel parse(const std::vector<std::string>& lines) {
        BpeModel m;
        std::size_t lineno = 0;
        for (const auto& line : lines) {
            ++lineno;
            if (lineno == 1) {
                if (line != bpe::version_header) {
                    fail(ErrorCategory::parse, "merge file line 1: expected header '" +
                                                   std::string(bpe::version_header) + "'");
                }
                continue;
            }
            if (trim(line).empty()) continue;
            auto parts = split_ws(line);
            if (parts.size() != 2) {
                fail(ErrorCategory::parse, "merge file line " + std::to_string(lineno) + ": expected 'left right'");
            }
            m.merges.emplace_back(parts[0], parts[1]);
        }
        if (lineno == 0) fail(ErrorCategory::parse, "merge file is empty (missing version header)");
        return m;
    }

    static BpeModel load(const std::filesystem::path& path) { return parse(read_lines(path)); }
};

namespace detail {

class PairStats {
  public:
    void add(const SymbolPair& p, long long delta) {
        if (delta == 0) return;
        auto it = counts_.find(p);
        const long long old = it == counts_.end() ? 0 : it->second;
        if (old > 0) ranked_.erase({-old, p});
        const long long now = old + delta;
        if (now > 0) {
            counts_[p] = now;
            ranked_.insert({-now, p});
        } else if (it != counts_.end()) {
            counts_.erase(it);
        }
    }

    bool empty() const { return ranked_.empty(); }

    /// Most frequent pair; ties go to the lexicographically smallest pair.
    const SymbolPair& best() const { return ranked_.begin()->second; }

  private:
    std::map<SymbolPair, long long> counts_;
    std::set<std::pair<long long, SymbolPair>> ranked_;
};

inline void merge_in_place(std::vector<std::string>& symbols, const SymbolPair& p) {
    std::vector<std::string> out;
    out.reserve(symbols.size());
    for (std::size_t i = 0; i < symbols.size();) {
        if (i + 1 < symbols.size() && symbols[i] == p.first && symbols[i + 1] == p.second) {
            out.push_back(symbols[i] + symbols[i + 1]);
            i += 2;
        } else {
            out.push_back(symbols[i]);
            ++i;
        }
    }
    symbols = std::move(out);
}

}  // namespace detail

/// Greedy most-frequent-pair merging for up to num_merges steps. Stops early
/// once every word is a single symbol.
inline BpeModel learn_bpe(const std::vector<Tokens>& corpus, std::size_t num_merges) {
    std::map<std::string, long long> word_freq;
    for (const auto& sent : corpus)
        for (const auto& w : sent) ++word_freq[bpe::escape(w)];
    if (word_freq.empty()) fail(ErrorCategory::ingestion, "cannot learn BPE from an empty corpus");

    std::vector<std::vector<std::string>> words;
    std::vector<long long> freqs;
    for (const auto& [w, f] : word_freq) {
        words.push_back(utf8_chars(w));
        freqs.push_back(f);
    }

    detail::PairStats stats;
    std::map<SymbolPair, std::set<std::size_t>> where;
    auto account = [&](std::size_t wi, long long sign) {
        const auto& s = words[wi];
        for (std::size_t i = 0; i + 1 < s.size(); ++i) {
            SymbolPair p{s[i], s[i + 1]};
            stats.add(p, sign * freqs[wi]);
            if (sign > 0) where[p].insert(wi);
        }
    };
    for (std::size_t wi = 0; wi < words.size(); ++wi) account(wi, +1);

    BpeModel model;
    while (model.merges.size() < num_merges && !stats.empty()) {
        const SymbolPair best = stats.best();
        model.merges.push_back(best);
        const auto affected = std::move(where[best]);
        where.erase(best);
        for (std::size_t wi : affected) {
            account(wi, -1);
            detail::merge_in_place(words[wi], best);
            account(wi, +1);
        }
    }
    return model;
}

/// Segments words by replaying merges in learned order. Keeps a per-word
/// cache, so one instance should not be shared across threads.
class BpeSegmenter {
  public:
    explicit BpeSegmenter(BpeModel model) : model_(std::move(model)) {
        for (std::size_t r = 0; r < model_.merges.size(); ++r) ranks_.emplace(model_.merges[r], r);
    }

    const BpeModel& model() const noexcept { return model_; }

    const std::vector<std::string>& segment_word(const std::string& word) {
        auto it = cache_.find(word);
        if (it != cache_.end()) return it->second;
        auto symbols = utf8_chars(bpe::escape(word));
        // Apply the lowest-ranked present merge whose rank is past the last
        // one applied; this is exactly a replay of the merge list in order.
        std::size_t last = 0;
        bool any = false;
        while (symbols.size() > 1) {
            std::size_t best_rank = SIZE_MAX;
            for (std::size_t i = 0; i + 1 < symbols.size(); ++i) {
                auto r = ranks_.find({symbols[i], symbols[i + 1]});
                if (r != ranks_.end() && (!any || r->second > last) && r->second < best_rank) best_rank = r->second;
            }
            if (best_rank == SIZE_MAX) break;
            detail::merge_in_place(symbols, model_.merges[best_rank]);
            last = best_rank;
            any = true;
        }
        for (std::size_t i = 0; i + 1 < symbols.size(); ++i) symbols[i] += bpe::marker;
        return cache_.emplace(word, std::move(symbols)).first->second;
    }

    Tokens apply(const Tokens& sentence) {
        Tokens out;
        for (const auto& w : sentence) {
            const auto& pieces = segment_word(w);
            out.insert(out.end(), pieces.begin(), pieces.end());
        }
        return out;
    }

  private:
    struct PairHash {
        std::size_t operator()(const SymbolPair& p) const {
            return std::hash<std::string>{}(p.first) * 1000003u ^ std::hash<std::string>{}(p.second);
        }
    };

    BpeModel model_;
    std::unordered_map<SymbolPair, std::size_t, PairHash> ranks_;
    std::unordered_map<std::string, std::vector<std::string>> cache_;
};

inline Tokens apply_bpe(const BpeModel& model, const Tokens& sentence) {
    BpeSegmenter seg(model);
    return seg.apply(sentence);
}

/// Joins continuation subwords and undoes the '@' escaping.
inline Tokens desegment(const Tokens& subwords) {
    Tokens out;
    std::string current;
    bool open = false;
    for (const auto& piece : subwords) {
        std::string_view p = piece;
        const bool cont = p.size() >= bpe::marker.size() && p.substr(p.size() - bpe::marker.size()) == bpe::marker;
        if (cont) p.remove_suffix(bpe::marker.size());
        current += p;
        open = cont;
        if (!cont) {
            out.push_back(bpe::unescape(current));
            current.clear();
        }
    }
    // A dangling continuation (truncated decoder output) still yields a word.
    if (open || !current.empty()) out.push_back(bpe::unescape(current));
    return out;
}

}  // namespace mlconvgec
