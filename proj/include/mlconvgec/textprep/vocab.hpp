#pragma once

#include <algorithm>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "mlconvgec/common/text.hpp"

namespace mlconvgec {

/// Token ↔ index map with four reserved entries at the lowest indices.
class Vocabulary {
  public:
    static constexpr int pad_index = 0;
    static constexpr int bos_index = 1;
    static constexpr int eos_index = 2;
    static constexpr int unk_index = 3;
    static constexpr std::size_t reserved_count = 4;

    static constexpr const char* pad_token = "<pad>";
    static constexpr const char* bos_token = "<s>";
    static constexpr const char* eos_token = "</s>";
    static constexpr const char* unk_token = "<unk>";

    Vocabulary() {
        for (const char* t : {pad_token, bos_token, eos_token, unk_token}) push(t);
    }

    /// Builds from a full token list whose first four entries are the
    /// reserved tokens (the on-disk order).
    static Vocabulary from_tokens(const std::vector<std::string>& tokens) {
        if (tokens.size() < reserved_count || tokens[0] != pad_token || tokens[1] != bos_token ||
            tokens[2] != eos_token || tokens[3] != unk_token) {
            fail(ErrorCategory::parse, "vocabulary must start with the reserved tokens <pad> <s> </s> <unk>");
        }
        Vocabulary v;
        for (std::size_t i = reserved_count; i < tokens.size(); ++i) {
            if (v.lookup_.count(tokens[i])) fail(ErrorCategory::parse, "duplicate vocabulary token '" + tokens[i] + "'");
            v.push(tokens[i]);
        }
        return v;
    }

    std::size_t size() const noexcept { return tokens_.size(); }
    const std::vector<std::string>& tokens() const noexcept { return tokens_; }

    int index(const std::string& token) const {
        auto it = lookup_.find(token);
        return it == lookup_.end() ? unk_index : it->second;
    }

    bool contains(const std::string& token) const { return lookup_.count(token) > 0; }

    const std::string& token(int index) const {
        if (index < 0 || static_cast<std::size_t>(index) >= tokens_.size()) {
            fail(ErrorCategory::dimension, "vocabulary index " + std::to_string(index) + " out of range");
        }
        return tokens_[static_cast<std::size_t>(index)];
    }

    std::vector<int> encode(const Tokens& tokens) const {
        std::vector<int> out;
        out.reserve(tokens.size());
        for (const auto& t : tokens) out.push_back(index(t));
        return out;
    }

    /// Maps indices back to tokens, dropping reserved markers.
    Tokens decode(std::span<const int> ids) const {
        Tokens out;
        for (int id : ids) {
            if (id == pad_index || id == bos_index || id == eos_index) continue;
            out.push_back(token(id));
        }
        return out;
    }

    std::string serialize() const {
        std::string out;
        for (const auto& t : tokens_) out += t + "\n";
        return out;
    }

    static Vocabulary load(const std::filesystem::path& path) {
        std::vector<std::string> tokens;
        for (auto& line : read_lines(path)) {
            if (!line.empty()) tokens.push_back(line);
        }
        return from_tokens(tokens);
    }

    bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

  private:
    void push(const std::string& t) {
        lookup_.emplace(t, static_cast<int>(tokens_.size()));
        tokens_.push_back(t);
    }

    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> lookup_;
};

/// Reserved entries, then tokens by descending frequency (ties broken
/// lexicographically) until the cap is reached.
inline Vocabulary build_vocab(const std::vector<Tokens>& corpus, std::size_t cap) {
    if (cap < Vocabulary::reserved_count) {
        fail(ErrorCategory::config, "vocabulary cap " + std::to_string(cap) + " is smaller than the " +
                                        std::to_string(Vocabulary::reserved_count) + " reserved entries");
    }
    std::map<std::string, std::size_t> freq;
    for (const auto& sent : corpus)
        for (const auto& t : sent) ++freq[t];
    std::vector<std::pair<std::string, std::size_t>> ranked(freq.begin(), freq.end());
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    std::vector<std::string> tokens{Vocabulary::pad_token, Vocabulary::bos_token, Vocabulary::eos_token,
                                    Vocabulary::unk_token};
    for (const auto& [tok, count] : ranked) {
        if (tokens.size() >= cap) break;
        if (tok == Vocabulary::pad_token || tok == Vocabulary::bos_token || tok == Vocabulary::eos_token ||
            tok == Vocabulary::unk_token) {
            continue;
        }
        tokens.push_back(tok);
    }
    return Vocabulary::from_tokens(tokens);
}

}  // namespace mlconvgec
