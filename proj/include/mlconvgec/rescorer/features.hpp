#pragma once

#include <algorithm>
#include <filesystem>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "mlconvgec/decoder/nbest.hpp"
#include "mlconvgec/lm/ngram.hpp"
#include "mlconvgec/metrics/edits.hpp"

namespace mlconvgec {

namespace feature {
inline constexpr const char* model_score = "model_score";
inline constexpr const char* substitutions = "substitutions";
inline constexpr const char* deletions = "deletions";
inline constexpr const char* insertions = "insertions";
inline constexpr const char* lm_logprob = "lm_logprob";
inline constexpr const char* word_count = "word_count";
}  // namespace feature

struct FeatureHyp {
    std::size_t sentence = 0;
    Tokens hypothesis;  // word level
    std::map<std::string, double> features;
};

/// Hypotheses grouped by sentence, in beam order.
using FeatureNbest = std::vector<std::vector<FeatureHyp>>;

struct FeatureToggles {
    bool edit_ops = true;
    bool lm = true;
};

/// Feature names produced under the toggles, in canonical order.
inline std::vector<std::string> feature_names(const FeatureToggles& t) {
    std::vector<std::string> n{feature::model_score};
    if (t.edit_ops) n.insert(n.end(), {feature::substitutions, feature::deletions, feature::insertions});
    if (t.lm) n.insert(n.end(), {feature::lm_logprob, feature::word_count});
    return n;
}

inline EditCounts edit_features(const Tokens& source, const Tokens& hypothesis) { return count_edits(source, hypothesis); }

/// Adds features to a decoded n-best list. `sources` are word-level
/// sources; `lm` is required when the LM features are on.
inline FeatureNbest extract_features(const NbestList& nbest, const std::vector<Tokens>& sources, const FeatureToggles& t,
                                     const NGramModel* lm) {
    if (nbest.size() > sources.size()) {
        fail(ErrorCategory::alignment, "n-best list covers " + std::to_string(nbest.size()) + " sentences but only " +
                                           std::to_string(sources.size()) + " sources were given");
    }
    if (t.lm && !lm) fail(ErrorCategory::dependency, "LM features requested without a language model");
    FeatureNbest out(nbest.size());
    for (std::size_t s = 0; s < nbest.size(); ++s)
        for (const auto& e : nbest[s]) {
            FeatureHyp h{e.sentence, e.hypothesis, {{feature::model_score, e.model_score}}};
            if (t.edit_ops) {
                const auto c = edit_features(sources[s], e.hypothesis);
                h.features[feature::substitutions] = static_cast<double>(c.substitutions);
                h.features[feature::deletions] = static_cast<double>(c.deletions);
                h.features[feature::insertions] = static_cast<double>(c.insertions);
            }
            if (t.lm && lm) {
                const auto f = lm_feature(*lm, e.hypothesis);
                h.features[feature::lm_logprob] = f.logprob;
                h.features[feature::word_count] = static_cast<double>(f.words);
            }
            out[s].push_back(std::move(h));
        }
    return out;
}

inline std::string format_feature_nbest(const FeatureNbest& list, const std::vector<std::string>& names) {
    std::string out;
    for (const auto& group : list)
        for (const auto& h : group) {
            out += std::to_string(h.sentence) + " ||| " + join(h.hypothesis) + " |||";
            for (const auto& n : names) {
                auto it = h.features.find(n);
                if (it == h.features.end()) {
                    fail(ErrorCategory::contract, "sentence " + std::to_string(h.sentence) + " lacks feature " + n);
                }
                out += " " + n + "=" + format_double(it->second);
            }
            out += "\n";
        }
    return out;
}

inline FeatureNbest parse_feature_nbest(const std::string& text, const std::string& file = "<features>") {
    FeatureNbest list;
    std::size_t lineno = 0;
    for (const auto& raw : split_exact(text, "\n")) {
        ++lineno;
        if (trim(raw).empty()) continue;
        auto l = detail::split_nbest_line(raw, lineno, file);
        FeatureHyp h{l.sentence, std::move(l.hypothesis), {}};
        for (const auto& kv : split_ws(l.tail)) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos || eq == 0) {
                fail(ErrorCategory::parse, file + ":" + std::to_string(lineno) + ": expected name=value, got '" + kv + "'");
            }
            const std::string name = kv.substr(0, eq);
            if (!h.features.emplace(name, parse_double(std::string_view(kv).substr(eq + 1), name)).second) {
                fail(ErrorCategory::parse, file + ":" + std::to_string(lineno) + ": duplicate feature " + name);
            }
        }
        detail::place_entry(list, std::move(h), lineno, file);
    }
    return list;
}

inline FeatureNbest load_feature_nbest(const std::filesystem::path& p) { return parse_feature_nbest(read_file(p), p.string()); }

/// Named weights; the order is the order of the weights file.
struct Weights {
    std::vector<std::string> names;
    std::vector<double> values;

    double at(const std::string& n) const {
        for (std::size_t i = 0; i < names.size(); ++i)
            if (names[i] == n) return values[i];
        fail(ErrorCategory::contract, "no weight for feature " + n);
    }

    bool operator==(const Weights&) const = default;
};

/// model_score weight 1, every other weight 0.
inline Weights initial_weights(const std::vector<std::string>& names) {
    Weights w{names, std::vector<double>(names.size(), 0.0)};
    for (std::size_t i = 0; i < names.size(); ++i)
        if (names[i] == feature::model_score) w.values[i] = 1.0;
    return w;
}

inline std::string format_weights(const Weights& w) {
    std::string out;
    for (std::size_t i = 0; i < w.names.size(); ++i) out += w.names[i] + " " + format_double(w.values[i]) + "\n";
    return out;
}

inline Weights parse_weights(const std::string& text, const std::string& file = "<weights>") {
    Weights w;
    std::size_t lineno = 0;
    for (const auto& raw : split_exact(text, "\n")) {
        ++lineno;
        auto f = split_ws(raw);
        if (f.empty()) continue;
        if (f.size() != 2) fail(ErrorCategory::parse, file + ":" + std::to_string(lineno) + ": expected 'name weight'");
        if (std::find(w.names.begin(), w.names.end(), f[0]) != w.names.end()) {
            fail(ErrorCategory::parse, file + ":" + std::to_string(lineno) + ": duplicate weight " + f[0]);
        }
        w.names.push_back(f[0]);
        w.values.push_back(parse_double(f[1], "weight"));
    }
    if (w.names.empty()) fail(ErrorCategory::parse, file + ": no weights");
    return w;
}

/// Feature values of one hypothesis in weight order; a missing feature is
/// a contract error naming the sentence and the hypothesis rank.
inline std::vector<double> feature_vector(const FeatureHyp& h, std::size_t rank, const Weights& w) {
    std::vector<double> v;
    v.reserve(w.names.size());
    for (const auto& n : w.names) {
        auto it = h.features.find(n);
        if (it == h.features.end()) {
            fail(ErrorCategory::contract, "sentence " + std::to_string(h.sentence) + " hypothesis " + std::to_string(rank) +
                                              " lacks feature " + n);
        }
        v.push_back(it->second);
    }
    return v;
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

/// Reorders each list by weighted score, highest first; ties keep beam order.
inline FeatureNbest rescore(const FeatureNbest& list, const Weights& w) {
    FeatureNbest out(list.size());
    for (std::size_t s = 0; s < list.size(); ++s) {
        std::vector<std::pair<double, std::size_t>> scored;
        for (std::size_t r = 0; r < list[s].size(); ++r) scored.emplace_back(dot(w.values, feature_vector(list[s][r], r, w)), r);
        std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
        for (const auto& [score, r] : scored) out[s].push_back(list[s][r]);
    }
    return out;
}

}  // namespace mlconvgec
