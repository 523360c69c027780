#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "mlconvgec/common/error.hpp"
#include "mlconvgec/common/rng.hpp"
#include "mlconvgec/common/text.hpp"
#include "mlconvgec/model/params.hpp"
#include "mlconvgec/textprep/vocab.hpp"

namespace mlconvgec {

enum class EmbeddingMode { subword, plain, random };

inline EmbeddingMode parse_embedding_mode(std::string_view s) {
    if (s == "subword") return EmbeddingMode::subword;
    if (s == "plain") return EmbeddingMode::plain;
    if (s == "random") return EmbeddingMode::random;
    fail(ErrorCategory::config, "unknown embedding mode '" + std::string(s) + "' (subword, plain, random)");
}

inline const char* to_string(EmbeddingMode m) {
    switch (m) {
        case EmbeddingMode::subword: return "subword";
        case EmbeddingMode::plain: return "plain";
        case EmbeddingMode::random: return "random";
    }
    return "?";
}

struct EmbeddingConfig {
    std::size_t dim = 500;
    std::size_t window = 5;
    std::size_t negatives = 5;
    std::size_t epochs = 1;
    EmbeddingMode mode = EmbeddingMode::subword;
    std::uint64_t seed = 1;
    double lr = 0.025;  // decays linearly to 0 over all epochs
    std::uint32_t buckets = 1u << 20;
    std::size_t min_n = 3, max_n = 6;

    void validate() const {
        if (dim < 1 || window < 1 || epochs < 1) fail(ErrorCategory::config, "embedding dim, window and epochs must be positive");
        if (!(lr > 0.0) || !std::isfinite(lr)) fail(ErrorCategory::config, "embedding learning rate must be positive");
        if (buckets < 1) fail(ErrorCategory::config, "n-gram bucket count must be positive");
        if (min_n < 1 || max_n < min_n) fail(ErrorCategory::config, "n-gram sizes need 1 <= min_n <= max_n");
    }
};

/// Character n-grams of "<word>" (sizes min_n..max_n, counted in code
/// points) and the marked word itself.
struct NgramBag {
    std::vector<std::string> ngrams;
    std::string whole;
};

inline NgramBag extract_ngrams(const std::string& word, std::size_t min_n = 3, std::size_t max_n = 6) {
    NgramBag bag;
    bag.whole = "<" + word + ">";
    std::vector<std::size_t> starts;  // byte offset of each code point
    for (std::size_t i = 0; i < bag.whole.size(); ++i)
        if ((static_cast<unsigned char>(bag.whole[i]) & 0xC0) != 0x80) starts.push_back(i);
    starts.push_back(bag.whole.size());
    const std::size_t cps = starts.size() - 1;
    for (std::size_t n = min_n; n <= max_n; ++n)
        for (std::size_t i = 0; i + n <= cps; ++i) bag.ngrams.push_back(bag.whole.substr(starts[i], starts[i + n] - starts[i]));
    return bag;
}

/// 32-bit FNV-1a.
inline std::uint32_t fnv1a(std::string_view s) {
    std::uint32_t h = 2166136261u;
    for (char c : s) {
        h ^= static_cast<std::uint32_t>(static_cast<unsigned char>(c));
        h *= 16777619u;
    }
    return h;
}

/// Token → vector table, one row per token.
struct EmbeddingTable {
    std::vector<std::string> tokens;
    std::size_t dim = 0;
    std::vector<double> values;  // row-major, tokens.size() × dim

    std::span<const double> row(std::size_t i) const { return {values.data() + i * dim, dim}; }

    std::optional<std::size_t> find(const std::string& t) const {
        for (std::size_t i = 0; i < tokens.size(); ++i)
            if (tokens[i] == t) return i;
        return std::nullopt;
    }

    bool operator==(const EmbeddingTable&) const = default;
};

inline std::string format_embeddings(const EmbeddingTable& t) {
    std::string out = std::to_string(t.tokens.size()) + " " + std::to_string(t.dim) + "\n";
    for (std::size_t i = 0; i < t.tokens.size(); ++i) {
        out += t.tokens[i];
        for (double v : t.row(i)) out += " " + format_double(v);
        out += "\n";
    }
    return out;
}

inline EmbeddingTable parse_embeddings(const std::string& text, const std::string& file = "<embeddings>") {
    const auto lines = split_exact(text, "\n");
    std::size_t lineno = 0;
    EmbeddingTable t;
    std::size_t count = 0;
    bool header = false;
    for (const auto& raw : lines) {
        ++lineno;
        auto f = split_ws(raw);
        if (f.empty()) continue;
        const auto where = file + ":" + std::to_string(lineno) + ": ";
        if (!header) {
            if (f.size() != 2) fail(ErrorCategory::parse, where + "expected 'count dim' header");
            const auto c = parse_int(f[0], "embedding count"), d = parse_int(f[1], "embedding dim");
            if (c < 0 || d < 1) fail(ErrorCategory::parse, where + "bad embedding header");
            count = static_cast<std::size_t>(c);
            t.dim = static_cast<std::size_t>(d);
            header = true;
            continue;
        }
        if (f.size() != t.dim + 1) {
            fail(ErrorCategory::parse, where + "expected a token and " + std::to_string(t.dim) + " values, got " +
                                           std::to_string(f.size()) + " fields");
        }
        t.tokens.push_back(f[0]);
        for (std::size_t i = 1; i < f.size(); ++i) t.values.push_back(parse_double(f[i], "embedding value"));
    }
    if (!header) fail(ErrorCategory::parse, file + ": empty embedding file");
    if (t.tokens.size() != count) {
        fail(ErrorCategory::parse, file + ": header declares " + std::to_string(count) + " tokens, file has " +
                                       std::to_string(t.tokens.size()));
    }
    return t;
}

inline void save_embeddings(const std::filesystem::path& p, const EmbeddingTable& t) { write_file_atomic(p, format_embeddings(t)); }
inline EmbeddingTable load_embeddings(const std::filesystem::path& p) { return parse_embeddings(read_file(p), p.string()); }

/// Corpus words with counts, by descending frequency, ties lexicographic.
inline std::vector<std::pair<std::string, std::size_t>> embedding_vocabulary(const std::vector<Tokens>& corpus) {
    std::map<std::string, std::size_t> freq;
    for (const auto& s : corpus)
        for (const auto& w : s) ++freq[w];
    std::vector<std::pair<std::string, std::size_t>> ranked(freq.begin(), freq.end());
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    return ranked;
}

/// Skip-gram with negative sampling. In subword mode the input
/// representation of a word is its own row plus one hashed row per
/// character n-gram (duplicates counted); in plain mode only its own row.
/// Bucket rows are allocated on first use, so memory follows the n-grams
/// seen rather than the bucket count.
class SkipGram {
  public:
    SkipGram(const std::vector<Tokens>& corpus, const EmbeddingConfig& cfg) : cfg_(cfg), rng_(cfg.seed) {
        cfg.validate();
        for (const auto& [w, c] : embedding_vocabulary(corpus)) {
            ids_.emplace(w, static_cast<int>(words_.size()));
            words_.push_back(w);
            counts_.push_back(c);
        }
        const std::size_t V = words_.size(), d = cfg.dim;
        input_.resize(V * d);
        for (auto& v : input_) v = rng_.uniform(-1.0 / static_cast<double>(d), 1.0 / static_cast<double>(d));
        output_.assign(V * d, 0.0);
        for (std::size_t w = 0; w < V; ++w) {
            std::vector<std::size_t> parts{w};
            if (cfg.mode == EmbeddingMode::subword)
                for (const auto& g : extract_ngrams(words_[w], cfg.min_n, cfg.max_n).ngrams) parts.push_back(bucket_row(g));
            components_.push_back(std::move(parts));
        }
        double acc = 0.0;
        for (auto c : counts_) {
            acc += std::pow(static_cast<double>(c), 0.75);
            noise_cdf_.push_back(acc);
        }
        for (const auto& s : corpus) {
            std::vector<int> ids;
            for (const auto& w : s) ids.push_back(ids_.at(w));
            corpus_.push_back(std::move(ids));
        }
    }

    std::size_t vocabulary_size() const noexcept { return words_.size(); }
    const std::vector<std::string>& words() const noexcept { return words_; }
    std::size_t dim() const noexcept { return cfg_.dim; }

    /// Input-row indices summed to represent word w: its own row first.
    const std::vector<std::size_t>& components(std::size_t w) const { return components_.at(w); }
    std::span<double> input_row(std::size_t r) { return {input_.data() + r * cfg_.dim, cfg_.dim}; }

    std::vector<double> word_vector(std::size_t w) const {
        std::vector<double> v(cfg_.dim, 0.0);
        for (auto r : components_.at(w))
            for (std::size_t k = 0; k < cfg_.dim; ++k) v[k] += input_[r * cfg_.dim + k];
        return v;
    }

    EmbeddingTable table() const {
        EmbeddingTable t{words_, cfg_.dim, {}};
        t.values.reserve(words_.size() * cfg_.dim);
        for (std::size_t w = 0; w < words_.size(); ++w) {
            const auto v = word_vector(w);
            t.values.insert(t.values.end(), v.begin(), v.end());
        }
        return t;
    }

    /// One pass over the corpus; returns the mean negative-sampling loss
    /// per (center, context) pair seen during the pass.
    double train_epoch(std::size_t epoch) {
        const std::size_t d = cfg_.dim;
        std::size_t total_tokens = 0;
        for (const auto& s : corpus_) total_tokens += s.size();
        const double schedule = static_cast<double>(total_tokens * cfg_.epochs);
        std::size_t processed = epoch * total_tokens;
        double loss = 0.0;
        std::size_t pairs = 0;
        std::vector<double> hidden(d), grad(d);
        for (const auto& s : corpus_) {
            for (std::size_t i = 0; i < s.size(); ++i, ++processed) {
                const double lr = cfg_.lr * (1.0 - static_cast<double>(processed) / schedule);
                const std::size_t b = 1 + rng_.index(cfg_.window);
                const auto& parts = components_[static_cast<std::size_t>(s[i])];
                for (std::size_t j = i >= b ? i - b : 0; j <= std::min(s.size() - 1, i + b); ++j) {
                    if (j == i) continue;
                    compose(parts, hidden);
                    std::fill(grad.begin(), grad.end(), 0.0);
                    loss += binary_update(s[j], true, hidden, grad, lr);
                    for (std::size_t n = 0; n < cfg_.negatives && words_.size() > 1; ++n) {
                        int neg;
                        do {
                            neg = sample_noise();
                        } while (neg == s[j]);
                        loss += binary_update(neg, false, hidden, grad, lr);
                    }
                    const double share = 1.0 / static_cast<double>(parts.size());
                    for (auto r : parts)
                        for (std::size_t k = 0; k < d; ++k) input_[r * d + k] += share * grad[k];
                    ++pairs;
                }
            }
        }
        return pairs ? loss / static_cast<double>(pairs) : 0.0;
    }

    /// Expected training loss: pairs at distance δ are weighted by the
    /// chance (window - δ + 1) / window that the sampled window reaches
    /// them, and the noise term is taken in expectation.
    double objective() const {
        const std::size_t d = cfg_.dim;
        std::vector<double> hidden(d);
        double total = 0.0, weight = 0.0;
        for (const auto& s : corpus_)
            for (std::size_t i = 0; i < s.size(); ++i) {
                compose(components_[static_cast<std::size_t>(s[i])], hidden);
                for (std::size_t j = i >= cfg_.window ? i - cfg_.window : 0; j <= std::min(s.size() - 1, i + cfg_.window); ++j) {
                    if (j == i) continue;
                    const std::size_t dist = j > i ? j - i : i - j;
                    const double reach = static_cast<double>(cfg_.window - dist + 1) / static_cast<double>(cfg_.window);
                    double pair = -log_sigmoid(score(s[j], hidden));
                    if (words_.size() > 1) {
                        const double z = noise_cdf_.back() - noise_weight(s[j]);
                        for (std::size_t w = 0; w < words_.size(); ++w) {
                            if (static_cast<int>(w) == s[j]) continue;
                            pair -= static_cast<double>(cfg_.negatives) * noise_weight(static_cast<int>(w)) / z *
                                    log_sigmoid(-score(static_cast<int>(w), hidden));
                        }
                    }
                    total += reach * pair;
                    weight += reach;
                }
            }
        return weight > 0 ? total / weight : 0.0;
    }

  private:
    std::size_t bucket_row(const std::string& gram) {
        const std::uint32_t b = fnv1a(gram) % cfg_.buckets;
        auto [it, added] = bucket_rows_.emplace(b, input_.size() / cfg_.dim);
        if (added) {
            const double a = 1.0 / static_cast<double>(cfg_.dim);
            for (std::size_t k = 0; k < cfg_.dim; ++k) input_.push_back(rng_.uniform(-a, a));
        }
        return it->second;
    }

    void compose(const std::vector<std::size_t>& parts, std::vector<double>& h) const {
        std::fill(h.begin(), h.end(), 0.0);
        for (auto r : parts)
            for (std::size_t k = 0; k < cfg_.dim; ++k) h[k] += input_[r * cfg_.dim + k];
    }

    double score(int w, const std::vector<double>& h) const {
        double s = 0.0;
        const double* o = output_.data() + static_cast<std::size_t>(w) * cfg_.dim;
        for (std::size_t k = 0; k < cfg_.dim; ++k) s += o[k] * h[k];
        return s;
    }

    static double log_sigmoid(double x) { return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x)); }

    double binary_update(int w, bool positive, const std::vector<double>& h, std::vector<double>& grad, double lr) {
        const double s = score(w, h);
        const double p = 1.0 / (1.0 + std::exp(-s));
        const double alpha = lr * ((positive ? 1.0 : 0.0) - p);
        double* o = output_.data() + static_cast<std::size_t>(w) * cfg_.dim;
        for (std::size_t k = 0; k < cfg_.dim; ++k) {
            grad[k] += alpha * o[k];
            o[k] += alpha * h[k];
        }
        return -log_sigmoid(positive ? s : -s);
    }

    double noise_weight(int w) const {
        const auto i = static_cast<std::size_t>(w);
        return noise_cdf_[i] - (i ? noise_cdf_[i - 1] : 0.0);
    }

    int sample_noise() {
        const double u = rng_.uniform() * noise_cdf_.back();
        auto it = std::upper_bound(noise_cdf_.begin(), noise_cdf_.end(), u);
        if (it == noise_cdf_.end()) --it;
        return static_cast<int>(it - noise_cdf_.begin());
    }

    EmbeddingConfig cfg_;
    Rng rng_;
    std::vector<std::string> words_;
    std::vector<std::size_t> counts_;
    std::unordered_map<std::string, int> ids_;
    std::vector<std::vector<int>> corpus_;
    std::vector<double> input_, output_;
    std::unordered_map<std::uint32_t, std::size_t> bucket_rows_;
    std::vector<std::vector<std::size_t>> components_;
    std::vector<double> noise_cdf_;
};

/// Called after each epoch with (epoch, mean training loss).
using EmbeddingEpochHook = std::function<void(std::size_t, double)>;

/// Embedding table for the corpus vocabulary (descending frequency,
/// ties lexicographic). Random mode draws uniform(-0.1, 0.1) per value.
inline EmbeddingTable train_embeddings(const std::vector<Tokens>& corpus, const EmbeddingConfig& cfg,
                                       const EmbeddingEpochHook& on_epoch = {}) {
    cfg.validate();
    std::size_t tokens = 0;
    for (const auto& s : corpus) tokens += s.size();
    if (cfg.mode == EmbeddingMode::random) {
        EmbeddingTable t{{}, cfg.dim, {}};
        for (const auto& [w, c] : embedding_vocabulary(corpus)) t.tokens.push_back(w);
        Rng rng(cfg.seed);
        t.values.resize(t.tokens.size() * cfg.dim);
        for (auto& v : t.values) v = rng.uniform(-0.1, 0.1);
        return t;
    }
    if (tokens == 0) fail(ErrorCategory::ingestion, "embedding corpus is empty");
    SkipGram sg(corpus, cfg);
    for (std::size_t e = 0; e < cfg.epochs; ++e) {
        const double loss = sg.train_epoch(e);
        if (on_epoch) on_epoch(e, loss);
    }
    return sg.table();
}

/// Copies table rows into the source and target embedding matrices for
/// every vocabulary token the table covers (padding excluded). Returns the
/// number of rows written.
inline std::size_t apply_pretrained(ModelParams& p, const Vocabulary& src, const Vocabulary& tgt, const EmbeddingTable& t) {
    const std::size_t d = p.config().embed_dim;
    if (t.dim != d) {
        fail(ErrorCategory::dimension, "embedding table has dim " + std::to_string(t.dim) + " but the model expects " +
                                           std::to_string(d));
    }
    std::unordered_map<std::string, std::size_t> rows;
    for (std::size_t i = 0; i < t.tokens.size(); ++i) rows.emplace(t.tokens[i], i);
    std::size_t written = 0;
    auto fill = [&](nc::Array& m, const Vocabulary& v) {
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (static_cast<int>(i) == Vocabulary::pad_index) continue;
            auto it = rows.find(v.tokens()[i]);
            if (it == rows.end()) continue;
            std::copy_n(t.row(it->second).begin(), d, m.row(i).begin());
            ++written;
        }
    };
    fill(p["src.embed"], src);
    fill(p["tgt.embed"], tgt);
    return written;
}

}  // namespace mlconvgec
