#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "mlconvgec/common/error.hpp"
#include "mlconvgec/common/text.hpp"

namespace mlconvgec {

struct LmOptions {
    std::size_t order = 5;
    std::size_t vocab_cap = 0;  // 0 keeps every word; otherwise the most frequent ones, the rest become <unk>
    /// D1, D2, D3+ used at every order instead of the count-of-counts estimates.
    std::optional<std::array<double, 3>> fixed_discounts;
};

struct LmFeature {
    double logprob = 0.0;  // natural log
    std::size_t words = 0;
};

namespace detail {

struct NgramKeyHash {
    std::size_t operator()(const std::vector<int>& k) const noexcept {
        std::uint64_t h = 1469598103934665603ull;
        for (int v : k) {
            h ^= static_cast<std::uint64_t>(static_cast<std::uint32_t>(v));
            h *= 1099511628211ull;
        }
        return static_cast<std::size_t>(h);
    }
};

template <class V>
using NgramMap = std::unordered_map<std::vector<int>, V, NgramKeyHash>;

}  // namespace detail

/// Backoff n-gram model: per order, log10 probability and log10 backoff of
/// every listed n-gram. Lookups follow the usual backoff recursion.
class NGramModel {
  public:
    static constexpr const char* bos = "<s>";
    static constexpr const char* eos = "</s>";
    static constexpr const char* unk = "<unk>";
    static constexpr double no_prob = -99.0;  // log10 "probability" of context-only entries

    struct Entry {
        double log10_prob = 0.0;
        double log10_backoff = 0.0;
    };

    NGramModel() = default;

    std::size_t order() const noexcept { return tables_.size(); }

    /// Words the model can predict: the training words, </s> and <unk>.
    std::size_t vocabulary_size() const noexcept { return words_.size() - 1; }

    /// Every predictable word, <unk> and </s> included.
    std::vector<std::string> vocabulary() const {
        std::vector<std::string> v;
        for (std::size_t i = 0; i < words_.size(); ++i)
            if (static_cast<int>(i) != bos_id_) v.push_back(words_[i]);
        return v;
    }

    int id(std::string_view w) const {
        auto it = ids_.find(std::string(w));
        return it == ids_.end() ? unk_id_ : it->second;
    }

    /// log10 p(word | history); only the last order-1 history words matter.
    /// Unknown words are scored as <unk>; "<s>" may appear in the history.
    double log10_prob(const Tokens& history, std::string_view word) const {
        std::vector<int> h;
        for (const auto& w : history) h.push_back(id(w));
        return log10_prob_ids(h, id(word));
    }

    double prob(const Tokens& history, std::string_view word) const { return std::pow(10.0, log10_prob(history, word)); }

    double log10_prob_ids(const std::vector<int>& history, int word) const {
        if (word == bos_id_) fail(ErrorCategory::contract, "the sentence-start token cannot be predicted");
        const std::size_t n = order();
        const std::size_t hl = std::min(history.size(), n - 1);
        std::vector<int> key(history.end() - static_cast<std::ptrdiff_t>(hl), history.end());
        double backoff = 0.0;
        for (;;) {
            key.push_back(word);
            const auto& table = tables_[key.size() - 1];
            if (auto it = table.find(key); it != table.end()) return backoff + it->second.log10_prob;
            key.pop_back();
            if (key.empty()) fail(ErrorCategory::contract, "n-gram model has no unigram for word id " + std::to_string(word));
            const auto& ctx_table = tables_[key.size() - 1];
            if (auto it = ctx_table.find(key); it != ctx_table.end()) backoff += it->second.log10_backoff;
            key.erase(key.begin());
        }
    }

    /// Sum of natural-log probabilities of the words given the BOS-padded
    /// history, end of sentence excluded, and the word count.
    LmFeature feature(const Tokens& words) const {
        LmFeature f;
        std::vector<int> h(order() - 1, bos_id_);
        for (const auto& w : words) {
            const int wid = id(w);
            f.logprob += log10_prob_ids(h, wid) * std::numbers::ln10;
            h.push_back(wid);
            if (h.size() > order() - 1) h.erase(h.begin());
        }
        f.words = words.size();
        return f;
    }

    /// Natural-log probability of the sentence including </s>.
    double sentence_logprob(const Tokens& words) const {
        double lp = feature(words).logprob;
        std::vector<int> h(order() - 1, bos_id_);
        for (const auto& w : words) h.push_back(id(w));
        return lp + log10_prob_ids(h, eos_id_) * std::numbers::ln10;
    }

    /// Textual interchange format (log10 values).
    std::string to_arpa() const {
        std::ostringstream os;
        os << "\\data\\\n";
        for (std::size_t k = 1; k <= order(); ++k) os << "ngram " << k << "=" << tables_[k - 1].size() << "\n";
        for (std::size_t k = 1; k <= order(); ++k) {
            os << "\n\\" << k << "-grams:\n";
            std::vector<std::pair<std::string, const Entry*>> rows;
            for (const auto& [key, e] : tables_[k - 1]) {
                std::string s;
                for (std::size_t i = 0; i < key.size(); ++i) s += (i ? " " : "") + words_[static_cast<std::size_t>(key[i])];
                rows.emplace_back(std::move(s), &e);
            }
            std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
            for (const auto& [s, e] : rows) {
                os << format_double(e->log10_prob) << "\t" << s;
                if (k < order()) os << "\t" << format_double(e->log10_backoff);
                os << "\n";
            }
        }
        os << "\n\\end\\\n";
        return os.str();
    }

    static NGramModel from_arpa(const std::string& text, const std::string& file = "<arpa>") {
        NGramModel m;
        std::vector<std::size_t> declared;
        std::size_t section = 0, lineno = 0;
        bool in_data = false, ended = false;
        auto where = [&] { return file + ":" + std::to_string(lineno) + ": "; };
        for (const auto& raw : split_exact(text, "\n")) {
            ++lineno;
            const auto line = trim(raw);
            if (line.empty() || ended) continue;
            if (line == "\\data\\") {
                in_data = true;
                continue;
            }
            if (line == "\\end\\") {
                ended = true;
                continue;
            }
            if (line.front() == '\\') {
                const auto dash = line.find("-grams:");
                if (dash == std::string_view::npos) fail(ErrorCategory::parse, where() + "unknown section " + std::string(line));
                section = static_cast<std::size_t>(parse_int(line.substr(1, dash - 1), "n-gram order"));
                if (section < 1 || section > declared.size()) fail(ErrorCategory::parse, where() + "undeclared order");
                in_data = false;
                continue;
            }
            if (in_data) {
                if (line.rfind("ngram ", 0) != 0) fail(ErrorCategory::parse, where() + "expected 'ngram k=count'");
                const auto eq = line.find('=');
                if (eq == std::string_view::npos) fail(ErrorCategory::parse, where() + "expected 'ngram k=count'");
                const auto k = static_cast<std::size_t>(parse_int(line.substr(6, eq - 6), "n-gram order"));
                if (k != declared.size() + 1) fail(ErrorCategory::parse, where() + "n-gram orders must be listed in sequence");
                declared.push_back(static_cast<std::size_t>(parse_int(line.substr(eq + 1), "n-gram count")));
                continue;
            }
            if (section == 0) fail(ErrorCategory::parse, where() + "entry outside an n-gram section");
            auto f = split_ws(line);
            if (f.size() != section + 1 && f.size() != section + 2) {
                fail(ErrorCategory::parse, where() + "expected logprob, " + std::to_string(section) + " words and an optional backoff");
            }
            if (m.tables_.size() < declared.size()) m.tables_.resize(declared.size());
            Entry e;
            e.log10_prob = parse_double(f[0], "log probability");
            if (f.size() == section + 2) e.log10_backoff = parse_double(f.back(), "backoff");
            std::vector<int> key;
            for (std::size_t i = 1; i <= section; ++i) key.push_back(m.intern(f[i]));
            m.tables_[section - 1][key] = e;
        }
        if (declared.empty()) fail(ErrorCategory::parse, file + ": missing \\data\\ header");
        if (!ended) fail(ErrorCategory::parse, file + ": missing \\end\\ marker");
        m.tables_.resize(declared.size());
        for (std::size_t k = 0; k < declared.size(); ++k) {
            if (m.tables_[k].size() != declared[k]) {
                fail(ErrorCategory::parse, file + ": order " + std::to_string(k + 1) + " declares " +
                                               std::to_string(declared[k]) + " entries but lists " +
                                               std::to_string(m.tables_[k].size()));
            }
        }
        for (const char* special : {bos, eos, unk}) {
            if (!m.ids_.count(special) || !m.tables_[0].count({m.ids_.at(special)})) {
                fail(ErrorCategory::parse, file + ": unigram table lacks " + std::string(special));
            }
        }
        m.bos_id_ = m.ids_.at(bos);
        m.eos_id_ = m.ids_.at(eos);
        m.unk_id_ = m.ids_.at(unk);
        return m;
    }

    void save(const std::filesystem::path& path) const { write_file_atomic(path, to_arpa()); }
    static NGramModel load(const std::filesystem::path& path) { return from_arpa(read_file(path), path.string()); }

    friend NGramModel train_lm(const std::vector<Tokens>& corpus, const LmOptions& opt);

  private:
    int intern(const std::string& w) {
        auto [it, added] = ids_.emplace(w, static_cast<int>(words_.size()));
        if (added) words_.push_back(w);
        return it->second;
    }

    std::vector<std::string> words_;
    std::unordered_map<std::string, int> ids_;
    std::vector<detail::NgramMap<Entry>> tables_;
    int bos_id_ = -1, eos_id_ = -1, unk_id_ = -1;
};

namespace detail {

/// Modified Kneser-Ney discounts D1, D2, D3+ from count-of-counts n1..n4.
/// When a count-of-counts is zero or an estimate leaves (0, i], the order
/// falls back to (0.5, 1.0, 1.5).
inline std::array<double, 3> kn_discounts(const std::array<std::size_t, 4>& n) {
    const std::array<double, 3> fallback{0.5, 1.0, 1.5};
    for (auto v : n)
        if (v == 0) return fallback;
    const double n1 = static_cast<double>(n[0]), n2 = static_cast<double>(n[1]), n3 = static_cast<double>(n[2]),
                 n4 = static_cast<double>(n[3]);
    const double y = n1 / (n1 + 2.0 * n2);
    const std::array<double, 3> d{1.0 - 2.0 * y * n2 / n1, 2.0 - 3.0 * y * n3 / n2, 3.0 - 4.0 * y * n4 / n3};
    for (std::size_t i = 0; i < 3; ++i)
        if (!(d[i] > 0.0 && d[i] <= static_cast<double>(i + 1))) return fallback;
    return d;
}

inline double discount_for(const std::array<double, 3>& d, std::size_t c) { return c == 0 ? 0.0 : d[std::min<std::size_t>(c, 3) - 1]; }

}  // namespace detail

/// Interpolated modified Kneser-Ney. Sentences are padded with order-1 "<s>"
/// and one "</s>". The top order uses raw counts, lower orders continuation
/// counts, and the unigram level interpolates with the uniform distribution
/// over the vocabulary (training words, </s>, <unk>).
inline NGramModel train_lm(const std::vector<Tokens>& corpus, const LmOptions& opt = {}) {
    const std::size_t N = opt.order;
    if (N < 1) fail(ErrorCategory::config, "n-gram order must be at least 1");
    if (opt.fixed_discounts) {
        for (std::size_t i = 0; i < 3; ++i) {
            const double d = (*opt.fixed_discounts)[i];
            if (!(d > 0.0 && d <= static_cast<double>(i + 1))) fail(ErrorCategory::config, "discount D" + std::to_string(i + 1) + " must be in (0, " + std::to_string(i + 1) + "]");
        }
    }
    std::size_t tokens = 0;
    std::map<std::string, std::size_t> freq;
    for (const auto& s : corpus) {
        tokens += s.size();
        for (const auto& w : s) {
            if (w == NGramModel::bos || w == NGramModel::eos) {
                fail(ErrorCategory::ingestion, "LM corpus contains the reserved token " + w);
            }
            ++freq[w];
        }
    }
    if (tokens < N) {
        fail(ErrorCategory::ingestion, "LM corpus has " + std::to_string(tokens) + " tokens, fewer than the order " +
                                           std::to_string(N));
    }

    NGramModel m;
    m.bos_id_ = m.intern(NGramModel::bos);
    m.eos_id_ = m.intern(NGramModel::eos);
    m.unk_id_ = m.intern(NGramModel::unk);
    {
        std::vector<std::pair<std::string, std::size_t>> ranked(freq.begin(), freq.end());
        std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
        if (opt.vocab_cap && ranked.size() > opt.vocab_cap) ranked.resize(opt.vocab_cap);
        std::sort(ranked.begin(), ranked.end());
        for (const auto& [w, c] : ranked) m.intern(w);
    }
    const double vocab = static_cast<double>(m.vocabulary_size());

    // Raw counts of every order, over windows whose last token is not <s>.
    std::vector<detail::NgramMap<std::size_t>> raw(N);
    for (const auto& s : corpus) {
        std::vector<int> padded(N - 1, m.bos_id_);
        for (const auto& w : s) padded.push_back(m.id(w));
        padded.push_back(m.eos_id_);
        for (std::size_t j = N - 1; j < padded.size(); ++j)
            for (std::size_t k = 1; k <= N; ++k) {
                ++raw[k - 1][std::vector<int>(padded.begin() + static_cast<std::ptrdiff_t>(j + 1 - k),
                                              padded.begin() + static_cast<std::ptrdiff_t>(j + 1))];
            }
    }
    // Counts used for smoothing: raw at the top order, distinct left extensions below.
    std::vector<detail::NgramMap<std::size_t>> cnt(N);
    cnt[N - 1] = raw[N - 1];
    for (std::size_t k = 1; k < N; ++k)
        for (const auto& [g, c] : raw[k]) ++cnt[k - 1][std::vector<int>(g.begin() + 1, g.end())];

    std::vector<std::array<double, 3>> disc(N);
    for (std::size_t k = 0; k < N; ++k) {
        std::array<std::size_t, 4> coc{};
        for (const auto& [g, c] : cnt[k])
            if (c <= 4) ++coc[c - 1];
        disc[k] = opt.fixed_discounts ? *opt.fixed_discounts : detail::kn_discounts(coc);
    }

    // Per-context totals and the mass freed by discounting.
    struct Ctx {
        double total = 0.0, freed = 0.0;
    };
    std::vector<detail::NgramMap<Ctx>> ctx(N);
    for (std::size_t k = 0; k < N; ++k)
        for (const auto& [g, c] : cnt[k]) {
            auto& x = ctx[k][std::vector<int>(g.begin(), g.end() - 1)];
            x.total += static_cast<double>(c);
            x.freed += detail::discount_for(disc[k], c);
        }

    // Interpolated probability at order k+1 (k = index) for a listed n-gram.
    std::vector<detail::NgramMap<double>> prob(N);
    auto lower = [&](std::size_t k, const std::vector<int>& g) -> double {
        if (k == 0) return 1.0 / vocab;
        return prob[k - 1].at(std::vector<int>(g.begin() + 1, g.end()));
    };
    for (std::size_t k = 0; k < N; ++k)
        for (const auto& [g, c] : cnt[k]) {
            const auto& x = ctx[k].at(std::vector<int>(g.begin(), g.end() - 1));
            const double own = (static_cast<double>(c) - detail::discount_for(disc[k], c)) / x.total;
            prob[k][g] = own + x.freed / x.total * lower(k, g);
        }

    m.tables_.assign(N, {});
    for (std::size_t k = 0; k < N; ++k)
        for (const auto& [g, p] : prob[k]) m.tables_[k][g].log10_prob = std::log10(p);
    // Unigrams never seen as continuations (e.g. <unk>) get only the uniform share.
    const auto& uni = ctx[0].at({});
    for (std::size_t i = 0; i < m.words_.size(); ++i) {
        const int w = static_cast<int>(i);
        if (w == m.bos_id_) continue;
        if (!m.tables_[0].count({w})) m.tables_[0][{w}].log10_prob = std::log10(uni.freed / uni.total / vocab);
    }
    // Context-only runs of <s>.
    for (std::size_t k = 1; k < N; ++k) m.tables_[k - 1][std::vector<int>(k, m.bos_id_)].log10_prob = NGramModel::no_prob;
    // Backoff weight of g = share of the order-(|g|+1) distribution freed by discounting.
    for (std::size_t k = 0; k + 1 < N; ++k)
        for (auto& [g, e] : m.tables_[k]) {
            auto it = ctx[k + 1].find(g);
            e.log10_backoff = it == ctx[k + 1].end() ? 0.0 : std::log10(it->second.freed / it->second.total);
        }
    return m;
}

inline LmFeature lm_feature(const NGramModel& m, const Tokens& words) { return m.feature(words); }

/// exp(-(Σ sentence natural-log probs) / (words + sentences)).
inline double perplexity(const NGramModel& m, const std::vector<Tokens>& sentences) {
    double lp = 0.0;
    std::size_t n = 0;
    for (const auto& s : sentences) {
        lp += m.sentence_logprob(s);
        n += s.size() + 1;
    }
    return n == 0 ? 1.0 : std::exp(-lp / static_cast<double>(n));
}

}  // namespace mlconvgec
