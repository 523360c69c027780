#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "mlconvgec/common/error.hpp"
#include "mlconvgec/common/text.hpp"
#include "mlconvgec/lm/ngram.hpp"
#include "mlconvgec/model/params.hpp"
#include "mlconvgec/pretrain/embeddings.hpp"
#include "mlconvgec/rescorer/mert.hpp"
#include "mlconvgec/trainer/optim.hpp"

namespace mlconvgec {

namespace detail {

struct ConfigKey {
    const char* name;
    const char* fallback;
};

// Every recognized key with its default. Empty means unset.
inline const std::vector<ConfigKey>& config_keys() {
    static const std::vector<ConfigKey> keys{
        {"paths.train_source", ""},
        {"paths.train_target", ""},
        {"paths.dev_m2", ""},  // optional external dev set; replaces the split
        {"paths.monolingual", ""},  // LM and embedding corpus; defaults to training targets
        {"paths.work_dir", "work"},
        {"preprocess.seed", "1"},
        {"preprocess.dev_size", "5400"},
        {"preprocess.bpe_merges", "30000"},
        {"preprocess.vocab_size", "30000"},
        {"model.embed_dim", "500"},
        {"model.hidden_dim", "1024"},
        {"model.layers", "7"},
        {"model.max_positions", "1024"},
        {"model.dropout", "0.2"},
        {"train.seeds", "1"},
        {"train.lr", "0.25"},
        {"train.anneal_factor", "0.1"},
        {"train.momentum", "0.99"},
        {"train.batch_size", "32"},
        {"train.clip", "0.1"},
        {"train.patience", "3"},
        {"train.max_epochs", "100"},
        {"train.threads", "1"},
        {"train.anneal_trigger", "f05"},
        {"train.init", "pretrained"},
        {"train.parallel_seeds", "false"},
        {"train.dev_beam", "1"},
        {"pretrain.mode", "subword"},
        {"pretrain.window", "5"},
        {"pretrain.negatives", "5"},
        {"pretrain.epochs", "1"},
        {"pretrain.seed", "1"},
        {"pretrain.lr", "0.025"},
        {"pretrain.buckets", "1048576"},
        {"lm.order", "5"},
        {"lm.vocab_cap", "0"},
        {"decode.beam", "12"},
        {"decode.max_len", "0"},
        {"decode.ensemble", ""},  // comma list of checkpoints; empty means every trained seed
        {"rescore.features", "eo,lm"},
        {"rescore.restarts", "8"},
        {"rescore.directions", "0"},
        {"rescore.seed", "1"},
    };
    return keys;
}

}  // namespace detail

/// Line-oriented "key = value" file with [section] headers; '#' starts a
/// comment. Relative paths resolve against the config file's directory.
class ExperimentConfig {
  public:
    ExperimentConfig() {
        for (const auto& k : detail::config_keys()) values_[k.name] = k.fallback;
    }

    static ExperimentConfig parse(const std::string& text, const std::string& file = "<config>",
                                  const std::filesystem::path& base_dir = {}) {
        ExperimentConfig c;
        c.base_dir_ = base_dir;
        std::string section;
        std::size_t lineno = 0;
        for (const auto& raw : split_exact(text, "\n")) {
            ++lineno;
            std::string_view line = raw;
            if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
            line = trim(line);
            if (line.empty()) continue;
            const auto where = file + ":" + std::to_string(lineno) + ": ";
            if (line.front() == '[') {
                if (line.back() != ']') fail(ErrorCategory::parse, where + "unterminated section header");
                section = std::string(trim(line.substr(1, line.size() - 2)));
                continue;
            }
            const auto eq = line.find('=');
            if (eq == std::string_view::npos) fail(ErrorCategory::parse, where + "expected key = value");
            const auto key = std::string(trim(line.substr(0, eq)));
            if (section.empty()) fail(ErrorCategory::parse, where + "key '" + key + "' outside a section");
            c.set(section + "." + key, std::string(trim(line.substr(eq + 1))), where);
        }
        return c;
    }

    static ExperimentConfig load(const std::filesystem::path& p) {
        return parse(read_file(p), p.string(), std::filesystem::absolute(p).parent_path());
    }

    void set(const std::string& key, const std::string& value, const std::string& where = "") {
        auto it = values_.find(key);
        if (it == values_.end()) fail(ErrorCategory::config, where + "unknown configuration key '" + key + "'");
        it->second = value;
    }

    const std::string& get(const std::string& key) const {
        auto it = values_.find(key);
        if (it == values_.end()) fail(ErrorCategory::config, "unknown configuration key '" + key + "'");
        return it->second;
    }

    bool has(const std::string& key) const { return !get(key).empty(); }

    std::size_t get_size(const std::string& key) const {
        const auto v = parse_int(get(key), key);
        if (v < 0) fail(ErrorCategory::config, key + " must not be negative");
        return static_cast<std::size_t>(v);
    }

    double get_double(const std::string& key) const { return parse_double(get(key), key); }

    bool get_bool(const std::string& key) const {
        const auto& v = get(key);
        if (v == "true" || v == "1" || v == "yes") return true;
        if (v == "false" || v == "0" || v == "no") return false;
        fail(ErrorCategory::config, key + " must be true or false, got '" + v + "'");
    }

    std::vector<std::string> get_list(const std::string& key) const {
        std::vector<std::string> out;
        for (const auto& part : split_exact(get(key), ",")) {
            auto t = std::string(trim(part));
            if (!t.empty()) out.push_back(t);
        }
        return out;
    }

    std::filesystem::path path(const std::string& key) const {
        std::filesystem::path p = get(key);
        if (p.empty()) fail(ErrorCategory::config, key + " is not set");
        return p.is_relative() && !base_dir_.empty() ? base_dir_ / p : p;
    }

    std::filesystem::path work_dir() const { return path("paths.work_dir"); }

    const std::filesystem::path& base_dir() const noexcept { return base_dir_; }
    void set_base_dir(std::filesystem::path p) { base_dir_ = std::move(p); }

    /// Canonical text of every value, used for manifest hashing.
    std::string canonical() const {
        std::string out;
        for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
        return out;
    }

    std::vector<std::uint64_t> train_seeds() const {
        std::vector<std::uint64_t> s;
        for (const auto& t : get_list("train.seeds")) {
            const auto v = parse_int(t, "train.seeds");
            if (v < 0) fail(ErrorCategory::config, "train.seeds must be non-negative");
            s.push_back(static_cast<std::uint64_t>(v));
        }
        if (s.empty()) fail(ErrorCategory::config, "train.seeds is empty");
        return s;
    }

    ModelConfig model_config(std::size_t src_vocab, std::size_t tgt_vocab) const {
        ModelConfig m;
        m.embed_dim = get_size("model.embed_dim");
        m.hidden_dim = get_size("model.hidden_dim");
        m.layers = get_size("model.layers");
        m.max_positions = get_size("model.max_positions");
        m.dropout = get_double("model.dropout");
        m.src_vocab = src_vocab;
        m.tgt_vocab = tgt_vocab;
        m.validate();
        return m;
    }

    TrainConfig train_config(std::uint64_t seed) const {
        TrainConfig t;
        t.lr = get_double("train.lr");
        t.anneal_factor = get_double("train.anneal_factor");
        t.momentum = get_double("train.momentum");
        t.batch_size = get_size("train.batch_size");
        t.clip = get_double("train.clip");
        t.patience = get_size("train.patience");
        t.max_epochs = get_size("train.max_epochs");
        t.threads = get_size("train.threads");
        const auto& trig = get("train.anneal_trigger");
        if (trig == "f05") {
            t.anneal_trigger = AnnealTrigger::f05;
        } else if (trig == "f05_or_nll") {
            t.anneal_trigger = AnnealTrigger::f05_or_nll;
        } else {
            fail(ErrorCategory::config, "train.anneal_trigger must be f05 or f05_or_nll");
        }
        t.seed = seed;
        t.validate();
        return t;
    }

    EmbeddingConfig embedding_config() const {
        EmbeddingConfig e;
        e.dim = get_size("model.embed_dim");
        e.window = get_size("pretrain.window");
        e.negatives = get_size("pretrain.negatives");
        e.epochs = get_size("pretrain.epochs");
        e.mode = parse_embedding_mode(get("pretrain.mode"));
        e.seed = get_size("pretrain.seed");
        e.lr = get_double("pretrain.lr");
        e.buckets = static_cast<std::uint32_t>(get_size("pretrain.buckets"));
        e.validate();
        return e;
    }

    LmOptions lm_options() const { return {get_size("lm.order"), get_size("lm.vocab_cap"), std::nullopt}; }

    FeatureToggles feature_toggles() const {
        FeatureToggles t{false, false};
        for (const auto& f : get_list("rescore.features")) {
            if (f == "eo") {
                t.edit_ops = true;
            } else if (f == "lm") {
                t.lm = true;
            } else if (f != "none") {
                fail(ErrorCategory::config, "rescore.features: unknown feature group '" + f + "' (eo, lm, none)");
            }
        }
        return t;
    }

    MertOptions mert_options() const {
        MertOptions m;
        m.restarts = get_size("rescore.restarts");
        m.random_directions = get_size("rescore.directions");
        m.seed = get_size("rescore.seed");
        return m;
    }

  private:
    std::map<std::string, std::string> values_;
    std::filesystem::path base_dir_;
};

}  // namespace mlconvgec
