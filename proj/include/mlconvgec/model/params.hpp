#pragma once

#include <cmath>
#include <string>
#include <unordered_map>
#include <vector>

#include "mlconvgec/common/rng.hpp"
#include "mlconvgec/numcore/array.hpp"

namespace mlconvgec {

struct ModelConfig {
    std::size_t embed_dim = 500;     // d
    std::size_t hidden_dim = 1024;   // h
    std::size_t layers = 7;          // L, per side
    std::size_t src_vocab = 0;
    std::size_t tgt_vocab = 0;
    std::size_t max_positions = 1024;
    double dropout = 0.2;

    static constexpr std::size_t filter_width = 3;

    void validate() const {
        if (layers < 1) fail(ErrorCategory::config, "model needs at least one layer per side");
        if (embed_dim < 1 || hidden_dim < 1) fail(ErrorCategory::config, "embedding and hidden dims must be positive");
        if (src_vocab < 1 || tgt_vocab < 1) fail(ErrorCategory::config, "vocabulary sizes must be positive");
        if (max_positions < 1) fail(ErrorCategory::config, "max_positions must be positive");
        if (!(dropout >= 0.0 && dropout < 1.0)) fail(ErrorCategory::config, "dropout must be in [0, 1)");
    }

    bool operator==(const ModelConfig&) const = default;
};

/// Indices of each named array inside ModelParams.
struct ParamLayout {
    struct EncoderLayer {
        std::size_t conv_w, conv_b;
    };
    struct DecoderLayer {
        std::size_t conv_w, conv_b;
        std::size_t query_w, query_b;      // W_z, b_z
        std::size_t context_w, context_b;  // x -> c
    };

    std::size_t src_embed, src_pos, tgt_embed, tgt_pos;
    std::size_t enc_in_w, enc_in_b;
    std::vector<EncoderLayer> enc;
    std::size_t enc_out_w, enc_out_b;  // W_e, b_e
    std::size_t dec_in_w, dec_in_b;
    std::vector<DecoderLayer> dec;
    std::size_t dec_out_w, dec_out_b;
    std::size_t proj_w, proj_b;  // W_o, b_o
};

/// Every trainable array of the encoder-decoder, in a fixed canonical order.
class ModelParams {
  public:
    ModelParams() = default;

    explicit ModelParams(const ModelConfig& cfg) : config_(cfg) {
        cfg.validate();
        const std::size_t d = cfg.embed_dim, h = cfg.hidden_dim;
        auto& L = layout_;
        L.src_embed = add("src.embed", {cfg.src_vocab, d});
        L.src_pos = add("src.pos", {cfg.max_positions, d});
        L.tgt_embed = add("tgt.embed", {cfg.tgt_vocab, d});
        L.tgt_pos = add("tgt.pos", {cfg.max_positions, d});
        L.enc_in_w = add("enc.in.weight", {h, d});
        L.enc_in_b = add("enc.in.bias", {h});
        for (std::size_t l = 0; l < cfg.layers; ++l) {
            const std::string p = "enc.conv" + std::to_string(l);
            L.enc.push_back({add(p + ".weight", {2 * h, 3, h}), add(p + ".bias", {2 * h})});
        }
        L.enc_out_w = add("enc.out.weight", {d, h});
        L.enc_out_b = add("enc.out.bias", {d});
        L.dec_in_w = add("dec.in.weight", {h, d});
        L.dec_in_b = add("dec.in.bias", {h});
        for (std::size_t l = 0; l < cfg.layers; ++l) {
            const std::string p = "dec.conv" + std::to_string(l);
            const std::string a = "dec.attn" + std::to_string(l);
            ParamLayout::DecoderLayer layer{};
            layer.conv_w = add(p + ".weight", {2 * h, 3, h});
            layer.conv_b = add(p + ".bias", {2 * h});
            layer.query_w = add(a + ".query.weight", {d, h});
            layer.query_b = add(a + ".query.bias", {d});
            layer.context_w = add(a + ".context.weight", {h, d});
            layer.context_b = add(a + ".context.bias", {h});
            L.dec.push_back(layer);
        }
        L.dec_out_w = add("dec.out.weight", {d, h});
        L.dec_out_b = add("dec.out.bias", {d});
        L.proj_w = add("proj.weight", {cfg.tgt_vocab, d});
        L.proj_b = add("proj.bias", {cfg.tgt_vocab});
    }

    const ModelConfig& config() const noexcept { return config_; }
    const ParamLayout& layout() const noexcept { return layout_; }

    std::size_t count() const noexcept { return arrays_.size(); }
    const std::string& name(std::size_t i) const { return names_.at(i); }
    const std::vector<std::string>& names() const noexcept { return names_; }

    nc::Array& array(std::size_t i) { return arrays_.at(i); }
    const nc::Array& array(std::size_t i) const { return arrays_.at(i); }
    std::vector<nc::Array>& arrays() noexcept { return arrays_; }
    const std::vector<nc::Array>& arrays() const noexcept { return arrays_; }

    nc::Array& operator[](const std::string& name) { return arrays_.at(index_of(name)); }
    const nc::Array& operator[](const std::string& name) const { return arrays_.at(index_of(name)); }

    std::size_t index_of(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) fail(ErrorCategory::contract, "no parameter named '" + name + "'");
        return it->second;
    }

    std::size_t scalar_count() const {
        std::size_t n = 0;
        for (const auto& a : arrays_) n += a.size();
        return n;
    }

    bool operator==(const ModelParams& o) const { return config_ == o.config_ && arrays_ == o.arrays_; }

  private:
    std::size_t add(std::string name, nc::Shape shape) {
        index_.emplace(name, names_.size());
        names_.push_back(std::move(name));
        arrays_.emplace_back(std::move(shape));
        return arrays_.size() - 1;
    }

    ModelConfig config_;
    ParamLayout layout_{};
    std::vector<std::string> names_;
    std::vector<nc::Array> arrays_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// Gradient buffers shaped like a parameter set.
using Gradients = std::vector<nc::Array>;

inline Gradients zero_gradients(const ModelParams& p) {
    Gradients g;
    g.reserve(p.count());
    for (const auto& a : p.arrays()) g.push_back(nc::Array::zeros_like(a));
    return g;
}

/// Embeddings uniform(-0.1, 0.1) with the padding row zeroed; weights
/// normal with variance 1/fan_in; biases zero.
inline void init_params(ModelParams& p, Rng& rng, int pad_index = 0) {
    const auto& L = p.layout();
    for (std::size_t idx : {L.src_embed, L.src_pos, L.tgt_embed, L.tgt_pos}) {
        for (auto& v : p.array(idx).data()) v = rng.uniform(-0.1, 0.1);
    }
    for (std::size_t idx : {L.src_embed, L.tgt_embed}) {
        for (auto& v : p.array(idx).row(static_cast<std::size_t>(pad_index))) v = 0.0;
    }
    auto normal_init = [&](std::size_t idx, std::size_t fan_in) {
        const double sd = std::sqrt(1.0 / static_cast<double>(fan_in));
        for (auto& v : p.array(idx).data()) v = sd * rng.normal();
    };
    const std::size_t d = p.config().embed_dim, h = p.config().hidden_dim;
    normal_init(L.enc_in_w, d);
    for (const auto& l : L.enc) normal_init(l.conv_w, 3 * h);
    normal_init(L.enc_out_w, h);
    normal_init(L.dec_in_w, d);
    for (const auto& l : L.dec) {
        normal_init(l.conv_w, 3 * h);
        normal_init(l.query_w, h);
        normal_init(l.context_w, d);
    }
    normal_init(L.dec_out_w, h);
    normal_init(L.proj_w, d);
}

}  // namespace mlconvgec
