#pragma once

#include <span>
#include <vector>

#include "mlconvgec/model/params.hpp"
#include "mlconvgec/numcore/ops.hpp"
#include "mlconvgec/textprep/vocab.hpp"

namespace mlconvgec {

enum class Mode { train, inference };
enum class Side { source, target };

/// Parameters of one ModelParams bound as leaves on a tape.
class BoundModel {
  public:
    BoundModel(nc::Tape& tape, const ModelParams& params, bool trainable) : tape_(tape), params_(params) {
        vars_.reserve(params.count());
        for (const auto& a : params.arrays()) vars_.push_back(trainable ? tape.parameter(a) : tape.frozen(a));
    }

    /// Binds externally created leaves, one per parameter array in canonical order.
    BoundModel(nc::Tape& tape, const ModelParams& params, std::span<const nc::Var> vars)
        : tape_(tape), params_(params), vars_(vars.begin(), vars.end()) {
        if (vars_.size() != params.count()) fail(ErrorCategory::contract, "one bound leaf per parameter array expected");
    }

    nc::Var operator()(std::size_t idx) const { return vars_[idx]; }
    nc::Tape& tape() const { return tape_; }
    const ModelParams& params() const { return params_; }
    const ParamLayout& layout() const { return params_.layout(); }
    const ModelConfig& config() const { return params_.config(); }

    void collect_gradients(Gradients& out, double weight) const {
        for (std::size_t i = 0; i < vars_.size(); ++i) {
            if (const nc::Array* g = tape_.grad(vars_[i])) {
                auto& dst = out[i];
                for (std::size_t k = 0; k < g->size(); ++k) dst[k] += weight * (*g)[k];
            }
        }
    }

  private:
    nc::Tape& tape_;
    const ModelParams& params_;
    std::vector<nc::Var> vars_;
};

struct EncoderGraph {
    nc::Var out;       // e_i, [m×d]
    nc::Var embedded;  // s_i, [m×d]
};

struct DecoderGraph {
    nc::Var log_probs;                // [n×|V_t|]
    std::vector<nc::Var> attention;   // one [n×m] matrix per layer
};

namespace detail {

inline void check_length(std::size_t n, const ModelConfig& cfg, const char* what) {
    if (n == 0) fail(ErrorCategory::length, std::string(what) + " is empty");
    if (n > cfg.max_positions) {
        fail(ErrorCategory::length, std::string(what) + " has " + std::to_string(n) + " positions, more than the " +
                                        std::to_string(cfg.max_positions) + " supported");
    }
}

inline nc::Var maybe_dropout(nc::Var x, const ModelConfig& cfg, Mode mode, Rng* rng) {
    if (mode != Mode::train || cfg.dropout == 0.0) return x;
    if (!rng) fail(ErrorCategory::contract, "training mode needs a random generator for dropout");
    return nc::dropout(x, cfg.dropout, true, *rng);
}

}  // namespace detail

/// w(token_i) + p(i), with dropout in training mode.
inline nc::Var embed_graph(const BoundModel& m, std::span<const int> tokens, Side side, Mode mode, Rng* rng) {
    detail::check_length(tokens.size(), m.config(), side == Side::source ? "source sequence" : "target sequence");
    const auto& L = m.layout();
    const std::size_t words = side == Side::source ? L.src_embed : L.tgt_embed;
    const std::size_t pos = side == Side::source ? L.src_pos : L.tgt_pos;
    nc::Var w = nc::gather_rows(m(words), tokens, Vocabulary::pad_index);
    nc::Var p = nc::slice_rows(m(pos), 0, tokens.size());
    return detail::maybe_dropout(nc::add(w, p), m.config(), mode, rng);
}

inline EncoderGraph encode_graph(const BoundModel& m, std::span<const int> source, Mode mode, Rng* rng) {
    if (source.empty()) fail(ErrorCategory::length, "cannot encode an empty source");
    if (source.back() != Vocabulary::eos_index) {
        fail(ErrorCategory::contract, "source sequence must end with the end-of-sentence marker");
    }
    const auto& L = m.layout();
    const auto& cfg = m.config();
    nc::Var s = embed_graph(m, source, Side::source, mode, rng);
    nc::Var h = nc::linear(s, m(L.enc_in_w), m(L.enc_in_b));
    for (const auto& layer : L.enc) {
        nc::Var x = detail::maybe_dropout(h, cfg, mode, rng);
        nc::Var f = nc::add_row(nc::conv1d(nc::pad_rows(x, 1, 1), m(layer.conv_w)), m(layer.conv_b));
        h = nc::add(nc::glu(f), h);
    }
    return {nc::linear(h, m(L.enc_out_w), m(L.enc_out_b)), s};
}

/// Teacher-forced decoder over input tokens (BOS followed by the previous
/// target tokens). Row j of the result is the distribution of the token that
/// follows inputs[0..j].
inline DecoderGraph decode_graph(const BoundModel& m, const EncoderGraph& enc, std::span<const int> inputs, Mode mode,
                                 Rng* rng) {
    if (inputs.empty() || inputs.front() != Vocabulary::bos_index) {
        fail(ErrorCategory::contract, "decoder prefix must begin with the beginning-of-sentence marker");
    }
    const auto& L = m.layout();
    const auto& cfg = m.config();
    nc::Var t = embed_graph(m, inputs, Side::target, mode, rng);
    nc::Var attend_to = nc::add(enc.out, enc.embedded);  // e_i + s_i
    nc::Var g = nc::linear(t, m(L.dec_in_w), m(L.dec_in_b));
    DecoderGraph out;
    for (const auto& layer : L.dec) {
        nc::Var x = detail::maybe_dropout(g, cfg, mode, rng);
        // Two leading pads make the window for step j end at input j.
        nc::Var f = nc::add_row(nc::conv1d(nc::pad_rows(x, 2, 0), m(layer.conv_w)), m(layer.conv_b));
        nc::Var y = nc::glu(f);
        nc::Var z = nc::add(nc::linear(y, m(layer.query_w), m(layer.query_b)), t);
        nc::Var alpha = nc::softmax(nc::matmul_nt(z, enc.out));
        nc::Var c = nc::linear(nc::matmul(alpha, attend_to), m(layer.context_w), m(layer.context_b));
        g = nc::add(nc::add(y, c), g);
        out.attention.push_back(alpha);
    }
    nc::Var d = detail::maybe_dropout(nc::linear(g, m(L.dec_out_w), m(L.dec_out_b)), cfg, mode, rng);
    out.log_probs = nc::log_softmax(nc::linear(d, m(L.proj_w), m(L.proj_b)));
    return out;
}

// ---------------------------------------------------------------------------
// Value-level API

struct EncoderOutput {
    nc::Array e;  // [m×d]
    nc::Array s;  // [m×d]
};

inline nc::Array embed(std::span<const int> tokens, Side side, const ModelParams& params, Mode mode = Mode::inference,
                       Rng* rng = nullptr) {
    nc::Tape tape(false);
    BoundModel m(tape, params, false);
    return embed_graph(m, tokens, side, mode, rng).value();
}

inline EncoderOutput encode(std::span<const int> source, const ModelParams& params, Mode mode = Mode::inference,
                            Rng* rng = nullptr) {
    nc::Tape tape(false);
    BoundModel m(tape, params, false);
    auto g = encode_graph(m, source, mode, rng);
    return {g.out.value(), g.embedded.value()};
}

struct DecodeTrace {
    std::vector<nc::Array> attention;  // per layer, [n×m]
};

/// Log-probabilities over the target vocabulary for the token after `prefix`.
inline std::vector<double> decode_step(std::span<const int> prefix, const EncoderOutput& enc,
                                       const ModelParams& params, DecodeTrace* trace = nullptr) {
    nc::Tape tape(false);
    BoundModel m(tape, params, false);
    EncoderGraph eg{tape.frozen(enc.e), tape.frozen(enc.s)};
    auto dg = decode_graph(m, eg, prefix, Mode::inference, nullptr);
    const nc::Array& lp = dg.log_probs.value();
    const auto last = lp.row(lp.rows() - 1);
    if (trace) {
        trace->attention.clear();
        for (auto a : dg.attention) trace->attention.push_back(a.value());
    }
    return {last.begin(), last.end()};
}

struct NllResult {
    double loss = 0.0;
    std::vector<double> step_log_probs;  // log p(t_j | t_<j, S)
};

inline std::vector<int> teacher_inputs(std::span<const int> target) {
    if (target.empty()) fail(ErrorCategory::length, "reference target is empty");
    if (target.back() != Vocabulary::eos_index) {
        fail(ErrorCategory::contract, "reference target must end with the end-of-sentence marker");
    }
    std::vector<int> inputs;
    inputs.reserve(target.size());
    inputs.push_back(Vocabulary::bos_index);
    inputs.insert(inputs.end(), target.begin(), target.end() - 1);
    return inputs;
}

struct NllGraph {
    nc::Var loss;
    DecoderGraph dec;
};

inline NllGraph nll_graph(const BoundModel& m, std::span<const int> source, std::span<const int> target, Mode mode,
                          Rng* rng) {
    const auto inputs = teacher_inputs(target);
    auto enc = encode_graph(m, source, mode, rng);
    auto dec = decode_graph(m, enc, inputs, mode, rng);
    nc::Var loss = nc::nll_mean(dec.log_probs, target);
    return {loss, std::move(dec)};
}

/// Teacher-forced loss -(1/T) Σ_j log p(t_j | t_<j, S) for one pair. When
/// `grads` is given, weight · ∂loss/∂θ is added into it.
inline NllResult forward_nll(std::span<const int> source, std::span<const int> target, const ModelParams& params,
                             Mode mode, Rng* rng, Gradients* grads = nullptr, double grad_weight = 1.0) {
    nc::Tape tape(grads != nullptr);
    BoundModel m(tape, params, grads != nullptr);
    auto g = nll_graph(m, source, target, mode, rng);

    NllResult res;
    res.loss = g.loss.value()[0];
    const nc::Array& lp = g.dec.log_probs.value();
    for (std::size_t j = 0; j < target.size(); ++j) {
        res.step_log_probs.push_back(lp.at(j, static_cast<std::size_t>(target[j])));
    }
    if (grads) {
        tape.backward(g.loss);
        m.collect_gradients(*grads, grad_weight);
    }
    return res;
}

struct TokenPair {
    std::vector<int> source;  // ends with EOS
    std::vector<int> target;  // ends with EOS
};

/// Mean of per-pair losses over a batch; gradients of that mean are added
/// into `grads` when given.
inline double batch_nll(std::span<const TokenPair> batch, const ModelParams& params, Mode mode, Rng* rng,
                        Gradients* grads = nullptr) {
    if (batch.empty()) fail(ErrorCategory::length, "empty batch");
    const double w = 1.0 / static_cast<double>(batch.size());
    double total = 0.0;
    for (const auto& pair : batch) total += forward_nll(pair.source, pair.target, params, mode, rng, grads, w).loss;
    return total * w;
}

}  // namespace mlconvgec
