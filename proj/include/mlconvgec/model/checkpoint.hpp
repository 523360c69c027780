#pragma once

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "mlconvgec/model/params.hpp"
#include "mlconvgec/textprep/vocab.hpp"

namespace mlconvgec {

struct Checkpoint {
    ModelParams params;
    Vocabulary src_vocab;
    Vocabulary tgt_vocab;
    std::map<std::string, std::string> meta;  // free-form key=value, e.g. epoch
};

namespace detail {

inline constexpr const char* checkpoint_magic = "mlconvgec-checkpoint 1";

inline void put_f64_le(std::string& out, double v) {
    auto bits = std::bit_cast<std::uint64_t>(v);
    for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xff));
}

inline double get_f64_le(const unsigned char* p) {
    std::uint64_t bits = 0;
    for (int b = 7; b >= 0; --b) bits = (bits << 8) | p[b];
    return std::bit_cast<double>(bits);
}

inline std::string config_line(const ModelConfig& c) {
    std::ostringstream os;
    os << "config embed_dim=" << c.embed_dim << " hidden_dim=" << c.hidden_dim << " layers=" << c.layers
       << " src_vocab=" << c.src_vocab << " tgt_vocab=" << c.tgt_vocab << " max_positions=" << c.max_positions
       << " dropout=" << format_double(c.dropout);
    return os.str();
}

inline std::map<std::string, std::string> parse_kv(const Tokens& fields, std::size_t from) {
    std::map<std::string, std::string> kv;
    for (std::size_t i = from; i < fields.size(); ++i) {
        auto eq = fields[i].find('=');
        if (eq == std::string::npos) fail(ErrorCategory::parse, "checkpoint field '" + fields[i] + "' is not key=value");
        kv[fields[i].substr(0, eq)] = fields[i].substr(eq + 1);
    }
    return kv;
}

}  // namespace detail

/// Text header (config, vocabularies, array manifest), a "data" line, then
/// every array as raw little-endian float64 in manifest order.
inline std::string serialize_checkpoint(const Checkpoint& ck) {
    const auto& p = ck.params;
    std::string out = std::string(detail::checkpoint_magic) + "\n" + detail::config_line(p.config()) + "\n";
    out += "meta";
    for (const auto& [k, v] : ck.meta) out += " " + k + "=" + v;
    out += "\n";
    for (auto [label, vocab] : {std::pair{"src_vocab", &ck.src_vocab}, std::pair{"tgt_vocab", &ck.tgt_vocab}}) {
        out += std::string(label) + " " + std::to_string(vocab->size()) + "\n";
        out += vocab->serialize();
    }
    out += "arrays " + std::to_string(p.count()) + "\n";
    std::size_t offset = 0;
    for (std::size_t i = 0; i < p.count(); ++i) {
        const auto& a = p.array(i);
        std::string shape;
        for (std::size_t k = 0; k < a.rank(); ++k) shape += (k ? "x" : "") + std::to_string(a.dim(k));
        out += p.name(i) + " " + shape + " " + std::to_string(offset) + "\n";
        offset += a.size();
    }
    out += "data " + std::to_string(offset) + "\n";
    out.reserve(out.size() + 8 * offset);
    for (const auto& a : p.arrays())
        for (double v : a.data()) detail::put_f64_le(out, v);
    return out;
}

inline Checkpoint parse_checkpoint(const std::string& blob) {
    std::size_t pos = 0;
    auto next_line = [&]() -> std::string {
        auto nl = blob.find('\n', pos);
        if (nl == std::string::npos) fail(ErrorCategory::parse, "checkpoint header is truncated");
        std::string line = blob.substr(pos, nl - pos);
        pos = nl + 1;
        return line;
    };
    if (next_line() != detail::checkpoint_magic) fail(ErrorCategory::parse, "not a checkpoint (bad magic line)");

    auto cfg_fields = split_ws(next_line());
    if (cfg_fields.empty() || cfg_fields[0] != "config") fail(ErrorCategory::parse, "checkpoint config line missing");
    auto kv = detail::parse_kv(cfg_fields, 1);
    auto get = [&](const char* key) -> const std::string& {
        auto it = kv.find(key);
        if (it == kv.end()) fail(ErrorCategory::parse, std::string("checkpoint config lacks ") + key);
        return it->second;
    };
    ModelConfig cfg;
    cfg.embed_dim = static_cast<std::size_t>(parse_int(get("embed_dim"), "embed_dim"));
    cfg.hidden_dim = static_cast<std::size_t>(parse_int(get("hidden_dim"), "hidden_dim"));
    cfg.layers = static_cast<std::size_t>(parse_int(get("layers"), "layers"));
    cfg.src_vocab = static_cast<std::size_t>(parse_int(get("src_vocab"), "src_vocab"));
    cfg.tgt_vocab = static_cast<std::size_t>(parse_int(get("tgt_vocab"), "tgt_vocab"));
    cfg.max_positions = static_cast<std::size_t>(parse_int(get("max_positions"), "max_positions"));
    cfg.dropout = parse_double(get("dropout"), "dropout");

    Checkpoint ck;
    auto meta_fields = split_ws(next_line());
    if (meta_fields.empty() || meta_fields[0] != "meta") fail(ErrorCategory::parse, "checkpoint meta line missing");
    ck.meta = detail::parse_kv(meta_fields, 1);

    auto read_vocab = [&](const char* label) {
        auto f = split_ws(next_line());
        if (f.size() != 2 || f[0] != label) fail(ErrorCategory::parse, std::string("checkpoint lacks ") + label);
        const auto n = static_cast<std::size_t>(parse_int(f[1], "vocabulary size"));
        std::vector<std::string> toks;
        for (std::size_t i = 0; i < n; ++i) toks.push_back(next_line());
        return Vocabulary::from_tokens(toks);
    };
    ck.src_vocab = read_vocab("src_vocab");
    ck.tgt_vocab = read_vocab("tgt_vocab");
    if (ck.src_vocab.size() != cfg.src_vocab || ck.tgt_vocab.size() != cfg.tgt_vocab) {
        fail(ErrorCategory::parse, "checkpoint vocabulary sizes disagree with its config");
    }

    ck.params = ModelParams(cfg);
    auto& p = ck.params;
    auto af = split_ws(next_line());
    if (af.size() != 2 || af[0] != "arrays" || static_cast<std::size_t>(parse_int(af[1], "array count")) != p.count()) {
        fail(ErrorCategory::parse, "checkpoint array count does not match the model layout");
    }
    std::vector<std::size_t> offsets;
    for (std::size_t i = 0; i < p.count(); ++i) {
        auto f = split_ws(next_line());
        if (f.size() != 3 || f[0] != p.name(i)) {
            fail(ErrorCategory::parse, "checkpoint manifest entry " + std::to_string(i) + " should be " + p.name(i));
        }
        const auto& a = p.array(i);
        std::string shape;
        for (std::size_t k = 0; k < a.rank(); ++k) shape += (k ? "x" : "") + std::to_string(a.dim(k));
        if (f[1] != shape) {
            fail(ErrorCategory::dimension, "checkpoint array " + f[0] + " has shape " + f[1] + ", expected " + shape);
        }
        offsets.push_back(static_cast<std::size_t>(parse_int(f[2], "array offset")));
    }
    auto df = split_ws(next_line());
    if (df.size() != 2 || df[0] != "data") fail(ErrorCategory::parse, "checkpoint data marker missing");
    const auto total = static_cast<std::size_t>(parse_int(df[1], "data length"));
    if (blob.size() - pos != 8 * total) fail(ErrorCategory::parse, "checkpoint data section has the wrong length");

    const auto* raw = reinterpret_cast<const unsigned char*>(blob.data() + pos);
    for (std::size_t i = 0; i < p.count(); ++i) {
        auto& a = p.array(i);
        if (offsets[i] + a.size() > total) fail(ErrorCategory::parse, "checkpoint offset out of range");
        for (std::size_t k = 0; k < a.size(); ++k) {
            double v = detail::get_f64_le(raw + 8 * (offsets[i] + k));
            if (!std::isfinite(v)) fail(ErrorCategory::parse, "checkpoint array " + p.name(i) + " has a non-finite value");
            a[k] = v;
        }
    }
    return ck;
}

inline void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
    write_file_atomic(path, serialize_checkpoint(ck));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) { return parse_checkpoint(read_file(path)); }

}  // namespace mlconvgec
