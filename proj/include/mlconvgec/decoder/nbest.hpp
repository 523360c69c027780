#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "mlconvgec/common/text.hpp"

namespace mlconvgec {

struct NbestEntry {
    std::size_t sentence = 0;
    Tokens hypothesis;  // word level
    double model_score = 0.0;
};

/// Hypotheses grouped by sentence id, best first within a group.
using NbestList = std::vector<std::vector<NbestEntry>>;

inline std::string format_nbest(const NbestList& list) {
    std::string out;
    for (const auto& group : list)
        for (const auto& e : group)
            out += std::to_string(e.sentence) + " ||| " + join(e.hypothesis) + " ||| " + format_double(e.model_score) + "\n";
    return out;
}

namespace detail {

struct NbestLine {
    std::size_t sentence;
    Tokens hypothesis;
    std::string tail;
};

inline NbestLine split_nbest_line(const std::string& line, std::size_t lineno, const std::string& file) {
    auto fields = split_exact(line, "|||");
    if (fields.size() != 3) {
        fail(ErrorCategory::parse, file + ":" + std::to_string(lineno) + ": expected 'id ||| hypothesis ||| value'");
    }
    NbestLine out;
    const auto id = parse_int(trim(fields[0]), "sentence id");
    if (id < 0) fail(ErrorCategory::parse, file + ":" + std::to_string(lineno) + ": negative sentence id");
    out.sentence = static_cast<std::size_t>(id);
    out.hypothesis = split_ws(fields[1]);
    out.tail = std::string(trim(fields[2]));
    return out;
}

template <typename Entry>
void place_entry(std::vector<std::vector<Entry>>& list, Entry e, std::size_t lineno, const std::string& file) {
    if (!list.empty() && e.sentence + 1 < list.size()) {
        fail(ErrorCategory::parse, file + ":" + std::to_string(lineno) + ": sentence ids must be non-decreasing");
    }
    if (e.sentence >= list.size()) list.resize(e.sentence + 1);
    list[e.sentence].push_back(std::move(e));
}

}  // namespace detail

inline NbestList parse_nbest(const std::string& text, const std::string& file = "<nbest>") {
    NbestList list;
    std::size_t lineno = 0;
    for (const auto& raw : split_exact(text, "\n")) {
        ++lineno;
        if (trim(raw).empty()) continue;
        auto l = detail::split_nbest_line(raw, lineno, file);
        NbestEntry e{l.sentence, std::move(l.hypothesis), parse_double(l.tail, "model score")};
        detail::place_entry(list, std::move(e), lineno, file);
    }
    return list;
}

inline NbestList load_nbest(const std::filesystem::path& path) { return parse_nbest(read_file(path), path.string()); }

}  // namespace mlconvgec
