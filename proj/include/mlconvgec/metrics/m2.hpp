#pragma once

#include <algorithm>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "mlconvgec/metrics/edits.hpp"

namespace mlconvgec {

struct EditAnnotation {
    Edit edit;
    std::string type;
    int annotator = 0;
};

struct M2Sentence {
    Tokens source;
    /// Gold edit sets keyed by annotator. An annotator whose only line is a
    /// noop has an empty set; a sentence without A lines gets annotator 0.
    std::map<int, std::vector<Edit>> gold;
};

namespace detail {

inline std::string normalize_replacement(std::string_view r) {
    const auto t = trim(r);
    if (t == "-NONE-") return "";
    return join(split_ws(t));
}

}  // namespace detail

inline std::vector<M2Sentence> parse_m2(const std::string& text, const std::string& file = "<m2>") {
    std::vector<M2Sentence> out;
    bool open = false;
    std::size_t lineno = 0;
    auto where = [&] { return file + ":" + std::to_string(lineno) + ": "; };
    auto close = [&] {
        if (open && out.back().gold.empty()) out.back().gold[0] = {};
        open = false;
    };
    for (const auto& raw : split_exact(text, "\n")) {
        ++lineno;
        std::string_view line = raw;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (trim(line).empty()) {
            close();
            continue;
        }
        if (line.rfind("S ", 0) == 0 || line == "S") {
            close();
            out.push_back({split_ws(line.substr(1)), {}});
            open = true;
            continue;
        }
        if (line.rfind("A ", 0) != 0) fail(ErrorCategory::parse, where() + "expected an S or A line");
        if (!open) fail(ErrorCategory::parse, where() + "annotation before any S line");
        auto fields = split_exact(line.substr(2), "|||");
        if (fields.size() != 6) fail(ErrorCategory::parse, where() + "annotation needs 6 '|||' separated fields");
        auto span = split_ws(fields[0]);
        if (span.size() != 2) fail(ErrorCategory::parse, where() + "annotation span must be 'start end'");
        const long long start = parse_int(span[0], "edit start"), end = parse_int(span[1], "edit end");
        const int annotator = static_cast<int>(parse_int(trim(fields[5]), "annotator id"));
        auto& sent = out.back();
        const std::string type(trim(fields[1]));
        auto& set = sent.gold[annotator];
        if (start == -1 || type == "noop") continue;
        if (start < 0 || end < start || static_cast<std::size_t>(end) > sent.source.size()) {
            fail(ErrorCategory::parse, where() + "edit span " + span[0] + " " + span[1] + " is outside the source");
        }
        Edit e{static_cast<std::size_t>(start), static_cast<std::size_t>(end), detail::normalize_replacement(fields[2])};
        if (std::find(set.begin(), set.end(), e) == set.end()) set.push_back(std::move(e));
    }
    close();
    return out;
}

inline std::vector<M2Sentence> load_m2(const std::filesystem::path& path) {
    return parse_m2(read_file(path), path.string());
}

/// M2 text with one annotator (id 0); a sentence without edits gets a noop line.
inline std::string format_m2(const Tokens& source, const std::vector<Edit>& edits) {
    std::string out = "S " + join(source) + "\n";
    if (edits.empty()) out += "A -1 -1|||noop|||-NONE-|||REQUIRED|||-NONE-|||0\n";
    for (const auto& e : edits) {
        out += "A " + std::to_string(e.start) + " " + std::to_string(e.end) + "|||edit|||" + e.replacement +
               "|||REQUIRED|||-NONE-|||0\n";
    }
    return out + "\n";
}

// ---------------------------------------------------------------------------
// Scores

/// (1+β²)PR / (β²P + R), 0 when both are 0.
inline double f_beta(double p, double r, double beta = 0.5) {
    const double b2 = beta * beta;
    const double den = b2 * p + r;
    return den == 0.0 ? 0.0 : (1.0 + b2) * p * r / den;
}

struct EditStats {
    std::size_t tp = 0, fp = 0, fn = 0;
    EditStats& operator+=(const EditStats& o) {
        tp += o.tp;
        fp += o.fp;
        fn += o.fn;
        return *this;
    }
    bool operator==(const EditStats&) const = default;
};

struct ScoreReport {
    EditStats counts;
    double precision = 1.0, recall = 1.0, f05 = 1.0;
};

inline ScoreReport make_report(const EditStats& s, double beta = 0.5) {
    ScoreReport r;
    r.counts = s;
    r.precision = s.tp + s.fp == 0 ? 1.0 : static_cast<double>(s.tp) / static_cast<double>(s.tp + s.fp);
    r.recall = s.tp + s.fn == 0 ? 1.0 : static_cast<double>(s.tp) / static_cast<double>(s.tp + s.fn);
    r.f05 = f_beta(r.precision, r.recall, beta);
    return r;
}

inline EditStats match_edits(const std::vector<Edit>& system, const std::vector<Edit>& gold) {
    std::set<Edit> g(gold.begin(), gold.end());
    EditStats s;
    for (const auto& e : std::set<Edit>(system.begin(), system.end())) {
        if (g.count(e)) {
            ++s.tp;
        } else {
            ++s.fp;
        }
    }
    s.fn = g.size() - s.tp;
    return s;
}

/// Stats against the annotator giving the highest sentence F0.5; ties go to
/// more true positives, then fewer false negatives, then the lower id.
inline EditStats best_annotator_stats(const std::vector<Edit>& system, const M2Sentence& gold) {
    EditStats best;
    double best_f = -1.0;
    bool first = true;
    for (const auto& [id, edits] : gold.gold) {
        const auto s = match_edits(system, edits);
        const double f = make_report(s).f05;
        const bool better = first || f > best_f || (f == best_f && (s.tp > best.tp || (s.tp == best.tp && s.fn < best.fn)));
        if (better) {
            best = s;
            best_f = f;
            first = false;
        }
    }
    if (first) best.fp = std::set<Edit>(system.begin(), system.end()).size();
    return best;
}

/// Corpus-level MaxMatch-style score of word-level hypotheses against M2 gold.
inline ScoreReport m2_score(const std::vector<Tokens>& hypotheses, const std::vector<M2Sentence>& gold,
                            double beta = 0.5) {
    if (hypotheses.size() != gold.size()) {
        fail(ErrorCategory::alignment, "hypothesis count " + std::to_string(hypotheses.size()) +
                                           " differs from gold sentence count " + std::to_string(gold.size()));
    }
    EditStats total;
    for (std::size_t i = 0; i < gold.size(); ++i) {
        total += best_annotator_stats(extract_system_edits(gold[i].source, hypotheses[i]), gold[i]);
    }
    return make_report(total, beta);
}

}  // namespace mlconvgec
