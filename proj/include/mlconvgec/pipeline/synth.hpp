#pragma once

#include <string>
#include <vector>

#include "mlconvgec/common/rng.hpp"
#include "mlconvgec/textprep/corpus.hpp"

namespace mlconvgec {

namespace detail {

struct Noun {
    const char* word;
    const char* article;  // "a" or "an"
};

inline const Noun kSubjects[] = {{"cat", "a"}, {"dog", "a"}, {"teacher", "a"}, {"owl", "an"},
                                 {"student", "a"}, {"engineer", "an"}, {"boy", "a"}, {"artist", "an"}};
inline const Noun kObjects[] = {{"apple", "an"}, {"book", "a"}, {"letter", "a"}, {"orange", "an"},
                                {"song", "a"},   {"idea", "an"}, {"house", "a"}, {"umbrella", "an"}};
// singular / plural forms
inline const char* const kVerbs[][2] = {{"likes", "like"}, {"wants", "want"},   {"sees", "see"},
                                        {"finds", "find"}, {"writes", "write"}, {"needs", "need"}};
inline const char* const kEndings[] = {".", "today .", "at home .", "every day ."};

}  // namespace detail

/// Correct sentences "<det> <noun> <verb> <det> <noun> <ending>" with one or
/// two injected article or subject-verb agreement errors per source.
inline std::vector<SentencePair> synthetic_corpus(std::size_t n, std::uint64_t seed) {
    using namespace detail;
    Rng rng(seed);
    std::vector<SentencePair> out;
    auto pick = [&](const auto& arr) -> const auto& { return arr[rng.index(std::size(arr))]; };
    while (out.size() < n) {
        const Noun& subj = pick(kSubjects);
        const Noun& obj = pick(kObjects);
        const auto& verb = pick(kVerbs);
        const std::string ending = pick(kEndings);
        const bool subj_def = rng.index(2) == 0, obj_def = rng.index(2) == 0;
        Tokens t{subj_def ? "the" : subj.article, subj.word, verb[0], obj_def ? "the" : obj.article, obj.word};
        for (auto& w : split_ws(ending)) t.push_back(w);

        Tokens s = t;
        const std::size_t errors = 1 + rng.index(2);
        bool dropped = false;
        for (std::size_t e = 0; e < errors; ++e) {
            switch (rng.index(3)) {
                case 0:  // agreement
                    s[2] = s[2] == verb[0] ? verb[1] : verb[0];
                    break;
                case 1:  // a/an confusion on the object
                    if (dropped) break;
                    if (s[3] == "the") {
                        s[3] = obj.article[1] ? "a" : "an";
                    } else {
                        s[3] = s[3] == "a" ? "an" : "a";
                    }
                    break;
                default:  // dropped object article
                    if (!dropped) s.erase(s.begin() + 3);
                    dropped = true;
                    break;
            }
        }
        if (s == t) continue;
        out.push_back({std::move(s), std::move(t)});
    }
    return out;
}

}  // namespace mlconvgec
