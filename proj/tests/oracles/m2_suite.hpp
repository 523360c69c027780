#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "mlconvgec/metrics/m2.hpp"

#ifndef MLCONVGEC_FIXTURE_DIR
#error "MLCONVGEC_FIXTURE_DIR must point at tests/fixtures"
#endif

namespace mlconvgec::oracle {

inline std::filesystem::path fixture_dir() { return MLCONVGEC_FIXTURE_DIR; }

struct M2Case {
    std::string name;
    std::vector<M2Sentence> gold;
    std::vector<Tokens> hypotheses;
    EditStats expected;  // scored by hand
};

inline std::vector<M2Case> load_m2_suite() {
    const auto dir = fixture_dir() / "m2_suite";
    std::vector<M2Case> cases;
    for (const auto& line : read_lines(dir / "expected.txt")) {
        if (line.empty() || line[0] == '#') continue;
        const auto f = split_ws(line);
        M2Case c;
        c.name = f.at(0);
        c.gold = load_m2(dir / (c.name + ".m2"));
        for (const auto& h : read_lines(dir / (c.name + ".hyp"))) c.hypotheses.push_back(split_ws(h));
        c.expected = {static_cast<std::size_t>(std::stoul(f.at(1))), static_cast<std::size_t>(std::stoul(f.at(2))),
                      static_cast<std::size_t>(std::stoul(f.at(3)))};
        cases.push_back(std::move(c));
    }
    return cases;
}

/// (source, reference) pairs with reference ≠ source.
inline std::vector<std::array<Tokens, 2>> gleu_fixture() {
    const char* pairs[][2] = {
        {"He go to school .", "He goes to school ."},
        {"She like apple .", "She likes apples ."},
        {"I am go school", "I am going to school"},
        {"He is is here .", "He is here ."},
        {"I went to store yesterday", "I went to the store yesterday ."},
        {"The results is good .", "The results are good ."},
        {"Dogs bark loud .", "Dogs bark loudly ."},
        {"This are wrong .", "This is wrong ."},
    };
    std::vector<std::array<Tokens, 2>> out;
    for (const auto& p : pairs) out.push_back({split_ws(p[0]), split_ws(p[1])});
    return out;
}

}  // namespace mlconvgec::oracle
