#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "mlconvgec/common/rng.hpp"
#include "mlconvgec/metrics/gleu.hpp"
#include "mlconvgec/metrics/m2.hpp"
#include "oracles/m2_suite.hpp"

using namespace mlconvgec;

namespace {

Tokens T(const char* s) { return split_ws(s); }

}  // namespace

TEST(FBeta, TableOneRows) {
    const double cases[][3] = {{57.94, 16.48, 38.54}, {58.38, 18.83, 41.11}, {60.90, 23.74, 46.38}, {65.49, 33.14, 54.79}};
    for (const auto& c : cases) EXPECT_NEAR(100.0 * f_beta(c[0] / 100.0, c[1] / 100.0), c[2], 0.01);
}

TEST(FBeta, SymmetricPointAndZeros) {
    for (double x : {0.1, 0.37, 0.8, 1.0}) EXPECT_NEAR(f_beta(x, x), x, 1e-15);
    EXPECT_EQ(f_beta(0.0, 0.0), 0.0);
}

TEST(FBeta, MonotoneInEachArgument) {
    for (int i = 0; i <= 20; ++i)
        for (int j = 0; j < 20; ++j) {
            const double p = i / 20.0, r = j / 20.0, r2 = (j + 1) / 20.0;
            EXPECT_LE(f_beta(p, r), f_beta(p, r2));
            EXPECT_LE(f_beta(r, p), f_beta(r2, p));
        }
}

TEST(Edits, IdenticalHasNone) {
    EXPECT_TRUE(extract_system_edits(T("a b c"), T("a b c")).empty());
    EXPECT_EQ(count_edits(T("a b c"), T("a b c")), (EditCounts{0, 0, 0}));
}

TEST(Edits, SingleSubstitution) {
    EXPECT_EQ(extract_system_edits(T("He go ."), T("He goes .")), (std::vector<Edit>{{1, 2, "goes"}}));
    EXPECT_EQ(count_edits(T("He go to school ."), T("He goes to school .")), (EditCounts{1, 0, 0}));
}

TEST(Edits, AppendIsInsertion) { EXPECT_EQ(count_edits(T("a b"), T("a b c")), (EditCounts{0, 0, 1})); }

TEST(Edits, AdjacentOperationsMerge) {
    // Backtrace: match school; "go"/"to" substitute; "going" inserted before it.
    EXPECT_EQ(extract_system_edits(T("I am go school"), T("I am going to school")),
              (std::vector<Edit>{{2, 3, "going to"}}));
}

TEST(Edits, DeletionHasEmptyReplacement) {
    EXPECT_EQ(extract_system_edits(T("He is is here ."), T("He is here .")), (std::vector<Edit>{{1, 2, ""}}));
}

TEST(Edits, CountsMatchEditDistance) {
    Rng rng(1);
    const char* alphabet[] = {"a", "b", "c"};
    for (int c = 0; c < 500; ++c) {
        Tokens x, y;
        for (std::size_t i = rng.index(7); i > 0; --i) x.push_back(alphabet[rng.index(3)]);
        for (std::size_t i = rng.index(7); i > 0; --i) y.push_back(alphabet[rng.index(3)]);
        // Plain two-row DP distance.
        std::vector<std::size_t> prev(y.size() + 1), cur(y.size() + 1);
        for (std::size_t j = 0; j <= y.size(); ++j) prev[j] = j;
        for (std::size_t i = 1; i <= x.size(); ++i) {
            cur[0] = i;
            for (std::size_t j = 1; j <= y.size(); ++j)
                cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x[i - 1] == y[j - 1] ? 0 : 1)});
            prev = cur;
        }
        const auto e = count_edits(x, y);
        EXPECT_EQ(e.substitutions + e.deletions + e.insertions, prev[y.size()]);
        EXPECT_EQ(static_cast<long>(e.deletions) - static_cast<long>(e.insertions),
                  static_cast<long>(x.size()) - static_cast<long>(y.size()));
    }
}

TEST(Edits, SwappingInputsSwapsDeletionsAndInsertions) {
    Rng rng(2);
    const char* alphabet[] = {"a", "b", "c", "d"};
    for (int c = 0; c < 2000; ++c) {
        Tokens x, y;
        for (std::size_t i = rng.index(8); i > 0; --i) x.push_back(alphabet[rng.index(4)]);
        for (std::size_t i = rng.index(8); i > 0; --i) y.push_back(alphabet[rng.index(4)]);
        const auto f = count_edits(x, y), b = count_edits(y, x);
        EXPECT_EQ(f.substitutions, b.substitutions) << join(x) << " | " << join(y);
        EXPECT_EQ(f.deletions, b.insertions);
        EXPECT_EQ(f.insertions, b.deletions);
    }
}

TEST(M2, ExactCorrectionScoresOne) {
    auto gold = parse_m2("S He go to school .\nA 1 2|||SVA|||goes|||REQUIRED|||-NONE-|||0\n\n");
    auto r = m2_score({T("He goes to school .")}, gold);
    EXPECT_EQ(r.counts, (EditStats{1, 0, 0}));
    EXPECT_EQ(r.f05, 1.0);
}

TEST(M2, UnchangedHypothesisUsesZeroOverZeroPrecision) {
    auto gold = parse_m2(
        "S a b c\nA 0 1|||X|||A|||REQUIRED|||-NONE-|||0\nA 2 3|||X|||C|||REQUIRED|||-NONE-|||0\n");
    auto r = m2_score({T("a b c")}, gold);
    EXPECT_EQ(r.counts, (EditStats{0, 0, 2}));
    EXPECT_EQ(r.precision, 1.0);
    EXPECT_EQ(r.recall, 0.0);
    EXPECT_EQ(r.f05, 0.0);
}

TEST(M2, HandScoredFixtureSuite) {
    EditStats total;
    for (const auto& c : oracle::load_m2_suite()) {
        const auto r = m2_score(c.hypotheses, c.gold);
        EXPECT_EQ(r.counts, c.expected) << c.name;
        total += r.counts;
    }
    EXPECT_EQ(total, (EditStats{6, 3, 5}));
}

TEST(M2, SuiteTotalsIgnoreSentenceOrder) {
    std::vector<Tokens> hyps;
    std::vector<M2Sentence> gold;
    for (const auto& c : oracle::load_m2_suite()) {
        hyps.insert(hyps.end(), c.hypotheses.begin(), c.hypotheses.end());
        gold.insert(gold.end(), c.gold.begin(), c.gold.end());
    }
    const auto fwd = m2_score(hyps, gold);
    std::reverse(hyps.begin(), hyps.end());
    std::reverse(gold.begin(), gold.end());
    EXPECT_EQ(m2_score(hyps, gold).counts, fwd.counts);
    EXPECT_EQ(fwd.counts, (EditStats{6, 3, 5}));
}

TEST(M2, MalformedLineReportsLineNumber) {
    try {
        parse_m2("S a b\nA 0 1|||X|||c\n", "bad.m2");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.category(), ErrorCategory::parse);
        EXPECT_NE(std::string(e.what()).find("bad.m2:2"), std::string::npos);
    }
}

TEST(M2, SpanOutsideSourceIsParseError) {
    EXPECT_THROW(parse_m2("S a b\nA 1 3|||X|||c|||REQUIRED|||-NONE-|||0\n"), Error);
}

TEST(M2, FormatThenParseRoundTrip) {
    const std::vector<Edit> edits{{1, 2, "goes"}, {3, 3, "the"}, {4, 5, ""}};
    auto back = parse_m2(format_m2(T("He go to store now"), edits) + format_m2(T("fine ."), {}));
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(back[0].gold.at(0), edits);
    EXPECT_TRUE(back[1].gold.at(0).empty());
}

TEST(Gleu, IdentityIsOne) {
    const std::vector<Tokens> s{T("a b c d e"), T("x y z w")};
    EXPECT_DOUBLE_EQ(gleu(s, s, {{s[0]}, {s[1]}}), 1.0);
}

TEST(Gleu, CorrectedHypothesisEqualToReference) {
    // Every hypothesis n-gram is in the reference and none is a penalized
    // source-only n-gram: precisions 4/4, 3/3, 2/2, 1/1, no brevity penalty.
    EXPECT_DOUBLE_EQ(gleu({T("a b c d")}, {T("a x c d")}, {{T("a x c d")}}), 1.0);
}

TEST(Gleu, HandCountedPartialCorrection) {
    // src "the cat sat on mat", ref "the cat sat on the mat", hyp "the cat sat on a mat".
    // matches/totals: 5/6, 3/5, 2/4, 1/3; no source-only n-gram appears in
    // the hypothesis; equal lengths. GLEU = (5/6 · 3/5 · 2/4 · 1/3)^(1/4) = (1/12)^(1/4).
    const double g = gleu({T("the cat sat on mat")}, {T("the cat sat on a mat")}, {{T("the cat sat on the mat")}});
    EXPECT_NEAR(g, std::pow(1.0 / 12.0, 0.25), 1e-12);
}

TEST(Gleu, UncorrectedSourceIsPenalized) {
    // 4-grams: "cat sat on mat" is source-only, so 1 − 1 = 0 matches and GLEU = 0.
    EXPECT_EQ(gleu({T("the cat sat on mat")}, {T("the cat sat on mat")}, {{T("the cat sat on the mat")}}), 0.0);
    const auto s = oracle::gleu_fixture();
    for (const auto& c : s) EXPECT_GE(gleu({c[0]}, {c[1]}, {{c[1]}}), gleu({c[0]}, {c[0]}, {{c[1]}}));
}

TEST(Gleu, EmptyHypothesisIsZero) { EXPECT_EQ(gleu({T("a b")}, {Tokens{}}, {{T("a b")}}), 0.0); }

TEST(Gleu, MissingReferenceIsContractError) {
    try {
        gleu({T("a")}, {T("a")}, {{}});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.category(), ErrorCategory::contract);
    }
}
