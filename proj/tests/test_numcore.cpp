#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "mlconvgec/numcore/gradcheck.hpp"
#include "mlconvgec/numcore/ops.hpp"
#include "oracles/random_arrays.hpp"

using namespace mlconvgec;
using namespace mlconvgec::nc;

TEST(Linear, IdentityMap) {
    Tape t(false);
    auto y = linear(t.constant(Array::vector({1, 2})), t.constant(Array::matrix(2, 2, {1, 0, 0, 1})),
                    t.constant(Array::vector({0, 0})));
    EXPECT_EQ(y.value(), Array::vector({1, 2}));
}

TEST(Linear, DotPlusBias) {
    Tape t(false);
    auto y = linear(t.constant(Array::vector({1, 1})), t.constant(Array::matrix(1, 2, {2, 3})),
                    t.constant(Array::vector({5})));
    EXPECT_EQ(y.value(), Array::vector({10}));
}

TEST(Linear, ShapeMismatchNamesBothShapes) {
    Tape t(false);
    try {
        linear(t.constant(Array::vector({1, 2, 3})), t.constant(Array::matrix(1, 2, {2, 3})),
               t.constant(Array::vector({5})));
        FAIL() << "expected dimension error";
    } catch (const Error& e) {
        EXPECT_EQ(e.category(), ErrorCategory::dimension);
        EXPECT_NE(std::string(e.what()).find("[3]"), std::string::npos);
        EXPECT_NE(std::string(e.what()).find("[1x2]"), std::string::npos);
    }
}

TEST(Linear, WeightGradientMatchesFiniteDifferences) {
    Rng rng(3);
    MultiScalarFn f = [](Tape&, std::span<const Var> v) { return sum(linear(v[0], v[1], v[2])); };
    auto rep = check_gradients(f, {oracle::random_array({4}, rng), oracle::random_array({3, 4}, rng),
                                   oracle::random_array({3}, rng)});
    EXPECT_LT(rep.max_rel_error, 1e-6);
}

TEST(Conv1d, ZeroFiltersGiveZeroOutput) {
    Rng rng(1);
    Tape t(false);
    auto y = conv1d(t.constant(oracle::random_array({6, 2}, rng)), t.constant(Array({4, 3, 2})));
    for (double v : y.value().data()) EXPECT_EQ(v, 0.0);
    EXPECT_EQ(y.value().shape(), (Shape{4, 4}));
}

TEST(Conv1d, SlidingSumOfFirstChannel) {
    // h = 1, so 2h = 2 filters; filter 0 sums the window, filter 1 is zero.
    Array filters({2, 3, 1});
    filters[0] = filters[1] = filters[2] = 1.0;
    Tape t(false);
    auto seq = t.constant(Array::matrix(5, 1, {0, 1, 2, 3, 0}));
    auto y = conv1d(seq, t.constant(filters));
    ASSERT_EQ(y.value().shape(), (Shape{3, 2}));
    EXPECT_EQ(y.value().at(0, 0), 3.0);
    EXPECT_EQ(y.value().at(1, 0), 6.0);
    EXPECT_EQ(y.value().at(2, 0), 5.0);
}

TEST(Conv1d, MatchesTripleLoopReference) {
    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t steps = 1 + rng.index(7), c = 1 + rng.index(5), o = 2 * (1 + rng.index(4));
        const Array seq = oracle::random_array({steps + 2, c}, rng);
        const Array filt = oracle::random_array({o, 3, c}, rng);
        Tape t(false);
        const Array got = conv1d(t.constant(seq), t.constant(filt)).value();
        const Array want = oracle::conv1d_reference(seq, filt);
        for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-12);
    }
}

TEST(Conv1d, EmptyInputIsAnError) {
    Tape t(false);
    try {
        conv1d(t.constant(Array({2, 1})), t.constant(Array({2, 3, 1})));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.category(), ErrorCategory::length);
    }
}

TEST(Glu, HalfGate) {
    Tape t(false);
    EXPECT_EQ(glu(t.constant(Array::vector({2, 0}))).value(), Array::vector({1.0}));
}

TEST(Glu, SaturatedGatePassesValue) {
    Tape t(false);
    EXPECT_NEAR(glu(t.constant(Array::vector({-3.5, 800}))).value()[0], -3.5, 1e-12);
}

TEST(Glu, OddWidthIsDimensionError) {
    Tape t(false);
    EXPECT_THROW(glu(t.constant(Array::vector({1, 2, 3}))), Error);
}

TEST(Glu, GradientCheck) {
    Rng rng(5);
    auto f = [](Tape&, Var x) { return sum(glu(x)); };
    EXPECT_LT(check_gradients(f, oracle::random_array({3, 8}, rng)), 1e-6);
}

TEST(Softmax, EqualLogits) {
    Tape t(false);
    auto y = softmax(t.constant(Array::vector({0.7, 0.7, 0.7}))).value();
    for (double v : y.data()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
}

TEST(Softmax, LogThree) {
    Tape t(false);
    auto y = softmax(t.constant(Array::vector({0.0, std::log(3.0)}))).value();
    EXPECT_NEAR(y[0], 0.25, 1e-15);
    EXPECT_NEAR(y[1], 0.75, 1e-15);
}

TEST(Softmax, LargeLogitsDoNotOverflow) {
    Tape t(false);
    auto y = softmax(t.constant(Array::vector({1000, 1000}))).value();
    EXPECT_EQ(y[0], 0.5);
    EXPECT_EQ(y[1], 0.5);
}

TEST(Softmax, SumsToOneAndIsPermutationEquivariant) {
    Rng rng(17);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 1 + rng.index(30);
        Array x = oracle::random_array({n}, rng, 20.0);
        Tape t(false);
        const Array y = softmax(t.constant(x)).value();
        EXPECT_NEAR(std::accumulate(y.data().begin(), y.data().end(), 0.0), 1.0, 1e-12);
        std::vector<std::size_t> perm(n);
        std::iota(perm.begin(), perm.end(), 0);
        rng.shuffle(perm);
        Array xp({n});
        for (std::size_t i = 0; i < n; ++i) xp[i] = x[perm[i]];
        const Array yp = softmax(t.constant(xp)).value();
        for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(yp[i], y[perm[i]], 1e-15);
    }
}

TEST(Dropout, ZeroProbabilityIsIdentity) {
    Rng rng(1), drng(2);
    Tape t(false);
    const Array x = oracle::random_array({50}, rng);
    EXPECT_EQ(dropout(t.constant(x), 0.0, true, drng).value(), x);
}

TEST(Dropout, InferenceIsExactIdentity) {
    Rng rng(1), drng(2);
    Tape t(false);
    const Array x = oracle::random_array({4, 7}, rng);
    EXPECT_EQ(dropout(t.constant(x), 0.2, false, drng).value(), x);
}

TEST(Dropout, MeanIsPreservedInExpectation) {
    Rng drng(99);
    Tape t(false);
    auto y = dropout(t.constant(Array({1000000}, 1.0)), 0.5, true, drng).value();
    const double mean = std::accumulate(y.data().begin(), y.data().end(), 0.0) / 1e6;
    EXPECT_NEAR(mean, 1.0, 0.01);
}

TEST(Dropout, ProbabilityOneIsConfigError) {
    Rng drng(1);
    Tape t(false);
    try {
        dropout(t.constant(Array::vector({1})), 1.0, true, drng);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.category(), ErrorCategory::config);
    }
}

TEST(GradCheck, SumOfSquares) {
    auto f = [](Tape&, Var x) { return sum(mul(x, x)); };
    EXPECT_LT(check_gradients(f, Array::vector({1, 2, 3})), 1e-7);
}

TEST(GradCheck, SoftmaxCrossEntropy) {
    Rng rng(8);
    const std::vector<int> targets{2, 0, 4};
    auto f = [&](Tape&, Var x) { return nll_mean(log_softmax(x), targets); };
    EXPECT_LT(check_gradients(f, oracle::random_array({3, 5}, rng)), 1e-5);
}

TEST(GradCheck, SoftmaxThroughWeightedSum) {
    Rng rng(9);
    const Array w = oracle::random_array({2, 6}, rng);
    auto f = [&](Tape& t, Var x) { return sum(mul(softmax(x), t.constant(w))); };
    EXPECT_LT(check_gradients(f, oracle::random_array({2, 6}, rng)), 1e-6);
}

TEST(GradCheck, NonFiniteFunctionIsEvaluationError) {
    auto f = [](Tape&, Var x) { return sum(scale(x, std::numeric_limits<double>::infinity())); };
    try {
        check_gradients(f, Array::vector({1.0}));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.category(), ErrorCategory::evaluation);
    }
}

// Every exposed op, on random shapes, against central differences.
TEST(GradCheck, AllOpsOnRandomShapes) {
    Rng rng(2024);
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t n = 1 + rng.index(4), k = 1 + rng.index(4), m = 1 + rng.index(4);
        const std::vector<int> idx{0, static_cast<int>(k - 1), 0};
        const std::vector<int> tg(n, static_cast<int>(m - 1));
        MultiScalarFn f = [&](Tape& t, std::span<const Var> v) {
            Var a = add_row(matmul(v[0], v[1]), v[2]);                    // n×m
            Var b = matmul_nt(v[0], t.constant(Array({m, k}, 0.3)));       // n×m
            Var c = add(mul(a, b), scale(softmax(a), 0.5));
            Var p = pad_rows(c, 2, 1);
            Var conv = conv1d(p, v[3]);                                   // (n+1)×2m
            Var g = glu(slice_rows(conv, 0, n));                          // n×m
            Var e = gather_rows(v[4], idx);                               // 3×m
            return add(add(nll_mean(log_softmax(g), tg), sum(e)), sum(linear(g, v[5], v[6])));
        };
        auto rep = check_gradients(f, {oracle::random_array({n, k}, rng), oracle::random_array({k, m}, rng),
                                       oracle::random_array({m}, rng), oracle::random_array({2 * m, 3, m}, rng),
                                       oracle::random_array({k, m}, rng), oracle::random_array({2, m}, rng),
                                       oracle::random_array({2}, rng)});
        EXPECT_LT(rep.max_rel_error, 1e-4) << "trial " << trial << " input " << rep.worst_input;
    }
}

TEST(GatherRows, FrozenIndexGetsNoGradient) {
    Tape t;
    Array table({3, 2}, 1.0);
    Var tv = t.parameter(table);
    const std::vector<int> idx{0, 1, 0, 2};
    t.backward(sum(gather_rows(tv, idx, 0)));
    const Array& g = *t.grad(tv);
    EXPECT_EQ(g.at(0, 0), 0.0);
    EXPECT_EQ(g.at(1, 0), 1.0);
    EXPECT_EQ(g.at(2, 1), 1.0);
}

TEST(Tape, GradientAccumulatesAcrossConsumers) {
    Tape t;
    Array x = Array::vector({2.0});
    Var xv = t.parameter(x);
    t.backward(add(mul(xv, xv), scale(xv, 3.0)));
    EXPECT_EQ((*t.grad(xv))[0], 7.0);
}
