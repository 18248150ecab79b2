#include <gtest/gtest.h>

#include <cmath>

#include "hiertax/nnet.hpp"
#include "hiertax/rng.hpp"
#include "oracles.hpp"

using namespace hiertax;

namespace {

Tensor random_tensor(std::size_t r, std::size_t c, std::uint64_t seed) {
    SplitMix64 rng(seed);
    Tensor t(r, c);
    for (auto& v : t.values()) {
        v = rng.normal();
    }
    return t;
}

} // namespace

TEST(Tensor, MatmulAgainstLoops) {
    const auto a = random_tensor(3, 4, 1);
    const auto b = random_tensor(4, 2, 2);
    const auto c = matmul(a, b);
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < 2; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < 4; ++k) {
                s += a(i, k) * b(k, j);
            }
            EXPECT_NEAR(c(i, j), s, 1e-14);
        }
    }
    Tensor acc(4, 2);
    add_matmul_at_b(a, c, acc);
    const auto bt = matmul_a_bt(c, b);
    EXPECT_EQ(bt.rows(), 3u);
    EXPECT_EQ(bt.cols(), 4u);
    EXPECT_NEAR(bt(1, 2), c(1, 0) * b(2, 0) + c(1, 1) * b(2, 1), 1e-14);
    EXPECT_NEAR(acc(2, 1), a(0, 2) * c(0, 1) + a(1, 2) * c(1, 1) + a(2, 2) * c(2, 1), 1e-14);
}

TEST(Tensor, ConcatSliceGather) {
    const auto a = random_tensor(2, 2, 3);
    const auto b = random_tensor(2, 3, 4);
    const std::vector<const Tensor*> parts{&a, &b};
    const auto c = hconcat(parts);
    EXPECT_EQ(c.cols(), 5u);
    EXPECT_EQ(column_slice(c, 2, 3), b);
    const std::vector<std::size_t> idx{1, 1, 0};
    const auto g = gather_rows(c, idx);
    EXPECT_EQ(g.rows(), 3u);
    EXPECT_EQ(g(0, 4), c(1, 4));
    EXPECT_EQ(g(2, 0), c(0, 0));
}

TEST(Backbone, ZeroWeightsGiveZeroFeatures) {
    Backbone bb(5, {{4, 3}, true});
    const auto f = bb.forward(random_tensor(6, 5, 7));
    for (double v : f.values()) {
        EXPECT_EQ(v, 0.0);
    }
}

TEST(Backbone, IdentityBlockPassesNonNegativeInput) {
    Backbone bb(3, {{3}, true});
    auto& w = bb.blocks()[0].weight().value;
    for (std::size_t i = 0; i < 3; ++i) {
        w(i, i) = 1.0;
    }
    Tensor x(2, 3);
    x.values()[0] = 0.5;
    x.values()[4] = 2.0;
    x.values()[5] = 0.0;
    EXPECT_EQ(bb.forward(x), x);
}

TEST(Backbone, DenseWidthArithmetic) {
    Backbone dense(3, {{2, 2}, true});
    EXPECT_EQ(dense.block_input_dim(0), 3u);
    EXPECT_EQ(dense.block_input_dim(1), 5u);
    EXPECT_EQ(dense.output_dim(), 2u);
    Backbone plain(3, {{2, 2}, false});
    EXPECT_EQ(plain.block_input_dim(1), 2u);
    EXPECT_THROW(dense.forward(Tensor(1, 4)), std::invalid_argument);
}

TEST(Loss, ClosedForms) {
    const std::vector<std::size_t> t0{0};
    const std::vector<double> w11{1, 1}, w21{2, 1}, w3{1, 1, 1};
    EXPECT_NEAR(weighted_ce(Tensor(1, 2), t0, w11).loss, std::log(2.0), 1e-15);
    EXPECT_NEAR(weighted_ce(Tensor(1, 2), t0, w21).loss, 2 * std::log(2.0), 1e-15);
    Tensor z(1, 3);
    z(0, 0) = 5.0;
    const double expected = std::log1p(2.0 * std::exp(-5.0));
    EXPECT_NEAR(weighted_ce(z, t0, w3).loss, expected, 1e-15);
    EXPECT_NEAR(expected, 0.013385, 1e-6);
}

TEST(Loss, MatchesOracleAndGradientFormula) {
    const auto z = random_tensor(4, 5, 11);
    const std::vector<std::size_t> y{0, 3, 4, 3};
    const std::vector<double> w{0.5, 1, 1, 2, 3};
    const auto lg = weighted_ce(z, y, w);
    double expected = 0.0;
    for (std::size_t i = 0; i < 4; ++i) {
        std::vector<double> row(z.row(i).begin(), z.row(i).end());
        expected += w[y[i]] * oracle::cross_entropy(row, y[i]);
    }
    EXPECT_NEAR(lg.loss, expected / 4.0, 1e-13);
    for (std::size_t i = 0; i < 4; ++i) {
        double denom = 0.0;
        for (double v : z.row(i)) {
            denom += std::exp(v);
        }
        for (std::size_t k = 0; k < 5; ++k) {
            const double p = std::exp(z(i, k)) / denom;
            EXPECT_NEAR(lg.dlogits(i, k), w[y[i]] * (p - (k == y[i])) / 4.0, 1e-15);
        }
    }
}

TEST(Loss, StableForLargeLogitsAndRejectsNonFinite) {
    Tensor z(1, 2);
    z(0, 0) = 1000.0;
    const std::vector<std::size_t> y{1};
    const std::vector<double> w{1, 1};
    EXPECT_NEAR(weighted_ce(z, y, w).loss, 1000.0, 1e-9);
    z(0, 1) = NAN;
    EXPECT_THROW(weighted_ce(z, y, w), std::domain_error);
}

TEST(Softmax, RowsSumToOne) {
    const auto p = softmax_rows(random_tensor(5, 7, 13));
    for (std::size_t r = 0; r < 5; ++r) {
        double s = 0.0;
        for (double v : p.row(r)) {
            s += v;
        }
        EXPECT_NEAR(s, 1.0, 1e-15);
    }
}

TEST(Adam, ZeroGradientAndZeroLr) {
    Param p("p", 2, 2);
    p.value = random_tensor(2, 2, 17);
    const auto before = p.value;
    Adam opt({&p});
    opt.step(0.01);
    EXPECT_EQ(p.value, before);
    EXPECT_EQ(opt.steps(), 1u);
    p.grad.fill(3.0);
    opt.step(0.0);
    EXPECT_EQ(p.value, before);
    EXPECT_EQ(opt.steps(), 2u);
}

TEST(Adam, FirstStepMagnitudeIsLr) {
    Param p("p", 1, 3);
    p.grad.values()[0] = 0.3;
    p.grad.values()[1] = -20.0;
    p.grad.values()[2] = 1e-3;
    Adam opt({&p});
    opt.step(0.01);
    // t=1: m_hat = g, v_hat = g^2  =>  delta = -lr * g / (|g| + eps)
    for (std::size_t k = 0; k < 3; ++k) {
        const double g = p.grad.values()[k];
        EXPECT_NEAR(p.value.values()[k], -0.01 * g / (std::abs(g) + 1e-8), 1e-15);
    }
}

TEST(Adam, SecondStepFollowsRecurrence) {
    Param p("p", 1, 1);
    Adam opt({&p});
    p.grad.values()[0] = 1.0;
    opt.step(0.1);
    p.grad.values()[0] = -2.0;
    opt.step(0.1);
    const double m = 0.9 * (0.1 * 1.0) + 0.1 * -2.0;
    const double v = 0.999 * (0.001 * 1.0) + 0.001 * 4.0;
    const double mh = m / (1 - 0.81);
    const double vh = v / (1 - 0.999 * 0.999);
    const double expected = -0.1 * 1.0 / (1.0 + 1e-8) - 0.1 * mh / (std::sqrt(vh) + 1e-8);
    EXPECT_NEAR(p.value.values()[0], expected, 1e-15);
}

TEST(Adam, RejectsNonFiniteGradient) {
    Param p("p", 1, 1);
    Adam opt({&p});
    p.grad.values()[0] = INFINITY;
    EXPECT_THROW(opt.step(0.01), std::runtime_error);
}

TEST(Schedule, StepDecay) {
    LrSchedule s;
    EXPECT_DOUBLE_EQ(lr_at_epoch(s, 0), 0.01);
    EXPECT_DOUBLE_EQ(lr_at_epoch(s, 19), 0.01);
    EXPECT_DOUBLE_EQ(lr_at_epoch(s, 20), 0.01 / 3.0);
    EXPECT_DOUBLE_EQ(lr_at_epoch(s, 40), 0.01 / 9.0);
    EXPECT_DOUBLE_EQ(lr_at_epoch(s, 45), 0.01 / 9.0);
}

TEST(GradCheck, LinearSoftmaxModel) {
    LinearLayer layer("lin", 4, 3);
    SplitMix64 rng(5);
    layer.init(rng);
    const auto x = random_tensor(6, 4, 19);
    const std::vector<std::size_t> y{0, 1, 2, 2, 1, 0};
    const std::vector<double> w{1.0, 0.5, 2.0};
    std::vector<Param*> params;
    layer.collect(params);
    auto loss = [&] { return weighted_ce(layer.forward(x), y, w).loss; };
    auto analytic = [&] { layer.backward(x, weighted_ce(layer.forward(x), y, w).dlogits); };
    const auto r = grad_check(params, loss, analytic);
    EXPECT_LE(r.max_rel_error, 1e-6);
    EXPECT_EQ(r.checked, 4u * 3u + 3u);

    auto corrupted = [&] {
        analytic();
        for (auto* p : params) {
            for (auto& g : p->grad.values()) {
                g *= 2.0;
            }
        }
    };
    EXPECT_NEAR(grad_check(params, loss, corrupted).max_rel_error, 0.5, 1e-3);
}

TEST(GradCheck, BackboneWithRelu) {
    Backbone bb(5, {{6, 4}, true});
    SplitMix64 rng(21);
    bb.init(rng);
    const auto x = random_tensor(4, 5, 23);
    const auto target = random_tensor(4, 4, 29);
    std::vector<Param*> params;
    bb.collect(params);
    // Quadratic readout so every feature gets a gradient.
    auto loss = [&] {
        const auto f = bb.forward(x);
        double s = 0.0;
        for (std::size_t i = 0; i < f.size(); ++i) {
            const double d = f.values()[i] - target.values()[i];
            s += 0.5 * d * d;
        }
        return s;
    };
    auto analytic = [&] {
        Backbone::Cache cache;
        const auto f = bb.forward(x, &cache);
        Tensor df(f.rows(), f.cols());
        for (std::size_t i = 0; i < f.size(); ++i) {
            df.values()[i] = f.values()[i] - target.values()[i];
        }
        bb.backward(cache, df);
    };
    EXPECT_LE(grad_check(params, loss, analytic).max_rel_error, 1e-6);
}

TEST(GradCheck, RelativeErrorGuard) {
    EXPECT_EQ(relative_error(0.0, 0.0), 0.0);
    EXPECT_DOUBLE_EQ(relative_error(2.0, 1.0), 0.5);
    EXPECT_DOUBLE_EQ(relative_error(1e-13, 0.0), 0.1);
}
