#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <numeric>
#include <vector>

#include "hiertax/rng.hpp"

using hiertax::SplitMix64;

TEST(Rng, MatchesPublishedSplitMixSequence) {
    // Reference outputs of the canonical splitmix64.c for seed 1234567.
    SplitMix64 rng(1234567);
    const std::array<std::uint64_t, 5> expected{6457827717110365317ULL, 3203168211198807973ULL,
                                                9817491932198370423ULL, 4593380528125082431ULL,
                                                16408922859458223821ULL};
    for (auto e : expected) {
        EXPECT_EQ(rng.next(), e);
    }
}

TEST(Rng, StreamsAreIndependentPerPurpose) {
    auto a = SplitMix64::stream(42, "noise");
    auto b = SplitMix64::stream(42, "split");
    auto c = SplitMix64::stream(42, "noise");
    const auto first = a.next();
    EXPECT_NE(first, b.next());
    EXPECT_EQ(first, c.next());
    EXPECT_NE(hiertax::derive_seed(42, "noise"), hiertax::derive_seed(43, "noise"));
}

TEST(Rng, Fnv1aKnownVectors) {
    EXPECT_EQ(hiertax::fnv1a64(""), 0xcbf29ce484222325ULL);
    EXPECT_EQ(hiertax::fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
}

TEST(Rng, UniformAndBelowStayInRange) {
    SplitMix64 rng(7);
    std::array<int, 7> hist{};
    for (int i = 0; i < 70000; ++i) {
        const double u = rng.uniform();
        ASSERT_GE(u, 0.0);
        ASSERT_LT(u, 1.0);
        hist[rng.below(7)] += 1;
    }
    for (int h : hist) {
        EXPECT_NEAR(h, 10000, 500);
    }
    for (int i = 0; i < 1000; ++i) {
        const auto v = rng.between(-4, 4);
        ASSERT_GE(v, -4);
        ASSERT_LE(v, 4);
    }
    EXPECT_THROW(rng.below(0), std::invalid_argument);
}

TEST(Rng, NormalMomentsAreStandard) {
    SplitMix64 rng(99);
    const int n = 200000;
    double sum = 0.0;
    double sq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double z = rng.normal();
        ASSERT_TRUE(std::isfinite(z));
        sum += z;
        sq += z * z;
    }
    EXPECT_NEAR(sum / n, 0.0, 0.01);
    EXPECT_NEAR(sq / n, 1.0, 0.02);
}

TEST(Rng, ShuffleIsAPermutationAndSeedStable) {
    std::vector<int> a(50);
    std::iota(a.begin(), a.end(), 0);
    auto b = a;
    SplitMix64 r1(5);
    SplitMix64 r2(5);
    hiertax::shuffle(std::span<int>(a), r1);
    hiertax::shuffle(std::span<int>(b), r2);
    EXPECT_EQ(a, b);
    auto sorted = a;
    std::sort(sorted.begin(), sorted.end());
    for (int i = 0; i < 50; ++i) {
        EXPECT_EQ(sorted[static_cast<std::size_t>(i)], i);
    }
    EXPECT_NE(a, sorted);
}
