#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "hiertax/data.hpp"

using namespace hiertax;

namespace {

std::shared_ptr<const Taxonomy> pulmonary() {
    static const auto t = std::make_shared<const Taxonomy>(Taxonomy::pulmonary_radpath());
    return t;
}

std::shared_ptr<const Taxonomy> two_leaf() {
    static const auto t = std::make_shared<const Taxonomy>(Taxonomy::parse("R\t-\tr\nA\tR\ta\nB\tR\tb\n"));
    return t;
}

GeneratorConfig fifth_scale() {
    GeneratorConfig g;
    g.leaf_counts = counts_from_taxonomy(*pulmonary(), 0.2);
    return g;
}

RoutedLabel one_head(TargetKind kind, std::size_t slot) { return {HeadTarget{kind, slot}}; }

} // namespace

TEST(Generator, FifthScaleProportions) {
    const auto g = fifth_scale();
    EXPECT_EQ(g.leaf_counts.at(NodeTag("H4a")), 418u);
    EXPECT_EQ(g.leaf_counts.at(NodeTag("H4b")), 343u);
    EXPECT_EQ(g.leaf_counts.at(NodeTag("H1c")), 113u);
    const auto d = generate_synthetic(pulmonary(), g);
    // Leaf counts sum to 5134; per-leaf rounding moves the total by at most a few samples.
    EXPECT_NEAR(static_cast<double>(d.size()), 5134 * 0.2, 3.0);
    EXPECT_EQ(d.feature_dim(), 32u);
}

TEST(Generator, DeterministicForSeed) {
    const auto a = generate_synthetic(pulmonary(), fifth_scale());
    const auto b = generate_synthetic(pulmonary(), fifth_scale());
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        ASSERT_EQ(a[i].features, b[i].features);
    }
    auto other = fifth_scale();
    other.seed = 43;
    EXPECT_NE(generate_synthetic(pulmonary(), other)[0].features, a[0].features);
}

TEST(Generator, ZeroNoiseGivesPrototypes) {
    auto g = fifth_scale();
    g.noise_sigma = 0.0;
    const auto d = generate_synthetic(pulmonary(), g);
    const auto proto = class_prototypes(*pulmonary(), g);
    for (const auto& s : d.samples()) {
        ASSERT_EQ(s.features, proto[s.leaf]);
    }
}

TEST(Generator, PrototypeOffsetsHaveLevelScaleLength) {
    const auto g = fifth_scale();
    const auto& t = *pulmonary();
    const auto proto = class_prototypes(t, g);
    for (NodeIndex i = 0; i < t.size(); ++i) {
        const auto& n = t.node(i);
        if (!n.parent) {
            for (double v : proto[i]) {
                EXPECT_EQ(v, 0.0);
            }
            continue;
        }
        double len2 = 0.0;
        for (std::size_t k = 0; k < g.feature_dim; ++k) {
            const double diff = proto[i][k] - proto[*n.parent][k];
            len2 += diff * diff;
        }
        EXPECT_NEAR(std::sqrt(len2), g.level_scales[static_cast<std::size_t>(n.level - 1)], 1e-12) << n.tag.str();
    }
}

TEST(Generator, RejectsBadConfigs) {
    GeneratorConfig g;
    g.leaf_counts[NodeTag("H4a")] = 0;
    EXPECT_THROW(generate_synthetic(pulmonary(), g), ValidationError);
    g.leaf_counts[NodeTag("H2a")] = 3;
    EXPECT_THROW(generate_synthetic(pulmonary(), g), ValidationError);
    auto ok = fifth_scale();
    ok.noise_sigma = -1.0;
    EXPECT_THROW(generate_synthetic(pulmonary(), ok), ValidationError);
    ok.noise_sigma = 1.0;
    ok.level_scales = {1.0, 1.0};
    EXPECT_THROW(generate_synthetic(pulmonary(), ok), ValidationError);
}

TEST(Split, DivisibleLeaf) {
    GeneratorConfig g;
    g.feature_dim = 2;
    g.leaf_counts = {{NodeTag("A"), 100}, {NodeTag("B"), 5}};
    const auto d = stratified_split(generate_synthetic(two_leaf(), g), 5, 1);
    std::map<int, int> sizes;
    for (const auto& s : d.samples()) {
        if (s.leaf == two_leaf()->index_of("A")) {
            sizes[*s.split] += 1;
        }
    }
    for (int k = 0; k < 5; ++k) {
        EXPECT_EQ(sizes[k], 20);
    }
}

TEST(Split, RemainderLeaf) {
    GeneratorConfig g;
    g.feature_dim = 2;
    g.leaf_counts = {{NodeTag("A"), 3}, {NodeTag("B"), 10}};
    const auto d = stratified_split(generate_synthetic(two_leaf(), g), 5, 9);
    std::map<int, int> sizes;
    for (const auto& s : d.samples()) {
        if (s.leaf == two_leaf()->index_of("A")) {
            sizes[*s.split] += 1;
        }
    }
    int ones = 0;
    int zeros = 0;
    for (int k = 0; k < 5; ++k) {
        ones += sizes[k] == 1;
        zeros += sizes[k] == 0;
    }
    EXPECT_EQ(ones, 3);
    EXPECT_EQ(zeros, 2);
}

TEST(Split, EveryLeafBalancedOnPulmonaryProportions) {
    const auto d = stratified_split(generate_synthetic(pulmonary(), fifth_scale()), 5, 42);
    EXPECT_TRUE(d.fully_split());
    std::map<NodeIndex, std::array<int, 5>> per_leaf;
    for (const auto& s : d.samples()) {
        per_leaf[s.leaf][static_cast<std::size_t>(*s.split)] += 1;
    }
    for (const auto& [leaf, sizes] : per_leaf) {
        const auto [lo, hi] = std::minmax_element(sizes.begin(), sizes.end());
        EXPECT_LE(*hi - *lo, 1) << pulmonary()->tag(leaf).str();
    }
    EXPECT_THROW(stratified_split(d, 1, 0), ValidationError);
    EXPECT_EQ(train_subsets(5, 4), (std::vector<int>{0, 1, 2, 3}));
}

TEST(ClassWeights, InverseFrequency) {
    const std::vector<std::size_t> widths{2};
    std::vector<RoutedLabel> routed;
    for (int i = 0; i < 50; ++i) {
        routed.push_back(one_head(TargetKind::Class, 0));
        routed.push_back(one_head(TargetKind::Class, 1));
    }
    auto w = class_weights(routed, widths);
    EXPECT_DOUBLE_EQ(w.per_head[0][0], 1.0);
    EXPECT_DOUBLE_EQ(w.per_head[0][1], 1.0);

    routed.clear();
    for (int i = 0; i < 80; ++i) {
        routed.push_back(one_head(TargetKind::Class, 0));
    }
    for (int i = 0; i < 20; ++i) {
        routed.push_back(one_head(TargetKind::Class, 1));
    }
    w = class_weights(routed, widths);
    EXPECT_DOUBLE_EQ(w.per_head[0][0], 100.0 / (2 * 80));
    EXPECT_DOUBLE_EQ(w.per_head[0][1], 100.0 / (2 * 20));
}

TEST(ClassWeights, LeakySlotCounts) {
    const std::vector<std::size_t> widths{3};
    std::vector<RoutedLabel> routed;
    for (int i = 0; i < 30; ++i) {
        routed.push_back(one_head(TargetKind::Class, 0));
        routed.push_back(one_head(TargetKind::Class, 1));
    }
    for (int i = 0; i < 60; ++i) {
        routed.push_back(one_head(TargetKind::Leaky, 2));
    }
    const auto w = class_weights(routed, widths);
    EXPECT_DOUBLE_EQ(w.per_head[0][0], 120.0 / (3 * 30));
    EXPECT_DOUBLE_EQ(w.per_head[0][1], 120.0 / (3 * 30));
    EXPECT_DOUBLE_EQ(w.per_head[0][2], 120.0 / (3 * 60));
}

TEST(ClassWeights, EmptyClassAndInactiveHead) {
    const std::vector<std::size_t> widths{3, 2};
    std::vector<RoutedLabel> routed{
        {HeadTarget{TargetKind::Class, 0}, HeadTarget{}},
        {HeadTarget{TargetKind::Class, 1}, HeadTarget{}},
    };
    const auto w = class_weights(routed, widths);
    EXPECT_EQ(w.per_head[0][2], 0.0);
    EXPECT_TRUE(w.active[0]);
    EXPECT_FALSE(w.active[1]);
    EXPECT_EQ(w.per_head[1], (std::vector<double>{0.0, 0.0}));
    EXPECT_EQ(w.warnings.size(), 1u);
}

TEST(Csv, WellFormedFile) {
    const auto d = load_csv("id,leaf,split,f0,f1\na,A,0,1.5,-2\nb,B,-,0,3e-3\n", two_leaf());
    ASSERT_EQ(d.size(), 2u);
    EXPECT_EQ(d[0].split, 0);
    EXPECT_FALSE(d[1].split.has_value());
    EXPECT_EQ(d[1].features[1], 3e-3);
    EXPECT_FALSE(d.fully_split());
}

TEST(Csv, ErrorsNameTheRow) {
    try {
        load_csv("id,leaf,split,f0\na,A,0,1\nb,H9z,0,1\n", two_leaf());
        FAIL();
    } catch (const ValidationError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("H9z"), std::string::npos);
        EXPECT_NE(msg.find("3"), std::string::npos);
    }
    EXPECT_THROW(load_csv("id,leaf,split,f0,f1\na,A,0,1\n", two_leaf()), ValidationError);
    EXPECT_THROW(load_csv("id,leaf,split,f0\na,A,0,nan\n", two_leaf()), ValidationError);
    EXPECT_THROW(load_csv("id,leaf,split,f0\na,R,0,1\n", two_leaf()), ValidationError);
    EXPECT_THROW(load_csv("id,leaf,split,f0\na,A,0,1\na,B,0,1\n", two_leaf()), ValidationError);
}

TEST(Csv, WriteLoadIsIdentity) {
    const auto d = stratified_split(generate_synthetic(pulmonary(), fifth_scale()), 5, 3);
    const auto text = write_csv(d);
    const auto back = load_csv(text, pulmonary());
    ASSERT_EQ(back.size(), d.size());
    for (std::size_t i = 0; i < d.size(); ++i) {
        ASSERT_EQ(back[i].id, d[i].id);
        ASSERT_EQ(back[i].leaf, d[i].leaf);
        ASSERT_EQ(back[i].split, d[i].split);
        ASSERT_EQ(back[i].features, d[i].features);
    }
    EXPECT_EQ(write_csv(back), text);
}

TEST(Csv, SelectSplits) {
    const auto d = stratified_split(generate_synthetic(pulmonary(), fifth_scale()), 5, 3);
    const std::array<int, 1> test{4};
    const auto t = d.select_splits(test);
    for (const auto& s : t.samples()) {
        EXPECT_EQ(s.split, 4);
    }
    const auto train = train_subsets(5, 4);
    EXPECT_EQ(t.size() + d.select_splits(train).size(), d.size());
}
