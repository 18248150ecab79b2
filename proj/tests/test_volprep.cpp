#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "hiertax/error.hpp"
#include "hiertax/volprep.hpp"
#include "oracles.hpp"

using namespace hiertax;

namespace {

Volume ramp(std::size_t n) {
    Volume v({n, n, n}, {1, 1, 1}, 0.0f, true);
    for (std::size_t i = 0; i < v.voxels.size(); ++i) {
        v.voxels[i] = static_cast<float>(i % 97) / 97.0f;
    }
    return v;
}

} // namespace

TEST(Resample, ConstantStaysConstant) {
    Volume v({7, 5, 3}, {0.7, 1.3, 2.5}, 100.0f);
    const auto out = resample_trilinear(v);
    EXPECT_EQ(out.dims, (Dims{5, 7, 8}));
    for (float f : out.voxels) {
        EXPECT_NEAR(f, 100.0, 1e-6);
    }
}

TEST(Resample, TwoVoxelRowAtTwoMillimetres) {
    Volume v({2, 1, 1}, {2, 1, 1});
    v.voxels = {0.0f, 10.0f};
    const auto out = resample_trilinear(v);
    ASSERT_EQ(out.dims, (Dims{4, 1, 1}));
    const std::vector<float> expected{0.0f, 2.5f, 7.5f, 10.0f};
    EXPECT_EQ(out.voxels, expected);
}

TEST(Resample, IdentitySpacing) {
    const auto v = ramp(6);
    const auto out = resample_trilinear(v);
    ASSERT_EQ(out.dims, v.dims);
    for (std::size_t i = 0; i < v.voxels.size(); ++i) {
        EXPECT_NEAR(out.voxels[i], v.voxels[i], 1e-6);
    }
}

TEST(Resample, SeparableProductMatchesOneDimensionalOracle) {
    // Trilinear interpolation of g(x)h(y)k(z) factorizes into three 1-D lerps.
    const std::vector<double> g{1, 4, 2, 8, 5}, h{3, -1, 2}, k{0.5, 2, 7, 1};
    const Vec3 spacing{1.6, 2.5, 0.8};
    Volume v({g.size(), h.size(), k.size()}, spacing);
    for (std::size_t z = 0; z < k.size(); ++z) {
        for (std::size_t y = 0; y < h.size(); ++y) {
            for (std::size_t x = 0; x < g.size(); ++x) {
                v.at(x, y, z) = static_cast<float>(g[x] * h[y] * k[z]);
            }
        }
    }
    const auto out = resample_trilinear(v);
    auto u = [&](std::size_t i, int a) { return (static_cast<double>(i) + 0.5) / spacing[a] - 0.5; };
    for (std::size_t z = 0; z < out.dims[2]; ++z) {
        for (std::size_t y = 0; y < out.dims[1]; ++y) {
            for (std::size_t x = 0; x < out.dims[0]; ++x) {
                const double expected = oracle::lerp_clamped(g, u(x, 0)) * oracle::lerp_clamped(h, u(y, 1)) *
                                        oracle::lerp_clamped(k, u(z, 2));
                ASSERT_NEAR(out.at(x, y, z), expected, 1e-4 * std::max(1.0, std::abs(expected)));
            }
        }
    }
}

TEST(Resample, RejectsNonPositiveSpacing) {
    EXPECT_THROW(resample_trilinear(ramp(2), {1, 0, 1}), ValidationError);
}

TEST(Window, EndpointsClampAndMidpoint) {
    EXPECT_EQ(normalize_hu_value(-1024), -1.0);
    EXPECT_EQ(normalize_hu_value(400), 1.0);
    EXPECT_EQ(normalize_hu_value(1500), 1.0);
    EXPECT_EQ(normalize_hu_value(-3000), -1.0);
    EXPECT_DOUBLE_EQ(normalize_hu_value(-312), (2.0 * (-312 + 1024) / 1424.0) - 1.0);
    EXPECT_EQ(normalize_hu_value(-312), 0.0);
    EXPECT_THROW(normalize_hu_value(0, {400, 400}), ValidationError);
    Volume v({1, 1, 1}, {1, 1, 1}, -1024.0f);
    const auto n = normalize_hu(v);
    EXPECT_TRUE(n.normalized);
    EXPECT_EQ(n.voxels[0], -1.0f);
    EXPECT_THROW(normalize_hu(n), ValidationError);
}

TEST(Crop, InteriorHasNoPadding) {
    Volume v({100, 100, 100}, {1, 1, 1}, 0.5f, true);
    const auto c = crop_centered(v, Centroid{{50, 50, 50}});
    EXPECT_EQ(c.dims, (Dims{48, 48, 48}));
    for (float f : c.voxels) {
        ASSERT_EQ(f, 0.5f);
    }
}

TEST(Crop, CornerCentroidPadsLowSide) {
    Volume v({60, 60, 60}, {1, 1, 1}, 0.25f, true);
    const auto c = crop_centered(v, Centroid{{0, 0, 0}});
    // Count planes along each axis that are entirely padding.
    for (int axis = 0; axis < 3; ++axis) {
        std::size_t padded = 0;
        for (std::size_t p = 0; p < 48; ++p) {
            bool all_pad = true;
            for (std::size_t i = 0; i < 48 && all_pad; ++i) {
                for (std::size_t j = 0; j < 48 && all_pad; ++j) {
                    std::array<std::size_t, 3> ix{};
                    ix[static_cast<std::size_t>(axis)] = p;
                    ix[static_cast<std::size_t>((axis + 1) % 3)] = i;
                    ix[static_cast<std::size_t>((axis + 2) % 3)] = j;
                    all_pad = c.at(ix[0], ix[1], ix[2]) == kPadValue;
                }
            }
            padded += all_pad;
        }
        EXPECT_EQ(padded, 23u) << "axis " << axis;
    }
    EXPECT_EQ(c.at(23, 23, 23), 0.25f);
    EXPECT_EQ(c.at(22, 23, 23), kPadValue);
}

TEST(Crop, ConstantPadVolume) {
    Volume v({30, 30, 30}, {1, 1, 1}, -1.0f, true);
    for (float f : crop_centered(v, Centroid{{3, 29, 12}}).voxels) {
        ASSERT_EQ(f, -1.0f);
    }
    EXPECT_THROW(crop_centered(v, Centroid{{NAN, 0, 0}}), ValidationError);
}

TEST(Augment, IdentityDraw) {
    const auto v = ramp(8);
    EXPECT_EQ(apply_augment(v, AugmentParams{}).voxels, v.voxels);
}

TEST(Augment, HalfTurnTwiceIsIdentity) {
    const auto v = ramp(8);
    for (int axis = 0; axis < 3; ++axis) {
        AugmentParams p;
        p.axis = axis;
        p.quarter_turns = 2;
        EXPECT_EQ(apply_augment(apply_augment(v, p), p).voxels, v.voxels);
        p.quarter_turns = 1;
        auto w = v;
        for (int i = 0; i < 4; ++i) {
            w = apply_augment(w, p);
        }
        EXPECT_EQ(w.voxels, v.voxels);
    }
}

TEST(Augment, QuarterTurnMovesKnownVoxel) {
    Volume v({4, 4, 4}, {1, 1, 1}, 0.0f, true);
    v.at(3, 0, 1) = 1.0f;
    AugmentParams p;
    p.axis = 2;
    p.quarter_turns = 1;
    const auto r = apply_augment(v, p);
    // src[x] = n-1-dst[y], src[y] = dst[x]  =>  dst = (src[y], n-1-src[x], z)
    EXPECT_EQ(r.at(0, 0, 1), 1.0f);
    double sum = 0.0;
    for (float f : r.voxels) {
        sum += f;
    }
    EXPECT_EQ(sum, 1.0);
}

TEST(Augment, ShiftsComposeAwayFromShell) {
    const auto v = ramp(16);
    AugmentParams up;
    up.shift = {4, 4, 4};
    AugmentParams down;
    down.shift = {-4, -4, -4};
    const auto back = apply_augment(apply_augment(v, up), down);
    for (std::size_t z = 0; z < 16; ++z) {
        for (std::size_t y = 0; y < 16; ++y) {
            for (std::size_t x = 0; x < 16; ++x) {
                const bool shell = x >= 12 || y >= 12 || z >= 12;
                ASSERT_EQ(back.at(x, y, z), shell ? kPadValue : v.at(x, y, z));
            }
        }
    }
}

TEST(Augment, DrawsAreSeededAndInRange) {
    for (std::uint64_t s = 0; s < 200; ++s) {
        const auto p = draw_augment(s);
        ASSERT_GE(p.axis, 0);
        ASSERT_LE(p.axis, 2);
        ASSERT_GE(p.quarter_turns, 0);
        ASSERT_LE(p.quarter_turns, 3);
        for (int sh : p.shift) {
            ASSERT_LE(std::abs(sh), kMaxShift);
        }
    }
    const auto v = ramp(8);
    EXPECT_EQ(augment(v, 5).voxels, augment(v, 5).voxels);
}

TEST(Pool, ConstantGlobalMeanAndOneHot) {
    Volume c({48, 48, 48}, {1, 1, 1}, 0.3f, true);
    const auto f = featurize_pool(c);
    ASSERT_EQ(f.size(), 216u);
    for (double x : f) {
        EXPECT_NEAR(x, 0.3, 1e-7);
    }
    const auto v = ramp(48);
    double mean = 0.0;
    for (float x : v.voxels) {
        mean += x;
    }
    mean /= static_cast<double>(v.voxels.size());
    const auto g = featurize_pool(v, 48);
    ASSERT_EQ(g.size(), 1u);
    EXPECT_NEAR(g[0], mean, 1e-12);

    Volume one({48, 48, 48}, {1, 1, 1}, 0.0f, true);
    one.at(17, 3, 40) = 1.0f;
    const auto p = featurize_pool(one);
    const std::size_t cell = 17 / 8 + 6 * (3 / 8 + 6 * (40 / 8));
    for (std::size_t i = 0; i < p.size(); ++i) {
        EXPECT_EQ(p[i], i == cell ? 1.0 / 512.0 : 0.0);
    }
    EXPECT_THROW(featurize_pool(one, 7), ValidationError);
}

TEST(VolumeFile, RoundTrip) {
    auto v = ramp(5);
    v.spacing = {0.7, 0.7, 2.5};
    v.normalized = false;
    const auto back = decode_volume(encode_volume(v));
    EXPECT_EQ(back.dims, v.dims);
    EXPECT_EQ(back.spacing, v.spacing);
    EXPECT_EQ(back.voxels, v.voxels);
    EXPECT_FALSE(back.normalized);
    auto bytes = encode_volume(v);
    bytes.pop_back();
    EXPECT_THROW(decode_volume(bytes), ValidationError);
}

TEST(Centroids, ParseWithAndWithoutLeaf) {
    const auto a = load_centroids("id,x_mm,y_mm,z_mm\nn1,1.5,2,3\n");
    EXPECT_EQ(a.at("n1").centroid.position, (Vec3{1.5, 2, 3}));
    EXPECT_TRUE(a.at("n1").leaf.empty());
    const auto b = load_centroids("id,x_mm,y_mm,z_mm,leaf\nn1,0,0,0,H4a\n");
    EXPECT_EQ(b.at("n1").leaf, "H4a");
    EXPECT_THROW(load_centroids("id,x,y,z\n"), ValidationError);
    EXPECT_THROW(load_centroids("id,x_mm,y_mm,z_mm\nn1,0,0\n"), ValidationError);
    EXPECT_THROW(load_centroids("id,x_mm,y_mm,z_mm\nn1,0,0,0\nn1,1,1,1\n"), ValidationError);
}

TEST(Preprocess, ConstantVolumeGivesConstantRow) {
    Volume v({40, 40, 20}, {0.8, 0.8, 2.0}, -312.0f);
    const auto f = preprocess_volume(v, Centroid{{16, 16, 20}});
    ASSERT_EQ(f.size(), 216u);
    // The crop reaches past the volume, so padded cells average in -1.
    for (double x : f) {
        EXPECT_LE(x, 1e-6);
        EXPECT_GE(x, -1.0);
    }
    Volume big({60, 60, 60}, {1, 1, 1}, -312.0f);
    for (double x : preprocess_volume(big, Centroid{{30, 30, 30}})) {
        EXPECT_NEAR(x, 0.0, 1e-6);
    }
}

TEST(Preprocess, SphereIsDeterministic) {
    Volume v({50, 50, 30}, {0.9, 0.9, 1.5}, -900.0f);
    for (std::size_t z = 0; z < 30; ++z) {
        for (std::size_t y = 0; y < 50; ++y) {
            for (std::size_t x = 0; x < 50; ++x) {
                const double dx = x * 0.9 - 22.5, dy = y * 0.9 - 22.5, dz = z * 1.5 - 22.5;
                if (dx * dx + dy * dy + dz * dz < 64.0) {
                    v.at(x, y, z) = 40.0f;
                }
            }
        }
    }
    const auto a = preprocess_volume(v, Centroid{{22.5, 22.5, 22.5}});
    const auto b = preprocess_volume(v, Centroid{{22.5, 22.5, 22.5}});
    EXPECT_EQ(a, b);
    EXPECT_GT(*std::max_element(a.begin(), a.end()), *std::min_element(a.begin(), a.end()));
}
