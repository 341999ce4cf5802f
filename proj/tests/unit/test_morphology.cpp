#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles/oracles.hpp"
#include "rimlab/morphology.hpp"

using namespace rimlab;

TEST(DistanceToEdge, SingleVoxelIsOneSpacingFromBackground) {
    Mask3D m({{3, 3, 3}, {0.5, 2.0, 3.0}}, 0);
    m(1, 1, 1) = 1;
    const auto dm = distance_to_edge(m);
    EXPECT_DOUBLE_EQ(dm.d(1, 1, 1), 0.5);
    EXPECT_DOUBLE_EQ(dm.d_max, 0.5);
    EXPECT_DOUBLE_EQ(dm.d(0, 0, 0), 0.0);
}

TEST(DistanceToEdge, FullArrayUsesTheOutsideAsBackground) {
    Mask3D m({{5, 1, 1}, {1, 1, 1}}, 1);
    const auto dm = distance_to_edge(m);
    EXPECT_DOUBLE_EQ(dm.d(0, 0, 0), 1.0);
    EXPECT_DOUBLE_EQ(dm.d(2, 0, 0), 1.0);
    Mask3D line({{5, 3, 3}, {1, 1, 1}}, 1);
    const auto dl = distance_to_edge(line);
    EXPECT_DOUBLE_EQ(dl.d(2, 1, 1), 2.0);
    EXPECT_DOUBLE_EQ(dl.d_max, 2.0);
}

TEST(DistanceToEdge, EmptyMaskGivesZeros) {
    Mask3D m({{4, 4, 4}, {1, 1, 1}}, 0);
    const auto dm = distance_to_edge(m);
    EXPECT_DOUBLE_EQ(dm.d_max, 0.0);
    for (double v : dm.d.values()) EXPECT_EQ(v, 0.0);
}

TEST(DistanceToEdge, DiagonalHoleInAnisotropicGrid) {
    Mask3D m({{7, 7, 3}, {1.0, 2.0, 3.0}}, 1);
    m(0, 0, 0) = 0;
    const auto dm = distance_to_edge(m);
    // (3, 3, 1): nearest outside position along x is 4 voxels away (4 mm), along y 4 voxels (8 mm),
    // along z 2 voxels (6 mm); the hole at (0, 0, 0) is farther.
    EXPECT_DOUBLE_EQ(dm.d(3, 3, 1), 4.0);
    EXPECT_DOUBLE_EQ(dm.d(1, 1, 1), std::min(2.0, std::sqrt(1.0 + 4.0 + 9.0)));
}

TEST(DistanceToEdge, MatchesBruteForceOnRandomMasks) {
    std::mt19937_64 rng(1234);
    std::uniform_real_distribution<double> fill(0.3, 0.95);
    for (int c = 0; c < 150; ++c) {
        const auto g = oracle::random_geometry(rng, 12, 6);
        const auto m = oracle::random_mask(rng, g.dims, g.spacing, fill(rng));
        const auto dm = distance_to_edge(m);
        const auto ref = oracle::brute_force_edt(m);
        double dmax = 0.0;
        for (std::size_t i = 0; i < m.size(); ++i) {
            ASSERT_NEAR(dm.d[i], ref[i], 1e-9) << "case " << c << " voxel " << i;
            dmax = std::max(dmax, ref[i]);
        }
        EXPECT_NEAR(dm.d_max, dmax, 1e-9);
    }
}

TEST(ConnectedComponents, HandFixture) {
    Mask3D m({{5, 5, 1}, {1, 1, 1}}, 0);
    m(0, 0, 0) = 1;
    m(1, 1, 0) = 1; // diagonal neighbour of (0,0)
    m(4, 4, 0) = 1;
    m(3, 0, 0) = 1;
    m(4, 0, 0) = 1;
    EXPECT_EQ(count_components(m, Connectivity::TwentySix), 3);
    EXPECT_EQ(count_components(m, Connectivity::Six), 4);
    const auto lab = connected_components(m);
    EXPECT_EQ(lab.count, 3);
    EXPECT_EQ(lab.labels(0, 0, 0), 1);
    EXPECT_EQ(lab.labels(1, 1, 0), 1);
    EXPECT_EQ(lab.labels(3, 0, 0), 2);
    EXPECT_EQ(lab.labels(4, 0, 0), 2);
    EXPECT_EQ(lab.labels(4, 4, 0), 3);
    EXPECT_EQ(lab.labels(2, 2, 0), 0);
}

TEST(ConnectedComponents, MatchesFloodFillOnRandomMasks) {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> fill(0.05, 0.6);
    for (int c = 0; c < 200; ++c) {
        const auto g = oracle::random_geometry(rng, 12, 6);
        const auto m = oracle::random_mask(rng, g.dims, g.spacing, fill(rng));
        for (bool full : {true, false}) {
            const auto lab = connected_components(m, full ? Connectivity::TwentySix : Connectivity::Six);
            const auto ref = oracle::flood_fill_sizes(m, full);
            std::vector<std::size_t> sizes(static_cast<std::size_t>(lab.count), 0);
            for (std::size_t i = 0; i < m.size(); ++i) {
                ASSERT_EQ(lab.labels[i] == 0, m[i] == 0);
                if (lab.labels[i] > 0) ++sizes[static_cast<std::size_t>(lab.labels[i] - 1)];
            }
            std::sort(sizes.begin(), sizes.end());
            ASSERT_EQ(sizes, ref) << "case " << c;
        }
    }
}

TEST(Erode6, StripsBoundaryVoxels) {
    Mask3D m({{5, 5, 5}, {1, 1, 1}}, 0);
    for (int z = 1; z < 4; ++z)
        for (int y = 1; y < 4; ++y)
            for (int x = 1; x < 4; ++x) m(x, y, z) = 1;
    const auto e = erode6(m);
    EXPECT_EQ(mask_stats(e).count, 1u);
    EXPECT_EQ(e(2, 2, 2), 1);
    Mask3D full({{3, 3, 3}, {1, 1, 1}}, 1);
    EXPECT_EQ(mask_stats(erode6(full)).count, 1u);
}
