#include <gtest/gtest.h>

#include <evmst/patchseq.hpp>

#include <algorithm>
#include <random>

using namespace evmst;

namespace {

MEMSTmap random_map(std::uint64_t seed) {
    Rng rng(seed);
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    MEMSTmap map;
    for (float& v : map.values) v = static_cast<float>(dist(rng));
    return map;
}

}  // namespace

TEST(PatchSequence, HasExpectedShape) {
    PatchSequence seq;
    EXPECT_EQ(seq.values.size(), 196u * 768u);
    EXPECT_EQ(kPatchDim, 768);
    EXPECT_EQ(kSeqLen, 196);
}

TEST(MapToPatches, ConstantMapYieldsConstantPatches) {
    MEMSTmap map;
    for (float& v : map.values) v = 0.25f;
    PatchSequence seq = map_to_patches(map);
    for (double v : seq.values) EXPECT_EQ(v, 0.25);
}

TEST(MapToPatches, ResamplesARampOntoTheUnitRamp) {
    // source rows carry i/59, so linear interpolation must reproduce j/255 at
    // every target index: exactly at the endpoints, within rounding inside
    MEMSTmap map;
    for (int row = 0; row < kGridRows; ++row)
        for (int k = 0; k < kMapCols; ++k)
            for (int c = 0; c < kMapChans; ++c)
                map.at(row, k, c) = static_cast<float>(row / 59.0);

    PatchSequence seq = map_to_patches(map);
    for (int k : {0, 42, 195})
        for (int c = 0; c < kMapChans; ++c) {
            EXPECT_EQ(seq.at(k, 0 * 3 + c), 0.0);
            EXPECT_EQ(seq.at(k, 255 * 3 + c), 1.0);
            // interior values carry the float quantization of the stored map
            for (int j = 1; j < 255; ++j)
                EXPECT_NEAR(seq.at(k, j * 3 + c), j / 255.0, 1e-6);
        }
}

TEST(MapToPatches, InterpolationStaysInsideTheSourceRange) {
    MEMSTmap map = random_map(61);
    PatchSequence seq = map_to_patches(map);
    for (int k = 0; k < kSeqLen; ++k)
        for (int c = 0; c < kMapChans; ++c) {
            float lo = 1.0f, hi = 0.0f;
            for (int row = 0; row < kGridRows; ++row) {
                lo = std::min(lo, map.at(row, k, c));
                hi = std::max(hi, map.at(row, k, c));
            }
            for (int j = 0; j < 256; ++j) {
                const double v = seq.at(k, j * 3 + c);
                EXPECT_GE(v, static_cast<double>(lo) - 1e-12);
                EXPECT_LE(v, static_cast<double>(hi) + 1e-12);
            }
        }
}

TEST(MapToPatches, TokensDependOnlyOnTheirOwnColumn) {
    MEMSTmap a = random_map(67);
    MEMSTmap b = random_map(71);
    for (int row = 0; row < kGridRows; ++row)
        for (int c = 0; c < kMapChans; ++c) b.at(row, 5, c) = a.at(row, 5, c);

    PatchSequence sa = map_to_patches(a);
    PatchSequence sb = map_to_patches(b);
    for (int i = 0; i < kPatchDim; ++i) EXPECT_EQ(sa.at(5, i), sb.at(5, i));
}

TEST(MapToPatches, SwappingColumnsSwapsTokens) {
    MEMSTmap a = random_map(73);
    MEMSTmap b = a;
    for (int row = 0; row < kGridRows; ++row)
        for (int c = 0; c < kMapChans; ++c) std::swap(b.at(row, 3, c), b.at(row, 7, c));

    PatchSequence sa = map_to_patches(a);
    PatchSequence sb = map_to_patches(b);
    for (int i = 0; i < kPatchDim; ++i) {
        EXPECT_EQ(sb.at(3, i), sa.at(7, i));
        EXPECT_EQ(sb.at(7, i), sa.at(3, i));
    }
    for (int i = 0; i < kPatchDim; ++i) EXPECT_EQ(sb.at(11, i), sa.at(11, i));
}

TEST(MapToPatches, ChannelsStayInterleavedChannelsLast) {
    MEMSTmap map;
    for (int row = 0; row < kGridRows; ++row)
        for (int k = 0; k < kMapCols; ++k) {
            map.at(row, k, 0) = 0.25f;
            map.at(row, k, 1) = static_cast<float>(row / 59.0);
            map.at(row, k, 2) = 0.75f;
        }
    PatchSequence seq = map_to_patches(map);
    for (int j = 0; j < 256; ++j) {
        EXPECT_EQ(seq.at(9, j * 3 + 0), 0.25);
        EXPECT_NEAR(seq.at(9, j * 3 + 1), j / 255.0, 1e-6);
        EXPECT_EQ(seq.at(9, j * 3 + 2), 0.75);
    }
}

TEST(PatchesToImage, TilesTokensInRasterOrder) {
    PatchSequence seq;
    for (int k = 0; k < kSeqLen; ++k)
        for (int i = 0; i < kPatchDim; ++i) seq.at(k, i) = k / 195.0;

    Image img = patches_to_image(seq);
    ASSERT_EQ(img.width, 224);
    ASSERT_EQ(img.height, 224);
    EXPECT_DOUBLE_EQ(img.at(0, 0, 0), 0.0);
    EXPECT_DOUBLE_EQ(img.at(223, 223, 0), 255.0);
    // token 44 sits at tile row 3, column 2
    EXPECT_DOUBLE_EQ(img.at(3 * 16 + 5, 2 * 16 + 4, 1), 255.0 * 44 / 195.0);
}

TEST(PatchesToImage, LaysPatchValuesOutRowMajor) {
    PatchSequence seq;
    for (int r = 0; r < kPatchSide; ++r)
        for (int col = 0; col < kPatchSide; ++col)
            for (int c = 0; c < kMapChans; ++c)
                seq.at(0, (r * kPatchSide + col) * 3 + c) = (r * kPatchSide + col) / 255.0;

    Image img = patches_to_image(seq);
    EXPECT_DOUBLE_EQ(img.at(0, 0, 0), 0.0);
    EXPECT_DOUBLE_EQ(img.at(0, 1, 0), 255.0 / 255.0);
    EXPECT_DOUBLE_EQ(img.at(1, 0, 0), 255.0 * 16 / 255.0);
    EXPECT_DOUBLE_EQ(img.at(15, 15, 2), 255.0);
}
