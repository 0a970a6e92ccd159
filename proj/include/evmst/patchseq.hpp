#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "evmst/common.hpp"
#include "evmst/stmap.hpp"

namespace evmst {

inline constexpr int kPatchSide = 16;
inline constexpr int kPatchDim = kPatchSide * kPatchSide * kMapChans;  // 768
inline constexpr int kSeqLen = kMapCols;                               // 196 tokens

/// 196 tokens of 768 values each; token k is built from map column k alone and
/// keeps k as its frame position.
struct PatchSequence {
    std::vector<double> values;  // token-major: token * 768 + (row*16 + col)*3 + channel

    PatchSequence() : values(static_cast<std::size_t>(kSeqLen) * kPatchDim, 0.0) {}

    double& at(int token, int idx) {
        return values[static_cast<std::size_t>(token) * kPatchDim + static_cast<std::size_t>(idx)];
    }
    double at(int token, int idx) const {
        return values[static_cast<std::size_t>(token) * kPatchDim + static_cast<std::size_t>(idx)];
    }
};

/// Linearly interpolates each channel's 60 samples onto 256 points (target j
/// reads source position j*59/255, so both endpoints align exactly) and lays
/// them out row-major as a 16x16 grid with the 3 channels stacked last.
inline std::array<double, kPatchDim> column_to_patch(const std::array<double, kGridRows * 3>& column) {
    std::array<double, kPatchDim> patch{};
    for (int c = 0; c < kMapChans; ++c) {
        for (int j = 0; j < kPatchSide * kPatchSide; ++j) {
            const double pos = static_cast<double>(j) * (kGridRows - 1) / 255.0;
            const int i0 = std::min(static_cast<int>(pos), kGridRows - 2);
            const double f = pos - i0;
            const double a = column[static_cast<std::size_t>(i0 * 3 + c)];
            const double b = column[static_cast<std::size_t>((i0 + 1) * 3 + c)];
            patch[static_cast<std::size_t>(j * 3 + c)] = a + f * (b - a);
        }
    }
    return patch;
}

inline PatchSequence map_to_patches(const MEMSTmap& map) {
    PatchSequence seq;
    std::array<double, kGridRows * 3> column{};
    for (int k = 0; k < kSeqLen; ++k) {
        for (int row = 0; row < kGridRows; ++row)
            for (int c = 0; c < kMapChans; ++c)
                column[static_cast<std::size_t>(row * 3 + c)] =
                    static_cast<double>(map.at(row, k, c));
        const auto patch = column_to_patch(column);
        for (int i = 0; i < kPatchDim; ++i) seq.at(k, i) = patch[static_cast<std::size_t>(i)];
    }
    return seq;
}

/// Tiles the 196 patches into a 224x224 image (raster order, values scaled to
/// 8-bit) for eyeballing what the model actually consumes.
inline Image patches_to_image(const PatchSequence& seq) {
    Image img(14 * kPatchSide, 14 * kPatchSide);
    for (int k = 0; k < kSeqLen; ++k) {
        const int tile_y = (k / 14) * kPatchSide;
        const int tile_x = (k % 14) * kPatchSide;
        for (int r = 0; r < kPatchSide; ++r)
            for (int col = 0; col < kPatchSide; ++col)
                for (int c = 0; c < kMapChans; ++c)
                    img.at(tile_y + r, tile_x + col, c) =
                        255.0 * seq.at(k, (r * kPatchSide + col) * 3 + c);
    }
    return img;
}

}  // namespace evmst
