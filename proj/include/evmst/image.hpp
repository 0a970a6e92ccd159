#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "evmst/common.hpp"

namespace evmst {

/// Interleaved RGB raster, values nominally in [0, 255]. Kept in doubles so
/// synthetic inputs and magnified intermediates stay exact; quantization to
/// 8 bits happens only at file boundaries.
struct Image {
    int width = 0;
    int height = 0;
    std::vector<double> data;  // height*width*3, row-major, channel interleaved

    Image() = default;
    Image(int w, int h, double fill = 0.0)
        : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3, fill) {}

    double& at(int y, int x, int c) { return data[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
    double at(int y, int x, int c) const { return data[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
    std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
};

struct FrameSequence {
    std::vector<Image> frames;
    int width = 0;
    int height = 0;
    double fps = 0.0;

    std::size_t frame_count() const { return frames.size(); }
};

inline void validate(const FrameSequence& seq) {
    require(!seq.frames.empty(), "frame sequence has zero frames");
    require(seq.fps > 0.0, "frame sequence fps must be positive");
    for (const auto& f : seq.frames)
        require(f.width == seq.width && f.height == seq.height,
                "inconsistent frame dimensions in sequence");
}

inline unsigned char quantize_u8(double v) {
    double r = std::nearbyint(v);
    if (r < 0.0) r = 0.0;
    if (r > 255.0) r = 255.0;
    return static_cast<unsigned char>(r);
}

// --- FSEQ raw container -------------------------------------------------------
// Little-endian header {magic "FSEQ", u32 version=1, u32 W, u32 H, u32 N,
// f32 fps} followed by N*H*W*3 bytes RGB row-major.

inline constexpr char kFseqMagic[5] = "FSEQ";
inline constexpr std::uint32_t kFseqVersion = 1;

inline void write_fseq(const std::string& path, const FrameSequence& seq) {
    validate(seq);
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) fail("cannot create file: " + path);
    write_magic(os, kFseqMagic);
    write_u32(os, kFseqVersion);
    write_u32(os, static_cast<std::uint32_t>(seq.width));
    write_u32(os, static_cast<std::uint32_t>(seq.height));
    write_u32(os, static_cast<std::uint32_t>(seq.frames.size()));
    write_f32(os, static_cast<float>(seq.fps));
    std::vector<unsigned char> row(static_cast<std::size_t>(seq.width) * seq.height * 3);
    for (const auto& f : seq.frames) {
        for (std::size_t i = 0; i < f.data.size(); ++i) row[i] = quantize_u8(f.data[i]);
        os.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
    }
    if (!os) fail("short write: " + path);
}

inline FrameSequence read_fseq(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) fail("cannot open file: " + path);
    expect_magic(is, kFseqMagic, "FSEQ");
    std::uint32_t version = read_u32(is);
    require(version == kFseqVersion, "unsupported FSEQ version");
    std::uint32_t w = read_u32(is);
    std::uint32_t h = read_u32(is);
    std::uint32_t n = read_u32(is);
    float fps = read_f32(is);
    require(w > 0 && h > 0, "FSEQ has empty dimensions");
    require(n > 0, "frame sequence has zero frames");
    require(fps > 0.0f, "FSEQ fps must be positive");
    FrameSequence seq;
    seq.width = static_cast<int>(w);
    seq.height = static_cast<int>(h);
    seq.fps = static_cast<double>(fps);
    std::vector<unsigned char> row(static_cast<std::size_t>(w) * h * 3);
    seq.frames.reserve(n);
    for (std::uint32_t t = 0; t < n; ++t) {
        is.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size()));
        if (!is) fail("truncated FSEQ payload: " + path);
        Image img(static_cast<int>(w), static_cast<int>(h));
        for (std::size_t i = 0; i < row.size(); ++i) img.data[i] = static_cast<double>(row[i]);
        seq.frames.push_back(std::move(img));
    }
    return seq;
}

// --- PPM (P6, maxval 255) ------------------------------------------------------

inline void write_ppm(const std::string& path, const Image& img) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) fail("cannot create file: " + path);
    os << "P6\n" << img.width << " " << img.height << "\n255\n";
    std::vector<unsigned char> raw(img.data.size());
    for (std::size_t i = 0; i < raw.size(); ++i) raw[i] = quantize_u8(img.data[i]);
    os.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!os) fail("short write: " + path);
}

inline Image read_ppm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) fail("cannot open file: " + path);
    std::string magic;
    is >> magic;
    require(magic == "P6", "unsupported PPM variant (want P6): " + path);
    auto next_token = [&is, &path]() {
        // header tokens may be separated by whitespace or # comments
        std::string tok;
        for (;;) {
            if (!(is >> tok)) fail("truncated PPM header: " + path);
            if (tok[0] == '#') {
                std::string rest;
                std::getline(is, rest);
                continue;
            }
            return tok;
        }
    };
    int w = std::stoi(next_token());
    int h = std::stoi(next_token());
    int maxval = std::stoi(next_token());
    require(w > 0 && h > 0, "PPM has empty dimensions: " + path);
    require(maxval == 255, "unsupported PPM maxval (want 255): " + path);
    is.get();  // single whitespace after maxval
    std::vector<unsigned char> raw(static_cast<std::size_t>(w) * h * 3);
    is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!is) fail("truncated PPM payload: " + path);
    Image img(w, h);
    for (std::size_t i = 0; i < raw.size(); ++i) img.data[i] = static_cast<double>(raw[i]);
    return img;
}

}  // namespace evmst
