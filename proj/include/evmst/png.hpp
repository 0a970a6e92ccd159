#pragma once

#include <zlib.h>

#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "evmst/common.hpp"
#include "evmst/image.hpp"

// Compact PNG reader/writer covering the subset this pipeline produces and
// consumes: 8-bit depth, grayscale / RGB / RGBA, non-interlaced. Palette and
// 16-bit files are rejected with a clear error.

namespace evmst {
namespace detail {

inline std::uint32_t be32(const unsigned char* p) {
    return (static_cast<std::uint32_t>(p[0]) << 24) | (static_cast<std::uint32_t>(p[1]) << 16) |
           (static_cast<std::uint32_t>(p[2]) << 8) | static_cast<std::uint32_t>(p[3]);
}

inline void put_be32(std::vector<unsigned char>& out, std::uint32_t v) {
    out.push_back(static_cast<unsigned char>((v >> 24) & 0xff));
    out.push_back(static_cast<unsigned char>((v >> 16) & 0xff));
    out.push_back(static_cast<unsigned char>((v >> 8) & 0xff));
    out.push_back(static_cast<unsigned char>(v & 0xff));
}

inline void put_chunk(std::vector<unsigned char>& out, const char type[5],
                      const unsigned char* data, std::size_t len) {
    put_be32(out, static_cast<std::uint32_t>(len));
    std::size_t start = out.size();
    out.insert(out.end(), type, type + 4);
    if (len > 0) out.insert(out.end(), data, data + len);
    std::uint32_t crc = static_cast<std::uint32_t>(
        ::crc32(0L, out.data() + start, static_cast<uInt>(4 + len)));
    put_be32(out, crc);
}

inline int paeth(int a, int b, int c) {
    int p = a + b - c;
    int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    if (pb <= pc) return b;
    return c;
}

}  // namespace detail

inline const unsigned char kPngSignature[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};

inline Image read_png(const std::string& path) {
    auto bytes = read_file_bytes(path);
    require(bytes.size() > 8 && std::memcmp(bytes.data(), kPngSignature, 8) == 0,
            "not a PNG file: " + path);

    std::size_t pos = 8;
    int width = 0, height = 0, bit_depth = 0, color_type = 0;
    std::vector<unsigned char> idat;
    bool saw_ihdr = false, saw_iend = false;
    while (pos + 8 <= bytes.size() && !saw_iend) {
        std::uint32_t len = detail::be32(&bytes[pos]);
        require(pos + 12 + len <= bytes.size(), "truncated PNG chunk: " + path);
        const char* type = reinterpret_cast<const char*>(&bytes[pos + 4]);
        const unsigned char* data = &bytes[pos + 8];
        if (std::memcmp(type, "IHDR", 4) == 0) {
            require(len == 13, "bad IHDR length: " + path);
            width = static_cast<int>(detail::be32(data));
            height = static_cast<int>(detail::be32(data + 4));
            bit_depth = data[8];
            color_type = data[9];
            require(data[12] == 0, "interlaced PNG not supported: " + path);
            require(bit_depth == 8, "only 8-bit PNG supported: " + path);
            require(color_type == 0 || color_type == 2 || color_type == 6,
                    "only gray/RGB/RGBA PNG supported: " + path);
            saw_ihdr = true;
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            idat.insert(idat.end(), data, data + len);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            saw_iend = true;
        }
        pos += 12 + len;
    }
    require(saw_ihdr && saw_iend && !idat.empty(), "incomplete PNG: " + path);
    require(width > 0 && height > 0, "PNG has empty dimensions: " + path);

    const int channels = color_type == 0 ? 1 : (color_type == 2 ? 3 : 4);
    const std::size_t stride = static_cast<std::size_t>(width) * channels;
    std::vector<unsigned char> raw(static_cast<std::size_t>(height) * (stride + 1));
    uLongf raw_len = static_cast<uLongf>(raw.size());
    int zrc = ::uncompress(raw.data(), &raw_len, idat.data(), static_cast<uLong>(idat.size()));
    require(zrc == Z_OK && raw_len == raw.size(), "PNG inflate failed: " + path);

    // undo per-scanline filters in place
    std::vector<unsigned char> prev(stride, 0);
    Image img(width, height);
    for (int y = 0; y < height; ++y) {
        unsigned char filter = raw[static_cast<std::size_t>(y) * (stride + 1)];
        unsigned char* row = &raw[static_cast<std::size_t>(y) * (stride + 1) + 1];
        for (std::size_t i = 0; i < stride; ++i) {
            int a = i >= static_cast<std::size_t>(channels) ? row[i - channels] : 0;
            int b = prev[i];
            int c = i >= static_cast<std::size_t>(channels) ? prev[i - channels] : 0;
            int x = row[i];
            switch (filter) {
                case 0: break;
                case 1: x += a; break;
                case 2: x += b; break;
                case 3: x += (a + b) / 2; break;
                case 4: x += detail::paeth(a, b, c); break;
                default: fail("bad PNG filter type: " + path);
            }
            row[i] = static_cast<unsigned char>(x & 0xff);
        }
        std::memcpy(prev.data(), row, stride);
        for (int x = 0; x < width; ++x) {
            if (channels == 1) {
                double g = row[x];
                img.at(y, x, 0) = g;
                img.at(y, x, 1) = g;
                img.at(y, x, 2) = g;
            } else {
                img.at(y, x, 0) = row[x * channels + 0];
                img.at(y, x, 1) = row[x * channels + 1];
                img.at(y, x, 2) = row[x * channels + 2];
            }
        }
    }
    return img;
}

/// Writes 8-bit RGB, scanlines unfiltered, one zlib-compressed IDAT.
inline void write_png(const std::string& path, const Image& img) {
    require(img.width > 0 && img.height > 0, "cannot write empty image");
    const std::size_t stride = static_cast<std::size_t>(img.width) * 3;
    std::vector<unsigned char> raw(static_cast<std::size_t>(img.height) * (stride + 1));
    for (int y = 0; y < img.height; ++y) {
        unsigned char* row = &raw[static_cast<std::size_t>(y) * (stride + 1)];
        row[0] = 0;  // filter: none
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c) row[1 + x * 3 + c] = quantize_u8(img.at(y, x, c));
    }
    uLongf bound = ::compressBound(static_cast<uLong>(raw.size()));
    std::vector<unsigned char> compressed(bound);
    int zrc = ::compress2(compressed.data(), &bound, raw.data(), static_cast<uLong>(raw.size()),
                          Z_DEFAULT_COMPRESSION);
    require(zrc == Z_OK, "PNG deflate failed");
    compressed.resize(bound);

    std::vector<unsigned char> out;
    out.insert(out.end(), kPngSignature, kPngSignature + 8);
    unsigned char ihdr[13];
    std::vector<unsigned char> tmp;
    detail::put_be32(tmp, static_cast<std::uint32_t>(img.width));
    detail::put_be32(tmp, static_cast<std::uint32_t>(img.height));
    std::memcpy(ihdr, tmp.data(), 8);
    ihdr[8] = 8;   // bit depth
    ihdr[9] = 2;   // color type: RGB
    ihdr[10] = 0;  // compression
    ihdr[11] = 0;  // filter method
    ihdr[12] = 0;  // no interlace
    detail::put_chunk(out, "IHDR", ihdr, 13);
    detail::put_chunk(out, "IDAT", compressed.data(), compressed.size());
    detail::put_chunk(out, "IEND", nullptr, 0);
    write_file_bytes(path, out.data(), out.size());
}

}  // namespace evmst
