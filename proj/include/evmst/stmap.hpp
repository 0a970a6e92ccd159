#pragma once

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "evmst/common.hpp"
#include "evmst/image.hpp"
#include "evmst/ingest.hpp"
#include "evmst/magnify.hpp"
#include "evmst/roi.hpp"

namespace evmst {

inline constexpr int kGridRows = 60;   // 4 videos x 15 regions
inline constexpr int kMapCols = 196;   // window length in frames
inline constexpr int kMapChans = 3;

enum class Label : std::uint8_t { Real = 0, Fake = 1, Unlabeled = 255 };

inline std::string to_string(Label label) {
    switch (label) {
        case Label::Real: return "real";
        case Label::Fake: return "fake";
        default: return "unlabeled";
    }
}

inline Label label_from_string(const std::string& s) {
    if (s == "real") return Label::Real;
    if (s == "fake") return Label::Fake;
    if (s == "unlabeled") return Label::Unlabeled;
    fail("unknown label: " + s);
}

// --- color conversion ---------------------------------------------------------------

/// Full-range BT.601 with U/V recentered at 128. Inputs are clamped to [0,255].
inline std::array<double, 3> rgb_to_yuv(double r, double g, double b) {
    r = std::clamp(r, 0.0, 255.0);
    g = std::clamp(g, 0.0, 255.0);
    b = std::clamp(b, 0.0, 255.0);
    const double y = 0.299 * r + 0.587 * g + 0.114 * b;
    const double u = 0.492 * (b - y) + 128.0;
    const double v = 0.877 * (r - y) + 128.0;
    return {y, u, v};
}

// --- temporal signal grid ------------------------------------------------------------

/// 60 temporal YUV signals: rows 0-14 come from the original video's regions
/// 0-14, rows 15-29/30-44/45-59 from the three magnified videos.
struct SignalGrid {
    std::size_t frames = 0;
    double fps = 0.0;
    std::vector<double> values;  // (row * frames + t) * 3 + channel

    void resize(std::size_t t) {
        frames = t;
        values.assign(static_cast<std::size_t>(kGridRows) * t * kMapChans, 0.0);
    }
    double& at(int row, std::size_t t, int c) {
        return values[(static_cast<std::size_t>(row) * frames + t) * kMapChans +
                      static_cast<std::size_t>(c)];
    }
    double at(int row, std::size_t t, int c) const {
        return values[(static_cast<std::size_t>(row) * frames + t) * kMapChans +
                      static_cast<std::size_t>(c)];
    }
};

/// Per-frame region extraction: recomputes the 15-region layout from that
/// frame's landmarks, averages each region's pixels in YUV, and does so for
/// all four videos of the set. Row = video index * 15 + region.
inline SignalGrid extract_signals(const MagnifiedSet& set, const LandmarkTrack& track,
                                  int jobs = 1) {
    validate(set);
    const std::size_t n = set.original.frame_count();
    require(track.frame_count() == n, "landmark track and video disagree on frame count");
    for (std::size_t t = 0; t < n; ++t)
        require(track.valid[t] != 0, "landmark track has unfilled frames; run validate_track");

    SignalGrid grid;
    grid.resize(n);
    grid.fps = set.original.fps;

    const std::array<const FrameSequence*, 4> videos{&set.original, &set.magnified[0],
                                                     &set.magnified[1], &set.magnified[2]};
    parallel_for(n, jobs, [&](std::size_t begin, std::size_t end) {
        for (std::size_t t = begin; t < end; ++t) {
            const RoiLayout layout = roi_layout(track.points[t]);
            const auto pixels = roi_pixels(layout, set.original.width, set.original.height);
            for (int r = 0; r < kRoiCount; ++r)
                if (pixels[static_cast<std::size_t>(r)].empty())
                    fail("region " + std::to_string(r) + " is empty in frame " +
                         std::to_string(t));
            for (int v = 0; v < 4; ++v) {
                const Image& frame = videos[static_cast<std::size_t>(v)]->frames[t];
                for (int r = 0; r < kRoiCount; ++r) {
                    const auto& px = pixels[static_cast<std::size_t>(r)];
                    double sum[3] = {0.0, 0.0, 0.0};
                    for (const auto& [x, y] : px) {
                        const auto yuv =
                            rgb_to_yuv(frame.at(y, x, 0), frame.at(y, x, 1), frame.at(y, x, 2));
                        sum[0] += yuv[0];
                        sum[1] += yuv[1];
                        sum[2] += yuv[2];
                    }
                    const auto cnt = static_cast<double>(px.size());
                    for (int c = 0; c < kMapChans; ++c)
                        grid.at(v * kRoiCount + r, t, c) = sum[c] / cnt;
                }
            }
        }
    });
    return grid;
}

// --- windowed maps ----------------------------------------------------------------

struct MEMSTmap {
    std::vector<float> values;  // (row * 196 + col) * 3 + channel
    std::string source;
    std::uint32_t window_start = 0;
    Label label = Label::Unlabeled;

    MEMSTmap() : values(static_cast<std::size_t>(kGridRows) * kMapCols * kMapChans, 0.0f) {}

    float& at(int row, int col, int c) {
        return values[(static_cast<std::size_t>(row) * kMapCols + static_cast<std::size_t>(col)) *
                          kMapChans +
                      static_cast<std::size_t>(c)];
    }
    float at(int row, int col, int c) const {
        return values[(static_cast<std::size_t>(row) * kMapCols + static_cast<std::size_t>(col)) *
                          kMapChans +
                      static_cast<std::size_t>(c)];
    }
};

inline void validate(const MEMSTmap& map) {
    require(map.values.size() == static_cast<std::size_t>(kGridRows) * kMapCols * kMapChans,
            "map has wrong shape");
    for (float v : map.values)
        require(v >= 0.0f && v <= 1.0f && !std::isnan(v), "map values must lie in [0, 1]");
}

/// Slides a 196-frame window with stride round(stride_s*fps) and min-max
/// normalizes each (row, channel) signal within the window to [0, 1]
/// (constants -> 0.5). A clip shorter than one window yields no maps and a
/// warning record.
inline std::vector<MEMSTmap> window_and_normalize(const SignalGrid& grid, double fps,
                                                  std::vector<std::string>* warnings = nullptr,
                                                  double stride_s = 0.5) {
    require(fps > 0.0, "fps must be positive");
    require(stride_s > 0.0, "window stride must be positive");
    const auto stride = static_cast<std::size_t>(std::llround(stride_s * fps));
    require(stride >= 1, "fps too low: window stride rounds to zero");

    std::vector<MEMSTmap> maps;
    if (grid.frames < static_cast<std::size_t>(kMapCols)) {
        if (warnings)
            warnings->push_back("clip has " + std::to_string(grid.frames) +
                                " frames, shorter than one 196-frame window; no maps produced");
        return maps;
    }
    for (std::size_t start = 0; start + kMapCols <= grid.frames; start += stride) {
        MEMSTmap map;
        map.window_start = static_cast<std::uint32_t>(start);
        for (int row = 0; row < kGridRows; ++row) {
            for (int c = 0; c < kMapChans; ++c) {
                double lo = grid.at(row, start, c), hi = lo;
                for (int t = 1; t < kMapCols; ++t) {
                    const double v = grid.at(row, start + static_cast<std::size_t>(t), c);
                    lo = std::min(lo, v);
                    hi = std::max(hi, v);
                }
                if (hi == lo) {
                    for (int t = 0; t < kMapCols; ++t) map.at(row, t, c) = 0.5f;
                } else {
                    for (int t = 0; t < kMapCols; ++t)
                        map.at(row, t, c) = static_cast<float>(
                            (grid.at(row, start + static_cast<std::size_t>(t), c) - lo) /
                            (hi - lo));
                }
            }
        }
        maps.push_back(std::move(map));
    }
    return maps;
}

// --- MEMS container -----------------------------------------------------------------

inline constexpr char kMemsMagic[4] = {'M', 'E', 'M', 'S'};
inline constexpr std::uint32_t kMemsVersion = 1;

inline void write_mems(const std::string& path, const MEMSTmap& map) {
    validate(map);
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) fail("cannot create file: " + path);
    write_magic(os, kMemsMagic);
    write_u32(os, kMemsVersion);
    write_u32(os, kGridRows);
    write_u32(os, kMapCols);
    write_u32(os, kMapChans);
    os.put(static_cast<char>(static_cast<std::uint8_t>(map.label)));
    write_u32(os, map.window_start);
    write_u32(os, static_cast<std::uint32_t>(map.source.size()));
    os.write(map.source.data(), static_cast<std::streamsize>(map.source.size()));
    for (float v : map.values) write_f32(os, v);
    if (!os) fail("short write: " + path);
}

inline MEMSTmap read_mems(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) fail("cannot open file: " + path);
    expect_magic(is, kMemsMagic, path);
    const std::uint32_t version = read_u32(is, path);
    require(version == kMemsVersion, path + ": unsupported map version");
    const std::uint32_t rows = read_u32(is, path);
    const std::uint32_t cols = read_u32(is, path);
    const std::uint32_t chans = read_u32(is, path);
    require(rows == kGridRows && cols == kMapCols && chans == kMapChans,
            path + ": unexpected map shape");
    MEMSTmap map;
    int lb = is.get();
    require(lb != EOF, path + ": truncated file");
    require(lb == 0 || lb == 1 || lb == 255, path + ": invalid label byte");
    map.label = static_cast<Label>(static_cast<std::uint8_t>(lb));
    map.window_start = read_u32(is, path);
    const std::uint32_t len = read_u32(is, path);
    map.source.resize(len);
    is.read(map.source.data(), static_cast<std::streamsize>(len));
    for (float& v : map.values) v = read_f32(is, path);
    require(static_cast<bool>(is), path + ": truncated file");
    validate(map);
    return map;
}

/// 196x60 visualization of a map, channel values scaled to 8-bit range.
inline Image map_to_image(const MEMSTmap& map) {
    Image img(kMapCols, kGridRows);
    for (int row = 0; row < kGridRows; ++row)
        for (int col = 0; col < kMapCols; ++col)
            for (int c = 0; c < kMapChans; ++c)
                img.at(row, col, c) = 255.0 * static_cast<double>(map.at(row, col, c));
    return img;
}

// --- dataset manifest ----------------------------------------------------------------

struct ManifestEntry {
    std::string video;
    std::string landmarks;
    Label label = Label::Unlabeled;
    std::string split;  // train | val | test
};

inline std::vector<ManifestEntry> load_manifest(const std::string& path) {
    std::ifstream is(path);
    if (!is) fail("cannot open manifest: " + path);
    std::vector<ManifestEntry> entries;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json rec;
        try {
            rec = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            fail("malformed manifest line " + std::to_string(line_no) + ": " + e.what());
        }
        for (const char* key : {"video", "landmarks", "label", "split"})
            if (!rec.contains(key) || !rec[key].is_string())
                fail("manifest line " + std::to_string(line_no) + " is missing string field \"" +
                     key + "\"");
        ManifestEntry e;
        e.video = rec["video"].get<std::string>();
        e.landmarks = rec["landmarks"].get<std::string>();
        e.label = label_from_string(rec["label"].get<std::string>());
        require(e.label != Label::Unlabeled,
                "manifest line " + std::to_string(line_no) + ": label must be real or fake");
        e.split = rec["split"].get<std::string>();
        require(e.split == "train" || e.split == "val" || e.split == "test",
                "manifest line " + std::to_string(line_no) + ": unknown split " + e.split);
        entries.push_back(std::move(e));
    }
    return entries;
}

inline void save_manifest(const std::string& path, const std::vector<ManifestEntry>& entries) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) fail("cannot create manifest: " + path);
    for (const auto& e : entries) {
        nlohmann::json rec{{"video", e.video},
                           {"landmarks", e.landmarks},
                           {"label", to_string(e.label)},
                           {"split", e.split}};
        os << rec.dump() << "\n";
    }
}

}  // namespace evmst
