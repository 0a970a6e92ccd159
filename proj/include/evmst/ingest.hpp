#pragma once

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "evmst/common.hpp"
#include "evmst/image.hpp"
#include "evmst/png.hpp"
#include "evmst/roi.hpp"

namespace evmst {

/// Per-frame 68-point landmarks paired with a FrameSequence. Frames without a
/// detected face carry valid=false and meaningless points until filled by
/// validate_track.
struct LandmarkTrack {
    std::vector<Landmarks> points;
    std::vector<std::uint8_t> valid;

    std::size_t frame_count() const { return points.size(); }
    std::size_t invalid_count() const {
        return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), 0));
    }
};

// --- frame loading --------------------------------------------------------------

namespace detail {

inline std::optional<double> read_fps_sidecar(const std::filesystem::path& dir) {
    std::ifstream is(dir / "fps.txt");
    if (!is) return std::nullopt;
    double fps = 0.0;
    if (!(is >> fps)) fail("fps.txt exists but holds no number: " + (dir / "fps.txt").string());
    return fps;
}

}  // namespace detail

/// Loads a directory of frame_*.png / frame_*.ppm images (lexicographic order,
/// fps from the fps.txt sidecar or the override) or a single FSEQ container.
inline FrameSequence load_frames(const std::string& path, double fps_override = 0.0) {
    namespace fs = std::filesystem;
    require(fs::exists(path), "input path does not exist: " + path);

    if (fs::is_regular_file(path)) {
        FrameSequence seq = read_fseq(path);
        if (fps_override > 0.0) seq.fps = fps_override;
        return seq;
    }

    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(path)) {
        if (!entry.is_regular_file()) continue;
        const auto name = entry.path().filename().string();
        const auto ext = entry.path().extension().string();
        if (name.rfind("frame_", 0) == 0 && (ext == ".png" || ext == ".ppm"))
            files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    require(!files.empty(), "frame sequence has zero frames: " + path);

    FrameSequence seq;
    seq.fps = fps_override;
    if (seq.fps <= 0.0) {
        auto sidecar = detail::read_fps_sidecar(path);
        require(sidecar.has_value(), "missing fps: no fps.txt sidecar and no override for " + path);
        seq.fps = *sidecar;
    }
    require(seq.fps > 0.0, "fps must be positive: " + path);

    seq.frames.reserve(files.size());
    for (const auto& file : files) {
        Image img = file.extension() == ".png" ? read_png(file.string()) : read_ppm(file.string());
        if (seq.frames.empty()) {
            seq.width = img.width;
            seq.height = img.height;
        } else {
            require(img.width == seq.width && img.height == seq.height,
                    "inconsistent frame dimensions: " + file.string());
        }
        seq.frames.push_back(std::move(img));
    }
    return seq;
}

// --- landmark loading -------------------------------------------------------------

/// Parses the landmark file: one JSON object per line,
/// {"frame": int, "points": [[x, y] x 68]}. Frames without a record are
/// marked invalid. width/height of 0 skip the bounds check.
inline LandmarkTrack load_landmarks(const std::string& path, std::size_t frame_count,
                                    int width = 0, int height = 0) {
    std::ifstream is(path);
    if (!is) fail("cannot open landmark file: " + path);

    LandmarkTrack track;
    track.points.resize(frame_count);
    track.valid.assign(frame_count, 0);

    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json rec;
        try {
            rec = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            fail("malformed landmark record at line " + std::to_string(line_no) + ": " + e.what());
        }
        if (!rec.is_object() || !rec.contains("frame") || !rec.contains("points") ||
            !rec["frame"].is_number_integer() || !rec["points"].is_array())
            fail("malformed landmark record at line " + std::to_string(line_no));
        const std::int64_t frame = rec["frame"].get<std::int64_t>();
        if (frame < 0 || static_cast<std::size_t>(frame) >= frame_count)
            fail("landmark frame index out of range at line " + std::to_string(line_no) + ": " +
                 std::to_string(frame));
        if (track.valid[static_cast<std::size_t>(frame)])
            fail("duplicate landmark record for frame " + std::to_string(frame));
        const auto& pts = rec["points"];
        if (pts.size() != kLandmarkCount)
            fail("landmark point count is " + std::to_string(pts.size()) + ", want 68 (line " +
                 std::to_string(line_no) + ")");
        Landmarks lm;
        for (int i = 0; i < kLandmarkCount; ++i) {
            const auto& p = pts[i];
            if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number())
                fail("malformed landmark point at line " + std::to_string(line_no));
            lm[i] = Point{p[0].get<double>(), p[1].get<double>()};
            if (width > 0 && height > 0) {
                if (lm[i].x < 0.0 || lm[i].x >= width || lm[i].y < 0.0 || lm[i].y >= height)
                    fail("landmark outside frame bounds at line " + std::to_string(line_no));
            }
        }
        track.points[static_cast<std::size_t>(frame)] = lm;
        track.valid[static_cast<std::size_t>(frame)] = 1;
    }
    return track;
}

inline void write_landmarks(const std::string& path, const LandmarkTrack& track) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) fail("cannot create file: " + path);
    for (std::size_t t = 0; t < track.frame_count(); ++t) {
        if (!track.valid[t]) continue;
        nlohmann::json pts = nlohmann::json::array();
        for (const Point& p : track.points[t]) pts.push_back({p.x, p.y});
        nlohmann::json rec{{"frame", t}, {"points", pts}};
        os << rec.dump() << "\n";
    }
}

// --- discard rule / gap filling ---------------------------------------------------

enum class TrackDecision { Accept, Discard };

/// Discards a track with more than 10 invalid frames (or none valid at all);
/// otherwise fills each gap by linear interpolation between the nearest valid
/// neighbors (nearest-copy at the sequence ends) and marks every frame valid.
/// Idempotent: a second call leaves an accepted track bit-identical.
inline TrackDecision validate_track(LandmarkTrack& track) {
    const std::size_t n = track.frame_count();
    const std::size_t invalid = track.invalid_count();
    if (invalid == n || invalid > 10) return TrackDecision::Discard;
    if (invalid == 0) return TrackDecision::Accept;

    std::vector<std::ptrdiff_t> prev(n, -1), next(n, -1);
    std::ptrdiff_t last = -1;
    for (std::size_t t = 0; t < n; ++t) {
        if (track.valid[t]) last = static_cast<std::ptrdiff_t>(t);
        prev[t] = last;
    }
    last = -1;
    for (std::size_t t = n; t-- > 0;) {
        if (track.valid[t]) last = static_cast<std::ptrdiff_t>(t);
        next[t] = last;
    }
    for (std::size_t t = 0; t < n; ++t) {
        if (track.valid[t]) continue;
        if (prev[t] < 0) {
            track.points[t] = track.points[static_cast<std::size_t>(next[t])];
        } else if (next[t] < 0) {
            track.points[t] = track.points[static_cast<std::size_t>(prev[t])];
        } else {
            const auto& a = track.points[static_cast<std::size_t>(prev[t])];
            const auto& b = track.points[static_cast<std::size_t>(next[t])];
            const double w = static_cast<double>(t - prev[t]) / static_cast<double>(next[t] - prev[t]);
            for (int i = 0; i < kLandmarkCount; ++i) {
                track.points[t][i].x = a[i].x + w * (b[i].x - a[i].x);
                track.points[t][i].y = a[i].y + w * (b[i].y - a[i].y);
            }
        }
        track.valid[t] = 1;
    }
    return TrackDecision::Accept;
}

// --- synthetic pulse videos ---------------------------------------------------------

/// Synthetic test video: a fixed face layout whose regions (or the whole
/// frame) carry a sinusoidal intensity modulation with known per-region phase.
struct SynthSpec {
    int width = 64;
    int height = 64;
    double fps = 30.0;
    double duration = 10.0;           // seconds
    double pulse_hz = 1.5;
    double pulse_amp = 2.0;           // peak deviation, 8-bit units
    double base_color[3] = {128.0, 128.0, 128.0};
    double noise_sigma = 0.0;         // Gaussian noise std, 8-bit units
    std::vector<double> region_phase; // radians; region r uses entry r % size
    int pulse_channel = 1;
    bool full_frame = false;          // paint everything with region_phase[0]
    bool quantize_8bit = false;       // round frames to integers like a decoded file
    std::uint64_t seed = 1;
};

struct SynthTruth {
    double pulse_hz = 0.0;
    double pulse_amp = 0.0;
    int pulse_channel = 0;
    std::array<double, kRoiCount> region_phase{};
    RoiLayout layout;
};

/// A rigid synthetic face: jawline tracing the sides and bottom of a centered
/// box, eyebrows along its top edge, interior features placed plausibly. The
/// below-brow hull is exactly the box, so the 15 RoIs tile a rectangle.
inline Landmarks synthetic_face_landmarks(int width, int height) {
    require(width >= 16 && height >= 16, "synthetic face needs at least 16x16 frames");
    Landmarks lm;
    const double x0 = std::floor(0.10 * width);
    const double x1 = std::ceil(0.90 * width) - 1.0;
    const double yb = std::floor(0.20 * height);       // brow line
    const double y1 = std::ceil(0.90 * height) - 1.0;  // chin line

    // jaw 0..16: down the left edge, across the bottom, up the right edge
    for (int i = 0; i <= 4; ++i) lm[i] = Point{x0, yb + (y1 - yb) * i / 4.0};
    for (int i = 1; i <= 8; ++i) lm[4 + i] = Point{x0 + (x1 - x0) * i / 8.0, y1};
    for (int i = 1; i <= 4; ++i) lm[12 + i] = Point{x1, y1 - (y1 - yb) * i / 4.0};
    // eyebrows 17..26 along the brow line
    for (int i = 0; i < 5; ++i) lm[17 + i] = Point{x0 + (x1 - x0) * (0.05 + 0.10 * i), yb};
    for (int i = 0; i < 5; ++i) lm[22 + i] = Point{x0 + (x1 - x0) * (0.55 + 0.10 * i), yb};

    const double fw = x1 - x0, fh = y1 - yb;
    auto at = [&](double u, double v) { return Point{x0 + fw * u, yb + fh * v}; };
    // nose 27..35
    for (int i = 0; i < 4; ++i) lm[27 + i] = at(0.50, 0.15 + 0.12 * i);
    for (int i = 0; i < 5; ++i) lm[31 + i] = at(0.38 + 0.06 * i, 0.58);
    // eyes 36..47
    for (int i = 0; i < 6; ++i)
        lm[36 + i] = at(0.22 + 0.03 * (i % 3), 0.22 + 0.05 * (i / 3));
    for (int i = 0; i < 6; ++i)
        lm[42 + i] = at(0.68 + 0.03 * (i % 3), 0.22 + 0.05 * (i / 3));
    // mouth 48..67
    for (int i = 0; i < 12; ++i)
        lm[48 + i] = at(0.30 + 0.40 * (i % 6) / 5.0, 0.75 + 0.08 * (i / 6));
    for (int i = 0; i < 8; ++i) lm[60 + i] = at(0.34 + 0.32 * (i % 4) / 3.0, 0.78 + 0.04 * (i / 4));
    return lm;
}

struct SynthResult {
    FrameSequence video;
    LandmarkTrack track;
    SynthTruth truth;
};

inline SynthResult synth_pulse_video(const SynthSpec& spec) {
    require(spec.width > 0 && spec.height > 0, "synth frame dimensions must be positive");
    require(spec.fps > 0.0, "synth fps must be positive");
    require(spec.duration > 0.0, "synth duration must be positive");
    require(spec.pulse_amp >= 0.0, "synth pulse amplitude must be >= 0");
    require(spec.pulse_channel >= 0 && spec.pulse_channel < 3, "pulse channel must be 0..2");

    SynthResult out;
    const auto n = static_cast<std::size_t>(std::llround(spec.duration * spec.fps));
    require(n >= 1, "synth duration shorter than one frame");

    Landmarks lm = synthetic_face_landmarks(spec.width, spec.height);
    out.truth.layout = roi_layout(lm);
    out.truth.pulse_hz = spec.pulse_hz;
    out.truth.pulse_amp = spec.pulse_amp;
    out.truth.pulse_channel = spec.pulse_channel;
    for (int r = 0; r < kRoiCount; ++r)
        out.truth.region_phase[r] =
            spec.region_phase.empty() ? 0.0
                                      : spec.region_phase[r % spec.region_phase.size()];

    out.track.points.assign(n, lm);
    out.track.valid.assign(n, 1);

    out.video.width = spec.width;
    out.video.height = spec.height;
    out.video.fps = spec.fps;
    out.video.frames.reserve(n);

    const auto region_px = roi_pixels(out.truth.layout, spec.width, spec.height);
    Rng rng(spec.seed);
    std::normal_distribution<double> noise(0.0, spec.noise_sigma);

    for (std::size_t t = 0; t < n; ++t) {
        Image img(spec.width, spec.height);
        for (std::size_t p = 0; p < img.pixel_count(); ++p)
            for (int c = 0; c < 3; ++c) img.data[p * 3 + c] = spec.base_color[c];

        const double omega_t = 2.0 * std::numbers::pi * spec.pulse_hz *
                               (static_cast<double>(t) / spec.fps);
        if (spec.full_frame) {
            const double v = spec.pulse_amp * std::sin(omega_t + out.truth.region_phase[0]);
            for (std::size_t p = 0; p < img.pixel_count(); ++p)
                img.data[p * 3 + spec.pulse_channel] += v;
        } else {
            for (int r = 0; r < kRoiCount; ++r) {
                const double v = spec.pulse_amp * std::sin(omega_t + out.truth.region_phase[r]);
                for (const auto& [x, y] : region_px[r]) img.at(y, x, spec.pulse_channel) += v;
            }
        }
        if (spec.noise_sigma > 0.0)
            for (double& v : img.data) v += noise(rng);
        for (double& v : img.data) {
            v = std::clamp(v, 0.0, 255.0);
            if (spec.quantize_8bit) v = std::nearbyint(v);
        }
        out.video.frames.push_back(std::move(img));
    }
    return out;
}

}  // namespace evmst
