#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "evmst/common.hpp"
#include "evmst/fft.hpp"
#include "evmst/image.hpp"

namespace evmst {

/// One level of the Gaussian pyramid, blurred-and-decimated `level` times.
struct OctaveVideo {
    int level = 1;
    FrameSequence video;
};

struct BandpassSpec {
    double f_low = 0.75;
    double f_high = 3.0;
};

inline void validate(const BandpassSpec& band, double fps) {
    require(band.f_low > 0.0 && band.f_low < band.f_high,
            "band-pass range must satisfy 0 < low < high");
    require(band.f_high < fps / 2.0, "band-pass upper edge must stay below Nyquist (fps/2)");
}

struct MagnifiedSet {
    FrameSequence original;
    std::array<FrameSequence, 3> magnified;
    std::array<double, 3> alphas{10.0, 20.0, 40.0};
};

inline void validate(const MagnifiedSet& set) {
    validate(set.original);
    for (const auto& seq : set.magnified) {
        validate(seq);
        require(seq.width == set.original.width && seq.height == set.original.height &&
                    seq.frame_count() == set.original.frame_count() && seq.fps == set.original.fps,
                "magnified sequences must be frame-aligned with the original");
    }
}

namespace detail {

// index reflection without repeating the edge sample: -1 -> 1, n -> n-2
inline int reflect101(int i, int n) {
    if (n == 1) return 0;
    const int period = 2 * (n - 1);
    i = std::abs(i) % period;
    return i < n ? i : period - i;
}

}  // namespace detail

/// 5x5 binomial blur, separable (1,4,6,4,1)/16, mirrored borders.
inline Image blur_binomial5(const Image& img) {
    static constexpr double k[5] = {1.0 / 16, 4.0 / 16, 6.0 / 16, 4.0 / 16, 1.0 / 16};
    const int w = img.width, h = img.height;
    Image tmp(w, h), out(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) {
                double acc = 0.0;
                for (int d = -2; d <= 2; ++d)
                    acc += k[d + 2] * img.at(y, detail::reflect101(x + d, w), c);
                tmp.at(y, x, c) = acc;
            }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) {
                double acc = 0.0;
                for (int d = -2; d <= 2; ++d)
                    acc += k[d + 2] * tmp.at(detail::reflect101(y + d, h), x, c);
                out.at(y, x, c) = acc;
            }
    return out;
}

/// Keeps even rows and columns; output dims are ceil(dim/2).
inline Image decimate2(const Image& img) {
    Image out((img.width + 1) / 2, (img.height + 1) / 2);
    for (int y = 0; y < out.height; ++y)
        for (int x = 0; x < out.width; ++x)
            for (int c = 0; c < 3; ++c) out.at(y, x, c) = img.at(2 * y, 2 * x, c);
    return out;
}

/// Bilinear upsample aligned with decimate2: source sample j sits at output
/// position 2j, so even outputs copy and odd outputs average neighbors.
inline Image upsample2(const Image& img, int out_w, int out_h) {
    require(out_w >= img.width && out_h >= img.height && (out_w + 1) / 2 == img.width &&
                (out_h + 1) / 2 == img.height,
            "upsample target must be the pre-decimation size");
    Image out(out_w, out_h);
    for (int y = 0; y < out_h; ++y) {
        const int sy = y / 2;
        const int sy1 = std::min(sy + 1, img.height - 1);
        const bool oy = (y & 1) != 0;
        for (int x = 0; x < out_w; ++x) {
            const int sx = x / 2;
            const int sx1 = std::min(sx + 1, img.width - 1);
            const bool ox = (x & 1) != 0;
            for (int c = 0; c < 3; ++c) {
                const double v00 = img.at(sy, sx, c);
                const double v01 = img.at(sy, sx1, c);
                const double v10 = img.at(sy1, sx, c);
                const double v11 = img.at(sy1, sx1, c);
                double v;
                if (!oy && !ox) v = v00;
                else if (!oy) v = 0.5 * (v00 + v01);
                else if (!ox) v = 0.5 * (v00 + v10);
                else v = 0.25 * (v00 + v01 + v10 + v11);
                out.at(y, x, c) = v;
            }
        }
    }
    return out;
}

inline std::vector<OctaveVideo> gaussian_decompose(const FrameSequence& video, int levels = 3) {
    validate(video);
    require(levels >= 1, "need at least one pyramid level");
    require(std::min(video.width, video.height) >> levels >= 4,
            "video too small for " + std::to_string(levels) + " pyramid levels");

    std::vector<OctaveVideo> octaves(static_cast<std::size_t>(levels));
    for (int k = 0; k < levels; ++k) {
        OctaveVideo& oct = octaves[static_cast<std::size_t>(k)];
        oct.level = k + 1;
        oct.video.fps = video.fps;
        const FrameSequence& src = k == 0 ? video : octaves[static_cast<std::size_t>(k - 1)].video;
        oct.video.frames.reserve(src.frame_count());
        for (const Image& frame : src.frames) oct.video.frames.push_back(decimate2(blur_binomial5(frame)));
        oct.video.width = oct.video.frames.front().width;
        oct.video.height = oct.video.frames.front().height;
    }
    return octaves;
}

/// Zero-phase ideal band-pass: per pixel and channel, zero every DFT bin whose
/// frequency falls outside [f_low, f_high] (DC always removed), then invert and
/// keep the real part. Per-pixel results are independent of `jobs`.
inline OctaveVideo ideal_bandpass(const OctaveVideo& octave, const BandpassSpec& band,
                                  int jobs = 1) {
    const std::size_t n = octave.video.frame_count();
    require(n >= 4, "band-pass needs at least 4 frames");
    validate(band, octave.video.fps);

    std::vector<char> keep(n, 0);
    for (std::size_t k = 1; k < n; ++k) {
        const double f = static_cast<double>(std::min(k, n - k)) * octave.video.fps /
                         static_cast<double>(n);
        keep[k] = (f >= band.f_low && f <= band.f_high) ? 1 : 0;
    }

    OctaveVideo out;
    out.level = octave.level;
    out.video.width = octave.video.width;
    out.video.height = octave.video.height;
    out.video.fps = octave.video.fps;
    out.video.frames.assign(n, Image(octave.video.width, octave.video.height));

    const std::size_t values = octave.video.frames.front().data.size();
    parallel_for(values, jobs, [&](std::size_t begin, std::size_t end) {
        FftPlan plan(n);
        std::vector<cplx> buf(n);
        for (std::size_t v = begin; v < end; ++v) {
            for (std::size_t t = 0; t < n; ++t) buf[t] = octave.video.frames[t].data[v];
            plan.forward(buf);
            for (std::size_t k = 0; k < n; ++k)
                if (!keep[k]) buf[k] = 0.0;
            plan.inverse(buf);
            for (std::size_t t = 0; t < n; ++t) out.video.frames[t].data[v] = buf[t].real();
        }
    });
    return out;
}

/// Upsamples the filtered octave back to full resolution (bilinear, one 2x step
/// per level), scales by alpha, adds to the original, clamps to [0, 255].
inline FrameSequence amplify_composite(const FrameSequence& original, const OctaveVideo& filtered,
                                       double alpha) {
    validate(original);
    require(alpha >= 0.0, "amplification factor must be >= 0");
    require(filtered.video.frame_count() == original.frame_count(),
            "filtered octave is not frame-aligned with the original");

    // size chain the decomposition would have produced
    std::vector<std::pair<int, int>> sizes{{original.width, original.height}};
    for (int k = 0; k < filtered.level; ++k)
        sizes.emplace_back((sizes.back().first + 1) / 2, (sizes.back().second + 1) / 2);
    require(filtered.video.width == sizes.back().first &&
                filtered.video.height == sizes.back().second,
            "filtered octave dimensions do not match level " + std::to_string(filtered.level));

    FrameSequence out;
    out.width = original.width;
    out.height = original.height;
    out.fps = original.fps;
    out.frames.reserve(original.frame_count());
    for (std::size_t t = 0; t < original.frame_count(); ++t) {
        Image up = filtered.video.frames[t];
        for (int k = filtered.level; k-- > 0;)
            up = upsample2(up, sizes[static_cast<std::size_t>(k)].first,
                           sizes[static_cast<std::size_t>(k)].second);
        Image frame = original.frames[t];
        for (std::size_t v = 0; v < frame.data.size(); ++v)
            frame.data[v] = std::clamp(frame.data[v] + alpha * up.data[v], 0.0, 255.0);
        out.frames.push_back(std::move(frame));
    }
    return out;
}

inline MagnifiedSet magnify_set(const FrameSequence& video, const BandpassSpec& band,
                                const std::array<double, 3>& alphas = {10.0, 20.0, 40.0},
                                int jobs = 1) {
    MagnifiedSet set;
    set.original = video;
    set.alphas = alphas;
    auto octaves = gaussian_decompose(video, 3);
    for (int k = 0; k < 3; ++k) {
        OctaveVideo filtered = ideal_bandpass(octaves[static_cast<std::size_t>(k)], band, jobs);
        set.magnified[static_cast<std::size_t>(k)] =
            amplify_composite(video, filtered, alphas[static_cast<std::size_t>(k)]);
    }
    validate(set);
    return set;
}

}  // namespace evmst
