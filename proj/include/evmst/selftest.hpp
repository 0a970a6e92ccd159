#pragma once

#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "evmst/common.hpp"
#include "evmst/fft.hpp"
#include "evmst/ingest.hpp"
#include "evmst/magnify.hpp"
#include "evmst/patchseq.hpp"
#include "evmst/stmap.hpp"
#include "evmst/train.hpp"

namespace evmst {

struct SelftestOptions {
    std::uint64_t seed = 1;
    int jobs = 1;
};

struct CheckResult {
    std::string name;
    bool pass = false;
    std::string detail;
};

namespace detail {

inline std::string fmt(double v) {
    std::ostringstream os;
    os << std::setprecision(12) << v;
    return os.str();
}

inline double mean_signal_amplitude(const FrameSequence& seq, int channel, double hz) {
    std::vector<double> signal(seq.frame_count());
    for (std::size_t t = 0; t < seq.frame_count(); ++t) {
        double sum = 0.0;
        const Image& img = seq.frames[t];
        for (std::size_t p = 0; p < img.pixel_count(); ++p)
            sum += img.data[p * 3 + static_cast<std::size_t>(channel)];
        signal[t] = sum / static_cast<double>(img.pixel_count());
    }
    return tone_amplitude(signal, seq.fps, hz);
}

inline MEMSTmap random_map(Rng& rng, Label label) {
    MEMSTmap map;
    std::uniform_real_distribution<float> unif(0.0f, 1.0f);
    for (float& v : map.values) v = unif(rng);
    map.label = label;
    map.source = "selftest";
    return map;
}

inline CheckResult check_evm_amplification(const SelftestOptions& opt) {
    CheckResult res{"evm-amplification", false, ""};
    SynthSpec spec;
    spec.width = 32;
    spec.height = 32;
    spec.fps = 30.0;
    spec.duration = 10.0;
    spec.pulse_hz = 1.5;
    spec.pulse_amp = 2.0;
    spec.full_frame = true;
    spec.seed = opt.seed;
    const auto synth = synth_pulse_video(spec);

    const double alpha = 10.0;
    const auto set = magnify_set(synth.video, BandpassSpec{}, {alpha, 20.0, 40.0}, opt.jobs);
    const double amp_out = mean_signal_amplitude(set.magnified[0], spec.pulse_channel, 1.5);
    const double expected = (1.0 + alpha) * spec.pulse_amp;
    const double rel = std::abs(amp_out - expected) / expected;

    spec.pulse_hz = 5.0;
    const auto probe = synth_pulse_video(spec);
    const auto probe_set = magnify_set(probe.video, BandpassSpec{}, {alpha, 20.0, 40.0}, opt.jobs);
    const double probe_in = mean_signal_amplitude(probe.video, spec.pulse_channel, 5.0);
    const double probe_out = mean_signal_amplitude(probe_set.magnified[0], spec.pulse_channel, 5.0);
    const double probe_ratio = probe_out / probe_in;

    res.pass = rel <= 0.10 && probe_ratio <= 1.05;
    res.detail = "in_band_amp=" + fmt(amp_out) + " expected=" + fmt(expected) +
                 " rel_err=" + fmt(rel) + " out_of_band_ratio=" + fmt(probe_ratio);
    return res;
}

inline CheckResult check_bandpass_exactness(const SelftestOptions& opt) {
    CheckResult res{"bandpass-exactness", false, ""};
    Rng rng(opt.seed + 1);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    const std::size_t n = 64;
    const double fps = 30.0;
    const BandpassSpec band;

    double worst = 0.0;
    for (int trial = 0; trial < 5; ++trial) {
        OctaveVideo oct;
        oct.level = 1;
        oct.video.width = 1;
        oct.video.height = 1;
        oct.video.fps = fps;
        std::vector<double> x(n);
        for (std::size_t t = 0; t < n; ++t) {
            x[t] = unif(rng);
            Image img(1, 1);
            img.data = {x[t], 0.0, 0.0};
            oct.video.frames.push_back(img);
        }
        const auto filtered = ideal_bandpass(oct, band, opt.jobs);
        std::vector<double> y(n);
        for (std::size_t t = 0; t < n; ++t) y[t] = filtered.video.frames[t].data[0];

        double norm = 0.0;
        for (double v : x) norm += v * v;
        norm = std::sqrt(norm);
        const auto spec_in = dft(x);
        const auto spec_out = dft(y);
        for (std::size_t k = 0; k < n; ++k) {
            const double f = static_cast<double>(std::min(k, n - k)) * fps / static_cast<double>(n);
            const bool in_band = k != 0 && f >= band.f_low && f <= band.f_high;
            const double err = in_band ? std::abs(spec_out[k] - spec_in[k]) : std::abs(spec_out[k]);
            worst = std::max(worst, err / norm);
        }
        oct.video.frames.clear();
    }
    res.pass = worst < 1e-9;
    res.detail = "worst_bin_err=" + fmt(worst);
    return res;
}

inline CheckResult check_map_invariants(const SelftestOptions& opt) {
    CheckResult res{"map-invariants", false, ""};
    Rng rng(opt.seed + 2);
    std::uniform_real_distribution<double> unif(0.0, 255.0);
    SignalGrid grid;
    grid.resize(300);
    grid.fps = 30.0;
    for (double& v : grid.values) v = unif(rng);

    const auto maps = window_and_normalize(grid, grid.fps);
    bool ok = maps.size() == 7;
    for (const auto& map : maps)
        for (float v : map.values) ok = ok && v >= 0.0f && v <= 1.0f;

    // power-of-two affine transform per row must leave maps bit-identical
    SignalGrid scaled = grid;
    for (int row = 0; row < kGridRows; ++row) {
        const double a = row % 2 == 0 ? 4.0 : 0.25;
        const double b = static_cast<double>(row);
        for (std::size_t t = 0; t < grid.frames; ++t)
            for (int c = 0; c < kMapChans; ++c) scaled.at(row, t, c) = a * grid.at(row, t, c) + b;
    }
    const auto maps2 = window_and_normalize(scaled, grid.fps);
    ok = ok && maps2.size() == maps.size();
    bool identical = ok;
    for (std::size_t i = 0; identical && i < maps.size(); ++i)
        identical = std::memcmp(maps[i].values.data(), maps2[i].values.data(),
                                maps[i].values.size() * sizeof(float)) == 0;
    res.pass = ok && identical;
    res.detail = "maps=" + std::to_string(maps.size()) + " affine_invariant=" +
                 (identical ? "yes" : "no");
    return res;
}

inline CheckResult check_patch_locality(const SelftestOptions& opt) {
    CheckResult res{"patch-locality", false, ""};
    Rng rng(opt.seed + 3);
    MEMSTmap map = random_map(rng, Label::Unlabeled);
    const PatchSequence base = map_to_patches(map);

    std::uniform_int_distribution<int> col_dist(0, kMapCols - 1);
    bool ok = true;
    for (int trial = 0; trial < 8 && ok; ++trial) {
        MEMSTmap perturbed = map;
        const int col = col_dist(rng);
        for (int row = 0; row < kGridRows; ++row)
            for (int c = 0; c < kMapChans; ++c)
                perturbed.at(row, col, c) = 1.0f - perturbed.at(row, col, c);
        const PatchSequence seq = map_to_patches(perturbed);
        for (int k = 0; k < kSeqLen && ok; ++k) {
            if (k == col) continue;  // only this patch is allowed to change
            for (int i = 0; i < kPatchDim && ok; ++i) ok = seq.at(k, i) == base.at(k, i);
        }
    }
    // range containment per channel
    for (int k = 0; k < kSeqLen && ok; ++k) {
        for (int c = 0; c < kMapChans; ++c) {
            float lo = map.at(0, k, c), hi = lo;
            for (int row = 1; row < kGridRows; ++row) {
                lo = std::min(lo, map.at(row, k, c));
                hi = std::max(hi, map.at(row, k, c));
            }
            for (int j = 0; j < kPatchSide * kPatchSide; ++j) {
                const double v = base.at(k, j * 3 + c);
                ok = ok && v >= static_cast<double>(lo) - 1e-12 &&
                     v <= static_cast<double>(hi) + 1e-12;
            }
        }
    }
    res.pass = ok;
    res.detail = ok ? "locality_and_range=yes" : "locality_and_range=no";
    return res;
}

inline CheckResult check_gradients(const SelftestOptions& opt) {
    CheckResult res{"gradient-check", false, ""};
    Rng rng(opt.seed + 4);
    const MEMSTmap map = random_map(rng, Label::Fake);
    ViTConfig config = toy_config();
    config.dropout_rate = 0.0;
    const ViTParams params = dense_random_params(config, rng);
    const double worst = finite_diff_check(params, map, 1e-5, 48, opt.seed + 5);
    res.pass = worst < 1e-4;
    res.detail = "max_rel_err=" + fmt(worst);
    return res;
}

}  // namespace detail

/// Runs the synthetic-oracle suite, printing one PASS/FAIL line per check.
/// Output is a pure function of the options (timings never go to `out`).
inline std::vector<CheckResult> run_selftest(const SelftestOptions& opt, std::ostream& out) {
    std::vector<CheckResult> results;
    results.push_back(detail::check_evm_amplification(opt));
    results.push_back(detail::check_bandpass_exactness(opt));
    results.push_back(detail::check_map_invariants(opt));
    results.push_back(detail::check_patch_locality(opt));
    results.push_back(detail::check_gradients(opt));
    for (const auto& r : results)
        out << (r.pass ? "PASS " : "FAIL ") << r.name << " " << r.detail << "\n";
    return results;
}

}  // namespace evmst
