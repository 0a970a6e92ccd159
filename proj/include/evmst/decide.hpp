#pragma once

#include <array>
#include <string>
#include <vector>

#include "evmst/common.hpp"
#include "evmst/stmap.hpp"
#include "evmst/vit.hpp"

namespace evmst {

struct MapPrediction {
    std::array<double, 2> probs{0.5, 0.5};  // (real, fake)
    Label predicted = Label::Real;
    std::string source;
};

/// Argmax of the class probabilities; an exact tie counts as real.
inline MapPrediction predict_map(const MEMSTmap& map, const ViTParams& params,
                                 AttnReduction red = AttnReduction::Canonical) {
    MapPrediction pred;
    pred.probs = vit_forward(map, params, false, nullptr, red);
    pred.predicted = pred.probs[1] > pred.probs[0] ? Label::Fake : Label::Real;
    pred.source = map.source;
    return pred;
}

struct VideoVerdict {
    std::string video;
    Label verdict = Label::Real;
    std::size_t real_votes = 0;
    std::size_t fake_votes = 0;
    std::array<double, 2> mean_probs{0.5, 0.5};
};

/// Majority vote over the per-map predictions; a tied vote falls back to the
/// argmax of the elementwise mean probabilities, and an exactly tied mean
/// counts as real.
inline VideoVerdict video_verdict(const std::vector<MapPrediction>& preds,
                                  const std::string& video = {}) {
    require(!preds.empty(), "cannot aggregate zero predictions");
    VideoVerdict v;
    v.video = video;
    double sum0 = 0.0, sum1 = 0.0;
    for (const auto& p : preds) {
        if (p.predicted == Label::Fake) ++v.fake_votes;
        else ++v.real_votes;
        sum0 += p.probs[0];
        sum1 += p.probs[1];
    }
    v.mean_probs = {sum0 / static_cast<double>(preds.size()),
                    sum1 / static_cast<double>(preds.size())};
    if (v.fake_votes > v.real_votes) v.verdict = Label::Fake;
    else if (v.real_votes > v.fake_votes) v.verdict = Label::Real;
    else v.verdict = v.mean_probs[1] > v.mean_probs[0] ? Label::Fake : Label::Real;
    return v;
}

}  // namespace evmst
