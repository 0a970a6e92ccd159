#include "evmst/decide.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <string>
#include <vector>

#include "evmst/stmap.hpp"
#include "evmst/train.hpp"
#include "evmst/vit.hpp"

namespace {

using namespace evmst;

MEMSTmap random_map(std::uint64_t seed, const std::string& source) {
    MEMSTmap m;
    Rng rng(seed);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    for (float& v : m.values) v = u(rng);
    m.source = source;
    return m;
}

MapPrediction vote(Label predicted, double p_real, double p_fake) {
    MapPrediction p;
    p.predicted = predicted;
    p.probs = {p_real, p_fake};
    return p;
}

TEST(PredictMap, MatchesTheForwardPassAndKeepsTheSource) {
    Rng init(7);
    const ViTParams params = dense_random_params(toy_config(), init);
    const MEMSTmap map = random_map(1, "clip_a/window_0");

    const MapPrediction pred = predict_map(map, params);
    const auto probs = vit_forward(map, params, false, nullptr, AttnReduction::Canonical);
    EXPECT_EQ(pred.probs[0], probs[0]);  // default reduction is the canonical one
    EXPECT_EQ(pred.probs[1], probs[1]);
    EXPECT_EQ(pred.predicted, probs[1] > probs[0] ? Label::Fake : Label::Real);
    EXPECT_EQ(pred.source, "clip_a/window_0");

    const MapPrediction fast = predict_map(map, params, AttnReduction::Fast);
    const auto fast_probs = vit_forward(map, params, false, nullptr, AttnReduction::Fast);
    EXPECT_EQ(fast.probs[0], fast_probs[0]);
    EXPECT_EQ(fast.probs[1], fast_probs[1]);
}

TEST(VideoVerdict, MajorityOfMapVotesWins) {
    const std::vector<MapPrediction> preds = {
        vote(Label::Fake, 0.2, 0.8), vote(Label::Fake, 0.3, 0.7), vote(Label::Fake, 0.4, 0.6),
        vote(Label::Real, 0.9, 0.1), vote(Label::Real, 0.8, 0.2)};
    const VideoVerdict v = video_verdict(preds, "clip");
    EXPECT_EQ(v.verdict, Label::Fake);
    EXPECT_EQ(v.fake_votes, 3u);
    EXPECT_EQ(v.real_votes, 2u);
    EXPECT_EQ(v.video, "clip");
    EXPECT_NEAR(v.mean_probs[0], (0.2 + 0.3 + 0.4 + 0.9 + 0.8) / 5.0, 1e-15);
    EXPECT_NEAR(v.mean_probs[1], (0.8 + 0.7 + 0.6 + 0.1 + 0.2) / 5.0, 1e-15);
}

TEST(VideoVerdict, MajorityBeatsTheMeanProbabilities) {
    // Two hyper-confident fake votes cannot outweigh three mild real votes,
    // even though the averaged probabilities lean fake.
    const std::vector<MapPrediction> preds = {
        vote(Label::Fake, 0.0, 1.0), vote(Label::Fake, 0.0, 1.0), vote(Label::Real, 0.51, 0.49),
        vote(Label::Real, 0.51, 0.49), vote(Label::Real, 0.51, 0.49)};
    const VideoVerdict v = video_verdict(preds);
    EXPECT_GT(v.mean_probs[1], v.mean_probs[0]);
    EXPECT_EQ(v.verdict, Label::Real);
}

TEST(VideoVerdict, TiedVotesFallBackToTheMeanAndTiedMeansCountAsReal) {
    const VideoVerdict lean_real =
        video_verdict({vote(Label::Real, 0.9, 0.1), vote(Label::Fake, 0.45, 0.55)});
    EXPECT_EQ(lean_real.real_votes, 1u);
    EXPECT_EQ(lean_real.fake_votes, 1u);
    EXPECT_EQ(lean_real.verdict, Label::Real);

    const VideoVerdict lean_fake =
        video_verdict({vote(Label::Real, 0.55, 0.45), vote(Label::Fake, 0.1, 0.9)});
    EXPECT_EQ(lean_fake.verdict, Label::Fake);

    const VideoVerdict dead_even =
        video_verdict({vote(Label::Real, 0.7, 0.3), vote(Label::Fake, 0.3, 0.7)});
    EXPECT_DOUBLE_EQ(dead_even.mean_probs[0], dead_even.mean_probs[1]);
    EXPECT_EQ(dead_even.verdict, Label::Real);
}

TEST(VideoVerdict, SingleMapSpeaksForTheVideo) {
    const VideoVerdict v = video_verdict({vote(Label::Fake, 0.25, 0.75)}, "solo");
    EXPECT_EQ(v.verdict, Label::Fake);
    EXPECT_EQ(v.real_votes, 0u);
    EXPECT_EQ(v.fake_votes, 1u);
    EXPECT_EQ(v.mean_probs[0], 0.25);
    EXPECT_EQ(v.mean_probs[1], 0.75);
}

TEST(VideoVerdict, VerdictIgnoresPredictionOrderAndScalesWithDuplication) {
    std::vector<MapPrediction> preds = {vote(Label::Fake, 0.2, 0.8), vote(Label::Real, 0.6, 0.4),
                                        vote(Label::Fake, 0.35, 0.65)};
    const VideoVerdict base = video_verdict(preds);

    std::vector<MapPrediction> shuffled = {preds[2], preds[0], preds[1]};
    const VideoVerdict reordered = video_verdict(shuffled);
    EXPECT_EQ(reordered.verdict, base.verdict);
    EXPECT_EQ(reordered.real_votes, base.real_votes);
    EXPECT_EQ(reordered.fake_votes, base.fake_votes);

    std::vector<MapPrediction> doubled = preds;
    doubled.insert(doubled.end(), preds.begin(), preds.end());
    const VideoVerdict twice = video_verdict(doubled);
    EXPECT_EQ(twice.verdict, base.verdict);
    EXPECT_EQ(twice.real_votes, 2 * base.real_votes);
    EXPECT_EQ(twice.fake_votes, 2 * base.fake_votes);
    EXPECT_NEAR(twice.mean_probs[1], base.mean_probs[1], 1e-15);
}

TEST(VideoVerdict, RejectsAnEmptyPredictionList) {
    try {
        video_verdict({});
        FAIL() << "empty prediction list accepted";
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("zero predictions"), std::string::npos);
    }
}

TEST(VideoVerdict, AgreesWithPerMapForwardPasses) {
    Rng init(9);
    const ViTParams params = dense_random_params(toy_config(), init);
    std::vector<MapPrediction> preds;
    std::size_t fakes = 0;
    for (std::uint64_t seed : {11u, 12u, 13u}) {
        const MEMSTmap map = random_map(seed, "w" + std::to_string(seed));
        preds.push_back(predict_map(map, params));
        if (preds.back().predicted == Label::Fake) ++fakes;
    }
    const VideoVerdict v = video_verdict(preds, "clip");
    EXPECT_EQ(v.fake_votes, fakes);
    EXPECT_EQ(v.real_votes, 3u - fakes);
    EXPECT_EQ(v.verdict, v.fake_votes > v.real_votes
                             ? Label::Fake
                             : (v.real_votes > v.fake_votes
                                    ? Label::Real
                                    : (v.mean_probs[1] > v.mean_probs[0] ? Label::Fake
                                                                         : Label::Real)));
}

}  // namespace
