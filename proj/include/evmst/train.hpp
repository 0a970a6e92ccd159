#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "evmst/common.hpp"
#include "evmst/patchseq.hpp"
#include "evmst/stmap.hpp"
#include "evmst/vit.hpp"

namespace evmst {

struct TrainConfig {
    double learning_rate = 5e-5;
    int epochs = 60;
    int batch_size = 32;
    double dropout_rate = 0.1;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t seed = 1;
    // optional: stop once validation accuracy reaches this level (0 disables)
    double early_stop_val_acc = 0.0;
};

inline void validate(const TrainConfig& c) {
    require(c.learning_rate > 0.0, "learning rate must be positive");
    require(c.epochs >= 1, "epoch count must be >= 1");
    require(c.batch_size >= 1, "batch size must be >= 1");
    require(c.dropout_rate >= 0.0 && c.dropout_rate < 1.0, "dropout rate must lie in [0, 1)");
    require(c.beta1 > 0.0 && c.beta1 < 1.0 && c.beta2 > 0.0 && c.beta2 < 1.0,
            "adam betas must lie in (0, 1)");
    require(c.epsilon > 0.0, "adam epsilon must be positive");
}

/// -log softmax(logits)[label], evaluated through log-sum-exp so huge logits
/// cannot overflow. Always >= 0.
inline double cross_entropy(const std::array<double, 2>& logits, int label) {
    require(label == 0 || label == 1, "label must be 0 or 1");
    const double m = std::max(logits[0], logits[1]);
    const double lse = m + std::log(std::exp(logits[0] - m) + std::exp(logits[1] - m));
    return lse - logits[static_cast<std::size_t>(label)];
}

/// Same-shaped parameter struct with every tensor zeroed (LayerNorm scales too)
/// — the container for gradients and Adam moments.
inline ViTParams make_zero_like(const ViTConfig& config) {
    ViTParams z = make_params(config);
    for (auto& [name, tensor] : tensor_list(z))
        std::fill(tensor->data.begin(), tensor->data.end(), 0.0);
    return z;
}

inline int map_label_index(const MEMSTmap& map) {
    require(map.label != Label::Unlabeled, "map " + map.source + " carries no label");
    return map.label == Label::Fake ? 1 : 0;
}

/// Forward+backward over a batch; returns the mean loss and accumulates the
/// gradients of the mean loss into `grads` (which it zeroes first).
/// Deterministic given the rng state on entry.
inline double batch_backward(const std::vector<const MEMSTmap*>& batch, const ViTParams& params,
                             Rng& rng, ViTParams& grads) {
    require(!batch.empty(), "empty training batch");
    for (auto& [name, tensor] : tensor_list(grads))
        std::fill(tensor->data.begin(), tensor->data.end(), 0.0);

    const double inv_b = 1.0 / static_cast<double>(batch.size());
    double loss_sum = 0.0;
    Cache cache;
    for (const MEMSTmap* map : batch) {
        const int label = map_label_index(*map);
        const PatchSequence seq = map_to_patches(*map);
        vit_forward(seq, params, /*train_mode=*/true, &rng, AttnReduction::Fast, &cache);
        loss_sum += cross_entropy(cache.logits, label);
        std::array<double, 2> dlogits = cache.probs;
        dlogits[static_cast<std::size_t>(label)] -= 1.0;
        dlogits[0] *= inv_b;
        dlogits[1] *= inv_b;
        vit_backward(seq, params, cache, dlogits, grads);
    }
    const double loss = loss_sum * inv_b;
    require(std::isfinite(loss), "non-finite training loss");
    return loss;
}

// --- optimizer ---------------------------------------------------------------------

struct AdamState {
    ViTParams m, v;
    long step = 0;
};

inline AdamState make_adam_state(const ViTConfig& config) {
    return AdamState{make_zero_like(config), make_zero_like(config), 0};
}

inline void adam_step(ViTParams& params, const ViTParams& grads, AdamState& state,
                      const TrainConfig& tc) {
    ++state.step;
    const double bc1 = 1.0 - std::pow(tc.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(tc.beta2, static_cast<double>(state.step));
    auto pl = tensor_list(params);
    auto gl = tensor_list(grads);
    auto ml = tensor_list(state.m);
    auto vl = tensor_list(state.v);
    for (std::size_t i = 0; i < pl.size(); ++i) {
        auto& p = pl[i].second->data;
        const auto& g = gl[i].second->data;
        auto& m = ml[i].second->data;
        auto& v = vl[i].second->data;
        require(g.size() == p.size(), "gradient shape mismatch in " + pl[i].first);
        for (std::size_t j = 0; j < p.size(); ++j) {
            m[j] = tc.beta1 * m[j] + (1.0 - tc.beta1) * g[j];
            v[j] = tc.beta2 * v[j] + (1.0 - tc.beta2) * g[j] * g[j];
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            p[j] -= tc.learning_rate * mhat / (std::sqrt(vhat) + tc.epsilon);
        }
    }
}

// --- gradient oracle ----------------------------------------------------------------

/// A fully random parameter point for derivative probing. The standard init
/// zeroes the class token and positions, so the class row starts exactly on
/// the LayerNorm epsilon kink, where central differences are meaningless;
/// probing wants a generic point with every tensor dense instead.
inline ViTParams dense_random_params(const ViTConfig& config, Rng& rng) {
    ViTParams params = make_params(config);
    for (auto& [name, tensor] : tensor_list(params)) {
        const bool ln_scale = name.size() >= 6 && name.compare(name.size() - 6, 6, "weight") == 0 &&
                              name.find("norm") != std::string::npos;
        for (auto& v : tensor->data) v = (ln_scale ? 1.0 : 0.0) + truncated_normal(rng, 0.02);
    }
    return params;
}

/// Central-difference check of the analytic gradient on one sample, dropout
/// off, 64-bit. The first pass walks every probed tensor once (so all kinds
/// are covered), then coordinates are drawn at random. Returns the max
/// relative error with denominator max(|analytic|, |numeric|, 1e-8).
///
/// Key biases are skipped: a constant added to every key shifts all attention
/// logits in a row equally and softmax removes the shift, so their gradient
/// is identically zero and a central difference only measures roundoff. The
/// unit suite asserts that zero directly.
inline double finite_diff_check(const ViTParams& params, const MEMSTmap& map, double eps = 1e-5,
                                int trials = 200, std::uint64_t seed = 7,
                                const ViTParams* grads_override = nullptr) {
    const int label = map_label_index(map);
    const PatchSequence seq = map_to_patches(map);

    ViTParams grads = make_zero_like(params.config);
    {
        Cache cache;
        vit_forward(seq, params, false, nullptr, AttnReduction::Fast, &cache);
        std::array<double, 2> dlogits = cache.probs;
        dlogits[static_cast<std::size_t>(label)] -= 1.0;
        vit_backward(seq, params, cache, dlogits, grads);
    }
    const ViTParams& g = grads_override ? *grads_override : grads;
    auto gl = tensor_list(g);

    ViTParams probe = params;  // mutated one coordinate at a time
    auto pl = tensor_list(probe);
    std::vector<std::size_t> pool;
    for (std::size_t i = 0; i < pl.size(); ++i)
        if (pl[i].first.find("attn.k.bias") == std::string::npos) pool.push_back(i);

    auto loss_at = [&]() {
        Cache cache;
        vit_forward(seq, probe, false, nullptr, AttnReduction::Fast, &cache);
        return cross_entropy(cache.logits, label);
    };

    Rng rng(seed);
    double worst = 0.0;
    for (int trial = 0; trial < trials; ++trial) {
        const auto ti =
            pool[trial < static_cast<int>(pool.size())
                     ? static_cast<std::size_t>(trial)
                     : std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)];
        auto& data = pl[ti].second->data;
        const auto ei = std::uniform_int_distribution<std::size_t>(0, data.size() - 1)(rng);

        const double saved = data[ei];
        data[ei] = saved + eps;
        const double lp = loss_at();
        data[ei] = saved - eps;
        const double lm = loss_at();
        data[ei] = saved;

        const double numeric = (lp - lm) / (2.0 * eps);
        const double analytic = gl[ti].second->data[ei];
        const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-8});
        worst = std::max(worst, std::abs(numeric - analytic) / denom);
    }
    return worst;
}

// --- evaluation ---------------------------------------------------------------------

struct EvalStats {
    std::size_t total = 0;
    std::size_t correct = 0;
    std::size_t confusion[2][2] = {{0, 0}, {0, 0}};  // [actual][predicted]

    double accuracy() const { return total == 0 ? 0.0 : static_cast<double>(correct) / total; }
};

inline EvalStats evaluate_maps(const std::vector<MEMSTmap>& maps, const ViTParams& params,
                               AttnReduction red = AttnReduction::Fast) {
    EvalStats stats;
    for (const MEMSTmap& map : maps) {
        const int label = map_label_index(map);
        const auto probs = vit_forward(map, params, false, nullptr, red);
        const int pred = probs[1] > probs[0] ? 1 : 0;
        ++stats.total;
        ++stats.confusion[label][pred];
        if (pred == label) ++stats.correct;
    }
    return stats;
}

// --- training loop ----------------------------------------------------------------

struct EpochMetrics {
    int epoch = 0;
    double train_loss = 0.0;
    double val_accuracy = 0.0;
};

struct TrainResult {
    ViTParams params;  // best-validation checkpoint
    std::vector<EpochMetrics> log;
    double best_val_accuracy = 0.0;
    int best_epoch = 0;
};

/// Seeded, sequential, bit-reproducible: per-epoch shuffled batches, Adam
/// updates, validation after each epoch, best-validation checkpoint retained.
inline TrainResult train_loop(const std::vector<MEMSTmap>& train_set,
                              const std::vector<MEMSTmap>& val_set, ViTConfig vit_config,
                              const TrainConfig& tc) {
    validate(tc);
    require(!train_set.empty(), "training split is empty");
    require(!val_set.empty(), "validation split is empty");
    vit_config.dropout_rate = tc.dropout_rate;
    validate(vit_config);

    Rng rng(tc.seed);
    ViTParams params = init_params(vit_config, rng);
    ViTParams grads = make_zero_like(vit_config);
    AdamState adam = make_adam_state(vit_config);

    TrainResult result;
    result.params = params;

    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 1; epoch <= tc.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0.0;
        std::size_t seen = 0;
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(tc.batch_size)) {
            std::vector<const MEMSTmap*> batch;
            for (std::size_t i = start;
                 i < std::min(order.size(), start + static_cast<std::size_t>(tc.batch_size)); ++i)
                batch.push_back(&train_set[order[i]]);
            double loss;
            try {
                loss = batch_backward(batch, params, rng, grads);
            } catch (const Error& e) {
                fail("epoch " + std::to_string(epoch) + ", batch at sample " +
                     std::to_string(start) + ": " + e.what());
            }
            loss_sum += loss * static_cast<double>(batch.size());
            seen += batch.size();
            adam_step(params, grads, adam, tc);
        }

        EpochMetrics m;
        m.epoch = epoch;
        m.train_loss = loss_sum / static_cast<double>(seen);
        m.val_accuracy = evaluate_maps(val_set, params).accuracy();
        result.log.push_back(m);

        if (m.val_accuracy > result.best_val_accuracy || result.log.size() == 1) {
            result.best_val_accuracy = m.val_accuracy;
            result.best_epoch = epoch;
            result.params = params;
        }
        if (tc.early_stop_val_acc > 0.0 && m.val_accuracy >= tc.early_stop_val_acc) break;
    }
    return result;
}

}  // namespace evmst
