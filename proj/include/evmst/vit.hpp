#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "evmst/common.hpp"
#include "evmst/patchseq.hpp"

namespace evmst {

struct ViTConfig {
    int hidden_dim = 64;    // D
    int num_layers = 2;     // L
    int num_heads = 4;      // H
    int mlp_dim = 128;      // F
    int num_patches = 196;  // P, fixed for this artifact
    int patch_dim = kPatchDim;
    int num_classes = 2;
    double dropout_rate = 0.1;

    int tokens() const { return num_patches + 1; }
    int head_dim() const { return hidden_dim / num_heads; }
};

inline void validate(const ViTConfig& c) {
    require(c.hidden_dim > 0 && c.num_heads > 0 && c.hidden_dim % c.num_heads == 0,
            "hidden dim must be divisible by the head count");
    require(c.num_layers >= 0, "layer count must be >= 0");
    require(c.mlp_dim > 0, "mlp dim must be positive");
    require(c.num_patches == kSeqLen, "this artifact is fixed at 196 patches");
    require(c.patch_dim == kPatchDim, "patch dim must be 768 (16*16*3)");
    require(c.num_classes == 2, "binary classifier: num_classes must be 2");
    require(c.dropout_rate >= 0.0 && c.dropout_rate < 1.0, "dropout rate must lie in [0, 1)");
}

inline ViTConfig toy_config() {
    ViTConfig c;
    c.hidden_dim = 64;
    c.num_layers = 2;
    c.num_heads = 4;
    c.mlp_dim = 128;
    return c;
}

inline ViTConfig base_config() {
    ViTConfig c;
    c.hidden_dim = 768;
    c.num_layers = 12;
    c.num_heads = 12;
    c.mlp_dim = 3072;
    return c;
}

// --- tensors ------------------------------------------------------------------------

struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    void reshape(std::vector<std::size_t> s) {
        shape = std::move(s);
        std::size_t n = 1;
        for (std::size_t d : shape) n *= d;
        data.assign(n, 0.0);
    }
    std::size_t numel() const { return data.size(); }
    double* ptr() { return data.data(); }
    const double* ptr() const { return data.data(); }
};

struct LayerParams {
    Tensor norm1_w, norm1_b;
    Tensor q_w, q_b, k_w, k_b, v_w, v_b;  // weights are (in x out)
    Tensor proj_w, proj_b;
    Tensor norm2_w, norm2_b;
    Tensor fc1_w, fc1_b, fc2_w, fc2_b;
};

struct ViTParams {
    ViTConfig config;
    Tensor patch_w, patch_b;  // 768 x D, D
    Tensor cls_token;         // D
    Tensor pos_embed;         // (P+1) x D
    std::vector<LayerParams> blocks;
    Tensor norm_w, norm_b;  // final LayerNorm
    Tensor head_w, head_b;  // D x 2, 2
};

/// Allocates every tensor for the config, zero-filled (LayerNorm scales = 1).
inline ViTParams make_params(const ViTConfig& config) {
    validate(config);
    const auto d = static_cast<std::size_t>(config.hidden_dim);
    const auto f = static_cast<std::size_t>(config.mlp_dim);
    const auto t = static_cast<std::size_t>(config.tokens());
    const auto c = static_cast<std::size_t>(config.num_classes);

    ViTParams p;
    p.config = config;
    p.patch_w.reshape({static_cast<std::size_t>(config.patch_dim), d});
    p.patch_b.reshape({d});
    p.cls_token.reshape({d});
    p.pos_embed.reshape({t, d});
    p.blocks.resize(static_cast<std::size_t>(config.num_layers));
    for (auto& blk : p.blocks) {
        blk.norm1_w.reshape({d});
        blk.norm1_b.reshape({d});
        for (Tensor* w : {&blk.q_w, &blk.k_w, &blk.v_w, &blk.proj_w}) w->reshape({d, d});
        for (Tensor* b : {&blk.q_b, &blk.k_b, &blk.v_b, &blk.proj_b}) b->reshape({d});
        blk.norm2_w.reshape({d});
        blk.norm2_b.reshape({d});
        blk.fc1_w.reshape({d, f});
        blk.fc1_b.reshape({f});
        blk.fc2_w.reshape({f, d});
        blk.fc2_b.reshape({d});
    }
    p.norm_w.reshape({d});
    p.norm_b.reshape({d});
    p.head_w.reshape({d, c});
    p.head_b.reshape({c});

    for (auto& blk : p.blocks) {
        std::fill(blk.norm1_w.data.begin(), blk.norm1_w.data.end(), 1.0);
        std::fill(blk.norm2_w.data.begin(), blk.norm2_w.data.end(), 1.0);
    }
    std::fill(p.norm_w.data.begin(), p.norm_w.data.end(), 1.0);
    return p;
}

/// Truncated-normal(0.02) weight matrices; zero biases, class token, positions.
inline ViTParams init_params(const ViTConfig& config, Rng& rng) {
    ViTParams p = make_params(config);
    auto fill = [&](Tensor& w) {
        for (double& v : w.data) v = truncated_normal(rng, 0.02);
    };
    fill(p.patch_w);
    for (auto& blk : p.blocks) {
        fill(blk.q_w);
        fill(blk.k_w);
        fill(blk.v_w);
        fill(blk.proj_w);
        fill(blk.fc1_w);
        fill(blk.fc2_w);
    }
    fill(p.head_w);
    return p;
}

/// Every learnable tensor with a stable name, in a fixed order shared by
/// gradients, optimizer state, serialization, and the gradient checker.
template <typename Params, typename TensorPtr>
inline std::vector<std::pair<std::string, TensorPtr>> tensor_list_impl(Params& p) {
    std::vector<std::pair<std::string, TensorPtr>> list;
    list.emplace_back("patch_embed.weight", &p.patch_w);
    list.emplace_back("patch_embed.bias", &p.patch_b);
    list.emplace_back("cls_token", &p.cls_token);
    list.emplace_back("pos_embed", &p.pos_embed);
    for (std::size_t i = 0; i < p.blocks.size(); ++i) {
        auto& blk = p.blocks[i];
        const std::string base = "blocks." + std::to_string(i) + ".";
        list.emplace_back(base + "norm1.weight", &blk.norm1_w);
        list.emplace_back(base + "norm1.bias", &blk.norm1_b);
        list.emplace_back(base + "attn.q.weight", &blk.q_w);
        list.emplace_back(base + "attn.q.bias", &blk.q_b);
        list.emplace_back(base + "attn.k.weight", &blk.k_w);
        list.emplace_back(base + "attn.k.bias", &blk.k_b);
        list.emplace_back(base + "attn.v.weight", &blk.v_w);
        list.emplace_back(base + "attn.v.bias", &blk.v_b);
        list.emplace_back(base + "attn.proj.weight", &blk.proj_w);
        list.emplace_back(base + "attn.proj.bias", &blk.proj_b);
        list.emplace_back(base + "norm2.weight", &blk.norm2_w);
        list.emplace_back(base + "norm2.bias", &blk.norm2_b);
        list.emplace_back(base + "mlp.fc1.weight", &blk.fc1_w);
        list.emplace_back(base + "mlp.fc1.bias", &blk.fc1_b);
        list.emplace_back(base + "mlp.fc2.weight", &blk.fc2_w);
        list.emplace_back(base + "mlp.fc2.bias", &blk.fc2_b);
    }
    list.emplace_back("norm.weight", &p.norm_w);
    list.emplace_back("norm.bias", &p.norm_b);
    list.emplace_back("head.weight", &p.head_w);
    list.emplace_back("head.bias", &p.head_b);
    return list;
}

inline std::vector<std::pair<std::string, Tensor*>> tensor_list(ViTParams& p) {
    return tensor_list_impl<ViTParams, Tensor*>(p);
}
inline std::vector<std::pair<std::string, const Tensor*>> tensor_list(const ViTParams& p) {
    return tensor_list_impl<const ViTParams, const Tensor*>(p);
}

// --- dense math helpers ---------------------------------------------------------------

namespace detail {

// c (n x p) += a (n x m) * b (m x p), all row-major
inline void matmul_acc(const double* a, const double* b, double* c, std::size_t n, std::size_t m,
                       std::size_t p) {
    for (std::size_t i = 0; i < n; ++i) {
        const double* ai = a + i * m;
        double* ci = c + i * p;
        for (std::size_t k = 0; k < m; ++k) {
            const double av = ai[k];
            const double* bk = b + k * p;
            for (std::size_t j = 0; j < p; ++j) ci[j] += av * bk[j];
        }
    }
}

// c (n x p) += transpose(a) * b with a (m x n), b (m x p)
inline void matmul_tn_acc(const double* a, const double* b, double* c, std::size_t n,
                          std::size_t m, std::size_t p) {
    for (std::size_t k = 0; k < m; ++k) {
        const double* ak = a + k * n;
        const double* bk = b + k * p;
        for (std::size_t i = 0; i < n; ++i) {
            const double av = ak[i];
            double* ci = c + i * p;
            for (std::size_t j = 0; j < p; ++j) ci[j] += av * bk[j];
        }
    }
}

inline void transpose(const double* src, std::size_t rows, std::size_t cols, double* dst) {
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) dst[c * rows + r] = src[r * cols + c];
}

// c (n x p) += a (n x m) * transpose(b) with b (p x m); goes through a scratch transpose
inline void matmul_nt_acc(const double* a, const double* b, double* c, std::size_t n,
                          std::size_t m, std::size_t p, std::vector<double>& scratch) {
    scratch.resize(m * p);
    transpose(b, p, m, scratch.data());
    matmul_acc(a, scratch.data(), c, n, m, p);
}

// y (t x out) = x (t x in) * w + b
inline void linear(const double* x, const Tensor& w, const Tensor& b, double* y, std::size_t t) {
    const std::size_t in = w.shape[0], out = w.shape[1];
    for (std::size_t i = 0; i < t; ++i)
        for (std::size_t j = 0; j < out; ++j) y[i * out + j] = b.data[j];
    matmul_acc(x, w.ptr(), y, t, in, out);
}

inline constexpr double kLnEps = 1e-12;

// out = scale * xhat + offset per row; caches xhat and 1/std for the backward pass
inline void layer_norm(const double* x, std::size_t t, std::size_t d, const Tensor& scale,
                       const Tensor& offset, double* out, double* xhat, double* invstd) {
    for (std::size_t i = 0; i < t; ++i) {
        const double* xi = x + i * d;
        double mean = 0.0;
        for (std::size_t j = 0; j < d; ++j) mean += xi[j];
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) var += (xi[j] - mean) * (xi[j] - mean);
        var /= static_cast<double>(d);
        const double is = 1.0 / std::sqrt(var + kLnEps);
        invstd[i] = is;
        for (std::size_t j = 0; j < d; ++j) {
            const double xh = (xi[j] - mean) * is;
            xhat[i * d + j] = xh;
            out[i * d + j] = scale.data[j] * xh + offset.data[j];
        }
    }
}

// accumulates dx from dout; also accumulates the scale/offset gradients
inline void layer_norm_backward(const double* dout, const double* xhat, const double* invstd,
                                std::size_t t, std::size_t d, const Tensor& scale, double* dx,
                                Tensor& dscale, Tensor& doffset) {
    std::vector<double> dxh(d);
    for (std::size_t i = 0; i < t; ++i) {
        const double* doi = dout + i * d;
        const double* xhi = xhat + i * d;
        double mean_dxh = 0.0, mean_dxh_xh = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            doffset.data[j] += doi[j];
            dscale.data[j] += doi[j] * xhi[j];
            dxh[j] = doi[j] * scale.data[j];
            mean_dxh += dxh[j];
            mean_dxh_xh += dxh[j] * xhi[j];
        }
        mean_dxh /= static_cast<double>(d);
        mean_dxh_xh /= static_cast<double>(d);
        for (std::size_t j = 0; j < d; ++j)
            dx[i * d + j] += invstd[i] * (dxh[j] - mean_dxh - xhi[j] * mean_dxh_xh);
    }
}

inline double gelu(double u) { return 0.5 * u * (1.0 + std::erf(u / std::numbers::sqrt2)); }

inline double gelu_grad(double u) {
    const double cdf = 0.5 * (1.0 + std::erf(u / std::numbers::sqrt2));
    const double pdf = std::exp(-0.5 * u * u) / std::sqrt(2.0 * std::numbers::pi);
    return cdf + u * pdf;
}

// ascending-sorted summation: the result depends only on the multiset of addends
inline double sum_sorted(std::vector<double>& buf) {
    std::sort(buf.begin(), buf.end());
    double acc = 0.0;
    for (double v : buf) acc += v;
    return acc;
}

inline bool all_finite(const double* x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i)
        if (!std::isfinite(x[i])) return false;
    return true;
}

}  // namespace detail

// --- forward ------------------------------------------------------------------------

/// Reduction order for the two cross-token sums in attention (softmax
/// denominator and the attention-weighted value average). Canonical sorts the
/// addends so the result is bit-independent of token order; Fast sums in index
/// order. Both are deterministic.
enum class AttnReduction { Fast, Canonical };

using Descriptor = std::vector<double>;

struct LayerCache {
    std::vector<double> x_in, xhat1, invstd1, h1;
    std::vector<double> q, k, v;
    std::vector<double> attn;  // H x T x T softmax rows
    std::vector<double> concat, x_mid;
    std::vector<double> xhat2, invstd2, h2;
    std::vector<double> u, g;  // mlp pre-activation and activation
};

struct Cache {
    std::vector<double> x0;  // embedded tokens, T x D
    std::vector<LayerCache> layers;
    std::vector<double> x_last_row;  // final-norm input (class-token row)
    std::vector<double> xhat_f;
    double invstd_f = 0.0;
    Descriptor descriptor;             // after final norm, before dropout
    std::vector<double> dropout_mask;  // inverted-scaling factors, one per dim
    std::array<double, 2> logits{}, probs{};
};

/// tokens = [class token; projected patches], each with its positional row added.
inline std::vector<double> embed(const PatchSequence& seq, const ViTParams& params) {
    const auto& c = params.config;
    const auto t = static_cast<std::size_t>(c.tokens());
    const auto d = static_cast<std::size_t>(c.hidden_dim);
    const auto pd = static_cast<std::size_t>(c.patch_dim);

    std::vector<double> x(t * d);
    for (std::size_t j = 0; j < d; ++j) x[j] = params.cls_token.data[j];
    for (std::size_t kt = 1; kt < t; ++kt)
        for (std::size_t j = 0; j < d; ++j) x[kt * d + j] = params.patch_b.data[j];
    detail::matmul_acc(seq.values.data(), params.patch_w.ptr(), x.data() + d, t - 1, pd, d);
    for (std::size_t i = 0; i < t * d; ++i) x[i] += params.pos_embed.data[i];
    require(detail::all_finite(x.data(), x.size()), "non-finite token embeddings");
    return x;
}

namespace detail {

inline void attention_forward(const ViTParams& params, std::size_t layer, AttnReduction red,
                              LayerCache& lc) {
    const auto& c = params.config;
    const auto t = static_cast<std::size_t>(c.tokens());
    const auto d = static_cast<std::size_t>(c.hidden_dim);
    const auto h = static_cast<std::size_t>(c.num_heads);
    const auto dh = static_cast<std::size_t>(c.head_dim());
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    const auto& blk = params.blocks[layer];

    lc.q.assign(t * d, 0.0);
    lc.k.assign(t * d, 0.0);
    lc.v.assign(t * d, 0.0);
    linear(lc.h1.data(), blk.q_w, blk.q_b, lc.q.data(), t);
    linear(lc.h1.data(), blk.k_w, blk.k_b, lc.k.data(), t);
    linear(lc.h1.data(), blk.v_w, blk.v_b, lc.v.data(), t);

    lc.attn.assign(h * t * t, 0.0);
    lc.concat.assign(t * d, 0.0);
    std::vector<double> qh(t * dh), kht(dh * t), vh(t * dh), buf(t);
    for (std::size_t head = 0; head < h; ++head) {
        const std::size_t off = head * dh;
        for (std::size_t i = 0; i < t; ++i)
            for (std::size_t j = 0; j < dh; ++j) {
                qh[i * dh + j] = lc.q[i * d + off + j] * scale;
                kht[j * t + i] = lc.k[i * d + off + j];
                vh[i * dh + j] = lc.v[i * d + off + j];
            }
        double* a = lc.attn.data() + head * t * t;
        matmul_acc(qh.data(), kht.data(), a, t, dh, t);
        // softmax rows with max subtraction
        for (std::size_t i = 0; i < t; ++i) {
            double* row = a + i * t;
            const double m = *std::max_element(row, row + t);
            for (std::size_t j = 0; j < t; ++j) row[j] = std::exp(row[j] - m);
            double denom;
            if (red == AttnReduction::Canonical) {
                buf.assign(row, row + t);
                denom = sum_sorted(buf);
            } else {
                denom = 0.0;
                for (std::size_t j = 0; j < t; ++j) denom += row[j];
            }
            for (std::size_t j = 0; j < t; ++j) row[j] /= denom;
        }
        if (red == AttnReduction::Canonical) {
            for (std::size_t i = 0; i < t; ++i)
                for (std::size_t j = 0; j < dh; ++j) {
                    buf.resize(t);
                    for (std::size_t kk = 0; kk < t; ++kk)
                        buf[kk] = a[i * t + kk] * vh[kk * dh + j];
                    lc.concat[i * d + off + j] = sum_sorted(buf);
                }
        } else {
            std::vector<double> oh(t * dh, 0.0);
            matmul_acc(a, vh.data(), oh.data(), t, t, dh);
            for (std::size_t i = 0; i < t; ++i)
                for (std::size_t j = 0; j < dh; ++j) lc.concat[i * d + off + j] = oh[i * dh + j];
        }
    }
}

}  // namespace detail

/// Pre-norm encoder over embedded tokens; returns the class-token row after the
/// final LayerNorm. Pure given (params, tokens, reduction); dropout lives in
/// the full forward, not here.
inline Descriptor encoder_forward(std::vector<double> tokens, const ViTParams& params,
                                  AttnReduction red = AttnReduction::Canonical,
                                  Cache* cache = nullptr) {
    const auto& c = params.config;
    const auto t = static_cast<std::size_t>(c.tokens());
    const auto d = static_cast<std::size_t>(c.hidden_dim);
    const auto f = static_cast<std::size_t>(c.mlp_dim);
    require(tokens.size() == t * d, "token matrix has wrong shape");

    Cache local;
    Cache& cc = cache ? *cache : local;
    cc.x0 = tokens;
    cc.layers.assign(static_cast<std::size_t>(c.num_layers), LayerCache{});

    std::vector<double> x = std::move(tokens);
    for (std::size_t layer = 0; layer < cc.layers.size(); ++layer) {
        const auto& blk = params.blocks[layer];
        LayerCache& lc = cc.layers[layer];
        lc.x_in = x;
        lc.xhat1.assign(t * d, 0.0);
        lc.invstd1.assign(t, 0.0);
        lc.h1.assign(t * d, 0.0);
        detail::layer_norm(lc.x_in.data(), t, d, blk.norm1_w, blk.norm1_b, lc.h1.data(),
                           lc.xhat1.data(), lc.invstd1.data());
        detail::attention_forward(params, layer, red, lc);

        lc.x_mid = lc.x_in;
        std::vector<double> attn_out(t * d, 0.0);
        detail::linear(lc.concat.data(), blk.proj_w, blk.proj_b, attn_out.data(), t);
        for (std::size_t i = 0; i < t * d; ++i) lc.x_mid[i] += attn_out[i];

        lc.xhat2.assign(t * d, 0.0);
        lc.invstd2.assign(t, 0.0);
        lc.h2.assign(t * d, 0.0);
        detail::layer_norm(lc.x_mid.data(), t, d, blk.norm2_w, blk.norm2_b, lc.h2.data(),
                           lc.xhat2.data(), lc.invstd2.data());
        lc.u.assign(t * f, 0.0);
        detail::linear(lc.h2.data(), blk.fc1_w, blk.fc1_b, lc.u.data(), t);
        lc.g.resize(t * f);
        for (std::size_t i = 0; i < t * f; ++i) lc.g[i] = detail::gelu(lc.u[i]);

        x = lc.x_mid;
        std::vector<double> mlp_out(t * d, 0.0);
        detail::linear(lc.g.data(), blk.fc2_w, blk.fc2_b, mlp_out.data(), t);
        for (std::size_t i = 0; i < t * d; ++i) x[i] += mlp_out[i];

        if (!detail::all_finite(x.data(), x.size()))
            fail("non-finite activations in encoder layer " + std::to_string(layer));
    }

    cc.x_last_row.assign(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(d));
    cc.xhat_f.assign(d, 0.0);
    Descriptor desc(d, 0.0);
    detail::layer_norm(cc.x_last_row.data(), 1, d, params.norm_w, params.norm_b, desc.data(),
                       cc.xhat_f.data(), &cc.invstd_f);
    require(detail::all_finite(desc.data(), d), "non-finite descriptor");
    cc.descriptor = desc;
    return desc;
}

/// Affine head + softmax (max-subtraction); always a valid distribution.
inline std::array<double, 2> classify_head(const Descriptor& desc, const ViTParams& params,
                                           std::array<double, 2>* logits_out = nullptr) {
    const auto d = static_cast<std::size_t>(params.config.hidden_dim);
    require(desc.size() == d, "descriptor has wrong length");
    std::array<double, 2> logits{params.head_b.data[0], params.head_b.data[1]};
    for (std::size_t j = 0; j < d; ++j) {
        logits[0] += desc[j] * params.head_w.data[j * 2];
        logits[1] += desc[j] * params.head_w.data[j * 2 + 1];
    }
    if (logits_out) *logits_out = logits;
    const double m = std::max(logits[0], logits[1]);
    const double e0 = std::exp(logits[0] - m), e1 = std::exp(logits[1] - m);
    return {e0 / (e0 + e1), e1 / (e0 + e1)};
}

/// Full forward pass. In train mode, inverted-scaling dropout is applied to
/// the descriptor (the model's output embedding) before the head; `rng` is
/// required only there. The cache carries everything the backward pass needs.
inline std::array<double, 2> vit_forward(const PatchSequence& seq, const ViTParams& params,
                                         bool train_mode = false, Rng* rng = nullptr,
                                         AttnReduction red = AttnReduction::Canonical,
                                         Cache* cache = nullptr) {
    Cache local;
    Cache& cc = cache ? *cache : local;
    Descriptor desc = encoder_forward(embed(seq, params), params, red, &cc);

    const auto d = static_cast<std::size_t>(params.config.hidden_dim);
    const double rate = params.config.dropout_rate;
    cc.dropout_mask.assign(d, 1.0);
    if (train_mode && rate > 0.0) {
        require(rng != nullptr, "train-mode forward needs an rng for dropout");
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        for (std::size_t j = 0; j < d; ++j)
            cc.dropout_mask[j] = unif(*rng) < rate ? 0.0 : 1.0 / (1.0 - rate);
    }
    Descriptor dropped(d);
    for (std::size_t j = 0; j < d; ++j) dropped[j] = desc[j] * cc.dropout_mask[j];

    cc.probs = classify_head(dropped, params, &cc.logits);
    return cc.probs;
}

inline std::array<double, 2> vit_forward(const MEMSTmap& map, const ViTParams& params,
                                         bool train_mode = false, Rng* rng = nullptr,
                                         AttnReduction red = AttnReduction::Canonical,
                                         Cache* cache = nullptr) {
    return vit_forward(map_to_patches(map), params, train_mode, rng, red, cache);
}

// --- backward ------------------------------------------------------------------------

/// Accumulates d(loss)/d(params) into `grads` given d(loss)/d(logits).
/// Requires the cache of a forward pass over the same sequence and params.
inline void vit_backward(const PatchSequence& seq, const ViTParams& params, const Cache& cache,
                         const std::array<double, 2>& dlogits, ViTParams& grads) {
    const auto& c = params.config;
    const auto t = static_cast<std::size_t>(c.tokens());
    const auto d = static_cast<std::size_t>(c.hidden_dim);
    const auto f = static_cast<std::size_t>(c.mlp_dim);
    const auto h = static_cast<std::size_t>(c.num_heads);
    const auto dh = static_cast<std::size_t>(c.head_dim());
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    require(cache.layers.size() == static_cast<std::size_t>(c.num_layers),
            "cache does not match the parameter config");

    std::vector<double> scratch;

    // head
    std::vector<double> ddesc(d, 0.0);
    for (std::size_t j = 0; j < d; ++j) {
        const double dropped = cache.descriptor[j] * cache.dropout_mask[j];
        grads.head_w.data[j * 2] += dropped * dlogits[0];
        grads.head_w.data[j * 2 + 1] += dropped * dlogits[1];
        ddesc[j] = (params.head_w.data[j * 2] * dlogits[0] +
                    params.head_w.data[j * 2 + 1] * dlogits[1]) *
                   cache.dropout_mask[j];
    }
    grads.head_b.data[0] += dlogits[0];
    grads.head_b.data[1] += dlogits[1];

    // final norm (class-token row only)
    std::vector<double> dx(t * d, 0.0);
    detail::layer_norm_backward(ddesc.data(), cache.xhat_f.data(), &cache.invstd_f, 1, d,
                                params.norm_w, dx.data(), grads.norm_w, grads.norm_b);

    for (std::size_t layer = cache.layers.size(); layer-- > 0;) {
        const auto& blk = params.blocks[layer];
        auto& gblk = grads.blocks[layer];
        const LayerCache& lc = cache.layers[layer];

        // mlp branch: x_out = x_mid + gelu(norm2(x_mid) fc1) fc2
        std::vector<double> dg(t * f, 0.0);
        detail::matmul_nt_acc(dx.data(), blk.fc2_w.ptr(), dg.data(), t, d, f, scratch);
        detail::matmul_tn_acc(lc.g.data(), dx.data(), gblk.fc2_w.ptr(), f, t, d);
        for (std::size_t i = 0; i < t; ++i)
            for (std::size_t j = 0; j < d; ++j) gblk.fc2_b.data[j] += dx[i * d + j];

        std::vector<double> du(t * f);
        for (std::size_t i = 0; i < t * f; ++i) du[i] = dg[i] * detail::gelu_grad(lc.u[i]);

        std::vector<double> dh2(t * d, 0.0);
        detail::matmul_nt_acc(du.data(), blk.fc1_w.ptr(), dh2.data(), t, f, d, scratch);
        detail::matmul_tn_acc(lc.h2.data(), du.data(), gblk.fc1_w.ptr(), d, t, f);
        for (std::size_t i = 0; i < t; ++i)
            for (std::size_t j = 0; j < f; ++j) gblk.fc1_b.data[j] += du[i * f + j];

        // dx becomes d(x_mid): residual path + norm2 path
        detail::layer_norm_backward(dh2.data(), lc.xhat2.data(), lc.invstd2.data(), t, d,
                                    blk.norm2_w, dx.data(), gblk.norm2_w, gblk.norm2_b);

        // attention branch: x_mid = x_in + proj(concat)
        std::vector<double> dconcat(t * d, 0.0);
        detail::matmul_nt_acc(dx.data(), blk.proj_w.ptr(), dconcat.data(), t, d, d, scratch);
        detail::matmul_tn_acc(lc.concat.data(), dx.data(), gblk.proj_w.ptr(), d, t, d);
        for (std::size_t i = 0; i < t; ++i)
            for (std::size_t j = 0; j < d; ++j) gblk.proj_b.data[j] += dx[i * d + j];

        std::vector<double> dq(t * d, 0.0), dk(t * d, 0.0), dv(t * d, 0.0);
        std::vector<double> doh(t * dh), vh(t * dh), qh(t * dh), kh(t * dh);
        std::vector<double> da(t * t), ds(t * t), dqh(t * dh, 0.0), dkh(t * dh, 0.0),
            dvh(t * dh, 0.0);
        for (std::size_t head = 0; head < h; ++head) {
            const std::size_t off = head * dh;
            for (std::size_t i = 0; i < t; ++i)
                for (std::size_t j = 0; j < dh; ++j) {
                    doh[i * dh + j] = dconcat[i * d + off + j];
                    vh[i * dh + j] = lc.v[i * d + off + j];
                    qh[i * dh + j] = lc.q[i * d + off + j];
                    kh[i * dh + j] = lc.k[i * d + off + j];
                }
            const double* a = lc.attn.data() + head * t * t;
            std::fill(da.begin(), da.end(), 0.0);
            detail::matmul_nt_acc(doh.data(), vh.data(), da.data(), t, dh, t, scratch);
            std::fill(dvh.begin(), dvh.end(), 0.0);
            detail::matmul_tn_acc(a, doh.data(), dvh.data(), t, t, dh);
            // softmax backward per row
            for (std::size_t i = 0; i < t; ++i) {
                double dot = 0.0;
                for (std::size_t j = 0; j < t; ++j) dot += da[i * t + j] * a[i * t + j];
                for (std::size_t j = 0; j < t; ++j)
                    ds[i * t + j] = a[i * t + j] * (da[i * t + j] - dot);
            }
            std::fill(dqh.begin(), dqh.end(), 0.0);
            detail::matmul_acc(ds.data(), kh.data(), dqh.data(), t, t, dh);
            std::fill(dkh.begin(), dkh.end(), 0.0);
            detail::matmul_tn_acc(ds.data(), qh.data(), dkh.data(), t, t, dh);
            for (std::size_t i = 0; i < t; ++i)
                for (std::size_t j = 0; j < dh; ++j) {
                    dq[i * d + off + j] += dqh[i * dh + j] * scale;
                    dv[i * d + off + j] += dvh[i * dh + j];
                }
            for (std::size_t i = 0; i < t; ++i)
                for (std::size_t j = 0; j < dh; ++j) dk[i * d + off + j] += dkh[i * dh + j] * scale;
        }

        std::vector<double> dh1(t * d, 0.0);
        detail::matmul_nt_acc(dq.data(), blk.q_w.ptr(), dh1.data(), t, d, d, scratch);
        detail::matmul_nt_acc(dk.data(), blk.k_w.ptr(), dh1.data(), t, d, d, scratch);
        detail::matmul_nt_acc(dv.data(), blk.v_w.ptr(), dh1.data(), t, d, d, scratch);
        detail::matmul_tn_acc(lc.h1.data(), dq.data(), gblk.q_w.ptr(), d, t, d);
        detail::matmul_tn_acc(lc.h1.data(), dk.data(), gblk.k_w.ptr(), d, t, d);
        detail::matmul_tn_acc(lc.h1.data(), dv.data(), gblk.v_w.ptr(), d, t, d);
        for (std::size_t i = 0; i < t; ++i)
            for (std::size_t j = 0; j < d; ++j) {
                gblk.q_b.data[j] += dq[i * d + j];
                gblk.k_b.data[j] += dk[i * d + j];
                gblk.v_b.data[j] += dv[i * d + j];
            }
        detail::layer_norm_backward(dh1.data(), lc.xhat1.data(), lc.invstd1.data(), t, d,
                                    blk.norm1_w, dx.data(), gblk.norm1_w, gblk.norm1_b);
    }

    // embedding backward
    for (std::size_t i = 0; i < t * d; ++i) grads.pos_embed.data[i] += dx[i];
    for (std::size_t j = 0; j < d; ++j) grads.cls_token.data[j] += dx[j];
    detail::matmul_tn_acc(seq.values.data(), dx.data() + d, grads.patch_w.ptr(),
                          static_cast<std::size_t>(c.patch_dim), t - 1, d);
    for (std::size_t i = 1; i < t; ++i)
        for (std::size_t j = 0; j < d; ++j) grads.patch_b.data[j] += dx[i * d + j];
}

}  // namespace evmst
