#include <gtest/gtest.h>

#include <json.hpp>

#include <evmst/train.hpp>
#include <evmst/vit.hpp>
#include <evmst/vit_io.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

using namespace evmst;

namespace {

namespace fs = std::filesystem;

fs::path fresh_dir(const std::string& name) {
    auto dir = fs::temp_directory_path() / "evmst_vit_test" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

MEMSTmap random_map(std::uint64_t seed) {
    Rng rng(seed);
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    MEMSTmap map;
    for (float& v : map.values) v = static_cast<float>(dist(rng));
    return map;
}

// torch-style export: JSON manifest plus a little-endian f32 blob
struct ExportBuilder {
    nlohmann::json tensors = nlohmann::json::array();
    std::vector<unsigned char> blob;

    void add(const std::string& name, const std::vector<std::size_t>& shape,
             const std::vector<double>& values) {
        const std::uint64_t offset = blob.size();
        for (double v : values) {
            const float f = static_cast<float>(v);
            unsigned char b[4];
            std::memcpy(b, &f, 4);
            blob.insert(blob.end(), b, b + 4);
        }
        tensors.push_back({{"name", name}, {"shape", shape}, {"offset", offset}, {"dtype", "f32"}});
    }

    std::pair<std::string, std::string> write(const fs::path& dir) const {
        auto manifest = (dir / "manifest.json").string();
        auto blob_path = (dir / "weights.bin").string();
        std::ofstream(manifest) << nlohmann::json{{"tensors", tensors}}.dump();
        write_file_bytes(blob_path, blob.data(), blob.size());
        return {manifest, blob_path};
    }
};

// lays params out the way a torch checkpoint would store them
ExportBuilder torch_style_export(const ViTParams& params, bool include_head) {
    const auto d = static_cast<std::size_t>(params.config.hidden_dim);
    const auto f = static_cast<std::size_t>(params.config.mlp_dim);
    const auto t = static_cast<std::size_t>(params.config.tokens());
    ExportBuilder ex;

    ex.add("cls_token", {1, 1, d}, params.cls_token.data);
    ex.add("pos_embed", {1, t, d}, params.pos_embed.data);

    std::vector<double> conv(d * 3 * 16 * 16);
    for (std::size_t o = 0; o < d; ++o)
        for (std::size_t ch = 0; ch < 3; ++ch)
            for (std::size_t r = 0; r < 16; ++r)
                for (std::size_t col = 0; col < 16; ++col)
                    conv[((o * 3 + ch) * 16 + r) * 16 + col] =
                        params.patch_w.data[((r * 16 + col) * 3 + ch) * d + o];
    ex.add("patch_embed.proj.weight", {d, 3, 16, 16}, conv);
    ex.add("patch_embed.proj.bias", {d}, params.patch_b.data);

    auto transposed = [&](const Tensor& w) {
        const std::size_t in = w.shape[0], out = w.shape[1];
        std::vector<double> raw(in * out);
        for (std::size_t o = 0; o < out; ++o)
            for (std::size_t i = 0; i < in; ++i) raw[o * in + i] = w.data[i * out + o];
        return raw;
    };

    for (std::size_t i = 0; i < params.blocks.size(); ++i) {
        const auto& blk = params.blocks[i];
        const std::string base = "blocks." + std::to_string(i) + ".";
        ex.add(base + "norm1.weight", {d}, blk.norm1_w.data);
        ex.add(base + "norm1.bias", {d}, blk.norm1_b.data);

        std::vector<double> qkv_w(3 * d * d), qkv_b(3 * d);
        const Tensor* ws[3] = {&blk.q_w, &blk.k_w, &blk.v_w};
        const Tensor* bs[3] = {&blk.q_b, &blk.k_b, &blk.v_b};
        for (int part = 0; part < 3; ++part) {
            for (std::size_t o = 0; o < d; ++o) {
                for (std::size_t in = 0; in < d; ++in)
                    qkv_w[(static_cast<std::size_t>(part) * d + o) * d + in] =
                        ws[part]->data[in * d + o];
                qkv_b[static_cast<std::size_t>(part) * d + o] = bs[part]->data[o];
            }
        }
        ex.add(base + "attn.qkv.weight", {3 * d, d}, qkv_w);
        ex.add(base + "attn.qkv.bias", {3 * d}, qkv_b);
        ex.add(base + "attn.proj.weight", {d, d}, transposed(blk.proj_w));
        ex.add(base + "attn.proj.bias", {d}, blk.proj_b.data);
        ex.add(base + "norm2.weight", {d}, blk.norm2_w.data);
        ex.add(base + "norm2.bias", {d}, blk.norm2_b.data);
        ex.add(base + "mlp.fc1.weight", {f, d}, transposed(blk.fc1_w));
        ex.add(base + "mlp.fc1.bias", {f}, blk.fc1_b.data);
        ex.add(base + "mlp.fc2.weight", {d, f}, transposed(blk.fc2_w));
        ex.add(base + "mlp.fc2.bias", {d}, blk.fc2_b.data);
    }
    ex.add("norm.weight", {d}, params.norm_w.data);
    ex.add("norm.bias", {d}, params.norm_b.data);
    if (include_head) {
        ex.add("head.weight", {2, d}, transposed(params.head_w));
        ex.add("head.bias", {2}, params.head_b.data);
    }
    return ex;
}

double as_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

void expect_equal_after_f32(const ViTParams& got, const ViTParams& want) {
    const auto got_list = tensor_list(got);
    const auto want_list = tensor_list(want);
    ASSERT_EQ(got_list.size(), want_list.size());
    for (std::size_t i = 0; i < got_list.size(); ++i) {
        ASSERT_EQ(got_list[i].first, want_list[i].first);
        const auto& g = got_list[i].second->data;
        const auto& w = want_list[i].second->data;
        ASSERT_EQ(g.size(), w.size()) << got_list[i].first;
        for (std::size_t j = 0; j < g.size(); ++j)
            ASSERT_EQ(g[j], as_f32(w[j])) << got_list[i].first << "[" << j << "]";
    }
}

}  // namespace

TEST(ViTConfig, ValidationCatchesBadShapes) {
    EXPECT_NO_THROW(validate(toy_config()));

    ViTConfig c = toy_config();
    c.hidden_dim = 65;
    EXPECT_THROW(validate(c), Error);

    c = toy_config();
    c.num_patches = 100;
    EXPECT_THROW(validate(c), Error);

    c = toy_config();
    c.patch_dim = 512;
    EXPECT_THROW(validate(c), Error);

    c = toy_config();
    c.dropout_rate = 1.0;
    EXPECT_THROW(validate(c), Error);

    c = toy_config();
    c.num_classes = 3;
    EXPECT_THROW(validate(c), Error);
}

TEST(Embed, PlacesClassTokenPatchesAndPositions) {
    ViTConfig cfg = toy_config();
    ViTParams params = make_params(cfg);
    const std::size_t d = 64;
    for (std::size_t j = 0; j < d; ++j) {
        params.cls_token.data[j] = static_cast<double>(j) + 1.0;
        params.patch_b.data[j] = 0.5 * static_cast<double>(j);
    }
    for (int i = 0; i < cfg.tokens(); ++i)
        for (std::size_t j = 0; j < d; ++j)
            params.pos_embed.data[static_cast<std::size_t>(i) * d + j] = 1000.0 * i;

    PatchSequence seq;
    Rng rng(3);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    for (double& v : seq.values) v = dist(rng);

    // zero patch projection: tokens are bias + position only
    std::vector<double> x = embed(seq, params);
    ASSERT_EQ(x.size(), 197u * 64u);
    for (std::size_t j = 0; j < d; ++j) EXPECT_DOUBLE_EQ(x[j], static_cast<double>(j) + 1.0);
    for (int k = 1; k < 197; ++k)
        for (std::size_t j = 0; j < d; ++j)
            EXPECT_DOUBLE_EQ(x[static_cast<std::size_t>(k) * d + j], 0.5 * static_cast<double>(j) + 1000.0 * k);

    // identity rows in the projection read the patch values straight through
    for (std::size_t p = 0; p < 768; ++p)
        for (std::size_t o = 0; o < d; ++o) params.patch_w.data[p * d + o] = p == o ? 1.0 : 0.0;
    x = embed(seq, params);
    for (int k = 1; k < 197; ++k)
        for (std::size_t j = 0; j < d; ++j)
            EXPECT_DOUBLE_EQ(x[static_cast<std::size_t>(k) * d + j],
                             0.5 * static_cast<double>(j) + 1000.0 * k +
                                 seq.at(k - 1, static_cast<int>(j)));
}

TEST(LayerNormDetail, NormalizesEachRowToZeroMeanUnitVariance) {
    const std::size_t d = 4;
    std::vector<double> x{1.0, 2.0, 3.0, 4.0, -7.0, 0.0, 5.0, 2.0};
    Tensor scale, offset;
    scale.reshape({d});
    offset.reshape({d});
    std::fill(scale.data.begin(), scale.data.end(), 1.0);

    std::vector<double> out(8), xhat(8), invstd(2);
    detail::layer_norm(x.data(), 2, d, scale, offset, out.data(), xhat.data(), invstd.data());
    for (std::size_t row = 0; row < 2; ++row) {
        double mean = 0.0, var = 0.0;
        for (std::size_t j = 0; j < d; ++j) mean += out[row * d + j];
        mean /= 4.0;
        for (std::size_t j = 0; j < d; ++j)
            var += (out[row * d + j] - mean) * (out[row * d + j] - mean);
        var /= 4.0;
        EXPECT_NEAR(mean, 0.0, 1e-12);
        EXPECT_NEAR(var, 1.0, 1e-9);
    }
    // order within a row is preserved
    EXPECT_LT(out[0], out[1]);
    EXPECT_LT(out[4], out[5]);

    // scale and offset act per dimension after normalization
    Tensor s2, b2;
    s2.reshape({d});
    b2.reshape({d});
    std::fill(s2.data.begin(), s2.data.end(), 2.0);
    std::fill(b2.data.begin(), b2.data.end(), 7.0);
    std::vector<double> out2(8), xhat2(8), invstd2(2);
    detail::layer_norm(x.data(), 2, d, s2, b2, out2.data(), xhat2.data(), invstd2.data());
    for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(out2[i], 2.0 * out[i] + 7.0);
}

TEST(LayerNormDetail, ConstantRowsHitTheEpsilonFloor) {
    const std::size_t d = 4;
    std::vector<double> x{5.0, 5.0, 5.0, 5.0};
    Tensor scale, offset;
    scale.reshape({d});
    offset.reshape({d});
    std::fill(scale.data.begin(), scale.data.end(), 1.0);

    std::vector<double> out(4), xhat(4);
    double invstd = 0.0;
    detail::layer_norm(x.data(), 1, d, scale, offset, out.data(), xhat.data(), &invstd);
    for (double v : out) EXPECT_EQ(v, 0.0);
    EXPECT_NEAR(invstd, 1e6, 1.0);  // 1/sqrt(eps) with eps = 1e-12
}

TEST(GeluDetail, MatchesTheNormalCdfForm) {
    EXPECT_EQ(detail::gelu(0.0), 0.0);
    EXPECT_NEAR(detail::gelu(1.0), 0.8413447460685429, 1e-12);
    EXPECT_NEAR(detail::gelu(-1.0), -0.15865525393145707, 1e-12);
    EXPECT_NEAR(detail::gelu_grad(0.0), 0.5, 1e-15);

    const double u = 0.7, h = 1e-6;
    const double numeric = (detail::gelu(u + h) - detail::gelu(u - h)) / (2.0 * h);
    EXPECT_NEAR(detail::gelu_grad(u), numeric, 1e-9);
}

TEST(Attention, ZeroQueriesAndKeysGiveUniformRows) {
    ViTConfig cfg = toy_config();
    cfg.num_layers = 1;
    ViTParams params = make_params(cfg);
    Rng rng(7);
    for (double& v : params.blocks[0].v_w.data) v = truncated_normal(rng, 0.1);
    for (double& v : params.blocks[0].v_b.data) v = truncated_normal(rng, 0.1);

    PatchSequence seq;
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    for (double& v : seq.values) v = dist(rng);
    for (std::size_t i = 0; i < params.pos_embed.numel(); ++i)
        params.pos_embed.data[i] = dist(rng);

    Cache cache;
    vit_forward(seq, params, false, nullptr, AttnReduction::Canonical, &cache);

    const std::size_t t = 197, d = 64, dh = 16;
    const LayerCache& lc = cache.layers[0];
    for (std::size_t h = 0; h < 4; ++h)
        for (std::size_t i = 0; i < t; ++i)
            for (std::size_t j = 0; j < t; ++j)
                EXPECT_DOUBLE_EQ(lc.attn[(h * t + i) * t + j], 1.0 / 197.0);

    // with uniform attention every token's output is the same value average
    for (std::size_t h = 0; h < 4; ++h) {
        const std::size_t off = h * dh;
        for (std::size_t j = 0; j < dh; ++j) {
            double mean = 0.0;
            for (std::size_t i = 0; i < t; ++i) mean += lc.v[i * d + off + j];
            mean /= static_cast<double>(t);
            for (std::size_t i = 0; i < t; ++i) {
                EXPECT_EQ(lc.concat[i * d + off + j], lc.concat[off + j]);
                EXPECT_NEAR(lc.concat[i * d + off + j], mean, 1e-12);
            }
        }
    }
}

TEST(Attention, SoftmaxRowsAreDistributions) {
    Rng rng(11);
    ViTParams params = dense_random_params(toy_config(), rng);
    PatchSequence seq = map_to_patches(random_map(13));

    Cache cache;
    vit_forward(seq, params, false, nullptr, AttnReduction::Fast, &cache);
    const std::size_t t = 197;
    for (const LayerCache& lc : cache.layers)
        for (std::size_t h = 0; h < 4; ++h)
            for (std::size_t i = 0; i < t; ++i) {
                double sum = 0.0;
                for (std::size_t j = 0; j < t; ++j) {
                    const double a = lc.attn[(h * t + i) * t + j];
                    EXPECT_GE(a, 0.0);
                    sum += a;
                }
                EXPECT_NEAR(sum, 1.0, 1e-12);
            }
}

TEST(Forward, ReductionsAgreeAnalytically) {
    Rng rng(17);
    ViTParams params = dense_random_params(toy_config(), rng);
    PatchSequence seq = map_to_patches(random_map(19));
    auto fast = vit_forward(seq, params, false, nullptr, AttnReduction::Fast);
    auto canon = vit_forward(seq, params, false, nullptr, AttnReduction::Canonical);
    EXPECT_NEAR(fast[0], canon[0], 1e-9);
    EXPECT_NEAR(fast[1], canon[1], 1e-9);
}

TEST(Forward, CanonicalReductionIsBitExactUnderTokenPermutation) {
    Rng rng(23);
    ViTParams params = dense_random_params(toy_config(), rng);
    PatchSequence seq = map_to_patches(random_map(29));

    std::vector<int> perm(196);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);

    PatchSequence shuffled;
    for (int k = 0; k < 196; ++k)
        for (int i = 0; i < kPatchDim; ++i) shuffled.at(k, i) = seq.at(perm[static_cast<std::size_t>(k)], i);
    ViTParams moved = params;
    const std::size_t d = 64;
    for (int k = 0; k < 196; ++k)
        for (std::size_t j = 0; j < d; ++j)
            moved.pos_embed.data[static_cast<std::size_t>(1 + k) * d + j] =
                params.pos_embed.data[static_cast<std::size_t>(1 + perm[static_cast<std::size_t>(k)]) * d + j];

    auto base = vit_forward(seq, params, false, nullptr, AttnReduction::Canonical);
    auto permuted = vit_forward(shuffled, moved, false, nullptr, AttnReduction::Canonical);
    EXPECT_EQ(base[0], permuted[0]);
    EXPECT_EQ(base[1], permuted[1]);
}

TEST(Forward, DescriptorComesFromTheClassTokenRow) {
    ViTConfig cfg = toy_config();
    cfg.num_layers = 0;  // nothing mixes tokens, so patches cannot reach row 0
    Rng rng(31);
    ViTParams params = dense_random_params(cfg, rng);

    Descriptor a = encoder_forward(embed(map_to_patches(random_map(37)), params), params);
    Descriptor b = encoder_forward(embed(map_to_patches(random_map(41)), params), params);
    EXPECT_EQ(a, b);

    ViTParams deep = dense_random_params(toy_config(), rng);
    Descriptor c = encoder_forward(embed(map_to_patches(random_map(37)), deep), deep);
    Descriptor e = encoder_forward(embed(map_to_patches(random_map(41)), deep), deep);
    EXPECT_NE(c, e);
}

TEST(ClassifyHead, ShiftInvariantAndOverflowSafe) {
    ViTConfig cfg = toy_config();
    Rng rng(43);
    ViTParams params = dense_random_params(cfg, rng);
    Descriptor desc(64);
    std::uniform_real_distribution<double> dist(-2.0, 2.0);
    for (double& v : desc) v = dist(rng);

    auto probs = classify_head(desc, params);
    ViTParams shifted = params;
    shifted.head_b.data[0] += 123.0;
    shifted.head_b.data[1] += 123.0;
    auto probs2 = classify_head(desc, shifted);
    EXPECT_NEAR(probs[0], probs2[0], 1e-12);
    EXPECT_NEAR(probs[1], probs2[1], 1e-12);

    ViTParams extreme = make_params(cfg);
    extreme.head_b.data = {1e4, -1e4};
    std::array<double, 2> logits{};
    auto p = classify_head(Descriptor(64, 0.0), extreme, &logits);
    EXPECT_EQ(logits[0], 1e4);
    EXPECT_TRUE(std::isfinite(p[0]) && std::isfinite(p[1]));
    EXPECT_DOUBLE_EQ(p[0] + p[1], 1.0);
    EXPECT_GT(p[0], 0.999);

    extreme.head_b.data = {-1e4, 1e4};
    p = classify_head(Descriptor(64, 0.0), extreme);
    EXPECT_GT(p[1], 0.999);
}

TEST(Forward, EvalModeIsDeterministic) {
    Rng rng(47);
    ViTParams params = dense_random_params(toy_config(), rng);
    MEMSTmap map = random_map(53);
    auto a = vit_forward(map, params);
    auto b = vit_forward(map, params);
    EXPECT_EQ(a[0], b[0]);
    EXPECT_EQ(a[1], b[1]);
}

TEST(Forward, DropoutIsSeededAndInvertedScale) {
    Rng rng(59);
    ViTParams params = dense_random_params(toy_config(), rng);
    MEMSTmap map = random_map(61);

    Rng d1(7), d2(7);
    Cache c1, c2;
    auto a = vit_forward(map, params, true, &d1, AttnReduction::Fast, &c1);
    auto b = vit_forward(map, params, true, &d2, AttnReduction::Fast, &c2);
    EXPECT_EQ(a[0], b[0]);
    EXPECT_EQ(c1.dropout_mask, c2.dropout_mask);
    for (double m : c1.dropout_mask)
        EXPECT_TRUE(m == 0.0 || m == 1.0 / 0.9) << m;

    Cache ce;
    vit_forward(map, params, false, nullptr, AttnReduction::Fast, &ce);
    for (double m : ce.dropout_mask) EXPECT_EQ(m, 1.0);

    ViTParams no_drop = params;
    no_drop.config.dropout_rate = 0.0;
    Rng d3(7);
    auto train_probs = vit_forward(map, no_drop, true, &d3, AttnReduction::Fast);
    auto eval_probs = vit_forward(map, no_drop, false, nullptr, AttnReduction::Fast);
    EXPECT_EQ(train_probs[0], eval_probs[0]);

    EXPECT_THROW(vit_forward(map, params, true, nullptr), Error);
}

TEST(WeightsContainer, RoundTripsThroughF32) {
    auto dir = fresh_dir("vitw_roundtrip");
    auto path = (dir / "model.vitw").string();
    Rng rng(67);
    ViTConfig cfg = toy_config();
    cfg.dropout_rate = 0.1;
    ViTParams params = init_params(cfg, rng);

    write_weights(path, params);
    ViTParams back = read_weights(path);
    EXPECT_EQ(back.config.hidden_dim, 64);
    EXPECT_EQ(back.config.num_layers, 2);
    EXPECT_EQ(back.config.num_heads, 4);
    EXPECT_EQ(back.config.mlp_dim, 128);
    EXPECT_DOUBLE_EQ(back.config.dropout_rate, as_f32(0.1));
    expect_equal_after_f32(back, params);

    // a second write of the re-read params is byte-identical (already f32)
    auto path2 = (dir / "model2.vitw").string();
    write_weights(path2, back);
    EXPECT_EQ(read_file_bytes(path), read_file_bytes(path2));
}

TEST(WeightsContainer, RejectsCorruptFiles) {
    auto dir = fresh_dir("vitw_corrupt");
    auto path = (dir / "model.vitw").string();
    Rng rng(71);
    write_weights(path, init_params(toy_config(), rng));
    const auto good = read_file_bytes(path);

    auto write_variant = [&](const std::string& name, const std::vector<unsigned char>& bytes) {
        auto p = (dir / name).string();
        write_file_bytes(p, bytes.data(), bytes.size());
        return p;
    };

    auto magic = good;
    magic[0] = 'Z';
    EXPECT_THROW(read_weights(write_variant("magic.vitw", magic)), Error);

    auto version = good;
    version[4] = 9;
    EXPECT_THROW(read_weights(write_variant("version.vitw", version)), Error);

    auto config = good;
    config[8] = 65;  // hidden_dim no longer divisible by num_heads
    EXPECT_THROW(read_weights(write_variant("config.vitw", config)), Error);

    auto cut = good;
    cut.resize(cut.size() - 10);
    EXPECT_THROW(read_weights(write_variant("cut.vitw", cut)), Error);

    auto nan = good;
    const std::uint32_t qnan = 0x7fc00000u;
    std::memcpy(nan.data() + nan.size() - 4, &qnan, 4);  // last float = head.bias[1]
    try {
        read_weights(write_variant("nan.vitw", nan));
        FAIL() << "expected non-finite rejection";
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("head.bias"), std::string::npos) << e.what();
    }
}

TEST(ExternalImport, InvertsTheTorchLayoutExactly) {
    auto dir = fresh_dir("import_roundtrip");
    Rng rng(73);
    ViTConfig cfg = toy_config();
    ViTParams params = init_params(cfg, rng);
    // make the importer-touched vectors nonzero so layout bugs cannot hide
    std::uniform_real_distribution<double> dist(-0.5, 0.5);
    for (auto& [name, tensor] : tensor_list(params))
        for (double& v : tensor->data) v = dist(rng);

    auto [manifest, blob] = torch_style_export(params, true).write(dir);
    Rng head_rng(1);
    ViTParams imported = import_external_weights(manifest, blob, cfg, head_rng);
    expect_equal_after_f32(imported, params);
}

TEST(ExternalImport, MissingHeadKeepsTheFreshInit) {
    auto dir = fresh_dir("import_nohead");
    Rng rng(79);
    ViTParams params = init_params(toy_config(), rng);
    auto [manifest, blob] = torch_style_export(params, false).write(dir);

    Rng head_rng(99);
    ViTParams imported = import_external_weights(manifest, blob, toy_config(), head_rng);

    Rng expect_rng(99);
    ViTParams fresh = init_params(toy_config(), expect_rng);
    EXPECT_EQ(imported.head_w.data, fresh.head_w.data);
    EXPECT_EQ(imported.head_b.data, fresh.head_b.data);
    for (std::size_t j = 0; j < params.cls_token.data.size(); ++j)
        EXPECT_EQ(imported.cls_token.data[j], as_f32(params.cls_token.data[j]));
}

TEST(ExternalImport, FailsLoudlyOnBadManifests) {
    auto dir = fresh_dir("import_bad");
    Rng rng(83);
    ViTParams params = init_params(toy_config(), rng);

    {
        ExportBuilder ex = torch_style_export(params, true);
        ex.tensors[1]["shape"] = std::vector<std::size_t>{1, 196, 64};  // pos_embed off by one
        auto [manifest, blob] = ex.write(dir);
        Rng head_rng(1);
        try {
            import_external_weights(manifest, blob, toy_config(), head_rng);
            FAIL() << "expected shape mismatch";
        } catch (const Error& e) {
            const std::string msg = e.what();
            EXPECT_NE(msg.find("pos_embed"), std::string::npos) << msg;
            EXPECT_NE(msg.find("shape"), std::string::npos) << msg;
        }
    }
    {
        ExportBuilder ex = torch_style_export(params, true);
        ex.tensors.erase(ex.tensors.size() - 4);  // drop norm.weight
        auto [manifest, blob] = ex.write(dir);
        Rng head_rng(1);
        try {
            import_external_weights(manifest, blob, toy_config(), head_rng);
            FAIL() << "expected missing tensor";
        } catch (const Error& e) {
            EXPECT_NE(std::string(e.what()).find("missing tensor norm.weight"), std::string::npos);
        }
    }
    {
        ExportBuilder ex = torch_style_export(params, true);
        ex.blob.resize(ex.blob.size() - 8);
        auto [manifest, blob] = ex.write(dir);
        Rng head_rng(1);
        EXPECT_THROW(import_external_weights(manifest, blob, toy_config(), head_rng), Error);
    }
    {
        ExportBuilder ex = torch_style_export(params, true);
        ex.tensors[0]["dtype"] = "f16";
        auto [manifest, blob] = ex.write(dir);
        Rng head_rng(1);
        EXPECT_THROW(import_external_weights(manifest, blob, toy_config(), head_rng), Error);
    }
}
