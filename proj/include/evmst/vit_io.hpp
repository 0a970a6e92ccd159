#pragma once

#include <json.hpp>

#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "evmst/common.hpp"
#include "evmst/vit.hpp"

namespace evmst {

inline constexpr char kVitwMagic[4] = {'V', 'I', 'T', 'W'};
inline constexpr std::uint32_t kVitwVersion = 1;

/// Container layout: magic, version, the seven integer config fields as u32,
/// dropout rate as f32, then a tensor manifest (name, shape, byte offset into
/// the payload) and the little-endian f32 payload itself.
inline void write_weights(const std::string& path, const ViTParams& params) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) fail("cannot create file: " + path);
    const auto& c = params.config;
    write_magic(os, kVitwMagic);
    write_u32(os, kVitwVersion);
    for (int v : {c.hidden_dim, c.num_layers, c.num_heads, c.mlp_dim, c.num_patches, c.patch_dim,
                  c.num_classes})
        write_u32(os, static_cast<std::uint32_t>(v));
    write_f32(os, static_cast<float>(c.dropout_rate));

    const auto tensors = tensor_list(params);
    write_u32(os, static_cast<std::uint32_t>(tensors.size()));
    std::uint64_t offset = 0;
    for (const auto& [name, tensor] : tensors) {
        write_u32(os, static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_u32(os, static_cast<std::uint32_t>(tensor->shape.size()));
        for (std::size_t dim : tensor->shape) write_u64(os, dim);
        write_u64(os, offset);
        offset += tensor->numel() * 4;
    }
    for (const auto& [name, tensor] : tensors)
        for (double v : tensor->data) write_f32(os, static_cast<float>(v));
    if (!os) fail("short write: " + path);
}

inline ViTParams read_weights(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) fail("cannot open file: " + path);
    expect_magic(is, kVitwMagic, path);
    require(read_u32(is, path) == kVitwVersion, path + ": unsupported weights version");

    ViTConfig c;
    c.hidden_dim = static_cast<int>(read_u32(is, path));
    c.num_layers = static_cast<int>(read_u32(is, path));
    c.num_heads = static_cast<int>(read_u32(is, path));
    c.mlp_dim = static_cast<int>(read_u32(is, path));
    c.num_patches = static_cast<int>(read_u32(is, path));
    c.patch_dim = static_cast<int>(read_u32(is, path));
    c.num_classes = static_cast<int>(read_u32(is, path));
    c.dropout_rate = static_cast<double>(read_f32(is, path));
    validate(c);

    struct Entry {
        std::vector<std::size_t> shape;
        std::uint64_t offset = 0;
    };
    const std::uint32_t count = read_u32(is, path);
    std::map<std::string, Entry> manifest;
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint32_t len = read_u32(is, path);
        require(len <= 4096, path + ": unreasonable tensor name length");
        std::string name(len, '\0');
        is.read(name.data(), len);
        Entry e;
        const std::uint32_t ndim = read_u32(is, path);
        require(ndim <= 8, path + ": unreasonable tensor rank");
        for (std::uint32_t k = 0; k < ndim; ++k)
            e.shape.push_back(static_cast<std::size_t>(read_u64(is, path)));
        e.offset = read_u64(is, path);
        require(manifest.emplace(std::move(name), std::move(e)).second,
                path + ": duplicate tensor in manifest");
    }
    const std::streampos payload_start = is.tellg();
    require(static_cast<bool>(is), path + ": truncated header");

    ViTParams params = make_params(c);
    for (auto& [name, tensor] : tensor_list(params)) {
        auto it = manifest.find(name);
        if (it == manifest.end()) fail(path + ": missing tensor " + name);
        require(it->second.shape == tensor->shape,
                path + ": tensor " + name + " has a shape that does not match the config");
        is.seekg(payload_start + static_cast<std::streamoff>(it->second.offset));
        for (double& v : tensor->data) {
            v = static_cast<double>(read_f32(is, path));
            require(std::isfinite(v), path + ": non-finite value in tensor " + name);
        }
    }
    require(static_cast<bool>(is), path + ": truncated payload");
    return params;
}

// --- external checkpoint import --------------------------------------------------------

namespace detail {

struct RawTensor {
    std::vector<std::size_t> shape;
    std::uint64_t offset = 0;  // bytes into the blob

    std::size_t numel() const {
        std::size_t n = 1;
        for (std::size_t d : shape) n *= d;
        return n;
    }
};

inline std::map<std::string, RawTensor> parse_import_manifest(const std::string& json_path) {
    std::ifstream is(json_path);
    if (!is) fail("cannot open import manifest: " + json_path);
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(is);
    } catch (const nlohmann::json::exception& e) {
        fail("malformed import manifest " + json_path + ": " + e.what());
    }
    require(doc.contains("tensors") && doc["tensors"].is_array(),
            json_path + ": manifest needs a \"tensors\" array");
    std::map<std::string, RawTensor> out;
    for (const auto& rec : doc["tensors"]) {
        require(rec.contains("name") && rec["name"].is_string(), json_path + ": tensor without name");
        const auto name = rec["name"].get<std::string>();
        if (rec.contains("dtype"))
            require(rec["dtype"].get<std::string>() == "f32",
                    json_path + ": tensor " + name + " must be exported as f32");
        RawTensor t;
        require(rec.contains("shape") && rec["shape"].is_array(),
                json_path + ": tensor " + name + " lacks a shape");
        for (const auto& d : rec["shape"]) t.shape.push_back(d.get<std::size_t>());
        require(rec.contains("offset"), json_path + ": tensor " + name + " lacks an offset");
        t.offset = rec["offset"].get<std::uint64_t>();
        require(out.emplace(name, std::move(t)).second,
                json_path + ": duplicate tensor " + name);
    }
    return out;
}

}  // namespace detail

/// Maps an externally exported checkpoint (JSON manifest + little-endian f32
/// blob, torch-style names and layouts) onto our parameter layout:
///   cls_token (1,1,D)                 -> cls_token
///   pos_embed (1,P+1,D)               -> pos_embed
///   patch_embed.proj.weight (D,3,16,16) conv kernel -> patch_embed.weight
///     with our flattening (row*16+col)*3+channel on the input axis
///   blocks.N.attn.qkv.{weight,bias}   -> split thirds into q/k/v
///   linear weights (out,in)           -> transposed to (in,out)
/// Any dimension mismatch is an error. A missing head.* leaves the freshly
/// initialized head in place (external checkpoints rarely ship a 2-class head).
inline ViTParams import_external_weights(const std::string& manifest_path,
                                         const std::string& blob_path, const ViTConfig& config,
                                         Rng& head_init_rng) {
    validate(config);
    const auto d = static_cast<std::size_t>(config.hidden_dim);
    const auto f = static_cast<std::size_t>(config.mlp_dim);
    const auto t = static_cast<std::size_t>(config.tokens());

    const auto manifest = detail::parse_import_manifest(manifest_path);
    const std::vector<std::uint8_t> blob = read_file_bytes(blob_path);

    auto fetch = [&](const std::string& name,
                     const std::vector<std::size_t>& want) -> std::vector<double> {
        auto it = manifest.find(name);
        if (it == manifest.end()) fail("import: missing tensor " + name);
        if (it->second.shape != want) {
            std::string got = "(", exp = "(";
            for (std::size_t v : it->second.shape) got += std::to_string(v) + ",";
            for (std::size_t v : want) exp += std::to_string(v) + ",";
            fail("import: tensor " + name + " has shape " + got + ") but this config requires " +
                 exp + ")");
        }
        const std::size_t n = it->second.numel();
        require(it->second.offset + n * 4 <= blob.size(), "import: blob too short for " + name);
        std::vector<double> out(n);
        for (std::size_t i = 0; i < n; ++i) {
            float v;
            std::memcpy(&v, blob.data() + it->second.offset + i * 4, 4);
            require(std::isfinite(v), "import: non-finite value in " + name);
            out[i] = static_cast<double>(v);
        }
        return out;
    };
    auto has = [&](const std::string& name) { return manifest.count(name) != 0; };
    // torch Linear stores (out,in); we store (in,out)
    auto load_linear = [&](const std::string& name, std::size_t in, std::size_t out, Tensor& w) {
        const auto raw = fetch(name, {out, in});
        for (std::size_t o = 0; o < out; ++o)
            for (std::size_t i = 0; i < in; ++i) w.data[i * out + o] = raw[o * in + i];
    };

    ViTParams params = init_params(config, head_init_rng);

    {
        const auto raw = fetch("cls_token", {1, 1, d});
        params.cls_token.data.assign(raw.begin(), raw.end());
        const auto pos = fetch("pos_embed", {1, t, d});
        params.pos_embed.data.assign(pos.begin(), pos.end());
        // conv kernel (D, 3, 16, 16) -> rows ordered (row*16+col)*3+channel
        const auto conv = fetch("patch_embed.proj.weight", {d, 3, 16, 16});
        for (std::size_t o = 0; o < d; ++o)
            for (std::size_t ch = 0; ch < 3; ++ch)
                for (std::size_t r = 0; r < 16; ++r)
                    for (std::size_t col = 0; col < 16; ++col) {
                        const std::size_t in_idx = (r * 16 + col) * 3 + ch;
                        params.patch_w.data[in_idx * d + o] =
                            conv[((o * 3 + ch) * 16 + r) * 16 + col];
                    }
        const auto pb = fetch("patch_embed.proj.bias", {d});
        params.patch_b.data.assign(pb.begin(), pb.end());
    }

    for (std::size_t i = 0; i < params.blocks.size(); ++i) {
        auto& blk = params.blocks[i];
        const std::string base = "blocks." + std::to_string(i) + ".";
        auto copy_vec = [&](const std::string& name, Tensor& dst) {
            const auto raw = fetch(name, {dst.numel()});
            dst.data.assign(raw.begin(), raw.end());
        };
        copy_vec(base + "norm1.weight", blk.norm1_w);
        copy_vec(base + "norm1.bias", blk.norm1_b);
        copy_vec(base + "norm2.weight", blk.norm2_w);
        copy_vec(base + "norm2.bias", blk.norm2_b);

        const auto qkv_w = fetch(base + "attn.qkv.weight", {3 * d, d});
        Tensor* targets[3] = {&blk.q_w, &blk.k_w, &blk.v_w};
        for (int part = 0; part < 3; ++part)
            for (std::size_t o = 0; o < d; ++o)
                for (std::size_t in = 0; in < d; ++in)
                    targets[part]->data[in * d + o] =
                        qkv_w[(static_cast<std::size_t>(part) * d + o) * d + in];
        const auto qkv_b = fetch(base + "attn.qkv.bias", {3 * d});
        Tensor* bias_targets[3] = {&blk.q_b, &blk.k_b, &blk.v_b};
        for (int part = 0; part < 3; ++part)
            for (std::size_t o = 0; o < d; ++o)
                bias_targets[part]->data[o] = qkv_b[static_cast<std::size_t>(part) * d + o];

        load_linear(base + "attn.proj.weight", d, d, blk.proj_w);
        copy_vec(base + "attn.proj.bias", blk.proj_b);
        load_linear(base + "mlp.fc1.weight", d, f, blk.fc1_w);
        copy_vec(base + "mlp.fc1.bias", blk.fc1_b);
        load_linear(base + "mlp.fc2.weight", f, d, blk.fc2_w);
        copy_vec(base + "mlp.fc2.bias", blk.fc2_b);
    }

    {
        const auto w = fetch("norm.weight", {d});
        params.norm_w.data.assign(w.begin(), w.end());
        const auto b = fetch("norm.bias", {d});
        params.norm_b.data.assign(b.begin(), b.end());
    }
    if (has("head.weight") || has("head.bias")) {
        load_linear("head.weight", d, 2, params.head_w);
        const auto hb = fetch("head.bias", {2});
        params.head_b.data.assign(hb.begin(), hb.end());
    }
    return params;
}

}  // namespace evmst
