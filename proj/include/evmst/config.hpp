#pragma once

#include <array>
#include <cstdint>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "evmst/common.hpp"
#include "evmst/magnify.hpp"
#include "evmst/train.hpp"
#include "evmst/vit.hpp"

namespace evmst {

/// Everything the pipeline can be told from outside. Resolution order is
/// CLI flag > config file > these defaults.
struct PipelineConfig {
    BandpassSpec band;
    std::array<double, 3> alphas{10.0, 20.0, 40.0};
    int levels = 3;
    int window_frames = 196;
    double window_stride_s = 0.5;
    ViTConfig vit = toy_config();
    TrainConfig train;
};

namespace detail {

inline double parse_double(const std::string& key, const std::string& value) {
    std::size_t idx = 0;
    double v = 0.0;
    try {
        v = std::stod(value, &idx);
    } catch (const std::exception&) {
        fail("config key " + key + ": cannot parse \"" + value + "\" as a number");
    }
    require(idx == value.size(), "config key " + key + ": trailing junk in \"" + value + "\"");
    return v;
}

inline long parse_int(const std::string& key, const std::string& value) {
    std::size_t idx = 0;
    long v = 0;
    try {
        v = std::stol(value, &idx);
    } catch (const std::exception&) {
        fail("config key " + key + ": cannot parse \"" + value + "\" as an integer");
    }
    require(idx == value.size(), "config key " + key + ": trailing junk in \"" + value + "\"");
    return v;
}

inline std::array<double, 3> parse_triple(const std::string& key, const std::string& value) {
    std::array<double, 3> out{};
    std::size_t begin = 0;
    for (int i = 0; i < 3; ++i) {
        const std::size_t comma = value.find(',', begin);
        const bool last = i == 2;
        require(last == (comma == std::string::npos),
                "config key " + key + ": want three comma-separated numbers");
        out[static_cast<std::size_t>(i)] = parse_double(
            key, value.substr(begin, last ? std::string::npos : comma - begin));
        begin = comma + 1;
    }
    return out;
}

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace detail

/// Applies one `key = value` setting. Unknown keys are errors so typos cannot
/// silently fall back to defaults.
inline void apply_config_kv(PipelineConfig& cfg, const std::string& key,
                            const std::string& value) {
    using detail::parse_double;
    using detail::parse_int;
    if (key == "band.low") cfg.band.f_low = parse_double(key, value);
    else if (key == "band.high") cfg.band.f_high = parse_double(key, value);
    else if (key == "alphas") cfg.alphas = detail::parse_triple(key, value);
    else if (key == "levels") cfg.levels = static_cast<int>(parse_int(key, value));
    else if (key == "window.frames") {
        require(parse_int(key, value) == 196,
                "window.frames is fixed at 196 by the map format; refusing " + value);
        cfg.window_frames = 196;
    } else if (key == "window.stride_s") cfg.window_stride_s = parse_double(key, value);
    else if (key == "vit.hidden_dim") cfg.vit.hidden_dim = static_cast<int>(parse_int(key, value));
    else if (key == "vit.layers") cfg.vit.num_layers = static_cast<int>(parse_int(key, value));
    else if (key == "vit.heads") cfg.vit.num_heads = static_cast<int>(parse_int(key, value));
    else if (key == "vit.mlp_dim") cfg.vit.mlp_dim = static_cast<int>(parse_int(key, value));
    else if (key == "vit.dropout") cfg.vit.dropout_rate = parse_double(key, value);
    else if (key == "vit.preset") {
        if (value == "toy") cfg.vit = toy_config();
        else if (value == "base") cfg.vit = base_config();
        else fail("config key vit.preset: want toy or base, got " + value);
    } else if (key == "train.lr") cfg.train.learning_rate = parse_double(key, value);
    else if (key == "train.epochs") cfg.train.epochs = static_cast<int>(parse_int(key, value));
    else if (key == "train.batch_size")
        cfg.train.batch_size = static_cast<int>(parse_int(key, value));
    else if (key == "train.dropout") cfg.train.dropout_rate = parse_double(key, value);
    else if (key == "train.seed")
        cfg.train.seed = static_cast<std::uint64_t>(parse_int(key, value));
    else if (key == "train.early_stop_val_acc")
        cfg.train.early_stop_val_acc = parse_double(key, value);
    else fail("unknown config key: " + key);
}

/// `key = value` lines, '#' comments, blank lines ignored.
inline void load_config_file(PipelineConfig& cfg, const std::string& path) {
    std::ifstream is(path);
    if (!is) fail("cannot open config file: " + path);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const std::string trimmed = detail::trim(line);
        if (trimmed.empty()) continue;
        const auto eq = trimmed.find('=');
        require(eq != std::string::npos,
                path + ":" + std::to_string(line_no) + ": expected key = value");
        const std::string key = detail::trim(trimmed.substr(0, eq));
        const std::string value = detail::trim(trimmed.substr(eq + 1));
        require(!key.empty(), path + ":" + std::to_string(line_no) + ": empty key");
        try {
            apply_config_kv(cfg, key, value);
        } catch (const Error& e) {
            fail(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
}

inline void validate(const PipelineConfig& cfg) {
    require(cfg.band.f_low > 0.0 && cfg.band.f_low < cfg.band.f_high,
            "band range must satisfy 0 < low < high");
    for (double a : cfg.alphas) require(a >= 0.0, "amplification factors must be >= 0");
    require(cfg.levels == 3, "this pipeline is fixed at 3 octaves");
    require(cfg.window_stride_s > 0.0, "window stride must be positive");
    validate(cfg.vit);
    validate(cfg.train);
}

}  // namespace evmst
