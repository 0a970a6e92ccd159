// Command-line front end: ingestion -> magnification -> maps -> model -> verdicts.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "evmst/config.hpp"
#include "evmst/decide.hpp"
#include "evmst/ingest.hpp"
#include "evmst/magnify.hpp"
#include "evmst/patchseq.hpp"
#include "evmst/selftest.hpp"
#include "evmst/stmap.hpp"
#include "evmst/train.hpp"
#include "evmst/version.hpp"
#include "evmst/vit_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CommonOpts {
    int jobs = 1;
    bool strict = false;
    std::string config_file;
};

void add_common(CLI::App* cmd, CommonOpts& c) {
    cmd->add_option("--jobs", c.jobs, "worker threads (default 1)");
    cmd->add_flag("--strict", c.strict, "sequential bit-exact mode (forces --jobs 1)");
    cmd->add_option("--config", c.config_file, "key=value config file");
}

int effective_jobs(const CommonOpts& c) { return c.strict ? 1 : std::max(1, c.jobs); }

evmst::BandpassSpec parse_band(const std::string& text) {
    const auto colon = text.find(':');
    evmst::require(colon != std::string::npos, "--band wants low:high, got " + text);
    evmst::BandpassSpec band;
    band.f_low = evmst::detail::parse_double("band.low", text.substr(0, colon));
    band.f_high = evmst::detail::parse_double("band.high", text.substr(colon + 1));
    return band;
}

std::string sanitize_id(std::string s) {
    for (char& ch : s)
        if (ch == '/' || ch == '\\' || ch == ' ') ch = '_';
    return s;
}

// build everything up to MEMSTmaps for one video
struct VideoMaps {
    std::vector<evmst::MEMSTmap> maps;
    std::vector<std::string> warnings;
    bool discarded = false;
    std::string discard_reason;
};

VideoMaps build_maps(const std::string& frames_path, const std::string& landmarks_path,
                     double fps_override, const evmst::PipelineConfig& cfg, evmst::Label label,
                     std::string source, int jobs) {
    VideoMaps out;
    evmst::FrameSequence video = evmst::load_frames(frames_path, fps_override);
    evmst::LandmarkTrack track =
        evmst::load_landmarks(landmarks_path, video.frame_count(), video.width, video.height);
    const auto invalid = track.invalid_count();
    if (evmst::validate_track(track) == evmst::TrackDecision::Discard) {
        out.discarded = true;
        out.discard_reason = std::to_string(invalid) + " of " +
                             std::to_string(track.frame_count()) +
                             " frames lack a detected face (limit 10)";
        return out;
    }
    const auto set = evmst::magnify_set(video, cfg.band, cfg.alphas, jobs);
    const auto grid = evmst::extract_signals(set, track, jobs);
    out.maps = evmst::window_and_normalize(grid, video.fps, &out.warnings, cfg.window_stride_s);
    if (source.empty()) source = fs::path(frames_path).filename().string();
    for (auto& map : out.maps) {
        map.source = source;
        map.label = label;
    }
    return out;
}

std::vector<evmst::MEMSTmap> read_maps_dir(const std::string& dir) {
    evmst::require(fs::is_directory(dir), "not a directory: " + dir);
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".mems")
            files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    std::vector<evmst::MEMSTmap> maps;
    maps.reserve(files.size());
    for (const auto& f : files) maps.push_back(evmst::read_mems(f.string()));
    return maps;
}

std::string map_filename(const evmst::MEMSTmap& map) {
    char start[16];
    std::snprintf(start, sizeof start, "%06u", map.window_start);
    return sanitize_id(map.source) + "_w" + start + ".mems";
}

// --- subcommands -------------------------------------------------------------------

struct MagnifyArgs {
    CommonOpts common;
    std::string frames, out_dir, band, alphas;
    double fps = 0.0;
    int levels = 3;
    CLI::Option *band_opt = nullptr, *alphas_opt = nullptr;
};

int run_magnify(const MagnifyArgs& a) {
    evmst::PipelineConfig cfg;
    if (!a.common.config_file.empty()) evmst::load_config_file(cfg, a.common.config_file);
    if (a.band_opt->count()) cfg.band = parse_band(a.band);
    if (a.alphas_opt->count()) cfg.alphas = evmst::detail::parse_triple("alphas", a.alphas);
    cfg.levels = a.levels;
    evmst::validate(cfg);

    const auto video = evmst::load_frames(a.frames, a.fps);
    const auto set = evmst::magnify_set(video, cfg.band, cfg.alphas, effective_jobs(a.common));
    fs::create_directories(a.out_dir);
    evmst::write_fseq((fs::path(a.out_dir) / "original.fseq").string(), set.original);
    json files = json::array({"original.fseq"});
    for (int k = 0; k < 3; ++k) {
        const std::string name = "octave" + std::to_string(k + 1) + ".fseq";
        evmst::write_fseq((fs::path(a.out_dir) / name).string(), set.magnified[k]);
        files.push_back(name);
    }
    std::cout << json{{"out", a.out_dir},
                      {"files", files},
                      {"frames", video.frame_count()},
                      {"fps", video.fps}}
                     .dump(2)
              << "\n";
    return 0;
}

struct StmapArgs {
    CommonOpts common;
    std::string frames, landmarks, out_dir, band, alphas, label = "unlabeled", source;
    double fps = 0.0;
    bool export_png = false;
    CLI::Option *band_opt = nullptr, *alphas_opt = nullptr;
};

int run_stmap(const StmapArgs& a) {
    evmst::PipelineConfig cfg;
    if (!a.common.config_file.empty()) evmst::load_config_file(cfg, a.common.config_file);
    if (a.band_opt->count()) cfg.band = parse_band(a.band);
    if (a.alphas_opt->count()) cfg.alphas = evmst::detail::parse_triple("alphas", a.alphas);
    evmst::validate(cfg);

    VideoMaps result = build_maps(a.frames, a.landmarks, a.fps, cfg,
                                  evmst::label_from_string(a.label), a.source,
                                  effective_jobs(a.common));
    if (result.discarded) {
        std::cout << json{{"discarded", true}, {"reason", result.discard_reason}, {"maps", 0}}
                         .dump(2)
                  << "\n";
        return 0;
    }
    fs::create_directories(a.out_dir);
    json files = json::array();
    for (const auto& map : result.maps) {
        const std::string name = map_filename(map);
        evmst::write_mems((fs::path(a.out_dir) / name).string(), map);
        files.push_back(name);
        if (a.export_png) {
            const auto png = fs::path(a.out_dir) / (name.substr(0, name.size() - 5) + ".png");
            evmst::write_png(png.string(), evmst::map_to_image(map));
        }
    }
    json doc{{"out", a.out_dir}, {"maps", result.maps.size()}, {"files", files}};
    doc["warnings"] = result.warnings;
    std::cout << doc.dump(2) << "\n";
    return 0;
}

struct TrainArgs {
    CommonOpts common;
    std::string manifest, train_maps, val_maps, out = "weights.vitw", log;
    double lr = 0.0, dropout = -1.0, fps = 0.0;
    int epochs = 0, batch_size = 0;
    std::uint64_t seed = 0;
    CLI::Option *lr_opt = nullptr, *epochs_opt = nullptr, *batch_opt = nullptr,
                *dropout_opt = nullptr, *seed_opt = nullptr;
};

int run_train(const TrainArgs& a) {
    evmst::PipelineConfig cfg;
    if (!a.common.config_file.empty()) evmst::load_config_file(cfg, a.common.config_file);
    if (a.lr_opt->count()) cfg.train.learning_rate = a.lr;
    if (a.epochs_opt->count()) cfg.train.epochs = a.epochs;
    if (a.batch_opt->count()) cfg.train.batch_size = a.batch_size;
    if (a.dropout_opt->count()) cfg.train.dropout_rate = a.dropout;
    if (a.seed_opt->count()) cfg.train.seed = a.seed;
    evmst::validate(cfg);

    std::vector<evmst::MEMSTmap> train_set, val_set;
    if (!a.manifest.empty()) {
        for (const auto& entry : evmst::load_manifest(a.manifest)) {
            if (entry.split == "test") continue;
            auto built = build_maps(entry.video, entry.landmarks, a.fps, cfg, entry.label,
                                    fs::path(entry.video).filename().string(),
                                    effective_jobs(a.common));
            if (built.discarded) {
                std::cerr << json{{"warning", "video discarded"},
                                  {"video", entry.video},
                                  {"reason", built.discard_reason}}
                                 .dump()
                          << "\n";
                continue;
            }
            auto& dst = entry.split == "train" ? train_set : val_set;
            for (auto& m : built.maps) dst.push_back(std::move(m));
        }
    } else {
        evmst::require(!a.train_maps.empty() && !a.val_maps.empty(),
                       "train needs either --manifest or both --train-maps and --val-maps");
        train_set = read_maps_dir(a.train_maps);
        val_set = read_maps_dir(a.val_maps);
    }

    const auto result = evmst::train_loop(train_set, val_set, cfg.vit, cfg.train);
    evmst::write_weights(a.out, result.params);
    if (!a.log.empty()) {
        std::ofstream os(a.log, std::ios::trunc);
        evmst::require(static_cast<bool>(os), "cannot create log file: " + a.log);
        for (const auto& m : result.log)
            os << json{{"epoch", m.epoch},
                       {"train_loss", m.train_loss},
                       {"val_accuracy", m.val_accuracy}}
                      .dump()
               << "\n";
    }
    std::cout << json{{"weights", a.out},
                      {"train_maps", train_set.size()},
                      {"val_maps", val_set.size()},
                      {"epochs_run", result.log.size()},
                      {"best_epoch", result.best_epoch},
                      {"best_val_accuracy", result.best_val_accuracy}}
                     .dump(2)
              << "\n";
    return 0;
}

struct PredictArgs {
    CommonOpts common;
    std::string weights, maps_dir, frames, landmarks, video_id;
    double fps = 0.0;
};

int run_predict(const PredictArgs& a) {
    evmst::PipelineConfig cfg;
    if (!a.common.config_file.empty()) evmst::load_config_file(cfg, a.common.config_file);
    const auto params = evmst::read_weights(a.weights);

    std::vector<evmst::MEMSTmap> maps;
    std::string video_id = a.video_id;
    if (!a.maps_dir.empty()) {
        maps = read_maps_dir(a.maps_dir);
        if (video_id.empty()) video_id = a.maps_dir;
    } else {
        evmst::require(!a.frames.empty() && !a.landmarks.empty(),
                       "predict needs either --maps or both --frames and --landmarks");
        auto built = build_maps(a.frames, a.landmarks, a.fps, cfg, evmst::Label::Unlabeled, "",
                                effective_jobs(a.common));
        evmst::require(!built.discarded, "video discarded: " + built.discard_reason);
        maps = std::move(built.maps);
        if (video_id.empty()) video_id = a.frames;
    }
    evmst::require(!maps.empty(), "no maps to predict on (video shorter than one window?)");

    std::vector<evmst::MapPrediction> preds;
    json per_map = json::array();
    for (const auto& map : maps) {
        auto p = evmst::predict_map(map, params);
        per_map.push_back(json{{"source", map.source},
                               {"window_start", map.window_start},
                               {"probs", {p.probs[0], p.probs[1]}},
                               {"predicted", evmst::to_string(p.predicted)}});
        preds.push_back(std::move(p));
    }
    const auto verdict = evmst::video_verdict(preds, video_id);
    std::cout << json{{"video", verdict.video},
                      {"verdict", evmst::to_string(verdict.verdict)},
                      {"votes", {{"real", verdict.real_votes}, {"fake", verdict.fake_votes}}},
                      {"mean_probs", {verdict.mean_probs[0], verdict.mean_probs[1]}},
                      {"per_map", per_map}}
                     .dump(2)
              << "\n";
    return 0;
}

struct EvalArgs {
    CommonOpts common;
    std::string weights, manifest, split;
    double fps = 0.0;
};

int run_eval(const EvalArgs& a) {
    evmst::PipelineConfig cfg;
    if (!a.common.config_file.empty()) evmst::load_config_file(cfg, a.common.config_file);
    const auto params = evmst::read_weights(a.weights);

    struct SplitStats {
        std::size_t videos = 0, correct = 0, skipped = 0;
        std::size_t confusion[2][2] = {{0, 0}, {0, 0}};
        std::size_t map_total = 0, map_correct = 0;
    };
    std::map<std::string, SplitStats> stats;

    for (const auto& entry : evmst::load_manifest(a.manifest)) {
        if (!a.split.empty() && entry.split != a.split) continue;
        auto& s = stats[entry.split];
        auto built = build_maps(entry.video, entry.landmarks, a.fps, cfg, entry.label,
                                fs::path(entry.video).filename().string(),
                                effective_jobs(a.common));
        if (built.discarded || built.maps.empty()) {
            ++s.skipped;
            continue;
        }
        std::vector<evmst::MapPrediction> preds;
        const int actual = entry.label == evmst::Label::Fake ? 1 : 0;
        for (const auto& map : built.maps) {
            auto p = evmst::predict_map(map, params);
            ++s.map_total;
            if ((p.predicted == evmst::Label::Fake) == (actual == 1)) ++s.map_correct;
            preds.push_back(std::move(p));
        }
        const auto verdict = evmst::video_verdict(preds, entry.video);
        const int predicted = verdict.verdict == evmst::Label::Fake ? 1 : 0;
        ++s.videos;
        ++s.confusion[actual][predicted];
        if (actual == predicted) ++s.correct;
    }

    json report;
    for (const auto& [split, s] : stats) {
        report[split] = {
            {"videos", s.videos},
            {"correct", s.correct},
            {"accuracy", s.videos ? static_cast<double>(s.correct) / s.videos : 0.0},
            {"skipped", s.skipped},
            {"confusion",
             {{"real", {{"real", s.confusion[0][0]}, {"fake", s.confusion[0][1]}}},
              {"fake", {{"real", s.confusion[1][0]}, {"fake", s.confusion[1][1]}}}}},
            {"map_accuracy", s.map_total ? static_cast<double>(s.map_correct) / s.map_total : 0.0},
            {"maps", s.map_total}};
    }
    std::cout << report.dump(2) << "\n";
    return 0;
}

struct ImportArgs {
    CommonOpts common;
    std::string tensors, blob, out = "weights.vitw", preset = "base";
    std::uint64_t seed = 1;
};

int run_import(const ImportArgs& a) {
    evmst::PipelineConfig cfg;
    cfg.vit = a.preset == "toy" ? evmst::toy_config() : evmst::base_config();
    evmst::require(a.preset == "toy" || a.preset == "base", "--preset wants toy or base");
    if (!a.common.config_file.empty()) evmst::load_config_file(cfg, a.common.config_file);
    evmst::Rng rng(a.seed);
    const auto params = evmst::import_external_weights(a.tensors, a.blob, cfg.vit, rng);
    evmst::write_weights(a.out, params);
    std::cout << json{{"weights", a.out},
                      {"hidden_dim", params.config.hidden_dim},
                      {"layers", params.config.num_layers}}
                     .dump(2)
              << "\n";
    return 0;
}

struct SelftestArgs {
    CommonOpts common;
    std::uint64_t seed = 1;
    std::string log;
};

int run_selftest_cmd(const SelftestArgs& a) {
    const auto t0 = std::chrono::steady_clock::now();
    evmst::SelftestOptions opt;
    opt.seed = a.seed;
    opt.jobs = effective_jobs(a.common);
    const auto results = evmst::run_selftest(opt, std::cout);
    if (!a.log.empty()) {
        std::ofstream os(a.log, std::ios::trunc);
        evmst::require(static_cast<bool>(os), "cannot create log file: " + a.log);
        for (const auto& r : results)
            os << json{{"check", r.name}, {"pass", r.pass}, {"detail", r.detail}}.dump() << "\n";
    }
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                        std::chrono::steady_clock::now() - t0)
                        .count();
    std::cerr << "selftest finished in " << ms << " ms\n";
    for (const auto& r : results)
        if (!r.pass) return 1;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"rhythm-based deepfake detector: magnified color pulses -> "
                 "spatial-temporal maps -> transformer verdicts"};
    app.set_version_flag("--version", std::string("evmst ") + evmst::kVersion +
                                          " (formats: " + evmst::kFormatVersions + ")");
    app.require_subcommand(1);

    MagnifyArgs mag;
    auto* mag_cmd = app.add_subcommand("magnify", "write the three magnified octave videos");
    mag_cmd->add_option("--frames", mag.frames, "frame dir or .fseq file")->required();
    mag_cmd->add_option("--out", mag.out_dir, "output directory")->required();
    mag.band_opt = mag_cmd->add_option("--band", mag.band, "pass band low:high (Hz)");
    mag.alphas_opt = mag_cmd->add_option("--alphas", mag.alphas, "per-octave gains a1,a2,a3");
    mag_cmd->add_option("--levels", mag.levels, "pyramid levels (fixed at 3)");
    mag_cmd->add_option("--fps", mag.fps, "override frames/second");
    add_common(mag_cmd, mag.common);

    StmapArgs st;
    auto* st_cmd = app.add_subcommand("stmap", "extract windowed maps from a video");
    st_cmd->add_option("--frames", st.frames, "frame dir or .fseq file")->required();
    st_cmd->add_option("--landmarks", st.landmarks, "landmark JSONL file")->required();
    st_cmd->add_option("--out", st.out_dir, "output directory")->required();
    st.band_opt = st_cmd->add_option("--band", st.band, "pass band low:high (Hz)");
    st.alphas_opt = st_cmd->add_option("--alphas", st.alphas, "per-octave gains a1,a2,a3");
    st_cmd->add_option("--label", st.label, "real | fake | unlabeled");
    st_cmd->add_option("--source", st.source, "source id stored in each map");
    st_cmd->add_option("--fps", st.fps, "override frames/second");
    st_cmd->add_flag("--export-png", st.export_png, "also render each map as a PNG");
    add_common(st_cmd, st.common);

    TrainArgs tr;
    auto* tr_cmd = app.add_subcommand("train", "train the classifier");
    tr_cmd->add_option("--manifest", tr.manifest, "dataset manifest JSONL");
    tr_cmd->add_option("--train-maps", tr.train_maps, "directory of .mems training maps");
    tr_cmd->add_option("--val-maps", tr.val_maps, "directory of .mems validation maps");
    tr_cmd->add_option("--out", tr.out, "output weights file");
    tr_cmd->add_option("--log", tr.log, "per-epoch metrics JSONL");
    tr.lr_opt = tr_cmd->add_option("--lr", tr.lr, "learning rate");
    tr.epochs_opt = tr_cmd->add_option("--epochs", tr.epochs, "epoch count");
    tr.batch_opt = tr_cmd->add_option("--batch-size", tr.batch_size, "batch size");
    tr.dropout_opt = tr_cmd->add_option("--dropout", tr.dropout, "descriptor dropout rate");
    tr.seed_opt = tr_cmd->add_option("--seed", tr.seed, "training seed");
    tr_cmd->add_option("--fps", tr.fps, "override frames/second");
    add_common(tr_cmd, tr.common);

    PredictArgs pr;
    auto* pr_cmd = app.add_subcommand("predict", "per-video verdict");
    pr_cmd->add_option("--weights", pr.weights, "weights file")->required();
    pr_cmd->add_option("--maps", pr.maps_dir, "directory of .mems maps");
    pr_cmd->add_option("--frames", pr.frames, "frame dir or .fseq file");
    pr_cmd->add_option("--landmarks", pr.landmarks, "landmark JSONL file");
    pr_cmd->add_option("--video-id", pr.video_id, "id used in the report");
    pr_cmd->add_option("--fps", pr.fps, "override frames/second");
    add_common(pr_cmd, pr.common);

    EvalArgs ev;
    auto* ev_cmd = app.add_subcommand("eval", "accuracy report over a manifest");
    ev_cmd->add_option("--weights", ev.weights, "weights file")->required();
    ev_cmd->add_option("--manifest", ev.manifest, "dataset manifest JSONL")->required();
    ev_cmd->add_option("--split", ev.split, "restrict to one split");
    ev_cmd->add_option("--fps", ev.fps, "override frames/second");
    add_common(ev_cmd, ev.common);

    ImportArgs im;
    auto* im_cmd = app.add_subcommand("import-weights", "convert an exported checkpoint");
    im_cmd->add_option("--tensors", im.tensors, "JSON tensor manifest")->required();
    im_cmd->add_option("--blob", im.blob, "f32 payload blob")->required();
    im_cmd->add_option("--out", im.out, "output weights file");
    im_cmd->add_option("--preset", im.preset, "config preset: base | toy");
    im_cmd->add_option("--seed", im.seed, "head init seed");
    add_common(im_cmd, im.common);

    SelftestArgs se;
    auto* se_cmd = app.add_subcommand("selftest", "run the synthetic-oracle suite");
    se_cmd->add_option("--seed", se.seed, "suite seed");
    se_cmd->add_option("--log", se.log, "write per-check JSONL");
    add_common(se_cmd, se.common);

    CLI11_PARSE(app, argc, argv);

    try {
        if (mag_cmd->parsed()) return run_magnify(mag);
        if (st_cmd->parsed()) return run_stmap(st);
        if (tr_cmd->parsed()) return run_train(tr);
        if (pr_cmd->parsed()) return run_predict(pr);
        if (ev_cmd->parsed()) return run_eval(ev);
        if (im_cmd->parsed()) return run_import(im);
        if (se_cmd->parsed()) return run_selftest_cmd(se);
    } catch (const std::exception& e) {
        std::cerr << json{{"error", e.what()}}.dump() << "\n";
        return 1;
    }
    return 0;
}
