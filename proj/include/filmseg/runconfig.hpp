#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>

#include <json.hpp>

#include "filmseg/classifier.hpp"
#include "filmseg/segmenter.hpp"
#include "filmseg/splitter.hpp"
#include "filmseg/synth.hpp"

namespace filmseg {

// Whole-pipeline configuration; one JSON file drives every stage.
struct RunConfig {
    // corpus
    SynthesisSpec synth;
    int pool_count = 6;
    int pool_size = 192;
    uint64_t corpus_seed = 7;

    // split
    SplitSpec split;
    uint64_t split_seed = 5;

    // stage 1
    ViTConfig vit;
    HeadMode head_mode = HeadMode::centroid;
    TrainConfigStage1 stage1;
    uint64_t stage1_seed = 11;

    // stage 3
    SegConfig seg;
    TrainConfigStage3 stage3;
    uint64_t stage3_seed = 13;

    // miniature desk-scale defaults that train in CPU minutes
    static RunConfig mini() {
        RunConfig c;
        c.synth.n_homogeneous_p = 60;
        c.synth.n_homogeneous_np = 60;
        c.synth.n_heterogeneous = 40;
        c.synth.n_videos = 10;
        c.synth.image_size = 70;
        c.vit.image_size = 70;
        c.vit.patch = 14;
        c.vit.dim = 64;
        c.vit.depth = 2;
        c.vit.heads = 4;
        c.vit.mlp_ratio = 2;
        c.stage1.lr = 1e-3;
        c.stage1.max_epochs = 30;
        c.stage1.subset_centroid_prob = 0.3;
        c.stage1.patch_mix_prob = 0.3;
        c.seg = SegConfig::mini(64);
        c.stage3.lr = 1e-3;
        c.stage3.max_epochs = 50;
        c.stage3.early_stop_patience = 12;
        c.stage3.het_repeat = 2;
        return c;
    }

    void validate() const {
        synth.validate();
        vit.validate();
        stage1.validate();
        seg.validate();
        stage3.validate();
    }

    std::string digest_text() const {
        return vit.digest_text() + "|" + to_string(head_mode) + "|" + stage1.digest_text() + "|" +
               seg.digest_text() + "|" + stage3.digest_text() + "|corpus:" + std::to_string(synth.n_homogeneous_p) +
               "," + std::to_string(synth.n_homogeneous_np) + "," + std::to_string(synth.n_heterogeneous) + "," +
               std::to_string(synth.n_videos) + "," + std::to_string(synth.image_size) + "," +
               std::to_string(corpus_seed) + "|split:" + std::to_string(split_seed);
    }

    std::string digest() const { return digest_hex(fnv1a64(digest_text())); }
};

namespace detail {

template <typename F>
void maybe(const json& j, const char* key, F&& set) {
    if (j.contains(key)) set(j.at(key));
}

}  // namespace detail

inline RunConfig run_config_from_json(const json& j) {
    RunConfig c = RunConfig::mini();
    using detail::maybe;
    maybe(j, "corpus", [&](const json& s) {
        maybe(s, "n_homogeneous_p", [&](const json& v) { c.synth.n_homogeneous_p = v.get<int>(); });
        maybe(s, "n_homogeneous_np", [&](const json& v) { c.synth.n_homogeneous_np = v.get<int>(); });
        maybe(s, "n_heterogeneous", [&](const json& v) { c.synth.n_heterogeneous = v.get<int>(); });
        maybe(s, "n_videos", [&](const json& v) { c.synth.n_videos = v.get<int>(); });
        maybe(s, "image_size", [&](const json& v) { c.synth.image_size = v.get<int>(); });
        maybe(s, "coverage_lo", [&](const json& v) { c.synth.coverage_lo = v.get<double>(); });
        maybe(s, "coverage_hi", [&](const json& v) { c.synth.coverage_hi = v.get<double>(); });
        maybe(s, "grayscale_fraction", [&](const json& v) { c.synth.grayscale_fraction = v.get<double>(); });
        maybe(s, "pool_count", [&](const json& v) { c.pool_count = v.get<int>(); });
        maybe(s, "pool_size", [&](const json& v) { c.pool_size = v.get<int>(); });
        maybe(s, "seed", [&](const json& v) { c.corpus_seed = v.get<uint64_t>(); });
    });
    maybe(j, "split", [&](const json& s) {
        maybe(s, "fractions", [&](const json& v) {
            c.split.split_fractions = {v.at(0).get<double>(), v.at(1).get<double>(), v.at(2).get<double>()};
        });
        maybe(s, "target", [&](const json& v) {
            c.split.target_distribution =
                ClassDistribution{v.at(0).get<double>(), v.at(1).get<double>(), v.at(2).get<double>()};
        });
        maybe(s, "seed", [&](const json& v) { c.split_seed = v.get<uint64_t>(); });
    });
    maybe(j, "stage1", [&](const json& s) {
        maybe(s, "vit", [&](const json& v) {
            maybe(v, "image_size", [&](const json& x) { c.vit.image_size = x.get<int>(); });
            maybe(v, "patch", [&](const json& x) { c.vit.patch = x.get<int>(); });
            maybe(v, "dim", [&](const json& x) { c.vit.dim = x.get<int>(); });
            maybe(v, "depth", [&](const json& x) { c.vit.depth = x.get<int>(); });
            maybe(v, "heads", [&](const json& x) { c.vit.heads = x.get<int>(); });
            maybe(v, "mlp_ratio", [&](const json& x) { c.vit.mlp_ratio = x.get<int>(); });
        });
        maybe(s, "head_mode", [&](const json& v) { c.head_mode = head_mode_from_string(v.get<std::string>()); });
        maybe(s, "batch_size", [&](const json& v) { c.stage1.batch_size = v.get<int>(); });
        maybe(s, "lr", [&](const json& v) { c.stage1.lr = v.get<double>(); });
        maybe(s, "max_epochs", [&](const json& v) { c.stage1.max_epochs = v.get<int>(); });
        maybe(s, "plateau_patience", [&](const json& v) { c.stage1.plateau_patience = v.get<int>(); });
        maybe(s, "early_stop_patience", [&](const json& v) { c.stage1.early_stop_patience = v.get<int>(); });
        maybe(s, "augment", [&](const json& v) { c.stage1.augment = v.get<bool>(); });
        maybe(s, "subset_centroid_prob", [&](const json& v) { c.stage1.subset_centroid_prob = v.get<double>(); });
        maybe(s, "patch_mix_prob", [&](const json& v) { c.stage1.patch_mix_prob = v.get<double>(); });
        maybe(s, "seed", [&](const json& v) { c.stage1_seed = v.get<uint64_t>(); });
    });
    maybe(j, "stage3", [&](const json& s) {
        maybe(s, "seg", [&](const json& v) { c.seg = seg_config_from_json(v); });
        maybe(s, "input_size", [&](const json& v) { c.seg = SegConfig::mini(v.get<int>()); });
        maybe(s, "batch_size", [&](const json& v) { c.stage3.batch_size = v.get<int>(); });
        maybe(s, "lr", [&](const json& v) { c.stage3.lr = v.get<double>(); });
        maybe(s, "weight_decay", [&](const json& v) { c.stage3.weight_decay = v.get<double>(); });
        maybe(s, "max_epochs", [&](const json& v) { c.stage3.max_epochs = v.get<int>(); });
        maybe(s, "early_stop_patience", [&](const json& v) { c.stage3.early_stop_patience = v.get<int>(); });
        maybe(s, "het_repeat", [&](const json& v) { c.stage3.het_repeat = v.get<int>(); });
        maybe(s, "seed", [&](const json& v) { c.stage3_seed = v.get<uint64_t>(); });
    });
    c.validate();
    return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
    return run_config_from_json(json::parse(read_text_file(path)));
}

// ---- run directory layout ----

struct RunDir {
    std::filesystem::path root;

    std::filesystem::path corpus() const { return root / "corpus"; }
    std::filesystem::path pool() const { return root / "pool"; }
    std::filesystem::path manifest() const { return root / "manifest.json"; }
    std::filesystem::path split() const { return root / "splits" / "split.json"; }
    std::filesystem::path checkpoints() const { return root / "checkpoints"; }
    std::filesystem::path proxy_checkpoint() const { return checkpoints() / "proxy.bin"; }
    std::filesystem::path seg_checkpoint(PlanId plan) const {
        return checkpoints() / ("seg_" + to_string(plan) + ".bin");
    }
    std::filesystem::path reports() const { return root / "reports"; }
    std::filesystem::path stamp() const { return root / "run.json"; }
    std::filesystem::path lock() const { return root / ".lock"; }
};

// Exclusive ownership of a run directory for the life of one stage.
class RunLock {
   public:
    explicit RunLock(const RunDir& dir) : path_(dir.lock()) {
        std::filesystem::create_directories(dir.root);
        std::ofstream probe(path_, std::ios::out | std::ios::app);
        if (std::filesystem::exists(path_) && std::filesystem::file_size(path_) > 0)
            throw std::runtime_error("run directory is locked: " + path_.string());
        std::ofstream out(path_, std::ios::out | std::ios::trunc);
        out << "locked\n";
    }
    ~RunLock() {
        std::error_code ec;
        std::filesystem::remove(path_, ec);
    }
    RunLock(const RunLock&) = delete;
    RunLock& operator=(const RunLock&) = delete;

   private:
    std::filesystem::path path_;
};

// Records the config digest on first use; later stages must match it.
inline void stamp_run(const RunDir& dir, const RunConfig& cfg) {
    if (std::filesystem::exists(dir.stamp())) {
        json j = json::parse(read_text_file(dir.stamp()));
        if (j.at("config_digest").get<std::string>() != cfg.digest())
            throw std::runtime_error("config digest mismatch: run directory was created with a different config");
        return;
    }
    std::filesystem::create_directories(dir.root);
    write_text_file(dir.stamp(), json{{"config_digest", cfg.digest()}}.dump(2) + "\n");
}

inline void write_report(const RunDir& dir, const std::string& name, json body, const RunConfig& cfg) {
    body["config_digest"] = cfg.digest();
    std::filesystem::create_directories(dir.reports());
    write_text_file(dir.reports() / (name + ".json"), body.dump(2) + "\n");
}

// Homogeneous frames of one split as a labeled classification dataset.
inline std::vector<LabeledImage> classifier_dataset(const CorpusManifest& manifest, const SplitAssignment& split,
                                                    Split which, const std::filesystem::path& root) {
    std::vector<LabeledImage> out;
    for (const auto& video : manifest.videos) {
        if (split.of(video.video_id) != which) continue;
        for (const auto& f : video.frames) {
            if (!f.is_homogeneous()) continue;
            cv::Mat img = cv::imread((root / f.image_path).string(), cv::IMREAD_COLOR);
            if (img.empty()) throw std::runtime_error("cannot read " + (root / f.image_path).string());
            out.push_back({img, static_cast<int>(*f.global_class), f.frame_id});
        }
    }
    return out;
}

}  // namespace filmseg
