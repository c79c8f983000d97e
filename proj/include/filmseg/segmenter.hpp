#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "filmseg/common.hpp"
#include "filmseg/corpus.hpp"
#include "filmseg/mask.hpp"
#include "filmseg/mask_gen.hpp"
#include "filmseg/metrics.hpp"
#include "filmseg/nn/graph.hpp"
#include "filmseg/nn/optim.hpp"
#include "filmseg/nn/serialize.hpp"
#include "filmseg/preprocess.hpp"
#include "filmseg/splitter.hpp"

namespace filmseg {

// Dense per-pixel token matrix: (H*W) x 3 in row-major pixel order, values
// mapped from [0, 255] to [-1, 1].
template <typename T>
nn::Mat<T> pixel_matrix(const cv::Mat& bgr) {
    if (bgr.empty() || bgr.type() != CV_8UC3) throw std::invalid_argument("pixel_matrix: expected 8-bit BGR image");
    nn::Mat<T> out(static_cast<Eigen::Index>(bgr.rows) * bgr.cols, 3);
    for (int y = 0; y < bgr.rows; ++y) {
        const cv::Vec3b* line = bgr.ptr<cv::Vec3b>(y);
        for (int x = 0; x < bgr.cols; ++x) {
            Eigen::Index r = static_cast<Eigen::Index>(y) * bgr.cols + x;
            for (int c = 0; c < 3; ++c) out(r, c) = T(line[x][c]) / T(127.5) - T(1);
        }
    }
    return out;
}

struct SegStageConfig {
    int channels = 32;
    int kernel = 7;
    int stride = 4;
    int pad = 3;
    int heads = 1;
    int depth = 1;
    int sr = 4;  // KV spatial reduction factor
    int mlp_ratio = 4;
};

struct SegConfig {
    int input_size = 512;
    std::vector<SegStageConfig> stages;
    int decoder_dim = 64;

    static SegConfig mini(int input_size = 64) {
        SegConfig c;
        c.input_size = input_size;
        c.stages = {SegStageConfig{32, 7, 4, 3, 1, 1, 4, 4}, SegStageConfig{64, 3, 2, 1, 2, 1, 2, 4}};
        c.decoder_dim = 32;
        return c;
    }

    void validate() const {
        if (input_size < 8 || stages.empty() || decoder_dim <= 0) throw std::invalid_argument("bad seg config");
        int g = input_size;
        for (const auto& s : stages) {
            if (s.channels <= 0 || s.heads <= 0 || s.channels % s.heads || s.depth <= 0 || s.sr <= 0 ||
                s.kernel <= 0 || s.stride <= 0 || s.mlp_ratio <= 0)
                throw std::invalid_argument("bad seg stage config");
            g = (g + 2 * s.pad - s.kernel) / s.stride + 1;
            if (g <= 0 || g % s.sr) throw std::invalid_argument("stage grid must be divisible by sr");
        }
    }

    std::vector<int> grids() const {
        std::vector<int> out;
        int g = input_size;
        for (const auto& s : stages) {
            g = (g + 2 * s.pad - s.kernel) / s.stride + 1;
            out.push_back(g);
        }
        return out;
    }

    std::string digest_text() const {
        std::string t = "seg:" + std::to_string(input_size) + ":" + std::to_string(decoder_dim);
        for (const auto& s : stages)
            t += ":(" + std::to_string(s.channels) + "," + std::to_string(s.kernel) + "," + std::to_string(s.stride) +
                 "," + std::to_string(s.pad) + "," + std::to_string(s.heads) + "," + std::to_string(s.depth) + "," +
                 std::to_string(s.sr) + "," + std::to_string(s.mlp_ratio) + ")";
        return t;
    }
};

inline json to_json(const SegConfig& c) {
    json stages = json::array();
    for (const auto& s : c.stages)
        stages.push_back(json{{"channels", s.channels},
                              {"kernel", s.kernel},
                              {"stride", s.stride},
                              {"pad", s.pad},
                              {"heads", s.heads},
                              {"depth", s.depth},
                              {"sr", s.sr},
                              {"mlp_ratio", s.mlp_ratio}});
    return json{{"input_size", c.input_size}, {"decoder_dim", c.decoder_dim}, {"stages", stages}};
}

inline SegConfig seg_config_from_json(const json& j) {
    SegConfig c;
    c.input_size = j.at("input_size").get<int>();
    c.decoder_dim = j.at("decoder_dim").get<int>();
    c.stages.clear();
    for (const auto& s : j.at("stages")) {
        SegStageConfig sc;
        sc.channels = s.at("channels").get<int>();
        sc.kernel = s.at("kernel").get<int>();
        sc.stride = s.at("stride").get<int>();
        sc.pad = s.at("pad").get<int>();
        sc.heads = s.at("heads").get<int>();
        sc.depth = s.at("depth").get<int>();
        sc.sr = s.at("sr").get<int>();
        sc.mlp_ratio = s.at("mlp_ratio").get<int>();
        c.stages.push_back(sc);
    }
    return c;
}

// Hierarchical transformer encoder with a light all-dense decoder; logits are
// upscaled to the input resolution by bilinear interpolation.
template <typename T>
class SegModel {
   public:
    struct Block {
        nn::Var<T> ln1_g, ln1_b, wq, bq, wk, bk, wv, bv, wo, bo;
        nn::Var<T> ln2_g, ln2_b, w1, b1, w2, b2;
    };
    struct Stage {
        nn::Var<T> embed_w, embed_b;  // conv patch embedding
        nn::Var<T> emb_ln_g, emb_ln_b;
        std::vector<Block> blocks;
        nn::Var<T> out_ln_g, out_ln_b;
    };

    SegModel(SegConfig cfg, uint64_t seed) : cfg_(std::move(cfg)) {
        cfg_.validate();
        Rng rng(seed);
        auto mk = [&](int r, int c, double s) {
            nn::Mat<T> m(r, c);
            for (int i = 0; i < r; ++i)
                for (int j = 0; j < c; ++j) m(i, j) = T(rng.normal(0.0, s));
            return nn::parameter<T>(std::move(m));
        };
        auto zeros = [&](int r, int c) { return nn::parameter<T>(nn::Mat<T>::Zero(r, c)); };
        auto ones = [&](int r, int c) { return nn::parameter<T>(nn::Mat<T>::Ones(r, c)); };

        int cin = 3;
        for (const auto& sc : cfg_.stages) {
            Stage st;
            int fan_in = sc.kernel * sc.kernel * cin;
            st.embed_w = mk(fan_in, sc.channels, std::sqrt(2.0 / fan_in));
            st.embed_b = zeros(1, sc.channels);
            st.emb_ln_g = ones(1, sc.channels);
            st.emb_ln_b = zeros(1, sc.channels);
            const int d = sc.channels, hd = d * sc.mlp_ratio;
            for (int l = 0; l < sc.depth; ++l) {
                Block b;
                b.ln1_g = ones(1, d);
                b.ln1_b = zeros(1, d);
                b.wq = mk(d, d, 0.02);
                b.bq = zeros(1, d);
                b.wk = mk(d, d, 0.02);
                b.bk = zeros(1, d);
                b.wv = mk(d, d, 0.02);
                b.bv = zeros(1, d);
                b.wo = mk(d, d, 0.02);
                b.bo = zeros(1, d);
                b.ln2_g = ones(1, d);
                b.ln2_b = zeros(1, d);
                b.w1 = mk(d, hd, 0.02);
                b.b1 = zeros(1, hd);
                b.w2 = mk(hd, d, 0.02);
                b.b2 = zeros(1, d);
                st.blocks.push_back(std::move(b));
            }
            st.out_ln_g = ones(1, sc.channels);
            st.out_ln_b = zeros(1, sc.channels);
            stages_.push_back(std::move(st));
            cin = sc.channels;
        }
        for (size_t i = 0; i < cfg_.stages.size(); ++i) {
            int d = cfg_.stages[i].channels;
            proj_w_.push_back(mk(d, cfg_.decoder_dim, std::sqrt(2.0 / d)));
            proj_b_.push_back(zeros(1, cfg_.decoder_dim));
        }
        int fused = cfg_.decoder_dim * static_cast<int>(cfg_.stages.size());
        fuse_w_ = mk(fused, cfg_.decoder_dim, std::sqrt(2.0 / fused));
        fuse_b_ = zeros(1, cfg_.decoder_dim);
        cls_w_ = mk(cfg_.decoder_dim, 2, 0.01);
        cls_b_ = zeros(1, 2);
    }

    const SegConfig& config() const { return cfg_; }

    // pixels: (input_size^2) x 3; returns per-pixel logits (input_size^2) x 2
    nn::Var<T> forward(const nn::Mat<T>& pixels) const {
        const int S = cfg_.input_size;
        if (pixels.rows() != static_cast<Eigen::Index>(S) * S || pixels.cols() != 3)
            throw std::invalid_argument("forward: pixel matrix shape mismatch");
        auto grids = cfg_.grids();
        nn::Var<T> x = nn::constant<T>(pixels);
        int h = S, w = S;
        std::vector<nn::Var<T>> features;
        for (size_t i = 0; i < stages_.size(); ++i) {
            const auto& sc = cfg_.stages[i];
            const auto& st = stages_[i];
            x = nn::conv2d(x, h, w, st.embed_w, st.embed_b, sc.kernel, sc.stride, sc.pad);
            h = w = grids[i];
            x = nn::layer_norm(x, st.emb_ln_g, st.emb_ln_b);
            for (const auto& b : st.blocks) {
                auto a = attention(nn::layer_norm(x, b.ln1_g, b.ln1_b), b, sc, h, w);
                x = nn::add(x, a);
                auto m = nn::layer_norm(x, b.ln2_g, b.ln2_b);
                auto ff = nn::add_rowvec(nn::matmul(nn::gelu(nn::add_rowvec(nn::matmul(m, b.w1), b.b1)), b.w2), b.b2);
                x = nn::add(x, ff);
            }
            features.push_back(nn::layer_norm(x, st.out_ln_g, st.out_ln_b));
        }
        // decoder: project every stage to a common width, upsample to the
        // finest grid, concatenate, fuse, classify
        const int g0 = grids[0];
        std::vector<nn::Var<T>> up;
        for (size_t i = 0; i < features.size(); ++i) {
            auto p = nn::add_rowvec(nn::matmul(features[i], proj_w_[i]), proj_b_[i]);
            up.push_back(i == 0 ? p : nn::bilinear_resize(p, grids[i], grids[i], g0, g0));
        }
        auto fused = nn::relu(nn::add_rowvec(nn::matmul(nn::concat_cols<T>(up), fuse_w_), fuse_b_));
        auto logits = nn::add_rowvec(nn::matmul(fused, cls_w_), cls_b_);
        return nn::bilinear_resize(logits, g0, g0, S, S);
    }

    std::vector<nn::Var<T>> parameters() const {
        std::vector<nn::Var<T>> p;
        for (const auto& st : stages_) {
            for (const auto& v : {st.embed_w, st.embed_b, st.emb_ln_g, st.emb_ln_b}) p.push_back(v);
            for (const auto& b : st.blocks)
                for (const auto& v : {b.ln1_g, b.ln1_b, b.wq, b.bq, b.wk, b.bk, b.wv, b.bv, b.wo, b.bo, b.ln2_g,
                                      b.ln2_b, b.w1, b.b1, b.w2, b.b2})
                    p.push_back(v);
            p.push_back(st.out_ln_g);
            p.push_back(st.out_ln_b);
        }
        for (size_t i = 0; i < proj_w_.size(); ++i) {
            p.push_back(proj_w_[i]);
            p.push_back(proj_b_[i]);
        }
        for (const auto& v : {fuse_w_, fuse_b_, cls_w_, cls_b_}) p.push_back(v);
        return p;
    }

    void save(const std::filesystem::path& path) const { nn::save_weights(parameters(), path); }
    void load(const std::filesystem::path& path) { nn::load_weights(parameters(), path); }

   private:
    nn::Var<T> attention(nn::Var<T> x, const Block& b, const SegStageConfig& sc, int h, int w) const {
        const int d = sc.channels, nh = sc.heads, dh = d / nh;
        auto q = nn::add_rowvec(nn::matmul(x, b.wq), b.bq);
        auto kv_in = sc.sr > 1 ? nn::avg_pool(x, h, w, sc.sr) : x;
        auto k = nn::add_rowvec(nn::matmul(kv_in, b.wk), b.bk);
        auto v = nn::add_rowvec(nn::matmul(kv_in, b.wv), b.bv);
        std::vector<nn::Var<T>> heads;
        const T inv_sqrt = T(1) / std::sqrt(T(dh));
        for (int i = 0; i < nh; ++i) {
            auto qi = nn::slice_cols(q, i * dh, dh);
            auto ki = nn::slice_cols(k, i * dh, dh);
            auto vi = nn::slice_cols(v, i * dh, dh);
            auto att = nn::softmax_rows(nn::scale(nn::matmul(qi, nn::transpose(ki)), inv_sqrt));
            heads.push_back(nn::matmul(att, vi));
        }
        return nn::add_rowvec(nn::matmul(nn::concat_cols<T>(heads), b.wo), b.bo);
    }

    SegConfig cfg_;
    std::vector<Stage> stages_;
    std::vector<nn::Var<T>> proj_w_, proj_b_;
    nn::Var<T> fuse_w_, fuse_b_, cls_w_, cls_b_;
};

// Per-pixel argmax segmentation of an arbitrary-size frame: contrast stretch,
// resize to the model input, forward, then nearest-resample the label map
// back to the source resolution.
template <typename T>
MaskImage segment(const SegModel<T>& model, const cv::Mat& bgr) {
    const int S = model.config().input_size;
    cv::Mat img = resize_image(contrast_stretch(bgr), S);
    auto logits = model.forward(pixel_matrix<T>(img));
    MaskImage at_model(S, S);
    for (int y = 0; y < S; ++y)
        for (int x = 0; x < S; ++x) {
            Eigen::Index r = static_cast<Eigen::Index>(y) * S + x;
            at_model.at(x, y) = logits->value(r, 1) > logits->value(r, 0) ? 1 : 0;
        }
    if (bgr.cols == S && bgr.rows == S) return at_model;
    return resample_mask_nearest(at_model, bgr.cols, bgr.rows);
}

// ---- experiment plans ----

enum class PlanId { A, B0, B1, B2 };

inline std::string to_string(PlanId p) {
    switch (p) {
        case PlanId::A: return "A";
        case PlanId::B0: return "B0";
        case PlanId::B1: return "B1";
        case PlanId::B2: return "B2";
    }
    throw std::logic_error("bad plan");
}

inline PlanId plan_from_string(const std::string& s) {
    if (s == "A") return PlanId::A;
    if (s == "B0") return PlanId::B0;
    if (s == "B1") return PlanId::B1;
    if (s == "B2") return PlanId::B2;
    throw std::invalid_argument("unknown plan " + s);
}

enum class MaskKind { none, manual, proxy };

struct ExperimentPlan {
    PlanId id = PlanId::A;

    // mask source for heterogeneous frames in each split; homogeneous frames
    // always use the mask implied by their global class
    MaskKind train_het() const {
        switch (id) {
            case PlanId::A: return MaskKind::none;
            case PlanId::B0: return MaskKind::manual;
            case PlanId::B1:
            case PlanId::B2: return MaskKind::proxy;
        }
        throw std::logic_error("bad plan");
    }
    MaskKind val_het() const {
        switch (id) {
            case PlanId::A: return MaskKind::none;
            case PlanId::B0:
            case PlanId::B1: return MaskKind::manual;
            case PlanId::B2: return MaskKind::proxy;
        }
        throw std::logic_error("bad plan");
    }
};

struct TrainConfigStage3 {
    int batch_size = 4;
    double lr = 6e-5;
    double weight_decay = 0.01;
    int max_epochs = 40;
    int early_stop_patience = 6;
    // how many times each heterogeneous training frame appears per epoch;
    // 1 means hom and het frames are mixed uniformly
    int het_repeat = 1;

    void validate() const {
        if (batch_size < 1 || max_epochs < 1 || lr <= 0 || weight_decay < 0 || het_repeat < 1)
            throw std::invalid_argument("bad stage-3 config");
    }

    std::string digest_text() const {
        return "s3:" + std::to_string(batch_size) + ":" + std::to_string(lr) + ":" + std::to_string(weight_decay) +
               ":" + std::to_string(max_epochs) + ":" + std::to_string(het_repeat);
    }
};

struct SegSample {
    cv::Mat image;   // contrast-stretched, resized to input_size
    MaskImage mask;  // resized to input_size
    std::string frame_id;
};

namespace detail {

inline MaskImage frame_target_mask(const FrameRecord& f, const std::filesystem::path& root, MaskKind het_kind,
                                   int frame_w, int frame_h) {
    if (f.is_homogeneous()) return homogeneous_mask(f, frame_w, frame_h);
    switch (het_kind) {
        case MaskKind::manual:
            if (!f.gt_mask_path) throw std::runtime_error("plan needs manual mask but frame " + f.frame_id + " has none");
            return read_mask(root / *f.gt_mask_path);
        case MaskKind::proxy:
            if (!f.proxy_mask_path)
                throw std::runtime_error("plan needs proxy mask but frame " + f.frame_id + " has none");
            return read_mask(root / *f.proxy_mask_path);
        case MaskKind::none: break;
    }
    throw std::logic_error("heterogeneous frame reached with mask kind none");
}

}  // namespace detail

// Materializes the (image, target-mask) pairs one split contributes under a
// plan. Heterogeneous frames are dropped for plans that exclude them.
inline std::vector<SegSample> build_seg_dataset(const CorpusManifest& manifest, const SplitAssignment& split,
                                                Split which, MaskKind het_kind,
                                                const std::filesystem::path& root, int input_size,
                                                int het_repeat = 1) {
    std::vector<SegSample> out;
    for (const auto& video : manifest.videos) {
        if (split.of(video.video_id) != which) continue;
        for (const auto& f : video.frames) {
            if (!f.is_homogeneous() && het_kind == MaskKind::none) continue;
            cv::Mat img = cv::imread((root / f.image_path).string(), cv::IMREAD_COLOR);
            if (img.empty()) throw std::runtime_error("cannot read " + (root / f.image_path).string());
            MaskImage target = detail::frame_target_mask(f, root, het_kind, img.cols, img.rows);
            auto [rimg, rmask] = resize_for_segmenter(contrast_stretch(img), target, input_size);
            int reps = f.is_homogeneous() ? 1 : het_repeat;
            for (int r = 0; r < reps; ++r) out.push_back({rimg, rmask, f.frame_id});
        }
    }
    return out;
}

template <typename T>
double mean_iou_on(const SegModel<T>& model, const std::vector<SegSample>& data) {
    if (data.empty()) throw std::invalid_argument("mean_iou_on: empty dataset");
    SegmentationScorer scorer;
    for (const auto& s : data) scorer.add(segment(model, s.image), s.mask);
    return scorer.report("").miou();
}

struct TrainReportStage3 {
    struct Epoch {
        int epoch = 0;
        double train_loss = 0.0;
        double val_miou = 0.0;
    };
    std::vector<Epoch> history;
    double best_val_miou = 0.0;
    int best_epoch = -1;
};

// Stage-3 loop: AdamW on per-pixel cross-entropy; early stop and best-model
// selection on validation mean IoU. Homogeneous and heterogeneous samples are
// shuffled into one uniform stream each epoch.
template <typename T>
TrainReportStage3 train_segmenter(SegModel<T>& model, const std::vector<SegSample>& train,
                                  const std::vector<SegSample>& val, const TrainConfigStage3& cfg, uint64_t seed) {
    cfg.validate();
    if (train.empty() || val.empty()) throw std::invalid_argument("train_segmenter: empty split");
    auto params = model.parameters();
    typename nn::Adam<T>::Config ocfg;
    ocfg.lr = T(cfg.lr);
    ocfg.weight_decay = T(cfg.weight_decay);
    nn::Adam<T> opt(params, ocfg);
    nn::EarlyStopper<T> stopper(cfg.early_stop_patience);

    const int S = model.config().input_size;
    std::vector<nn::Mat<T>> inputs;
    std::vector<std::vector<int>> targets;
    inputs.reserve(train.size());
    targets.reserve(train.size());
    for (const auto& s : train) {
        if (s.image.cols != S || s.image.rows != S || s.mask.width != S || s.mask.height != S)
            throw std::invalid_argument("train_segmenter: sample not at model input size");
        inputs.push_back(pixel_matrix<T>(s.image));
        targets.emplace_back(s.mask.labels.begin(), s.mask.labels.end());
    }

    Rng rng(seed);
    std::vector<size_t> order(train.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::vector<nn::Mat<T>> best;
    TrainReportStage3 report;

    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        rng.shuffle(order);
        double loss_sum = 0.0;
        size_t n_batches = 0;
        for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
            size_t end = std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
            opt.zero_grad();
            std::vector<nn::Var<T>> losses;
            for (size_t i = start; i < end; ++i)
                losses.push_back(nn::cross_entropy_logits(model.forward(inputs[order[i]]), targets[order[i]]));
            nn::Var<T> total = losses[0];
            for (size_t i = 1; i < losses.size(); ++i) total = nn::add(total, losses[i]);
            total = nn::scale(total, T(1) / T(losses.size()));
            nn::backward(total);
            opt.step();
            loss_sum += double(total->value(0, 0));
            ++n_batches;
        }

        double miou = mean_iou_on(model, val);
        report.history.push_back({epoch, loss_sum / std::max<size_t>(n_batches, 1), miou});
        if (stopper.observe(T(miou))) {
            best.clear();
            for (const auto& p : params) best.push_back(p->value);
            report.best_val_miou = miou;
            report.best_epoch = epoch;
        }
        if (stopper.should_stop()) break;
    }
    if (!best.empty())
        for (size_t i = 0; i < params.size(); ++i) params[i]->value = best[i];
    return report;
}

// ---- checkpoint I/O ----

template <typename T>
void save_segmenter(const SegModel<T>& model, const TrainConfigStage3& cfg, PlanId plan,
                    const std::filesystem::path& path) {
    nn::save_weights(model.parameters(), path);
    json meta{{"kind", "segmenter"},
              {"plan", to_string(plan)},
              {"config_digest", digest_hex(fnv1a64(model.config().digest_text() + "|" + cfg.digest_text()))},
              {"config", to_json(model.config())}};
    write_text_file(path.string() + ".json", meta.dump(2) + "\n");
}

template <typename T>
SegModel<T> load_segmenter(const std::filesystem::path& path) {
    json meta = json::parse(read_text_file(path.string() + ".json"));
    if (meta.at("kind").get<std::string>() != "segmenter")
        throw std::runtime_error("not a segmenter checkpoint: " + path.string());
    SegModel<T> model(seg_config_from_json(meta.at("config")), 0);
    nn::load_weights(model.parameters(), path);
    return model;
}

// ---- experiment driver ----

struct ExperimentResult {
    PlanId plan = PlanId::A;
    TrainReportStage3 training;
    MetricsReport test_homogeneous;      // homogeneous-only test frames
    MetricsReport test_mixed;            // homogeneous + heterogeneous
    MetricsReport test_heterogeneous;    // heterogeneous-only
};

inline json to_json(const ExperimentResult& r) {
    json hist = json::array();
    for (const auto& e : r.training.history)
        hist.push_back(json{{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_mean_iou", e.val_miou}});
    return json{{"plan", to_string(r.plan)},
                {"best_val_mean_iou", r.training.best_val_miou},
                {"best_epoch", r.training.best_epoch},
                {"history", hist},
                {"test", json{{"homogeneous", to_json(r.test_homogeneous)},
                              {"homogeneous+heterogeneous", to_json(r.test_mixed)},
                              {"heterogeneous", to_json(r.test_heterogeneous)}}}};
}

// Evaluates a trained model on the three test subsets at native
// frame resolution, always against manual ground truth.
template <typename T>
void evaluate_experiment(const SegModel<T>& model, const CorpusManifest& manifest, const SplitAssignment& split,
                         const std::filesystem::path& root, ExperimentResult& out) {
    SegmentationScorer hom, mixed, het;
    for (const auto& video : manifest.videos) {
        if (split.of(video.video_id) != Split::test) continue;
        for (const auto& f : video.frames) {
            cv::Mat img = cv::imread((root / f.image_path).string(), cv::IMREAD_COLOR);
            if (img.empty()) throw std::runtime_error("cannot read " + (root / f.image_path).string());
            MaskImage gt = f.is_homogeneous() ? homogeneous_mask(f, img.cols, img.rows)
                                              : read_mask(root / *f.gt_mask_path);
            MaskImage pred = segment(model, img);
            mixed.add(pred, gt);
            (f.is_homogeneous() ? hom : het).add(pred, gt);
        }
    }
    out.test_homogeneous = hom.report("test-homogeneous");
    out.test_mixed = mixed.report("test-mixed");
    out.test_heterogeneous = het.report("test-heterogeneous");
}

// Trains one plan from scratch and reports the three test subsets.
template <typename T>
ExperimentResult run_experiment(const CorpusManifest& manifest, const SplitAssignment& split, ExperimentPlan plan,
                                const SegConfig& seg_cfg, const TrainConfigStage3& cfg,
                                const std::filesystem::path& root, uint64_t seed,
                                SegModel<T>* trained_out = nullptr) {
    auto train =
        build_seg_dataset(manifest, split, Split::train, plan.train_het(), root, seg_cfg.input_size, cfg.het_repeat);
    auto val = build_seg_dataset(manifest, split, Split::val, plan.val_het(), root, seg_cfg.input_size);
    SegModel<T> model(seg_cfg, seed);
    ExperimentResult result;
    result.plan = plan.id;
    result.training = train_segmenter(model, train, val, cfg, seed ^ 0xa5a5a5a5ull);
    evaluate_experiment(model, manifest, split, root, result);
    if (trained_out) *trained_out = std::move(model);
    return result;
}

}  // namespace filmseg
