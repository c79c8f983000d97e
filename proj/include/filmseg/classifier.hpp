#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>
#include <opencv2/core.hpp>

#include "filmseg/backbone.hpp"
#include "filmseg/common.hpp"
#include "filmseg/metrics.hpp"
#include "filmseg/nn/optim.hpp"
#include "filmseg/preprocess.hpp"

namespace filmseg {

// Which backbone summary the head consumes.
enum class HeadMode { centroid, cls_token };

inline std::string to_string(HeadMode m) { return m == HeadMode::centroid ? "centroid" : "cls-token"; }

inline HeadMode head_mode_from_string(const std::string& s) {
    if (s == "centroid") return HeadMode::centroid;
    if (s == "cls-token") return HeadMode::cls_token;
    throw std::invalid_argument("unknown head mode " + s);
}

// Two-layer MLP head: dim -> hidden (ReLU) -> 2 logits.
template <typename T>
class ClassifierHead {
   public:
    ClassifierHead(int dim, uint64_t seed, int hidden = 128) : dim_(dim), hidden_(hidden) {
        Rng rng(seed);
        auto mk = [&](int r, int c, double s) {
            nn::Mat<T> m(r, c);
            for (int i = 0; i < r; ++i)
                for (int j = 0; j < c; ++j) m(i, j) = T(rng.normal(0.0, s));
            return nn::parameter<T>(std::move(m));
        };
        // He init for the ReLU layer, small init for the logit layer
        w1_ = mk(dim, hidden, std::sqrt(2.0 / dim));
        b1_ = nn::parameter<T>(nn::Mat<T>::Zero(1, hidden));
        w2_ = mk(hidden, 2, 0.01);
        b2_ = nn::parameter<T>(nn::Mat<T>::Zero(1, 2));
    }

    int dim() const { return dim_; }
    int hidden() const { return hidden_; }

    // features: B x dim -> logits B x 2
    nn::Var<T> forward(nn::Var<T> features) const {
        auto h = nn::relu(nn::add_rowvec(nn::matmul(features, w1_), b1_));
        return nn::add_rowvec(nn::matmul(h, w2_), b2_);
    }

    std::vector<nn::Var<T>> parameters() const { return {w1_, b1_, w2_, b2_}; }

   private:
    int dim_, hidden_;
    nn::Var<T> w1_, b1_, w2_, b2_;
};

// Backbone plus head operating on whole frames.
template <typename T>
class ProxyClassifier {
   public:
    ProxyClassifier(ViTConfig cfg, HeadMode mode, uint64_t seed)
        : backbone_(cfg, seed), head_(cfg.dim, seed ^ 0x9e3779b97f4a7c15ull), mode_(mode) {}

    ViT<T>& backbone() { return backbone_; }
    const ViT<T>& backbone() const { return backbone_; }
    const ClassifierHead<T>& head() const { return head_; }
    HeadMode mode() const { return mode_; }

    // preprocessing shared by training and inference
    nn::Mat<T> prepare(const cv::Mat& bgr) const {
        cv::Mat img = contrast_stretch(bgr);
        img = resize_for_classifier(img, backbone_.config().image_size);
        return patchify<T>(img, backbone_.config().patch);
    }

    struct Forward {
        typename ViT<T>::Output backbone_out;
        nn::Var<T> logits;  // 1 x 2
    };

    Forward forward(const nn::Mat<T>& patch_pixels) const {
        Forward f;
        f.backbone_out = backbone_.forward(patch_pixels);
        auto feat = mode_ == HeadMode::centroid ? f.backbone_out.centroid : f.backbone_out.cls_state;
        f.logits = head_.forward(feat);
        return f;
    }

    // frame-level prediction: {0 = NP, 1 = P} plus P probability
    std::pair<int, double> classify(const cv::Mat& bgr) const {
        auto f = forward(prepare(bgr));
        auto probs = nn::softmax_rows(f.logits);
        double p = double(probs->value(0, 1));
        return {p >= 0.5 ? 1 : 0, p};
    }

    // per-patch labels from the shared head applied to each patch state;
    // row-major grid order, grid() x grid() entries
    std::vector<uint8_t> predict_patch_labels(const cv::Mat& bgr) const {
        auto f = forward(prepare(bgr));
        auto logits = head_.forward(f.backbone_out.patch_states);
        std::vector<uint8_t> labels(static_cast<size_t>(logits->value.rows()));
        for (Eigen::Index r = 0; r < logits->value.rows(); ++r)
            labels[static_cast<size_t>(r)] = logits->value(r, 1) > logits->value(r, 0) ? 1 : 0;
        return labels;
    }

    std::vector<nn::Var<T>> parameters() const {
        auto p = backbone_.parameters();
        for (const auto& h : head_.parameters()) p.push_back(h);
        return p;
    }

    std::vector<nn::Var<T>> trainable_parameters(bool train_backbone) const {
        if (train_backbone) return parameters();
        return head_.parameters();
    }

   private:
    ViT<T> backbone_;
    ClassifierHead<T> head_;
    HeadMode mode_;
};

// One homogeneous frame with its global class label.
struct LabeledImage {
    cv::Mat image;
    int label = 0;  // 0 = NP, 1 = P
    std::string frame_id;
};

struct TrainConfigStage1 {
    int batch_size = 6;
    double lr = 1e-5;
    int max_epochs = 40;
    int plateau_patience = 3;
    double plateau_factor = 0.5;
    int early_stop_patience = 8;
    bool train_backbone = true;
    bool augment = false;
    AugmentConfig augment_config;
    // with this probability a training sample's centroid is taken over a
    // random patch subset (down to a single patch) instead of all patches, so
    // the shared head also fits individual patch states; centroid mode only
    double subset_centroid_prob = 0.0;
    // with this probability patches from an opposite-class frame are pasted
    // into the sample and each region's subset centroid is supervised with
    // its source frame's label; teaches patch states to stay locally faithful
    // under mixed content while using frame labels only. centroid mode only
    double patch_mix_prob = 0.0;

    void validate() const {
        if (batch_size < 1 || max_epochs < 1) throw std::invalid_argument("bad stage-1 config");
        if (lr <= 0) throw std::invalid_argument("lr must be positive");
        auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
        if (!prob(subset_centroid_prob) || !prob(patch_mix_prob) ||
            subset_centroid_prob + patch_mix_prob > 1.0)
            throw std::invalid_argument("subset/mix probabilities must be in [0,1] and sum to at most 1");
    }

    std::string digest_text() const {
        return "s1:" + std::to_string(batch_size) + ":" + std::to_string(lr) + ":" + std::to_string(max_epochs) +
               ":" + std::to_string(train_backbone) + ":" + std::to_string(augment) + ":" +
               std::to_string(subset_centroid_prob) + ":" + std::to_string(patch_mix_prob);
    }
};

struct EpochStats {
    int epoch = 0;
    double train_loss = 0.0;
    double val_f1 = 0.0;
    double val_acc = 0.0;
};

struct TrainReportStage1 {
    std::vector<EpochStats> history;
    double best_val_f1 = 0.0;
    int best_epoch = -1;
};

template <typename T>
MetricsReport evaluate_classifier(const ProxyClassifier<T>& clf, const std::vector<LabeledImage>& data,
                                  const std::string& subset = "val") {
    if (data.empty()) throw std::invalid_argument("evaluate_classifier: empty dataset");
    std::vector<int> pred, truth;
    pred.reserve(data.size());
    truth.reserve(data.size());
    for (const auto& s : data) {
        pred.push_back(clf.classify(s.image).first);
        truth.push_back(s.label);
    }
    MetricsReport r;
    r.subset = subset;
    r.sample_count = data.size();
    r.acc = accuracy(pred, truth);
    r.f1 = macro_f1(pred, truth);
    return r;
}

// Patch-level variant: every patch of a homogeneous frame inherits the frame
// label, giving a weakly supervised estimate of proxy-mask quality.
template <typename T>
MetricsReport evaluate_patch_classifier(const ProxyClassifier<T>& clf, const std::vector<LabeledImage>& data,
                                        const std::string& subset = "val") {
    if (data.empty()) throw std::invalid_argument("evaluate_patch_classifier: empty dataset");
    std::vector<int> pred, truth;
    for (const auto& s : data) {
        for (uint8_t l : clf.predict_patch_labels(s.image)) {
            pred.push_back(l);
            truth.push_back(s.label);
        }
    }
    MetricsReport r;
    r.subset = subset;
    r.sample_count = data.size();
    r.acc = accuracy(pred, truth);
    r.f1 = macro_f1(pred, truth);
    return r;
}

// Supervised stage-1 loop: Adam on frame-level cross-entropy, learning rate
// reduced on validation-F1 plateau, early stop on validation F1, best
// checkpoint restored at the end.
template <typename T>
TrainReportStage1 train_stage1(ProxyClassifier<T>& clf, const std::vector<LabeledImage>& train,
                               const std::vector<LabeledImage>& val, const TrainConfigStage1& cfg,
                               uint64_t seed) {
    cfg.validate();
    if (train.empty() || val.empty()) throw std::invalid_argument("train_stage1: empty split");
    auto params = clf.trainable_parameters(cfg.train_backbone);
    typename nn::Adam<T>::Config ocfg;
    ocfg.lr = T(cfg.lr);
    nn::Adam<T> opt(params, ocfg);
    nn::ReduceOnPlateau<T> sched(cfg.plateau_patience, T(cfg.plateau_factor));
    nn::EarlyStopper<T> stopper(cfg.early_stop_patience);

    // cache prepared inputs when no augmentation perturbs them
    std::vector<nn::Mat<T>> cache;
    if (!cfg.augment) {
        cache.reserve(train.size());
        for (const auto& s : train) cache.push_back(clf.prepare(s.image));
    }

    Rng rng(seed);
    auto all_params = clf.parameters();
    std::vector<nn::Mat<T>> best;
    TrainReportStage1 report;

    std::vector<size_t> order(train.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    std::array<std::vector<size_t>, 2> by_label;
    for (size_t i = 0; i < train.size(); ++i) by_label[train[i].label == 1].push_back(i);

    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        rng.shuffle(order);
        double loss_sum = 0.0;
        size_t n_batches = 0;
        for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
            size_t end = std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
            opt.zero_grad();
            std::vector<nn::Var<T>> losses;
            for (size_t i = start; i < end; ++i) {
                size_t idx = order[i];
                nn::Mat<T> input;
                if (cfg.augment) {
                    uint64_t s = rng.fork(1 + idx * 1000003ull + static_cast<uint64_t>(epoch)).raw();
                    cv::Mat aug = augment(train[idx].image, std::nullopt, cfg.augment_config, s).first;
                    input = clf.prepare(aug);
                } else {
                    input = cache[idx];
                }
                double draw = clf.mode() == HeadMode::centroid ? rng.uniform(0.0, 1.0) : 1.0;
                const auto& donors = by_label[1 - train[idx].label];
                // log-uniform region size: favors the small regions (down to
                // single patches) that per-patch prediction relies on
                auto log_uniform = [&](Eigen::Index hi) {
                    double lk = rng.uniform(0.0, std::log(static_cast<double>(hi)));
                    return static_cast<Eigen::Index>(std::clamp<long>(std::lround(std::exp(lk)), 1, hi));
                };
                auto region_mean = [&](const std::vector<size_t>& pick, size_t from, size_t count,
                                       Eigen::Index n) {
                    nn::Mat<T> sel = nn::Mat<T>::Zero(1, n);
                    for (size_t j = from; j < from + count; ++j)
                        sel(0, static_cast<Eigen::Index>(pick[j])) = T(1) / T(count);
                    return nn::constant<T>(sel);
                };
                if (draw < cfg.patch_mix_prob && !donors.empty()) {
                    // patch-level cutmix: paste donor patches, supervise each
                    // region's centroid with its source frame's label
                    size_t jdx = donors[rng.uniform_int(0, static_cast<int>(donors.size()) - 1)];
                    nn::Mat<T> donor = cfg.augment ? clf.prepare(train[jdx].image) : cache[jdx];
                    Eigen::Index n = input.rows();
                    std::vector<size_t> pick(static_cast<size_t>(n));
                    for (size_t j = 0; j < pick.size(); ++j) pick[j] = j;
                    rng.shuffle(pick);
                    auto k = static_cast<size_t>(log_uniform(n - 1));
                    nn::Mat<T> mixed = input;
                    for (size_t j = 0; j < k; ++j)
                        mixed.row(static_cast<Eigen::Index>(pick[j])) = donor.row(static_cast<Eigen::Index>(pick[j]));
                    auto out = clf.backbone().forward(mixed);
                    auto pasted = clf.head().forward(nn::matmul(region_mean(pick, 0, k, n), out.patch_states));
                    auto rest = clf.head().forward(
                        nn::matmul(region_mean(pick, k, static_cast<size_t>(n) - k, n), out.patch_states));
                    auto pair = nn::add(nn::cross_entropy_logits(pasted, {train[jdx].label}),
                                        nn::cross_entropy_logits(rest, {train[idx].label}));
                    losses.push_back(nn::scale(pair, T(0.5)));
                } else if (draw < cfg.patch_mix_prob + cfg.subset_centroid_prob) {
                    // subset centroid: the head also fits partial means down
                    // to single patch states
                    auto out = clf.backbone().forward(input);
                    Eigen::Index n = out.patch_states->value.rows();
                    std::vector<size_t> pick(static_cast<size_t>(n));
                    for (size_t j = 0; j < pick.size(); ++j) pick[j] = j;
                    rng.shuffle(pick);
                    auto k = static_cast<size_t>(log_uniform(n));
                    auto logits = clf.head().forward(nn::matmul(region_mean(pick, 0, k, n), out.patch_states));
                    losses.push_back(nn::cross_entropy_logits(logits, {train[idx].label}));
                } else {
                    losses.push_back(nn::cross_entropy_logits(clf.forward(input).logits, {train[idx].label}));
                }
            }
            nn::Var<T> total = losses[0];
            for (size_t i = 1; i < losses.size(); ++i) total = nn::add(total, losses[i]);
            total = nn::scale(total, T(1) / T(losses.size()));
            nn::backward(total);
            opt.step();
            loss_sum += double(total->value(0, 0));
            ++n_batches;
        }

        // with subset training the head is also a per-patch classifier, so
        // select checkpoints by patch-level validation F1 (frame F1 saturates
        // within a couple of epochs and stops discriminating)
        bool patch_monitor =
            clf.mode() == HeadMode::centroid && cfg.subset_centroid_prob + cfg.patch_mix_prob > 0.0;
        auto vr = patch_monitor ? evaluate_patch_classifier(clf, val) : evaluate_classifier(clf, val);
        EpochStats st;
        st.epoch = epoch;
        st.train_loss = loss_sum / std::max<size_t>(n_batches, 1);
        st.val_f1 = vr.f1;
        st.val_acc = vr.acc;
        report.history.push_back(st);

        if (stopper.observe(T(vr.f1))) {
            best.clear();
            for (const auto& p : all_params) best.push_back(p->value);
            report.best_val_f1 = vr.f1;
            report.best_epoch = epoch;
        }
        sched.observe(T(vr.f1), opt);
        if (stopper.should_stop()) break;
    }

    if (!best.empty())
        for (size_t i = 0; i < all_params.size(); ++i) all_params[i]->value = best[i];
    return report;
}

// ---- checkpoint I/O ----
// weights go to <path>, metadata (configs, digests) to <path>.json

template <typename T>
void save_classifier(const ProxyClassifier<T>& clf, const TrainConfigStage1& cfg,
                     const std::filesystem::path& path) {
    nn::save_weights(clf.parameters(), path);
    const auto& vc = clf.backbone().config();
    json meta{{"kind", "proxy-classifier"},
              {"head_mode", to_string(clf.mode())},
              {"config_digest", digest_hex(fnv1a64(vc.digest_text() + "|" + cfg.digest_text()))},
              {"vit", {{"image_size", vc.image_size},
                       {"patch", vc.patch},
                       {"dim", vc.dim},
                       {"depth", vc.depth},
                       {"heads", vc.heads},
                       {"mlp_ratio", vc.mlp_ratio}}}};
    write_text_file(path.string() + ".json", meta.dump(2) + "\n");
}

template <typename T>
ProxyClassifier<T> load_classifier(const std::filesystem::path& path) {
    json meta = json::parse(read_text_file(path.string() + ".json"));
    if (meta.at("kind").get<std::string>() != "proxy-classifier")
        throw std::runtime_error("not a classifier checkpoint: " + path.string());
    ViTConfig vc;
    const auto& v = meta.at("vit");
    vc.image_size = v.at("image_size").get<int>();
    vc.patch = v.at("patch").get<int>();
    vc.dim = v.at("dim").get<int>();
    vc.depth = v.at("depth").get<int>();
    vc.heads = v.at("heads").get<int>();
    vc.mlp_ratio = v.at("mlp_ratio").get<int>();
    ProxyClassifier<T> clf(vc, head_mode_from_string(meta.at("head_mode").get<std::string>()), 0);
    nn::load_weights(clf.parameters(), path);
    return clf;
}

}  // namespace filmseg
