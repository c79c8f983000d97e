#pragma once

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "filmseg/corpus.hpp"
#include "filmseg/mask.hpp"

namespace filmseg {

// Intersection-over-union for one class's pixel sets.
// Empty union (class absent from both masks) counts as a perfect 1.0 so
// homogeneous frames keep a defined per-class score.
inline double iou(const MaskImage& pred, const MaskImage& gt, ContentClass cls) {
    if (pred.width != gt.width || pred.height != gt.height)
        throw std::invalid_argument("iou: mask dimension mismatch");
    const uint8_t label = static_cast<uint8_t>(cls);
    size_t inter = 0, uni = 0;
    for (size_t i = 0; i < pred.labels.size(); ++i) {
        bool a = pred.labels[i] == label;
        bool b = gt.labels[i] == label;
        inter += (a && b);
        uni += (a || b);
    }
    if (uni == 0) return 1.0;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

inline double mean_iou(const MaskImage& pred, const MaskImage& gt) {
    return 0.5 * (iou(pred, gt, ContentClass::NP) + iou(pred, gt, ContentClass::P));
}

inline double accuracy(const std::vector<int>& pred, const std::vector<int>& truth) {
    if (pred.size() != truth.size() || pred.empty())
        throw std::invalid_argument("accuracy: label vectors empty or mismatched");
    size_t ok = 0;
    for (size_t i = 0; i < pred.size(); ++i) ok += (pred[i] == truth[i]);
    return static_cast<double>(ok) / static_cast<double>(pred.size());
}

// Macro-averaged F1 over the two classes {0 = NP, 1 = P}.
// A class with no true and no predicted samples scores F1 = 1 (vacuous).
inline double macro_f1(const std::vector<int>& pred, const std::vector<int>& truth) {
    if (pred.size() != truth.size() || pred.empty())
        throw std::invalid_argument("macro_f1: label vectors empty or mismatched");
    double sum = 0.0;
    for (int cls = 0; cls < 2; ++cls) {
        size_t tp = 0, fp = 0, fn = 0;
        for (size_t i = 0; i < pred.size(); ++i) {
            bool p = pred[i] == cls;
            bool t = truth[i] == cls;
            tp += (p && t);
            fp += (p && !t);
            fn += (!p && t);
        }
        double denom = 2.0 * tp + fp + fn;
        sum += denom == 0.0 ? 1.0 : 2.0 * tp / denom;
    }
    return sum / 2.0;
}

// Metrics for one dataset subset, mirroring one table cell group.
struct MetricsReport {
    std::string subset;
    size_t sample_count = 0;
    // classification metrics (optional depending on task)
    double acc = 0.0;
    double f1 = 0.0;
    // segmentation metrics: per-image IoU averaged over the subset
    double iou_np = 0.0;
    double iou_p = 0.0;

    double miou() const { return 0.5 * (iou_np + iou_p); }
};

inline json to_json(const MetricsReport& r) {
    return json{{"subset", r.subset},   {"sample_count", r.sample_count},
                {"accuracy", r.acc},    {"f1", r.f1},
                {"iou_np", r.iou_np},   {"iou_p", r.iou_p},
                {"mean_iou", r.miou()}};
}

inline MetricsReport metrics_report_from_json(const json& j) {
    MetricsReport r;
    r.subset = j.at("subset").get<std::string>();
    r.sample_count = j.at("sample_count").get<size_t>();
    r.acc = j.at("accuracy").get<double>();
    r.f1 = j.at("f1").get<double>();
    r.iou_np = j.at("iou_np").get<double>();
    r.iou_p = j.at("iou_p").get<double>();
    return r;
}

// Average of per-image IoUs over a subset of (pred, gt) mask pairs.
struct SegmentationScorer {
    double sum_np = 0.0;
    double sum_p = 0.0;
    size_t n = 0;

    void add(const MaskImage& pred, const MaskImage& gt) {
        sum_np += iou(pred, gt, ContentClass::NP);
        sum_p += iou(pred, gt, ContentClass::P);
        ++n;
    }

    MetricsReport report(const std::string& subset) const {
        MetricsReport r;
        r.subset = subset;
        r.sample_count = n;
        if (n > 0) {
            r.iou_np = sum_np / static_cast<double>(n);
            r.iou_p = sum_p / static_cast<double>(n);
        }
        return r;
    }
};

}  // namespace filmseg
