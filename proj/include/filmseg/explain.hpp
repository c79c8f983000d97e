#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include <json.hpp>
#include <opencv2/core.hpp>
#include <opencv2/imgproc.hpp>

#include "filmseg/classifier.hpp"
#include "filmseg/mask.hpp"

namespace filmseg {

// Heatmap over a frame; values in [0, 1], max-normalized unless all zero.
struct AttributionMap {
    int width = 0;
    int height = 0;
    int target_class = 0;
    std::vector<float> values;  // row-major

    float at(int x, int y) const { return values[static_cast<size_t>(y) * width + x]; }
};

// Class-activation map from patch states and their gradients: channel weights
// are the spatially averaged gradients, the weighted sum is rectified,
// bilinearly upsampled, and max-normalized.
template <typename T>
AttributionMap gradcam_from_states(const nn::Mat<T>& states, const nn::Mat<T>& grads, int grid, int out_w,
                                   int out_h, int target_class) {
    if (states.rows() != static_cast<Eigen::Index>(grid) * grid || states.rows() != grads.rows() ||
        states.cols() != grads.cols())
        throw std::invalid_argument("gradcam_from_states: shape mismatch");
    Eigen::Matrix<T, 1, Eigen::Dynamic> alpha = grads.colwise().mean();
    cv::Mat coarse(grid, grid, CV_32F);
    for (int y = 0; y < grid; ++y)
        for (int x = 0; x < grid; ++x) {
            T v = (states.row(static_cast<Eigen::Index>(y) * grid + x).array() * alpha.array()).sum();
            coarse.at<float>(y, x) = std::max(0.0f, static_cast<float>(v));
        }
    cv::Mat fine;
    cv::resize(coarse, fine, cv::Size(out_w, out_h), 0, 0, cv::INTER_LINEAR);
    AttributionMap map;
    map.width = out_w;
    map.height = out_h;
    map.target_class = target_class;
    map.values.resize(static_cast<size_t>(out_w) * out_h);
    double mx = 0;
    cv::minMaxLoc(fine, nullptr, &mx);
    for (int y = 0; y < out_h; ++y)
        for (int x = 0; x < out_w; ++x) {
            float v = fine.at<float>(y, x);
            map.values[static_cast<size_t>(y) * out_w + x] = mx > 0 ? static_cast<float>(v / mx) : 0.0f;
        }
    return map;
}

// GradCAM of the frame-level class score with respect to the last backbone
// block's patch-state grid; output is at the source frame's resolution.
template <typename T>
AttributionMap gradcam(const ProxyClassifier<T>& clf, const cv::Mat& bgr, int target_class) {
    if (target_class < 0 || target_class > 1) throw std::invalid_argument("gradcam: target class must be 0 or 1");
    auto f = clf.forward(clf.prepare(bgr));
    auto score = nn::slice_cols(f.logits, target_class, 1);
    nn::backward(score);
    const auto& states = f.backbone_out.patch_states;
    if (states->grad.size() == 0)
        throw std::runtime_error("gradcam: no gradient reached the patch states");
    return gradcam_from_states<T>(states->value, states->grad, clf.backbone().config().grid(), bgr.cols, bgr.rows,
                                  target_class);
}

// Heatmap alpha-blended onto the frame.
inline cv::Mat render_attribution_overlay(const cv::Mat& bgr, const AttributionMap& map, double alpha = 0.45) {
    if (bgr.cols != map.width || bgr.rows != map.height)
        throw std::invalid_argument("render_attribution_overlay: size mismatch");
    cv::Mat heat8(map.height, map.width, CV_8UC1);
    for (int y = 0; y < map.height; ++y)
        for (int x = 0; x < map.width; ++x)
            heat8.at<uint8_t>(y, x) = static_cast<uint8_t>(std::lround(255.0 * map.at(x, y)));
    cv::Mat colored;
    cv::applyColorMap(heat8, colored, cv::COLORMAP_JET);
    cv::Mat out;
    cv::addWeighted(bgr, 1.0 - alpha, colored, alpha, 0.0, out);
    return out;
}

// Mask contours drawn onto the frame (NP region outlined).
inline cv::Mat render_mask_overlay(const cv::Mat& bgr, const MaskImage& mask,
                                   cv::Scalar color = cv::Scalar(0, 0, 255)) {
    if (bgr.cols != mask.width || bgr.rows != mask.height)
        throw std::invalid_argument("render_mask_overlay: size mismatch");
    cv::Mat bin(mask.height, mask.width, CV_8UC1);
    for (int y = 0; y < mask.height; ++y)
        for (int x = 0; x < mask.width; ++x) bin.at<uint8_t>(y, x) = mask.at(x, y) == 0 ? 255 : 0;
    std::vector<std::vector<cv::Point>> contours;
    cv::findContours(bin, contours, cv::RETR_LIST, cv::CHAIN_APPROX_SIMPLE);
    cv::Mat out = bgr.clone();
    cv::drawContours(out, contours, -1, color, 1);
    return out;
}

// One row of the boundary-case report.
struct BoundaryCase {
    std::string frame_id;
    int true_label = 0;
    int predicted_label = 0;
    double probability = 0.0;  // winning-class probability
    bool misclassified = false;
    std::string attribution_path;  // filled in by callers that render overlays
};

inline json to_json(const BoundaryCase& c) {
    return json{{"frame_id", c.frame_id},       {"true_label", c.true_label},
                {"predicted_label", c.predicted_label}, {"probability", c.probability},
                {"misclassified", c.misclassified},     {"attribution_path", c.attribution_path}};
}

// Frames worth a human look: every misclassified frame, plus correctly
// classified frames whose winning probability falls inside the uncertainty
// band. Sorted ascending by winning probability.
template <typename T>
std::vector<BoundaryCase> boundary_report(const ProxyClassifier<T>& clf, const std::vector<LabeledImage>& data,
                                          double band_lo = 0.5, double band_hi = 0.6) {
    if (data.empty()) throw std::invalid_argument("boundary_report: empty dataset");
    if (!(band_lo >= 0.5 && band_lo <= band_hi && band_hi <= 1.0))
        throw std::invalid_argument("boundary_report: need 0.5 <= lo <= hi <= 1");
    std::vector<BoundaryCase> out;
    for (const auto& s : data) {
        auto [pred, p_prob] = clf.classify(s.image);
        double win = pred == 1 ? p_prob : 1.0 - p_prob;
        BoundaryCase c;
        c.frame_id = s.frame_id;
        c.true_label = s.label;
        c.predicted_label = pred;
        c.probability = win;
        c.misclassified = pred != s.label;
        if (c.misclassified || (win >= band_lo && win <= band_hi)) out.push_back(std::move(c));
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const BoundaryCase& a, const BoundaryCase& b) { return a.probability < b.probability; });
    return out;
}

}  // namespace filmseg
