#pragma once

#include <algorithm>
#include <optional>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/imgproc.hpp>

#include "filmseg/common.hpp"
#include "filmseg/mask.hpp"

namespace filmseg {

namespace detail {

inline cv::Mat mask_to_label_mat(const MaskImage& m) {
    cv::Mat out(m.height, m.width, CV_8UC1);
    for (int y = 0; y < m.height; ++y)
        for (int x = 0; x < m.width; ++x) out.at<uint8_t>(y, x) = m.at(x, y);
    return out;
}

inline MaskImage mask_from_label_mat(const cv::Mat& m) {
    MaskImage out(m.cols, m.rows);
    for (int y = 0; y < m.rows; ++y)
        for (int x = 0; x < m.cols; ++x) {
            uint8_t v = m.at<uint8_t>(y, x);
            if (v > 1) throw std::runtime_error("mask label outside {0,1} after transform");
            out.at(x, y) = v;
        }
    return out;
}

inline uint8_t luminance_percentile(const cv::Mat& bgr, double pct) {
    cv::Mat gray;
    cv::cvtColor(bgr, gray, cv::COLOR_BGR2GRAY);
    std::vector<uint8_t> v(gray.begin<uint8_t>(), gray.end<uint8_t>());
    size_t idx = static_cast<size_t>(std::llround(pct / 100.0 * static_cast<double>(v.size() - 1)));
    std::nth_element(v.begin(), v.begin() + idx, v.end());
    return v[idx];
}

}  // namespace detail

// Linear luminance remap: the low percentile goes to 0 and the high
// percentile to 255, the same affine map applied to every channel.
// Degenerate ranges (constant images) are returned unchanged.
inline cv::Mat contrast_stretch(const cv::Mat& bgr, double low_pct = 2.0, double high_pct = 98.0) {
    if (!(low_pct >= 0.0 && low_pct < high_pct && high_pct <= 100.0))
        throw std::invalid_argument("contrast_stretch: need 0 <= low < high <= 100");
    uint8_t lo = detail::luminance_percentile(bgr, low_pct);
    uint8_t hi = detail::luminance_percentile(bgr, high_pct);
    if (hi <= lo) return bgr.clone();
    double scale = 255.0 / (hi - lo);
    cv::Mat out;
    bgr.convertTo(out, -1, scale, -lo * scale);
    return out;
}

struct AugmentConfig {
    bool enabled = true;
    double flip_h_prob = 0.5;
    double flip_v_prob = 0.5;
    double rotation_max_deg = 15.0;
    double perspective_distortion = 0.2;
    double brightness_jitter = 0.2;
    double saturation_jitter = 0.2;
    double contrast_jitter = 0.2;
    double gaussian_noise_sigma = 0.02;  // fraction of intensity range

    void validate() const {
        auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
        if (!prob(flip_h_prob) || !prob(flip_v_prob))
            throw std::invalid_argument("flip probabilities must be in [0,1]");
        if (gaussian_noise_sigma < 0.0) throw std::invalid_argument("noise sigma must be >= 0");
        if (rotation_max_deg < 0.0 || perspective_distortion < 0.0)
            throw std::invalid_argument("geometric parameters must be >= 0");
    }
};

// Seeded image/mask augmentation. Geometric transforms are applied
// identically to both, with nearest-neighbor resampling for the mask;
// photometric transforms touch the image only.
inline std::pair<cv::Mat, std::optional<MaskImage>> augment(const cv::Mat& image,
                                                            const std::optional<MaskImage>& mask,
                                                            const AugmentConfig& cfg, uint64_t seed) {
    cfg.validate();
    if (mask && (mask->width != image.cols || mask->height != image.rows))
        throw std::invalid_argument("augment: mask dimensions do not match image");
    if (!cfg.enabled) return {image.clone(), mask};

    Rng rng(seed);
    cv::Mat img = image.clone();
    std::optional<cv::Mat> lbl;
    if (mask) lbl = detail::mask_to_label_mat(*mask);

    if (rng.bernoulli(cfg.flip_h_prob)) {
        cv::flip(img, img, 1);
        if (lbl) cv::flip(*lbl, *lbl, 1);
    }
    if (rng.bernoulli(cfg.flip_v_prob)) {
        cv::flip(img, img, 0);
        if (lbl) cv::flip(*lbl, *lbl, 0);
    }

    const int w = img.cols, h = img.rows;
    double angle = rng.uniform(-cfg.rotation_max_deg, cfg.rotation_max_deg);
    cv::Mat rot = cv::getRotationMatrix2D(cv::Point2f(w / 2.0f, h / 2.0f), angle, 1.0);
    cv::Mat rot3 = cv::Mat::eye(3, 3, CV_64F);
    rot.copyTo(rot3(cv::Rect(0, 0, 3, 2)));

    double d = cfg.perspective_distortion;
    auto jitter = [&](double v, double span) { return static_cast<float>(v + rng.uniform(-d, d) * span); };
    std::vector<cv::Point2f> src{{0, 0}, {static_cast<float>(w), 0}, {static_cast<float>(w), static_cast<float>(h)}, {0, static_cast<float>(h)}};
    std::vector<cv::Point2f> dst{{jitter(0, w), jitter(0, h)},
                                 {jitter(w, w), jitter(0, h)},
                                 {jitter(w, w), jitter(h, h)},
                                 {jitter(0, w), jitter(h, h)}};
    cv::Mat persp = cv::getPerspectiveTransform(src, dst);
    cv::Mat M = persp * rot3;

    cv::warpPerspective(img, img, M, img.size(), cv::INTER_LINEAR, cv::BORDER_REFLECT);
    if (lbl) cv::warpPerspective(*lbl, *lbl, M, lbl->size(), cv::INTER_NEAREST, cv::BORDER_REFLECT);

    // photometric, image only
    double bf = 1.0 + rng.uniform(-cfg.brightness_jitter, cfg.brightness_jitter);
    double cf = 1.0 + rng.uniform(-cfg.contrast_jitter, cfg.contrast_jitter);
    double sf = 1.0 + rng.uniform(-cfg.saturation_jitter, cfg.saturation_jitter);
    cv::Mat f;
    img.convertTo(f, CV_32FC3);
    cv::Scalar mean = cv::mean(f);
    double mg = (mean[0] + mean[1] + mean[2]) / 3.0;
    f = (f - mg) * cf + mg;  // contrast about the mean
    f *= bf;                 // brightness
    cv::Mat gray;
    cv::cvtColor(f, gray, cv::COLOR_BGR2GRAY);
    cv::Mat gray3;
    cv::cvtColor(gray, gray3, cv::COLOR_GRAY2BGR);
    f = gray3 + (f - gray3) * sf;  // saturation about per-pixel luminance
    if (cfg.gaussian_noise_sigma > 0.0) {
        double sigma = cfg.gaussian_noise_sigma * 255.0;
        for (int y = 0; y < f.rows; ++y)
            for (int x = 0; x < f.cols; ++x) {
                auto& px = f.at<cv::Vec3f>(y, x);
                for (int c = 0; c < 3; ++c) px[c] += static_cast<float>(rng.normal(0.0, sigma));
            }
    }
    f.convertTo(img, CV_8UC3);

    std::optional<MaskImage> out_mask;
    if (lbl) out_mask = detail::mask_from_label_mat(*lbl);
    return {img, out_mask};
}

inline cv::Mat resize_image(const cv::Mat& img, int target) {
    if (img.cols == target && img.rows == target) return img.clone();
    cv::Mat out;
    int interp = (target < img.cols || target < img.rows) ? cv::INTER_AREA : cv::INTER_LINEAR;
    cv::resize(img, out, cv::Size(target, target), 0, 0, interp);
    return out;
}

inline MaskImage resize_mask(const MaskImage& mask, int target) {
    if (mask.width == target && mask.height == target) return mask;
    cv::Mat lbl = detail::mask_to_label_mat(mask);
    cv::Mat out;
    cv::resize(lbl, out, cv::Size(target, target), 0, 0, cv::INTER_NEAREST);
    return detail::mask_from_label_mat(out);
}

// Default network input resolutions; miniature test configurations pass
// smaller multiples of the patch size.
inline cv::Mat resize_for_classifier(const cv::Mat& img, int target = 518) { return resize_image(img, target); }

inline std::pair<cv::Mat, MaskImage> resize_for_segmenter(const cv::Mat& img, const MaskImage& mask,
                                                          int target = 512) {
    return {resize_image(img, target), resize_mask(mask, target)};
}

}  // namespace filmseg
