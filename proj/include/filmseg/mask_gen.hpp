#pragma once

#include <filesystem>
#include <functional>
#include <stdexcept>
#include <vector>

#include <opencv2/imgcodecs.hpp>

#include "filmseg/classifier.hpp"
#include "filmseg/corpus.hpp"
#include "filmseg/mask.hpp"

namespace filmseg {

// Expands per-patch labels to a pixel mask at patch resolution
// (grid*patch square): each patch contributes exactly patch*patch pixels.
inline MaskImage patch_label_mask(const std::vector<uint8_t>& patch_labels, int grid, int patch) {
    if (grid <= 0 || patch <= 0) throw std::invalid_argument("patch_label_mask: bad geometry");
    if (patch_labels.size() != static_cast<size_t>(grid) * grid)
        throw std::invalid_argument("patch_label_mask: label count must be grid*grid");
    for (uint8_t v : patch_labels)
        if (v > 1) throw std::invalid_argument("patch_label_mask: labels must be 0 or 1");
    MaskImage m(grid * patch, grid * patch);
    for (int py = 0; py < grid; ++py)
        for (int px = 0; px < grid; ++px) {
            uint8_t label = patch_labels[static_cast<size_t>(py) * grid + px];
            for (int y = 0; y < patch; ++y)
                for (int x = 0; x < patch; ++x) m.at(px * patch + x, py * patch + y) = label;
        }
    return m;
}

// Nearest-neighbor resample of a label mask to an arbitrary size.
inline MaskImage resample_mask_nearest(const MaskImage& src, int out_w, int out_h) {
    if (out_w <= 0 || out_h <= 0) throw std::invalid_argument("resample_mask_nearest: bad size");
    MaskImage out(out_w, out_h);
    for (int y = 0; y < out_h; ++y) {
        int sy = std::min(src.height - 1, static_cast<int>((static_cast<int64_t>(y) * src.height) / out_h));
        for (int x = 0; x < out_w; ++x) {
            int sx = std::min(src.width - 1, static_cast<int>((static_cast<int64_t>(x) * src.width) / out_w));
            out.at(x, y) = src.at(sx, sy);
        }
    }
    return out;
}

// Stage-2 proxy mask for one frame: per-patch predictions block-filled at
// patch resolution, then nearest-resampled to the frame size.
template <typename T>
MaskImage proxy_mask(const ProxyClassifier<T>& clf, const cv::Mat& frame_bgr) {
    const auto& cfg = clf.backbone().config();
    auto labels = clf.predict_patch_labels(frame_bgr);
    MaskImage coarse = patch_label_mask(labels, cfg.grid(), cfg.patch);
    return resample_mask_nearest(coarse, frame_bgr.cols, frame_bgr.rows);
}

// Writes proxy masks for every heterogeneous frame and records their paths in
// the manifest. Homogeneous frames are left untouched (their labels follow
// from the global class). Frames that already carry a proxy mask path with an
// existing file are skipped, so a rerun is a no-op.
template <typename T>
int attach_proxy_masks(CorpusManifest& manifest, const ProxyClassifier<T>& clf,
                       const std::filesystem::path& corpus_root,
                       const std::filesystem::path& proxy_dir_rel = "masks/proxy",
                       const std::function<bool(const std::string&)>& video_filter = {}) {
    int written = 0;
    for (auto& video : manifest.videos) {
        if (video_filter && !video_filter(video.video_id)) continue;
        for (auto& frame : video.frames) {
            if (frame.homogeneity == Homogeneity::homogeneous) continue;
            std::filesystem::path rel = proxy_dir_rel / (frame.frame_id + ".png");
            std::filesystem::path abs = corpus_root / rel;
            if (frame.proxy_mask_path && std::filesystem::exists(corpus_root / *frame.proxy_mask_path)) continue;
            cv::Mat img = cv::imread((corpus_root / frame.image_path).string(), cv::IMREAD_COLOR);
            if (img.empty())
                throw std::runtime_error("cannot read frame image " + (corpus_root / frame.image_path).string());
            write_mask(proxy_mask(clf, img), abs);
            frame.proxy_mask_path = rel.generic_string();
            ++written;
        }
    }
    return written;
}

}  // namespace filmseg
