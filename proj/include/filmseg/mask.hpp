#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

namespace filmseg {

// Per-pixel P/NP label map. In memory the labels are {0 = NP, 1 = P};
// on disk a mask is a single-channel 8-bit image with values {0, 255}.
struct MaskImage {
    int width = 0;
    int height = 0;
    std::vector<uint8_t> labels;  // row-major, height*width entries

    MaskImage() = default;
    MaskImage(int w, int h, uint8_t fill = 0) : width(w), height(h) {
        if (w <= 0 || h <= 0) throw std::invalid_argument("mask dimensions must be positive");
        if (fill > 1) throw std::invalid_argument("mask labels must be 0 or 1");
        labels.assign(static_cast<size_t>(w) * h, fill);
    }

    uint8_t& at(int x, int y) { return labels[static_cast<size_t>(y) * width + x]; }
    uint8_t at(int x, int y) const { return labels[static_cast<size_t>(y) * width + x]; }

    size_t count(uint8_t label) const {
        size_t n = 0;
        for (uint8_t v : labels) n += (v == label);
        return n;
    }

    bool operator==(const MaskImage& o) const {
        return width == o.width && height == o.height && labels == o.labels;
    }
};

inline cv::Mat mask_to_file_form(const MaskImage& mask) {
    cv::Mat m(mask.height, mask.width, CV_8UC1);
    for (int y = 0; y < mask.height; ++y)
        for (int x = 0; x < mask.width; ++x)
            m.at<uint8_t>(y, x) = mask.at(x, y) ? 255 : 0;
    return m;
}

inline void write_mask(const MaskImage& mask, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    for (uint8_t v : mask.labels)
        if (v > 1) throw std::invalid_argument("mask labels must be 0 or 1");
    if (!cv::imwrite(path.string(), mask_to_file_form(mask)))
        throw std::runtime_error("cannot write mask " + path.string());
}

inline MaskImage read_mask(const std::filesystem::path& path) {
    cv::Mat m = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
    if (m.empty()) throw std::runtime_error("cannot read mask " + path.string());
    MaskImage mask(m.cols, m.rows);
    for (int y = 0; y < m.rows; ++y)
        for (int x = 0; x < m.cols; ++x) {
            uint8_t v = m.at<uint8_t>(y, x);
            if (v == 0)
                mask.at(x, y) = 0;
            else if (v == 255)
                mask.at(x, y) = 1;
            else
                throw std::runtime_error("invalid mask value " + std::to_string(v) + " in " + path.string());
        }
    return mask;
}

}  // namespace filmseg
