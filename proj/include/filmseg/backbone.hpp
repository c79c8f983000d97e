#pragma once

#include <cmath>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <opencv2/core.hpp>

#include "filmseg/common.hpp"
#include "filmseg/nn/graph.hpp"
#include "filmseg/nn/serialize.hpp"

namespace filmseg {

// Splits a BGR 8-bit image into non-overlapping patch rows. The result is an
// N x (patch*patch*3) matrix, patches in row-major grid order, pixels within
// a patch in row-major order with interleaved channels, values mapped from
// [0, 255] to [-1, 1].
template <typename T>
nn::Mat<T> patchify(const cv::Mat& bgr, int patch) {
    if (bgr.empty() || bgr.type() != CV_8UC3) throw std::invalid_argument("patchify: expected 8-bit BGR image");
    if (patch <= 0 || bgr.rows % patch || bgr.cols % patch)
        throw std::invalid_argument("patchify: image dimensions must be divisible by patch size");
    const int gh = bgr.rows / patch, gw = bgr.cols / patch;
    nn::Mat<T> out(static_cast<Eigen::Index>(gh) * gw, static_cast<Eigen::Index>(patch) * patch * 3);
    for (int py = 0; py < gh; ++py)
        for (int px = 0; px < gw; ++px) {
            Eigen::Index row = static_cast<Eigen::Index>(py) * gw + px;
            Eigen::Index c = 0;
            for (int y = 0; y < patch; ++y) {
                const cv::Vec3b* line = bgr.ptr<cv::Vec3b>(py * patch + y);
                for (int x = 0; x < patch; ++x) {
                    const cv::Vec3b& v = line[px * patch + x];
                    out(row, c++) = T(v[0]) / T(127.5) - T(1);
                    out(row, c++) = T(v[1]) / T(127.5) - T(1);
                    out(row, c++) = T(v[2]) / T(127.5) - T(1);
                }
            }
        }
    return out;
}

struct ViTConfig {
    int image_size = 518;
    int patch = 14;
    int dim = 64;
    int depth = 2;
    int heads = 4;
    int mlp_ratio = 4;

    void validate() const {
        if (image_size <= 0 || patch <= 0 || image_size % patch)
            throw std::invalid_argument("image_size must be a positive multiple of patch");
        if (dim <= 0 || heads <= 0 || dim % heads) throw std::invalid_argument("dim must be divisible by heads");
        if (depth <= 0 || mlp_ratio <= 0) throw std::invalid_argument("depth and mlp_ratio must be positive");
    }

    int grid() const { return image_size / patch; }
    int n_patches() const { return grid() * grid(); }

    std::string digest_text() const {
        return "vit:" + std::to_string(image_size) + ":" + std::to_string(patch) + ":" + std::to_string(dim) +
               ":" + std::to_string(depth) + ":" + std::to_string(heads) + ":" + std::to_string(mlp_ratio);
    }
};

// Pre-norm transformer encoder over patch tokens with a learned class token.
template <typename T>
class ViT {
   public:
    struct Block {
        nn::Var<T> ln1_g, ln1_b, wq, bq, wk, bk, wv, bv, wo, bo;
        nn::Var<T> ln2_g, ln2_b, w1, b1, w2, b2;
    };

    struct Output {
        nn::Var<T> patch_states;  // N x dim, after final layer norm
        nn::Var<T> cls_state;     // 1 x dim
        nn::Var<T> centroid;      // 1 x dim, mean of patch states
    };

    ViT(ViTConfig cfg, uint64_t seed) : cfg_(cfg) {
        cfg_.validate();
        Rng rng(seed);
        auto mk = [&](int r, int c, T s) {
            nn::Mat<T> m(r, c);
            for (int i = 0; i < r; ++i)
                for (int j = 0; j < c; ++j) m(i, j) = T(rng.normal(0.0, double(s)));
            return nn::parameter<T>(std::move(m));
        };
        auto zeros = [&](int r, int c) { return nn::parameter<T>(nn::Mat<T>::Zero(r, c)); };
        auto ones = [&](int r, int c) { return nn::parameter<T>(nn::Mat<T>::Ones(r, c)); };

        const int d = cfg_.dim, n = cfg_.n_patches();
        const T init = T(0.02);
        embed_w_ = mk(cfg_.patch * cfg_.patch * 3, d, init);
        embed_b_ = zeros(1, d);
        cls_token_ = mk(1, d, init);
        pos_embed_ = mk(n + 1, d, init);
        const int hd = d * cfg_.mlp_ratio;
        for (int l = 0; l < cfg_.depth; ++l) {
            Block b;
            b.ln1_g = ones(1, d);
            b.ln1_b = zeros(1, d);
            b.wq = mk(d, d, init);
            b.bq = zeros(1, d);
            b.wk = mk(d, d, init);
            b.bk = zeros(1, d);
            b.wv = mk(d, d, init);
            b.bv = zeros(1, d);
            b.wo = mk(d, d, init);
            b.bo = zeros(1, d);
            b.ln2_g = ones(1, d);
            b.ln2_b = zeros(1, d);
            b.w1 = mk(d, hd, init);
            b.b1 = zeros(1, hd);
            b.w2 = mk(hd, d, init);
            b.b2 = zeros(1, d);
            blocks_.push_back(std::move(b));
        }
        final_ln_g_ = ones(1, d);
        final_ln_b_ = zeros(1, d);
    }

    const ViTConfig& config() const { return cfg_; }

    // patch_pixels: N x (patch*patch*3), as produced by patchify()
    Output forward(const nn::Mat<T>& patch_pixels) const {
        if (patch_pixels.rows() != cfg_.n_patches() ||
            patch_pixels.cols() != static_cast<Eigen::Index>(cfg_.patch) * cfg_.patch * 3)
            throw std::invalid_argument("forward: patch matrix shape mismatch");
        auto tokens = nn::add_rowvec(nn::matmul(nn::constant<T>(patch_pixels), embed_w_), embed_b_);
        auto x = nn::add(nn::concat_rows<T>({cls_token_, tokens}), pos_embed_);
        for (const auto& b : blocks_) {
            auto h = nn::layer_norm(x, b.ln1_g, b.ln1_b);
            x = nn::add(x, attention(h, b));
            auto m = nn::layer_norm(x, b.ln2_g, b.ln2_b);
            auto ff = nn::matmul(nn::gelu(nn::add_rowvec(nn::matmul(m, b.w1), b.b1)), b.w2);
            x = nn::add(x, nn::add_rowvec(ff, b.b2));
        }
        x = nn::layer_norm(x, final_ln_g_, final_ln_b_);
        Output out;
        out.cls_state = nn::slice_rows(x, 0, 1);
        out.patch_states = nn::slice_rows(x, 1, cfg_.n_patches());
        out.centroid = nn::mean_rows(out.patch_states);
        return out;
    }

    std::vector<nn::Var<T>> parameters() const {
        std::vector<nn::Var<T>> p{embed_w_, embed_b_, cls_token_, pos_embed_};
        for (const auto& b : blocks_)
            for (const auto& v : {b.ln1_g, b.ln1_b, b.wq, b.bq, b.wk, b.bk, b.wv, b.bv, b.wo, b.bo, b.ln2_g,
                                  b.ln2_b, b.w1, b.b1, b.w2, b.b2})
                p.push_back(v);
        p.push_back(final_ln_g_);
        p.push_back(final_ln_b_);
        return p;
    }

    void set_trainable(bool trainable) {
        for (auto& p : parameters()) p->requires_grad = trainable;
    }

    void save(const std::filesystem::path& path) const { nn::save_weights(parameters(), path); }
    void load(const std::filesystem::path& path) { nn::load_weights(parameters(), path); }

   private:
    nn::Var<T> attention(nn::Var<T> x, const Block& b) const {
        const int d = cfg_.dim, h = cfg_.heads, dh = d / h;
        auto q = nn::add_rowvec(nn::matmul(x, b.wq), b.bq);
        auto k = nn::add_rowvec(nn::matmul(x, b.wk), b.bk);
        auto v = nn::add_rowvec(nn::matmul(x, b.wv), b.bv);
        std::vector<nn::Var<T>> heads;
        const T inv_sqrt = T(1) / std::sqrt(T(dh));
        for (int i = 0; i < h; ++i) {
            auto qi = nn::slice_cols(q, i * dh, dh);
            auto ki = nn::slice_cols(k, i * dh, dh);
            auto vi = nn::slice_cols(v, i * dh, dh);
            auto att = nn::softmax_rows(nn::scale(nn::matmul(qi, nn::transpose(ki)), inv_sqrt));
            heads.push_back(nn::matmul(att, vi));
        }
        return nn::add_rowvec(nn::matmul(nn::concat_cols<T>(heads), b.wo), b.bo);
    }

    ViTConfig cfg_;
    nn::Var<T> embed_w_, embed_b_, cls_token_, pos_embed_;
    std::vector<Block> blocks_;
    nn::Var<T> final_ln_g_, final_ln_b_;
};

}  // namespace filmseg
