#include <gtest/gtest.h>

#include "filmseg/mask_gen.hpp"
#include "filmseg/synth.hpp"
#include "testutil.hpp"

using namespace filmseg;

namespace {

ViTConfig tiny_config(int image_size = 28) {
    ViTConfig c;
    c.image_size = image_size;
    c.patch = 14;
    c.dim = 16;
    c.depth = 1;
    c.heads = 2;
    c.mlp_ratio = 2;
    return c;
}

}  // namespace

TEST(MaskGen, CheckerboardBlockFill) {
    // 2x2 patch grid, p = 14: each patch fills a 14x14 block of the 28x28 mask
    MaskImage m = patch_label_mask({0, 1, 1, 0}, 2, 14);
    ASSERT_EQ(m.width, 28);
    ASSERT_EQ(m.height, 28);
    EXPECT_EQ(m.count(0), 2u * 14 * 14);
    EXPECT_EQ(m.count(1), 2u * 14 * 14);
    EXPECT_EQ(m.at(0, 0), 0);
    EXPECT_EQ(m.at(13, 13), 0);
    EXPECT_EQ(m.at(14, 0), 1);
    EXPECT_EQ(m.at(0, 14), 1);
    EXPECT_EQ(m.at(27, 27), 0);
}

TEST(MaskGen, EachNpPatchContributesPatchSquaredPixels) {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        int grid = static_cast<int>(rng.uniform_int(1, 5));
        int patch = static_cast<int>(rng.uniform_int(2, 14));
        std::vector<uint8_t> labels(static_cast<size_t>(grid) * grid);
        size_t k = 0;
        for (auto& l : labels) {
            l = static_cast<uint8_t>(rng.uniform_int(0, 1));
            k += (l == 0);
        }
        MaskImage m = patch_label_mask(labels, grid, patch);
        EXPECT_EQ(m.count(0), k * patch * patch);
    }
}

TEST(MaskGen, ResampleIdentityAndProportions) {
    MaskImage m = patch_label_mask({0, 1, 1, 0}, 2, 14);
    MaskImage same = resample_mask_nearest(m, 28, 28);
    EXPECT_EQ(same, m);

    // integer upscale keeps the exact class proportion
    MaskImage up = resample_mask_nearest(m, 56, 56);
    EXPECT_EQ(up.count(0), 2u * 28 * 28);

    // non-square target
    MaskImage wide = resample_mask_nearest(m, 57, 31);
    EXPECT_EQ(wide.width, 57);
    EXPECT_EQ(wide.height, 31);
}

TEST(MaskGen, ResampleIsMonotoneInNpPatches) {
    // flipping one patch P -> NP can only grow the NP pixel count
    Rng rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<uint8_t> labels(9, 1);
        for (auto& l : labels) l = static_cast<uint8_t>(rng.uniform_int(0, 1));
        int out_w = static_cast<int>(rng.uniform_int(20, 90));
        int out_h = static_cast<int>(rng.uniform_int(20, 90));
        auto count_np = [&](const std::vector<uint8_t>& ls) {
            return resample_mask_nearest(patch_label_mask(ls, 3, 7), out_w, out_h).count(0);
        };
        size_t base = count_np(labels);
        for (size_t i = 0; i < labels.size(); ++i) {
            if (labels[i] == 0) continue;
            auto flipped = labels;
            flipped[i] = 0;
            EXPECT_GE(count_np(flipped), base);
        }
    }
}

TEST(MaskGen, RejectsBadInputs) {
    EXPECT_THROW(patch_label_mask({0, 1}, 2, 14), std::invalid_argument);
    EXPECT_THROW(patch_label_mask({0, 2, 0, 1}, 2, 14), std::invalid_argument);
    EXPECT_THROW(patch_label_mask({0}, 1, 0), std::invalid_argument);
    MaskImage m(4, 4);
    EXPECT_THROW(resample_mask_nearest(m, 0, 4), std::invalid_argument);
}

TEST(MaskGen, ProxyMaskMatchesFrameGeometryAndIsDeterministic) {
    ProxyClassifier<float> clf(tiny_config(), HeadMode::centroid, 9);
    cv::Mat frame(50, 70, CV_8UC3);
    Rng rng(1);
    for (int y = 0; y < frame.rows; ++y)
        for (int x = 0; x < frame.cols; ++x) {
            auto v = static_cast<uint8_t>(rng.uniform_int(0, 255));
            frame.at<cv::Vec3b>(y, x) = cv::Vec3b(v, v, v);
        }
    MaskImage a = proxy_mask(clf, frame);
    MaskImage b = proxy_mask(clf, frame);
    EXPECT_EQ(a.width, 70);
    EXPECT_EQ(a.height, 50);
    EXPECT_EQ(a, b);
}

TEST(MaskGen, AttachWritesHeterogeneousOnlyAndIsIdempotent) {
    testutil::TempDir tmp("maskgen");
    auto pool = tmp.path() / "pool";
    make_photo_pool(pool, 3, 96, 4);
    SynthesisSpec spec;
    spec.n_homogeneous_p = 4;
    spec.n_homogeneous_np = 4;
    spec.n_heterogeneous = 5;
    spec.n_videos = 3;
    spec.image_size = 56;
    auto root = tmp.path() / "corpus";
    CorpusManifest m = synthesize_corpus(spec, pool, root, 17);

    ProxyClassifier<float> clf(tiny_config(56), HeadMode::centroid, 13);
    int written = attach_proxy_masks(m, clf, root);
    EXPECT_EQ(written, 5);
    for (const auto* f : m.all_frames()) {
        if (f->is_homogeneous()) {
            EXPECT_FALSE(f->proxy_mask_path.has_value());
            continue;
        }
        ASSERT_TRUE(f->proxy_mask_path.has_value());
        MaskImage pm = read_mask(root / *f->proxy_mask_path);
        EXPECT_EQ(pm.width, 56);
        EXPECT_EQ(pm.height, 56);
    }
    m.validate();

    // second run rewrites nothing
    std::map<std::string, uint64_t> digests;
    for (const auto* f : m.all_frames())
        if (f->proxy_mask_path) digests[f->frame_id] = file_digest(root / *f->proxy_mask_path);
    EXPECT_EQ(attach_proxy_masks(m, clf, root), 0);
    for (const auto* f : m.all_frames())
        if (f->proxy_mask_path) EXPECT_EQ(file_digest(root / *f->proxy_mask_path), digests[f->frame_id]);
}
