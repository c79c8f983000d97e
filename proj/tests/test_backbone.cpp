#include <gtest/gtest.h>

#include <numeric>

#include "filmseg/backbone.hpp"
#include "testutil.hpp"

using namespace filmseg;
namespace nn = filmseg::nn;

namespace {

cv::Mat sequential_image(int size) {
    cv::Mat img(size, size, CV_8UC3);
    int v = 0;
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            img.at<cv::Vec3b>(y, x) = cv::Vec3b(v % 251, (v + 7) % 251, (v + 13) % 251);
            v++;
        }
    return img;
}

ViTConfig tiny_config(int image_size = 28) {
    ViTConfig c;
    c.image_size = image_size;
    c.patch = 14;
    c.dim = 8;
    c.depth = 1;
    c.heads = 2;
    c.mlp_ratio = 2;
    return c;
}

}  // namespace

TEST(Patchify, PartitionsEveryPixelExactlyOnce) {
    cv::Mat img = sequential_image(28);
    auto m = patchify<double>(img, 14);
    ASSERT_EQ(m.rows(), 4);
    ASSERT_EQ(m.cols(), 14 * 14 * 3);
    // invert the mapping and compare against the raw pixels
    cv::Mat rec(28, 28, CV_8UC3, cv::Scalar(0, 0, 0));
    for (int py = 0; py < 2; ++py)
        for (int px = 0; px < 2; ++px) {
            Eigen::Index row = py * 2 + px, c = 0;
            for (int y = 0; y < 14; ++y)
                for (int x = 0; x < 14; ++x) {
                    cv::Vec3b pix;
                    for (int ch = 0; ch < 3; ++ch)
                        pix[ch] = static_cast<uint8_t>(std::lround((m(row, c++) + 1.0) * 127.5));
                    rec.at<cv::Vec3b>(py * 14 + y, px * 14 + x) = pix;
                }
        }
    EXPECT_EQ(cv::norm(img, rec, cv::NORM_INF), 0.0);
}

TEST(Patchify, ValueRangeAndGridOrder) {
    cv::Mat img(14, 28, CV_8UC3, cv::Scalar(0, 0, 0));
    img.at<cv::Vec3b>(0, 14) = cv::Vec3b(255, 255, 255);  // first pixel of patch (0,1)
    auto m = patchify<double>(img, 14);
    ASSERT_EQ(m.rows(), 2);
    EXPECT_DOUBLE_EQ(m(0, 0), -1.0);
    EXPECT_DOUBLE_EQ(m(1, 0), 1.0);
    EXPECT_DOUBLE_EQ(m(1, 1), 1.0);
    EXPECT_DOUBLE_EQ(m(1, 2), 1.0);
    EXPECT_DOUBLE_EQ(m(1, 3), -1.0);
}

TEST(Patchify, RejectsBadInput) {
    EXPECT_THROW(patchify<float>(cv::Mat(), 14), std::invalid_argument);
    EXPECT_THROW(patchify<float>(cv::Mat(30, 30, CV_8UC3), 14), std::invalid_argument);
    EXPECT_THROW(patchify<float>(cv::Mat(28, 28, CV_8UC1), 14), std::invalid_argument);
}

TEST(Backbone, CentroidIsMeanOfPatchStates) {
    // the centroid operator itself: mean of (1,0), (0,1), (2,2) is (1,1)
    nn::Mat<double> states(3, 2);
    states << 1, 0, 0, 1, 2, 2;
    auto c = nn::mean_rows(nn::constant<double>(states));
    EXPECT_DOUBLE_EQ(c->value(0, 0), 1.0);
    EXPECT_DOUBLE_EQ(c->value(0, 1), 1.0);

    ViT<float> vit(tiny_config(), 3);
    auto out = vit.forward(patchify<float>(sequential_image(28), 14));
    nn::Mat<float> mean = out.patch_states->value.colwise().mean();
    EXPECT_TRUE(out.centroid->value.isApprox(mean, 1e-6f));
}

TEST(Backbone, CentroidIsPermutationInvariant) {
    ViT<float> vit(tiny_config(), 4);
    auto out = vit.forward(patchify<float>(sequential_image(28), 14));
    nn::Mat<float> shuffled = out.patch_states->value;
    std::vector<int> perm{3, 0, 2, 1};
    for (int i = 0; i < 4; ++i) shuffled.row(i) = out.patch_states->value.row(perm[i]);
    nn::Mat<float> mean = shuffled.colwise().mean();
    EXPECT_TRUE(out.centroid->value.isApprox(mean, 1e-5f));
}

TEST(Backbone, DeterministicForSeedAndSensitiveToIt) {
    auto cfg = tiny_config();
    cv::Mat img = sequential_image(28);
    ViT<float> a(cfg, 7), b(cfg, 7), c(cfg, 8);
    auto oa = a.forward(patchify<float>(img, 14));
    auto ob = b.forward(patchify<float>(img, 14));
    auto oc = c.forward(patchify<float>(img, 14));
    EXPECT_TRUE(oa.centroid->value.isApprox(ob.centroid->value));
    EXPECT_FALSE(oa.centroid->value.isApprox(oc.centroid->value));
}

TEST(Backbone, SaveLoadRoundTrip) {
    testutil::TempDir tmp("backbone");
    auto cfg = tiny_config();
    cv::Mat img = sequential_image(28);
    ViT<float> a(cfg, 11), b(cfg, 12);
    auto path = tmp.path() / "vit.bin";
    a.save(path);
    b.load(path);
    auto oa = a.forward(patchify<float>(img, 14));
    auto ob = b.forward(patchify<float>(img, 14));
    EXPECT_TRUE(oa.patch_states->value.isApprox(ob.patch_states->value));

    ViT<float> wrong(tiny_config(42), 1);
    EXPECT_THROW(wrong.load(path), std::runtime_error);
}

TEST(Backbone, GradientsReachAllParameters) {
    ViT<double> vit(tiny_config(), 13);
    auto out = vit.forward(patchify<double>(sequential_image(28), 14));
    auto one = nn::constant<double>(nn::Mat<double>::Ones(vit.config().dim, 1));
    auto loss = nn::matmul(out.centroid, one);
    nn::backward(loss);
    for (const auto& p : vit.parameters()) {
        ASSERT_GT(p->grad.size(), 0);
        EXPECT_TRUE(p->grad.allFinite());
    }
}

TEST(Backbone, FiniteDifferenceSpotCheck) {
    // double-precision central differences on a handful of parameter entries
    ViT<double> vit(tiny_config(), 17);
    auto pixels = patchify<double>(sequential_image(28), 14);
    auto eval = [&] {
        auto out = vit.forward(pixels);
        auto one = nn::constant<double>(nn::Mat<double>::Ones(vit.config().dim, 1));
        return nn::matmul(out.centroid, one);
    };
    auto loss = eval();
    nn::backward(loss);
    auto params = vit.parameters();
    Rng rng(99);
    const double h = 1e-5;
    for (int trial = 0; trial < 12; ++trial) {
        auto& p = params[rng.uniform_int(0, params.size() - 1)];
        Eigen::Index i = static_cast<Eigen::Index>(rng.uniform_int(0, p->value.size() - 1));
        double orig = p->value.data()[i];
        p->value.data()[i] = orig + h;
        double up = eval()->value(0, 0);
        p->value.data()[i] = orig - h;
        double dn = eval()->value(0, 0);
        p->value.data()[i] = orig;
        double fd = (up - dn) / (2 * h);
        double an = p->grad.data()[i];
        // absolute floor sits above central-difference cancellation noise
        double denom = std::max({std::abs(fd), std::abs(an), 1e-5});
        EXPECT_LT(std::abs(fd - an) / denom, 1e-4) << "fd=" << fd << " analytic=" << an;
    }
}

TEST(Backbone, ConfigValidation) {
    ViTConfig c = tiny_config();
    c.image_size = 30;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = tiny_config();
    c.dim = 9;  // not divisible by heads
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = tiny_config();
    c.depth = 0;
    EXPECT_THROW(c.validate(), std::invalid_argument);
}
