#include <gtest/gtest.h>

#include <opencv2/imgcodecs.hpp>

#include "filmseg/common.hpp"
#include "filmseg/mask.hpp"
#include "testutil.hpp"

using namespace filmseg;

TEST(Mask, RoundTripIsLossless) {
    testutil::TempDir tmp("mask_rt");
    Rng rng(7);
    for (int trial = 0; trial < 5; ++trial) {
        int w = static_cast<int>(rng.uniform_int(1, 40));
        int h = static_cast<int>(rng.uniform_int(1, 40));
        MaskImage m(w, h);
        for (auto& v : m.labels) v = rng.bernoulli(0.5) ? 1 : 0;
        auto p = tmp.path() / ("m" + std::to_string(trial) + ".png");
        write_mask(m, p);
        EXPECT_EQ(read_mask(p), m);
    }
}

TEST(Mask, FileFormIsZeroOr255) {
    testutil::TempDir tmp("mask_ff");
    MaskImage m(1, 1);
    m.at(0, 0) = 1;
    auto p = tmp.path() / "one.png";
    write_mask(m, p);
    cv::Mat raw = cv::imread(p.string(), cv::IMREAD_GRAYSCALE);
    ASSERT_EQ(raw.rows, 1);
    ASSERT_EQ(raw.cols, 1);
    EXPECT_EQ(raw.at<uint8_t>(0, 0), 255);
}

TEST(Mask, RejectsIntermediateValues) {
    testutil::TempDir tmp("mask_bad");
    cv::Mat bad(2, 2, CV_8UC1, cv::Scalar(128));
    auto p = tmp.path() / "bad.png";
    ASSERT_TRUE(cv::imwrite(p.string(), bad));
    EXPECT_THROW(read_mask(p), std::runtime_error);
}

TEST(Mask, RejectsInvalidDimensionsAndLabels) {
    EXPECT_THROW(MaskImage(0, 4), std::invalid_argument);
    EXPECT_THROW(MaskImage(4, -1), std::invalid_argument);
    testutil::TempDir tmp("mask_lbl");
    MaskImage m(2, 2);
    m.labels[0] = 7;
    EXPECT_THROW(write_mask(m, tmp.path() / "x.png"), std::invalid_argument);
}
