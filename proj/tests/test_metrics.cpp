#include <gtest/gtest.h>

#include "filmseg/common.hpp"
#include "filmseg/metrics.hpp"

using namespace filmseg;

namespace {

// Brute-force confusion-matrix oracle, independent of the implementation.
struct Confusion {
    size_t tp = 0, fp = 0, fn = 0, tn = 0;
};

Confusion count_confusion(const std::vector<int>& pred, const std::vector<int>& truth, int cls) {
    Confusion c;
    for (size_t i = 0; i < pred.size(); ++i) {
        bool p = pred[i] == cls, t = truth[i] == cls;
        if (p && t) ++c.tp;
        else if (p) ++c.fp;
        else if (t) ++c.fn;
        else ++c.tn;
    }
    return c;
}

double oracle_macro_f1(const std::vector<int>& pred, const std::vector<int>& truth) {
    double sum = 0;
    for (int cls = 0; cls < 2; ++cls) {
        auto c = count_confusion(pred, truth, cls);
        double denom = 2.0 * c.tp + c.fp + c.fn;
        sum += denom == 0 ? 1.0 : 2.0 * c.tp / denom;
    }
    return sum / 2;
}

double oracle_iou(const MaskImage& a, const MaskImage& b, int cls) {
    size_t inter = 0, uni = 0;
    for (int y = 0; y < a.height; ++y)
        for (int x = 0; x < a.width; ++x) {
            bool pa = a.at(x, y) == cls, pb = b.at(x, y) == cls;
            if (pa && pb) ++inter;
            if (pa || pb) ++uni;
        }
    return uni == 0 ? 1.0 : static_cast<double>(inter) / uni;
}

MaskImage mask_from_bits(unsigned bits) {
    MaskImage m(3, 3);
    for (int i = 0; i < 9; ++i) m.labels[i] = (bits >> i) & 1;
    return m;
}

}  // namespace

TEST(Metrics, IouHandExample2x2) {
    MaskImage pred(2, 2), gt(2, 2);
    pred.labels = {1, 1, 0, 0};
    gt.labels = {1, 0, 0, 0};
    EXPECT_DOUBLE_EQ(iou(pred, gt, ContentClass::P), 0.5);
    EXPECT_DOUBLE_EQ(iou(pred, gt, ContentClass::NP), 2.0 / 3.0);
    EXPECT_DOUBLE_EQ(mean_iou(pred, gt), 7.0 / 12.0);
}

TEST(Metrics, IouIdenticalAndDisjoint) {
    MaskImage a(4, 4, 1), b(4, 4, 1);
    EXPECT_DOUBLE_EQ(iou(a, b, ContentClass::P), 1.0);
    EXPECT_DOUBLE_EQ(iou(a, b, ContentClass::NP), 1.0);  // empty union convention

    MaskImage left(4, 4, 0), right(4, 4, 0);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 2; ++x) {
            left.at(x, y) = 1;
            right.at(x + 2, y) = 1;
        }
    EXPECT_DOUBLE_EQ(iou(left, right, ContentClass::P), 0.0);
}

TEST(Metrics, IouMatchesOracleOnAll3x3Pairs) {
    // exhaustive over all 2^9 x 2^9 pairs
    for (unsigned a = 0; a < 512; ++a) {
        MaskImage ma = mask_from_bits(a);
        for (unsigned b = 0; b < 512; ++b) {
            MaskImage mb = mask_from_bits(b);
            ASSERT_DOUBLE_EQ(iou(ma, mb, ContentClass::P), oracle_iou(ma, mb, 1));
            ASSERT_DOUBLE_EQ(iou(ma, mb, ContentClass::NP), oracle_iou(ma, mb, 0));
            // symmetry
            ASSERT_DOUBLE_EQ(iou(ma, mb, ContentClass::P), iou(mb, ma, ContentClass::P));
        }
    }
}

TEST(Metrics, IouRejectsDimensionMismatch) {
    MaskImage a(2, 2), b(3, 2);
    EXPECT_THROW(iou(a, b, ContentClass::P), std::invalid_argument);
}

TEST(Metrics, AccuracyAndF1Basics) {
    std::vector<int> t{0, 1, 0, 1};
    EXPECT_DOUBLE_EQ(accuracy(t, t), 1.0);
    EXPECT_DOUBLE_EQ(macro_f1(t, t), 1.0);

    // degenerate one-class predictor on a balanced set
    std::vector<int> all_p{1, 1, 1, 1};
    EXPECT_DOUBLE_EQ(accuracy(all_p, t), 0.5);
    EXPECT_DOUBLE_EQ(macro_f1(all_p, t), 1.0 / 3.0);
}

TEST(Metrics, AccuracyF1MatchOracleOnRandomVectors) {
    Rng rng(17);
    for (int trial = 0; trial < 100; ++trial) {
        size_t n = static_cast<size_t>(rng.uniform_int(1, 100));
        std::vector<int> pred(n), truth(n);
        for (size_t i = 0; i < n; ++i) {
            pred[i] = rng.bernoulli(0.5);
            truth[i] = rng.bernoulli(0.5);
        }
        size_t ok = 0;
        for (size_t i = 0; i < n; ++i) ok += pred[i] == truth[i];
        ASSERT_DOUBLE_EQ(accuracy(pred, truth), static_cast<double>(ok) / n);
        ASSERT_DOUBLE_EQ(macro_f1(pred, truth), oracle_macro_f1(pred, truth));
    }
}

TEST(Metrics, ReportMeanIouConsistency) {
    MetricsReport r;
    r.iou_np = 0.25;
    r.iou_p = 0.75;
    EXPECT_DOUBLE_EQ(r.miou(), 0.5);
    json j = to_json(r);
    EXPECT_DOUBLE_EQ(j["mean_iou"].get<double>(), 0.5);
}
