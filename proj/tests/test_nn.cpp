#include <gtest/gtest.h>

#include "filmseg/common.hpp"
#include "filmseg/nn/graph.hpp"
#include "filmseg/nn/optim.hpp"
#include "filmseg/nn/serialize.hpp"
#include "testutil.hpp"

using namespace filmseg;
namespace nn = filmseg::nn;

namespace {

using MatD = nn::Mat<double>;

MatD random_mat(Rng& rng, int r, int c, double s = 1.0) {
    MatD m(r, c);
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) m(i, j) = rng.normal(0.0, s);
    return m;
}

// Central finite differences of a scalar graph output with respect to every
// given parameter, compared against the analytic gradients from backward().
void check_gradients(const std::vector<nn::Var<double>>& params,
                     const std::function<nn::Var<double>()>& build, double tol = 1e-6,
                     double h = 1e-5) {
    auto loss = build();
    nn::zero_grad(params);
    nn::backward(loss);
    for (const auto& p : params) {
        ASSERT_GT(p->grad.size(), 0) << "parameter received no gradient";
        for (Eigen::Index i = 0; i < p->value.size(); ++i) {
            double orig = p->value.data()[i];
            p->value.data()[i] = orig + h;
            double up = build()->value(0, 0);
            p->value.data()[i] = orig - h;
            double dn = build()->value(0, 0);
            p->value.data()[i] = orig;
            double fd = (up - dn) / (2 * h);
            double an = p->grad.data()[i];
            double denom = std::max({std::abs(fd), std::abs(an), 1e-8});
            EXPECT_LT(std::abs(fd - an) / denom, tol) << "fd=" << fd << " analytic=" << an;
        }
    }
}

// Collapse any matrix output to a scalar through fixed random coefficients so
// every op can reuse the scalar-loss gradient checker.
nn::Var<double> collapse(nn::Var<double> x, const MatD& coeff) {
    auto c = nn::constant<double>(coeff);
    auto prod = nn::cmul(x, c);
    auto col = nn::mean_rows(prod);                            // 1 x C
    auto one = nn::constant<double>(MatD::Ones(coeff.cols(), 1));
    return nn::matmul(col, one);                               // 1 x 1
}

}  // namespace

TEST(NnGraph, MatmulForward) {
    MatD a(2, 3), b(3, 2);
    a << 1, 2, 3, 4, 5, 6;
    b << 7, 8, 9, 10, 11, 12;
    auto v = nn::matmul(nn::constant<double>(a), nn::constant<double>(b));
    MatD want(2, 2);
    want << 58, 64, 139, 154;
    EXPECT_TRUE(v->value.isApprox(want));
}

TEST(NnGraph, GradMatmulAddBias) {
    Rng rng(1);
    auto a = nn::parameter<double>(random_mat(rng, 4, 3));
    auto w = nn::parameter<double>(random_mat(rng, 3, 5));
    auto b = nn::parameter<double>(random_mat(rng, 1, 5));
    MatD coeff = random_mat(rng, 4, 5);
    check_gradients({a, w, b}, [&] { return collapse(nn::add_rowvec(nn::matmul(a, w), b), coeff); });
}

TEST(NnGraph, GradEltwiseOps) {
    Rng rng(2);
    auto a = nn::parameter<double>(random_mat(rng, 3, 4));
    auto b = nn::parameter<double>(random_mat(rng, 3, 4));
    MatD coeff = random_mat(rng, 3, 4);
    check_gradients({a, b}, [&] { return collapse(nn::add(a, b), coeff); });
    check_gradients({a, b}, [&] { return collapse(nn::cmul(a, b), coeff); });
    check_gradients({a}, [&] { return collapse(nn::scale(a, 2.5), coeff); });
    check_gradients({a}, [&] { return collapse(nn::gelu(a), coeff); });
    // keep relu inputs away from the kink
    for (Eigen::Index i = 0; i < a->value.size(); ++i)
        if (std::abs(a->value.data()[i]) < 0.05) a->value.data()[i] = 0.1;
    check_gradients({a}, [&] { return collapse(nn::relu(a), coeff); });
}

TEST(NnGraph, GradSoftmaxLayerNorm) {
    Rng rng(3);
    auto a = nn::parameter<double>(random_mat(rng, 3, 5));
    auto g = nn::parameter<double>(random_mat(rng, 1, 5));
    auto be = nn::parameter<double>(random_mat(rng, 1, 5));
    MatD coeff = random_mat(rng, 3, 5);
    check_gradients({a}, [&] { return collapse(nn::softmax_rows(a), coeff); });
    check_gradients({a, g, be}, [&] { return collapse(nn::layer_norm(a, g, be), coeff); });
}

TEST(NnGraph, GradShapeOps) {
    Rng rng(4);
    auto a = nn::parameter<double>(random_mat(rng, 4, 6));
    auto b = nn::parameter<double>(random_mat(rng, 4, 2));
    MatD c64 = random_mat(rng, 6, 4);
    MatD c23 = random_mat(rng, 2, 3);
    MatD c16 = random_mat(rng, 1, 6);
    MatD c48 = random_mat(rng, 4, 8);
    check_gradients({a}, [&] { return collapse(nn::transpose(a), c64); });
    check_gradients({a}, [&] { return collapse(nn::slice_cols(a, 1, 3), MatD(c23.replicate(2, 1))); });
    check_gradients({a}, [&] { return collapse(nn::slice_rows(a, 1, 2), MatD(c23.replicate(1, 2))); });
    check_gradients({a}, [&] { return collapse(nn::mean_rows(a), c16); });
    check_gradients({a, b}, [&] { return collapse(nn::concat_cols<double>({a, b}), c48); });
    MatD c84 = c48.transpose();
    check_gradients({a, b}, [&] {
        return collapse(nn::concat_rows<double>({nn::transpose(a), nn::transpose(b)}), c84);
    });
}

TEST(NnGraph, CrossEntropyUniformLogitsIsLogC) {
    auto logits = nn::constant<double>(MatD::Zero(5, 2));
    auto loss = nn::cross_entropy_logits(logits, {0, 1, 0, 1, 1});
    EXPECT_NEAR(loss->value(0, 0), std::log(2.0), 1e-12);
}

TEST(NnGraph, GradCrossEntropy) {
    Rng rng(5);
    auto logits = nn::parameter<double>(random_mat(rng, 6, 3));
    std::vector<int> labels{0, 2, 1, 1, 0, 2};
    check_gradients({logits}, [&] { return nn::cross_entropy_logits(logits, labels); });
}

TEST(NnGraph, GradConv2d) {
    Rng rng(6);
    int H = 5, W = 4, Cin = 2, Cout = 3, k = 3;
    auto x = nn::parameter<double>(random_mat(rng, H * W, Cin));
    auto w = nn::parameter<double>(random_mat(rng, k * k * Cin, Cout, 0.4));
    auto b = nn::parameter<double>(random_mat(rng, 1, Cout));
    {
        // stride 1, pad 1: output grid same size
        MatD coeff = random_mat(rng, H * W, Cout);
        check_gradients({x, w, b}, [&] { return collapse(nn::conv2d(x, H, W, w, b, k, 1, 1), coeff); });
    }
    {
        // stride 2, pad 1: 3x2 output
        MatD coeff = random_mat(rng, 3 * 2, Cout);
        check_gradients({x, w, b}, [&] { return collapse(nn::conv2d(x, H, W, w, b, k, 2, 1), coeff); });
    }
}

TEST(NnGraph, Conv2dIdentityKernel) {
    // 1x1 kernel with identity weight reproduces the input plus bias
    Rng rng(7);
    MatD xv = random_mat(rng, 12, 2);
    auto x = nn::constant<double>(xv);
    MatD wv = MatD::Identity(2, 2);
    auto w = nn::constant<double>(wv);
    auto b = nn::constant<double>(MatD::Zero(1, 2));
    auto y = nn::conv2d(x, 3, 4, w, b, 1, 1, 0);
    EXPECT_TRUE(y->value.isApprox(xv));
}

TEST(NnGraph, GradBilinearAndPool) {
    Rng rng(8);
    int H = 4, W = 4, C = 3;
    auto x = nn::parameter<double>(random_mat(rng, H * W, C));
    MatD c_up = random_mat(rng, 8 * 8, C);
    MatD c_dn = random_mat(rng, 2 * 2, C);
    check_gradients({x}, [&] { return collapse(nn::bilinear_resize(x, H, W, 8, 8), c_up); });
    check_gradients({x}, [&] { return collapse(nn::avg_pool(x, H, W, 2), c_dn); });
}

TEST(NnGraph, BilinearConstantFieldIsPreserved) {
    MatD xv = MatD::Constant(6 * 6, 2, 3.25);
    auto y = nn::bilinear_resize(nn::constant<double>(xv), 6, 6, 13, 13);
    EXPECT_TRUE((y->value.array() - 3.25).abs().maxCoeff() < 1e-12);
}

TEST(NnGraph, AvgPoolExactBlocks) {
    MatD xv(4, 1);
    xv << 1, 2, 3, 4;  // 2x2 grid
    auto y = nn::avg_pool(nn::constant<double>(xv), 2, 2, 2);
    ASSERT_EQ(y->value.rows(), 1);
    EXPECT_DOUBLE_EQ(y->value(0, 0), 2.5);
    EXPECT_THROW(nn::avg_pool(nn::constant<double>(xv), 2, 2, 3), std::invalid_argument);
}

TEST(NnOptim, AdamMinimizesQuadratic) {
    auto p = nn::parameter<double>(MatD::Constant(1, 1, 5.0));
    nn::Adam<double>::Config cfg;
    cfg.lr = 0.1;
    nn::Adam<double> opt({p}, cfg);
    for (int i = 0; i < 400; ++i) {
        opt.zero_grad();
        auto loss = nn::cmul(p, p);
        nn::backward(loss);
        opt.step();
    }
    EXPECT_NEAR(p->value(0, 0), 0.0, 1e-3);
}

TEST(NnOptim, WeightDecayShrinksParameters) {
    // zero gradient signal: decoupled decay must still shrink the weight
    auto p = nn::parameter<double>(MatD::Constant(1, 1, 1.0));
    p->ensure_grad();
    nn::Adam<double>::Config cfg;
    cfg.lr = 0.1;
    cfg.weight_decay = 0.5;
    nn::Adam<double> opt({p}, cfg);
    opt.step();
    EXPECT_NEAR(p->value(0, 0), 0.95, 1e-9);
}

TEST(NnOptim, SchedulersBehave) {
    auto p = nn::parameter<double>(MatD::Zero(1, 1));
    nn::Adam<double>::Config cfg;
    cfg.lr = 1.0;
    nn::Adam<double> opt({p}, cfg);
    nn::ReduceOnPlateau<double> sched(2, 0.5);
    EXPECT_FALSE(sched.observe(0.5, opt));  // new best
    EXPECT_FALSE(sched.observe(0.5, opt));  // stale 1
    EXPECT_TRUE(sched.observe(0.5, opt));   // stale 2 -> reduce
    EXPECT_DOUBLE_EQ(opt.lr(), 0.5);

    nn::EarlyStopper<double> stop(2);
    EXPECT_TRUE(stop.observe(0.5));
    EXPECT_FALSE(stop.observe(0.4));
    EXPECT_FALSE(stop.should_stop());
    EXPECT_FALSE(stop.observe(0.4));
    EXPECT_TRUE(stop.should_stop());
    EXPECT_DOUBLE_EQ(stop.best(), 0.5);
}

TEST(NnSerialize, RoundTrip) {
    testutil::TempDir tmp("nn");
    Rng rng(9);
    std::vector<nn::Var<float>> params{nn::parameter<float>(random_mat(rng, 3, 4).cast<float>()),
                                       nn::parameter<float>(random_mat(rng, 1, 7).cast<float>())};
    auto path = tmp.path() / "w.bin";
    nn::save_weights(params, path);

    std::vector<nn::Var<float>> loaded{nn::parameter<float>(nn::Mat<float>::Zero(3, 4)),
                                       nn::parameter<float>(nn::Mat<float>::Zero(1, 7))};
    nn::load_weights(loaded, path);
    for (size_t i = 0; i < params.size(); ++i) EXPECT_TRUE(loaded[i]->value.isApprox(params[i]->value));

    std::vector<nn::Var<float>> bad{nn::parameter<float>(nn::Mat<float>::Zero(3, 4))};
    EXPECT_THROW(nn::load_weights(bad, path), std::runtime_error);
    std::vector<nn::Var<float>> bad_shape{nn::parameter<float>(nn::Mat<float>::Zero(4, 3)),
                                          nn::parameter<float>(nn::Mat<float>::Zero(1, 7))};
    EXPECT_THROW(nn::load_weights(bad_shape, path), std::runtime_error);
}
