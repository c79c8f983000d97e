#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <stdexcept>
#include <unordered_set>
#include <vector>

#include <Eigen/Dense>

namespace filmseg::nn {

// Define-by-run reverse-mode autodiff over dense matrices. Templated on the
// scalar so training runs in float while gradient checks run in double.
template <typename T>
struct Node {
    using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;

    Mat value;
    Mat grad;  // lazily allocated, same shape as value
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backprop;  // pulls from this->grad into parents

    void ensure_grad() {
        if (grad.rows() != value.rows() || grad.cols() != value.cols())
            grad = Mat::Zero(value.rows(), value.cols());
    }
};

template <typename T>
using Var = std::shared_ptr<Node<T>>;

template <typename T>
using Mat = typename Node<T>::Mat;

template <typename T>
Var<T> constant(Mat<T> m) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(m);
    n->requires_grad = false;
    return n;
}

template <typename T>
Var<T> parameter(Mat<T> m) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(m);
    n->requires_grad = true;
    return n;
}

namespace detail {

template <typename T>
Var<T> make_op(Mat<T> value, std::vector<Var<T>> parents, std::function<void(Node<T>&)> backprop) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    n->parents = std::move(parents);
    for (const auto& p : n->parents) n->requires_grad |= p->requires_grad;
    if (n->requires_grad) n->backprop = std::move(backprop);
    return n;
}

template <typename T>
void accum(Var<T>& p, const Mat<T>& g) {
    if (!p->requires_grad) return;
    p->ensure_grad();
    p->grad += g;
}

}  // namespace detail

// Runs backpropagation from a scalar (1x1) node.
template <typename T>
void backward(const Var<T>& loss) {
    if (loss->value.rows() != 1 || loss->value.cols() != 1)
        throw std::invalid_argument("backward: loss must be scalar");
    // iterative DFS post-order over the parent DAG
    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> seen;
    std::vector<std::pair<Node<T>*, size_t>> stack{{loss.get(), 0}};
    seen.insert(loss.get());
    while (!stack.empty()) {
        auto& [n, idx] = stack.back();
        if (idx < n->parents.size()) {
            Node<T>* p = n->parents[idx++].get();
            if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }
    loss->ensure_grad();
    loss->grad(0, 0) = T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node<T>* n = *it;
        if (n->backprop && n->grad.size() > 0) n->backprop(*n);
    }
}

template <typename T>
void zero_grad(const std::vector<Var<T>>& params) {
    for (const auto& p : params)
        if (p->grad.size() > 0) p->grad.setZero();
}

// ---- elementwise and linear-algebra ops ----

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
    Mat<T> v = a->value * b->value;
    return detail::make_op<T>(std::move(v), {a, b}, [a, b](Node<T>& n) mutable {
        detail::accum(a, Mat<T>(n.grad * b->value.transpose()));
        detail::accum(b, Mat<T>(a->value.transpose() * n.grad));
    });
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
    if (a->value.rows() != b->value.rows() || a->value.cols() != b->value.cols())
        throw std::invalid_argument("add: shape mismatch");
    return detail::make_op<T>(a->value + b->value, {a, b}, [a, b](Node<T>& n) mutable {
        detail::accum(a, n.grad);
        detail::accum(b, n.grad);
    });
}

// adds a 1 x cols row vector to every row
template <typename T>
Var<T> add_rowvec(Var<T> a, Var<T> bias) {
    if (bias->value.rows() != 1 || bias->value.cols() != a->value.cols())
        throw std::invalid_argument("add_rowvec: bias must be 1 x cols");
    Mat<T> v = a->value.rowwise() + bias->value.row(0);
    return detail::make_op<T>(std::move(v), {a, bias}, [a, bias](Node<T>& n) mutable {
        detail::accum(a, n.grad);
        detail::accum(bias, Mat<T>(n.grad.colwise().sum()));
    });
}

template <typename T>
Var<T> scale(Var<T> a, T s) {
    return detail::make_op<T>(a->value * s, {a}, [a, s](Node<T>& n) mutable {
        detail::accum(a, Mat<T>(n.grad * s));
    });
}

template <typename T>
Var<T> cmul(Var<T> a, Var<T> b) {
    return detail::make_op<T>(a->value.cwiseProduct(b->value), {a, b}, [a, b](Node<T>& n) mutable {
        detail::accum(a, Mat<T>(n.grad.cwiseProduct(b->value)));
        detail::accum(b, Mat<T>(n.grad.cwiseProduct(a->value)));
    });
}

template <typename T>
Var<T> relu(Var<T> a) {
    Mat<T> v = a->value.cwiseMax(T(0));
    return detail::make_op<T>(std::move(v), {a}, [a](Node<T>& n) mutable {
        Mat<T> m = (a->value.array() > T(0)).template cast<T>();
        detail::accum(a, Mat<T>(n.grad.cwiseProduct(m)));
    });
}

template <typename T>
Var<T> gelu(Var<T> a) {
    const T c = T(0.7978845608028654);  // sqrt(2/pi)
    const T k = T(0.044715);
    Mat<T> x = a->value;
    Mat<T> t = (c * (x.array() + k * x.array().cube())).tanh();
    Mat<T> v = T(0.5) * x.array() * (T(1) + t.array());
    return detail::make_op<T>(std::move(v), {a}, [a, c, k, t](Node<T>& n) mutable {
        auto x = a->value.array();
        auto ta = t.array();
        Mat<T> d = (T(0.5) * (T(1) + ta) + T(0.5) * x * (T(1) - ta.square()) * c * (T(1) + T(3) * k * x.square())).matrix();
        detail::accum(a, Mat<T>(n.grad.cwiseProduct(d)));
    });
}

template <typename T>
Var<T> softmax_rows(Var<T> a) {
    Mat<T> v = a->value;
    for (Eigen::Index r = 0; r < v.rows(); ++r) {
        auto row = v.row(r).array();
        T mx = row.maxCoeff();
        v.row(r) = (row - mx).exp();
        v.row(r) /= v.row(r).sum();
    }
    auto out = detail::make_op<T>(v, {a}, nullptr);
    if (out->requires_grad) {
        Var<T> self = out;  // capture value by node
        out->backprop = [a, s = out->value](Node<T>& n) mutable {
            Mat<T> dx(n.grad.rows(), n.grad.cols());
            for (Eigen::Index r = 0; r < n.grad.rows(); ++r) {
                T dot = n.grad.row(r).cwiseProduct(s.row(r)).sum();
                dx.row(r) = (n.grad.row(r).array() - dot) * s.row(r).array();
            }
            detail::accum(a, dx);
        };
    }
    return out;
}

// row-wise layer normalization with learned gain/bias (1 x d each)
template <typename T>
Var<T> layer_norm(Var<T> x, Var<T> gamma, Var<T> beta, T eps = T(1e-5)) {
    const Eigen::Index d = x->value.cols();
    Mat<T> xhat(x->value.rows(), d);
    Mat<T> inv_sigma(x->value.rows(), 1);
    for (Eigen::Index r = 0; r < x->value.rows(); ++r) {
        T mu = x->value.row(r).mean();
        T var = (x->value.row(r).array() - mu).square().mean();
        T is = T(1) / std::sqrt(var + eps);
        inv_sigma(r, 0) = is;
        xhat.row(r) = (x->value.row(r).array() - mu) * is;
    }
    Mat<T> v = (xhat.array().rowwise() * gamma->value.row(0).array()).rowwise() + beta->value.row(0).array();
    return detail::make_op<T>(std::move(v), {x, gamma, beta},
                              [x, gamma, beta, xhat, inv_sigma](Node<T>& n) mutable {
                                  const Eigen::Index d = xhat.cols();
                                  Mat<T> dx(n.grad.rows(), d);
                                  for (Eigen::Index r = 0; r < n.grad.rows(); ++r) {
                                      Eigen::Array<T, 1, Eigen::Dynamic> dxh =
                                          n.grad.row(r).array() * gamma->value.row(0).array();
                                      T m1 = dxh.mean();
                                      T m2 = (dxh * xhat.row(r).array()).mean();
                                      dx.row(r) = ((dxh - m1 - xhat.row(r).array() * m2) * inv_sigma(r, 0)).matrix();
                                  }
                                  detail::accum(x, dx);
                                  detail::accum(gamma, Mat<T>(n.grad.cwiseProduct(xhat).colwise().sum()));
                                  detail::accum(beta, Mat<T>(n.grad.colwise().sum()));
                              });
}

template <typename T>
Var<T> transpose(Var<T> a) {
    return detail::make_op<T>(a->value.transpose(), {a}, [a](Node<T>& n) mutable {
        detail::accum(a, Mat<T>(n.grad.transpose()));
    });
}

template <typename T>
Var<T> slice_cols(Var<T> a, Eigen::Index c0, Eigen::Index n_cols) {
    Mat<T> v = a->value.middleCols(c0, n_cols);
    return detail::make_op<T>(std::move(v), {a}, [a, c0, n_cols](Node<T>& n) mutable {
        Mat<T> g = Mat<T>::Zero(a->value.rows(), a->value.cols());
        g.middleCols(c0, n_cols) = n.grad;
        detail::accum(a, g);
    });
}

template <typename T>
Var<T> slice_rows(Var<T> a, Eigen::Index r0, Eigen::Index n_rows) {
    Mat<T> v = a->value.middleRows(r0, n_rows);
    return detail::make_op<T>(std::move(v), {a}, [a, r0, n_rows](Node<T>& n) mutable {
        Mat<T> g = Mat<T>::Zero(a->value.rows(), a->value.cols());
        g.middleRows(r0, n_rows) = n.grad;
        detail::accum(a, g);
    });
}

template <typename T>
Var<T> concat_cols(std::vector<Var<T>> parts) {
    Eigen::Index rows = parts.at(0)->value.rows(), cols = 0;
    for (const auto& p : parts) cols += p->value.cols();
    Mat<T> v(rows, cols);
    Eigen::Index c = 0;
    for (const auto& p : parts) {
        v.middleCols(c, p->value.cols()) = p->value;
        c += p->value.cols();
    }
    std::vector<Var<T>> parents = parts;
    return detail::make_op<T>(std::move(v), std::move(parents), [parts](Node<T>& n) mutable {
        Eigen::Index c = 0;
        for (auto& p : parts) {
            detail::accum(p, Mat<T>(n.grad.middleCols(c, p->value.cols())));
            c += p->value.cols();
        }
    });
}

template <typename T>
Var<T> concat_rows(std::vector<Var<T>> parts) {
    Eigen::Index cols = parts.at(0)->value.cols(), rows = 0;
    for (const auto& p : parts) rows += p->value.rows();
    Mat<T> v(rows, cols);
    Eigen::Index r = 0;
    for (const auto& p : parts) {
        v.middleRows(r, p->value.rows()) = p->value;
        r += p->value.rows();
    }
    std::vector<Var<T>> parents = parts;
    return detail::make_op<T>(std::move(v), std::move(parents), [parts](Node<T>& n) mutable {
        Eigen::Index r = 0;
        for (auto& p : parts) {
            detail::accum(p, Mat<T>(n.grad.middleRows(r, p->value.rows())));
            r += p->value.rows();
        }
    });
}

// arithmetic mean over rows -> 1 x d
template <typename T>
Var<T> mean_rows(Var<T> a) {
    if (a->value.rows() == 0) throw std::invalid_argument("mean_rows: empty input");
    Mat<T> v = a->value.colwise().mean();
    return detail::make_op<T>(std::move(v), {a}, [a](Node<T>& n) mutable {
        T inv = T(1) / T(a->value.rows());
        detail::accum(a, Mat<T>(Mat<T>::Ones(a->value.rows(), 1) * n.grad * inv));
    });
}

template <typename T>
Var<T> add_scalar_mul(Var<T> a, Var<T> b, T sb) {  // a + sb * b
    return add(a, scale(b, sb));
}

// mean cross-entropy of row-wise logits against integer labels
template <typename T>
Var<T> cross_entropy_logits(Var<T> logits, const std::vector<int>& labels) {
    const Eigen::Index n = logits->value.rows();
    if (static_cast<size_t>(n) != labels.size() || n == 0)
        throw std::invalid_argument("cross_entropy_logits: label count mismatch");
    Mat<T> probs = logits->value;
    T loss = T(0);
    for (Eigen::Index r = 0; r < n; ++r) {
        auto row = probs.row(r).array();
        T mx = row.maxCoeff();
        probs.row(r) = (row - mx).exp();
        probs.row(r) /= probs.row(r).sum();
        loss -= std::log(std::max(probs(r, labels[r]), std::numeric_limits<T>::min()));
    }
    Mat<T> v(1, 1);
    v(0, 0) = loss / T(n);
    return detail::make_op<T>(std::move(v), {logits}, [logits, probs, labels](Node<T>& n) mutable {
        Mat<T> g = probs;
        for (Eigen::Index r = 0; r < g.rows(); ++r) g(r, labels[r]) -= T(1);
        g *= n.grad(0, 0) / T(g.rows());
        detail::accum(logits, g);
    });
}

// ---- spatial ops over token grids ----
// A token grid is an (H*W) x C matrix in row-major pixel order (index y*W+x).

// im2col convolution over a token grid; weight is (k*k*Cin) x Cout.
template <typename T>
Var<T> conv2d(Var<T> x, int H, int W, Var<T> weight, Var<T> bias, int k, int stride, int pad) {
    const int Cin = static_cast<int>(x->value.cols());
    if (weight->value.rows() != static_cast<Eigen::Index>(k) * k * Cin)
        throw std::invalid_argument("conv2d: weight rows must equal k*k*Cin");
    const int Ho = (H + 2 * pad - k) / stride + 1;
    const int Wo = (W + 2 * pad - k) / stride + 1;
    const int Cout = static_cast<int>(weight->value.cols());

    Mat<T> col(static_cast<Eigen::Index>(Ho) * Wo, static_cast<Eigen::Index>(k) * k * Cin);
    col.setZero();
    for (int oy = 0; oy < Ho; ++oy)
        for (int ox = 0; ox < Wo; ++ox) {
            Eigen::Index row = static_cast<Eigen::Index>(oy) * Wo + ox;
            for (int ky = 0; ky < k; ++ky)
                for (int kx = 0; kx < k; ++kx) {
                    int iy = oy * stride + ky - pad;
                    int ix = ox * stride + kx - pad;
                    if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                    col.block(row, (static_cast<Eigen::Index>(ky) * k + kx) * Cin, 1, Cin) =
                        x->value.row(static_cast<Eigen::Index>(iy) * W + ix);
                }
        }
    Mat<T> v = (col * weight->value).rowwise() + bias->value.row(0);
    return detail::make_op<T>(std::move(v), {x, weight, bias},
                              [x, weight, bias, col, H, W, Ho, Wo, k, stride, pad, Cin](Node<T>& n) mutable {
                                  detail::accum(weight, Mat<T>(col.transpose() * n.grad));
                                  detail::accum(bias, Mat<T>(n.grad.colwise().sum()));
                                  if (!x->requires_grad) return;
                                  Mat<T> dcol = n.grad * weight->value.transpose();
                                  Mat<T> dx = Mat<T>::Zero(x->value.rows(), x->value.cols());
                                  for (int oy = 0; oy < Ho; ++oy)
                                      for (int ox = 0; ox < Wo; ++ox) {
                                          Eigen::Index row = static_cast<Eigen::Index>(oy) * Wo + ox;
                                          for (int ky = 0; ky < k; ++ky)
                                              for (int kx = 0; kx < k; ++kx) {
                                                  int iy = oy * stride + ky - pad;
                                                  int ix = ox * stride + kx - pad;
                                                  if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                                                  dx.row(static_cast<Eigen::Index>(iy) * W + ix) +=
                                                      dcol.block(row, (static_cast<Eigen::Index>(ky) * k + kx) * Cin,
                                                                 1, Cin);
                                              }
                                      }
                                  detail::accum(x, dx);
                              });
}

// bilinear resize of a token grid from (H, W) to (Ho, Wo)
template <typename T>
Var<T> bilinear_resize(Var<T> x, int H, int W, int Ho, int Wo) {
    const Eigen::Index C = x->value.cols();
    struct Tap {
        Eigen::Index src;
        T w;
    };
    // align-corners=false convention
    std::vector<std::array<Tap, 4>> taps(static_cast<size_t>(Ho) * Wo);
    for (int oy = 0; oy < Ho; ++oy)
        for (int ox = 0; ox < Wo; ++ox) {
            T sy = (T(oy) + T(0.5)) * T(H) / T(Ho) - T(0.5);
            T sx = (T(ox) + T(0.5)) * T(W) / T(Wo) - T(0.5);
            int y0 = static_cast<int>(std::floor(sy)), x0 = static_cast<int>(std::floor(sx));
            T fy = sy - y0, fx = sx - x0;
            auto clampi = [](int v, int hi) { return std::min(std::max(v, 0), hi - 1); };
            int y0c = clampi(y0, H), y1c = clampi(y0 + 1, H);
            int x0c = clampi(x0, W), x1c = clampi(x0 + 1, W);
            taps[static_cast<size_t>(oy) * Wo + ox] = {
                Tap{static_cast<Eigen::Index>(y0c) * W + x0c, (1 - fy) * (1 - fx)},
                Tap{static_cast<Eigen::Index>(y0c) * W + x1c, (1 - fy) * fx},
                Tap{static_cast<Eigen::Index>(y1c) * W + x0c, fy * (1 - fx)},
                Tap{static_cast<Eigen::Index>(y1c) * W + x1c, fy * fx}};
        }
    Mat<T> v(static_cast<Eigen::Index>(Ho) * Wo, C);
    for (size_t i = 0; i < taps.size(); ++i) {
        v.row(static_cast<Eigen::Index>(i)) = taps[i][0].w * x->value.row(taps[i][0].src) +
                                              taps[i][1].w * x->value.row(taps[i][1].src) +
                                              taps[i][2].w * x->value.row(taps[i][2].src) +
                                              taps[i][3].w * x->value.row(taps[i][3].src);
    }
    return detail::make_op<T>(std::move(v), {x}, [x, taps](Node<T>& n) mutable {
        Mat<T> dx = Mat<T>::Zero(x->value.rows(), x->value.cols());
        for (size_t i = 0; i < taps.size(); ++i)
            for (const auto& t : taps[i]) dx.row(t.src) += t.w * n.grad.row(static_cast<Eigen::Index>(i));
        detail::accum(x, dx);
    });
}

// average pooling of a token grid by an integer factor
template <typename T>
Var<T> avg_pool(Var<T> x, int H, int W, int factor) {
    if (factor <= 1) return x;
    if (H % factor || W % factor) throw std::invalid_argument("avg_pool: grid not divisible by factor");
    const int Ho = H / factor, Wo = W / factor;
    const Eigen::Index C = x->value.cols();
    Mat<T> v = Mat<T>::Zero(static_cast<Eigen::Index>(Ho) * Wo, C);
    for (int y = 0; y < H; ++y)
        for (int xx = 0; xx < W; ++xx)
            v.row(static_cast<Eigen::Index>(y / factor) * Wo + xx / factor) +=
                x->value.row(static_cast<Eigen::Index>(y) * W + xx);
    v /= T(factor) * T(factor);
    return detail::make_op<T>(std::move(v), {x}, [x, H, W, Ho, Wo, factor](Node<T>& n) mutable {
        Mat<T> dx(x->value.rows(), x->value.cols());
        T inv = T(1) / (T(factor) * T(factor));
        for (int y = 0; y < H; ++y)
            for (int xx = 0; xx < W; ++xx)
                dx.row(static_cast<Eigen::Index>(y) * W + xx) =
                    n.grad.row(static_cast<Eigen::Index>(y / factor) * Wo + xx / factor) * inv;
        detail::accum(x, dx);
    });
}

}  // namespace filmseg::nn
