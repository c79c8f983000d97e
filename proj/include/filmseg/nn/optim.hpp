#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "filmseg/nn/graph.hpp"

namespace filmseg::nn {

// Adam with optional decoupled weight decay (AdamW when weight_decay > 0).
template <typename T>
class Adam {
   public:
    struct Config {
        T lr = T(1e-3);
        T beta1 = T(0.9);
        T beta2 = T(0.999);
        T eps = T(1e-8);
        T weight_decay = T(0);  // decoupled (AdamW style)
    };

    Adam(std::vector<Var<T>> params, Config cfg) : params_(std::move(params)), cfg_(cfg) {
        m_.reserve(params_.size());
        v_.reserve(params_.size());
        for (const auto& p : params_) {
            m_.push_back(Mat<T>::Zero(p->value.rows(), p->value.cols()));
            v_.push_back(Mat<T>::Zero(p->value.rows(), p->value.cols()));
        }
    }

    void set_lr(T lr) { cfg_.lr = lr; }
    T lr() const { return cfg_.lr; }

    void step() {
        ++t_;
        const T bc1 = T(1) - std::pow(cfg_.beta1, T(t_));
        const T bc2 = T(1) - std::pow(cfg_.beta2, T(t_));
        for (size_t i = 0; i < params_.size(); ++i) {
            auto& p = params_[i];
            if (p->grad.size() == 0) continue;
            m_[i] = cfg_.beta1 * m_[i] + (T(1) - cfg_.beta1) * p->grad;
            v_[i] = cfg_.beta2 * v_[i] + (T(1) - cfg_.beta2) * p->grad.cwiseProduct(p->grad);
            Mat<T> mhat = m_[i] / bc1;
            Mat<T> vhat = v_[i] / bc2;
            if (cfg_.weight_decay > T(0)) p->value -= cfg_.lr * cfg_.weight_decay * p->value;
            p->value.array() -= cfg_.lr * mhat.array() / (vhat.array().sqrt() + cfg_.eps);
        }
    }

    void zero_grad() { nn::zero_grad(params_); }

   private:
    std::vector<Var<T>> params_;
    Config cfg_;
    std::vector<Mat<T>> m_, v_;
    int64_t t_ = 0;
};

// Halves (or scales) the learning rate when a maximized metric stops improving.
template <typename T>
class ReduceOnPlateau {
   public:
    ReduceOnPlateau(int patience, T factor = T(0.5), T min_delta = T(1e-4))
        : patience_(patience), factor_(factor), min_delta_(min_delta) {
        if (patience < 1) throw std::invalid_argument("patience must be positive");
    }

    // returns true if the learning rate was reduced this call
    bool observe(T metric, Adam<T>& opt) {
        if (metric > best_ + min_delta_) {
            best_ = metric;
            stale_ = 0;
            return false;
        }
        if (++stale_ >= patience_) {
            stale_ = 0;
            opt.set_lr(opt.lr() * factor_);
            return true;
        }
        return false;
    }

   private:
    int patience_;
    T factor_, min_delta_;
    T best_ = std::numeric_limits<T>::lowest();
    int stale_ = 0;
};

// Stops training when a maximized metric has not improved for `patience` epochs.
template <typename T>
class EarlyStopper {
   public:
    explicit EarlyStopper(int patience, T min_delta = T(1e-4))
        : patience_(patience), min_delta_(min_delta) {
        if (patience < 1) throw std::invalid_argument("patience must be positive");
    }

    // returns true when the new metric is the best seen so far
    bool observe(T metric) {
        if (metric > best_ + min_delta_) {
            best_ = metric;
            stale_ = 0;
            return true;
        }
        ++stale_;
        return false;
    }

    bool should_stop() const { return stale_ >= patience_; }
    T best() const { return best_; }

   private:
    int patience_;
    T min_delta_;
    T best_ = std::numeric_limits<T>::lowest();
    int stale_ = 0;
};

}  // namespace filmseg::nn
