#pragma once

#include <cmath>
#include <cstddef>

#include "stackelgrad/param_vector.hpp"

namespace stackelgrad {

// SGD with classical momentum and decoupled-from-nothing weight decay (decay
// enters the gradient, the common formulation). momentum = 0 gives plain GD.
class Sgd {
public:
    Sgd(double lr, double momentum = 0.0, double weight_decay = 0.0)
        : lr_(lr), momentum_(momentum), weight_decay_(weight_decay) {}

    void set_lr(double lr) { lr_ = lr; }
    double lr() const { return lr_; }

    void step(ParamVector& params, const ParamVector& grads) {
        if (momentum_ == 0.0 && weight_decay_ == 0.0) {
            params.add_scaled(grads, -lr_);
            return;
        }
        if (velocity_.count() == 0) velocity_ = params.zeros_like();
        for (std::size_t i = 0; i < params.count(); ++i)
            for (std::size_t j = 0; j < params[i].data.size(); ++j) {
                double g = grads[i].data[j] + weight_decay_ * params[i].data[j];
                double v = momentum_ * velocity_[i].data[j] + g;
                velocity_[i].data[j] = v;
                params[i].data[j] -= lr_ * v;
            }
    }

private:
    double lr_;
    double momentum_;
    double weight_decay_;
    ParamVector velocity_;
};

// Adaptive-moment optimizer with bias correction. State starts cold; a fresh
// instance per descent phase keeps runs independent of prior history.
class Adam {
public:
    explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(ParamVector& params, const ParamVector& grads) {
        if (m_.count() == 0) {
            m_ = params.zeros_like();
            v_ = params.zeros_like();
        }
        ++t_;
        double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        for (std::size_t i = 0; i < params.count(); ++i)
            for (std::size_t j = 0; j < params[i].data.size(); ++j) {
                double g = grads[i].data[j];
                double m = beta1_ * m_[i].data[j] + (1.0 - beta1_) * g;
                double v = beta2_ * v_[i].data[j] + (1.0 - beta2_) * g * g;
                m_[i].data[j] = m;
                v_[i].data[j] = v;
                params[i].data[j] -= lr_ * (m / bc1) / (std::sqrt(v / bc2) + eps_);
            }
    }

private:
    double lr_;
    double beta1_;
    double beta2_;
    double eps_;
    long t_ = 0;
    ParamVector m_;
    ParamVector v_;
};

}  // namespace stackelgrad
