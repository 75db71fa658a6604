#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "tsc/tensor.hpp"

namespace tsc {

// Adam with bias-corrected first and second moments. Parameters register at
// construction; step() reads each parameter's accumulated gradient and
// updates in place.
template <typename S>
class Adam {
public:
    explicit Adam(std::vector<Tensor<S>> params, double lr, double beta1 = 0.9,
                  double beta2 = 0.999, double eps = 1e-8)
        : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
        for (const auto& p : params_) {
            m_.emplace_back(p.numel(), S(0));
            v_.emplace_back(p.numel(), S(0));
        }
    }

    void step() {
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        for (size_t pi = 0; pi < params_.size(); ++pi) {
            auto& p = params_[pi];
            if (!p.has_grad())
                throw TrainError("adam: parameter " + std::to_string(pi) + " of shape " +
                                 shape_str(p.shape()) + " has no gradient at step " +
                                 std::to_string(t_));
            const auto& g = p.grad();
            auto& m = m_[pi];
            auto& v = v_[pi];
            S* pd = p.data().data();
            for (size_t i = 0; i < g.size(); ++i) {
                m[i] = static_cast<S>(beta1_ * m[i] + (1.0 - beta1_) * g[i]);
                v[i] = static_cast<S>(beta2_ * v[i] + (1.0 - beta2_) * static_cast<double>(g[i]) * g[i]);
                const double mhat = m[i] / bc1;
                const double vhat = v[i] / bc2;
                pd[i] -= static_cast<S>(lr_ * mhat / (std::sqrt(vhat) + eps_));
            }
        }
    }

    void zero_grad() {
        for (auto& p : params_) p.zero_grad();
    }

    int64_t step_count() const { return t_; }
    double lr() const { return lr_; }
    void set_lr(double lr) { lr_ = lr; }

private:
    std::vector<Tensor<S>> params_;
    std::vector<std::vector<S>> m_, v_;
    double lr_, beta1_, beta2_, eps_;
    int64_t t_ = 0;
};

}  // namespace tsc
