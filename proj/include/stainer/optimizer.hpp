#pragma once

#include <cmath>
#include <vector>

#include "stainer/params.hpp"

namespace stainer {

// First-order adaptive-moment optimizer with the usual default coefficients.
class AdamOptimizer {
public:
    explicit AdamOptimizer(ParamRefs params, double lr, double beta1 = 0.9,
                           double beta2 = 0.999, double eps = 1e-8)
        : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
        for (Param* p : params_) {
            m_.emplace_back(p->size(), 0.0);
            v_.emplace_back(p->size(), 0.0);
        }
    }

    void step() {
        ++t_;
        double bc1 = 1.0 - std::pow(beta1_, t_);
        double bc2 = 1.0 - std::pow(beta2_, t_);
        for (size_t pi = 0; pi < params_.size(); ++pi) {
            Param* p = params_[pi];
            std::vector<double>& m = m_[pi];
            std::vector<double>& v = v_[pi];
            for (size_t i = 0; i < p->size(); ++i) {
                double g = p->g[i];
                m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
                v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
                p->w[i] -= lr_ * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps_);
            }
        }
    }

    double learning_rate() const { return lr_; }

private:
    ParamRefs params_;
    double lr_, beta1_, beta2_, eps_;
    long t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

}  // namespace stainer
