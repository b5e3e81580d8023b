#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "chamber/core/tensor.hpp"

namespace chamber::nn {

struct NamedParam {
    std::string name;
    Tensor tensor;
};

/// Adam with bias correction. Parameters without a populated grad are
/// skipped for that step (unreachable in the last graph).
class Adam {
public:
    explicit Adam(std::vector<NamedParam>& params, float lr = 3e-4f, float beta1 = 0.9f,
                  float beta2 = 0.999f, float eps = 1e-8f)
        : params_(params), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
        m_.resize(params.size());
        v_.resize(params.size());
        for (size_t i = 0; i < params.size(); ++i) {
            m_[i].assign(size_t(params[i].tensor.size()), 0.f);
            v_[i].assign(size_t(params[i].tensor.size()), 0.f);
        }
    }

    void zero_grad() {
        for (auto& p : params_) p.tensor.drop_grad();
    }

    void step() {
        ++t_;
        const double bc1 = 1.0 - std::pow(double(beta1_), double(t_));
        const double bc2 = 1.0 - std::pow(double(beta2_), double(t_));
        for (size_t i = 0; i < params_.size(); ++i) {
            auto& p = params_[i].tensor;
            if (!p.has_grad()) continue;
            const auto& g = p.grad();
            auto& val = p.data();
            auto& m = m_[i];
            auto& v = v_[i];
            for (size_t j = 0; j < val.size(); ++j) {
                m[j] = beta1_ * m[j] + (1.f - beta1_) * g[j];
                v[j] = beta2_ * v[j] + (1.f - beta2_) * g[j] * g[j];
                const double mh = double(m[j]) / bc1;
                const double vh = double(v[j]) / bc2;
                val[j] -= float(double(lr_) * mh / (std::sqrt(vh) + double(eps_)));
            }
        }
    }

    float lr() const { return lr_; }
    void set_lr(float lr) { lr_ = lr; }

private:
    std::vector<NamedParam>& params_;
    float lr_, beta1_, beta2_, eps_;
    int64_t t_ = 0;
    std::vector<std::vector<float>> m_, v_;
};

} // namespace chamber::nn
