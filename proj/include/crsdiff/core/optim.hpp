#pragma once

// AdamW: Adam with decoupled weight decay.

#include <cmath>
#include <vector>

#include "crsdiff/core/nn.hpp"

namespace crsdiff {

template <typename T>
class AdamW {
public:
    T lr = T(1e-4);
    T beta1 = T(0.9);
    T beta2 = T(0.999);
    T eps = T(1e-8);
    T weight_decay = T(0.01);

    explicit AdamW(ParamCollector<T>& params) : params_(&params) {
        for (auto& it : params.items) {
            m_.push_back(Tensor<T>::zeros(it.second->value.shape));
            v_.push_back(Tensor<T>::zeros(it.second->value.shape));
        }
    }

    void step() {
        ++t_;
        T bc1 = T(1) - static_cast<T>(std::pow(static_cast<double>(beta1), t_));
        T bc2 = T(1) - static_cast<T>(std::pow(static_cast<double>(beta2), t_));
        for (size_t pi = 0; pi < params_->items.size(); ++pi) {
            Param<T>& p = *params_->items[pi].second;
            Tensor<T>& m = m_[pi];
            Tensor<T>& v = v_[pi];
            for (int64_t i = 0; i < p.numel(); ++i) {
                T g = p.grad[i];
                m[i] = beta1 * m[i] + (T(1) - beta1) * g;
                v[i] = beta2 * v[i] + (T(1) - beta2) * g * g;
                T mhat = m[i] / bc1;
                T vhat = v[i] / bc2;
                p.value[i] -= lr * (mhat / (std::sqrt(vhat) + eps) + weight_decay * p.value[i]);
            }
        }
    }

    int steps_taken() const { return t_; }

private:
    ParamCollector<T>* params_;
    std::vector<Tensor<T>> m_, v_;
    int t_ = 0;
};

}  // namespace crsdiff
