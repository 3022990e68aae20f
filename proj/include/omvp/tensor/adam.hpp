#pragma once

#include <algorithm>
#include <cmath>

#include "omvp/tensor/params.hpp"

namespace omvp::tensor {

struct AdamState {
    std::vector<Tensor> m;
    std::vector<Tensor> v;
    long step = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

inline AdamState make_adam(const ParamSet& params) {
    AdamState st;
    for (const auto& p : params) {
        st.m.emplace_back(p.value.shape(), 0.0);
        st.v.emplace_back(p.value.shape(), 0.0);
    }
    return st;
}

/// Bias-corrected Adam update.
inline void adam_step(ParamSet& params, const Gradients& grads, AdamState& st, double lr) {
    if (grads.size() != params.size() || st.m.size() != params.size())
        throw ContractError("adam_step: parameter/gradient/state counts differ");
    for (std::size_t i = 0; i < params.size(); ++i)
        if (grads[i].shape() != params[i].value.shape() || st.m[i].shape() != params[i].value.shape())
            throw ContractError("adam_step: shape mismatch for " + params[i].name);

    ++st.step;
    const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
    const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& p = params[i].value;
        auto& m = st.m[i];
        auto& v = st.v[i];
        const auto& g = grads[i];
        for (std::size_t j = 0; j < p.size(); ++j) {
            m[j] = st.beta1 * m[j] + (1.0 - st.beta1) * g[j];
            v[j] = st.beta2 * v[j] + (1.0 - st.beta2) * g[j] * g[j];
            const double mhat = m[j] / c1;
            const double vhat = v[j] / c2;
            p[j] -= lr * mhat / (std::sqrt(vhat) + st.eps);
        }
    }
}

/// Linear decay from `base` at step 0 to 0 at `total`.
inline double linear_lr(double base, long step, long total) {
    if (total <= 0) return 0.0;
    return base * std::max(0.0, 1.0 - static_cast<double>(step) / static_cast<double>(total));
}

}  // namespace omvp::tensor
