#pragma once

#include <cmath>
#include <vector>

#include "mproj/ad/tensor.hpp"

namespace mproj::ad {

/// Adam with bias correction (Kingma-Ba defaults; lr from the training setup).
struct AdamState {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    int64_t step_count = 0;
    std::vector<Tensor> m;  // first moments, one per parameter
    std::vector<Tensor> v;  // second moments

    void reset(const std::vector<Tensor>& params) {
        step_count = 0;
        m.clear();
        v.clear();
        for (const auto& p : params) {
            m.push_back(Tensor::zeros(p.shape));
            v.push_back(Tensor::zeros(p.shape));
        }
    }
};

inline void adam_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads,
                      AdamState& state) {
    if (params.size() != grads.size()) throw usage_error("adam: parameter/gradient count mismatch");
    if (state.m.size() != params.size()) state.reset(params);
    for (size_t i = 0; i < params.size(); ++i)
        if (!params[i].same_shape(grads[i]) || !params[i].same_shape(state.m[i]))
            throw usage_error("adam: shape mismatch on parameter " + std::to_string(i));

    state.step_count += 1;
    const double b1t = 1.0 - std::pow(state.beta1, static_cast<double>(state.step_count));
    const double b2t = 1.0 - std::pow(state.beta2, static_cast<double>(state.step_count));
    for (size_t i = 0; i < params.size(); ++i) {
        auto& p = params[i].v;
        const auto& g = grads[i].v;
        auto& m = state.m[i].v;
        auto& v = state.v[i].v;
        for (size_t j = 0; j < p.size(); ++j) {
            m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g[j];
            v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g[j] * g[j];
            const double mhat = m[j] / b1t;
            const double vhat = v[j] / b2t;
            p[j] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
        }
    }
}

}  // namespace mproj::ad
