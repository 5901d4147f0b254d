#include "vicnet/nn/adam.hpp"

#include <cmath>

namespace vicnet::nn {

AdamState AdamState::zeros_like(const ParamStore& store) {
    AdamState st;
    st.m.reserve(store.tensors.size());
    st.v.reserve(store.tensors.size());
    for (const ParamTensor& t : store.tensors) {
        st.m.emplace_back(t.size(), 0.0);
        st.v.emplace_back(t.size(), 0.0);
    }
    return st;
}

void adam_step(ParamStore& params, const GradStore& grads, AdamState& state, const AdamConfig& cfg) {
    if (state.m.size() != params.tensors.size() || grads.grads.size() != params.tensors.size())
        throw StateError("adam: state/gradient size mismatch with parameter store");
    state.step += 1;
    double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    for (std::size_t t = 0; t < params.tensors.size(); ++t) {
        ParamTensor& p = params.tensors[t];
        if (!p.trainable) continue;
        const std::vector<double>& g = grads.grads[t];
        std::vector<double>& m = state.m[t];
        std::vector<double>& v = state.v[t];
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            double mhat = m[i] / bc1;
            double vhat = v[i] / bc2;
            p.value[i] -= cfg.step_size * mhat / (std::sqrt(vhat) + cfg.epsilon);
        }
    }
}

} // namespace vicnet::nn
