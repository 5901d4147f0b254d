#pragma once

#include "vicnet/nn/params.hpp"

namespace vicnet::nn {

struct AdamConfig {
    double step_size = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-7;
};

struct AdamState {
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
    long long step = 0;

    static AdamState zeros_like(const ParamStore& store);
};

// One bias-corrected Adam update. Frozen parameters are untouched and their
// moments are not advanced.
void adam_step(ParamStore& params, const GradStore& grads, AdamState& state, const AdamConfig& cfg);

} // namespace vicnet::nn
