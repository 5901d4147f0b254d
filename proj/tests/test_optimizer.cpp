#include "doctest.h"

#include <cmath>

#include "vicnet/nn/adam.hpp"
#include "vicnet/rng.hpp"

using namespace vicnet;
using namespace vicnet::nn;

namespace {

ParamStore scalar_store(double v, bool trainable = true) {
    ParamStore s;
    ParamTensor t;
    t.name = "theta";
    t.shape = {1};
    t.value = {v};
    t.trainable = trainable;
    s.tensors.push_back(t);
    s.node_range.emplace_back(0, 1);
    return s;
}

GradStore scalar_grad(const ParamStore& s, double g) {
    GradStore gs = GradStore::zeros_like(s);
    gs.grads[0][0] = g;
    return gs;
}

} // namespace

TEST_CASE("adam: zero gradient from a fresh state leaves parameters unchanged") {
    ParamStore p = scalar_store(1.25);
    AdamState st = AdamState::zeros_like(p);
    AdamConfig cfg;
    for (int i = 0; i < 5; ++i) adam_step(p, scalar_grad(p, 0.0), st, cfg);
    CHECK(p.tensors[0].value[0] == 1.25);
    CHECK(st.step == 5);
}

TEST_CASE("adam: moments decay under zero gradient") {
    ParamStore p = scalar_store(0.0);
    AdamState st = AdamState::zeros_like(p);
    AdamConfig cfg;
    adam_step(p, scalar_grad(p, 2.0), st, cfg);
    double m1 = st.m[0][0], v1 = st.v[0][0];
    adam_step(p, scalar_grad(p, 0.0), st, cfg);
    CHECK(st.m[0][0] == doctest::Approx(cfg.beta1 * m1));
    CHECK(st.v[0][0] == doctest::Approx(cfg.beta2 * v1));
}

TEST_CASE("adam: first step matches the hand-computed bias-corrected formula") {
    AdamConfig cfg;
    for (double g : {0.5, -3.0, 1e-4}) {
        ParamStore p = scalar_store(2.0);
        AdamState st = AdamState::zeros_like(p);
        adam_step(p, scalar_grad(p, g), st, cfg);
        // mhat = g, vhat = g^2 after correction; update = -a * g / (|g| + eps)
        double expected = 2.0 - cfg.step_size * g / (std::sqrt(g * g) + cfg.epsilon);
        CHECK(p.tensors[0].value[0] == doctest::Approx(expected).epsilon(1e-12));
    }
}

TEST_CASE("adam: minimizes a scalar quadratic") {
    // loss (theta-3)^2, gradient 2(theta-3), step size 0.01
    ParamStore p = scalar_store(0.0);
    AdamState st = AdamState::zeros_like(p);
    AdamConfig cfg;
    cfg.step_size = 0.01;
    for (int i = 0; i < 2000; ++i) {
        double theta = p.tensors[0].value[0];
        adam_step(p, scalar_grad(p, 2.0 * (theta - 3.0)), st, cfg);
    }
    CHECK(std::abs(p.tensors[0].value[0] - 3.0) < 0.05);
}

TEST_CASE("adam: frozen parameters are bit-identical after steps") {
    ParamStore p = scalar_store(0.7, false);
    AdamState st = AdamState::zeros_like(p);
    AdamConfig cfg;
    for (int i = 0; i < 10; ++i) adam_step(p, scalar_grad(p, 5.0), st, cfg);
    CHECK(p.tensors[0].value[0] == 0.7);
    CHECK(st.m[0][0] == 0.0);
    CHECK(st.v[0][0] == 0.0);
}
