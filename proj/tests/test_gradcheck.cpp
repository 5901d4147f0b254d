#include "doctest.h"

#include "gradcheck_util.hpp"

using namespace vicnet;
using namespace vicnet::nn;

namespace {

Tensor3 random_input(std::size_t batch, std::size_t channels, std::size_t length, Rng& rng) {
    Tensor3 x(batch, channels, length);
    for (double& v : x.data) v = rng.normal(0.0, 1.0);
    return x;
}

// graph: trainable 1x1 conv in front of the layer under test, so the finite
// difference on the front kernel exercises the test layer's input gradients
ModelGraph wrap(int channels, int n_nn, LayerSpec subject) {
    ModelGraph g;
    g.arch = "gradcheck";
    g.input_channels = channels;
    g.n_nn = n_nn;
    g.add({.kind = LayerKind::Conv1d,
           .name = "front",
           .inputs = {-1},
           .in_channels = channels,
           .out_channels = channels,
           .kernel = 1,
           .bias = true});
    g.add(std::move(subject));
    return g;
}

void run_many(const char* label, int instances, const std::function<ModelGraph(Rng&)>& make_graph) {
    Rng root(0xC0FFEEu ^ std::hash<std::string>{}(label));
    double worst = 0.0;
    std::string worst_at;
    int total = 0;
    for (int i = 0; i < instances; ++i) {
        Rng rng = root.fork("instance", i);
        ModelGraph g = make_graph(rng);
        ParamStore params = init_params(g, rng.fork("params"));
        std::size_t batch = 1 + rng.below(2);
        Tensor3 x = random_input(batch, g.input_channels, g.n_nn, rng);
        auto res = gradcheck::check(g, params, x, rng);
        total += res.checked;
        if (res.max_rel_err > worst) {
            worst = res.max_rel_err;
            worst_at = res.worst;
        }
    }
    INFO(label << ": worst " << worst << " at " << worst_at << " over " << total << " entries");
    CHECK(worst <= 1e-3);
}

int even(Rng& rng, int lo_half, int hi_half) { return 2 * (lo_half + static_cast<int>(rng.below(hi_half - lo_half + 1))); }

} // namespace

TEST_CASE("gradcheck: conv1d") {
    run_many("conv1d", 20, [](Rng& rng) {
        int ci = 1 + static_cast<int>(rng.below(4));
        int co = 1 + static_cast<int>(rng.below(4));
        int k = 1 + static_cast<int>(rng.below(7));
        int stride = 1 + static_cast<int>(rng.below(2));
        int n = even(rng, 3, 8);
        return wrap(ci, n,
                    {.kind = LayerKind::Conv1d, .name = "subject", .inputs = {-1}, .in_channels = ci, .out_channels = co,
                     .kernel = k, .stride = stride, .bias = rng.uniform() < 0.5});
    });
}

TEST_CASE("gradcheck: depthwise separable conv1d") {
    run_many("ds_conv1d", 20, [](Rng& rng) {
        int ci = 1 + static_cast<int>(rng.below(4));
        int co = 1 + static_cast<int>(rng.below(4));
        int k = 1 + static_cast<int>(rng.below(5));
        int stride = 1 + static_cast<int>(rng.below(2));
        int n = even(rng, 3, 8);
        return wrap(ci, n,
                    {.kind = LayerKind::DepthwiseSeparableConv1d, .name = "subject", .inputs = {-1}, .in_channels = ci,
                     .out_channels = co, .kernel = k, .stride = stride, .bias = rng.uniform() < 0.5});
    });
}

TEST_CASE("gradcheck: transposed conv1d") {
    run_many("tconv1d", 20, [](Rng& rng) {
        int ci = 1 + static_cast<int>(rng.below(3));
        int co = 1 + static_cast<int>(rng.below(3));
        int stride = 1 + static_cast<int>(rng.below(2));
        int k = stride + static_cast<int>(rng.below(3));
        int n = 4 + static_cast<int>(rng.below(9));
        return wrap(ci, n,
                    {.kind = LayerKind::TransposedConv1d, .name = "subject", .inputs = {-1}, .in_channels = ci,
                     .out_channels = co, .kernel = k, .stride = stride, .bias = rng.uniform() < 0.5});
    });
}

TEST_CASE("gradcheck: repeat upsample") {
    run_many("upsample1d", 20, [](Rng& rng) {
        int ci = 1 + static_cast<int>(rng.below(3));
        int f = 2 + static_cast<int>(rng.below(2));
        int n = 3 + static_cast<int>(rng.below(6));
        return wrap(ci, n, {.kind = LayerKind::RepeatUpsample1d, .name = "subject", .inputs = {-1}, .in_channels = ci,
                            .out_channels = ci, .factor = f});
    });
}

TEST_CASE("gradcheck: max pool") {
    run_many("maxpool1d", 20, [](Rng& rng) {
        int ci = 1 + static_cast<int>(rng.below(3));
        int pool = 2 + 2 * static_cast<int>(rng.below(2)); // 2 or 4
        int n = pool * (2 + static_cast<int>(rng.below(3)));
        return wrap(ci, n, {.kind = LayerKind::MaxPool1d, .name = "subject", .inputs = {-1}, .in_channels = ci,
                            .out_channels = ci, .pool = pool});
    });
}

TEST_CASE("gradcheck: batch norm (mini-batch statistics)") {
    run_many("batchnorm1d", 20, [](Rng& rng) {
        int ci = 1 + static_cast<int>(rng.below(4));
        int n = 4 + static_cast<int>(rng.below(12));
        return wrap(ci, n, {.kind = LayerKind::BatchNorm1d, .name = "subject", .inputs = {-1}, .in_channels = ci,
                            .out_channels = ci});
    });
}

TEST_CASE("gradcheck: prelu") {
    run_many("prelu", 20, [](Rng& rng) {
        int ci = 1 + static_cast<int>(rng.below(4));
        int n = 4 + static_cast<int>(rng.below(12));
        return wrap(ci, n,
                    {.kind = LayerKind::PReLU, .name = "subject", .inputs = {-1}, .in_channels = ci, .out_channels = ci});
    });
}

TEST_CASE("gradcheck: concat with shared consumer") {
    run_many("concat", 20, [](Rng& rng) {
        int ci = 1 + static_cast<int>(rng.below(3));
        int n = 4 + static_cast<int>(rng.below(8));
        ModelGraph g;
        g.arch = "gradcheck";
        g.input_channels = ci;
        g.n_nn = n;
        // value 1 feeds both the second conv and the concat: exercises gradient accumulation
        int v1 = g.add({.kind = LayerKind::Conv1d, .name = "a", .inputs = {-1}, .in_channels = ci, .out_channels = 2,
                        .kernel = 1, .bias = true});
        int v2 = g.add({.kind = LayerKind::Conv1d, .name = "b", .inputs = {v1}, .in_channels = 2, .out_channels = 3,
                        .kernel = 3});
        g.add({.kind = LayerKind::Concat, .name = "subject", .inputs = {v1, v2}});
        return g;
    });
}

TEST_CASE("gradcheck: global average pool") {
    run_many("gap1d", 20, [](Rng& rng) {
        int ci = 1 + static_cast<int>(rng.below(4));
        int n = 2 + static_cast<int>(rng.below(14));
        return wrap(ci, n, {.kind = LayerKind::GlobalAveragePool1d, .name = "subject", .inputs = {-1},
                            .in_channels = ci, .out_channels = ci});
    });
}

TEST_CASE("gradcheck: sigmoid") {
    run_many("sigmoid", 20, [](Rng& rng) {
        int ci = 1 + static_cast<int>(rng.below(4));
        int n = 2 + static_cast<int>(rng.below(14));
        return wrap(ci, n,
                    {.kind = LayerKind::Sigmoid, .name = "subject", .inputs = {-1}, .in_channels = ci, .out_channels = ci});
    });
}

TEST_CASE("gradcheck: frozen front stops the sweep and zeroes its gradients") {
    Rng rng(99);
    ModelGraph g = wrap(2, 8,
                        {.kind = LayerKind::Conv1d, .name = "subject", .inputs = {-1}, .in_channels = 2,
                         .out_channels = 2, .kernel = 3, .bias = true});
    ParamStore params = init_params(g, rng.fork("params"));
    params.set_trainable({"front"}, false);
    Tensor3 x = random_input(2, 2, 8, rng);

    ForwardCache cache;
    Tensor3 out = forward(g, params, x, Mode::train, &cache);
    Tensor3 ograd(out.batch, out.channels, out.length);
    for (double& v : ograd.data) v = 1.0;
    GradStore grads = backward(g, params, cache, ograd);

    for (std::size_t t = 0; t < params.tensors.size(); ++t) {
        if (params.tensors[t].trainable) continue;
        for (double v : grads.grads[t]) CHECK(v == 0.0);
    }
    // subject gradients still flow
    double sum = 0.0;
    for (double v : grads.grads[params.tensors.size() - 2]) sum += std::abs(v);
    CHECK(sum > 0.0);
}
