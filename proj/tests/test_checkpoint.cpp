#include "doctest.h"

#include <cstdio>
#include <filesystem>

#include "vicnet/nn/checkpoint.hpp"
#include "vicnet/nn/network.hpp"
#include "vicnet/rng.hpp"

using namespace vicnet;
using namespace vicnet::nn;

TEST_CASE("checkpoint round trip preserves graph, params, norm stats and meta") {
    Rng rng(17);
    ModelGraph g;
    g.arch = "custom";
    g.input_channels = 2;
    g.n_nn = 8;
    int v1 = g.add({.kind = LayerKind::Conv1d, .name = "c1", .inputs = {-1}, .in_channels = 2, .out_channels = 4,
                    .kernel = 3});
    g.add({.kind = LayerKind::BatchNorm1d, .name = "bn", .inputs = {-1}, .in_channels = 4, .out_channels = 4});
    g.add({.kind = LayerKind::PReLU, .name = "act", .inputs = {-1}, .in_channels = 4, .out_channels = 4});
    g.add({.kind = LayerKind::Concat, .name = "cat", .inputs = {v1, 3}});
    g.add({.kind = LayerKind::Conv1d, .name = "out", .inputs = {-1}, .in_channels = 8, .out_channels = 3, .kernel = 1,
           .bias = true});

    Checkpoint ck;
    ck.graph = g;
    ck.params = init_params(g, rng.fork("p"));
    ck.params.set_trainable({"c1"}, false);
    ck.norm["i"] = {12.5, 3.25};
    ck.norm["v"] = {3.7, 0.21};
    ck.meta["n_nn"] = 8;
    ck.meta["delta_q_ah"] = 1.2675;
    ck.seed = 99;

    std::string path = (std::filesystem::temp_directory_path() / "vicnet_ckpt_test.ckpt").string();
    save_checkpoint(ck, path);
    Checkpoint back = load_checkpoint(path);

    CHECK(back.graph.arch == "custom");
    CHECK(back.graph.layers.size() == g.layers.size());
    CHECK(back.seed == 99);
    CHECK(back.norm.at("i").mean == 12.5);
    CHECK(back.norm.at("v").stddev == 0.21);
    CHECK(back.meta.at("delta_q_ah").get<double>() == 1.2675);
    CHECK_FALSE(back.params.get("c1.kernel").trainable);
    CHECK(back.params.get("out.kernel").trainable);
    CHECK(back.params.get("bn.moving_mean").statistic);

    // float32 payload: values match to float precision and eval forwards agree
    for (std::size_t t = 0; t < ck.params.tensors.size(); ++t)
        for (std::size_t i = 0; i < ck.params.tensors[t].size(); ++i)
            CHECK(back.params.tensors[t].value[i] ==
                  doctest::Approx(ck.params.tensors[t].value[i]).epsilon(1e-6));

    Tensor3 x(2, 2, 8);
    for (double& v : x.data) v = rng.normal();
    ParamStore rounded = ck.params;
    for (auto& t : rounded.tensors)
        for (double& v : t.value) v = static_cast<double>(static_cast<float>(v));
    Tensor3 ya = forward(back.graph, back.params, x, Mode::eval);
    Tensor3 yb = forward(g, rounded, x, Mode::eval);
    CHECK(ya.data == yb.data);

    // byte-identical rewrite
    save_checkpoint(back, path + ".2");
    Checkpoint again = load_checkpoint(path + ".2");
    for (std::size_t t = 0; t < back.params.tensors.size(); ++t)
        CHECK(again.params.tensors[t].value == back.params.tensors[t].value);

    std::remove(path.c_str());
    std::remove((path + ".2").c_str());
}

TEST_CASE("loading a non-checkpoint file fails cleanly") {
    std::string path = (std::filesystem::temp_directory_path() / "vicnet_not_a_ckpt").string();
    {
        FILE* f = std::fopen(path.c_str(), "wb");
        std::fputs("not a checkpoint", f);
        std::fclose(f);
    }
    CHECK_THROWS_AS(load_checkpoint(path), DataError);
    std::remove(path.c_str());
}
