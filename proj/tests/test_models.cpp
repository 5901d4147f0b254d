#include "doctest.h"

#include <algorithm>
#include <set>

#include "vicnet/models.hpp"
#include "vicnet/nn/network.hpp"
#include "vicnet/nn/train.hpp"

using namespace vicnet;
using namespace vicnet::nn;

namespace {

Tensor3 random_input(std::size_t batch, int n_nn, Rng& rng) {
    Tensor3 x(batch, 2, n_nn);
    for (double& v : x.data) v = rng.normal();
    return x;
}

Checkpoint make_curve_checkpoint(const ModelGraph& g, Rng rng) {
    Checkpoint ck;
    ck.graph = g;
    ck.params = init_params(g, rng);
    return ck;
}

} // namespace

TEST_CASE("u-net shape contract") {
    ModelGraph g = build_unet(128);
    Shape out = output_shape(g);
    CHECK(out.channels == 3);
    CHECK(out.length == 128);

    // encoder/decoder lengths mirror at every level; bottleneck is n/2^levels
    std::vector<Shape> shapes = infer_shapes(g);
    CHECK(shapes[g.value_of("bott.conv2_act")].length == 16);
    for (int l = 1; l <= 3; ++l) {
        int enc = shapes[g.value_of("enc" + std::to_string(l) + ".conv2_act")].length;
        int dec = shapes[g.value_of("dec" + std::to_string(l) + ".up")].length;
        CHECK(enc == dec);
    }

    ParamStore p = init_params(g, Rng(3));
    Rng rng(5);
    Tensor3 y = forward(g, p, random_input(2, 128, rng), Mode::eval);
    CHECK(y.channels == 3);
    CHECK(y.length == 128);
    CHECK(y.all_finite());
}

TEST_CASE("indivisible n_nn is rejected") {
    CHECK_THROWS_AS(build_unet(100), ShapeError); // 100 not divisible by 8
}

TEST_CASE("mobile u-net: same output shape, substituted kinds") {
    ModelGraph u = build_unet(128);
    ModelGraph m = build_mobile_unet(128);
    CHECK(output_shape(m) == output_shape(u));

    int ds = 0, conv = 0, tconv = 0, up = 0;
    for (const LayerSpec& s : m.layers) {
        if (s.kind == LayerKind::DepthwiseSeparableConv1d) ++ds;
        if (s.kind == LayerKind::TransposedConv1d) ++tconv;
        if (s.kind == LayerKind::RepeatUpsample1d) ++up;
    }
    for (const LayerSpec& s : u.layers) {
        if (s.kind == LayerKind::Conv1d && s.name != "out.conv") ++conv;
    }
    CHECK(ds == conv); // every stage conv substituted
    CHECK(tconv == 0);
    CHECK(up == 3);

    ParamStore p = init_params(m, Rng(4));
    Rng rng(6);
    Tensor3 y = forward(m, p, random_input(1, 128, rng), Mode::eval);
    CHECK(y.channels == 3);
    CHECK(y.length == 128);
}

TEST_CASE("mobile efficiency: params and flops at most 0.4x of the plain variants") {
    ModelGraph u = build_unet(128);
    ModelGraph m = build_mobile_unet(128);
    CountReport ru = count_params_and_flops(u);
    CountReport rm = count_params_and_flops(m);
    INFO("unet total=", ru.total, " flops=", ru.flops, " | mobile total=", rm.total, " flops=", rm.flops);
    CHECK(static_cast<double>(rm.total) / ru.total <= 0.4);
    CHECK(static_cast<double>(rm.flops) / ru.flops <= 0.4);
    CHECK(rm.total < ru.total / 2); // param count < 0.5x

    Rng rng(1);
    Checkpoint cu = make_curve_checkpoint(u, rng.fork("u"));
    Checkpoint cm = make_curve_checkpoint(m, rng.fork("m"));
    TransferResult conv = build_convnet(cu, {}, rng.fork("cn"));
    TransferResult mob = build_mobilenet(cm, {}, rng.fork("mn"));
    CountReport rc = count_params_and_flops(conv.graph, conv.frozen);
    CountReport rb = count_params_and_flops(mob.graph, mob.frozen);
    INFO("conv-net total=", rc.total, " flops=", rc.flops, " | mobile-net total=", rb.total, " flops=", rb.flops);
    CHECK(static_cast<double>(rb.total) / rc.total <= 0.4);
    CHECK(static_cast<double>(rb.flops) / rc.flops <= 0.4);
}

TEST_CASE("soh heads: frozen contraction, sigmoid scalar output") {
    Rng rng(7);
    ModelGraph u = build_unet(128);
    Checkpoint cu = make_curve_checkpoint(u, rng.fork("src"));
    TransferResult tr = build_convnet(cu, {}, rng.fork("head"));

    Shape out = output_shape(tr.graph);
    CHECK(out.channels == 1);
    CHECK(out.length == 1);

    // frozen (copied) parameter count equals the source contraction path's
    // total; the only other non-trainable tensors are the head's fresh
    // batch-norm statistics
    long long frozen_count = 0;
    for (const std::string& name : tr.frozen) {
        auto [b, e] = tr.params.node_range[tr.graph.index_of(name)];
        for (int i = b; i < e; ++i) {
            CHECK_FALSE(tr.params.tensors[i].trainable);
            frozen_count += static_cast<long long>(tr.params.tensors[i].size());
        }
    }
    long long src_contraction = 0;
    for (const std::string& name : contraction_layers(u)) {
        auto [b, e] = cu.params.node_range[u.index_of(name)];
        for (int i = b; i < e; ++i) src_contraction += static_cast<long long>(cu.params.tensors[i].size());
    }
    CHECK(frozen_count == src_contraction);
    for (const ParamTensor& t : tr.params.tensors)
        if (!t.trainable && (t.name.rfind("head", 0) == 0 || t.name.rfind("out", 0) == 0))
            CHECK(t.statistic);

    // fixed dominates trainable, as in the reference accounting
    CountReport r = count_params_and_flops(tr.graph, tr.frozen);
    CHECK(r.fixed > r.trainable);
    CHECK(r.total == r.fixed + r.trainable);

    // outputs live strictly inside (0, 1)
    Rng xr(9);
    Tensor3 y = forward(tr.graph, tr.params, random_input(4, 128, xr), Mode::eval);
    for (double v : y.data) {
        CHECK(v > 0.0);
        CHECK(v < 1.0);
    }

    // architecture mismatch is a transfer error
    ModelGraph m = build_mobile_unet(128);
    Checkpoint cm = make_curve_checkpoint(m, rng.fork("mob"));
    CHECK_THROWS_AS(build_convnet(cm, {}, rng), TransferError);
    CHECK_THROWS_AS(build_mobilenet(cu, {}, rng), TransferError);
}

TEST_CASE("transfer integrity: copied contraction path reproduces source activations bit-exactly") {
    Rng rng(11);
    ModelGraph u = build_unet(128);
    Checkpoint cu = make_curve_checkpoint(u, rng.fork("src"));
    TransferResult tr = build_convnet(cu, {}, rng.fork("head"));

    Rng xr(13);
    Tensor3 x = random_input(3, 128, xr);
    ForwardCache a, b;
    forward(u, cu.params, x, Mode::eval, &a);
    forward(tr.graph, tr.params, x, Mode::eval, &b);
    int va = u.value_of("bott.conv2_act");
    int vb = tr.graph.value_of("bott.conv2_act");
    REQUIRE(va > 0);
    REQUIRE(vb > 0);
    CHECK(a.values[va].data == b.values[vb].data);
}

TEST_CASE("feature head: linear multi-output") {
    Rng rng(15);
    ModelGraph u = build_unet(128);
    Checkpoint cu = make_curve_checkpoint(u, rng.fork("src"));

    TransferResult one = build_feature_head(cu, 1, {}, rng.fork("f1"));
    TransferResult three = build_feature_head(cu, 3, {}, rng.fork("f3"));
    CHECK(output_shape(one.graph).channels == 1);
    CHECK(output_shape(three.graph).channels == 3);
    CHECK(output_shape(three.graph).length == 1);

    // linear output: values not confined to (0,1)
    bool outside = false;
    Rng xr(17);
    for (int rep = 0; rep < 8 && !outside; ++rep) {
        Tensor3 y = forward(three.graph, three.params, random_input(4, 128, xr), Mode::eval);
        for (double v : y.data)
            if (v <= 0.0 || v >= 1.0) outside = true;
    }
    CHECK(outside);
    CHECK_THROWS_AS(build_feature_head(cu, 0, {}, rng), ConfigError);
}

TEST_CASE("fine-tune selection semantics") {
    Rng rng(19);
    ModelGraph u = build_unet(128);
    ParamStore params = init_params(u, rng.fork("p"));

    SUBCASE("empty selection freezes everything") {
        apply_fine_tune_selection(u, params, {});
        CHECK(params.count_trainable() == 0);
    }
    SUBCASE("unknown layer raises") {
        CHECK_THROWS_AS(apply_fine_tune_selection(u, params, {"enc9.conv1"}), TransferError);
    }
    SUBCASE("the demonstration preset selects 4 + 5 convs and one upsampling step") {
        std::vector<std::string> sel = fine_tune_preset(u);
        std::set<std::string> got(sel.begin(), sel.end());
        std::set<std::string> expect = {"enc1.conv1", "enc1.conv2", "enc2.conv1", "enc2.conv2",
                                        "dec2.conv1", "dec2.conv2", "dec1.conv1", "dec1.conv2",
                                        "out.conv",  "dec2.up"};
        CHECK(got == expect);

        apply_fine_tune_selection(u, params, sel);
        // selected conv kernels trainable, everything else frozen
        CHECK(params.get("enc1.conv1.kernel").trainable);
        CHECK(params.get("dec2.up.kernel").trainable);
        CHECK_FALSE(params.get("enc3.conv1.kernel").trainable);
        CHECK_FALSE(params.get("bott.conv1.kernel").trainable);
        CHECK_FALSE(params.get("enc1.conv1_bn.gamma").trainable);
    }
    SUBCASE("mobile preset skips the parameterless upsampling") {
        ModelGraph m = build_mobile_unet(128);
        std::vector<std::string> sel = fine_tune_preset(m);
        for (const std::string& s : sel) CHECK(s.find(".up") == std::string::npos);
        CHECK(sel.size() == 9); // 4 encoder + 5 decoder convs
        ParamStore mp = init_params(m, rng.fork("mp"));
        apply_fine_tune_selection(m, mp, sel); // must not throw
    }
    SUBCASE("soh-model preset: first 4 contraction convs + last 2 convs") {
        Checkpoint cu = make_curve_checkpoint(u, rng.fork("src"));
        TransferResult tr = build_convnet(cu, {}, rng.fork("h"));
        std::vector<std::string> sel = fine_tune_preset(tr.graph);
        std::set<std::string> got(sel.begin(), sel.end());
        std::set<std::string> expect = {"enc1.conv1", "enc1.conv2", "enc2.conv1", "enc2.conv2",
                                        "head2.conv", "out.conv"};
        CHECK(got == expect);
    }
}

TEST_CASE("fine-tune-all equals ordinary training") {
    Rng rng(23);
    ModelGraph g = build_unet(64, {.channels = {4, 8}, .bottleneck_channels = 16});
    ParamStore p0 = init_params(g, rng.fork("init"));

    TensorDataset tr;
    tr.x = Tensor3(8, 2, 64);
    tr.y = Tensor3(8, 3, 64);
    for (double& v : tr.x.data) v = rng.normal();
    for (double& v : tr.y.data) v = rng.normal(0.0, 0.1);
    TensorDataset va = tr;

    TrainConfig cfg;
    cfg.batch_size = 4;
    cfg.patience = 2;
    cfg.max_epochs = 3;
    cfg.seed = 77;

    std::vector<std::string> all_layers;
    for (const LayerSpec& s : g.layers) all_layers.push_back(s.name);
    ParamStore p_sel = p0;
    apply_fine_tune_selection(g, p_sel, all_layers);
    TrainResult a = train(g, p0, tr, va, cfg);
    TrainResult b = train(g, p_sel, tr, va, cfg);
    CHECK(a.val_loss == b.val_loss);
}
