#include "vicnet/models.hpp"

#include <algorithm>

namespace vicnet {

using nn::LayerKind;
using nn::LayerSpec;
using nn::ModelGraph;

namespace {

// conv -> batch norm -> PReLU, with the conv bias absorbed by the batch norm
int conv_block(ModelGraph& g, const std::string& name, bool separable, int c_in, int c_out, int kernel,
               int stride = 1) {
    g.add({.kind = separable ? LayerKind::DepthwiseSeparableConv1d : LayerKind::Conv1d,
           .name = name,
           .inputs = {-1},
           .in_channels = c_in,
           .out_channels = c_out,
           .kernel = kernel,
           .stride = stride});
    g.add({.kind = LayerKind::BatchNorm1d, .name = name + "_bn", .inputs = {-1}, .in_channels = c_out,
           .out_channels = c_out});
    return g.add({.kind = LayerKind::PReLU, .name = name + "_act", .inputs = {-1}, .in_channels = c_out,
                  .out_channels = c_out});
}

ModelGraph build_curve_model(int n_nn, const PlanConfig& plan, bool separable) {
    int levels = static_cast<int>(plan.channels.size());
    if (levels < 1) throw ConfigError("plan needs at least one level");
    if (n_nn % (1 << levels) != 0)
        throw ShapeError("n_nn = " + std::to_string(n_nn) + " not divisible by 2^levels = " +
                         std::to_string(1 << levels));

    ModelGraph g;
    g.arch = separable ? "mobile-unet" : "unet";
    g.input_channels = 2;
    g.n_nn = n_nn;

    std::vector<int> skips(levels, 0);
    int c_prev = 2;
    for (int l = 0; l < levels; ++l) {
        std::string stage = "enc" + std::to_string(l + 1);
        int k = l == 0 ? plan.outer_kernel : plan.inner_kernel;
        conv_block(g, stage + ".conv1", separable, c_prev, plan.channels[l], k);
        skips[l] = conv_block(g, stage + ".conv2", separable, plan.channels[l], plan.channels[l], k);
        g.add({.kind = LayerKind::MaxPool1d, .name = stage + ".pool", .inputs = {-1},
               .in_channels = plan.channels[l], .out_channels = plan.channels[l], .pool = 2});
        c_prev = plan.channels[l];
    }

    conv_block(g, "bott.conv1", separable, c_prev, plan.bottleneck_channels, plan.inner_kernel);
    conv_block(g, "bott.conv2", separable, plan.bottleneck_channels, plan.bottleneck_channels, plan.inner_kernel);
    c_prev = plan.bottleneck_channels;

    for (int l = levels - 1; l >= 0; --l) {
        std::string stage = "dec" + std::to_string(l + 1);
        int ch = plan.channels[l];
        int k = l == 0 ? plan.outer_kernel : plan.inner_kernel;
        int up_out;
        if (separable) {
            up_out = g.add({.kind = LayerKind::RepeatUpsample1d, .name = stage + ".up", .inputs = {-1},
                            .in_channels = c_prev, .out_channels = c_prev, .factor = 2});
        } else {
            g.add({.kind = LayerKind::TransposedConv1d, .name = stage + ".up", .inputs = {-1}, .in_channels = c_prev,
                   .out_channels = ch, .kernel = plan.up_kernel, .stride = 2});
            g.add({.kind = LayerKind::BatchNorm1d, .name = stage + ".up_bn", .inputs = {-1}, .in_channels = ch,
                   .out_channels = ch});
            up_out = g.add({.kind = LayerKind::PReLU, .name = stage + ".up_act", .inputs = {-1}, .in_channels = ch,
                            .out_channels = ch});
            c_prev = ch;
        }
        int cat = g.add({.kind = LayerKind::Concat, .name = stage + ".cat", .inputs = {skips[l], up_out}});
        (void)cat;
        int cat_ch = ch + c_prev;
        conv_block(g, stage + ".conv1", separable, cat_ch, ch, k);
        conv_block(g, stage + ".conv2", separable, ch, ch, k);
        c_prev = ch;
    }

    g.add({.kind = LayerKind::Conv1d, .name = "out.conv", .inputs = {-1}, .in_channels = c_prev, .out_channels = 3,
           .kernel = 1, .bias = true});
    nn::infer_shapes(g);
    return g;
}

bool is_conv_kind(LayerKind k) {
    return k == LayerKind::Conv1d || k == LayerKind::DepthwiseSeparableConv1d;
}

} // namespace

ModelGraph build_unet(int n_nn, const PlanConfig& plan) { return build_curve_model(n_nn, plan, false); }
ModelGraph build_mobile_unet(int n_nn, const PlanConfig& plan) { return build_curve_model(n_nn, plan, true); }

std::vector<std::string> contraction_layers(const ModelGraph& graph) {
    std::vector<std::string> names;
    for (const LayerSpec& s : graph.layers) {
        if (s.name.rfind("enc", 0) == 0 || s.name.rfind("bott", 0) == 0) names.push_back(s.name);
        if (s.name == "bott.conv2_act") break;
    }
    if (names.empty() || names.back() != "bott.conv2_act")
        throw TransferError("graph '" + graph.arch + "' has no contraction path");
    return names;
}

namespace {

TransferResult build_soh_model(const nn::Checkpoint& src, const HeadConfig& head, Rng rng, bool separable,
                               const std::string& arch, int out_channels, bool sigmoid) {
    if ((separable && src.graph.arch != "mobile-unet") || (!separable && src.graph.arch != "unet"))
        throw TransferError("transfer source must be '" + std::string(separable ? "mobile-unet" : "unet") +
                            "', got '" + src.graph.arch + "'");

    std::vector<std::string> frozen = contraction_layers(src.graph);

    TransferResult r;
    r.graph.arch = arch;
    r.graph.input_channels = src.graph.input_channels;
    r.graph.n_nn = src.graph.n_nn;
    int c_prev = 0;
    for (const LayerSpec& s : src.graph.layers) {
        r.graph.layers.push_back(s);
        c_prev = s.out_channels;
        if (s.name == "bott.conv2_act") break;
    }

    int stage = 1;
    for (int ch : head.channels) {
        conv_block(r.graph, "head" + std::to_string(stage) + ".conv", separable, c_prev, ch, head.kernel, head.stride);
        c_prev = ch;
        ++stage;
    }
    r.graph.add({.kind = LayerKind::GlobalAveragePool1d, .name = "head.gap", .inputs = {-1}, .in_channels = c_prev,
                 .out_channels = c_prev});
    r.graph.add({.kind = LayerKind::Conv1d, .name = "out.conv", .inputs = {-1}, .in_channels = c_prev,
                 .out_channels = out_channels, .kernel = 1, .bias = true});
    if (sigmoid)
        r.graph.add({.kind = LayerKind::Sigmoid, .name = "out.sigmoid", .inputs = {-1}, .in_channels = out_channels,
                     .out_channels = out_channels});
    nn::infer_shapes(r.graph);

    r.params = nn::init_params(r.graph, rng);
    for (const std::string& layer : frozen) {
        std::string prefix = layer + ".";
        for (nn::ParamTensor& t : r.params.tensors) {
            if (t.name.rfind(prefix, 0) != 0) continue;
            const nn::ParamTensor* s = src.params.find(t.name);
            if (!s) throw TransferError("source checkpoint lacks tensor '" + t.name + "'");
            if (s->value.size() != t.value.size()) throw TransferError("tensor '" + t.name + "' size mismatch");
            t.value = s->value;
            if (!t.statistic) t.trainable = false;
        }
    }
    r.frozen = std::move(frozen);
    return r;
}

} // namespace

TransferResult build_convnet(const nn::Checkpoint& unet_ckpt, const HeadConfig& head, Rng rng) {
    return build_soh_model(unet_ckpt, head, rng, false, "conv-net", 1, true);
}

TransferResult build_mobilenet(const nn::Checkpoint& mobile_unet_ckpt, const HeadConfig& head, Rng rng) {
    return build_soh_model(mobile_unet_ckpt, head, rng, true, "mobile-net", 1, true);
}

TransferResult build_feature_head(const nn::Checkpoint& source_ckpt, int n_features, const HeadConfig& head, Rng rng) {
    if (n_features < 1) throw ConfigError("feature head needs >= 1 outputs");
    bool separable = source_ckpt.graph.arch == "mobile-unet";
    return build_soh_model(source_ckpt, head, rng, separable,
                           separable ? "mobile-feature-net" : "feature-net", n_features, false);
}

void apply_fine_tune_selection(const ModelGraph& graph, nn::ParamStore& params,
                               const std::vector<std::string>& trainable_layers) {
    for (const std::string& name : trainable_layers)
        if (graph.index_of(name) < 0) throw TransferError("fine-tune selection: unknown layer '" + name + "'");
    for (std::size_t i = 0; i < graph.layers.size(); ++i) {
        bool on = std::find(trainable_layers.begin(), trainable_layers.end(), graph.layers[i].name) !=
                  trainable_layers.end();
        auto [b, e] = params.node_range[i];
        for (int t = b; t < e; ++t)
            if (!params.tensors[t].statistic) params.tensors[t].trainable = on;
    }
}

GraphSplit split_after(const ModelGraph& graph, const nn::ParamStore& params, const std::string& boundary_layer) {
    int b = graph.index_of(boundary_layer);
    if (b < 0) throw TransferError("split_after: no layer named '" + boundary_layer + "'");
    std::vector<nn::Shape> shapes = nn::infer_shapes(graph);

    GraphSplit s;
    s.prefix_nodes = b + 1;
    s.prefix.arch = graph.arch;
    s.prefix.input_channels = graph.input_channels;
    s.prefix.n_nn = graph.n_nn;
    for (int i = 0; i <= b; ++i) s.prefix.layers.push_back(graph.layers[i]);

    s.suffix.arch = graph.arch;
    s.suffix.input_channels = shapes[b + 1].channels;
    s.suffix.n_nn = shapes[b + 1].length;
    for (std::size_t i = static_cast<std::size_t>(b) + 1; i < graph.layers.size(); ++i) {
        LayerSpec l = graph.layers[i];
        for (int& in : l.inputs) {
            in -= b + 1;
            if (in < 0) throw TransferError("split_after: suffix layer '" + l.name + "' reaches across the boundary");
        }
        s.suffix.layers.push_back(std::move(l));
    }

    for (int i = 0; i < static_cast<int>(graph.layers.size()); ++i) {
        auto [pb, pe] = params.node_range[i];
        nn::ParamStore& dst = i <= b ? s.prefix_params : s.suffix_params;
        int begin = static_cast<int>(dst.tensors.size());
        for (int t = pb; t < pe; ++t) dst.tensors.push_back(params.tensors[t]);
        dst.node_range.emplace_back(begin, static_cast<int>(dst.tensors.size()));
    }
    return s;
}

void merge_suffix_params(nn::ParamStore& full, const nn::ParamStore& suffix_trained, int prefix_nodes) {
    int offset = full.node_range[prefix_nodes].first;
    for (std::size_t t = 0; t < suffix_trained.tensors.size(); ++t) {
        nn::ParamTensor& dst = full.tensors[offset + t];
        const nn::ParamTensor& src = suffix_trained.tensors[t];
        if (dst.name != src.name) throw TransferError("merge_suffix_params: tensor order mismatch at '" + src.name + "'");
        dst = src;
    }
}

std::vector<std::string> fine_tune_preset(const ModelGraph& graph) {
    std::vector<std::string> enc_convs, dec_convs;
    for (const LayerSpec& s : graph.layers) {
        if (!is_conv_kind(s.kind)) continue;
        bool contraction = s.name.rfind("enc", 0) == 0 || s.name.rfind("bott", 0) == 0;
        if (contraction)
            enc_convs.push_back(s.name);
        else
            dec_convs.push_back(s.name); // decoder, head and output convolutions in graph order
    }

    std::vector<std::string> sel;
    for (std::size_t i = 0; i < std::min<std::size_t>(4, enc_convs.size()); ++i) sel.push_back(enc_convs[i]);

    bool curve_model = graph.arch == "unet" || graph.arch == "mobile-unet";
    std::size_t n_tail = curve_model ? 5 : 2;
    std::size_t start = dec_convs.size() > n_tail ? dec_convs.size() - n_tail : 0;
    for (std::size_t i = start; i < dec_convs.size(); ++i) sel.push_back(dec_convs[i]);

    if (curve_model) {
        // the upsampling step feeding the earliest fine-tuned decoder conv
        const std::string& first_tail = dec_convs[start];
        std::string stage = first_tail.substr(0, first_tail.find('.'));
        int up_idx = graph.index_of(stage + ".up");
        if (up_idx >= 0 && graph.layers[up_idx].kind == LayerKind::TransposedConv1d)
            sel.push_back(stage + ".up");
    }
    return sel;
}

} // namespace vicnet
