#include "vicnet/nn/graph.hpp"

#include <array>

namespace vicnet::nn {

namespace {

const std::array<std::pair<LayerKind, const char*>, 10> kKindNames = {{
    {LayerKind::Conv1d, "conv1d"},
    {LayerKind::DepthwiseSeparableConv1d, "ds_conv1d"},
    {LayerKind::TransposedConv1d, "tconv1d"},
    {LayerKind::RepeatUpsample1d, "upsample1d"},
    {LayerKind::MaxPool1d, "maxpool1d"},
    {LayerKind::BatchNorm1d, "batchnorm1d"},
    {LayerKind::PReLU, "prelu"},
    {LayerKind::Concat, "concat"},
    {LayerKind::GlobalAveragePool1d, "gap1d"},
    {LayerKind::Sigmoid, "sigmoid"},
}};

[[noreturn]] void shape_fail(const LayerSpec& spec, const std::string& why) {
    throw ShapeError("layer '" + spec.name + "' (" + to_string(spec.kind) + "): " + why);
}

} // namespace

std::string to_string(LayerKind kind) {
    for (const auto& [k, n] : kKindNames)
        if (k == kind) return n;
    return "?";
}

LayerKind layer_kind_from_string(const std::string& s) {
    for (const auto& [k, n] : kKindNames)
        if (s == n) return k;
    throw ConfigError("unknown layer kind '" + s + "'");
}

int ModelGraph::add(LayerSpec spec) {
    int prev = static_cast<int>(layers.size()); // value id of the latest value
    for (int& in : spec.inputs)
        if (in < 0) in = prev;
    layers.push_back(std::move(spec));
    return static_cast<int>(layers.size()); // value id of the new node's output
}

int ModelGraph::value_of(const std::string& layer_name) const {
    int idx = index_of(layer_name);
    return idx < 0 ? -1 : idx + 1;
}

int ModelGraph::index_of(const std::string& layer_name) const {
    for (std::size_t i = 0; i < layers.size(); ++i)
        if (layers[i].name == layer_name) return static_cast<int>(i);
    return -1;
}

std::vector<Shape> infer_shapes(const ModelGraph& graph) {
    std::vector<Shape> shapes;
    shapes.reserve(graph.layers.size() + 1);
    shapes.push_back({graph.input_channels, graph.n_nn});

    for (std::size_t i = 0; i < graph.layers.size(); ++i) {
        const LayerSpec& spec = graph.layers[i];
        if (spec.inputs.empty()) shape_fail(spec, "no inputs");
        for (int in : spec.inputs)
            if (in < 0 || in > static_cast<int>(i)) shape_fail(spec, "input value id " + std::to_string(in) + " out of range");

        const Shape& a = shapes[spec.inputs[0]];
        Shape out;
        switch (spec.kind) {
        case LayerKind::Conv1d:
            if (a.channels != spec.in_channels)
                shape_fail(spec, "expected " + std::to_string(spec.in_channels) + " input channels, got " + std::to_string(a.channels));
            if (spec.kernel < 1 || spec.stride < 1) shape_fail(spec, "kernel and stride must be >= 1");
            out = {spec.out_channels, (a.length + spec.stride - 1) / spec.stride}; // "same" padding
            break;
        case LayerKind::DepthwiseSeparableConv1d:
            if (a.channels != spec.in_channels)
                shape_fail(spec, "depthwise kernel count " + std::to_string(spec.in_channels) + " != input channels " + std::to_string(a.channels));
            if (spec.kernel < 1 || spec.stride < 1) shape_fail(spec, "kernel and stride must be >= 1");
            out = {spec.out_channels, (a.length + spec.stride - 1) / spec.stride};
            break;
        case LayerKind::TransposedConv1d:
            if (a.channels != spec.in_channels) shape_fail(spec, "input channel mismatch");
            if (spec.stride < 1 || spec.kernel < spec.stride) shape_fail(spec, "requires kernel >= stride >= 1");
            out = {spec.out_channels, a.length * spec.stride};
            break;
        case LayerKind::RepeatUpsample1d:
            if (spec.factor < 1) shape_fail(spec, "factor must be >= 1");
            out = {a.channels, a.length * spec.factor};
            break;
        case LayerKind::MaxPool1d:
            if (spec.pool < 1) shape_fail(spec, "pool must be >= 1");
            if (a.length % spec.pool != 0)
                shape_fail(spec, "length " + std::to_string(a.length) + " not divisible by pool " + std::to_string(spec.pool));
            out = {a.channels, a.length / spec.pool};
            break;
        case LayerKind::BatchNorm1d:
        case LayerKind::PReLU:
            if (a.channels != spec.in_channels) shape_fail(spec, "channel mismatch");
            out = a;
            break;
        case LayerKind::Concat: {
            if (spec.inputs.size() < 2) shape_fail(spec, "needs at least two inputs");
            int ch = 0;
            for (int in : spec.inputs) {
                const Shape& s = shapes[in];
                if (s.length != a.length) shape_fail(spec, "concat inputs have unequal lengths");
                ch += s.channels;
            }
            out = {ch, a.length};
            break;
        }
        case LayerKind::GlobalAveragePool1d:
            out = {a.channels, 1};
            break;
        case LayerKind::Sigmoid:
            out = a;
            break;
        }
        if (out.channels < 1 || out.length < 1) shape_fail(spec, "degenerate output shape");
        shapes.push_back(out);
    }
    return shapes;
}

namespace {

struct ParamCount {
    long long weights = 0; // trainable unless layer frozen
    long long stats = 0;   // always fixed
};

ParamCount layer_param_count(const LayerSpec& s) {
    ParamCount c;
    switch (s.kind) {
    case LayerKind::Conv1d:
        c.weights = static_cast<long long>(s.out_channels) * s.in_channels * s.kernel + (s.bias ? s.out_channels : 0);
        break;
    case LayerKind::DepthwiseSeparableConv1d:
        c.weights = static_cast<long long>(s.in_channels) * s.kernel + static_cast<long long>(s.out_channels) * s.in_channels +
                    (s.bias ? s.in_channels + s.out_channels : 0);
        break;
    case LayerKind::TransposedConv1d:
        c.weights = static_cast<long long>(s.in_channels) * s.out_channels * s.kernel + (s.bias ? s.out_channels : 0);
        break;
    case LayerKind::BatchNorm1d:
        c.weights = 2LL * s.in_channels; // gamma, beta
        c.stats = 2LL * s.in_channels;   // moving mean, moving variance
        break;
    case LayerKind::PReLU:
        c.weights = s.in_channels;
        break;
    default:
        break;
    }
    return c;
}

// FLOP convention: multiply-accumulate = 2 FLOPs; batch norm 2/element (fused
// scale+shift), PReLU 1/element, max pooling `pool` comparisons/element,
// global average pool length+1 per channel, sigmoid 4/element. Absolute
// numbers depend on this convention; only ratios are meaningful.
long long layer_flops(const LayerSpec& s, const Shape& in, const Shape& out) {
    long long L_out = out.length;
    switch (s.kind) {
    case LayerKind::Conv1d:
        return 2LL * L_out * s.out_channels * s.in_channels * s.kernel + (s.bias ? L_out * s.out_channels : 0);
    case LayerKind::DepthwiseSeparableConv1d:
        return 2LL * L_out * s.in_channels * s.kernel + 2LL * L_out * s.out_channels * s.in_channels +
               (s.bias ? L_out * (s.in_channels + s.out_channels) : 0);
    case LayerKind::TransposedConv1d:
        return 2LL * in.length * s.in_channels * s.out_channels * s.kernel + (s.bias ? L_out * s.out_channels : 0);
    case LayerKind::RepeatUpsample1d:
        return 0;
    case LayerKind::MaxPool1d:
        return static_cast<long long>(L_out) * out.channels * s.pool;
    case LayerKind::BatchNorm1d:
        return 2LL * L_out * out.channels;
    case LayerKind::PReLU:
        return static_cast<long long>(L_out) * out.channels;
    case LayerKind::Concat:
        return 0;
    case LayerKind::GlobalAveragePool1d:
        return static_cast<long long>(in.channels) * (in.length + 1);
    case LayerKind::Sigmoid:
        return 4LL * L_out * out.channels;
    }
    return 0;
}

} // namespace

CountReport count_params_and_flops(const ModelGraph& graph, const std::vector<std::string>& frozen) {
    std::vector<Shape> shapes = infer_shapes(graph);
    CountReport r;
    for (std::size_t i = 0; i < graph.layers.size(); ++i) {
        const LayerSpec& s = graph.layers[i];
        ParamCount c = layer_param_count(s);
        bool is_frozen = false;
        for (const std::string& f : frozen)
            if (f == s.name) is_frozen = true;
        r.total += c.weights + c.stats;
        if (is_frozen)
            r.fixed += c.weights + c.stats;
        else {
            r.trainable += c.weights;
            r.fixed += c.stats;
        }
        r.flops += layer_flops(s, shapes[s.inputs[0]], shapes[i + 1]);
    }
    return r;
}

nlohmann::json graph_to_json(const ModelGraph& graph) {
    nlohmann::json j;
    j["arch"] = graph.arch;
    j["input_channels"] = graph.input_channels;
    j["n_nn"] = graph.n_nn;
    nlohmann::json layers = nlohmann::json::array();
    for (const LayerSpec& s : graph.layers) {
        nlohmann::json l;
        l["kind"] = to_string(s.kind);
        l["name"] = s.name;
        l["inputs"] = s.inputs;
        l["in_channels"] = s.in_channels;
        l["out_channels"] = s.out_channels;
        l["kernel"] = s.kernel;
        l["stride"] = s.stride;
        l["pool"] = s.pool;
        l["factor"] = s.factor;
        l["bias"] = s.bias;
        layers.push_back(std::move(l));
    }
    j["layers"] = std::move(layers);
    return j;
}

ModelGraph graph_from_json(const nlohmann::json& j) {
    ModelGraph g;
    g.arch = j.at("arch").get<std::string>();
    g.input_channels = j.at("input_channels").get<int>();
    g.n_nn = j.at("n_nn").get<int>();
    for (const auto& l : j.at("layers")) {
        LayerSpec s;
        s.kind = layer_kind_from_string(l.at("kind").get<std::string>());
        s.name = l.at("name").get<std::string>();
        s.inputs = l.at("inputs").get<std::vector<int>>();
        s.in_channels = l.at("in_channels").get<int>();
        s.out_channels = l.at("out_channels").get<int>();
        s.kernel = l.at("kernel").get<int>();
        s.stride = l.at("stride").get<int>();
        s.pool = l.at("pool").get<int>();
        s.factor = l.at("factor").get<int>();
        s.bias = l.at("bias").get<bool>();
        g.layers.push_back(std::move(s));
    }
    infer_shapes(g); // validate
    return g;
}

} // namespace vicnet::nn
