#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "vicnet/errors.hpp"

namespace vicnet::nn {

enum class LayerKind {
    Conv1d,
    DepthwiseSeparableConv1d,
    TransposedConv1d,
    RepeatUpsample1d,
    MaxPool1d,
    BatchNorm1d,
    PReLU,
    Concat,
    GlobalAveragePool1d,
    Sigmoid,
};

std::string to_string(LayerKind kind);
LayerKind layer_kind_from_string(const std::string& s);

// One node of the layer graph. `inputs` holds value ids: value 0 is the graph
// input, value i+1 is the output of node i. Nodes are stored in topological
// order, so every input id is smaller than the node's own value id.
struct LayerSpec {
    LayerKind kind = LayerKind::Conv1d;
    std::string name;
    std::vector<int> inputs{-1}; // -1 means "previous value" and is resolved at build time
    int in_channels = 0;
    int out_channels = 0;
    int kernel = 0;
    int stride = 1;
    int pool = 0;
    int factor = 0;
    bool bias = false;
};

struct Shape {
    int channels = 0;
    int length = 0;
    bool operator==(const Shape&) const = default;
};

struct ModelGraph {
    std::string arch;      // preset id: unet, mobile-unet, conv-net, mobile-net, or custom
    int input_channels = 2;
    int n_nn = 0;          // declared input length
    std::vector<LayerSpec> layers;

    // Append a node whose unresolved inputs (-1) become the current last value.
    int add(LayerSpec spec);
    int value_of(const std::string& layer_name) const; // value id of a named node, -1 if absent
    int index_of(const std::string& layer_name) const; // node index, -1 if absent
};

// Deterministic shape propagation; throws ShapeError naming the offending layer.
// Returns one shape per value (input + one per node).
std::vector<Shape> infer_shapes(const ModelGraph& graph);

inline Shape output_shape(const ModelGraph& graph) { return infer_shapes(graph).back(); }

struct CountReport {
    long long total = 0;
    long long trainable = 0;
    long long fixed = 0;
    long long flops = 0; // one forward pass at batch 1; multiply and add counted separately
};

// Parameter and FLOP accounting from the spec graph alone (He-style layouts,
// batch-norm moving statistics counted as fixed). `frozen` marks layer names
// whose trainable parameters should be counted as fixed instead.
CountReport count_params_and_flops(const ModelGraph& graph, const std::vector<std::string>& frozen = {});

nlohmann::json graph_to_json(const ModelGraph& graph);
ModelGraph graph_from_json(const nlohmann::json& j);

} // namespace vicnet::nn
