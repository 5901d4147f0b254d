#pragma once

#include <string>
#include <vector>

#include "vicnet/nn/checkpoint.hpp"

namespace vicnet {

// Level plan shared by all four architectures: encoder stages with two
// convolutions each, pooling by 2 between stages, mirrored decoder. Kernel
// sizes are larger in the first encoder stage and the last decoder stage.
struct PlanConfig {
    std::vector<int> channels = {16, 32, 64}; // per encoder level
    int bottleneck_channels = 128;
    int outer_kernel = 7; // first encoder stage and last decoder stage
    int inner_kernel = 3;
    int up_kernel = 2; // transposed-conv kernel (= stride)
};

// Curve models: 2 x n_nn input, 3 x n_nn output, no output activation.
nn::ModelGraph build_unet(int n_nn, const PlanConfig& plan = {});
nn::ModelGraph build_mobile_unet(int n_nn, const PlanConfig& plan = {});

// Layer names of the contraction path (encoder stages + bottleneck), in order.
std::vector<std::string> contraction_layers(const nn::ModelGraph& graph);

struct HeadConfig {
    std::vector<int> channels = {64, 32}; // strided stages after the bottleneck
    int kernel = 3;
    int stride = 2;
};

// SOH models: contraction path copied from a trained curve model and frozen,
// plus a strided regression head ending in global average pooling, a 1x1
// convolution and a sigmoid. Returns the graph and the surgically built
// parameter store (copied weights frozen, head freshly initialized).
struct TransferResult {
    nn::ModelGraph graph;
    nn::ParamStore params;
    std::vector<std::string> frozen; // layer names counted as fixed
};

TransferResult build_convnet(const nn::Checkpoint& unet_ckpt, const HeadConfig& head, Rng rng);
TransferResult build_mobilenet(const nn::Checkpoint& mobile_unet_ckpt, const HeadConfig& head, Rng rng);

// Same surgery with n_features linear outputs instead of the sigmoid scalar.
TransferResult build_feature_head(const nn::Checkpoint& source_ckpt, int n_features, const HeadConfig& head, Rng rng);

// Mark exactly the named layers trainable and everything else frozen.
// Unknown names raise TransferError.
void apply_fine_tune_selection(const nn::ModelGraph& graph, nn::ParamStore& params,
                               const std::vector<std::string>& trainable_layers);

// The demonstration fine-tuning recipe: first four convolutions of the
// contraction path, plus the last five convolutions and the upsampling step
// that feeds them in the expansion path (curve models), or the last two
// convolutions (SOH models).
std::vector<std::string> fine_tune_preset(const nn::ModelGraph& graph);

// Split a graph after the named layer into an encoder prefix and a head
// suffix (the suffix must not skip back across the boundary). When the prefix
// is entirely frozen its activations are sample-independent, so a head can be
// trained on cached prefix outputs with bit-identical results.
struct GraphSplit {
    nn::ModelGraph prefix, suffix;
    nn::ParamStore prefix_params, suffix_params;
    int prefix_nodes = 0;
};
GraphSplit split_after(const nn::ModelGraph& graph, const nn::ParamStore& params, const std::string& boundary_layer);
void merge_suffix_params(nn::ParamStore& full, const nn::ParamStore& suffix_trained, int prefix_nodes);

} // namespace vicnet
