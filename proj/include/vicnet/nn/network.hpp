#pragma once

#include <vector>

#include "vicnet/nn/graph.hpp"
#include "vicnet/nn/params.hpp"
#include "vicnet/tensor.hpp"

namespace vicnet::nn {

enum class Mode { train, eval };

// Everything backward needs from the matching forward pass.
struct ForwardCache {
    bool valid = false;
    Mode mode = Mode::eval;
    std::vector<Tensor3> values;              // values[0] = input, values[i+1] = node i output
    std::vector<std::vector<double>> bn_mean; // per node, per channel (batch stats actually used)
    std::vector<std::vector<double>> bn_inv_std;
    std::vector<bool> bn_used_batch_stats;    // frozen BN layers run on moving stats even in train mode
    std::vector<std::vector<int>> pool_argmax;
};

// Runs the graph. In train mode batch norm uses mini-batch statistics and
// updates the moving statistics in `params` (unless the layer is frozen).
// Pass a cache to enable a subsequent backward().
Tensor3 forward(const ModelGraph& graph, ParamStore& params, const Tensor3& input, Mode mode,
                ForwardCache* cache = nullptr);

// Gradients for every trainable parameter given d(loss)/d(output). Frozen
// parameters get zero gradients and the sweep stops below the earliest
// trainable layer. Consumes the cache (marks it invalid).
GradStore backward(const ModelGraph& graph, const ParamStore& params, ForwardCache& cache,
                   const Tensor3& output_grad);

// Elementwise mean squared error over batch*channels*length, plus its input gradient.
double mse_loss(const Tensor3& pred, const Tensor3& target, Tensor3* grad = nullptr);

} // namespace vicnet::nn
