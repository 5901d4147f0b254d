#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "vicnet/nn/graph.hpp"
#include "vicnet/rng.hpp"

namespace vicnet::nn {

struct ParamTensor {
    std::string name;                // "<layer>.<param>", e.g. "enc1.conv1.kernel"
    std::vector<std::size_t> shape;
    std::vector<double> value;
    bool trainable = true;
    bool statistic = false;          // batch-norm moving mean/variance

    std::size_t size() const { return value.size(); }
};

// All parameters of one graph, grouped per node in node order.
struct ParamStore {
    std::vector<ParamTensor> tensors;
    std::vector<std::pair<int, int>> node_range; // per node: [begin, end) into tensors

    ParamTensor& get(const std::string& name);
    const ParamTensor& get(const std::string& name) const;
    ParamTensor* find(const std::string& name);
    const ParamTensor* find(const std::string& name) const;

    long long count_total() const;
    long long count_trainable() const;
    long long count_fixed() const;

    // Set the trainable flag on every non-statistic tensor of the named layers.
    void set_trainable(const std::vector<std::string>& layer_names, bool trainable);
    void set_all_trainable(bool trainable);
};

// He-normal kernels, zero biases, batch-norm gamma 1 / beta 0 / mean 0 / var 1,
// PReLU leakage 0.25. Consumes the rng in fixed layer order.
ParamStore init_params(const ModelGraph& graph, Rng rng);

// Gradients aligned 1:1 with ParamStore::tensors.
struct GradStore {
    std::vector<std::vector<double>> grads;

    static GradStore zeros_like(const ParamStore& store);
    void accumulate(const GradStore& other);
    void scale(double s);
};

} // namespace vicnet::nn
