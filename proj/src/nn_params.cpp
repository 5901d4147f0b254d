#include "vicnet/nn/params.hpp"

#include <cmath>

namespace vicnet::nn {

ParamTensor& ParamStore::get(const std::string& name) {
    ParamTensor* p = find(name);
    if (!p) throw StateError("no parameter tensor named '" + name + "'");
    return *p;
}

const ParamTensor& ParamStore::get(const std::string& name) const {
    const ParamTensor* p = find(name);
    if (!p) throw StateError("no parameter tensor named '" + name + "'");
    return *p;
}

ParamTensor* ParamStore::find(const std::string& name) {
    for (ParamTensor& t : tensors)
        if (t.name == name) return &t;
    return nullptr;
}

const ParamTensor* ParamStore::find(const std::string& name) const {
    for (const ParamTensor& t : tensors)
        if (t.name == name) return &t;
    return nullptr;
}

long long ParamStore::count_total() const {
    long long n = 0;
    for (const ParamTensor& t : tensors) n += static_cast<long long>(t.size());
    return n;
}

long long ParamStore::count_trainable() const {
    long long n = 0;
    for (const ParamTensor& t : tensors)
        if (t.trainable) n += static_cast<long long>(t.size());
    return n;
}

long long ParamStore::count_fixed() const {
    long long n = 0;
    for (const ParamTensor& t : tensors)
        if (!t.trainable) n += static_cast<long long>(t.size());
    return n;
}

void ParamStore::set_trainable(const std::vector<std::string>& layer_names, bool trainable) {
    for (const std::string& layer : layer_names) {
        bool hit = false;
        std::string prefix = layer + ".";
        for (ParamTensor& t : tensors) {
            if (t.name.rfind(prefix, 0) == 0) {
                hit = true;
                if (!t.statistic) t.trainable = trainable;
            }
        }
        if (!hit) throw TransferError("no layer named '" + layer + "' in parameter store");
    }
}

void ParamStore::set_all_trainable(bool trainable) {
    for (ParamTensor& t : tensors)
        if (!t.statistic) t.trainable = trainable;
}

namespace {

ParamTensor he_normal(const std::string& name, std::vector<std::size_t> shape, std::size_t fan_in, Rng& rng) {
    ParamTensor t;
    t.name = name;
    t.shape = std::move(shape);
    std::size_t n = 1;
    for (std::size_t d : t.shape) n *= d;
    t.value.resize(n);
    double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (double& v : t.value) v = rng.normal(0.0, stddev);
    return t;
}

ParamTensor constant(const std::string& name, std::vector<std::size_t> shape, double fill, bool statistic = false) {
    ParamTensor t;
    t.name = name;
    t.shape = std::move(shape);
    std::size_t n = 1;
    for (std::size_t d : t.shape) n *= d;
    t.value.assign(n, fill);
    t.statistic = statistic;
    t.trainable = !statistic;
    return t;
}

} // namespace

ParamStore init_params(const ModelGraph& graph, Rng rng) {
    infer_shapes(graph); // validate before allocating
    ParamStore store;
    for (const LayerSpec& s : graph.layers) {
        int begin = static_cast<int>(store.tensors.size());
        std::size_t ci = static_cast<std::size_t>(s.in_channels);
        std::size_t co = static_cast<std::size_t>(s.out_channels);
        std::size_t k = static_cast<std::size_t>(s.kernel);
        switch (s.kind) {
        case LayerKind::Conv1d:
            store.tensors.push_back(he_normal(s.name + ".kernel", {co, ci, k}, ci * k, rng));
            if (s.bias) store.tensors.push_back(constant(s.name + ".bias", {co}, 0.0));
            break;
        case LayerKind::DepthwiseSeparableConv1d:
            store.tensors.push_back(he_normal(s.name + ".depthwise", {ci, k}, k, rng));
            if (s.bias) store.tensors.push_back(constant(s.name + ".dw_bias", {ci}, 0.0));
            store.tensors.push_back(he_normal(s.name + ".pointwise", {co, ci}, ci, rng));
            if (s.bias) store.tensors.push_back(constant(s.name + ".pw_bias", {co}, 0.0));
            break;
        case LayerKind::TransposedConv1d:
            store.tensors.push_back(he_normal(s.name + ".kernel", {ci, co, k}, ci * k, rng));
            if (s.bias) store.tensors.push_back(constant(s.name + ".bias", {co}, 0.0));
            break;
        case LayerKind::BatchNorm1d:
            store.tensors.push_back(constant(s.name + ".gamma", {ci}, 1.0));
            store.tensors.push_back(constant(s.name + ".beta", {ci}, 0.0));
            store.tensors.push_back(constant(s.name + ".moving_mean", {ci}, 0.0, true));
            store.tensors.push_back(constant(s.name + ".moving_var", {ci}, 1.0, true));
            break;
        case LayerKind::PReLU:
            store.tensors.push_back(constant(s.name + ".alpha", {ci}, 0.25));
            break;
        default:
            break;
        }
        store.node_range.emplace_back(begin, static_cast<int>(store.tensors.size()));
    }
    return store;
}

GradStore GradStore::zeros_like(const ParamStore& store) {
    GradStore g;
    g.grads.reserve(store.tensors.size());
    for (const ParamTensor& t : store.tensors) g.grads.emplace_back(t.size(), 0.0);
    return g;
}

void GradStore::accumulate(const GradStore& other) {
    for (std::size_t i = 0; i < grads.size(); ++i)
        for (std::size_t j = 0; j < grads[i].size(); ++j) grads[i][j] += other.grads[i][j];
}

void GradStore::scale(double s) {
    for (auto& g : grads)
        for (double& v : g) v *= s;
}

} // namespace vicnet::nn
