#pragma once

#include <cstdint>
#include <vector>

#include "vicnet/nn/adam.hpp"
#include "vicnet/nn/network.hpp"

namespace vicnet::nn {

struct TrainConfig {
    int batch_size = 64;
    int patience = 30;   // early-stopping threshold on consecutive non-improving epochs
    int max_epochs = 200;
    AdamConfig adam;
    std::uint64_t seed = 0;
    bool verbose = false;
};

// Paired inputs/targets with batch = number of samples.
struct TensorDataset {
    Tensor3 x;
    Tensor3 y;

    std::size_t size() const { return x.batch; }
};

struct TrainResult {
    ParamStore params;              // parameters from the best validation epoch
    std::vector<double> train_loss; // per epoch, MSE
    std::vector<double> val_loss;
    int best_epoch = -1;            // 0-based
    int epochs_run = 0;
};

// Mini-batch MSE training with Adam and early stopping. Stops when the
// validation loss has not decreased for `patience` consecutive epochs or
// max_epochs is reached. Deterministic for a fixed seed and data.
TrainResult train(const ModelGraph& graph, ParamStore params, const TensorDataset& train_set,
                  const TensorDataset& val_set, const TrainConfig& cfg);

// Eval-mode forward over a whole dataset in batches; returns predictions.
Tensor3 predict(const ModelGraph& graph, ParamStore& params, const Tensor3& x, int batch_size = 64);

} // namespace vicnet::nn
