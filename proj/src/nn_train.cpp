#include "vicnet/nn/train.hpp"

#include <cstdio>
#include <limits>
#include <numeric>

namespace vicnet::nn {

namespace {

Tensor3 gather(const Tensor3& src, const std::vector<std::size_t>& idx, std::size_t begin, std::size_t end) {
    Tensor3 out(end - begin, src.channels, src.length);
    std::size_t row = src.channels * src.length;
    for (std::size_t i = begin; i < end; ++i)
        std::copy(src.data.begin() + idx[i] * row, src.data.begin() + (idx[i] + 1) * row,
                  out.data.begin() + (i - begin) * row);
    return out;
}

} // namespace

TrainResult train(const ModelGraph& graph, ParamStore params, const TensorDataset& train_set,
                  const TensorDataset& val_set, const TrainConfig& cfg) {
    if (train_set.size() == 0 || val_set.size() == 0) throw DataError("train: empty training or validation set");
    if (cfg.batch_size < 1 || cfg.patience < 1) throw ConfigError("train: batch_size and patience must be >= 1");

    Rng rng(cfg.seed);
    AdamState adam = AdamState::zeros_like(params);

    TrainResult result;
    result.params = params;

    double best_val = std::numeric_limits<double>::infinity();
    int bad_epochs = 0;

    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        Rng shuffle_rng = rng.fork("shuffle", static_cast<std::uint64_t>(epoch));
        shuffle_rng.shuffle(order);

        double loss_sum = 0.0;
        std::size_t n_seen = 0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            Tensor3 xb = gather(train_set.x, order, start, stop);
            Tensor3 yb = gather(train_set.y, order, start, stop);

            ForwardCache cache;
            Tensor3 pred = forward(graph, params, xb, Mode::train, &cache);
            Tensor3 lgrad;
            double loss = mse_loss(pred, yb, &lgrad);
            GradStore grads = backward(graph, params, cache, lgrad);
            adam_step(params, grads, adam, cfg.adam);

            loss_sum += loss * static_cast<double>(stop - start);
            n_seen += stop - start;
        }
        result.train_loss.push_back(loss_sum / static_cast<double>(n_seen));

        Tensor3 val_pred = predict(graph, params, val_set.x, cfg.batch_size);
        double val = mse_loss(val_pred, val_set.y);
        result.val_loss.push_back(val);
        result.epochs_run = epoch + 1;

        if (cfg.verbose)
            std::fprintf(stderr, "epoch %3d  train %.6f  val %.6f%s\n", epoch + 1, result.train_loss.back(), val,
                         val < best_val ? " *" : "");

        if (val < best_val) {
            best_val = val;
            result.best_epoch = epoch;
            result.params = params;
            bad_epochs = 0;
        } else {
            bad_epochs += 1;
            if (bad_epochs >= cfg.patience) break;
        }
    }
    return result;
}

Tensor3 predict(const ModelGraph& graph, ParamStore& params, const Tensor3& x, int batch_size) {
    Shape out_shape = output_shape(graph);
    Tensor3 out(x.batch, out_shape.channels, out_shape.length);
    std::size_t row_in = x.channels * x.length;
    std::size_t row_out = out.channels * out.length;
    for (std::size_t start = 0; start < x.batch; start += static_cast<std::size_t>(batch_size)) {
        std::size_t stop = std::min(x.batch, start + static_cast<std::size_t>(batch_size));
        Tensor3 xb(stop - start, x.channels, x.length);
        std::copy(x.data.begin() + start * row_in, x.data.begin() + stop * row_in, xb.data.begin());
        Tensor3 yb = forward(graph, params, xb, Mode::eval);
        std::copy(yb.data.begin(), yb.data.end(), out.data.begin() + start * row_out);
    }
    return out;
}

} // namespace vicnet::nn
