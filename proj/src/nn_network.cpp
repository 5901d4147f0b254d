#include "vicnet/nn/network.hpp"

#include <algorithm>
#include <cmath>

namespace vicnet::nn {

namespace {

constexpr double kBnMomentum = 0.99; // moving = m*moving + (1-m)*batch
constexpr double kBnEpsilon = 1e-3;

// restrict-qualified kernels so the compiler can vectorize; tensors never alias
inline void axpy(int n, double a, const double* __restrict x, double* __restrict y) {
    for (int i = 0; i < n; ++i) y[i] += a * x[i];
}

// four partial sums: vectorizable while keeping a fixed summation order
inline double dot(int n, const double* __restrict x, const double* __restrict y) {
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    int i = 0;
    for (; i + 4 <= n; i += 4) {
        s0 += x[i] * y[i];
        s1 += x[i + 1] * y[i + 1];
        s2 += x[i + 2] * y[i + 2];
        s3 += x[i + 3] * y[i + 3];
    }
    double s = (s0 + s1) + (s2 + s3);
    for (; i < n; ++i) s += x[i] * y[i];
    return s;
}

struct Pad {
    int left = 0;
    int total = 0;
};

Pad same_pad(int length, int l_out, int kernel, int stride) {
    Pad p;
    p.total = std::max((l_out - 1) * stride + kernel - length, 0);
    p.left = p.total / 2; // extra padding goes on the right
    return p;
}

// out[co][lo] += sum_ci sum_k w[co][ci][k] * in[ci][lo*stride + k - pad_left]
void conv_rows_forward(const double* in, double* out, const double* w, const double* bias, int c_in, int c_out,
                       int length, int l_out, int kernel, int stride, int pad_left) {
    for (int co = 0; co < c_out; ++co) {
        double* orow = out + static_cast<std::size_t>(co) * l_out;
        double b = bias ? bias[co] : 0.0;
        std::fill(orow, orow + l_out, b);
        for (int ci = 0; ci < c_in; ++ci) {
            const double* irow = in + static_cast<std::size_t>(ci) * length;
            const double* wrow = w + (static_cast<std::size_t>(co) * c_in + ci) * kernel;
            for (int k = 0; k < kernel; ++k) {
                double wv = wrow[k];
                int off = k - pad_left;
                if (stride == 1) {
                    int lo0 = std::max(0, -off);
                    int lo1 = std::min(l_out, length - off);
                    axpy(lo1 - lo0, wv, irow + off + lo0, orow + lo0);
                } else {
                    for (int lo = 0; lo < l_out; ++lo) {
                        int li = lo * stride + off;
                        if (li >= 0 && li < length) orow[lo] += wv * irow[li];
                    }
                }
            }
        }
    }
}

void conv_rows_backward(const double* in, const double* gout, const double* w, double* gin, double* gw, double* gbias,
                        int c_in, int c_out, int length, int l_out, int kernel, int stride, int pad_left) {
    for (int co = 0; co < c_out; ++co) {
        const double* grow = gout + static_cast<std::size_t>(co) * l_out;
        if (gbias) {
            double s = 0.0;
            for (int lo = 0; lo < l_out; ++lo) s += grow[lo];
            gbias[co] += s;
        }
        for (int ci = 0; ci < c_in; ++ci) {
            const double* irow = in + static_cast<std::size_t>(ci) * length;
            double* ginrow = gin ? gin + static_cast<std::size_t>(ci) * length : nullptr;
            const double* wrow = w + (static_cast<std::size_t>(co) * c_in + ci) * kernel;
            double* gwrow = gw ? gw + (static_cast<std::size_t>(co) * c_in + ci) * kernel : nullptr;
            for (int k = 0; k < kernel; ++k) {
                int off = k - pad_left;
                double wv = wrow[k];
                if (stride == 1) {
                    int lo0 = std::max(0, -off);
                    int lo1 = std::min(l_out, length - off);
                    if (gwrow) gwrow[k] += dot(lo1 - lo0, grow + lo0, irow + off + lo0);
                    if (ginrow) axpy(lo1 - lo0, wv, grow + lo0, ginrow + off + lo0);
                } else {
                    for (int lo = 0; lo < l_out; ++lo) {
                        int li = lo * stride + off;
                        if (li < 0 || li >= length) continue;
                        if (gwrow) gwrow[k] += grow[lo] * irow[li];
                        if (ginrow) ginrow[li] += wv * grow[lo];
                    }
                }
            }
        }
    }
}

bool node_has_trainable(const ParamStore& params, int node) {
    auto [b, e] = params.node_range[node];
    for (int t = b; t < e; ++t)
        if (params.tensors[t].trainable) return true;
    return false;
}

} // namespace

Tensor3 forward(const ModelGraph& graph, ParamStore& params, const Tensor3& input, Mode mode, ForwardCache* cache) {
    std::vector<Shape> shapes = infer_shapes(graph);
    if (static_cast<int>(input.channels) != graph.input_channels || static_cast<int>(input.length) != graph.n_nn)
        throw ShapeError("graph input: expected (" + std::to_string(graph.input_channels) + ", " +
                         std::to_string(graph.n_nn) + "), got " + input.shape_str());
    if (params.node_range.size() != graph.layers.size())
        throw StateError("parameter store does not match graph (node count)");

    std::size_t B = input.batch;
    std::vector<Tensor3> values(graph.layers.size() + 1);
    values[0] = input;

    std::vector<std::vector<double>> bn_mean(graph.layers.size()), bn_inv_std(graph.layers.size());
    std::vector<bool> bn_batch(graph.layers.size(), false);
    std::vector<std::vector<int>> pool_argmax(graph.layers.size());

    for (std::size_t i = 0; i < graph.layers.size(); ++i) {
        const LayerSpec& s = graph.layers[i];
        const Tensor3& a = values[s.inputs[0]];
        Shape os = shapes[i + 1];
        Tensor3 out(B, os.channels, os.length);
        auto [pb, pe] = params.node_range[i];

        switch (s.kind) {
        case LayerKind::Conv1d: {
            const ParamTensor& w = params.tensors[pb];
            const double* bias = s.bias ? params.tensors[pb + 1].value.data() : nullptr;
            Pad pad = same_pad(static_cast<int>(a.length), os.length, s.kernel, s.stride);
            for (std::size_t b = 0; b < B; ++b)
                conv_rows_forward(a.row(b, 0), out.row(b, 0), w.value.data(), bias, s.in_channels, s.out_channels,
                                  static_cast<int>(a.length), os.length, s.kernel, s.stride, pad.left);
            break;
        }
        case LayerKind::DepthwiseSeparableConv1d: {
            int t = pb;
            const ParamTensor& dw = params.tensors[t++];
            const double* dw_bias = s.bias ? params.tensors[t++].value.data() : nullptr;
            const ParamTensor& pw = params.tensors[t++];
            const double* pw_bias = s.bias ? params.tensors[t++].value.data() : nullptr;
            Pad pad = same_pad(static_cast<int>(a.length), os.length, s.kernel, s.stride);
            Tensor3 mid(B, s.in_channels, os.length);
            for (std::size_t b = 0; b < B; ++b) {
                // depthwise: per-channel spatial filter
                for (int ci = 0; ci < s.in_channels; ++ci) {
                    const double* irow = a.row(b, ci);
                    double* mrow = mid.row(b, ci);
                    std::fill(mrow, mrow + os.length, dw_bias ? dw_bias[ci] : 0.0);
                    const double* wrow = dw.value.data() + static_cast<std::size_t>(ci) * s.kernel;
                    for (int k = 0; k < s.kernel; ++k) {
                        double wv = wrow[k];
                        int off = k - pad.left;
                        if (s.stride == 1) {
                            int lo0 = std::max(0, -off);
                            int lo1 = std::min(os.length, static_cast<int>(a.length) - off);
                            axpy(lo1 - lo0, wv, irow + off + lo0, mrow + lo0);
                        } else {
                            for (int lo = 0; lo < os.length; ++lo) {
                                int li = lo * s.stride + off;
                                if (li >= 0 && li < static_cast<int>(a.length)) mrow[lo] += wv * irow[li];
                            }
                        }
                    }
                }
                // pointwise: 1x1 channel mix
                for (int co = 0; co < s.out_channels; ++co) {
                    double* orow = out.row(b, co);
                    std::fill(orow, orow + os.length, pw_bias ? pw_bias[co] : 0.0);
                    const double* wrow = pw.value.data() + static_cast<std::size_t>(co) * s.in_channels;
                    for (int ci = 0; ci < s.in_channels; ++ci) axpy(os.length, wrow[ci], mid.row(b, ci), orow);
                }
            }
            // the depthwise intermediate is recomputed in backward rather than cached;
            // it is the cheap stage of the pair
            break;
        }
        case LayerKind::TransposedConv1d: {
            const ParamTensor& w = params.tensors[pb];
            const double* bias = s.bias ? params.tensors[pb + 1].value.data() : nullptr;
            int crop_left = (s.kernel - s.stride) / 2;
            for (std::size_t b = 0; b < B; ++b) {
                for (int co = 0; co < s.out_channels; ++co) {
                    double* orow = out.row(b, co);
                    std::fill(orow, orow + os.length, bias ? bias[co] : 0.0);
                }
                for (int ci = 0; ci < s.in_channels; ++ci) {
                    const double* irow = a.row(b, ci);
                    for (int co = 0; co < s.out_channels; ++co) {
                        double* orow = out.row(b, co);
                        const double* wrow = w.value.data() + (static_cast<std::size_t>(ci) * s.out_channels + co) * s.kernel;
                        for (int k = 0; k < s.kernel; ++k) {
                            double wv = wrow[k];
                            int off = k - crop_left;
                            for (int l = 0; l < static_cast<int>(a.length); ++l) {
                                int p = l * s.stride + off;
                                if (p >= 0 && p < os.length) orow[p] += wv * irow[l];
                            }
                        }
                    }
                }
            }
            break;
        }
        case LayerKind::RepeatUpsample1d: {
            for (std::size_t b = 0; b < B; ++b)
                for (std::size_t c = 0; c < a.channels; ++c) {
                    const double* irow = a.row(b, c);
                    double* orow = out.row(b, c);
                    for (std::size_t l = 0; l < a.length; ++l)
                        for (int j = 0; j < s.factor; ++j) orow[l * s.factor + j] = irow[l];
                }
            break;
        }
        case LayerKind::MaxPool1d: {
            std::vector<int>& amax = pool_argmax[i];
            amax.assign(B * a.channels * os.length, 0);
            std::size_t idx = 0;
            for (std::size_t b = 0; b < B; ++b)
                for (std::size_t c = 0; c < a.channels; ++c) {
                    const double* irow = a.row(b, c);
                    double* orow = out.row(b, c);
                    for (int lo = 0; lo < os.length; ++lo) {
                        int base = lo * s.pool;
                        double best = irow[base];
                        int besti = base;
                        for (int j = 1; j < s.pool; ++j)
                            if (irow[base + j] > best) {
                                best = irow[base + j];
                                besti = base + j;
                            }
                        orow[lo] = best;
                        amax[idx++] = besti;
                    }
                }
            break;
        }
        case LayerKind::BatchNorm1d: {
            const ParamTensor& gamma = params.tensors[pb];
            const ParamTensor& beta = params.tensors[pb + 1];
            ParamTensor& mmean = params.tensors[pb + 2];
            ParamTensor& mvar = params.tensors[pb + 3];
            bool use_batch = (mode == Mode::train) && gamma.trainable; // frozen BN runs on moving stats
            bn_batch[i] = use_batch;
            std::vector<double>& mu = bn_mean[i];
            std::vector<double>& istd = bn_inv_std[i];
            mu.assign(a.channels, 0.0);
            istd.assign(a.channels, 0.0);
            double n = static_cast<double>(B * a.length);
            for (std::size_t c = 0; c < a.channels; ++c) {
                double m, var;
                if (use_batch) {
                    double sum = 0.0;
                    for (std::size_t b = 0; b < B; ++b) {
                        const double* irow = a.row(b, c);
                        for (std::size_t l = 0; l < a.length; ++l) sum += irow[l];
                    }
                    m = sum / n;
                    double sq = 0.0;
                    for (std::size_t b = 0; b < B; ++b) {
                        const double* irow = a.row(b, c);
                        for (std::size_t l = 0; l < a.length; ++l) {
                            double d = irow[l] - m;
                            sq += d * d;
                        }
                    }
                    var = sq / n;
                    mmean.value[c] = kBnMomentum * mmean.value[c] + (1.0 - kBnMomentum) * m;
                    mvar.value[c] = kBnMomentum * mvar.value[c] + (1.0 - kBnMomentum) * var;
                } else {
                    m = mmean.value[c];
                    var = mvar.value[c];
                }
                mu[c] = m;
                istd[c] = 1.0 / std::sqrt(var + kBnEpsilon);
                double scale = gamma.value[c] * istd[c];
                double shift = beta.value[c] - scale * m;
                for (std::size_t b = 0; b < B; ++b) {
                    const double* irow = a.row(b, c);
                    double* orow = out.row(b, c);
                    for (std::size_t l = 0; l < a.length; ++l) orow[l] = scale * irow[l] + shift;
                }
            }
            break;
        }
        case LayerKind::PReLU: {
            const ParamTensor& alpha = params.tensors[pb];
            for (std::size_t b = 0; b < B; ++b)
                for (std::size_t c = 0; c < a.channels; ++c) {
                    double al = alpha.value[c];
                    const double* irow = a.row(b, c);
                    double* orow = out.row(b, c);
                    for (std::size_t l = 0; l < a.length; ++l) {
                        double x = irow[l];
                        orow[l] = x >= 0.0 ? x : al * x;
                    }
                }
            break;
        }
        case LayerKind::Concat: {
            for (std::size_t b = 0; b < B; ++b) {
                std::size_t c_off = 0;
                for (int in_v : s.inputs) {
                    const Tensor3& src = values[in_v];
                    for (std::size_t c = 0; c < src.channels; ++c)
                        std::copy(src.row(b, c), src.row(b, c) + src.length, out.row(b, c_off + c));
                    c_off += src.channels;
                }
            }
            break;
        }
        case LayerKind::GlobalAveragePool1d: {
            for (std::size_t b = 0; b < B; ++b)
                for (std::size_t c = 0; c < a.channels; ++c) {
                    const double* irow = a.row(b, c);
                    double sum = 0.0;
                    for (std::size_t l = 0; l < a.length; ++l) sum += irow[l];
                    out.at(b, c, 0) = sum / static_cast<double>(a.length);
                }
            break;
        }
        case LayerKind::Sigmoid: {
            for (std::size_t j = 0; j < a.size(); ++j) out.data[j] = 1.0 / (1.0 + std::exp(-a.data[j]));
            break;
        }
        }
        values[i + 1] = std::move(out);
    }

    Tensor3 result = values.back();
    require_finite(result, "graph '" + graph.arch + "' output");

    if (cache) {
        cache->valid = true;
        cache->mode = mode;
        cache->values = std::move(values);
        cache->bn_mean = std::move(bn_mean);
        cache->bn_inv_std = std::move(bn_inv_std);
        cache->bn_used_batch_stats = std::move(bn_batch);
        cache->pool_argmax = std::move(pool_argmax);
    }
    return result;
}

GradStore backward(const ModelGraph& graph, const ParamStore& params, ForwardCache& cache, const Tensor3& output_grad) {
    if (!cache.valid) throw StateError("backward called without a valid forward cache");
    if (cache.mode != Mode::train) throw StateError("backward requires a train-mode forward");
    cache.valid = false;

    GradStore grads = GradStore::zeros_like(params);

    int min_trainable = -1;
    for (std::size_t i = 0; i < graph.layers.size(); ++i)
        if (node_has_trainable(params, static_cast<int>(i))) {
            min_trainable = static_cast<int>(i);
            break;
        }
    if (min_trainable < 0) return grads; // nothing to optimize

    std::size_t B = cache.values[0].batch;
    std::vector<Tensor3> vgrads(cache.values.size());
    auto grad_of = [&](int value_id) -> Tensor3& {
        Tensor3& g = vgrads[value_id];
        if (g.size() == 0) {
            const Tensor3& v = cache.values[value_id];
            g = Tensor3(v.batch, v.channels, v.length);
        }
        return g;
    };

    if (!output_grad.same_shape(cache.values.back()))
        throw ShapeError("output gradient shape " + output_grad.shape_str() + " != forward output " +
                         cache.values.back().shape_str());
    vgrads.back() = output_grad;

    for (int i = static_cast<int>(graph.layers.size()) - 1; i >= min_trainable; --i) {
        const LayerSpec& s = graph.layers[i];
        Tensor3& gout = vgrads[i + 1];
        if (gout.size() == 0) continue; // value never influenced the output
        const Tensor3& a = cache.values[s.inputs[0]];
        bool want_gin = s.inputs[0] > min_trainable;
        bool want_gw = node_has_trainable(params, i);
        auto [pb, pe] = params.node_range[i];

        switch (s.kind) {
        case LayerKind::Conv1d: {
            const ParamTensor& w = params.tensors[pb];
            bool w_train = w.trainable;
            bool b_train = s.bias && params.tensors[pb + 1].trainable;
            double* gw = (want_gw && w_train) ? grads.grads[pb].data() : nullptr;
            double* gb = (want_gw && b_train) ? grads.grads[pb + 1].data() : nullptr;
            Tensor3* gin = want_gin ? &grad_of(s.inputs[0]) : nullptr;
            Pad pad = same_pad(static_cast<int>(a.length), static_cast<int>(gout.length), s.kernel, s.stride);
            for (std::size_t b = 0; b < B; ++b)
                conv_rows_backward(a.row(b, 0), gout.row(b, 0), w.value.data(), gin ? gin->row(b, 0) : nullptr, gw, gb,
                                   s.in_channels, s.out_channels, static_cast<int>(a.length),
                                   static_cast<int>(gout.length), s.kernel, s.stride, pad.left);
            break;
        }
        case LayerKind::DepthwiseSeparableConv1d: {
            int t = pb;
            const ParamTensor& dw = params.tensors[t++];
            int dwb_idx = s.bias ? t++ : -1;
            const ParamTensor& pw = params.tensors[t++];
            int pwb_idx = s.bias ? t++ : -1;
            int dw_idx = pb;
            int pw_idx = s.bias ? pb + 2 : pb + 1;
            Pad pad = same_pad(static_cast<int>(a.length), static_cast<int>(gout.length), s.kernel, s.stride);
            int l_out = static_cast<int>(gout.length);
            const double* dwb = dwb_idx >= 0 ? params.tensors[dwb_idx].value.data() : nullptr;

            Tensor3 mid(B, s.in_channels, l_out);
            // recompute the depthwise intermediate (not cached in forward)
            for (std::size_t b = 0; b < B; ++b)
                for (int ci = 0; ci < s.in_channels; ++ci) {
                    const double* irow = a.row(b, ci);
                    double* mrow = mid.row(b, ci);
                    std::fill(mrow, mrow + l_out, dwb ? dwb[ci] : 0.0);
                    const double* wrow = dw.value.data() + static_cast<std::size_t>(ci) * s.kernel;
                    for (int k = 0; k < s.kernel; ++k) {
                        double wv = wrow[k];
                        int off = k - pad.left;
                        if (s.stride == 1) {
                            int lo0 = std::max(0, -off);
                            int lo1 = std::min(l_out, static_cast<int>(a.length) - off);
                            axpy(lo1 - lo0, wv, irow + off + lo0, mrow + lo0);
                        } else {
                            for (int lo = 0; lo < l_out; ++lo) {
                                int li = lo * s.stride + off;
                                if (li >= 0 && li < static_cast<int>(a.length)) mrow[lo] += wv * irow[li];
                            }
                        }
                    }
                }

            Tensor3 gmid(B, s.in_channels, l_out);
            for (std::size_t b = 0; b < B; ++b) {
                for (int co = 0; co < s.out_channels; ++co) {
                    const double* grow = gout.row(b, co);
                    const double* wrow = pw.value.data() + static_cast<std::size_t>(co) * s.in_channels;
                    double* gpw = (want_gw && pw.trainable) ? grads.grads[pw_idx].data() + static_cast<std::size_t>(co) * s.in_channels
                                                            : nullptr;
                    if (pwb_idx >= 0 && want_gw && params.tensors[pwb_idx].trainable) {
                        double sum = 0.0;
                        for (int lo = 0; lo < l_out; ++lo) sum += grow[lo];
                        grads.grads[pwb_idx][co] += sum;
                    }
                    for (int ci = 0; ci < s.in_channels; ++ci) {
                        if (gpw) gpw[ci] += dot(l_out, grow, mid.row(b, ci));
                        axpy(l_out, wrow[ci], grow, gmid.row(b, ci));
                    }
                }
                // depthwise stage backward
                Tensor3* gin = want_gin ? &grad_of(s.inputs[0]) : nullptr;
                for (int ci = 0; ci < s.in_channels; ++ci) {
                    const double* irow = a.row(b, ci);
                    const double* gmrow = gmid.row(b, ci);
                    double* ginrow = gin ? gin->row(b, ci) : nullptr;
                    const double* wrow = dw.value.data() + static_cast<std::size_t>(ci) * s.kernel;
                    double* gdw = (want_gw && dw.trainable) ? grads.grads[dw_idx].data() + static_cast<std::size_t>(ci) * s.kernel
                                                            : nullptr;
                    if (dwb_idx >= 0 && want_gw && params.tensors[dwb_idx].trainable) {
                        double sum = 0.0;
                        for (int lo = 0; lo < l_out; ++lo) sum += gmrow[lo];
                        grads.grads[dwb_idx][ci] += sum;
                    }
                    for (int k = 0; k < s.kernel; ++k) {
                        int off = k - pad.left;
                        double wv = wrow[k];
                        if (s.stride == 1) {
                            int lo0 = std::max(0, -off);
                            int lo1 = std::min(l_out, static_cast<int>(a.length) - off);
                            if (gdw) gdw[k] += dot(lo1 - lo0, gmrow + lo0, irow + off + lo0);
                            if (ginrow) axpy(lo1 - lo0, wv, gmrow + lo0, ginrow + off + lo0);
                        } else {
                            for (int lo = 0; lo < l_out; ++lo) {
                                int li = lo * s.stride + off;
                                if (li < 0 || li >= static_cast<int>(a.length)) continue;
                                if (gdw) gdw[k] += gmrow[lo] * irow[li];
                                if (ginrow) ginrow[li] += wv * gmrow[lo];
                            }
                        }
                    }
                }
            }
            break;
        }
        case LayerKind::TransposedConv1d: {
            const ParamTensor& w = params.tensors[pb];
            double* gw = (want_gw && w.trainable) ? grads.grads[pb].data() : nullptr;
            double* gb = (s.bias && want_gw && params.tensors[pb + 1].trainable) ? grads.grads[pb + 1].data() : nullptr;
            Tensor3* gin = want_gin ? &grad_of(s.inputs[0]) : nullptr;
            int crop_left = (s.kernel - s.stride) / 2;
            int l_out = static_cast<int>(gout.length);
            for (std::size_t b = 0; b < B; ++b) {
                if (gb)
                    for (int co = 0; co < s.out_channels; ++co) {
                        const double* grow = gout.row(b, co);
                        double sum = 0.0;
                        for (int p = 0; p < l_out; ++p) sum += grow[p];
                        gb[co] += sum;
                    }
                for (int ci = 0; ci < s.in_channels; ++ci) {
                    const double* irow = a.row(b, ci);
                    double* ginrow = gin ? gin->row(b, ci) : nullptr;
                    for (int co = 0; co < s.out_channels; ++co) {
                        const double* grow = gout.row(b, co);
                        const double* wrow = w.value.data() + (static_cast<std::size_t>(ci) * s.out_channels + co) * s.kernel;
                        double* gwrow = gw ? gw + (static_cast<std::size_t>(ci) * s.out_channels + co) * s.kernel : nullptr;
                        for (int k = 0; k < s.kernel; ++k) {
                            double wv = wrow[k];
                            int off = k - crop_left;
                            for (int l = 0; l < static_cast<int>(a.length); ++l) {
                                int p = l * s.stride + off;
                                if (p < 0 || p >= l_out) continue;
                                if (gwrow) gwrow[k] += grow[p] * irow[l];
                                if (ginrow) ginrow[l] += wv * grow[p];
                            }
                        }
                    }
                }
            }
            break;
        }
        case LayerKind::RepeatUpsample1d: {
            if (want_gin) {
                Tensor3& gin = grad_of(s.inputs[0]);
                for (std::size_t b = 0; b < B; ++b)
                    for (std::size_t c = 0; c < a.channels; ++c) {
                        const double* grow = gout.row(b, c);
                        double* ginrow = gin.row(b, c);
                        for (std::size_t l = 0; l < a.length; ++l) {
                            double sum = 0.0;
                            for (int j = 0; j < s.factor; ++j) sum += grow[l * s.factor + j];
                            ginrow[l] += sum;
                        }
                    }
            }
            break;
        }
        case LayerKind::MaxPool1d: {
            if (want_gin) {
                Tensor3& gin = grad_of(s.inputs[0]);
                const std::vector<int>& amax = cache.pool_argmax[i];
                std::size_t idx = 0;
                for (std::size_t b = 0; b < B; ++b)
                    for (std::size_t c = 0; c < a.channels; ++c) {
                        const double* grow = gout.row(b, c);
                        double* ginrow = gin.row(b, c);
                        for (std::size_t lo = 0; lo < gout.length; ++lo) ginrow[amax[idx++]] += grow[lo];
                    }
            }
            break;
        }
        case LayerKind::BatchNorm1d: {
            const ParamTensor& gamma = params.tensors[pb];
            bool g_train = want_gw && gamma.trainable;
            bool b_train = want_gw && params.tensors[pb + 1].trainable;
            const std::vector<double>& mu = cache.bn_mean[i];
            const std::vector<double>& istd = cache.bn_inv_std[i];
            double n = static_cast<double>(B * a.length);
            Tensor3* gin = want_gin ? &grad_of(s.inputs[0]) : nullptr;
            for (std::size_t c = 0; c < a.channels; ++c) {
                double m = mu[c], is = istd[c];
                double sum_dy = 0.0, sum_dy_xhat = 0.0;
                for (std::size_t b = 0; b < B; ++b) {
                    const double* grow = gout.row(b, c);
                    const double* irow = a.row(b, c);
                    for (std::size_t l = 0; l < a.length; ++l) {
                        sum_dy += grow[l];
                        sum_dy_xhat += grow[l] * (irow[l] - m) * is;
                    }
                }
                if (b_train) grads.grads[pb + 1][c] += sum_dy;
                if (g_train) grads.grads[pb][c] += sum_dy_xhat;
                if (gin) {
                    double scale = gamma.value[c] * is;
                    if (cache.bn_used_batch_stats[i]) {
                        double mean_dy = sum_dy / n;
                        double mean_dy_xhat = sum_dy_xhat / n;
                        for (std::size_t b = 0; b < B; ++b) {
                            const double* grow = gout.row(b, c);
                            const double* irow = a.row(b, c);
                            double* ginrow = gin->row(b, c);
                            for (std::size_t l = 0; l < a.length; ++l) {
                                double xhat = (irow[l] - m) * is;
                                ginrow[l] += scale * (grow[l] - mean_dy - xhat * mean_dy_xhat);
                            }
                        }
                    } else {
                        for (std::size_t b = 0; b < B; ++b) {
                            const double* grow = gout.row(b, c);
                            double* ginrow = gin->row(b, c);
                            for (std::size_t l = 0; l < a.length; ++l) ginrow[l] += scale * grow[l];
                        }
                    }
                }
            }
            break;
        }
        case LayerKind::PReLU: {
            const ParamTensor& alpha = params.tensors[pb];
            bool a_train = want_gw && alpha.trainable;
            Tensor3* gin = want_gin ? &grad_of(s.inputs[0]) : nullptr;
            for (std::size_t c = 0; c < a.channels; ++c) {
                double al = alpha.value[c];
                double ga = 0.0;
                for (std::size_t b = 0; b < B; ++b) {
                    const double* irow = a.row(b, c);
                    const double* grow = gout.row(b, c);
                    double* ginrow = gin ? gin->row(b, c) : nullptr;
                    for (std::size_t l = 0; l < a.length; ++l) {
                        double x = irow[l];
                        if (x >= 0.0) {
                            if (ginrow) ginrow[l] += grow[l];
                        } else {
                            if (ginrow) ginrow[l] += al * grow[l];
                            ga += grow[l] * x;
                        }
                    }
                }
                if (a_train) grads.grads[pb][c] += ga;
            }
            break;
        }
        case LayerKind::Concat: {
            std::size_t c_off = 0;
            for (int in_v : s.inputs) {
                const Tensor3& src = cache.values[in_v];
                if (in_v > min_trainable) {
                    Tensor3& gin = grad_of(in_v);
                    for (std::size_t b = 0; b < B; ++b)
                        for (std::size_t c = 0; c < src.channels; ++c) {
                            const double* grow = gout.row(b, c_off + c);
                            double* ginrow = gin.row(b, c);
                            for (std::size_t l = 0; l < src.length; ++l) ginrow[l] += grow[l];
                        }
                }
                c_off += src.channels;
            }
            break;
        }
        case LayerKind::GlobalAveragePool1d: {
            if (want_gin) {
                Tensor3& gin = grad_of(s.inputs[0]);
                double inv = 1.0 / static_cast<double>(a.length);
                for (std::size_t b = 0; b < B; ++b)
                    for (std::size_t c = 0; c < a.channels; ++c) {
                        double g = gout.at(b, c, 0) * inv;
                        double* ginrow = gin.row(b, c);
                        for (std::size_t l = 0; l < a.length; ++l) ginrow[l] += g;
                    }
            }
            break;
        }
        case LayerKind::Sigmoid: {
            if (want_gin) {
                Tensor3& gin = grad_of(s.inputs[0]);
                const Tensor3& y = cache.values[i + 1];
                for (std::size_t j = 0; j < y.size(); ++j) gin.data[j] += gout.data[j] * y.data[j] * (1.0 - y.data[j]);
            }
            break;
        }
        }
    }

    for (const auto& g : grads.grads)
        for (double v : g)
            if (!std::isfinite(v)) throw NumericError("non-finite gradient");
    return grads;
}

double mse_loss(const Tensor3& pred, const Tensor3& target, Tensor3* grad) {
    if (!pred.same_shape(target))
        throw ShapeError("mse: prediction " + pred.shape_str() + " vs target " + target.shape_str());
    double n = static_cast<double>(pred.size());
    double sum = 0.0;
    if (grad) *grad = Tensor3(pred.batch, pred.channels, pred.length);
    for (std::size_t i = 0; i < pred.size(); ++i) {
        double d = pred.data[i] - target.data[i];
        sum += d * d;
        if (grad) grad->data[i] = 2.0 * d / n;
    }
    return sum / n;
}

} // namespace vicnet::nn
