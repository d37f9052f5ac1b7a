#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "shapeforge/core.hpp"
#include "shapeforge/rng.hpp"
#include "shapeforge/shapespace.hpp"
#include "shapeforge/volume.hpp"

namespace shapeforge {

// ---------------------------------------------------------------------------
// Tensors
// ---------------------------------------------------------------------------

/// Dense rank-4 tensor: channel-major, then z, y, x with x fastest.
struct Tensor4 {
    std::uint32_t channels = 0, nx = 0, ny = 0, nz = 0;
    std::vector<double> data;

    static Tensor4 zeros(std::uint32_t c, std::uint32_t x, std::uint32_t y, std::uint32_t z) {
        Tensor4 t;
        t.channels = c;
        t.nx = x;
        t.ny = y;
        t.nz = z;
        t.data.assign(std::size_t(c) * x * y * z, 0.0);
        return t;
    }

    std::size_t size() const { return std::size_t(channels) * nx * ny * nz; }
    std::size_t spatial() const { return std::size_t(nx) * ny * nz; }

    std::size_t index(std::uint32_t c, std::uint32_t x, std::uint32_t y, std::uint32_t z) const {
        return ((std::size_t(c) * nz + z) * ny + y) * nx + x;
    }
    double& at(std::uint32_t c, std::uint32_t x, std::uint32_t y, std::uint32_t z) {
        return data[index(c, x, y, z)];
    }
    double at(std::uint32_t c, std::uint32_t x, std::uint32_t y, std::uint32_t z) const {
        return data[index(c, x, y, z)];
    }

    void validate() const {
        if (data.size() != size()) throw ValidationError("tensor: data length does not match dims");
        for (double v : data)
            if (!std::isfinite(v)) throw ValidationError("tensor: non-finite value");
    }
};

/// Volumes enter the network as single-channel tensors.
inline Tensor4 to_tensor(const Volume& v) {
    v.validate();
    Tensor4 t;
    t.channels = 1;
    t.nx = v.dims[0];
    t.ny = v.dims[1];
    t.nz = v.dims[2];
    t.data.assign(v.data.begin(), v.data.end());
    return t;
}

// ---------------------------------------------------------------------------
// Network description
// ---------------------------------------------------------------------------

enum class LayerKind { Conv3d, BatchNorm, PReLU, MaxPool, Flatten, FullyConnected, Sigmoid };

struct LayerSpec {
    LayerKind kind = LayerKind::Flatten;
    std::uint32_t in_channels = 0, out_channels = 0; // conv / fc (fc: in/out width)
    std::uint32_t kernel = 0, stride = 1;            // conv
    std::uint32_t channels = 0;                      // batchnorm / prelu
    double epsilon = 1e-5;                           // batchnorm
    double momentum = 0.9;                           // batchnorm running stats
};

inline LayerSpec conv3d(std::uint32_t in, std::uint32_t out, std::uint32_t k, std::uint32_t stride = 1) {
    LayerSpec l;
    l.kind = LayerKind::Conv3d;
    l.in_channels = in;
    l.out_channels = out;
    l.kernel = k;
    l.stride = stride;
    return l;
}
inline LayerSpec batch_norm(std::uint32_t channels, double epsilon = 1e-5, double momentum = 0.9) {
    LayerSpec l;
    l.kind = LayerKind::BatchNorm;
    l.channels = channels;
    l.epsilon = epsilon;
    l.momentum = momentum;
    return l;
}
inline LayerSpec prelu(std::uint32_t channels) {
    LayerSpec l;
    l.kind = LayerKind::PReLU;
    l.channels = channels;
    return l;
}
inline LayerSpec max_pool2() {
    LayerSpec l;
    l.kind = LayerKind::MaxPool;
    return l;
}
inline LayerSpec flatten() {
    LayerSpec l;
    l.kind = LayerKind::Flatten;
    return l;
}
inline LayerSpec fully_connected(std::uint32_t in, std::uint32_t out) {
    LayerSpec l;
    l.kind = LayerKind::FullyConnected;
    l.in_channels = in;
    l.out_channels = out;
    return l;
}
inline LayerSpec sigmoid() {
    LayerSpec l;
    l.kind = LayerKind::Sigmoid;
    return l;
}

struct TensorShape {
    std::uint32_t channels, nx, ny, nz;
    bool operator==(const TensorShape&) const = default;
};

/// Output shape of one layer given its input shape; throws with the layer
/// index on any mismatch.
inline TensorShape layer_output_shape(const LayerSpec& l, const TensorShape& in, std::size_t layer_index) {
    auto fail = [&](const std::string& why) {
        throw ValidationError("net spec: layer " + std::to_string(layer_index) + ": " + why);
    };
    switch (l.kind) {
        case LayerKind::Conv3d: {
            if (l.in_channels != in.channels) fail("conv input channels do not match");
            if (l.kernel < 1 || l.stride < 1 || l.out_channels < 1) fail("bad conv geometry");
            std::uint32_t p = l.kernel / 2;
            auto out_dim = [&](std::uint32_t n) -> std::uint32_t {
                std::int64_t o = (std::int64_t(n) + 2 * p - l.kernel) / l.stride + 1;
                if (o < 1) fail("conv output collapses to zero size");
                return std::uint32_t(o);
            };
            return {l.out_channels, out_dim(in.nx), out_dim(in.ny), out_dim(in.nz)};
        }
        case LayerKind::BatchNorm:
            if (l.channels != in.channels) fail("batchnorm channels do not match");
            return in;
        case LayerKind::PReLU:
            if (l.channels != in.channels) fail("prelu channels do not match");
            return in;
        case LayerKind::MaxPool:
            return {in.channels, (in.nx + 1) / 2, (in.ny + 1) / 2, (in.nz + 1) / 2};
        case LayerKind::Flatten:
            return {in.channels * in.nx * in.ny * in.nz, 1, 1, 1};
        case LayerKind::FullyConnected:
            if (in.nx != 1 || in.ny != 1 || in.nz != 1) fail("fully connected layer needs flattened input");
            if (l.in_channels != in.channels) fail("fully connected input width does not match");
            return {l.out_channels, 1, 1, 1};
        case LayerKind::Sigmoid:
            return in;
    }
    throw Error("unreachable layer kind");
}

struct NetSpec {
    std::uint32_t input_channels = 1;
    std::array<std::uint32_t, 3> input_dims{};
    std::size_t output_dim = 0;
    std::vector<LayerSpec> layers;

    /// Shapes before each layer plus the final output shape (size layers+1).
    std::vector<TensorShape> shape_chain() const {
        std::vector<TensorShape> shapes;
        shapes.push_back({input_channels, input_dims[0], input_dims[1], input_dims[2]});
        for (std::size_t i = 0; i < layers.size(); ++i)
            shapes.push_back(layer_output_shape(layers[i], shapes.back(), i));
        return shapes;
    }

    void validate() const {
        if (input_channels < 1 || input_dims[0] < 1 || input_dims[1] < 1 || input_dims[2] < 1)
            throw ValidationError("net spec: bad input dims");
        if (output_dim < 1) throw ValidationError("net spec: output dim must be >= 1");
        if (layers.empty()) throw ValidationError("net spec: no layers");
        TensorShape out = shape_chain().back();
        if (out.channels != output_dim || out.nx != 1 || out.ny != 1 || out.nz != 1)
            throw ValidationError("net spec: final shape is not the output vector");
    }
};

/// The stock regressor: five convolution blocks (batch norm + PReLU, with
/// pooling after blocks 1, 2, 3, and 5) followed by two fully connected
/// layers. Works for any cubic input that pools down to at least 1 voxel.
inline NetSpec default_net_spec(std::uint32_t dim, std::size_t output_dim) {
    NetSpec s;
    s.input_channels = 1;
    s.input_dims = {dim, dim, dim};
    s.output_dim = output_dim;
    s.layers = {
        conv3d(1, 8, 3),    batch_norm(8),  prelu(8),  max_pool2(),
        conv3d(8, 16, 3),   batch_norm(16), prelu(16), max_pool2(),
        conv3d(16, 32, 3),  batch_norm(32), prelu(32), max_pool2(),
        conv3d(32, 32, 3),  batch_norm(32), prelu(32),
        conv3d(32, 64, 3),  batch_norm(64), prelu(64), max_pool2(),
        flatten(),
    };
    // fully connected head: width depends on how far pooling shrank the grid
    TensorShape flat = s.shape_chain().back();
    s.layers.push_back(fully_connected(flat.channels, 128));
    s.layers.push_back(prelu(128));
    s.layers.push_back(fully_connected(128, std::uint32_t(output_dim)));
    s.validate();
    return s;
}

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

/// Trainable and tracked arrays for one layer; unused arrays stay empty.
/// acc_* are the Adagrad squared-gradient accumulators.
struct LayerParams {
    std::vector<double> weights, bias;                       // conv / fc
    std::vector<double> gamma, beta;                         // batchnorm
    std::vector<double> running_mean, running_var;           // batchnorm
    std::vector<double> slopes;                              // prelu
    std::vector<double> acc_weights, acc_bias, acc_gamma, acc_beta, acc_slopes;
};

struct NetParams {
    std::vector<LayerParams> layers;
};

/// Gradients for the trainable arrays of one layer.
struct LayerGrads {
    std::vector<double> weights, bias, gamma, beta, slopes;
};

using NetGrads = std::vector<LayerGrads>;

inline NetParams xavier_init(const NetSpec& spec, std::uint64_t seed) {
    spec.validate();
    Rng rng(seed);
    NetParams p;
    p.layers.resize(spec.layers.size());
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const LayerSpec& l = spec.layers[i];
        LayerParams& lp = p.layers[i];
        if (l.kind == LayerKind::Conv3d) {
            std::size_t k3 = std::size_t(l.kernel) * l.kernel * l.kernel;
            std::size_t fan_in = l.in_channels * k3, fan_out = l.out_channels * k3;
            double b = std::sqrt(6.0 / double(fan_in + fan_out));
            lp.weights.resize(std::size_t(l.out_channels) * l.in_channels * k3);
            for (auto& w : lp.weights) w = rng.uniform(-b, b);
            lp.bias.assign(l.out_channels, 0.0);
            lp.acc_weights.assign(lp.weights.size(), 0.0);
            lp.acc_bias.assign(lp.bias.size(), 0.0);
        } else if (l.kind == LayerKind::FullyConnected) {
            double b = std::sqrt(6.0 / double(l.in_channels + l.out_channels));
            lp.weights.resize(std::size_t(l.out_channels) * l.in_channels);
            for (auto& w : lp.weights) w = rng.uniform(-b, b);
            lp.bias.assign(l.out_channels, 0.0);
            lp.acc_weights.assign(lp.weights.size(), 0.0);
            lp.acc_bias.assign(lp.bias.size(), 0.0);
        } else if (l.kind == LayerKind::BatchNorm) {
            lp.gamma.assign(l.channels, 1.0);
            lp.beta.assign(l.channels, 0.0);
            lp.running_mean.assign(l.channels, 0.0);
            lp.running_var.assign(l.channels, 1.0);
            lp.acc_gamma.assign(l.channels, 0.0);
            lp.acc_beta.assign(l.channels, 0.0);
        } else if (l.kind == LayerKind::PReLU) {
            lp.slopes.assign(l.channels, 0.25);
            lp.acc_slopes.assign(l.channels, 0.0);
        }
    }
    return p;
}

// ---------------------------------------------------------------------------
// Forward
// ---------------------------------------------------------------------------

enum class NetMode { Train, Infer };

/// Everything backward() needs: the input batch of every layer (acts[l]),
/// the final outputs (acts[layers]), and per-layer auxiliaries.
struct ForwardCache {
    std::vector<std::vector<Tensor4>> acts;
    std::vector<std::vector<Tensor4>> bn_xhat;               // per bn layer, per sample
    std::vector<std::vector<double>> bn_inv_std;             // per bn layer, per channel
    std::vector<std::vector<std::vector<std::uint32_t>>> pool_src; // layer -> sample -> out idx -> in idx
};

namespace detail {

inline void conv3d_forward_one(const LayerSpec& l, const LayerParams& p, const Tensor4& in,
                               Tensor4& out) {
    const std::uint32_t k = l.kernel, s = l.stride, pad = l.kernel / 2;
    const std::size_t k3 = std::size_t(k) * k * k;
    for (std::uint32_t oc = 0; oc < out.channels; ++oc) {
        for (std::uint32_t z = 0; z < out.nz; ++z)
            for (std::uint32_t y = 0; y < out.ny; ++y) {
                double* orow = &out.data[out.index(oc, 0, y, z)];
                for (std::uint32_t x = 0; x < out.nx; ++x) orow[x] = p.bias[oc];
                for (std::uint32_t ic = 0; ic < in.channels; ++ic)
                    for (std::uint32_t kz = 0; kz < k; ++kz) {
                        std::int64_t iz = std::int64_t(z) * s + kz - pad;
                        if (iz < 0 || iz >= in.nz) continue;
                        for (std::uint32_t ky = 0; ky < k; ++ky) {
                            std::int64_t iy = std::int64_t(y) * s + ky - pad;
                            if (iy < 0 || iy >= in.ny) continue;
                            const double* irow =
                                &in.data[in.index(ic, 0, std::uint32_t(iy), std::uint32_t(iz))];
                            const double* wrow =
                                &p.weights[((std::size_t(oc) * in.channels + ic) * k + kz) * k * k +
                                           std::size_t(ky) * k];
                            if (s == 1) {
                                for (std::uint32_t kx = 0; kx < k; ++kx) {
                                    double w = wrow[kx];
                                    std::int64_t shift = std::int64_t(kx) - pad;
                                    std::uint32_t x0 = std::uint32_t(std::max<std::int64_t>(0, -shift));
                                    std::uint32_t x1 = std::uint32_t(std::min<std::int64_t>(
                                        out.nx, std::int64_t(in.nx) - shift));
                                    const double* ir = irow + shift;
                                    for (std::uint32_t x = x0; x < x1; ++x) orow[x] += w * ir[x];
                                }
                            } else {
                                for (std::uint32_t x = 0; x < out.nx; ++x) {
                                    for (std::uint32_t kx = 0; kx < k; ++kx) {
                                        std::int64_t ix = std::int64_t(x) * s + kx - pad;
                                        if (ix < 0 || ix >= in.nx) continue;
                                        orow[x] += wrow[kx] * irow[ix];
                                    }
                                }
                            }
                        }
                    }
            }
    }
    (void)k3;
}

inline void conv3d_backward_one(const LayerSpec& l, const LayerParams& p, const Tensor4& in,
                                const Tensor4& dout, Tensor4& din, std::vector<double>& dw,
                                std::vector<double>& db) {
    const std::uint32_t k = l.kernel, s = l.stride, pad = l.kernel / 2;
    for (std::uint32_t oc = 0; oc < dout.channels; ++oc) {
        for (std::uint32_t z = 0; z < dout.nz; ++z)
            for (std::uint32_t y = 0; y < dout.ny; ++y) {
                const double* grow = &dout.data[dout.index(oc, 0, y, z)];
                for (std::uint32_t x = 0; x < dout.nx; ++x) db[oc] += grow[x];
                for (std::uint32_t ic = 0; ic < in.channels; ++ic)
                    for (std::uint32_t kz = 0; kz < k; ++kz) {
                        std::int64_t iz = std::int64_t(z) * s + kz - pad;
                        if (iz < 0 || iz >= in.nz) continue;
                        for (std::uint32_t ky = 0; ky < k; ++ky) {
                            std::int64_t iy = std::int64_t(y) * s + ky - pad;
                            if (iy < 0 || iy >= in.ny) continue;
                            const double* irow =
                                &in.data[in.index(ic, 0, std::uint32_t(iy), std::uint32_t(iz))];
                            double* dirow =
                                &din.data[din.index(ic, 0, std::uint32_t(iy), std::uint32_t(iz))];
                            std::size_t wbase =
                                ((std::size_t(oc) * in.channels + ic) * k + kz) * k * k +
                                std::size_t(ky) * k;
                            if (s == 1) {
                                for (std::uint32_t kx = 0; kx < k; ++kx) {
                                    double w = p.weights[wbase + kx];
                                    std::int64_t shift = std::int64_t(kx) - pad;
                                    std::uint32_t x0 = std::uint32_t(std::max<std::int64_t>(0, -shift));
                                    std::uint32_t x1 = std::uint32_t(std::min<std::int64_t>(
                                        dout.nx, std::int64_t(in.nx) - shift));
                                    const double* ir = irow + shift;
                                    double* dir = dirow + shift;
                                    double wg = 0;
                                    for (std::uint32_t x = x0; x < x1; ++x) {
                                        wg += grow[x] * ir[x];
                                        dir[x] += w * grow[x];
                                    }
                                    dw[wbase + kx] += wg;
                                }
                            } else {
                                for (std::uint32_t x = 0; x < dout.nx; ++x) {
                                    for (std::uint32_t kx = 0; kx < k; ++kx) {
                                        std::int64_t ix = std::int64_t(x) * s + kx - pad;
                                        if (ix < 0 || ix >= in.nx) continue;
                                        dw[wbase + kx] += grow[x] * irow[ix];
                                        dirow[ix] += p.weights[wbase + kx] * grow[x];
                                    }
                                }
                            }
                        }
                    }
            }
    }
}

} // namespace detail

/// Runs the batch through the network. Train mode normalizes with batch
/// statistics and advances the running statistics (hence non-const params);
/// infer mode is read-only and per-sample independent. Pass a cache to keep
/// what backward() needs.
inline std::vector<Loadings> forward(const NetSpec& spec, NetParams& params,
                                     const std::vector<Tensor4>& batch, NetMode mode,
                                     ForwardCache* cache = nullptr, int workers = 1) {
    spec.validate();
    if (batch.empty()) throw ValidationError("forward: empty batch");
    if (params.layers.size() != spec.layers.size())
        throw ValidationError("forward: params do not match spec");
    TensorShape in_shape{spec.input_channels, spec.input_dims[0], spec.input_dims[1],
                         spec.input_dims[2]};
    for (const auto& t : batch)
        if (TensorShape{t.channels, t.nx, t.ny, t.nz} != in_shape)
            throw ValidationError("forward: input tensor dims do not match spec");

    const std::size_t B = batch.size(), L = spec.layers.size();
    if (cache) {
        cache->acts.assign(L + 1, {});
        cache->bn_xhat.assign(L, {});
        cache->bn_inv_std.assign(L, {});
        cache->pool_src.assign(L, {});
    }

    std::vector<Tensor4> cur = batch;
    std::vector<TensorShape> shapes = spec.shape_chain();
    for (std::size_t li = 0; li < L; ++li) {
        if (cache) cache->acts[li] = cur;
        const LayerSpec& l = spec.layers[li];
        LayerParams& lp = params.layers[li];
        TensorShape os = shapes[li + 1];
        std::vector<Tensor4> next(B);

        switch (l.kind) {
            case LayerKind::Conv3d:
                parallel_for(B, workers, [&](std::size_t s) {
                    next[s] = Tensor4::zeros(os.channels, os.nx, os.ny, os.nz);
                    detail::conv3d_forward_one(l, lp, cur[s], next[s]);
                });
                break;

            case LayerKind::BatchNorm: {
                const std::size_t spatial = cur[0].spatial();
                const double m = double(B * spatial);
                std::vector<double> mean(l.channels), var(l.channels), inv_std(l.channels);
                if (mode == NetMode::Train) {
                    // channels are independent; reduce each serially over the
                    // batch so the result is worker-count invariant
                    parallel_for(l.channels, workers, [&](std::size_t c) {
                        double s1 = 0;
                        for (std::size_t s = 0; s < B; ++s) {
                            const double* d = &cur[s].data[c * spatial];
                            for (std::size_t i = 0; i < spatial; ++i) s1 += d[i];
                        }
                        mean[c] = s1 / m;
                        double s2 = 0;
                        for (std::size_t s = 0; s < B; ++s) {
                            const double* d = &cur[s].data[c * spatial];
                            for (std::size_t i = 0; i < spatial; ++i)
                                s2 += (d[i] - mean[c]) * (d[i] - mean[c]);
                        }
                        var[c] = s2 / m;
                        inv_std[c] = 1.0 / std::sqrt(var[c] + l.epsilon);
                    });
                    for (std::uint32_t c = 0; c < l.channels; ++c) {
                        lp.running_mean[c] = l.momentum * lp.running_mean[c] + (1 - l.momentum) * mean[c];
                        lp.running_var[c] = l.momentum * lp.running_var[c] + (1 - l.momentum) * var[c];
                    }
                } else {
                    for (std::uint32_t c = 0; c < l.channels; ++c) {
                        mean[c] = lp.running_mean[c];
                        inv_std[c] = 1.0 / std::sqrt(lp.running_var[c] + l.epsilon);
                    }
                }
                if (cache) {
                    cache->bn_inv_std[li] = inv_std;
                    cache->bn_xhat[li].resize(B);
                }
                parallel_for(B, workers, [&](std::size_t s) {
                    next[s] = Tensor4::zeros(os.channels, os.nx, os.ny, os.nz);
                    Tensor4* xh = cache ? &cache->bn_xhat[li][s] : nullptr;
                    if (xh) *xh = Tensor4::zeros(os.channels, os.nx, os.ny, os.nz);
                    for (std::uint32_t c = 0; c < l.channels; ++c) {
                        const double* d = &cur[s].data[c * spatial];
                        double* o = &next[s].data[c * spatial];
                        double* xhd = xh ? &xh->data[c * spatial] : nullptr;
                        for (std::size_t i = 0; i < spatial; ++i) {
                            double xhat = (d[i] - mean[c]) * inv_std[c];
                            if (xhd) xhd[i] = xhat;
                            o[i] = lp.gamma[c] * xhat + lp.beta[c];
                        }
                    }
                });
                break;
            }

            case LayerKind::PReLU: {
                const std::size_t spatial = cur[0].spatial();
                parallel_for(B, workers, [&](std::size_t s) {
                    next[s] = cur[s];
                    for (std::uint32_t c = 0; c < l.channels; ++c) {
                        double a = lp.slopes[c];
                        double* d = &next[s].data[c * spatial];
                        for (std::size_t i = 0; i < spatial; ++i)
                            if (d[i] <= 0) d[i] *= a;
                    }
                });
                break;
            }

            case LayerKind::MaxPool: {
                if (cache) cache->pool_src[li].resize(B);
                parallel_for(B, workers, [&](std::size_t s) {
                    const Tensor4& in = cur[s];
                    Tensor4 out = Tensor4::zeros(os.channels, os.nx, os.ny, os.nz);
                    std::vector<std::uint32_t>* src = cache ? &cache->pool_src[li][s] : nullptr;
                    if (src) src->assign(out.size(), 0);
                    for (std::uint32_t c = 0; c < in.channels; ++c)
                        for (std::uint32_t z = 0; z < out.nz; ++z)
                            for (std::uint32_t y = 0; y < out.ny; ++y)
                                for (std::uint32_t x = 0; x < out.nx; ++x) {
                                    double best = -std::numeric_limits<double>::infinity();
                                    std::uint32_t best_idx = 0;
                                    for (std::uint32_t dz = 0; dz < 2 && 2 * z + dz < in.nz; ++dz)
                                        for (std::uint32_t dy = 0; dy < 2 && 2 * y + dy < in.ny; ++dy)
                                            for (std::uint32_t dx = 0; dx < 2 && 2 * x + dx < in.nx; ++dx) {
                                                std::size_t idx =
                                                    in.index(c, 2 * x + dx, 2 * y + dy, 2 * z + dz);
                                                if (in.data[idx] > best) {
                                                    best = in.data[idx];
                                                    best_idx = std::uint32_t(idx);
                                                }
                                            }
                                    std::size_t oi = out.index(c, x, y, z);
                                    out.data[oi] = best;
                                    if (src) (*src)[oi] = best_idx;
                                }
                    next[s] = std::move(out);
                });
                break;
            }

            case LayerKind::Flatten:
                parallel_for(B, workers, [&](std::size_t s) {
                    next[s] = cur[s];
                    next[s].channels = os.channels;
                    next[s].nx = next[s].ny = next[s].nz = 1;
                });
                break;

            case LayerKind::FullyConnected:
                parallel_for(B, workers, [&](std::size_t s) {
                    next[s] = Tensor4::zeros(os.channels, 1, 1, 1);
                    for (std::uint32_t o = 0; o < l.out_channels; ++o) {
                        double acc = lp.bias[o];
                        const double* w = &lp.weights[std::size_t(o) * l.in_channels];
                        for (std::uint32_t i = 0; i < l.in_channels; ++i) acc += w[i] * cur[s].data[i];
                        next[s].data[o] = acc;
                    }
                });
                break;

            case LayerKind::Sigmoid:
                parallel_for(B, workers, [&](std::size_t s) {
                    next[s] = cur[s];
                    for (auto& v : next[s].data) v = 1.0 / (1.0 + std::exp(-v));
                });
                break;
        }
        cur = std::move(next);
    }

    if (cache) cache->acts[L] = cur;
    std::vector<Loadings> preds(B);
    for (std::size_t s = 0; s < B; ++s) preds[s] = cur[s].data;
    return preds;
}

// ---------------------------------------------------------------------------
// Loss
// ---------------------------------------------------------------------------

/// Mean over the batch of the squared L2 distance between prediction and
/// target loadings.
inline double loss_l2(const std::vector<Loadings>& preds, const std::vector<Loadings>& targets) {
    if (preds.size() != targets.size() || preds.empty())
        throw ValidationError("loss: prediction/target batch mismatch");
    double total = 0;
    for (std::size_t s = 0; s < preds.size(); ++s) {
        if (preds[s].size() != targets[s].size())
            throw ValidationError("loss: prediction/target length mismatch");
        for (std::size_t i = 0; i < preds[s].size(); ++i) {
            double d = preds[s][i] - targets[s][i];
            total += d * d;
        }
    }
    return total / double(preds.size());
}

/// d loss / d prediction for loss_l2.
inline std::vector<Loadings> loss_l2_grad(const std::vector<Loadings>& preds,
                                          const std::vector<Loadings>& targets) {
    if (preds.size() != targets.size() || preds.empty())
        throw ValidationError("loss: prediction/target batch mismatch");
    std::vector<Loadings> g(preds.size());
    for (std::size_t s = 0; s < preds.size(); ++s) {
        if (preds[s].size() != targets[s].size())
            throw ValidationError("loss: prediction/target length mismatch");
        g[s].resize(preds[s].size());
        for (std::size_t i = 0; i < preds[s].size(); ++i)
            g[s][i] = 2.0 * (preds[s][i] - targets[s][i]) / double(preds.size());
    }
    return g;
}

// ---------------------------------------------------------------------------
// Backward
// ---------------------------------------------------------------------------

/// Backpropagates d loss / d prediction through the cached forward pass and
/// returns gradients for every trainable array. Per-sample work may run in
/// parallel; all cross-sample reductions happen in fixed sample order so the
/// result does not depend on the worker count.
inline NetGrads backward(const NetSpec& spec, const NetParams& params, const ForwardCache& cache,
                         const std::vector<Loadings>& dpred, int workers = 1) {
    const std::size_t L = spec.layers.size();
    if (cache.acts.size() != L + 1) throw ValidationError("backward: cache does not match spec");
    const std::size_t B = cache.acts[0].size();
    if (dpred.size() != B) throw ValidationError("backward: gradient batch size mismatch");

    NetGrads grads(L);
    for (std::size_t li = 0; li < L; ++li) {
        const LayerParams& lp = params.layers[li];
        grads[li].weights.assign(lp.weights.size(), 0.0);
        grads[li].bias.assign(lp.bias.size(), 0.0);
        grads[li].gamma.assign(lp.gamma.size(), 0.0);
        grads[li].beta.assign(lp.beta.size(), 0.0);
        grads[li].slopes.assign(lp.slopes.size(), 0.0);
    }

    // seed d/d(output) from the prediction gradients
    std::vector<Tensor4> dcur(B);
    for (std::size_t s = 0; s < B; ++s) {
        const Tensor4& out = cache.acts[L][s];
        if (dpred[s].size() != out.size())
            throw ValidationError("backward: prediction gradient length mismatch");
        dcur[s] = out;
        dcur[s].data = dpred[s];
    }

    for (std::size_t li = L; li-- > 0;) {
        const LayerSpec& l = spec.layers[li];
        const LayerParams& lp = params.layers[li];
        LayerGrads& g = grads[li];
        const std::vector<Tensor4>& in = cache.acts[li];
        std::vector<Tensor4> dprev(B);

        switch (l.kind) {
            case LayerKind::Conv3d: {
                std::vector<std::vector<double>> dw(B), db(B);
                parallel_for(B, workers, [&](std::size_t s) {
                    dprev[s] = Tensor4::zeros(in[s].channels, in[s].nx, in[s].ny, in[s].nz);
                    dw[s].assign(lp.weights.size(), 0.0);
                    db[s].assign(lp.bias.size(), 0.0);
                    detail::conv3d_backward_one(l, lp, in[s], dcur[s], dprev[s], dw[s], db[s]);
                });
                for (std::size_t s = 0; s < B; ++s) {
                    for (std::size_t i = 0; i < g.weights.size(); ++i) g.weights[i] += dw[s][i];
                    for (std::size_t i = 0; i < g.bias.size(); ++i) g.bias[i] += db[s][i];
                }
                break;
            }

            case LayerKind::BatchNorm: {
                const std::size_t spatial = in[0].spatial();
                const double m = double(B * spatial);
                const std::vector<Tensor4>& xhat = cache.bn_xhat[li];
                const std::vector<double>& inv_std = cache.bn_inv_std[li];
                if (xhat.size() != B || inv_std.size() != l.channels)
                    throw ValidationError("backward: batchnorm cache missing (train-mode forward required)");
                for (std::size_t s = 0; s < B; ++s)
                    dprev[s] = Tensor4::zeros(in[s].channels, in[s].nx, in[s].ny, in[s].nz);
                parallel_for(l.channels, workers, [&](std::size_t c) {
                    double dg = 0, dbta = 0;
                    for (std::size_t s = 0; s < B; ++s) {
                        const double* dy = &dcur[s].data[c * spatial];
                        const double* xh = &xhat[s].data[c * spatial];
                        for (std::size_t i = 0; i < spatial; ++i) {
                            dg += dy[i] * xh[i];
                            dbta += dy[i];
                        }
                    }
                    g.gamma[c] = dg;
                    g.beta[c] = dbta;
                    double coef = lp.gamma[c] * inv_std[c];
                    for (std::size_t s = 0; s < B; ++s) {
                        const double* dy = &dcur[s].data[c * spatial];
                        const double* xh = &xhat[s].data[c * spatial];
                        double* dx = &dprev[s].data[c * spatial];
                        for (std::size_t i = 0; i < spatial; ++i)
                            dx[i] = coef * (dy[i] - dbta / m - xh[i] * dg / m);
                    }
                });
                break;
            }

            case LayerKind::PReLU: {
                const std::size_t spatial = in[0].spatial();
                std::vector<std::vector<double>> da(B);
                parallel_for(B, workers, [&](std::size_t s) {
                    dprev[s] = dcur[s];
                    da[s].assign(l.channels, 0.0);
                    for (std::uint32_t c = 0; c < l.channels; ++c) {
                        double a = lp.slopes[c];
                        const double* x = &in[s].data[c * spatial];
                        const double* dy = &dcur[s].data[c * spatial];
                        double* dx = &dprev[s].data[c * spatial];
                        for (std::size_t i = 0; i < spatial; ++i)
                            if (x[i] <= 0) {
                                da[s][c] += dy[i] * x[i];
                                dx[i] = dy[i] * a;
                            }
                    }
                });
                for (std::size_t s = 0; s < B; ++s)
                    for (std::uint32_t c = 0; c < l.channels; ++c) g.slopes[c] += da[s][c];
                break;
            }

            case LayerKind::MaxPool: {
                const std::vector<std::vector<std::uint32_t>>& src = cache.pool_src[li];
                if (src.size() != B) throw ValidationError("backward: pool cache missing");
                parallel_for(B, workers, [&](std::size_t s) {
                    dprev[s] = Tensor4::zeros(in[s].channels, in[s].nx, in[s].ny, in[s].nz);
                    for (std::size_t i = 0; i < dcur[s].data.size(); ++i)
                        dprev[s].data[src[s][i]] += dcur[s].data[i];
                });
                break;
            }

            case LayerKind::Flatten:
                parallel_for(B, workers, [&](std::size_t s) {
                    dprev[s] = dcur[s];
                    dprev[s].channels = in[s].channels;
                    dprev[s].nx = in[s].nx;
                    dprev[s].ny = in[s].ny;
                    dprev[s].nz = in[s].nz;
                });
                break;

            case LayerKind::FullyConnected: {
                std::vector<std::vector<double>> dw(B), db(B);
                parallel_for(B, workers, [&](std::size_t s) {
                    dprev[s] = Tensor4::zeros(in[s].channels, 1, 1, 1);
                    dw[s].assign(lp.weights.size(), 0.0);
                    db[s].assign(lp.bias.size(), 0.0);
                    for (std::uint32_t o = 0; o < l.out_channels; ++o) {
                        double dy = dcur[s].data[o];
                        db[s][o] += dy;
                        const double* w = &lp.weights[std::size_t(o) * l.in_channels];
                        double* dwr = &dw[s][std::size_t(o) * l.in_channels];
                        for (std::uint32_t i = 0; i < l.in_channels; ++i) {
                            dwr[i] += dy * in[s].data[i];
                            dprev[s].data[i] += dy * w[i];
                        }
                    }
                });
                for (std::size_t s = 0; s < B; ++s) {
                    for (std::size_t i = 0; i < g.weights.size(); ++i) g.weights[i] += dw[s][i];
                    for (std::size_t i = 0; i < g.bias.size(); ++i) g.bias[i] += db[s][i];
                }
                break;
            }

            case LayerKind::Sigmoid:
                parallel_for(B, workers, [&](std::size_t s) {
                    dprev[s] = dcur[s];
                    for (std::size_t i = 0; i < dprev[s].data.size(); ++i) {
                        double x = in[s].data[i];
                        double y = 1.0 / (1.0 + std::exp(-x));
                        dprev[s].data[i] *= y * (1.0 - y);
                    }
                });
                break;
        }
        dcur = std::move(dprev);
    }
    return grads;
}

// ---------------------------------------------------------------------------
// Optimization
// ---------------------------------------------------------------------------

inline void adagrad_step(NetParams& params, const NetGrads& grads, double lr, double epsilon = 1e-8) {
    if (params.layers.size() != grads.size())
        throw ValidationError("adagrad: gradient/parameter layer mismatch");
    auto update = [&](std::vector<double>& theta, std::vector<double>& acc,
                      const std::vector<double>& g) {
        if (theta.size() != g.size() || acc.size() != g.size())
            throw ValidationError("adagrad: gradient shape mismatch");
        for (std::size_t i = 0; i < theta.size(); ++i) {
            acc[i] += g[i] * g[i];
            theta[i] -= lr * g[i] / (std::sqrt(acc[i]) + epsilon);
        }
    };
    for (std::size_t li = 0; li < grads.size(); ++li) {
        LayerParams& p = params.layers[li];
        const LayerGrads& g = grads[li];
        if (!p.weights.empty()) update(p.weights, p.acc_weights, g.weights);
        if (!p.bias.empty()) update(p.bias, p.acc_bias, g.bias);
        if (!p.gamma.empty()) update(p.gamma, p.acc_gamma, g.gamma);
        if (!p.beta.empty()) update(p.beta, p.acc_beta, g.beta);
        if (!p.slopes.empty()) update(p.slopes, p.acc_slopes, g.slopes);
    }
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainConfig {
    std::size_t epochs = 30;
    std::size_t batch_size = 10;
    double lr = 0.01;
    double adagrad_epsilon = 1e-8;
    std::uint64_t seed = 0;
    int workers = 1;

    void validate() const {
        if (epochs < 1) throw ValidationError("train: epochs must be >= 1");
        if (batch_size < 1) throw ValidationError("train: batch size must be >= 1");
        if (!(lr > 0)) throw ValidationError("train: learning rate must be positive");
    }
};

struct EpochStats {
    std::size_t epoch;      // 1-based
    double train_rmse;
    double val_rmse;        // NaN when no validation set was given
};

struct TrainResult {
    NetParams params;
    std::vector<EpochStats> history;
};

namespace detail {

inline double eval_rmse(const NetSpec& spec, NetParams& params, const std::vector<Tensor4>& inputs,
                        const std::vector<Loadings>& targets, std::size_t batch_size, int workers) {
    double total = 0;
    for (std::size_t start = 0; start < inputs.size(); start += batch_size) {
        std::size_t end = std::min(inputs.size(), start + batch_size);
        std::vector<Tensor4> batch(inputs.begin() + std::ptrdiff_t(start),
                                   inputs.begin() + std::ptrdiff_t(end));
        std::vector<Loadings> tb(targets.begin() + std::ptrdiff_t(start),
                                 targets.begin() + std::ptrdiff_t(end));
        auto preds = forward(spec, params, batch, NetMode::Infer, nullptr, workers);
        total += loss_l2(preds, tb) * double(batch.size());
    }
    return std::sqrt(total / double(inputs.size()));
}

inline TrainResult train_tensors(const NetSpec& spec, const std::vector<Tensor4>& inputs,
                                 const std::vector<Loadings>& targets,
                                 const std::vector<Tensor4>& val_inputs,
                                 const std::vector<Loadings>& val_targets, const TrainConfig& cfg) {
    spec.validate();
    cfg.validate();
    if (inputs.empty()) throw ValidationError("train: empty dataset");
    if (inputs.size() != targets.size())
        throw ValidationError("train: input/target count mismatch");
    if (val_inputs.size() != val_targets.size())
        throw ValidationError("train: validation input/target count mismatch");
    for (const auto& t : targets)
        if (t.size() != spec.output_dim) throw ValidationError("train: target dim does not match spec");

    Rng master(cfg.seed);
    TrainResult res;
    res.params = xavier_init(spec, master.derive(0).seed());
    Rng shuffle_rng = master.derive(1);

    std::vector<std::size_t> order(inputs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double epoch_loss_sum = 0; // sum over samples of per-sample squared error
        std::size_t batch_index = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++batch_index) {
            std::size_t end = std::min(order.size(), start + cfg.batch_size);
            std::vector<Tensor4> batch;
            std::vector<Loadings> tb;
            batch.reserve(end - start);
            for (std::size_t i = start; i < end; ++i) {
                batch.push_back(inputs[order[i]]);
                tb.push_back(targets[order[i]]);
            }
            ForwardCache cache;
            auto preds = forward(spec, res.params, batch, NetMode::Train, &cache, cfg.workers);
            double batch_loss = loss_l2(preds, tb);
            if (!std::isfinite(batch_loss))
                throw Error("train: non-finite loss at epoch " + std::to_string(epoch + 1) +
                            " batch " + std::to_string(batch_index));
            epoch_loss_sum += batch_loss * double(batch.size());
            NetGrads grads = backward(spec, res.params, cache, loss_l2_grad(preds, tb), cfg.workers);
            adagrad_step(res.params, grads, cfg.lr, cfg.adagrad_epsilon);
        }
        EpochStats st;
        st.epoch = epoch + 1;
        st.train_rmse = std::sqrt(epoch_loss_sum / double(inputs.size()));
        st.val_rmse = val_inputs.empty()
                          ? std::numeric_limits<double>::quiet_NaN()
                          : eval_rmse(spec, res.params, val_inputs, val_targets, cfg.batch_size,
                                      cfg.workers);
        res.history.push_back(st);
    }
    return res;
}

} // namespace detail

/// Trains the regressor on (volume, loadings) pairs with mini-batch Adagrad.
/// Shuffling, initialization, and reductions all come from the seeded stream,
/// so a fixed seed reproduces the RMSE history bitwise at any worker count.
inline TrainResult train(const NetSpec& spec, const std::vector<Volume>& volumes,
                         const std::vector<Loadings>& targets, const std::vector<Volume>& val_volumes,
                         const std::vector<Loadings>& val_targets, const TrainConfig& cfg) {
    std::vector<Tensor4> inputs;
    inputs.reserve(volumes.size());
    for (const auto& v : volumes) inputs.push_back(to_tensor(v));
    std::vector<Tensor4> val_inputs;
    val_inputs.reserve(val_volumes.size());
    for (const auto& v : val_volumes) val_inputs.push_back(to_tensor(v));
    return detail::train_tensors(spec, inputs, targets, val_inputs, val_targets, cfg);
}

inline Loadings predict_loadings(const NetSpec& spec, const NetParams& params, const Volume& v) {
    std::vector<Tensor4> batch{to_tensor(v)};
    // infer mode leaves parameters untouched
    return forward(spec, const_cast<NetParams&>(params), batch, NetMode::Infer)[0];
}

inline void write_rmse_history(const std::vector<EpochStats>& history, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write rmse history: " + path);
    out << "epoch,train_rmse,val_rmse\n";
    for (const auto& e : history)
        out << e.epoch << ',' << fmt_double(e.train_rmse) << ',' << fmt_double(e.val_rmse) << '\n';
    if (!out) throw IoError("rmse history write failed: " + path);
}

// ---------------------------------------------------------------------------
// Serialization: "SNET0001", ASCII spec block, then per-layer little-endian
// f32 arrays in spec order.
// ---------------------------------------------------------------------------

inline constexpr char kSnetMagic[8] = {'S', 'N', 'E', 'T', '0', '0', '0', '1'};

namespace detail {

inline void for_each_array(const NetSpec& spec, NetParams& p,
                           const std::function<void(std::vector<double>&)>& fn) {
    for (std::size_t li = 0; li < spec.layers.size(); ++li) {
        LayerParams& lp = p.layers[li];
        for (auto* arr : {&lp.weights, &lp.bias, &lp.gamma, &lp.beta, &lp.running_mean,
                          &lp.running_var, &lp.slopes, &lp.acc_weights, &lp.acc_bias, &lp.acc_gamma,
                          &lp.acc_beta, &lp.acc_slopes})
            if (!arr->empty()) fn(*arr);
    }
}

} // namespace detail

inline void write_net(const NetSpec& spec, const NetParams& params, const std::string& path) {
    spec.validate();
    if (params.layers.size() != spec.layers.size())
        throw ValidationError("write_net: params do not match spec");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write network: " + path);
    out.write(kSnetMagic, 8);
    std::ostringstream head;
    head << "\ninput " << spec.input_channels << ' ' << spec.input_dims[0] << ' '
         << spec.input_dims[1] << ' ' << spec.input_dims[2] << "\noutput " << spec.output_dim
         << "\nlayers " << spec.layers.size() << '\n';
    for (const auto& l : spec.layers) {
        switch (l.kind) {
            case LayerKind::Conv3d:
                head << "conv3d " << l.in_channels << ' ' << l.out_channels << ' ' << l.kernel << ' '
                     << l.stride << '\n';
                break;
            case LayerKind::BatchNorm:
                head << "batchnorm " << l.channels << ' ' << fmt_double(l.epsilon) << ' '
                     << fmt_double(l.momentum) << '\n';
                break;
            case LayerKind::PReLU: head << "prelu " << l.channels << '\n'; break;
            case LayerKind::MaxPool: head << "maxpool2\n"; break;
            case LayerKind::Flatten: head << "flatten\n"; break;
            case LayerKind::FullyConnected:
                head << "fc " << l.in_channels << ' ' << l.out_channels << '\n';
                break;
            case LayerKind::Sigmoid: head << "sigmoid\n"; break;
        }
    }
    head << "end\n";
    out << head.str();
    detail::for_each_array(spec, const_cast<NetParams&>(params), [&](std::vector<double>& arr) {
        for (double v : arr) write_f32(out, float(v));
    });
    if (!out) throw IoError("network write failed: " + path);
}

inline std::pair<NetSpec, NetParams> read_net(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read network: " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kSnetMagic, 8) != 0)
        throw IoError("not a network file: " + path);

    auto next_line = [&]() {
        std::string line;
        if (!std::getline(in, line)) throw IoError("truncated network header: " + path);
        return line;
    };
    std::string first = next_line();
    if (!first.empty()) throw IoError("malformed network header: " + path);

    NetSpec spec;
    std::size_t n_layers = 0;
    {
        std::istringstream ls(next_line());
        std::string tag;
        ls >> tag >> spec.input_channels >> spec.input_dims[0] >> spec.input_dims[1] >>
            spec.input_dims[2];
        if (tag != "input" || !ls) throw IoError("malformed input line: " + path);
    }
    {
        std::istringstream ls(next_line());
        std::string tag;
        ls >> tag >> spec.output_dim;
        if (tag != "output" || !ls) throw IoError("malformed output line: " + path);
    }
    {
        std::istringstream ls(next_line());
        std::string tag;
        ls >> tag >> n_layers;
        if (tag != "layers" || !ls) throw IoError("malformed layers line: " + path);
    }
    for (std::size_t i = 0; i < n_layers; ++i) {
        std::istringstream ls(next_line());
        std::string kind;
        ls >> kind;
        if (kind == "conv3d") {
            LayerSpec l;
            l.kind = LayerKind::Conv3d;
            ls >> l.in_channels >> l.out_channels >> l.kernel >> l.stride;
            if (!ls) throw IoError("malformed conv3d line: " + path);
            spec.layers.push_back(l);
        } else if (kind == "batchnorm") {
            LayerSpec l;
            l.kind = LayerKind::BatchNorm;
            ls >> l.channels >> l.epsilon >> l.momentum;
            if (!ls) throw IoError("malformed batchnorm line: " + path);
            spec.layers.push_back(l);
        } else if (kind == "prelu") {
            LayerSpec l;
            l.kind = LayerKind::PReLU;
            ls >> l.channels;
            if (!ls) throw IoError("malformed prelu line: " + path);
            spec.layers.push_back(l);
        } else if (kind == "maxpool2") {
            spec.layers.push_back(max_pool2());
        } else if (kind == "flatten") {
            spec.layers.push_back(flatten());
        } else if (kind == "fc") {
            LayerSpec l;
            l.kind = LayerKind::FullyConnected;
            ls >> l.in_channels >> l.out_channels;
            if (!ls) throw IoError("malformed fc line: " + path);
            spec.layers.push_back(l);
        } else if (kind == "sigmoid") {
            spec.layers.push_back(sigmoid());
        } else {
            throw IoError("unknown layer kind '" + kind + "' in " + path);
        }
    }
    if (next_line() != "end") throw IoError("missing end marker: " + path);
    spec.validate();

    // allocate the arrays via a throwaway init, then overwrite from the file
    NetParams params = xavier_init(spec, 0);
    detail::for_each_array(spec, params, [&](std::vector<double>& arr) {
        for (auto& v : arr) v = double(read_f32(in));
    });
    if (!in) throw IoError("truncated network payload: " + path);
    char extra;
    if (in.read(&extra, 1)) throw IoError("trailing bytes in network file: " + path);
    return {std::move(spec), std::move(params)};
}

// ---------------------------------------------------------------------------
// Downstream MLP: loadings -> scalar in [0,1]
// ---------------------------------------------------------------------------

struct MlpConfig {
    std::uint32_t hidden = 16;
    std::size_t epochs = 200;
    std::size_t batch_size = 10;
    double lr = 0.05;
    std::uint64_t seed = 0;
};

struct MlpModel {
    NetSpec spec;
    NetParams params;
    std::vector<EpochStats> history;
};

inline NetSpec mlp_spec(std::size_t input_dim, std::uint32_t hidden) {
    NetSpec s;
    s.input_channels = std::uint32_t(input_dim);
    s.input_dims = {1, 1, 1};
    s.output_dim = 1;
    s.layers = {fully_connected(std::uint32_t(input_dim), hidden), prelu(hidden),
                fully_connected(hidden, 1), sigmoid()};
    s.validate();
    return s;
}

inline Tensor4 loadings_tensor(const Loadings& l) {
    Tensor4 t;
    t.channels = std::uint32_t(l.size());
    t.nx = t.ny = t.nz = 1;
    t.data = l;
    return t;
}

inline MlpModel train_mlp(const std::vector<Loadings>& inputs, const std::vector<double>& targets,
                          const MlpConfig& cfg) {
    if (inputs.empty()) throw ValidationError("mlp: empty dataset");
    if (inputs.size() != targets.size()) throw ValidationError("mlp: input/target count mismatch");
    for (double t : targets)
        if (!std::isfinite(t)) throw ValidationError("mlp: non-finite target");
    MlpModel model;
    model.spec = mlp_spec(inputs[0].size(), cfg.hidden);
    std::vector<Tensor4> tensors;
    tensors.reserve(inputs.size());
    for (const auto& l : inputs) {
        if (l.size() != inputs[0].size()) throw ValidationError("mlp: ragged input loadings");
        tensors.push_back(loadings_tensor(l));
    }
    std::vector<Loadings> t1;
    t1.reserve(targets.size());
    for (double t : targets) t1.push_back(Loadings{t});
    TrainConfig tc;
    tc.epochs = cfg.epochs;
    tc.batch_size = cfg.batch_size;
    tc.lr = cfg.lr;
    tc.seed = cfg.seed;
    TrainResult tr = detail::train_tensors(model.spec, tensors, t1, {}, {}, tc);
    model.params = std::move(tr.params);
    model.history = std::move(tr.history);
    return model;
}

inline double predict_mlp(const MlpModel& model, const Loadings& input) {
    std::vector<Tensor4> batch{loadings_tensor(input)};
    return forward(model.spec, const_cast<NetParams&>(model.params), batch, NetMode::Infer)[0][0];
}

} // namespace shapeforge
