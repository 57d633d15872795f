#pragma once

#include <algorithm>
#include <utility>

#include "eaef/tensor.hpp"

// Differentiable building blocks of the fusion graph. Every op is a pure
// forward function paired with an analytic backward; callers chain the
// backwards in reverse topological order. Reductions accumulate in double
// regardless of the stored scalar type.

namespace eaef {

template <typename T>
void check_nchw(const Tens<T>& x, const char* who) {
    if (x.rank() != 4) throw DimError(std::string(who) + ": expected rank-4 tensor");
    if (x.dim(2) < 1 || x.dim(3) < 1)
        throw DimError(std::string(who) + ": zero-sized spatial dims");
}

// ---- global average pooling -------------------------------------------------

template <typename T>
Tens<T> global_avg_pool(const Tens<T>& x) {
    check_nchw(x, "global_avg_pool");
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    Tens<T> out({n, c});
    const double inv = 1.0 / (static_cast<double>(h) * w);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < c; ++j) {
            double acc = 0.0;
            const T* p = &x.v[((static_cast<size_t>(i) * c + j) * h) * w];
            for (int k = 0; k < h * w; ++k) acc += static_cast<double>(p[k]);
            out.at(i, j) = static_cast<T>(acc * inv);
        }
    return out;
}

template <typename T>
Tens<T> global_avg_pool_backward(const Tens<T>& grad_out, const std::vector<int>& in_dims) {
    const int n = in_dims[0], c = in_dims[1], h = in_dims[2], w = in_dims[3];
    Tens<T> gx(in_dims);
    const double inv = 1.0 / (static_cast<double>(h) * w);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < c; ++j) {
            const T g = static_cast<T>(static_cast<double>(grad_out.at(i, j)) * inv);
            T* p = &gx.v[((static_cast<size_t>(i) * c + j) * h) * w];
            for (int k = 0; k < h * w; ++k) p[k] = g;
        }
    return gx;
}

// ---- global max pooling -----------------------------------------------------

template <typename T>
struct MaxPoolResult {
    Tens<T> out;                  // [N,C]
    std::vector<int32_t> argmax;  // flat spatial index per (n,c), first max in row-major order
};

template <typename T>
MaxPoolResult<T> global_max_pool(const Tens<T>& x) {
    check_nchw(x, "global_max_pool");
    const int n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
    MaxPoolResult<T> r{Tens<T>({n, c}), std::vector<int32_t>(static_cast<size_t>(n) * c)};
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < c; ++j) {
            const T* p = &x.v[(static_cast<size_t>(i) * c + j) * hw];
            int best = 0;
            for (int k = 1; k < hw; ++k)
                if (p[k] > p[best]) best = k;
            r.out.at(i, j) = p[best];
            r.argmax[static_cast<size_t>(i) * c + j] = best;
        }
    return r;
}

template <typename T>
Tens<T> global_max_pool_backward(const Tens<T>& grad_out, const std::vector<int32_t>& argmax,
                                 const std::vector<int>& in_dims) {
    const int n = in_dims[0], c = in_dims[1], hw = in_dims[2] * in_dims[3];
    Tens<T> gx(in_dims);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < c; ++j)
            gx.v[(static_cast<size_t>(i) * c + j) * hw + argmax[static_cast<size_t>(i) * c + j]] =
                grad_out.at(i, j);
    return gx;
}

// ---- dense layers and MLPs --------------------------------------------------

template <typename T>
Tens<T> dense_forward(const Tens<T>& x, const DenseLayerParamsT<T>& p) {
    if (x.rank() != 2 || x.dim(1) != p.in_features())
        throw DimError("dense_forward: input width does not match weight");
    const int n = x.dim(0), ci = p.in_features(), co = p.out_features();
    Tens<T> out({n, co});
    for (int i = 0; i < n; ++i)
        for (int o = 0; o < co; ++o) {
            double acc = static_cast<double>(p.bias.v[o]);
            for (int k = 0; k < ci; ++k)
                acc += static_cast<double>(p.weight.v[static_cast<size_t>(o) * ci + k]) *
                       static_cast<double>(x.at(i, k));
            out.at(i, o) = static_cast<T>(acc);
        }
    return out;
}

// Accumulates weight/bias grads into p.grad; returns grad wrt input.
template <typename T>
Tens<T> dense_backward(const Tens<T>& grad_out, const Tens<T>& x, DenseLayerParamsT<T>& p) {
    const int n = x.dim(0), ci = p.in_features(), co = p.out_features();
    p.weight.ensure_grad();
    p.bias.ensure_grad();
    Tens<T> gx(x.dims);
    for (int i = 0; i < n; ++i)
        for (int o = 0; o < co; ++o) {
            const T g = grad_out.at(i, o);
            p.bias.grad[o] += g;
            for (int k = 0; k < ci; ++k) {
                p.weight.grad[static_cast<size_t>(o) * ci + k] += g * x.at(i, k);
                gx.at(i, k) += g * p.weight.v[static_cast<size_t>(o) * ci + k];
            }
        }
    return gx;
}

enum class Activation { Identity, Relu };

template <typename T>
Tens<T> relu(const Tens<T>& x) {
    Tens<T> out(x.dims);
    for (int64_t i = 0; i < x.size(); ++i) out.v[i] = x.v[i] > T(0) ? x.v[i] : T(0);
    return out;
}

template <typename T>
Tens<T> relu_backward(const Tens<T>& grad_out, const Tens<T>& input) {
    Tens<T> gx(input.dims);
    for (int64_t i = 0; i < input.size(); ++i)
        gx.v[i] = input.v[i] > T(0) ? grad_out.v[i] : T(0);
    return gx;
}

template <typename T>
struct MlpState {
    std::vector<Tens<T>> pre;   // pre-activation per layer
    std::vector<Tens<T>> post;  // post-activation per layer (last == pre.back())
};

// Affine -> hidden activation -> ... -> affine. No output activation; the
// caller applies sigmoid where the graph needs it.
template <typename T>
Tens<T> mlp_forward(const Tens<T>& x, const std::vector<DenseLayerParamsT<T>>& layers,
                    Activation hidden, MlpState<T>* state = nullptr) {
    Tens<T> cur = x;
    if (state) {
        state->pre.clear();
        state->post.clear();
    }
    for (size_t l = 0; l < layers.size(); ++l) {
        Tens<T> z = dense_forward(cur, layers[l]);
        Tens<T> a = (l + 1 < layers.size() && hidden == Activation::Relu) ? relu(z) : z;
        if (state) {
            state->pre.push_back(z);
            state->post.push_back(a);
        }
        cur = std::move(a);
    }
    return cur;
}

template <typename T>
Tens<T> mlp_backward(const Tens<T>& grad_out, const Tens<T>& input,
                     std::vector<DenseLayerParamsT<T>>& layers, Activation hidden,
                     const MlpState<T>& state) {
    Tens<T> g = grad_out;
    for (size_t l = layers.size(); l-- > 0;) {
        if (l + 1 < layers.size() && hidden == Activation::Relu)
            g = relu_backward(g, state.pre[l]);
        const Tens<T>& in = (l == 0) ? input : state.post[l - 1];
        g = dense_backward(g, in, layers[l]);
    }
    return g;
}

// ---- sigmoid ----------------------------------------------------------------

template <typename T>
Tens<T> sigmoid(const Tens<T>& x) {
    Tens<T> out(x.dims);
    for (int64_t i = 0; i < x.size(); ++i)
        out.v[i] = static_cast<T>(1.0 / (1.0 + std::exp(-static_cast<double>(x.v[i]))));
    return out;
}

template <typename T>
Tens<T> sigmoid_backward(const Tens<T>& grad_out, const Tens<T>& output) {
    Tens<T> gx(output.dims);
    for (int64_t i = 0; i < output.size(); ++i)
        gx.v[i] = grad_out.v[i] * output.v[i] * (T(1) - output.v[i]);
    return gx;
}

// ---- convolution ------------------------------------------------------------

// Same padding (pad = k/2, zero fill), odd kernels only. With stride s the
// output is H/s x W/s; spatial dims must divide by s.
template <typename T>
Tens<T> conv2d(const Tens<T>& x, const ConvParamsT<T>& p, int stride = 1) {
    check_nchw(x, "conv2d");
    const int kh = p.kh(), kw = p.kw();
    if (kh % 2 == 0 || kw % 2 == 0) throw DimError("conv2d: even kernel size");
    if (x.dim(1) != p.in_channels()) throw DimError("conv2d: channel mismatch");
    if (p.mode == ConvMode::Depthwise && p.kernel.dim(1) != 1)
        throw DimError("conv2d: depthwise kernel must have one input slice per channel");
    if (x.dim(2) % stride != 0 || x.dim(3) % stride != 0)
        throw DimError("conv2d: spatial dims not divisible by stride");
    const int n = x.dim(0), ci = x.dim(1), h = x.dim(2), w = x.dim(3);
    const int co = p.out_channels(), ho = h / stride, wo = w / stride;
    const int ph = kh / 2, pw = kw / 2;
    Tens<T> out({n, co, ho, wo});
    for (int i = 0; i < n; ++i)
        for (int o = 0; o < co; ++o) {
            const int c0 = (p.mode == ConvMode::Depthwise) ? o : 0;
            const int c1 = (p.mode == ConvMode::Depthwise) ? o + 1 : ci;
            for (int y = 0; y < ho; ++y)
                for (int z = 0; z < wo; ++z) {
                    double acc = static_cast<double>(p.bias.v[o]);
                    for (int c = c0; c < c1; ++c) {
                        const int kc = (p.mode == ConvMode::Depthwise) ? 0 : c;
                        for (int dy = 0; dy < kh; ++dy) {
                            const int sy = y * stride + dy - ph;
                            if (sy < 0 || sy >= h) continue;
                            for (int dz = 0; dz < kw; ++dz) {
                                const int sz = z * stride + dz - pw;
                                if (sz < 0 || sz >= w) continue;
                                acc += static_cast<double>(p.kernel.v[((static_cast<size_t>(o) *
                                                                            p.kernel.dim(1) +
                                                                        kc) *
                                                                           kh +
                                                                       dy) *
                                                                          kw +
                                                                      dz]) *
                                       static_cast<double>(x.at(i, c, sy, sz));
                            }
                        }
                    }
                    out.at(i, o, y, z) = static_cast<T>(acc);
                }
        }
    return out;
}

// Accumulates kernel/bias grads into p; returns grad wrt input.
template <typename T>
Tens<T> conv2d_backward(const Tens<T>& grad_out, const Tens<T>& x, ConvParamsT<T>& p,
                        int stride = 1) {
    const int kh = p.kh(), kw = p.kw();
    const int n = x.dim(0), ci = x.dim(1), h = x.dim(2), w = x.dim(3);
    const int co = p.out_channels(), ho = h / stride, wo = w / stride;
    const int ph = kh / 2, pw = kw / 2;
    p.kernel.ensure_grad();
    p.bias.ensure_grad();
    Tens<T> gx(x.dims);
    for (int i = 0; i < n; ++i)
        for (int o = 0; o < co; ++o) {
            const int c0 = (p.mode == ConvMode::Depthwise) ? o : 0;
            const int c1 = (p.mode == ConvMode::Depthwise) ? o + 1 : ci;
            for (int y = 0; y < ho; ++y)
                for (int z = 0; z < wo; ++z) {
                    const T g = grad_out.at(i, o, y, z);
                    if (g == T(0)) continue;
                    p.bias.grad[o] += g;
                    for (int c = c0; c < c1; ++c) {
                        const int kc = (p.mode == ConvMode::Depthwise) ? 0 : c;
                        for (int dy = 0; dy < kh; ++dy) {
                            const int sy = y * stride + dy - ph;
                            if (sy < 0 || sy >= h) continue;
                            for (int dz = 0; dz < kw; ++dz) {
                                const int sz = z * stride + dz - pw;
                                if (sz < 0 || sz >= w) continue;
                                const size_t ki =
                                    ((static_cast<size_t>(o) * p.kernel.dim(1) + kc) * kh + dy) *
                                        kw +
                                    dz;
                                p.kernel.grad[ki] += g * x.at(i, c, sy, sz);
                                gx.at(i, c, sy, sz) += g * p.kernel.v[ki];
                            }
                        }
                    }
                }
        }
    return gx;
}

// ---- spatial softmax --------------------------------------------------------

// Softmax over the H*W cells of each (n,c) map; max-subtracted for stability.
template <typename T>
Tens<T> spatial_softmax(const Tens<T>& x) {
    check_nchw(x, "spatial_softmax");
    const int n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
    Tens<T> out(x.dims);
    for (int i = 0; i < n * c; ++i) {
        const T* p = &x.v[static_cast<size_t>(i) * hw];
        T* q = &out.v[static_cast<size_t>(i) * hw];
        T mx = p[0];
        for (int k = 1; k < hw; ++k) mx = std::max(mx, p[k]);
        double denom = 0.0;
        for (int k = 0; k < hw; ++k) denom += std::exp(static_cast<double>(p[k] - mx));
        for (int k = 0; k < hw; ++k)
            q[k] = static_cast<T>(std::exp(static_cast<double>(p[k] - mx)) / denom);
    }
    return out;
}

template <typename T>
Tens<T> spatial_softmax_backward(const Tens<T>& grad_out, const Tens<T>& output) {
    const int n = output.dim(0), c = output.dim(1), hw = output.dim(2) * output.dim(3);
    Tens<T> gx(output.dims);
    for (int i = 0; i < n * c; ++i) {
        const T* s = &output.v[static_cast<size_t>(i) * hw];
        const T* g = &grad_out.v[static_cast<size_t>(i) * hw];
        double dot = 0.0;
        for (int k = 0; k < hw; ++k) dot += static_cast<double>(g[k]) * s[k];
        T* q = &gx.v[static_cast<size_t>(i) * hw];
        for (int k = 0; k < hw; ++k)
            q[k] = static_cast<T>(s[k] * (static_cast<double>(g[k]) - dot));
    }
    return gx;
}

// ---- channel scaling --------------------------------------------------------

// out[n,c,h,w] = x[n,c,h,w] * g[n,c]
template <typename T>
Tens<T> channel_scale(const Tens<T>& x, const Tens<T>& g) {
    check_nchw(x, "channel_scale");
    if (g.rank() != 2 || g.dim(0) != x.dim(0) || g.dim(1) != x.dim(1))
        throw DimError("channel_scale: gain shape mismatch");
    const int n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
    Tens<T> out(x.dims);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < c; ++j) {
            const T s = g.at(i, j);
            const size_t base = (static_cast<size_t>(i) * c + j) * hw;
            for (int k = 0; k < hw; ++k) out.v[base + k] = x.v[base + k] * s;
        }
    return out;
}

template <typename T>
Tens<T> channel_scale_backward_input(const Tens<T>& grad_out, const Tens<T>& g) {
    return channel_scale(grad_out, g);
}

template <typename T>
Tens<T> channel_scale_backward_gain(const Tens<T>& grad_out, const Tens<T>& x) {
    const int n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
    Tens<T> gg({n, c});
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < c; ++j) {
            const size_t base = (static_cast<size_t>(i) * c + j) * hw;
            double acc = 0.0;
            for (int k = 0; k < hw; ++k)
                acc += static_cast<double>(grad_out.v[base + k]) * x.v[base + k];
            gg.at(i, j) = static_cast<T>(acc);
        }
    return gg;
}

// ---- concat / split along channels ------------------------------------------

template <typename T>
Tens<T> concat_channels(const Tens<T>& a, const Tens<T>& b) {
    check_nchw(a, "concat_channels");
    check_nchw(b, "concat_channels");
    if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3))
        throw DimError("concat_channels: N/H/W mismatch");
    const int n = a.dim(0), ca = a.dim(1), cb = b.dim(1), hw = a.dim(2) * a.dim(3);
    Tens<T> out({n, ca + cb, a.dim(2), a.dim(3)});
    for (int i = 0; i < n; ++i) {
        std::copy_n(&a.v[static_cast<size_t>(i) * ca * hw], static_cast<size_t>(ca) * hw,
                    &out.v[static_cast<size_t>(i) * (ca + cb) * hw]);
        std::copy_n(&b.v[static_cast<size_t>(i) * cb * hw], static_cast<size_t>(cb) * hw,
                    &out.v[(static_cast<size_t>(i) * (ca + cb) + ca) * hw]);
    }
    return out;
}

template <typename T>
std::pair<Tens<T>, Tens<T>> split_channels(const Tens<T>& x) {
    check_nchw(x, "split_channels");
    if (x.dim(1) % 2 != 0) throw DimError("split_channels: odd channel count");
    const int n = x.dim(0), c = x.dim(1) / 2, hw = x.dim(2) * x.dim(3);
    Tens<T> a({n, c, x.dim(2), x.dim(3)}), b(a.dims);
    for (int i = 0; i < n; ++i) {
        std::copy_n(&x.v[static_cast<size_t>(i) * 2 * c * hw], static_cast<size_t>(c) * hw,
                    &a.v[static_cast<size_t>(i) * c * hw]);
        std::copy_n(&x.v[(static_cast<size_t>(i) * 2 * c + c) * hw], static_cast<size_t>(c) * hw,
                    &b.v[static_cast<size_t>(i) * c * hw]);
    }
    return {std::move(a), std::move(b)};
}

// ---- elementwise ------------------------------------------------------------

template <typename T>
Tens<T> add(const Tens<T>& a, const Tens<T>& b) {
    if (!a.same_shape(b)) throw DimError("add: shape mismatch");
    Tens<T> out(a.dims);
    for (int64_t i = 0; i < a.size(); ++i) out.v[i] = a.v[i] + b.v[i];
    return out;
}

template <typename T>
Tens<T> mul(const Tens<T>& a, const Tens<T>& b) {
    if (!a.same_shape(b)) throw DimError("mul: shape mismatch");
    Tens<T> out(a.dims);
    for (int64_t i = 0; i < a.size(); ++i) out.v[i] = a.v[i] * b.v[i];
    return out;
}

template <typename T>
Tens<T> scalar_mul(const Tens<T>& a, T s) {
    Tens<T> out(a.dims);
    for (int64_t i = 0; i < a.size(); ++i) out.v[i] = a.v[i] * s;
    return out;
}

template <typename T>
Tens<T> one_minus(const Tens<T>& a) {
    Tens<T> out(a.dims);
    for (int64_t i = 0; i < a.size(); ++i) out.v[i] = T(1) - a.v[i];
    return out;
}

// ---- nearest-neighbour upsampling -------------------------------------------

template <typename T>
Tens<T> upsample_nearest(const Tens<T>& x, int factor) {
    check_nchw(x, "upsample_nearest");
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    Tens<T> out({n, c, h * factor, w * factor});
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < c; ++j)
            for (int y = 0; y < h * factor; ++y)
                for (int z = 0; z < w * factor; ++z)
                    out.at(i, j, y, z) = x.at(i, j, y / factor, z / factor);
    return out;
}

template <typename T>
Tens<T> upsample_nearest_backward(const Tens<T>& grad_out, int factor) {
    const int n = grad_out.dim(0), c = grad_out.dim(1);
    const int h = grad_out.dim(2) / factor, w = grad_out.dim(3) / factor;
    Tens<T> gx({n, c, h, w});
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < c; ++j)
            for (int y = 0; y < grad_out.dim(2); ++y)
                for (int z = 0; z < grad_out.dim(3); ++z)
                    gx.at(i, j, y / factor, z / factor) += grad_out.at(i, j, y, z);
    return gx;
}

}  // namespace eaef
