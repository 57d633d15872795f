#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace eaef {

struct DimError : std::runtime_error {
    explicit DimError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Dense row-major tensor. Rank is usually 4 (N,C,H,W) or 2 (N,C); the
// grad slot is allocated lazily by backward passes.
template <typename T>
struct Tens {
    std::vector<int> dims;
    std::vector<T> v;
    std::vector<T> grad;

    Tens() = default;
    explicit Tens(std::vector<int> d) : dims(std::move(d)) {
        v.assign(static_cast<size_t>(count(dims)), T(0));
    }
    Tens(std::vector<int> d, std::vector<T> vals) : dims(std::move(d)), v(std::move(vals)) {
        if (static_cast<int64_t>(v.size()) != count(dims))
            throw DimError("tensor value count does not match dims");
    }

    static int64_t count(const std::vector<int>& d) {
        int64_t n = 1;
        for (int x : d) {
            if (x < 0) throw DimError("negative dimension");
            n *= x;
        }
        return n;
    }

    static Tens zeros(std::vector<int> d) { return Tens(std::move(d)); }
    static Tens full(std::vector<int> d, T value) {
        Tens t(std::move(d));
        std::fill(t.v.begin(), t.v.end(), value);
        return t;
    }

    int64_t size() const { return static_cast<int64_t>(v.size()); }
    int rank() const { return static_cast<int>(dims.size()); }
    int dim(int i) const { return dims[static_cast<size_t>(i)]; }

    bool same_shape(const Tens& o) const { return dims == o.dims; }

    // 4-D accessor, (n,c,h,w) row-major.
    T& at(int n, int c, int h, int w) {
        return v[((static_cast<size_t>(n) * dims[1] + c) * dims[2] + h) * dims[3] + w];
    }
    T at(int n, int c, int h, int w) const {
        return v[((static_cast<size_t>(n) * dims[1] + c) * dims[2] + h) * dims[3] + w];
    }
    // 2-D accessor.
    T& at(int n, int c) { return v[static_cast<size_t>(n) * dims[1] + c]; }
    T at(int n, int c) const { return v[static_cast<size_t>(n) * dims[1] + c]; }

    void ensure_grad() {
        if (grad.size() != v.size()) grad.assign(v.size(), T(0));
    }
    void zero_grad() { grad.assign(v.size(), T(0)); }

    bool all_finite() const {
        for (T x : v)
            if (!std::isfinite(static_cast<double>(x))) return false;
        return true;
    }
};

using Tensor = Tens<float>;
using DTensor = Tens<double>;

template <typename T, typename U>
Tens<T> cast_tensor(const Tens<U>& x) {
    Tens<T> out(x.dims);
    for (int64_t i = 0; i < x.size(); ++i) out.v[i] = static_cast<T>(x.v[i]);
    return out;
}

template <typename T>
struct DenseLayerParamsT {
    Tens<T> weight;  // [out, in]
    Tens<T> bias;    // [out]

    int in_features() const { return weight.dim(1); }
    int out_features() const { return weight.dim(0); }
};

enum class ConvMode { Standard, Depthwise };

template <typename T>
struct ConvParamsT {
    Tens<T> kernel;  // [outC, inC, kH, kW]; depthwise: [C, 1, kH, kW]
    Tens<T> bias;    // [outC]
    ConvMode mode = ConvMode::Standard;

    int out_channels() const { return kernel.dim(0); }
    int in_channels() const {
        return mode == ConvMode::Depthwise ? kernel.dim(0) : kernel.dim(1);
    }
    int kh() const { return kernel.dim(2); }
    int kw() const { return kernel.dim(3); }
};

using DenseLayerParams = DenseLayerParamsT<float>;
using ConvParams = ConvParamsT<float>;

template <typename T, typename U>
DenseLayerParamsT<T> cast_params(const DenseLayerParamsT<U>& p) {
    return {cast_tensor<T>(p.weight), cast_tensor<T>(p.bias)};
}

template <typename T, typename U>
ConvParamsT<T> cast_params(const ConvParamsT<U>& p) {
    return {cast_tensor<T>(p.kernel), cast_tensor<T>(p.bias), p.mode};
}

}  // namespace eaef
