#pragma once

#include <vector>

#include "eaef/ops.hpp"

namespace eaef {

// Per-pixel class probabilities from [N,K,H,W] logits, softmax over K.
template <typename T>
Tens<T> pixel_softmax(const Tens<T>& logits) {
    check_nchw(logits, "pixel_softmax");
    const int n = logits.dim(0), k = logits.dim(1), hw = logits.dim(2) * logits.dim(3);
    Tens<T> probs(logits.dims);
    for (int i = 0; i < n; ++i)
        for (int px = 0; px < hw; ++px) {
            double mx = -1e300;
            for (int j = 0; j < k; ++j)
                mx = std::max(mx, static_cast<double>(logits.v[(static_cast<size_t>(i) * k + j) * hw + px]));
            double denom = 0.0;
            for (int j = 0; j < k; ++j)
                denom += std::exp(static_cast<double>(
                                      logits.v[(static_cast<size_t>(i) * k + j) * hw + px]) -
                                  mx);
            for (int j = 0; j < k; ++j) {
                const size_t idx = (static_cast<size_t>(i) * k + j) * hw + px;
                probs.v[idx] =
                    static_cast<T>(std::exp(static_cast<double>(logits.v[idx]) - mx) / denom);
            }
        }
    return probs;
}

inline void check_labels(const std::vector<int>& labels, int64_t expected, int num_classes) {
    if (static_cast<int64_t>(labels.size()) != expected)
        throw DimError("label map size mismatch");
    for (int y : labels)
        if (y < 0 || y >= num_classes) throw DimError("label out of range");
}

// Soft dice on softmax probability mass, eps = 1, macro-averaged over the
// classes present in the batch. Returns a value in [0,1].
template <typename T>
double dice_loss(const Tens<T>& logits, const std::vector<int>& labels,
                 Tens<T>* grad_logits = nullptr) {
    const int n = logits.dim(0), k = logits.dim(1), hw = logits.dim(2) * logits.dim(3);
    check_labels(labels, static_cast<int64_t>(n) * hw, k);
    Tens<T> probs = pixel_softmax(logits);
    const double eps = 1.0;

    std::vector<double> inter(k, 0.0), psum(k, 0.0);
    std::vector<int64_t> ysum(k, 0);
    for (int i = 0; i < n; ++i)
        for (int px = 0; px < hw; ++px) {
            const int y = labels[static_cast<size_t>(i) * hw + px];
            ++ysum[y];
            for (int j = 0; j < k; ++j) {
                const double pv = probs.v[(static_cast<size_t>(i) * k + j) * hw + px];
                psum[j] += pv;
                if (j == y) inter[j] += pv;
            }
        }

    int present = 0;
    double dice_sum = 0.0;
    std::vector<double> dnum(k, 0.0), dden(k, 0.0);
    for (int j = 0; j < k; ++j) {
        if (ysum[j] == 0) continue;
        ++present;
        dnum[j] = 2.0 * inter[j] + eps;
        dden[j] = psum[j] + static_cast<double>(ysum[j]) + eps;
        dice_sum += dnum[j] / dden[j];
    }
    const double loss = 1.0 - (present > 0 ? dice_sum / present : 1.0);

    if (grad_logits) {
        *grad_logits = Tens<T>(logits.dims);
        if (present > 0) {
            // d loss / d p_j(px) = -(1/present) * (2*[y==j]*den - num) / den^2
            for (int i = 0; i < n; ++i)
                for (int px = 0; px < hw; ++px) {
                    const int y = labels[static_cast<size_t>(i) * hw + px];
                    std::vector<double> dp(k, 0.0);
                    for (int j = 0; j < k; ++j) {
                        if (ysum[j] == 0) continue;
                        const double ddice =
                            (2.0 * (j == y ? 1.0 : 0.0) * dden[j] - dnum[j]) / (dden[j] * dden[j]);
                        dp[j] = -ddice / present;
                    }
                    // Chain through the per-pixel softmax.
                    double dot = 0.0;
                    for (int j = 0; j < k; ++j)
                        dot += dp[j] * probs.v[(static_cast<size_t>(i) * k + j) * hw + px];
                    for (int j = 0; j < k; ++j) {
                        const size_t idx = (static_cast<size_t>(i) * k + j) * hw + px;
                        grad_logits->v[idx] =
                            static_cast<T>(probs.v[idx] * (dp[j] - dot));
                    }
                }
        }
    }
    return loss;
}

// Cross-entropy against label-smoothed targets, mean over pixels.
template <typename T>
double soft_cross_entropy(const Tens<T>& logits, const std::vector<int>& labels,
                          double smoothing = 0.1, Tens<T>* grad_logits = nullptr) {
    const int n = logits.dim(0), k = logits.dim(1), hw = logits.dim(2) * logits.dim(3);
    check_labels(labels, static_cast<int64_t>(n) * hw, k);
    if (smoothing < 0.0 || smoothing >= 1.0) throw DimError("soft_cross_entropy: bad smoothing");
    Tens<T> probs = pixel_softmax(logits);
    const double off = (k > 1) ? smoothing / (k - 1) : 0.0;
    const double on = 1.0 - smoothing;
    const int64_t npix = static_cast<int64_t>(n) * hw;

    double loss = 0.0;
    for (int i = 0; i < n; ++i)
        for (int px = 0; px < hw; ++px) {
            const int y = labels[static_cast<size_t>(i) * hw + px];
            for (int j = 0; j < k; ++j) {
                const double tj = (j == y) ? on : off;
                if (tj == 0.0) continue;
                const double pv = probs.v[(static_cast<size_t>(i) * k + j) * hw + px];
                loss -= tj * std::log(std::max(pv, 1e-30));
            }
        }
    loss /= static_cast<double>(npix);

    if (grad_logits) {
        *grad_logits = Tens<T>(logits.dims);
        for (int i = 0; i < n; ++i)
            for (int px = 0; px < hw; ++px) {
                const int y = labels[static_cast<size_t>(i) * hw + px];
                for (int j = 0; j < k; ++j) {
                    const double tj = (j == y) ? on : off;
                    const size_t idx = (static_cast<size_t>(i) * k + j) * hw + px;
                    grad_logits->v[idx] =
                        static_cast<T>((static_cast<double>(probs.v[idx]) - tj) / npix);
                }
            }
    }
    return loss;
}

}  // namespace eaef
