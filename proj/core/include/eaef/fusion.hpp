#pragma once

#include <random>
#include <string>
#include <utility>
#include <vector>

#include "eaef/ops.hpp"

// The explicit attention-enhanced fusion block: channel weight extraction,
// the interaction and complement branches, and the spatial-attention merge.

namespace eaef {

// Sign pattern of the per-channel weights (R, T). Zeros count as the
// non-negative rows; R's sign breaks exact ties.
enum class CaseLabel : uint8_t { BothHigh, OnlyT, OnlyR, BothLow };

inline const char* case_name(CaseLabel c) {
    switch (c) {
        case CaseLabel::BothHigh: return "both_high";
        case CaseLabel::OnlyT: return "only_t";
        case CaseLabel::OnlyR: return "only_r";
        case CaseLabel::BothLow: return "both_low";
    }
    return "?";
}

struct FusionOptions {
    bool use_aib = true;
    bool use_acb = true;
    bool interaction_enabled = true;
    // Test hook: force the interaction module's sigmoid gate to all-ones.
    bool bypass_interaction_gate = false;
    // Merge conv emits one shared attention map (2c -> 1) instead of
    // per-channel logits (2c -> 2c).
    bool shared_spatial_map = false;
};

template <typename T>
struct EaefParamsT {
    std::vector<DenseLayerParamsT<T>> mlp_rgb;  // c -> h -> c
    std::vector<DenseLayerParamsT<T>> mlp_t;
    ConvParamsT<T> interaction_dw;              // depthwise 3x3 over 2c
    std::vector<DenseLayerParamsT<T>> interaction_mlp;  // 2c -> h2 -> 2c
    ConvParamsT<T> merge_conv;                  // 1x1, 2c -> 2c (or 2c -> 1)
    int channels = 0;
};

using EaefParams = EaefParamsT<float>;

template <typename T, typename U>
EaefParamsT<T> cast_eaef_params(const EaefParamsT<U>& p) {
    EaefParamsT<T> out;
    for (const auto& l : p.mlp_rgb) out.mlp_rgb.push_back(cast_params<T>(l));
    for (const auto& l : p.mlp_t) out.mlp_t.push_back(cast_params<T>(l));
    out.interaction_dw = cast_params<T>(p.interaction_dw);
    for (const auto& l : p.interaction_mlp) out.interaction_mlp.push_back(cast_params<T>(l));
    out.merge_conv = cast_params<T>(p.merge_conv);
    out.channels = p.channels;
    return out;
}

// Squeeze-style bottleneck width: reduction ratio max(1, c/16).
inline int mlp_hidden_width(int c) { return std::min(c, 16); }

template <typename T>
Tens<T> uniform_fan_in(std::vector<int> dims, int fan_in, std::mt19937_64& rng) {
    Tens<T> t(std::move(dims));
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto& x : t.v) x = static_cast<T>(dist(rng));
    return t;
}

template <typename T>
DenseLayerParamsT<T> make_dense(int in, int out, std::mt19937_64& rng) {
    return {uniform_fan_in<T>({out, in}, in, rng), Tens<T>({out})};
}

template <typename T>
ConvParamsT<T> make_conv(int in, int out, int k, ConvMode mode, std::mt19937_64& rng) {
    const int slices = (mode == ConvMode::Depthwise) ? 1 : in;
    return {uniform_fan_in<T>({out, slices, k, k}, slices * k * k, rng), Tens<T>({out}), mode};
}

template <typename T>
EaefParamsT<T> make_eaef_params(int c, std::mt19937_64& rng, const FusionOptions& opt = {}) {
    if (c < 1) throw DimError("make_eaef_params: channel count must be positive");
    EaefParamsT<T> p;
    p.channels = c;
    const int h = mlp_hidden_width(c);
    p.mlp_rgb = {make_dense<T>(c, h, rng), make_dense<T>(h, c, rng)};
    p.mlp_t = {make_dense<T>(c, h, rng), make_dense<T>(h, c, rng)};
    p.interaction_dw = make_conv<T>(2 * c, 2 * c, 3, ConvMode::Depthwise, rng);
    const int h2 = mlp_hidden_width(2 * c);
    p.interaction_mlp = {make_dense<T>(2 * c, h2, rng), make_dense<T>(h2, 2 * c, rng)};
    p.merge_conv = make_conv<T>(2 * c, opt.shared_spatial_map ? 1 : 2 * c, 1, ConvMode::Standard, rng);
    return p;
}

// Make the block exactly symmetric under swapping the RGB and thermal roles:
// shared channel MLPs, half-swap-equivariant interaction and merge weights.
template <typename T>
void symmetrize_eaef_params(EaefParamsT<T>& p) {
    const int c = p.channels;
    p.mlp_t = p.mlp_rgb;
    for (int ch = 0; ch < c; ++ch) {
        const size_t k = static_cast<size_t>(p.interaction_dw.kh()) * p.interaction_dw.kw();
        for (size_t i = 0; i < k; ++i)
            p.interaction_dw.kernel.v[(static_cast<size_t>(c) + ch) * k + i] =
                p.interaction_dw.kernel.v[static_cast<size_t>(ch) * k + i];
        p.interaction_dw.bias.v[static_cast<size_t>(c) + ch] = p.interaction_dw.bias.v[ch];
    }
    // Layer weights become block matrices [[A,B],[B,A]] with equal bias halves.
    auto swap_equivariant = [](DenseLayerParamsT<T>& l) {
        const int out = l.out_features(), in = l.in_features();
        const int ho = out / 2, hi = in / 2;
        for (int o = 0; o < ho; ++o)
            for (int i = 0; i < hi; ++i) {
                l.weight.v[static_cast<size_t>(ho + o) * in + (hi + i)] =
                    l.weight.v[static_cast<size_t>(o) * in + i];
                l.weight.v[static_cast<size_t>(ho + o) * in + i] =
                    l.weight.v[static_cast<size_t>(o) * in + (hi + i)];
            }
        for (int o = 0; o < ho; ++o) l.bias.v[static_cast<size_t>(ho + o)] = l.bias.v[o];
    };
    for (auto& l : p.interaction_mlp)
        if (l.out_features() % 2 == 0 && l.in_features() % 2 == 0) swap_equivariant(l);
    if (p.merge_conv.out_channels() % 2 == 0) {
        const int co = p.merge_conv.out_channels(), ci = p.merge_conv.in_channels();
        const int ho = co / 2, hi = ci / 2;
        for (int o = 0; o < ho; ++o)
            for (int i = 0; i < hi; ++i) {
                p.merge_conv.kernel.v[static_cast<size_t>(ho + o) * ci + (hi + i)] =
                    p.merge_conv.kernel.v[static_cast<size_t>(o) * ci + i];
                p.merge_conv.kernel.v[static_cast<size_t>(ho + o) * ci + i] =
                    p.merge_conv.kernel.v[static_cast<size_t>(o) * ci + (hi + i)];
            }
        for (int o = 0; o < ho; ++o)
            p.merge_conv.bias.v[static_cast<size_t>(ho + o)] = p.merge_conv.bias.v[o];
    }
}

// ---- individual ops ---------------------------------------------------------

// R = MLP_rgb(GAP(F_rgb)), T = MLP_t(GAP(F_t)); no sigmoid here.
template <typename T>
std::pair<Tens<T>, Tens<T>> channel_weights(const Tens<T>& f_rgb, const Tens<T>& f_t,
                                            const EaefParamsT<T>& p) {
    if (!f_rgb.same_shape(f_t)) throw DimError("channel_weights: modality shape mismatch");
    if (f_rgb.dim(1) != p.channels) throw DimError("channel_weights: channel mismatch");
    auto mlp_rgb = p.mlp_rgb;  // local copies; no grads accumulated here
    auto mlp_t = p.mlp_t;
    Tens<T> r = mlp_forward(global_avg_pool(f_rgb), mlp_rgb, Activation::Relu);
    Tens<T> t = mlp_forward(global_avg_pool(f_t), mlp_t, Activation::Relu);
    return {std::move(r), std::move(t)};
}

template <typename T>
std::vector<CaseLabel> classify_cases(const Tens<T>& r, const Tens<T>& t) {
    if (!r.same_shape(t)) throw DimError("classify_cases: shape mismatch");
    std::vector<CaseLabel> out(static_cast<size_t>(r.size()));
    for (int64_t i = 0; i < r.size(); ++i) {
        const double rv = static_cast<double>(r.v[i]), tv = static_cast<double>(t.v[i]);
        if (std::isnan(rv) || std::isnan(tv)) throw NumericError("classify_cases: NaN weight");
        out[static_cast<size_t>(i)] = rv >= 0 ? (tv >= 0 ? CaseLabel::BothHigh : CaseLabel::OnlyR)
                                              : (tv >= 0 ? CaseLabel::OnlyT : CaseLabel::BothLow);
    }
    return out;
}

// sigma(c * R (*) T); the channel count acts as the attention scaling factor.
template <typename T>
Tens<T> aib_gate(const Tens<T>& r, const Tens<T>& t, int channels) {
    if (channels < 1) throw DimError("aib_gate: channel count must be positive");
    return sigmoid(scalar_mul(mul(r, t), static_cast<T>(channels)));
}

// ---- full block -------------------------------------------------------------

// Every named intermediate of one EAEF application; eaef_backward consumes it.
template <typename T>
struct FusionStateT {
    Tens<T> f_rgb, f_t;      // inputs
    Tens<T> gap_rgb, gap_t;
    MlpState<T> mlp_rgb_state, mlp_t_state;
    Tens<T> R, T_;           // pre-sigmoid channel weights
    Tens<T> gate_i, gate_c;  // sigma(c*R*T) and its exact complement
    std::vector<CaseLabel> case_labels;  // N*c, row-major

    Tens<T> f_prime;         // concat of the gated modalities (AIB input)
    Tens<T> dw_out;          // depthwise conv output
    MaxPoolResult<T> gmp;
    MlpState<T> interaction_state;
    Tens<T> interaction_gate;  // [N,2c], sigmoid (or ones when bypassed)

    Tens<T> f_aib_rgb, f_aib_t;
    Tens<T> f_acb_rgb, f_acb_t;
    Tens<T> f_bar_rgb, f_bar_t;
    Tens<T> f_bar_cat;
    Tens<T> spatial_attn;
    Tens<T> f_final;         // [N,2c,H,W]

    FusionOptions options;
};

using FusionState = FusionStateT<float>;

template <typename T>
FusionStateT<T> eaef_forward(const Tens<T>& f_rgb, const Tens<T>& f_t, const EaefParamsT<T>& p,
                             const FusionOptions& opt = {}) {
    check_nchw(f_rgb, "eaef_forward");
    if (!f_rgb.same_shape(f_t)) throw DimError("eaef_forward: modality shape mismatch");
    if (f_rgb.dim(1) != p.channels) throw DimError("eaef_forward: channel mismatch");
    const int c = p.channels;

    FusionStateT<T> s;
    s.options = opt;
    s.f_rgb = f_rgb;
    s.f_t = f_t;

    s.gap_rgb = global_avg_pool(f_rgb);
    s.gap_t = global_avg_pool(f_t);
    {
        auto mlp_rgb = p.mlp_rgb;  // forward only; real grads flow in eaef_backward
        auto mlp_t = p.mlp_t;
        s.R = mlp_forward(s.gap_rgb, mlp_rgb, Activation::Relu, &s.mlp_rgb_state);
        s.T_ = mlp_forward(s.gap_t, mlp_t, Activation::Relu, &s.mlp_t_state);
    }
    s.gate_i = aib_gate(s.R, s.T_, c);
    s.gate_c = one_minus(s.gate_i);
    s.case_labels = classify_cases(s.R, s.T_);

    if (opt.use_aib) {
        Tens<T> fp_rgb = channel_scale(f_rgb, s.gate_i);
        Tens<T> fp_t = channel_scale(f_t, s.gate_i);
        s.f_prime = concat_channels(fp_rgb, fp_t);
        if (opt.interaction_enabled && !opt.bypass_interaction_gate) {
            s.dw_out = conv2d(s.f_prime, p.interaction_dw);
            s.gmp = global_max_pool(s.dw_out);
            auto imlp = p.interaction_mlp;
            Tens<T> m = mlp_forward(s.gmp.out, imlp, Activation::Relu, &s.interaction_state);
            s.interaction_gate = sigmoid(m);
        } else {
            s.interaction_gate = Tens<T>::full({f_rgb.dim(0), 2 * c}, T(1));
        }
        auto halves = split_channels(channel_scale(s.f_prime, s.interaction_gate));
        s.f_aib_rgb = std::move(halves.first);
        s.f_aib_t = std::move(halves.second);
    } else {
        s.f_aib_rgb = Tens<T>(f_rgb.dims);
        s.f_aib_t = Tens<T>(f_t.dims);
    }

    if (opt.use_acb) {
        s.f_acb_rgb = channel_scale(f_rgb, s.gate_c);
        s.f_acb_t = channel_scale(f_t, s.gate_c);
    } else {
        s.f_acb_rgb = Tens<T>(f_rgb.dims);
        s.f_acb_t = Tens<T>(f_t.dims);
    }

    s.f_bar_rgb = add(s.f_aib_rgb, s.f_acb_rgb);
    s.f_bar_t = add(s.f_aib_t, s.f_acb_t);

    s.f_bar_cat = concat_channels(s.f_bar_rgb, s.f_bar_t);
    Tens<T> logits = conv2d(s.f_bar_cat, p.merge_conv);
    s.spatial_attn = spatial_softmax(logits);
    if (opt.shared_spatial_map) {
        if (p.merge_conv.out_channels() != 1)
            throw DimError("eaef_forward: shared map needs a 2c->1 merge conv");
        s.f_final = Tens<T>(s.f_bar_cat.dims);
        const int n = f_rgb.dim(0), hw = f_rgb.dim(2) * f_rgb.dim(3);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < 2 * c; ++j)
                for (int k = 0; k < hw; ++k)
                    s.f_final.v[(static_cast<size_t>(i) * 2 * c + j) * hw + k] =
                        s.f_bar_cat.v[(static_cast<size_t>(i) * 2 * c + j) * hw + k] *
                        s.spatial_attn.v[static_cast<size_t>(i) * hw + k];
    } else {
        if (p.merge_conv.out_channels() != 2 * c)
            throw DimError("eaef_forward: merge conv must map 2c->2c");
        s.f_final = mul(s.f_bar_cat, s.spatial_attn);
    }
    return s;
}

// Convenience pieces mirroring the block's stages; each recomputes from its
// arguments so tests can compose them independently.

template <typename T>
std::pair<Tens<T>, Tens<T>> attention_interaction(const Tens<T>& f_rgb, const Tens<T>& f_t,
                                                  const Tens<T>& gate_i, const EaefParamsT<T>& p,
                                                  const FusionOptions& opt = {}) {
    Tens<T> fp = concat_channels(channel_scale(f_rgb, gate_i), channel_scale(f_t, gate_i));
    Tens<T> ig;
    if (opt.interaction_enabled && !opt.bypass_interaction_gate) {
        auto gmp = global_max_pool(conv2d(fp, p.interaction_dw));
        auto imlp = p.interaction_mlp;
        ig = sigmoid(mlp_forward(gmp.out, imlp, Activation::Relu));
    } else {
        ig = Tens<T>::full({f_rgb.dim(0), 2 * p.channels}, T(1));
    }
    return split_channels(channel_scale(fp, ig));
}

template <typename T>
std::pair<Tens<T>, Tens<T>> attention_complement(const Tens<T>& f_rgb, const Tens<T>& f_t,
                                                 const Tens<T>& gate_i) {
    Tens<T> gate_c = one_minus(gate_i);
    return {channel_scale(f_rgb, gate_c), channel_scale(f_t, gate_c)};
}

template <typename T>
std::pair<Tens<T>, Tens<T>> aggregate_branches(const Tens<T>& aib_rgb, const Tens<T>& aib_t,
                                               const Tens<T>& acb_rgb, const Tens<T>& acb_t) {
    return {add(aib_rgb, acb_rgb), add(aib_t, acb_t)};
}

template <typename T>
Tens<T> spatial_merge(const Tens<T>& bar_rgb, const Tens<T>& bar_t, const EaefParamsT<T>& p) {
    Tens<T> cat = concat_channels(bar_rgb, bar_t);
    return mul(cat, spatial_softmax(conv2d(cat, p.merge_conv)));
}

// ---- backward ---------------------------------------------------------------

template <typename T>
struct EaefGrads {
    Tens<T> f_rgb;
    Tens<T> f_t;
};

// Exact reverse-mode pass; parameter grads accumulate into p's grad slots.
template <typename T>
EaefGrads<T> eaef_backward(const FusionStateT<T>& s, const Tens<T>& grad_final,
                           EaefParamsT<T>& p) {
    if (!grad_final.same_shape(s.f_final)) throw DimError("eaef_backward: grad shape mismatch");
    const FusionOptions& opt = s.options;
    const int c = p.channels;
    const int n = s.f_rgb.dim(0), hw = s.f_rgb.dim(2) * s.f_rgb.dim(3);

    // Merge stage.
    Tens<T> g_bar_cat(s.f_bar_cat.dims);
    Tens<T> g_attn(s.spatial_attn.dims);
    if (opt.shared_spatial_map) {
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < 2 * c; ++j)
                for (int k = 0; k < hw; ++k) {
                    const size_t xi = (static_cast<size_t>(i) * 2 * c + j) * hw + k;
                    const size_t ai = static_cast<size_t>(i) * hw + k;
                    g_bar_cat.v[xi] += grad_final.v[xi] * s.spatial_attn.v[ai];
                    g_attn.v[ai] += grad_final.v[xi] * s.f_bar_cat.v[xi];
                }
    } else {
        g_bar_cat = mul(grad_final, s.spatial_attn);
        g_attn = mul(grad_final, s.f_bar_cat);
    }
    Tens<T> g_logits = spatial_softmax_backward(g_attn, s.spatial_attn);
    g_bar_cat = add(g_bar_cat, conv2d_backward(g_logits, s.f_bar_cat, p.merge_conv));
    auto g_bar = split_channels(g_bar_cat);

    Tens<T> g_f_rgb(s.f_rgb.dims), g_f_t(s.f_t.dims);
    Tens<T> g_gate_i({n, c});

    // Complement branch: F_hat = (1 - gate_i) (*) F.
    if (opt.use_acb) {
        g_f_rgb = add(g_f_rgb, channel_scale_backward_input(g_bar.first, s.gate_c));
        g_f_t = add(g_f_t, channel_scale_backward_input(g_bar.second, s.gate_c));
        Tens<T> g_gate_c = add(channel_scale_backward_gain(g_bar.first, s.f_rgb),
                               channel_scale_backward_gain(g_bar.second, s.f_t));
        g_gate_i = add(g_gate_i, scalar_mul(g_gate_c, T(-1)));
    }

    // Interaction branch.
    if (opt.use_aib) {
        Tens<T> g_tilde = concat_channels(g_bar.first, g_bar.second);
        Tens<T> g_fp = channel_scale_backward_input(g_tilde, s.interaction_gate);
        if (opt.interaction_enabled && !opt.bypass_interaction_gate) {
            Tens<T> g_ig = channel_scale_backward_gain(g_tilde, s.f_prime);
            Tens<T> g_m = sigmoid_backward(g_ig, s.interaction_gate);
            Tens<T> g_gmp = mlp_backward(g_m, s.gmp.out, p.interaction_mlp, Activation::Relu,
                                         s.interaction_state);
            Tens<T> g_dw = global_max_pool_backward(g_gmp, s.gmp.argmax, s.dw_out.dims);
            g_fp = add(g_fp, conv2d_backward(g_dw, s.f_prime, p.interaction_dw));
        }
        auto g_fp_halves = split_channels(g_fp);
        g_f_rgb = add(g_f_rgb, channel_scale_backward_input(g_fp_halves.first, s.gate_i));
        g_f_t = add(g_f_t, channel_scale_backward_input(g_fp_halves.second, s.gate_i));
        g_gate_i = add(g_gate_i, channel_scale_backward_gain(g_fp_halves.first, s.f_rgb));
        g_gate_i = add(g_gate_i, channel_scale_backward_gain(g_fp_halves.second, s.f_t));
    }

    // gate_i = sigmoid(c * R * T).
    Tens<T> g_pre = sigmoid_backward(g_gate_i, s.gate_i);
    Tens<T> g_prod = scalar_mul(g_pre, static_cast<T>(c));
    Tens<T> g_R = mul(g_prod, s.T_);
    Tens<T> g_T = mul(g_prod, s.R);

    Tens<T> g_gap_rgb = mlp_backward(g_R, s.gap_rgb, p.mlp_rgb, Activation::Relu, s.mlp_rgb_state);
    Tens<T> g_gap_t = mlp_backward(g_T, s.gap_t, p.mlp_t, Activation::Relu, s.mlp_t_state);
    g_f_rgb = add(g_f_rgb, global_avg_pool_backward(g_gap_rgb, s.f_rgb.dims));
    g_f_t = add(g_f_t, global_avg_pool_backward(g_gap_t, s.f_t.dims));

    return {std::move(g_f_rgb), std::move(g_f_t)};
}

// ---- parameter registry -----------------------------------------------------

// Parameters actually used by a variant; ACB adds none of its own.
template <typename T>
std::vector<std::pair<std::string, Tens<T>*>> eaef_named_parameters(EaefParamsT<T>& p,
                                                                    const FusionOptions& opt,
                                                                    const std::string& prefix) {
    std::vector<std::pair<std::string, Tens<T>*>> out;
    auto add_mlp = [&](std::vector<DenseLayerParamsT<T>>& mlp, const std::string& name) {
        for (size_t i = 0; i < mlp.size(); ++i) {
            out.emplace_back(prefix + name + ".l" + std::to_string(i) + ".weight",
                             &mlp[i].weight);
            out.emplace_back(prefix + name + ".l" + std::to_string(i) + ".bias", &mlp[i].bias);
        }
    };
    add_mlp(p.mlp_rgb, "mlp_rgb");
    add_mlp(p.mlp_t, "mlp_t");
    if (opt.use_aib && opt.interaction_enabled) {
        out.emplace_back(prefix + "interaction_dw.kernel", &p.interaction_dw.kernel);
        out.emplace_back(prefix + "interaction_dw.bias", &p.interaction_dw.bias);
        add_mlp(p.interaction_mlp, "interaction_mlp");
    }
    out.emplace_back(prefix + "merge.kernel", &p.merge_conv.kernel);
    out.emplace_back(prefix + "merge.bias", &p.merge_conv.bias);
    return out;
}

}  // namespace eaef
