#include "eaef/network.hpp"

#include <cmath>
#include <filesystem>

#include "eaef/io.hpp"

namespace eaef {

const char* ablation_name(Ablation a) {
    switch (a) {
        case Ablation::Baseline: return "baseline";
        case Ablation::AibOnly: return "aib_only";
        case Ablation::AcbOnly: return "acb_only";
        case Ablation::Full: return "full";
    }
    return "?";
}

Ablation ablation_from_name(const std::string& s) {
    if (s == "baseline") return Ablation::Baseline;
    if (s == "aib_only") return Ablation::AibOnly;
    if (s == "acb_only") return Ablation::AcbOnly;
    if (s == "full") return Ablation::Full;
    throw DimError("unknown ablation: " + s);
}

FusionOptions Model::fusion_options() const {
    FusionOptions opt;
    opt.use_aib = cfg.ablation == Ablation::Full || cfg.ablation == Ablation::AibOnly;
    opt.use_acb = cfg.ablation == Ablation::Full || cfg.ablation == Ablation::AcbOnly;
    opt.interaction_enabled = cfg.interaction_enabled;
    opt.shared_spatial_map = cfg.shared_spatial_map;
    return opt;
}

Model make_model(const ModelConfig& cfg, uint64_t seed) {
    std::mt19937_64 rng(seed);
    Model m;
    m.cfg = cfg;
    const FusionOptions opt = [&] {
        Model tmp;
        tmp.cfg = cfg;
        return tmp.fusion_options();
    }();
    int cin_rgb = cfg.rgb_channels, cin_t = cfg.thermal_channels;
    for (int c : cfg.stage_channels) {
        m.enc_rgb.push_back(make_conv<float>(cin_rgb, c, 3, ConvMode::Standard, rng));
        m.enc_t.push_back(make_conv<float>(cin_t, c, 3, ConvMode::Standard, rng));
        if (cfg.ablation != Ablation::Baseline)
            m.fusion.push_back(make_eaef_params<float>(c, rng, opt));
        cin_rgb = cin_t = c;
    }
    const int c4 = cfg.stage_channels[4], c3 = cfg.stage_channels[3];
    const int c2 = cfg.stage_channels[2], c1 = cfg.stage_channels[1];
    m.dec.push_back(make_conv<float>(c4, c3, 3, ConvMode::Standard, rng));
    m.dec.push_back(make_conv<float>(c3, c2, 3, ConvMode::Standard, rng));
    m.dec.push_back(make_conv<float>(c2, c1, 3, ConvMode::Standard, rng));
    m.head = make_conv<float>(c1, cfg.num_classes, 3, ConvMode::Standard, rng);
    return m;
}

std::vector<std::pair<std::string, Tensor*>> Model::named_parameters() {
    std::vector<std::pair<std::string, Tensor*>> out;
    auto add_conv = [&](ConvParams& p, const std::string& name) {
        out.emplace_back(name + ".kernel", &p.kernel);
        out.emplace_back(name + ".bias", &p.bias);
    };
    const FusionOptions opt = fusion_options();
    for (size_t k = 0; k < enc_rgb.size(); ++k) {
        add_conv(enc_rgb[k], "enc_rgb." + std::to_string(k));
        add_conv(enc_t[k], "enc_t." + std::to_string(k));
        if (!fusion.empty()) {
            auto fp = eaef_named_parameters(fusion[k], opt, "fuse." + std::to_string(k) + ".");
            out.insert(out.end(), fp.begin(), fp.end());
        }
    }
    for (size_t i = 0; i < dec.size(); ++i) add_conv(dec[i], "dec." + std::to_string(i));
    add_conv(head, "head");
    return out;
}

int64_t Model::parameter_count() const {
    int64_t n = 0;
    for (auto& [name, t] : const_cast<Model*>(this)->named_parameters()) n += t->size();
    return n;
}

void Model::zero_grads() {
    for (auto& [name, t] : named_parameters()) t->zero_grad();
}

Tensor net_forward(Model& model, const Tensor& rgb, const Tensor& thermal, NetState* state) {
    check_nchw(rgb, "net_forward");
    check_nchw(thermal, "net_forward");
    const int stages = static_cast<int>(model.enc_rgb.size());
    const int div = 1 << stages;
    if (rgb.dim(2) % div != 0 || rgb.dim(3) % div != 0)
        throw DimError("net_forward: spatial dims must divide " + std::to_string(div));
    if (rgb.dim(0) != thermal.dim(0) || rgb.dim(2) != thermal.dim(2) ||
        rgb.dim(3) != thermal.dim(3))
        throw DimError("net_forward: modality batch/spatial mismatch");

    NetState local;
    NetState& s = state ? *state : local;
    s = NetState{};
    const FusionOptions opt = model.fusion_options();
    const bool baseline = model.cfg.ablation == Ablation::Baseline;

    Tensor x_r = rgb, x_t = thermal;
    for (int k = 0; k < stages; ++k) {
        s.in_rgb.push_back(x_r);
        s.in_t.push_back(x_t);
        Tensor z_r = conv2d(x_r, model.enc_rgb[k], 2);
        Tensor z_t = conv2d(x_t, model.enc_t[k], 2);
        Tensor a_r = relu(z_r), a_t = relu(z_t);
        s.pre_rgb.push_back(std::move(z_r));
        s.pre_t.push_back(std::move(z_t));
        if (baseline) {
            s.fused.push_back(add(a_r, a_t));
            x_r = a_r;
            x_t = a_t;
        } else {
            FusionState fs = eaef_forward(a_r, a_t, model.fusion[k], opt);
            auto halves = split_channels(fs.f_final);
            x_r = add(a_r, halves.first);
            x_t = add(a_t, halves.second);
            // Skip = plain stream sum plus the attention-refined features.
            // The spatial attention is softmax-normalized, so the merged
            // halves carry a 1/(H*W) factor; rescale by the cell count to
            // restore unit mean gain.
            const float hw = static_cast<float>(a_r.dim(2) * a_r.dim(3));
            s.fused.push_back(
                add(add(a_r, a_t), scalar_mul(add(halves.first, halves.second), hw)));
            s.fusion.push_back(std::move(fs));
        }
        s.act_rgb.push_back(std::move(a_r));
        s.act_t.push_back(std::move(a_t));
    }

    Tensor d = s.fused.back();
    for (size_t i = 0; i < model.dec.size(); ++i) {
        s.dec_in.push_back(d);
        Tensor u = upsample_nearest(d, 2);
        Tensor z = conv2d(u, model.dec[i]);
        Tensor a = relu(z);
        const Tensor& skip = s.fused[s.fused.size() - 2 - i];
        d = add(a, skip);
        s.dec_up.push_back(std::move(u));
        s.dec_pre.push_back(std::move(z));
        s.dec_post.push_back(std::move(a));
        s.dec_out.push_back(d);
    }

    s.head_in = d;
    s.head_out = conv2d(d, model.head);
    const int remaining = div / (1 << static_cast<int>(model.dec.size() + 1));
    s.logits = upsample_nearest(s.head_out, remaining * 2);
    return s.logits;
}

void net_backward(Model& model, const NetState& s, const Tensor& grad_logits) {
    const int stages = static_cast<int>(model.enc_rgb.size());
    const bool baseline = model.cfg.ablation == Ablation::Baseline;
    const int up_factor = s.logits.dim(2) / s.head_out.dim(2);

    Tensor g_head_out = upsample_nearest_backward(grad_logits, up_factor);
    Tensor g_d = conv2d_backward(g_head_out, s.head_in, model.head);

    std::vector<Tensor> g_fused(static_cast<size_t>(stages));
    for (int k = 0; k < stages; ++k) g_fused[static_cast<size_t>(k)] = Tensor(s.fused[k].dims);

    for (size_t i = model.dec.size(); i-- > 0;) {
        // d_out = relu(conv(up(d_in))) + skip
        const size_t skip_idx = s.fused.size() - 2 - i;
        g_fused[skip_idx] = add(g_fused[skip_idx], g_d);
        Tensor g_z = relu_backward(g_d, s.dec_pre[i]);
        Tensor g_u = conv2d_backward(g_z, s.dec_up[i], model.dec[i]);
        g_d = upsample_nearest_backward(g_u, 2);
    }
    g_fused.back() = add(g_fused.back(), g_d);

    Tensor g_next_r, g_next_t;  // grads wrt the stream inputs of stage k+1
    for (int k = stages - 1; k >= 0; --k) {
        const bool have_next = g_next_r.size() > 0;
        Tensor g_a_r(s.act_rgb[k].dims), g_a_t(s.act_t[k].dims);
        if (baseline) {
            g_a_r = add(g_fused[static_cast<size_t>(k)],
                        have_next ? g_next_r : Tensor(g_a_r.dims));
            g_a_t = add(g_fused[static_cast<size_t>(k)],
                        have_next ? g_next_t : Tensor(g_a_t.dims));
        } else {
            // fused = a_r + a_t + hw*(half_r + half_t); x = a + half feeds
            // the next stage.
            const float hw = static_cast<float>(s.act_rgb[k].dim(2) * s.act_rgb[k].dim(3));
            g_a_r = add(g_a_r, g_fused[static_cast<size_t>(k)]);
            g_a_t = add(g_a_t, g_fused[static_cast<size_t>(k)]);
            Tensor g_h_r = scalar_mul(g_fused[static_cast<size_t>(k)], hw);
            Tensor g_h_t = g_h_r;
            if (have_next) {
                g_a_r = add(g_a_r, g_next_r);
                g_a_t = add(g_a_t, g_next_t);
                g_h_r = add(g_h_r, g_next_r);
                g_h_t = add(g_h_t, g_next_t);
            }
            Tensor g_final = concat_channels(g_h_r, g_h_t);
            EaefGrads<float> eg = eaef_backward(s.fusion[k], g_final, model.fusion[k]);
            g_a_r = add(g_a_r, eg.f_rgb);
            g_a_t = add(g_a_t, eg.f_t);
        }
        Tensor g_z_r = relu_backward(g_a_r, s.pre_rgb[k]);
        Tensor g_z_t = relu_backward(g_a_t, s.pre_t[k]);
        g_next_r = conv2d_backward(g_z_r, s.in_rgb[k], model.enc_rgb[k], 2);
        g_next_t = conv2d_backward(g_z_t, s.in_t[k], model.enc_t[k], 2);
    }
}

void sgd_step(std::vector<std::pair<std::string, Tensor*>>& params, OptimizerState& opt,
              float lr, const SgdConfig& cfg) {
    if (opt.velocity.size() != params.size()) {
        opt.velocity.assign(params.size(), {});
        for (size_t i = 0; i < params.size(); ++i)
            opt.velocity[i].assign(static_cast<size_t>(params[i].second->size()), 0.0f);
    }
    for (size_t i = 0; i < params.size(); ++i) {
        Tensor& t = *params[i].second;
        t.ensure_grad();
        auto& vel = opt.velocity[i];
        for (int64_t j = 0; j < t.size(); ++j) {
            const float g = t.grad[j] + cfg.weight_decay * t.v[j];
            vel[static_cast<size_t>(j)] = cfg.momentum * vel[static_cast<size_t>(j)] + g;
            t.v[j] -= lr * vel[static_cast<size_t>(j)];
        }
    }
}

StepResult train_step(Model& model, const Tensor& rgb, const Tensor& thermal,
                      const std::vector<int>& labels, OptimizerState& opt, float lr,
                      const SgdConfig& sgd, const LossWeights& lw, const std::string* diag_dir) {
    model.zero_grads();
    NetState state;
    Tensor logits = net_forward(model, rgb, thermal, &state);

    Tensor g_dice, g_ce;
    StepResult r;
    r.dice = dice_loss(logits, labels, &g_dice);
    r.ce = soft_cross_entropy(logits, labels, lw.ce_smoothing, &g_ce);
    r.loss = lw.dice_weight * r.dice + lw.ce_weight * r.ce;

    if (!std::isfinite(r.loss) || !logits.all_finite()) {
        if (diag_dir) {
            for (size_t k = 0; k < state.fusion.size(); ++k)
                export_fusion_state(state.fusion[k], *diag_dir + "/scale" + std::to_string(k));
        }
        throw NumericError("train_step: non-finite loss" +
                           (diag_dir ? " (fusion states dumped to " + *diag_dir + ")" : std::string()));
    }

    Tensor g_logits = add(scalar_mul(g_dice, lw.dice_weight), scalar_mul(g_ce, lw.ce_weight));
    net_backward(model, state, g_logits);

    auto params = model.named_parameters();
    sgd_step(params, opt, lr, sgd);
    return r;
}

std::vector<int> predict_labels(const Tensor& logits) {
    const int n = logits.dim(0), k = logits.dim(1), hw = logits.dim(2) * logits.dim(3);
    std::vector<int> out(static_cast<size_t>(n) * hw);
    for (int i = 0; i < n; ++i)
        for (int px = 0; px < hw; ++px) {
            int best = 0;
            float bv = logits.v[(static_cast<size_t>(i) * k) * hw + px];
            for (int j = 1; j < k; ++j) {
                const float v = logits.v[(static_cast<size_t>(i) * k + j) * hw + px];
                if (v > bv) {
                    bv = v;
                    best = j;
                }
            }
            out[static_cast<size_t>(i) * hw + px] = best;
        }
    return out;
}

}  // namespace eaef
