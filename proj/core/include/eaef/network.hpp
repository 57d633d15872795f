#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "eaef/fusion.hpp"
#include "eaef/losses.hpp"

// Desk-scale dual-encoder segmentation network: five stride-2 conv stages per
// modality, fusion between them at every scale, and a shared decoder with
// skip connections from the fused features.

namespace eaef {

enum class Ablation { Baseline, AibOnly, AcbOnly, Full };

const char* ablation_name(Ablation a);
Ablation ablation_from_name(const std::string& s);

struct ModelConfig {
    Ablation ablation = Ablation::Full;
    std::vector<int> stage_channels{8, 16, 32, 64, 64};
    int num_classes = 4;
    int rgb_channels = 3;
    int thermal_channels = 1;
    bool interaction_enabled = true;
    bool shared_spatial_map = false;
};

struct LossWeights {
    float dice_weight = 0.5f;
    float ce_weight = 0.5f;
    float ce_smoothing = 0.1f;
};

struct Model {
    ModelConfig cfg;
    std::vector<ConvParams> enc_rgb;   // stride-2 3x3 per stage
    std::vector<ConvParams> enc_t;
    std::vector<EaefParams> fusion;    // one per scale; empty for Baseline
    std::vector<ConvParams> dec;       // three upsample-conv stages
    ConvParams head;                   // 3x3 -> num_classes

    FusionOptions fusion_options() const;
    std::vector<std::pair<std::string, Tensor*>> named_parameters();
    int64_t parameter_count() const;
    void zero_grads();
};

Model make_model(const ModelConfig& cfg, uint64_t seed);

// Everything the backward pass needs from one forward evaluation.
struct NetState {
    std::vector<Tensor> in_rgb, in_t;    // stage inputs
    std::vector<Tensor> pre_rgb, pre_t;  // conv pre-activations
    std::vector<Tensor> act_rgb, act_t;  // post-relu stage features
    std::vector<FusionState> fusion;     // per scale (non-baseline)
    std::vector<Tensor> fused;           // decoder skip features per scale
    std::vector<Tensor> dec_in, dec_up, dec_pre, dec_post, dec_out;
    Tensor head_in, head_out;
    Tensor logits;
};

// Spatial dims must divide 2^5. Returns unnormalized [N,K,H,W] logits.
Tensor net_forward(Model& model, const Tensor& rgb, const Tensor& thermal,
                   NetState* state = nullptr);

// Accumulates parameter grads; state must come from net_forward on `model`.
void net_backward(Model& model, const NetState& state, const Tensor& grad_logits);

struct SgdConfig {
    float momentum = 0.9f;
    float weight_decay = 5e-4f;
};

struct OptimizerState {
    std::vector<std::vector<float>> velocity;  // parallel to named_parameters()
};

// g = grad + wd*p; v = mu*v + g; p -= lr*v
void sgd_step(std::vector<std::pair<std::string, Tensor*>>& params, OptimizerState& opt,
              float lr, const SgdConfig& cfg);

struct StepResult {
    double loss = 0.0;
    double dice = 0.0;
    double ce = 0.0;
};

// One optimization step; throws NumericError on a non-finite loss after
// dumping the last fusion states under diag_dir (when given).
StepResult train_step(Model& model, const Tensor& rgb, const Tensor& thermal,
                      const std::vector<int>& labels, OptimizerState& opt, float lr,
                      const SgdConfig& sgd = {}, const LossWeights& lw = {},
                      const std::string* diag_dir = nullptr);

// Argmax class per pixel from logits.
std::vector<int> predict_labels(const Tensor& logits);

}  // namespace eaef
