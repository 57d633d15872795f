#pragma once

#include <cstdint>
#include <string>

#include "eaef/tensor.hpp"

// Flat key=value run configuration. Every key has a default; unknown keys
// are rejected so typos cannot silently fall back.

namespace eaef {

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct RunConfig {
    uint64_t seed = 1;
    int epochs = 45;
    int batch_size = 4;
    float lr = 0.05f;
    float gamma = 0.97f;  // exponential LR decay per epoch
    float momentum = 0.9f;
    float weight_decay = 0.0005f;
    float dice_weight = 0.5f;
    float ce_weight = 0.5f;
    float ce_smoothing = 0.0f;

    std::string ablation = "full";  // baseline | aib_only | acb_only | full
    int num_classes = 4;
    int image_size = 32;
    int train_samples = 24;
    int val_samples = 16;
    float noise_sigma = 0.02f;
    // Per-sample sensor-failure rates (one modality replaced by noise).
    float corrupt_rgb_prob = 0.0f;
    float corrupt_thermal_prob = 0.0f;
    std::string scene = "default";  // default | modality_split
    bool interaction = true;
    bool shared_spatial_map = false;
    bool ignore_background = false;

    int ablate_seeds = 5;
    std::string gradcheck_channels = "3,5";  // comma list; empty audits nothing
    std::string out_dir = "out";

    bool operator==(const RunConfig&) const = default;
};

RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);
std::string serialize_config(const RunConfig& c);

// FNV-1a over the serialized form; ties checkpoints to their config.
uint64_t config_hash(const RunConfig& c);

void validate_config(const RunConfig& c);

}  // namespace eaef
