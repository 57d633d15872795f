#pragma once

#include <optional>
#include <string>
#include <vector>

#include "eaef/config.hpp"
#include "eaef/data_synth.hpp"
#include "eaef/network.hpp"

// Experiment plumbing shared by the CLI and the acceptance suite: training
// runs, evaluation, the four-variant ablation sweep, and checkpoints.

namespace eaef {

ModelConfig model_config_from(const RunConfig& c);
SceneSpec scene_from(const RunConfig& c, uint64_t data_seed);

struct EpochLog {
    int epoch = 0;
    float lr = 0.0f;
    double train_loss = 0.0;
    double val_macc = 0.0;
    double val_miou = 0.0;
};

struct TrainOptions {
    bool zero_rgb = false;      // feed zeros for the RGB modality
    bool zero_thermal = false;  // feed zeros for the thermal modality
    // Overrides cfg.seed for model init and data when set.
    std::optional<uint64_t> seed;
};

struct TrainOutput {
    std::vector<EpochLog> log;
    int best_epoch = -1;
    double best_val_macc = 0.0;
    double best_val_miou = 0.0;
    double final_train_miou = 0.0;
    std::string checkpoint_dir;
    std::string csv_path;
};

// Trains on generated data, writes a per-epoch CSV and the best-on-validation
// checkpoint under out_dir. Deterministic per config seed.
TrainOutput run_training(const RunConfig& cfg, const std::string& out_dir,
                         const TrainOptions& opt = {});

MetricReport evaluate_model(Model& model, const SampleBatch& data, bool ignore_background);

struct AblateRow {
    std::string variant;
    double macc = 0.0;  // median over seeds
    double miou = 0.0;
};

// Trains every ablation variant over cfg.ablate_seeds seeds with shared
// per-seed data; honors EAEF_THREADS for parallel runs.
std::vector<AblateRow> run_ablation(const RunConfig& cfg, const std::string& out_dir);

// ---- checkpoints ------------------------------------------------------------

struct CheckpointMeta {
    uint64_t config_hash = 0;
    int epoch = -1;
    float lr = 0.0f;
};

void save_checkpoint(const std::string& dir, Model& model, const CheckpointMeta& meta);
CheckpointMeta read_checkpoint_meta(const std::string& dir);
void load_checkpoint(const std::string& dir, Model& model);

int env_thread_cap();

}  // namespace eaef
