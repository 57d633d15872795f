#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "eaef/tensor.hpp"

// Synthetic RGB-thermal scenes: simple shapes whose visibility per modality
// manufactures the both / rgb-only / thermal-only / neither cases, plus the
// segmentation metrics used to score predictions.

namespace eaef {

struct SpecError : std::runtime_error {
    explicit SpecError(const std::string& msg) : std::runtime_error(msg) {}
};

enum class Visibility : uint8_t { Both, RgbOnly, ThermalOnly, Neither };
enum class Shape : uint8_t { Rectangle, Disc };

struct ObjectSpec {
    Shape shape = Shape::Rectangle;
    int cls = 1;
    Visibility visibility = Visibility::Both;
    // Fixed placement when >= 0; randomized per sample otherwise.
    int cx = -1, cy = -1;
    int half_extent = -1;  // half side / radius; randomized in [4, min(h,w)/4] when < 0
};

struct SceneSpec {
    int height = 64, width = 64;
    int num_classes = 4;
    std::vector<ObjectSpec> objects;
    float noise_sigma = 0.05f;
    // Per-sample sensor failure: with these (mutually exclusive) probabilities
    // one modality of a sample is replaced by uniform noise. Labels keep the
    // full object set, so a dead sensor must be compensated by the other one.
    float corrupt_rgb_prob = 0.0f;
    float corrupt_thermal_prob = 0.0f;
    uint64_t seed = 0;
};

struct SampleBatch {
    Tensor rgb;               // [N,3,H,W] in [0,1]
    Tensor thermal;           // [N,1,H,W] in [0,1]
    std::vector<int> labels;  // N*H*W, row-major, in [0, K)
    int num_classes = 0;
};

// Default scene: one always-visible rectangle, one rgb-only disc, one
// thermal-only disc, randomized placement.
SceneSpec default_scene(uint64_t seed);

// Scene containing only modality-exclusive objects.
SceneSpec modality_split_scene(uint64_t seed);

SampleBatch generate(const SceneSpec& spec, int n);

struct MetricReport {
    int num_classes = 0;
    std::vector<int64_t> confusion;  // K*K, [truth*K + pred]
    std::vector<double> acc;         // per-class recall; -1 when undefined
    std::vector<double> iou;         // -1 when class absent from pred and truth
    double macc = 0.0, miou = 0.0;   // means over defined classes
    bool ignore_background = false;  // excludes class 0 from the means
};

MetricReport compute_metrics(const std::vector<int>& pred, const std::vector<int>& truth,
                             int num_classes, bool ignore_background = false);

void write_metrics_csv(const std::string& path, const MetricReport& r);

// Per-sample tensors in dump format, labels as PGM, plus an index file
// recording sample ids and the generating spec.
void export_dataset(const SampleBatch& batch, const SceneSpec& spec, const std::string& dir);

}  // namespace eaef
