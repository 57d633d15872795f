#include "eaef/data_synth.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>

#include "eaef/io.hpp"

namespace eaef {

namespace {

struct Rgb {
    float r, g, b;
};

// Class palettes; index (cls - 1) mod table size.
const Rgb kRgbPalette[] = {
    {0.85f, 0.30f, 0.25f}, {0.25f, 0.80f, 0.35f}, {0.30f, 0.40f, 0.90f},
    {0.90f, 0.85f, 0.30f}, {0.80f, 0.30f, 0.80f}, {0.30f, 0.80f, 0.80f},
};
const float kThermalPalette[] = {0.85f, 0.65f, 0.95f, 0.75f, 0.55f, 0.90f};

constexpr float kRgbBackground = 0.15f;
constexpr float kThermalBackground = 0.30f;

bool covers(const ObjectSpec& o, int cx, int cy, int he, int y, int x) {
    if (o.shape == Shape::Rectangle)
        return std::abs(x - cx) <= he && std::abs(y - cy) <= he;
    const int dx = x - cx, dy = y - cy;
    return dx * dx + dy * dy <= he * he;
}

}  // namespace

SceneSpec default_scene(uint64_t seed) {
    SceneSpec s;
    s.seed = seed;
    s.num_classes = 4;
    s.objects = {
        {Shape::Rectangle, 1, Visibility::Both, -1, -1, -1},
        {Shape::Disc, 2, Visibility::Both, -1, -1, -1},
        {Shape::Disc, 3, Visibility::Both, -1, -1, -1},
    };
    return s;
}

SceneSpec modality_split_scene(uint64_t seed) {
    SceneSpec s;
    s.seed = seed;
    s.num_classes = 3;
    s.objects = {
        {Shape::Disc, 1, Visibility::RgbOnly, -1, -1, -1},
        {Shape::Rectangle, 2, Visibility::ThermalOnly, -1, -1, -1},
    };
    return s;
}

SampleBatch generate(const SceneSpec& spec, int n) {
    const int h = spec.height, w = spec.width, k = spec.num_classes;
    if (h < 8 || w < 8) throw SpecError("generate: canvas too small");
    for (const auto& o : spec.objects) {
        if (o.cls < 1 || o.cls >= k) throw SpecError("generate: object class out of range");
        if (o.cx >= 0) {
            const int he = o.half_extent;
            if (he < 1 || o.cx - he < 0 || o.cx + he >= w || o.cy - he < 0 || o.cy + he >= h)
                throw SpecError("generate: fixed object outside canvas");
        }
    }

    if (spec.corrupt_rgb_prob < 0.0f || spec.corrupt_thermal_prob < 0.0f ||
        spec.corrupt_rgb_prob + spec.corrupt_thermal_prob > 1.0f)
        throw SpecError("generate: corruption probabilities must be in [0,1] and sum to <= 1");

    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<float> noise(0.0f, 1.0f);
    std::uniform_real_distribution<float> unit(0.0f, 1.0f);

    SampleBatch batch;
    batch.num_classes = k;
    batch.rgb = Tensor({n, 3, h, w});
    batch.thermal = Tensor({n, 1, h, w});
    batch.labels.assign(static_cast<size_t>(n) * h * w, 0);

    const int max_he = std::max(4, std::min(h, w) / 4);
    for (int i = 0; i < n; ++i) {
        for (int c = 0; c < 3; ++c)
            std::fill_n(&batch.rgb.at(i, c, 0, 0), h * w, kRgbBackground);
        std::fill_n(&batch.thermal.at(i, 0, 0, 0), h * w, kThermalBackground);

        for (const auto& o : spec.objects) {
            int he = o.half_extent, cx = o.cx, cy = o.cy;
            if (he < 0) he = std::uniform_int_distribution<int>(4, max_he)(rng);
            if (cx < 0) cx = std::uniform_int_distribution<int>(he, w - 1 - he)(rng);
            if (cy < 0) cy = std::uniform_int_distribution<int>(he, h - 1 - he)(rng);

            const Rgb col = kRgbPalette[(o.cls - 1) % 6];
            const float tcol = kThermalPalette[(o.cls - 1) % 6];
            const bool in_rgb =
                o.visibility == Visibility::Both || o.visibility == Visibility::RgbOnly;
            const bool in_thermal =
                o.visibility == Visibility::Both || o.visibility == Visibility::ThermalOnly;
            for (int y = cy - he; y <= cy + he; ++y)
                for (int x = cx - he; x <= cx + he; ++x) {
                    if (!covers(o, cx, cy, he, y, x)) continue;
                    batch.labels[(static_cast<size_t>(i) * h + y) * w + x] = o.cls;
                    if (in_rgb) {
                        batch.rgb.at(i, 0, y, x) = col.r;
                        batch.rgb.at(i, 1, y, x) = col.g;
                        batch.rgb.at(i, 2, y, x) = col.b;
                    }
                    if (in_thermal) batch.thermal.at(i, 0, y, x) = tcol;
                }
        }

        if (spec.noise_sigma > 0.0f) {
            for (int c = 0; c < 3; ++c)
                for (int p = 0; p < h * w; ++p) {
                    float& v = (&batch.rgb.at(i, c, 0, 0))[p];
                    v = std::clamp(v + spec.noise_sigma * noise(rng), 0.0f, 1.0f);
                }
            for (int p = 0; p < h * w; ++p) {
                float& v = (&batch.thermal.at(i, 0, 0, 0))[p];
                v = std::clamp(v + spec.noise_sigma * noise(rng), 0.0f, 1.0f);
            }
        }

        if (spec.corrupt_rgb_prob > 0.0f || spec.corrupt_thermal_prob > 0.0f) {
            const float u = unit(rng);
            if (u < spec.corrupt_rgb_prob) {
                for (int c = 0; c < 3; ++c)
                    for (int p = 0; p < h * w; ++p) (&batch.rgb.at(i, c, 0, 0))[p] = unit(rng);
            } else if (u < spec.corrupt_rgb_prob + spec.corrupt_thermal_prob) {
                for (int p = 0; p < h * w; ++p) (&batch.thermal.at(i, 0, 0, 0))[p] = unit(rng);
            }
        }
    }
    return batch;
}

MetricReport compute_metrics(const std::vector<int>& pred, const std::vector<int>& truth,
                             int num_classes, bool ignore_background) {
    if (pred.size() != truth.size()) throw DimError("compute_metrics: size mismatch");
    MetricReport r;
    r.num_classes = num_classes;
    r.ignore_background = ignore_background;
    r.confusion.assign(static_cast<size_t>(num_classes) * num_classes, 0);
    for (size_t i = 0; i < pred.size(); ++i) {
        if (pred[i] < 0 || pred[i] >= num_classes || truth[i] < 0 || truth[i] >= num_classes)
            throw DimError("compute_metrics: label out of range");
        ++r.confusion[static_cast<size_t>(truth[i]) * num_classes + pred[i]];
    }

    r.acc.assign(static_cast<size_t>(num_classes), -1.0);
    r.iou.assign(static_cast<size_t>(num_classes), -1.0);
    double acc_sum = 0.0, iou_sum = 0.0;
    int acc_n = 0, iou_n = 0;
    for (int c = 0; c < num_classes; ++c) {
        int64_t tp = r.confusion[static_cast<size_t>(c) * num_classes + c];
        int64_t fn = 0, fp = 0;
        for (int j = 0; j < num_classes; ++j) {
            if (j == c) continue;
            fn += r.confusion[static_cast<size_t>(c) * num_classes + j];
            fp += r.confusion[static_cast<size_t>(j) * num_classes + c];
        }
        const bool counted = !(ignore_background && c == 0);
        if (tp + fn > 0) {
            r.acc[c] = static_cast<double>(tp) / static_cast<double>(tp + fn);
            if (counted) {
                acc_sum += r.acc[c];
                ++acc_n;
            }
        }
        if (tp + fn + fp > 0) {
            r.iou[c] = static_cast<double>(tp) / static_cast<double>(tp + fn + fp);
            if (counted) {
                iou_sum += r.iou[c];
                ++iou_n;
            }
        }
    }
    r.macc = acc_n > 0 ? acc_sum / acc_n : 0.0;
    r.miou = iou_n > 0 ? iou_sum / iou_n : 0.0;
    return r;
}

void write_metrics_csv(const std::string& path, const MetricReport& r) {
    std::ofstream f(path);
    if (!f) throw FormatError("cannot open " + path + " for writing");
    f << "class,acc,iou\n";
    for (int c = 0; c < r.num_classes; ++c) {
        f << c << ",";
        if (r.acc[c] >= 0) f << r.acc[c];
        f << ",";
        if (r.iou[c] >= 0) f << r.iou[c];
        f << "\n";
    }
    f << "mean," << r.macc << "," << r.miou << "\n";
}

void export_dataset(const SampleBatch& batch, const SceneSpec& spec, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    const int n = batch.rgb.dim(0), h = batch.rgb.dim(2), w = batch.rgb.dim(3);
    std::ofstream index(dir + "/index.txt");
    index << "height=" << spec.height << " width=" << spec.width
          << " num_classes=" << spec.num_classes << " noise_sigma=" << spec.noise_sigma
          << " seed=" << spec.seed << "\n";
    for (const auto& o : spec.objects)
        index << "object shape=" << (o.shape == Shape::Rectangle ? "rect" : "disc")
              << " class=" << o.cls << " visibility=" << static_cast<int>(o.visibility)
              << " cx=" << o.cx << " cy=" << o.cy << " half_extent=" << o.half_extent << "\n";
    for (int i = 0; i < n; ++i) {
        const std::string id = std::to_string(i);
        Tensor rgb({1, 3, h, w});
        std::copy_n(&batch.rgb.v[static_cast<size_t>(i) * 3 * h * w], 3 * h * w, rgb.v.begin());
        Tensor th({1, 1, h, w});
        std::copy_n(&batch.thermal.v[static_cast<size_t>(i) * h * w], h * w, th.v.begin());
        write_tensor(dir + "/sample" + id + "_rgb.eaet", rgb);
        write_tensor(dir + "/sample" + id + "_thermal.eaet", th);
        // Raw class ids as gray levels.
        std::ofstream pgm(dir + "/sample" + id + "_labels.pgm", std::ios::binary);
        pgm << "P5\n" << w << " " << h << "\n255\n";
        for (int p = 0; p < h * w; ++p)
            pgm.put(static_cast<char>(batch.labels[static_cast<size_t>(i) * h * w + p]));
        index << "sample " << id << "\n";
    }
}

}  // namespace eaef
