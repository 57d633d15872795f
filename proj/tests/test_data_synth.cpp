#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <random>

#include "eaef/data_synth.hpp"

using namespace eaef;

namespace {

// Independent per-class counts straight from the label pairs.
struct Counts {
    int64_t tp = 0, fp = 0, fn = 0;
};

std::vector<Counts> brute_force_counts(const std::vector<int>& pred,
                                       const std::vector<int>& truth, int k) {
    std::vector<Counts> c(static_cast<size_t>(k));
    for (size_t i = 0; i < pred.size(); ++i)
        for (int j = 0; j < k; ++j) {
            const bool p = pred[i] == j, t = truth[i] == j;
            if (p && t) ++c[j].tp;
            if (p && !t) ++c[j].fp;
            if (!p && t) ++c[j].fn;
        }
    return c;
}

}  // namespace

TEST_CASE("empty scene renders flat backgrounds") {
    SceneSpec spec;
    spec.height = spec.width = 16;
    spec.num_classes = 2;
    spec.noise_sigma = 0.0f;
    SampleBatch b = generate(spec, 2);
    CHECK(b.rgb.dims == std::vector<int>{2, 3, 16, 16});
    CHECK(b.thermal.dims == std::vector<int>{2, 1, 16, 16});
    for (int y : b.labels) CHECK(y == 0);
    for (float v : b.rgb.v) CHECK(v == 0.15f);
    for (float v : b.thermal.v) CHECK(v == 0.30f);
}

TEST_CASE("fixed disc rasterization matches the analytic footprint") {
    SceneSpec spec;
    spec.height = 24;
    spec.width = 20;
    spec.num_classes = 3;
    spec.noise_sigma = 0.0f;
    spec.objects = {{Shape::Disc, 2, Visibility::RgbOnly, 10, 12, 5}};
    SampleBatch b = generate(spec, 1);

    for (int y = 0; y < 24; ++y)
        for (int x = 0; x < 20; ++x) {
            const int dx = x - 10, dy = y - 12;
            const bool inside = dx * dx + dy * dy <= 25;
            const int lbl = b.labels[static_cast<size_t>(y) * 20 + x];
            CHECK(lbl == (inside ? 2 : 0));
            // class-2 palette entry
            CHECK(b.rgb.at(0, 0, y, x) == (inside ? 0.25f : 0.15f));
            CHECK(b.rgb.at(0, 1, y, x) == (inside ? 0.80f : 0.15f));
            CHECK(b.rgb.at(0, 2, y, x) == (inside ? 0.35f : 0.15f));
            // rgb-only object leaves the thermal channel untouched
            CHECK(b.thermal.at(0, 0, y, x) == 0.30f);
        }
}

TEST_CASE("fixed rectangle paints both modalities when visible in both") {
    SceneSpec spec;
    spec.height = spec.width = 16;
    spec.num_classes = 2;
    spec.noise_sigma = 0.0f;
    spec.objects = {{Shape::Rectangle, 1, Visibility::Both, 8, 8, 3}};
    SampleBatch b = generate(spec, 1);
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x) {
            const bool inside = std::abs(x - 8) <= 3 && std::abs(y - 8) <= 3;
            CHECK(b.labels[static_cast<size_t>(y) * 16 + x] == (inside ? 1 : 0));
            CHECK(b.rgb.at(0, 0, y, x) == (inside ? 0.85f : 0.15f));
            CHECK(b.thermal.at(0, 0, y, x) == (inside ? 0.85f : 0.30f));
        }
}

TEST_CASE("thermal-only objects are labeled but invisible in rgb") {
    SceneSpec spec;
    spec.height = spec.width = 16;
    spec.num_classes = 2;
    spec.noise_sigma = 0.0f;
    spec.objects = {{Shape::Rectangle, 1, Visibility::ThermalOnly, 8, 8, 3}};
    SampleBatch b = generate(spec, 1);
    bool saw_label = false;
    for (size_t i = 0; i < b.labels.size(); ++i) saw_label = saw_label || b.labels[i] == 1;
    CHECK(saw_label);
    for (float v : b.rgb.v) CHECK(v == 0.15f);
    CHECK(b.thermal.at(0, 0, 8, 8) == 0.85f);
}

TEST_CASE("generation is bitwise deterministic per seed") {
    SceneSpec spec = default_scene(90210);
    spec.height = spec.width = 32;
    SampleBatch a = generate(spec, 3);
    SampleBatch b = generate(spec, 3);
    CHECK(a.labels == b.labels);
    CHECK(a.rgb.v == b.rgb.v);
    CHECK(a.thermal.v == b.thermal.v);

    spec.seed = 90211;
    SampleBatch c = generate(spec, 3);
    CHECK(a.rgb.v != c.rgb.v);
}

TEST_CASE("noise keeps every channel inside the unit interval") {
    SceneSpec spec = default_scene(7);
    spec.height = spec.width = 32;
    spec.noise_sigma = 0.5f;
    SampleBatch b = generate(spec, 2);
    for (float v : b.rgb.v) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
    }
    for (float v : b.thermal.v) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
    }
}

TEST_CASE("scene validation rejects malformed specs") {
    SceneSpec spec;
    spec.height = spec.width = 16;
    spec.num_classes = 2;
    spec.objects = {{Shape::Disc, 2, Visibility::Both, 8, 8, 3}};  // class id == k
    CHECK_THROWS_AS(generate(spec, 1), SpecError);

    spec.objects = {{Shape::Disc, 1, Visibility::Both, 14, 8, 3}};  // pokes past the edge
    CHECK_THROWS_AS(generate(spec, 1), SpecError);

    spec.objects.clear();
    spec.height = 4;
    CHECK_THROWS_AS(generate(spec, 1), SpecError);
}

TEST_CASE("builtin scenes cover the visibility cases") {
    SceneSpec d = default_scene(1);
    CHECK(d.num_classes == 4);
    REQUIRE(d.objects.size() == 3);
    for (const auto& o : d.objects) CHECK(o.visibility == Visibility::Both);

    SceneSpec m = modality_split_scene(1);
    CHECK(m.num_classes == 3);
    for (const auto& o : m.objects)
        CHECK((o.visibility == Visibility::RgbOnly || o.visibility == Visibility::ThermalOnly));
}

TEST_CASE("metric hand values on a 2x2 map") {
    std::vector<int> truth{0, 0, 1, 1};
    std::vector<int> pred{0, 1, 1, 1};
    MetricReport r = compute_metrics(pred, truth, 2);
    CHECK(r.confusion == std::vector<int64_t>{1, 1, 0, 2});
    CHECK(r.acc[0] == doctest::Approx(0.5));
    CHECK(r.acc[1] == doctest::Approx(1.0));
    CHECK(r.iou[0] == doctest::Approx(0.5));
    CHECK(r.iou[1] == doctest::Approx(2.0 / 3.0));
    CHECK(r.macc == doctest::Approx(0.75));
    CHECK(r.miou == doctest::Approx(7.0 / 12.0));
}

TEST_CASE("classes absent from prediction and truth stay undefined") {
    std::vector<int> truth{0, 0, 0, 0};
    std::vector<int> pred{0, 0, 1, 0};
    MetricReport r = compute_metrics(pred, truth, 3);
    CHECK(r.acc[1] == -1.0);   // no truth pixels of class 1
    CHECK(r.iou[1] == doctest::Approx(0.0));  // but predicted, so IoU defined
    CHECK(r.acc[2] == -1.0);
    CHECK(r.iou[2] == -1.0);

    MetricReport ig = compute_metrics(pred, truth, 3, true);
    CHECK(ig.ignore_background);
    CHECK(ig.miou == doctest::Approx(0.0));  // class 0 excluded from the mean
}

TEST_CASE("metrics match a brute-force count on random maps") {
    std::mt19937_64 rng(12345);
    for (int trial = 0; trial < 300; ++trial) {
        const int k = 2 + static_cast<int>(rng() % 4);
        std::vector<int> pred(64), truth(64);
        for (int i = 0; i < 64; ++i) {
            pred[i] = static_cast<int>(rng() % k);
            truth[i] = static_cast<int>(rng() % k);
        }
        MetricReport r = compute_metrics(pred, truth, k);
        auto counts = brute_force_counts(pred, truth, k);

        int64_t total = 0;
        for (int64_t v : r.confusion) total += v;
        CHECK(total == 64);

        for (int c = 0; c < k; ++c) {
            const auto& bc = counts[c];
            if (bc.tp + bc.fn > 0)
                CHECK(r.acc[c] == static_cast<double>(bc.tp) / (bc.tp + bc.fn));
            else
                CHECK(r.acc[c] == -1.0);
            if (bc.tp + bc.fn + bc.fp > 0)
                CHECK(r.iou[c] == static_cast<double>(bc.tp) / (bc.tp + bc.fn + bc.fp));
            else
                CHECK(r.iou[c] == -1.0);
            if (r.acc[c] >= 0 && r.iou[c] >= 0) CHECK(r.iou[c] <= r.acc[c] + 1e-12);
            CHECK(r.acc[c] <= 1.0);
            CHECK(r.iou[c] <= 1.0);
        }
    }
}

TEST_CASE("relabeling classes permutes the per-class metrics") {
    std::mt19937_64 rng(777);
    const int k = 4;
    std::vector<int> pred(100), truth(100);
    for (int i = 0; i < 100; ++i) {
        pred[i] = static_cast<int>(rng() % k);
        truth[i] = static_cast<int>(rng() % k);
    }
    std::vector<int> perm{2, 0, 3, 1};
    std::vector<int> pred_p(100), truth_p(100);
    for (int i = 0; i < 100; ++i) {
        pred_p[i] = perm[pred[i]];
        truth_p[i] = perm[truth[i]];
    }
    MetricReport a = compute_metrics(pred, truth, k);
    MetricReport b = compute_metrics(pred_p, truth_p, k);
    for (int c = 0; c < k; ++c) {
        CHECK(a.acc[c] == b.acc[perm[c]]);
        CHECK(a.iou[c] == b.iou[perm[c]]);
    }
    CHECK(a.macc == doctest::Approx(b.macc));
    CHECK(a.miou == doctest::Approx(b.miou));
}

TEST_CASE("metric input validation") {
    std::vector<int> a{0, 1}, b{0};
    CHECK_THROWS_AS(compute_metrics(a, b, 2), DimError);
    std::vector<int> bad{0, 5};
    CHECK_THROWS_AS(compute_metrics(bad, a, 2), DimError);
}

TEST_CASE("dataset export writes index, tensors, and label maps") {
    namespace fs = std::filesystem;
    SceneSpec spec;
    spec.height = spec.width = 16;
    spec.num_classes = 2;
    spec.noise_sigma = 0.0f;
    spec.objects = {{Shape::Rectangle, 1, Visibility::Both, 8, 8, 3}};
    SampleBatch b = generate(spec, 2);

    const fs::path dir = fs::temp_directory_path() / "eaef_export_test";
    fs::remove_all(dir);
    export_dataset(b, spec, dir.string());
    CHECK(fs::exists(dir / "index.txt"));
    for (int i = 0; i < 2; ++i) {
        CHECK(fs::exists(dir / ("sample" + std::to_string(i) + "_rgb.eaet")));
        CHECK(fs::exists(dir / ("sample" + std::to_string(i) + "_thermal.eaet")));
        CHECK(fs::exists(dir / ("sample" + std::to_string(i) + "_labels.pgm")));
    }
    fs::remove_all(dir);
}
