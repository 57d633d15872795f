#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "eaef/data_synth.hpp"
#include "eaef/experiment.hpp"
#include "eaef/fusion.hpp"
#include "eaef/gradaudit.hpp"
#include "eaef/network.hpp"

// End-to-end acceptance gate. Each test case checks one release criterion and
// prints a single PASS/FAIL line so the gate can be read off the log.

using namespace eaef;

namespace {

namespace fs = std::filesystem;

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void report(const char* name, bool ok, const std::string& detail) {
    std::printf("[%s] %s (%s)\n", ok ? "PASS" : "FAIL", name, detail.c_str());
    std::fflush(stdout);
}

std::string scratch_dir(const std::string& leaf) {
    const fs::path dir = fs::temp_directory_path() / "eaef_acceptance" / leaf;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir.string();
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string read_bytes(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    REQUIRE(f.good());
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

float max_abs_diff(const Tensor& a, const Tensor& b) {
    REQUIRE(a.dims == b.dims);
    float m = 0.0f;
    for (int64_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.v[i] - b.v[i]));
    return m;
}

}  // namespace

TEST_CASE("gradient audit: every op and the full block pass finite differences") {
    const auto t0 = std::chrono::steady_clock::now();
    AuditOptions opt;  // 20 seeds, 1e-4 per op, 1e-3 end to end
    auto results = run_gradient_audit(opt);
    const double elapsed = seconds_since(t0);

    double worst = 0.0;
    std::string worst_group = "-";
    for (const auto& r : results)
        if (r.max_rel_err > worst) {
            worst = r.max_rel_err;
            worst_group = r.group;
        }
    const bool ok = audit_passed(results, opt) && elapsed < 60.0;
    char detail[160];
    std::snprintf(detail, sizeof detail, "%zu groups, worst %s rel err %.2e, %.1f s",
                  results.size(), worst_group.c_str(), worst, elapsed);
    report("gradient audit", ok, detail);
    CHECK(audit_passed(results, opt));
    CHECK(elapsed < 60.0);
}

TEST_CASE("sign interval: the gate splits exactly at agreeing weight signs") {
    std::mt19937_64 rng(2024);
    std::normal_distribution<float> dist(0.0f, 1.5f);
    int failures = 0;
    for (int trial = 0; trial < 10000; ++trial) {
        const int c = 1 + static_cast<int>(rng() % 512);
        Tens<float> r({1}), t({1});
        r.v[0] = (trial % 97 == 0) ? 0.0f : dist(rng);
        t.v[0] = (trial % 131 == 0) ? 0.0f : dist(rng);
        Tens<float> gate = aib_gate(r, t, c);
        Tens<float> comp = one_minus(gate);
        const double sign_prod =
            static_cast<double>(r.v[0]) * static_cast<double>(t.v[0]);
        const bool agree = sign_prod >= 0.0;
        if ((gate.v[0] >= 0.5f) != agree) ++failures;
        if (comp.v[0] != 1.0f - gate.v[0]) ++failures;
    }
    report("sign interval", failures == 0,
           "10000 triples, " + std::to_string(failures) + " failures");
    CHECK(failures == 0);
}

TEST_CASE("bypass identity: an all-ones interaction gate passes features through") {
    std::mt19937_64 rng(7);
    std::normal_distribution<float> dist(0.0f, 1.0f);
    float worst = 0.0f;
    for (int trial = 0; trial < 100; ++trial) {
        const int n = 1 + static_cast<int>(rng() % 2);
        const int c = 1 + static_cast<int>(rng() % 8);
        const int h = 1 + static_cast<int>(rng() % 6);
        const int w = 1 + static_cast<int>(rng() % 6);
        EaefParams p = make_eaef_params<float>(c, rng);
        Tensor f_rgb({n, c, h, w}), f_t({n, c, h, w});
        for (auto& v : f_rgb.v) v = dist(rng);
        for (auto& v : f_t.v) v = dist(rng);

        FusionOptions opt;
        opt.bypass_interaction_gate = true;
        FusionState s = eaef_forward(f_rgb, f_t, p, opt);
        worst = std::max(worst, max_abs_diff(s.f_bar_rgb, f_rgb));
        worst = std::max(worst, max_abs_diff(s.f_bar_t, f_t));
    }
    char detail[96];
    std::snprintf(detail, sizeof detail, "100 instances, max abs err %.2e", worst);
    report("bypass identity", worst <= 1e-6f, detail);
    CHECK(worst <= 1e-6f);
}

TEST_CASE("symmetry: mirrored parameters treat the two modalities identically") {
    std::mt19937_64 rng(11);
    std::normal_distribution<float> dist(0.0f, 1.0f);
    float worst = 0.0f;
    for (int trial = 0; trial < 20; ++trial) {
        const int c = 2 + static_cast<int>(rng() % 7);
        EaefParams p = make_eaef_params<float>(c, rng);
        symmetrize_eaef_params(p);
        Tensor f({2, c, 5, 5});
        for (auto& v : f.v) v = dist(rng);

        FusionState s = eaef_forward(f, f, p);
        worst = std::max(worst, max_abs_diff(s.R, s.T_));
        worst = std::max(worst, max_abs_diff(s.f_bar_rgb, s.f_bar_t));
        auto halves = split_channels(s.f_final);
        worst = std::max(worst, max_abs_diff(halves.first, halves.second));
    }
    char detail[96];
    std::snprintf(detail, sizeof detail, "20 instances, max abs err %.2e", worst);
    report("symmetry", worst <= 1e-6f, detail);
    CHECK(worst <= 1e-6f);
}

TEST_CASE("ablation ordering: the full block beats its stripped variants") {
    const auto t0 = std::chrono::steady_clock::now();
    RunConfig cfg;  // the stock training recipe
    auto rows = run_ablation(cfg, scratch_dir("ablation"));
    const double elapsed = seconds_since(t0);

    double base = 0.0, aib = 0.0, acb = 0.0, full = 0.0;
    for (const auto& r : rows) {
        if (r.variant == "baseline") base = r.miou;
        if (r.variant == "aib_only") aib = r.miou;
        if (r.variant == "acb_only") acb = r.miou;
        if (r.variant == "full") full = r.miou;
    }
    const bool ok =
        full >= base + 0.01 && full >= aib && full >= acb && elapsed < 900.0;
    char detail[192];
    std::snprintf(detail, sizeof detail,
                  "median mIoU base %.4f aib %.4f acb %.4f full %.4f, %.0f s",
                  base, aib, acb, full, elapsed);
    report("ablation ordering", ok, detail);
    CHECK(full >= base + 0.01);
    CHECK(full >= aib);
    CHECK(full >= acb);
    CHECK(elapsed < 900.0);
}

TEST_CASE("modality complement: fusion beats either modality alone") {
    RunConfig cfg;
    cfg.scene = "modality_split";
    std::vector<double> fused, rgb_only, thermal_only;
    for (uint64_t s = 1; s <= 5; ++s) {
        TrainOptions both, no_rgb, no_thermal;
        both.seed = no_rgb.seed = no_thermal.seed = s;
        no_rgb.zero_rgb = true;
        no_thermal.zero_thermal = true;
        const std::string tag = std::to_string(s);
        fused.push_back(
            run_training(cfg, scratch_dir("complement_fused_" + tag), both).best_val_miou);
        rgb_only.push_back(
            run_training(cfg, scratch_dir("complement_norgb_" + tag), no_rgb).best_val_miou);
        thermal_only.push_back(
            run_training(cfg, scratch_dir("complement_noth_" + tag), no_thermal)
                .best_val_miou);
    }
    const double mf = median(fused), mr = median(rgb_only), mt = median(thermal_only);
    const bool ok = mf >= mr + 0.05 && mf >= mt + 0.05;
    char detail[128];
    std::snprintf(detail, sizeof detail,
                  "median mIoU fused %.4f, thermal-only %.4f, rgb-only %.4f", mf, mr, mt);
    report("modality complement", ok, detail);
    CHECK(mf >= mr + 0.05);
    CHECK(mf >= mt + 0.05);
}

TEST_CASE("overfit smoke: 50 steps halve the loss on a fixed batch") {
    const auto t0 = std::chrono::steady_clock::now();
    SceneSpec scene;
    scene.height = scene.width = 32;
    scene.num_classes = 2;
    scene.noise_sigma = 0.01f;
    scene.objects = {{Shape::Rectangle, 1, Visibility::Both, 16, 16, 10}};
    scene.seed = 300;
    SampleBatch batch = generate(scene, 4);

    ModelConfig cfg;
    cfg.num_classes = batch.num_classes;
    cfg.stage_channels = {8, 16, 16, 16, 16};
    Model model = make_model(cfg, 300);
    OptimizerState opt;
    LossWeights lw;
    lw.ce_smoothing = 0.0f;
    double first = 0.0, last = 0.0;
    for (int step = 0; step < 50; ++step) {
        const float lr = 0.2f * std::pow(0.97f, static_cast<float>(step));
        last = train_step(model, batch.rgb, batch.thermal, batch.labels, opt, lr, SgdConfig{},
                          lw)
                   .loss;
        if (step == 0) first = last;
    }
    const double elapsed = seconds_since(t0);
    const bool ok = last < 0.5 * first && elapsed < 30.0;
    char detail[96];
    std::snprintf(detail, sizeof detail, "loss %.4f -> %.4f, %.1f s", first, last, elapsed);
    report("overfit smoke", ok, detail);
    CHECK(last < 0.5 * first);
    CHECK(elapsed < 30.0);
}

TEST_CASE("metric oracle: metrics match a brute-force confusion count") {
    std::mt19937_64 rng(555);
    int failures = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const int k = 2 + static_cast<int>(rng() % 5);
        std::vector<int> pred(64), truth(64);
        for (int i = 0; i < 64; ++i) {
            pred[i] = static_cast<int>(rng() % k);
            truth[i] = static_cast<int>(rng() % k);
        }
        MetricReport r = compute_metrics(pred, truth, k);

        for (int c = 0; c < k; ++c) {
            int64_t tp = 0, fp = 0, fn = 0;
            for (int i = 0; i < 64; ++i) {
                if (pred[i] == c && truth[i] == c) ++tp;
                if (pred[i] == c && truth[i] != c) ++fp;
                if (pred[i] != c && truth[i] == c) ++fn;
            }
            const double acc = tp + fn > 0 ? static_cast<double>(tp) / (tp + fn) : -1.0;
            const double iou =
                tp + fn + fp > 0 ? static_cast<double>(tp) / (tp + fn + fp) : -1.0;
            if (r.acc[c] != acc || r.iou[c] != iou) ++failures;
            if (r.confusion[static_cast<size_t>(c) * k + c] != tp) ++failures;
        }
    }
    report("metric oracle", failures == 0,
           "1000 maps, " + std::to_string(failures) + " mismatches");
    CHECK(failures == 0);
}

TEST_CASE("determinism: identical configs produce identical training logs") {
    RunConfig cfg;
    cfg.epochs = 4;
    TrainOutput a = run_training(cfg, scratch_dir("det_a"));
    TrainOutput b = run_training(cfg, scratch_dir("det_b"));
    const std::string bytes_a = read_bytes(a.csv_path);
    const std::string bytes_b = read_bytes(b.csv_path);
    const bool ok = !bytes_a.empty() && bytes_a == bytes_b;
    char detail[96];
    std::snprintf(detail, sizeof detail, "%zu-byte logs %s", bytes_a.size(),
                  ok ? "bitwise equal" : "differ");
    report("determinism", ok, detail);
    CHECK(bytes_a == bytes_b);
}
