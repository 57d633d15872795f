// Command-line harness: gradient audits, case inspection, training, the
// ablation sweep, evaluation, and micro-benchmarks.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>

#include "eaef/experiment.hpp"
#include "eaef/gradaudit.hpp"
#include "eaef/io.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitNumeric = 2;

std::vector<int> parse_channel_list(const std::string& s) {
    std::vector<int> out;
    std::istringstream in(s);
    std::string tok;
    while (std::getline(in, tok, ','))
        if (!tok.empty()) out.push_back(std::stoi(tok));
    return out;
}

int cmd_gradcheck(const eaef::RunConfig& cfg, bool inject_fault) {
    eaef::AuditOptions opt;
    opt.channels = parse_channel_list(cfg.gradcheck_channels);
    opt.inject_fault = inject_fault;
    if (opt.channels.empty()) {
        std::cout << "gradcheck: no parameter groups configured, nothing to audit\n";
        return kExitOk;
    }
    auto results = eaef::run_gradient_audit(opt);
    bool ok = true;
    for (const auto& r : results) {
        const double tol = r.group.rfind("eaef.", 0) == 0 ? opt.end_to_end_tolerance
                                                          : opt.op_tolerance;
        const bool pass = r.pass(tol);
        ok = ok && pass;
        std::printf("%-28s max_rel_err=%.3e checked=%lld %s\n", r.group.c_str(), r.max_rel_err,
                    static_cast<long long>(r.checked), pass ? "PASS" : "FAIL");
    }
    if (!ok) {
        for (const auto& r : results) {
            const double tol = r.group.rfind("eaef.", 0) == 0 ? opt.end_to_end_tolerance
                                                              : opt.op_tolerance;
            if (!r.pass(tol))
                std::cout << "gradcheck: tolerance breach in " << r.group << "\n";
        }
        return kExitNumeric;
    }
    std::cout << "gradcheck: all groups within tolerance\n";
    return kExitOk;
}

int cmd_cases(const eaef::RunConfig& cfg, const std::string& rgb_path,
              const std::string& t_path, const std::string& out_dir, bool symmetric,
              bool identity_mlp) {
    eaef::Tensor f_rgb = eaef::read_tensor(rgb_path);
    eaef::Tensor f_t = eaef::read_tensor(t_path);
    if (f_rgb.rank() != 4) throw eaef::DimError("cases: rgb features must be rank-4");
    const int c = f_rgb.dim(1);

    std::mt19937_64 rng(cfg.seed);
    eaef::FusionOptions fopt;
    fopt.interaction_enabled = cfg.interaction;
    fopt.shared_spatial_map = cfg.shared_spatial_map;
    eaef::EaefParams params = eaef::make_eaef_params<float>(c, rng, fopt);
    if (identity_mlp) {
        eaef::DenseLayerParams ident{eaef::Tensor({c, c}), eaef::Tensor({c})};
        for (int i = 0; i < c; ++i) ident.weight.v[static_cast<size_t>(i) * c + i] = 1.0f;
        params.mlp_rgb = {ident};
        params.mlp_t = {ident};
    }
    if (symmetric) eaef::symmetrize_eaef_params(params);

    eaef::FusionState state = eaef::eaef_forward(f_rgb, f_t, params, fopt);

    std::map<std::string, int> histogram;
    for (auto l : state.case_labels) ++histogram[eaef::case_name(l)];
    std::cout << "case histogram (" << state.case_labels.size() << " channels):\n";
    for (const auto& [name, count] : histogram) std::cout << "  " << name << " " << count << "\n";

    double lo = 1.0, hi = 0.0, sum = 0.0;
    for (float g : state.gate_i.v) {
        lo = std::min(lo, static_cast<double>(g));
        hi = std::max(hi, static_cast<double>(g));
        sum += g;
    }
    std::printf("gate_i min=%.6f mean=%.6f max=%.6f\n", lo, sum / state.gate_i.size(), hi);

    if (!out_dir.empty()) {
        eaef::export_fusion_state(state, out_dir);
        std::cout << "state exported to " << out_dir << "\n";
    }
    return kExitOk;
}

int cmd_train(const eaef::RunConfig& cfg, const std::string& out_dir) {
    eaef::TrainOutput r = eaef::run_training(cfg, out_dir);
    for (const auto& e : r.log)
        std::printf("epoch %d lr=%.6f loss=%.6f val_macc=%.4f val_miou=%.4f\n", e.epoch, e.lr,
                    e.train_loss, e.val_macc, e.val_miou);
    std::printf("best epoch %d val_miou=%.4f; checkpoint: %s\n", r.best_epoch, r.best_val_miou,
                r.checkpoint_dir.c_str());
    std::cout << "log: " << r.csv_path << "\n";
    return kExitOk;
}

int cmd_ablate(const eaef::RunConfig& cfg, const std::string& out_dir) {
    auto rows = eaef::run_ablation(cfg, out_dir);
    std::printf("%-10s %8s %8s  (median over %d seeds)\n", "variant", "mAcc", "mIoU",
                cfg.ablate_seeds);
    for (const auto& r : rows)
        std::printf("%-10s %8.4f %8.4f\n", r.variant.c_str(), r.macc, r.miou);
    std::cout << "table: " << out_dir << "/ablation.csv\n";
    return kExitOk;
}

int cmd_eval(const eaef::RunConfig& cfg, const std::string& checkpoint_dir,
             const std::string& out_dir) {
    eaef::CheckpointMeta meta = eaef::read_checkpoint_meta(checkpoint_dir);
    if (meta.config_hash != eaef::config_hash(cfg)) {
        std::cerr << "eval: checkpoint config hash " << meta.config_hash
                  << " does not match this config (" << eaef::config_hash(cfg)
                  << "); refusing to evaluate\n";
        return kExitValidation;
    }
    eaef::Model model = eaef::make_model(eaef::model_config_from(cfg), cfg.seed);
    eaef::load_checkpoint(checkpoint_dir, model);

    eaef::SampleBatch held_out =
        eaef::generate(eaef::scene_from(cfg, cfg.seed * 7919 + 3), cfg.val_samples);
    eaef::MetricReport m = eaef::evaluate_model(model, held_out, cfg.ignore_background);

    std::printf("%-8s %8s %8s\n", "class", "Acc", "IoU");
    for (int c = 0; c < m.num_classes; ++c) {
        if (m.acc[c] < 0 && m.iou[c] < 0) continue;
        std::printf("%-8d %8.4f %8.4f\n", c, m.acc[c], m.iou[c]);
    }
    std::printf("%-8s %8.4f %8.4f\n", "mean", m.macc, m.miou);
    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        eaef::write_metrics_csv(out_dir + "/eval.csv", m);
    }
    return kExitOk;
}

int cmd_bench(const eaef::RunConfig& cfg) {
    using clock = std::chrono::steady_clock;
    eaef::ModelConfig mc = eaef::model_config_from(cfg);
    std::cout << "parameter counts:\n";
    for (const char* name : {"baseline", "aib_only", "acb_only", "full"}) {
        eaef::ModelConfig v = mc;
        v.ablation = eaef::ablation_from_name(name);
        eaef::Model m = eaef::make_model(v, cfg.seed);
        std::printf("  %-10s %lld\n", name, static_cast<long long>(m.parameter_count()));
    }

    std::cout << "eaef_forward timing (100 warm iterations each):\n";
    std::mt19937_64 rng(cfg.seed);
    int spatial = cfg.image_size;
    const std::vector<int> stage_channels{8, 16, 32, 64, 64};
    for (size_t k = 0; k < stage_channels.size(); ++k) {
        spatial /= 2;
        const int c = stage_channels[k];
        eaef::EaefParams p = eaef::make_eaef_params<float>(c, rng);
        eaef::Tensor f_rgb = eaef::Tensor::full({1, c, spatial, spatial}, 0.5f);
        eaef::Tensor f_t = eaef::Tensor::full({1, c, spatial, spatial}, 0.25f);
        for (int i = 0; i < 5; ++i) eaef::eaef_forward(f_rgb, f_t, p);  // warmup
        const auto t0 = clock::now();
        const int iters = 100;
        for (int i = 0; i < iters; ++i) eaef::eaef_forward(f_rgb, f_t, p);
        const double sec = std::chrono::duration<double>(clock::now() - t0).count();
        std::printf("  scale %zu (c=%-3d %3dx%-3d): %8.3f ms/iter, %8.1f fusions/sec\n", k, c,
                    spatial, spatial, 1e3 * sec / iters, iters / sec);
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"explicit attention-enhanced fusion harness"};
    app.require_subcommand(1);

    std::string config_path, out_dir, checkpoint_dir, rgb_path, t_path;
    uint64_t seed_override = 0;
    bool have_seed = false, inject_fault = false, symmetric = false, identity_mlp = false;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "run configuration file (key=value lines)");
        sub->add_option("--out", out_dir, "output directory");
        sub->add_option("--seed", seed_override, "override the config seed")
            ->each([&](const std::string&) { have_seed = true; });
    };

    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient audit");
    add_common(gradcheck);
    gradcheck->add_flag("--inject-fault", inject_fault,
                        "corrupt one analytic gradient (negative control)");

    auto* cases = app.add_subcommand("cases", "case taxonomy report for a feature pair");
    add_common(cases);
    cases->add_option("rgb", rgb_path, "RGB feature tensor dump")->required();
    cases->add_option("thermal", t_path, "thermal feature tensor dump")->required();
    cases->add_flag("--symmetric", symmetric, "mirror parameters across modalities");
    cases->add_flag("--identity-mlp", identity_mlp, "use identity channel MLPs");

    auto* train = app.add_subcommand("train", "train on generated data");
    add_common(train);
    auto* ablate = app.add_subcommand("ablate", "train all four ablation variants");
    add_common(ablate);
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a held-out split");
    add_common(eval);
    eval->add_option("--checkpoint", checkpoint_dir, "checkpoint directory")->required();
    auto* bench = app.add_subcommand("bench", "timing and parameter-count report");
    add_common(bench);

    CLI11_PARSE(app, argc, argv);

    try {
        eaef::RunConfig cfg;
        if (!config_path.empty()) cfg = eaef::load_config(config_path);
        if (have_seed) cfg.seed = seed_override;
        const std::string out = out_dir.empty() ? cfg.out_dir : out_dir;

        if (gradcheck->parsed()) return cmd_gradcheck(cfg, inject_fault);
        if (cases->parsed()) return cmd_cases(cfg, rgb_path, t_path, out, symmetric, identity_mlp);
        if (train->parsed()) return cmd_train(cfg, out);
        if (ablate->parsed()) return cmd_ablate(cfg, out);
        if (eval->parsed()) return cmd_eval(cfg, checkpoint_dir, out);
        if (bench->parsed()) return cmd_bench(cfg);
    } catch (const eaef::NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    }
    return kExitOk;
}
