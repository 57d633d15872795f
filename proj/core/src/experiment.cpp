#include "eaef/experiment.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <thread>

#include "eaef/io.hpp"

namespace eaef {

namespace fs = std::filesystem;

ModelConfig model_config_from(const RunConfig& c) {
    ModelConfig m;
    m.ablation = ablation_from_name(c.ablation);
    m.num_classes = c.num_classes;
    m.interaction_enabled = c.interaction;
    m.shared_spatial_map = c.shared_spatial_map;
    return m;
}

SceneSpec scene_from(const RunConfig& c, uint64_t data_seed) {
    SceneSpec s = (c.scene == "modality_split") ? modality_split_scene(data_seed)
                                                : default_scene(data_seed);
    s.height = s.width = c.image_size;
    s.noise_sigma = c.noise_sigma;
    s.corrupt_rgb_prob = c.corrupt_rgb_prob;
    s.corrupt_thermal_prob = c.corrupt_thermal_prob;
    if (c.scene == "default") s.num_classes = c.num_classes;
    return s;
}

namespace {

// Sample range [lo, hi) of a batch.
SampleBatch slice_batch(const SampleBatch& b, int lo, int hi) {
    const int h = b.rgb.dim(2), w = b.rgb.dim(3);
    SampleBatch out;
    out.num_classes = b.num_classes;
    out.rgb = Tensor({hi - lo, 3, h, w});
    out.thermal = Tensor({hi - lo, 1, h, w});
    std::copy_n(&b.rgb.v[static_cast<size_t>(lo) * 3 * h * w],
                static_cast<size_t>(hi - lo) * 3 * h * w, out.rgb.v.begin());
    std::copy_n(&b.thermal.v[static_cast<size_t>(lo) * h * w],
                static_cast<size_t>(hi - lo) * h * w, out.thermal.v.begin());
    out.labels.assign(b.labels.begin() + static_cast<int64_t>(lo) * h * w,
                      b.labels.begin() + static_cast<int64_t>(hi) * h * w);
    return out;
}

void maybe_zero(SampleBatch& b, const TrainOptions& opt) {
    if (opt.zero_rgb) std::fill(b.rgb.v.begin(), b.rgb.v.end(), 0.0f);
    if (opt.zero_thermal) std::fill(b.thermal.v.begin(), b.thermal.v.end(), 0.0f);
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

MetricReport evaluate_model(Model& model, const SampleBatch& data, bool ignore_background) {
    Tensor logits = net_forward(model, data.rgb, data.thermal);
    return compute_metrics(predict_labels(logits), data.labels, data.num_classes,
                           ignore_background);
}

TrainOutput run_training(const RunConfig& cfg, const std::string& out_dir,
                         const TrainOptions& opt) {
    const uint64_t seed = opt.seed.value_or(cfg.seed);
    fs::create_directories(out_dir);

    SampleBatch train = generate(scene_from(cfg, seed * 7919 + 1), cfg.train_samples);
    SampleBatch val = generate(scene_from(cfg, seed * 7919 + 2), cfg.val_samples);
    maybe_zero(train, opt);
    maybe_zero(val, opt);

    Model model = make_model(model_config_from(cfg), seed);
    OptimizerState ostate;
    SgdConfig sgd{cfg.momentum, cfg.weight_decay};
    LossWeights lw{cfg.dice_weight, cfg.ce_weight, cfg.ce_smoothing};

    TrainOutput out;
    out.checkpoint_dir = out_dir + "/checkpoint";
    out.csv_path = out_dir + "/train_log.csv";
    const uint64_t hash = config_hash(cfg);
    save_checkpoint(out.checkpoint_dir, model, {hash, -1, cfg.lr});

    std::ofstream csv(out.csv_path);
    csv << "epoch,lr,train_loss,val_macc,val_miou\n";

    const std::string diag = out_dir + "/diagnostic";
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const float lr = cfg.lr * std::pow(cfg.gamma, static_cast<float>(epoch));
        double loss_sum = 0.0;
        int steps = 0;
        for (int lo = 0; lo < cfg.train_samples; lo += cfg.batch_size) {
            const int hi = std::min(lo + cfg.batch_size, cfg.train_samples);
            SampleBatch mb = slice_batch(train, lo, hi);
            StepResult r = train_step(model, mb.rgb, mb.thermal, mb.labels, ostate, lr, sgd, lw,
                                      &diag);
            loss_sum += r.loss;
            ++steps;
        }
        MetricReport m = evaluate_model(model, val, cfg.ignore_background);
        EpochLog log{epoch, lr, loss_sum / std::max(steps, 1), m.macc, m.miou};
        out.log.push_back(log);
        csv << log.epoch << "," << fmt(log.lr) << "," << fmt(log.train_loss) << ","
            << fmt(log.val_macc) << "," << fmt(log.val_miou) << "\n";
        if (log.val_miou > out.best_val_miou || out.best_epoch < 0) {
            out.best_epoch = epoch;
            out.best_val_miou = log.val_miou;
            out.best_val_macc = log.val_macc;
            save_checkpoint(out.checkpoint_dir, model, {hash, epoch, lr});
        }
    }
    out.final_train_miou = evaluate_model(model, train, cfg.ignore_background).miou;
    return out;
}

int env_thread_cap() {
    if (const char* env = std::getenv("EAEF_THREADS")) {
        const int v = std::atoi(env);
        if (v > 0) return v;
    }
    const unsigned hc = std::thread::hardware_concurrency();
    return hc > 0 ? static_cast<int>(hc) : 1;
}

std::vector<AblateRow> run_ablation(const RunConfig& cfg, const std::string& out_dir) {
    const std::vector<std::string> variants = {"baseline", "aib_only", "acb_only", "full"};
    struct Job {
        size_t variant;
        int seed_idx;
    };
    std::vector<Job> jobs;
    for (size_t v = 0; v < variants.size(); ++v)
        for (int s = 0; s < cfg.ablate_seeds; ++s) jobs.push_back({v, s});

    std::vector<std::vector<double>> miou(variants.size()), macc(variants.size());
    for (auto& v : miou) v.resize(static_cast<size_t>(cfg.ablate_seeds));
    for (auto& v : macc) v.resize(static_cast<size_t>(cfg.ablate_seeds));

    std::mutex job_mu;
    size_t next = 0;
    std::exception_ptr err;
    auto worker = [&] {
        for (;;) {
            size_t idx;
            {
                std::lock_guard<std::mutex> lk(job_mu);
                if (next >= jobs.size() || err) return;
                idx = next++;
            }
            const Job job = jobs[idx];
            try {
                RunConfig c = cfg;
                c.ablation = variants[job.variant];
                TrainOptions topt;
                topt.seed = cfg.seed + static_cast<uint64_t>(job.seed_idx);
                TrainOutput r = run_training(
                    c, out_dir + "/" + variants[job.variant] + "_s" + std::to_string(job.seed_idx),
                    topt);
                miou[job.variant][static_cast<size_t>(job.seed_idx)] = r.best_val_miou;
                macc[job.variant][static_cast<size_t>(job.seed_idx)] = r.best_val_macc;
            } catch (...) {
                std::lock_guard<std::mutex> lk(job_mu);
                if (!err) err = std::current_exception();
                return;
            }
        }
    };
    const int nthreads = std::min<int>(env_thread_cap(), static_cast<int>(jobs.size()));
    std::vector<std::thread> pool;
    for (int i = 0; i < nthreads; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (err) std::rethrow_exception(err);

    std::vector<AblateRow> rows;
    for (size_t v = 0; v < variants.size(); ++v)
        rows.push_back({variants[v], median(macc[v]), median(miou[v])});

    std::ofstream csv(out_dir + "/ablation.csv");
    csv << "variant,macc,miou\n";
    for (const auto& r : rows) csv << r.variant << "," << fmt(r.macc) << "," << fmt(r.miou) << "\n";
    return rows;
}

void save_checkpoint(const std::string& dir, Model& model, const CheckpointMeta& meta) {
    fs::create_directories(dir);
    std::ofstream manifest(dir + "/manifest.txt");
    manifest << "config_hash=" << meta.config_hash << "\n";
    manifest << "epoch=" << meta.epoch << "\n";
    manifest << "lr=" << fmt(static_cast<double>(meta.lr)) << "\n";
    for (auto& [name, t] : model.named_parameters()) {
        const std::string file = name + ".eaet";
        write_tensor(dir + "/" + file, *t);
        manifest << "param " << name << " " << file << "\n";
    }
}

CheckpointMeta read_checkpoint_meta(const std::string& dir) {
    std::ifstream manifest(dir + "/manifest.txt");
    if (!manifest) throw FormatError("cannot open checkpoint manifest in " + dir);
    CheckpointMeta meta;
    std::string line;
    while (std::getline(manifest, line)) {
        if (line.rfind("config_hash=", 0) == 0) meta.config_hash = std::stoull(line.substr(12));
        else if (line.rfind("epoch=", 0) == 0) meta.epoch = std::stoi(line.substr(6));
        else if (line.rfind("lr=", 0) == 0) meta.lr = std::stof(line.substr(3));
    }
    return meta;
}

void load_checkpoint(const std::string& dir, Model& model) {
    for (auto& [name, t] : model.named_parameters()) {
        Tensor loaded = read_tensor(dir + "/" + name + ".eaet");
        if (loaded.dims != t->dims)
            throw FormatError("checkpoint parameter " + name + " has mismatched shape");
        t->v = std::move(loaded.v);
    }
}

}  // namespace eaef
