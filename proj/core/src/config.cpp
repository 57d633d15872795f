#include "eaef/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace eaef {

namespace {

std::string fmt_float(float v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(v));
    return buf;
}

struct Field {
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
    T out{};
    if constexpr (std::is_floating_point_v<T>) {
        try {
            size_t pos = 0;
            out = static_cast<T>(std::stod(value, &pos));
            if (pos != value.size()) throw std::invalid_argument(value);
        } catch (const std::exception&) {
            throw ConfigError("bad float for " + key + ": '" + value + "'");
        }
    } else {
        auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
        if (ec != std::errc() || p != value.data() + value.size())
            throw ConfigError("bad integer for " + key + ": '" + value + "'");
    }
    return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    throw ConfigError("bad bool for " + key + ": '" + value + "'");
}

const std::map<std::string, Field>& schema() {
    static const std::map<std::string, Field> s = [] {
        std::map<std::string, Field> m;
        auto add_u64 = [&](const char* k, uint64_t RunConfig::* f) {
            m[k] = {[k, f](RunConfig& c, const std::string& v) { c.*f = parse_number<uint64_t>(k, v); },
                    [f](const RunConfig& c) { return std::to_string(c.*f); }};
        };
        auto add_int = [&](const char* k, int RunConfig::* f) {
            m[k] = {[k, f](RunConfig& c, const std::string& v) { c.*f = parse_number<int>(k, v); },
                    [f](const RunConfig& c) { return std::to_string(c.*f); }};
        };
        auto add_float = [&](const char* k, float RunConfig::* f) {
            m[k] = {[k, f](RunConfig& c, const std::string& v) { c.*f = parse_number<float>(k, v); },
                    [f](const RunConfig& c) { return fmt_float(c.*f); }};
        };
        auto add_bool = [&](const char* k, bool RunConfig::* f) {
            m[k] = {[k, f](RunConfig& c, const std::string& v) { c.*f = parse_bool(k, v); },
                    [f](const RunConfig& c) { return (c.*f) ? "true" : "false"; }};
        };
        auto add_str = [&](const char* k, std::string RunConfig::* f) {
            m[k] = {[f](RunConfig& c, const std::string& v) { c.*f = v; },
                    [f](const RunConfig& c) { return c.*f; }};
        };
        add_u64("seed", &RunConfig::seed);
        add_int("epochs", &RunConfig::epochs);
        add_int("batch_size", &RunConfig::batch_size);
        add_float("lr", &RunConfig::lr);
        add_float("gamma", &RunConfig::gamma);
        add_float("momentum", &RunConfig::momentum);
        add_float("weight_decay", &RunConfig::weight_decay);
        add_float("dice_weight", &RunConfig::dice_weight);
        add_float("ce_weight", &RunConfig::ce_weight);
        add_float("ce_smoothing", &RunConfig::ce_smoothing);
        add_str("ablation", &RunConfig::ablation);
        add_int("num_classes", &RunConfig::num_classes);
        add_int("image_size", &RunConfig::image_size);
        add_int("train_samples", &RunConfig::train_samples);
        add_int("val_samples", &RunConfig::val_samples);
        add_float("noise_sigma", &RunConfig::noise_sigma);
        add_float("corrupt_rgb_prob", &RunConfig::corrupt_rgb_prob);
        add_float("corrupt_thermal_prob", &RunConfig::corrupt_thermal_prob);
        add_str("scene", &RunConfig::scene);
        add_bool("interaction", &RunConfig::interaction);
        add_bool("shared_spatial_map", &RunConfig::shared_spatial_map);
        add_bool("ignore_background", &RunConfig::ignore_background);
        add_int("ablate_seeds", &RunConfig::ablate_seeds);
        add_str("gradcheck_channels", &RunConfig::gradcheck_channels);
        add_str("out_dir", &RunConfig::out_dir);
        return m;
    }();
    return s;
}

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    size_t b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? "" : s.substr(a, b - a + 1);
}

}  // namespace

RunConfig parse_config(const std::string& text) {
    RunConfig c;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(lineno) + ": expected key=value");
        const std::string key = trim(t.substr(0, eq));
        const std::string value = trim(t.substr(eq + 1));
        auto it = schema().find(key);
        if (it == schema().end())
            throw ConfigError("line " + std::to_string(lineno) + ": unknown key '" + key + "'");
        it->second.set(c, value);
    }
    validate_config(c);
    return c;
}

RunConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file " + path);
    std::ostringstream buf;
    buf << f.rdbuf();
    return parse_config(buf.str());
}

std::string serialize_config(const RunConfig& c) {
    std::ostringstream out;
    for (const auto& [key, field] : schema()) out << key << "=" << field.get(c) << "\n";
    return out.str();
}

uint64_t config_hash(const RunConfig& c) {
    const std::string s = serialize_config(c);
    uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    return h;
}

void validate_config(const RunConfig& c) {
    if (c.epochs < 0) throw ConfigError("epochs must be >= 0");
    if (c.batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (c.num_classes < 2) throw ConfigError("num_classes must be >= 2");
    if (c.image_size < 32 || c.image_size % 32 != 0)
        throw ConfigError("image_size must be a positive multiple of 32");
    if (c.lr <= 0.0f) throw ConfigError("lr must be > 0");
    if (c.gamma <= 0.0f || c.gamma > 1.0f) throw ConfigError("gamma must be in (0, 1]");
    if (c.dice_weight < 0.0f || c.ce_weight < 0.0f || c.dice_weight + c.ce_weight <= 0.0f)
        throw ConfigError("loss weights must be nonnegative with positive sum");
    if (c.ce_smoothing < 0.0f || c.ce_smoothing >= 1.0f)
        throw ConfigError("ce_smoothing must be in [0, 1)");
    if (c.ablation != "baseline" && c.ablation != "aib_only" && c.ablation != "acb_only" &&
        c.ablation != "full")
        throw ConfigError("ablation must be baseline|aib_only|acb_only|full");
    if (c.scene != "default" && c.scene != "modality_split")
        throw ConfigError("scene must be default|modality_split");
    if (c.corrupt_rgb_prob < 0.0f || c.corrupt_thermal_prob < 0.0f ||
        c.corrupt_rgb_prob + c.corrupt_thermal_prob > 1.0f)
        throw ConfigError("corruption probabilities must be in [0,1] and sum to <= 1");
    if (c.ablate_seeds < 1) throw ConfigError("ablate_seeds must be >= 1");
    if (c.train_samples < 1 || c.val_samples < 1)
        throw ConfigError("sample counts must be >= 1");
}

}  // namespace eaef
