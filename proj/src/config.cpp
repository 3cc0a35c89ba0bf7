#include "dafd/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "dafd/errors.hpp"
#include "dafd/signal_prep.hpp"

namespace dafd {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        const double x = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("");
        return x;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': bad number '" + v + "'");
    }
}

int64_t parse_int(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        const long long x = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("");
        return x;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': bad integer '" + v + "'");
    }
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError("config key '" + key + "': bad boolean '" + v + "'");
}

std::vector<double> parse_list(const std::string& key, const std::string& v) {
    std::vector<double> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(parse_double(key, item));
    }
    if (out.empty()) throw ConfigError("config key '" + key + "': empty list");
    return out;
}

}  // namespace

void apply_config_line(HarnessConfig& cfg, const std::string& key, const std::string& value) {
    if (key == "data_mode") {
        if (value != "files" && value != "synth")
            throw ConfigError("data_mode must be 'files' or 'synth', got '" + value + "'");
        cfg.data_mode = value;
    } else if (key == "data_dir") {
        cfg.data_dir = value;
    } else if (key == "out_dir") {
        cfg.out_dir = value;
    } else if (key == "norm_factor") {
        cfg.norm_factor = parse_double(key, value);
    } else if (key == "windows_per_class") {
        cfg.windows_per_class = (size_t)parse_int(key, value);
    } else if (key == "epochs") {
        cfg.epochs = (int)parse_int(key, value);
    } else if (key == "batch_size") {
        cfg.batch_size = (int)parse_int(key, value);
    } else if (key == "learning_rate") {
        cfg.learning_rate = parse_double(key, value);
    } else if (key == "seeds") {
        cfg.seeds = (int)parse_int(key, value);
    } else if (key == "master_seed") {
        cfg.master_seed = (uint64_t)parse_int(key, value);
    } else if (key == "lambda_d") {
        cfg.lambda_d = parse_double(key, value);
    } else if (key == "lambda_mmd") {
        cfg.lambda_mmd = parse_double(key, value);
    } else if (key == "kernel_widths") {
        cfg.kernel_widths = parse_list(key, value);
    } else if (key == "workers") {
        cfg.workers = (int)parse_int(key, value);
    } else if (key == "save_checkpoints") {
        cfg.save_checkpoints = parse_bool(key, value);
    } else if (key == "synth_seed") {
        cfg.synth_seed = (uint64_t)parse_int(key, value);
    } else if (key == "synth_noise_std") {
        cfg.synth_noise_std = parse_double(key, value);
    } else if (key == "synth_shift_level") {
        cfg.synth_shift_level = (int)parse_int(key, value);
    } else {
        throw ConfigError("unknown config key '" + key + "'");
    }
}

HarnessConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file '" + path + "'");
    HarnessConfig cfg;
    std::string line;
    size_t line_no = 0;
    while (std::getline(f, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(path + ":" + std::to_string(line_no) +
                              ": expected 'key = value'");
        apply_config_line(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    cfg.validate();
    return cfg;
}

void HarnessConfig::validate() const {
    if (data_mode == "files" && data_dir.empty())
        throw ConfigError("data_mode=files requires data_dir");
    if (norm_factor != 0.0 && !is_allowed_normalization_factor(norm_factor))
        throw ConfigError("norm_factor must be one of {1, 8, 64, 512} (or 0 to tune)");
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
    if (batch_size < 2) throw ConfigError("batch_size must be >= 2");
    if (seeds < 1) throw ConfigError("seeds must be >= 1");
    if (learning_rate <= 0.0) throw ConfigError("learning_rate must be positive");
    if (workers < 0) throw ConfigError("workers must be >= 0");
    if (windows_per_class < 1) throw ConfigError("windows_per_class must be >= 1");
    if (synth_shift_level < 0) throw ConfigError("synth_shift_level must be >= 0");
    for (double w : kernel_widths)
        if (w <= 0.0) throw ConfigError("kernel_widths must be strictly positive");
    if (lambda_d < 0.0 || lambda_mmd < 0.0) throw ConfigError("lambda values must be >= 0");
}

}  // namespace dafd
