#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace dafd {

// Flat key = value configuration ('#' starts a comment). Unknown keys are
// rejected so typos fail loudly.
struct HarnessConfig {
    // Data source: "files" reads load<i>_class<j>.(f32|csv) from data_dir,
    // "synth" generates the four loads from the built-in generator.
    std::string data_mode = "synth";
    std::string data_dir;
    std::string out_dir = "out";

    // Preprocessing. A zero factor means: tune on the validation task.
    double norm_factor = 0.0;
    size_t windows_per_class = 200;

    // Training recipe.
    int epochs = 2000;
    int batch_size = 64;
    double learning_rate = 0.0002;
    int seeds = 5;
    uint64_t master_seed = 2026;

    // Method hyper-parameters. Zero means: tune from the {0.1, 1, 10}
    // pool on the validation task.
    double lambda_d = 0.0;
    double lambda_mmd = 0.0;
    std::vector<double> kernel_widths = {1.0, 2.0, 4.0, 8.0, 16.0};

    // Execution.
    int workers = 0;  // 0 = all physical cores
    bool save_checkpoints = true;

    // Synthetic generator.
    uint64_t synth_seed = 777;
    double synth_noise_std = 0.1;
    int synth_shift_level = 2;  // used by pair-mode commands

    void validate() const;
};

HarnessConfig load_config(const std::string& path);
void apply_config_line(HarnessConfig& cfg, const std::string& key, const std::string& value);

}  // namespace dafd
