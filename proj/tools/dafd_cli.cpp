// dafd: preprocessing, synthetic data generation, hyper-parameter tuning
// and the 12-task transfer-experiment protocol behind one CLI.
//
// Exit codes: 0 success, 1 usage/config/data error, 2 partial task failure.

#include <CLI11.hpp>
#include <array>
#include <cstdio>
#include <filesystem>
#include <iostream>

#include "dafd/adaptation.hpp"
#include "dafd/config.hpp"
#include "dafd/datasets.hpp"
#include "dafd/errors.hpp"
#include "dafd/harness.hpp"
#include "dafd/model.hpp"

namespace fs = std::filesystem;
using namespace dafd;

namespace {

struct CommonOpts {
    std::string config_path;
    std::vector<std::string> overrides;  // key=value
};

HarnessConfig resolve_config(const CommonOpts& opts) {
    HarnessConfig cfg;
    if (!opts.config_path.empty()) cfg = load_config(opts.config_path);
    for (const auto& kv : opts.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos)
            throw UsageError("--set expects key=value, got '" + kv + "'");
        apply_config_line(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    cfg.validate();
    return cfg;
}

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--config", opts.config_path, "flat key = value config file");
    cmd->add_option("--set", opts.overrides, "override a config key (key=value), repeatable");
}

std::array<SyntheticSpec, 4> synth_specs(const HarnessConfig& cfg) {
    std::array<SyntheticSpec, 4> specs;
    for (int l = 0; l < 4; ++l) {
        specs[l].load_id = l;
        specs[l].noise_std = cfg.synth_noise_std;
        specs[l].seed = derive_seed(cfg.synth_seed, "load", (uint64_t)l);
    }
    return specs;
}

DatasetStore make_store(const HarnessConfig& cfg) {
    if (cfg.data_mode == "files")
        return DatasetStore::from_files(cfg.data_dir, cfg.windows_per_class);
    return DatasetStore::from_synthetic(synth_specs(cfg), cfg.windows_per_class);
}

double resolved_factor(const HarnessConfig& cfg, const DatasetStore& store) {
    if (cfg.norm_factor != 0.0) return cfg.norm_factor;
    const NormalizationChoice choice = select_normalization(store, cfg);
    std::printf("selected normalization factor %g\n", choice.factor);
    return choice.factor;
}

void print_task_report(const TaskReport& rep) {
    std::printf("task %s  %-8s  mean %s  max %s  (%lld params, %.1f s/run",
                rep.task.name().c_str(), to_string(rep.method).c_str(),
                format_accuracy(rep.mean_accuracy).c_str(),
                format_accuracy(rep.max_accuracy).c_str(), (long long)rep.param_count,
                rep.train_seconds_mean);
    if (!rep.failed_seeds.empty())
        std::printf(", %zu seed(s) diverged", rep.failed_seeds.size());
    std::printf(")\n");
}

int cmd_prep(const CommonOpts& opts) {
    HarnessConfig cfg = resolve_config(opts);
    if (cfg.data_mode != "files" || cfg.data_dir.empty())
        throw UsageError("prep needs data_mode=files and a data_dir");
    DatasetStore store = DatasetStore::from_files(cfg.data_dir, cfg.windows_per_class);
    fs::create_directories(cfg.out_dir);
    const double factor = cfg.norm_factor == 0.0 ? 1.0 : cfg.norm_factor;
    for (int load = 0; load < 4; ++load) {
        const WindowedDataset ds = store.get(load, factor, DomainTag::kSource);
        const std::string path =
            cfg.out_dir + "/load" + std::to_string(load) + "_dataset.csv";
        save_dataset_csv(ds, path);
        std::printf("wrote %s (%zu rows x %zu features, factor %g)\n", path.c_str(),
                    ds.num_rows, ds.num_features, factor);
    }
    return 0;
}

int cmd_synth(const CommonOpts& opts, bool pair_mode) {
    HarnessConfig cfg = resolve_config(opts);
    fs::create_directories(cfg.out_dir);
    if (pair_mode) {
        // One calibrated shifted pair as dataset dumps.
        SyntheticSpec src;
        src.load_id = 0;
        src.noise_std = cfg.synth_noise_std;
        src.seed = derive_seed(cfg.synth_seed, "pair/source");
        const SyntheticSpec tgt =
            shifted_spec(src, cfg.synth_shift_level, derive_seed(cfg.synth_seed, "pair/target"));
        const double factor = cfg.norm_factor == 0.0 ? 1.0 : cfg.norm_factor;
        auto [s, t] = synthesize_domain_pair(src, tgt, factor, cfg.windows_per_class);
        save_dataset_csv(s, cfg.out_dir + "/pair_source.csv");
        save_dataset_csv(t, cfg.out_dir + "/pair_target.csv");
        std::printf("wrote %s/pair_source.csv and pair_target.csv (shift level %d)\n",
                    cfg.out_dir.c_str(), cfg.synth_shift_level);
        return 0;
    }
    const auto specs = synth_specs(cfg);
    for (int load = 0; load < 4; ++load) {
        for (int cls = 0; cls < 10; ++cls) {
            const RawSignal sig = synthesize_signal(specs[load], cls);
            const std::string path = cfg.out_dir + "/load" + std::to_string(load) + "_class" +
                                     std::to_string(cls) + ".f32";
            save_signal_f32(sig, path);
        }
    }
    std::printf("wrote 40 synthetic signal files to %s\n", cfg.out_dir.c_str());
    return 0;
}

int cmd_tune(const CommonOpts& opts) {
    HarnessConfig cfg = resolve_config(opts);
    DatasetStore store = make_store(cfg);
    store.preload({0, 3});

    const NormalizationChoice norm = select_normalization(store, cfg);
    std::printf("normalization factor: %g\n", norm.factor);
    for (size_t i = 0; i < norm.candidate_accuracy.size(); ++i)
        std::printf("  candidate %g -> %s%%\n", std::vector<double>{1, 8, 64, 512}[i],
                    format_accuracy(norm.candidate_accuracy[i]).c_str());

    for (ModelVariant m : {ModelVariant::kDann, ModelVariant::kMmd}) {
        const LambdaChoice lam = select_lambda(m, store, cfg, norm.factor);
        std::printf("%s lambda: %g (%d tuning runs)\n", to_string(m).c_str(), lam.lambda,
                    lam.runs_consumed);
        const std::vector<double> pool = {0.1, 1.0, 10.0};
        for (size_t i = 0; i < lam.pool_accuracy.size(); ++i)
            std::printf("  lambda %g -> %s%%\n", pool[i],
                        format_accuracy(lam.pool_accuracy[i]).c_str());
    }
    return 0;
}

int cmd_run(const CommonOpts& opts, const std::string& task_text, const std::string& method_text,
            int seeds_override) {
    HarnessConfig cfg = resolve_config(opts);
    if (seeds_override > 0) cfg.seeds = seeds_override;
    const TransferTask task = parse_task(task_text);
    const ModelVariant method = variant_from_string(method_text);

    DatasetStore store = make_store(cfg);
    store.preload({task.source_load, task.target_load});
    const double factor = resolved_factor(cfg, store);
    const double lambda_d = cfg.lambda_d == 0.0 ? 1.0 : cfg.lambda_d;
    const double lambda_mmd = cfg.lambda_mmd == 0.0 ? 1.0 : cfg.lambda_mmd;

    const WindowedDataset source = store.get(task.source_load, factor, DomainTag::kSource);
    const WindowedDataset target = store.get(task.target_load, factor, DomainTag::kTarget);
    if (!cfg.out_dir.empty()) fs::create_directories(cfg.out_dir);
    const TaskReport rep = run_task(source, target, task, method, cfg, factor, lambda_d,
                                    lambda_mmd, cfg.out_dir, cfg.workers);
    print_task_report(rep);
    return rep.failed_seeds.empty() ? 0 : 2;
}

int cmd_matrix(const CommonOpts& opts) {
    HarnessConfig cfg = resolve_config(opts);
    DatasetStore store = make_store(cfg);
    const MatrixReport report = run_matrix(store, cfg);
    fs::create_directories(cfg.out_dir);
    write_report_csv(report, cfg.out_dir + "/report.csv");
    write_report_md(report, cfg.out_dir + "/report.md");
    write_report_meta(report, cfg, cfg.out_dir + "/report_meta.txt");
    for (const auto& cell : report.cells) print_task_report(cell);
    std::printf("report written to %s/report.{csv,md}\n", cfg.out_dir.c_str());
    return report.partial_failure ? 2 : 0;
}

// Re-render an existing report.csv in the requested format.
int cmd_report(const std::string& from, const std::string& format, const std::string& out) {
    std::ifstream f(from);
    if (!f) throw DataError("cannot open report '" + from + "'");
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(f, line)) {
        std::vector<std::string> row;
        size_t pos = 0;
        while (true) {
            const size_t comma = line.find(',', pos);
            row.push_back(line.substr(pos, comma - pos));
            if (comma == std::string::npos) break;
            pos = comma + 1;
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw DataError("report '" + from + "' is empty");

    std::ostream* os = &std::cout;
    std::ofstream file;
    if (!out.empty()) {
        file.open(out, std::ios::trunc);
        if (!file) throw DataError("cannot open '" + out + "'");
        os = &file;
    }
    if (format == "csv") {
        for (const auto& row : rows) {
            for (size_t c = 0; c < row.size(); ++c) *os << (c ? "," : "") << row[c];
            *os << '\n';
        }
        return 0;
    }
    std::vector<size_t> widths;
    for (const auto& row : rows) {
        if (widths.size() < row.size()) widths.resize(row.size(), 0);
        for (size_t c = 0; c < row.size(); ++c) widths[c] = std::max(widths[c], row[c].size());
    }
    auto emit = [&](const std::vector<std::string>& row) {
        *os << '|';
        for (size_t c = 0; c < widths.size(); ++c) {
            const std::string& v = c < row.size() ? row[c] : "";
            *os << ' ' << v << std::string(widths[c] - v.size(), ' ') << " |";
        }
        *os << '\n';
    };
    emit(rows[0]);
    *os << '|';
    for (size_t w : widths) *os << std::string(w + 2, '-') << '|';
    *os << '\n';
    for (size_t r = 1; r < rows.size(); ++r) emit(rows[r]);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"domain-adaptive fault diagnosis experiments"};
    app.require_subcommand(1);

    CommonOpts prep_opts, synth_opts, tune_opts, run_opts, matrix_opts;

    CLI::App* prep = app.add_subcommand("prep", "preprocess raw signal files into dataset dumps");
    add_common(prep, prep_opts);

    CLI::App* synth = app.add_subcommand("synth", "generate synthetic bearing-like data");
    bool pair_mode = false;
    synth->add_flag("--pair", pair_mode, "emit one shifted source/target dataset pair instead");
    add_common(synth, synth_opts);

    CLI::App* tune = app.add_subcommand("tune", "select normalization factor and lambdas");
    add_common(tune, tune_opts);

    CLI::App* run = app.add_subcommand("run", "run one transfer task with one method");
    std::string task_text, method_text = "baseline";
    int seeds_override = 0;
    run->add_option("--task", task_text, "transfer task i-j (e.g. 0-3)")->required();
    run->add_option("--method", method_text, "baseline|dann|mmd|adabn");
    run->add_option("--seeds", seeds_override, "number of seeds");
    add_common(run, run_opts);

    CLI::App* matrix = app.add_subcommand("matrix", "run the full 12-task x 4-method protocol");
    add_common(matrix, matrix_opts);

    CLI::App* report = app.add_subcommand("report", "re-render a report.csv");
    std::string report_from = "out/report.csv", report_format = "md", report_out;
    report->add_option("--from", report_from, "report.csv produced by matrix");
    report->add_option("--format", report_format, "csv|md")
        ->check(CLI::IsMember({"csv", "md"}));
    report->add_option("--out", report_out, "output path (default stdout)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (prep->parsed()) return cmd_prep(prep_opts);
        if (synth->parsed()) return cmd_synth(synth_opts, pair_mode);
        if (tune->parsed()) return cmd_tune(tune_opts);
        if (run->parsed()) return cmd_run(run_opts, task_text, method_text, seeds_override);
        if (matrix->parsed()) return cmd_matrix(matrix_opts);
        if (report->parsed()) return cmd_report(report_from, report_format, report_out);
    } catch (const TrainingError& e) {
        std::cerr << "training error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
