#include "dafd/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "dafd/errors.hpp"

namespace dafd {

namespace fs = std::filesystem;

std::string TransferTask::name() const {
    return std::to_string(source_load) + "-" + std::to_string(target_load);
}

std::vector<TransferTask> all_transfer_tasks() {
    std::vector<TransferTask> tasks;
    for (int s = 0; s < 4; ++s)
        for (int t = 0; t < 4; ++t)
            if (s != t) tasks.push_back(TransferTask{s, t});
    return tasks;
}

TransferTask validation_task() { return TransferTask{0, 3}; }

TransferTask parse_task(const std::string& text) {
    int s = -1, t = -1;
    char sep = 0;
    if (std::sscanf(text.c_str(), "%d%c%d", &s, &sep, &t) != 3 || (sep != '-' && sep != '>'))
        throw UsageError("task '" + text + "' is not of the form i-j");
    if (s < 0 || s > 3 || t < 0 || t > 3) throw UsageError("task loads must be in 0..3");
    if (s == t) throw UsageError("task source and target loads must differ");
    return TransferTask{s, t};
}

// ---------------------------------------------------------------------------
// DatasetStore
// ---------------------------------------------------------------------------

DatasetStore DatasetStore::from_files(std::string dir, size_t windows_per_class) {
    DatasetStore store;
    store.loader_ = [dir = std::move(dir), windows_per_class](int load) {
        std::vector<RawSignal> signals;
        for (int c = 0; c < (int)kNumClasses; ++c) {
            const std::string stem =
                dir + "/load" + std::to_string(load) + "_class" + std::to_string(c);
            std::string path;
            if (fs::exists(stem + ".f32")) {
                path = stem + ".f32";
            } else if (fs::exists(stem + ".csv")) {
                path = stem + ".csv";
            } else {
                throw DataError("no signal file '" + stem + ".f32' or '.csv'");
            }
            signals.push_back(load_signal_file(path, std::pair(load, c)));
        }
        return build_dataset(signals, 1.0, DomainTag::kSource, windows_per_class);
    };
    return store;
}

DatasetStore DatasetStore::from_synthetic(std::array<SyntheticSpec, 4> specs,
                                          size_t windows_per_class) {
    DatasetStore store;
    store.loader_ = [specs, windows_per_class](int load) {
        return synthesize_dataset(specs[load], 1.0, DomainTag::kSource, windows_per_class);
    };
    return store;
}

void DatasetStore::preload(std::initializer_list<int> loads) {
    for (int l : loads) {
        if (l < 0 || l > 3) throw UsageError("load id outside 0..3");
        if (!base_[l].has_value()) base_[l] = loader_(l);
    }
}

void DatasetStore::preload_all() { preload({0, 1, 2, 3}); }

WindowedDataset DatasetStore::get(int load, double factor, DomainTag tag) const {
    if (load < 0 || load > 3) throw UsageError("load id outside 0..3");
    if (!is_allowed_normalization_factor(factor))
        throw ConfigError("normalization factor " + std::to_string(factor) +
                          " not in {1, 8, 64, 512}");
    if (!base_[load].has_value()) base_[load] = loader_(load);
    WindowedDataset ds = *base_[load];
    normalize(ds.features, factor);
    ds.normalization_factor = factor;
    ds.domain_tag = tag;
    ds.load_id = load;
    return ds;
}

// ---------------------------------------------------------------------------
// Execution helpers
// ---------------------------------------------------------------------------

namespace {

int effective_workers(int requested) {
    if (requested > 0) return requested;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : (int)hw;
}

void parallel_for(size_t n, int workers, const std::function<void(size_t)>& fn) {
    workers = std::min<int>(workers, (int)n);
    if (workers <= 1) {
        for (size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto worker = [&]() {
        while (true) {
            const size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
            }
        }
    };
    std::vector<std::thread> threads;
    threads.reserve((size_t)workers);
    for (int w = 0; w < workers; ++w) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

AdaptationConfig cell_config(ModelVariant method, const HarnessConfig& cfg, double lambda_d,
                             double lambda_mmd, uint64_t seed) {
    AdaptationConfig acfg;
    acfg.method = method;
    acfg.lambda_d = lambda_d;
    acfg.lambda_mmd = lambda_mmd;
    acfg.kernel_widths = cfg.kernel_widths;
    acfg.epochs = cfg.epochs;
    acfg.batch_size = cfg.batch_size;
    acfg.learning_rate = cfg.learning_rate;
    acfg.seed = seed;
    return acfg;
}

uint64_t cell_seed(const HarnessConfig& cfg, const TransferTask& task, ModelVariant method,
                   int seed_index) {
    return derive_seed(cfg.master_seed, "run",
                       (uint64_t)(task.source_load * 4 + task.target_load), (uint64_t)method,
                       (uint64_t)seed_index);
}

struct SeedOutcome {
    double accuracy = 0.0;
    double seconds = 0.0;
    bool failed = false;
    std::string error;
};

SeedOutcome run_single_seed(const WindowedDataset& source, const WindowedDataset& target,
                            const TransferTask& task, ModelVariant method,
                            const HarnessConfig& cfg, double lambda_d, double lambda_mmd,
                            int seed_index, const std::string& out_dir) {
    SeedOutcome out;
    const AdaptationConfig acfg =
        cell_config(method, cfg, lambda_d, lambda_mmd, cell_seed(cfg, task, method, seed_index));
    try {
        TrainResult r = train_method(source, method == ModelVariant::kBaseline ? nullptr
                                                                               : &target,
                                     acfg);
        out.accuracy = evaluate_accuracy(r.model, target);
        out.seconds = r.train_seconds;
        if (!out_dir.empty()) {
            const std::string stem = "task" + task.name() + "_" + to_string(method) + "_seed" +
                                     std::to_string(seed_index);
            fs::create_directories(out_dir + "/traces");
            save_trace_csv(r.trace, out_dir + "/traces/" + stem + "_trace.csv");
            if (cfg.save_checkpoints) {
                fs::create_directories(out_dir + "/checkpoints");
                save_model(r.model, out_dir + "/checkpoints/" + stem + ".dafd");
            }
        }
    } catch (const TrainingError& e) {
        out.failed = true;
        out.error = e.what();
    }
    return out;
}

TaskReport aggregate(const TransferTask& task, ModelVariant method,
                     const std::vector<SeedOutcome>& outcomes) {
    TaskReport rep;
    rep.task = task;
    rep.method = method;
    rep.param_count = count_parameters(method);
    double acc_sum = 0.0, sec_sum = 0.0;
    for (size_t i = 0; i < outcomes.size(); ++i) {
        if (outcomes[i].failed) {
            rep.failed_seeds.push_back((int)i);
            continue;
        }
        rep.seed_accuracies.push_back(outcomes[i].accuracy);
        acc_sum += outcomes[i].accuracy;
        sec_sum += outcomes[i].seconds;
    }
    if (!rep.seed_accuracies.empty()) {
        rep.mean_accuracy = acc_sum / (double)rep.seed_accuracies.size();
        rep.max_accuracy =
            *std::max_element(rep.seed_accuracies.begin(), rep.seed_accuracies.end());
        rep.train_seconds_mean = sec_sum / (double)rep.seed_accuracies.size();
    } else {
        rep.mean_accuracy = rep.max_accuracy = std::nan("");
    }
    return rep;
}

}  // namespace

// ---------------------------------------------------------------------------
// Hyper-parameter selection
// ---------------------------------------------------------------------------

NormalizationChoice select_normalization(const DatasetStore& store, const HarnessConfig& cfg,
                                         std::vector<double> candidates) {
    if (candidates.empty()) throw ConfigError("select_normalization: no candidates");
    for (double f : candidates)
        if (!is_allowed_normalization_factor(f))
            throw ConfigError("normalization candidate " + std::to_string(f) +
                              " not in {1, 8, 64, 512}");
    NormalizationChoice choice;
    if (candidates.size() == 1) {
        choice.factor = candidates[0];
        return choice;
    }
    const TransferTask vtask = validation_task();
    const uint64_t seed = derive_seed(cfg.master_seed, "tune/normalization");
    double best_acc = -1.0, best_factor = 0.0;
    for (double f : candidates) {
        const WindowedDataset source = store.get(vtask.source_load, f, DomainTag::kSource);
        const WindowedDataset target = store.get(vtask.target_load, f, DomainTag::kTarget);
        const AdaptationConfig acfg =
            cell_config(ModelVariant::kBaseline, cfg, 0.0, 0.0, seed);
        TrainResult r = train_baseline(source, acfg);
        const double acc = evaluate_accuracy(r.model, target);
        choice.candidate_accuracy.push_back(acc);
        if (acc > best_acc || (acc == best_acc && f < best_factor)) {
            best_acc = acc;
            best_factor = f;
        }
    }
    choice.factor = best_factor;
    return choice;
}

LambdaChoice select_lambda(ModelVariant method, const DatasetStore& store,
                           const HarnessConfig& cfg, double factor, std::vector<double> pool) {
    if (method != ModelVariant::kDann && method != ModelVariant::kMmd)
        throw UsageError("select_lambda applies to dann or mmd only");
    if (pool.empty()) throw ConfigError("select_lambda: empty pool");
    LambdaChoice choice;
    if (pool.size() == 1) {
        choice.lambda = pool[0];
        return choice;
    }
    const TransferTask vtask = validation_task();
    const WindowedDataset source = store.get(vtask.source_load, factor, DomainTag::kSource);
    const WindowedDataset target = store.get(vtask.target_load, factor, DomainTag::kTarget);
    const uint64_t seed =
        derive_seed(cfg.master_seed, "tune/lambda", (uint64_t)method);
    double best_acc = -1.0, best_lambda = 0.0;
    for (double lam : pool) {
        const AdaptationConfig acfg = cell_config(
            method, cfg, method == ModelVariant::kDann ? lam : 0.0,
            method == ModelVariant::kMmd ? lam : 0.0, seed);
        TrainResult r = train_method(source, &target, acfg);
        const double acc = evaluate_accuracy(r.model, target);
        choice.pool_accuracy.push_back(acc);
        ++choice.runs_consumed;
        if (acc > best_acc || (acc == best_acc && lam < best_lambda)) {
            best_acc = acc;
            best_lambda = lam;
        }
    }
    choice.lambda = best_lambda;
    return choice;
}

// ---------------------------------------------------------------------------
// Task and matrix runners
// ---------------------------------------------------------------------------

TaskReport run_task(const WindowedDataset& source, const WindowedDataset& target,
                    TransferTask task, ModelVariant method, const HarnessConfig& cfg,
                    double factor, double lambda_d, double lambda_mmd,
                    const std::string& out_dir, int workers) {
    (void)factor;
    std::vector<SeedOutcome> outcomes((size_t)cfg.seeds);
    parallel_for((size_t)cfg.seeds, effective_workers(workers), [&](size_t i) {
        outcomes[i] = run_single_seed(source, target, task, method, cfg, lambda_d, lambda_mmd,
                                      (int)i, out_dir);
    });
    return aggregate(task, method, outcomes);
}

MatrixReport run_matrix(const DatasetStore& store, const HarnessConfig& cfg) {
    MatrixReport report;
    const_cast<DatasetStore&>(store).preload_all();

    if (cfg.norm_factor != 0.0) {
        report.norm_factor = cfg.norm_factor;
    } else {
        report.norm_factor = select_normalization(store, cfg).factor;
    }
    if (cfg.lambda_d != 0.0) {
        report.lambda_d = cfg.lambda_d;
    } else {
        LambdaChoice c = select_lambda(ModelVariant::kDann, store, cfg, report.norm_factor);
        report.lambda_d = c.lambda;
        report.tuning_runs_dann = c.runs_consumed;
    }
    if (cfg.lambda_mmd != 0.0) {
        report.lambda_mmd = cfg.lambda_mmd;
    } else {
        LambdaChoice c = select_lambda(ModelVariant::kMmd, store, cfg, report.norm_factor);
        report.lambda_mmd = c.lambda;
        report.tuning_runs_mmd = c.runs_consumed;
    }
    report.tuning_runs_adabn = 0;  // no method hyper-parameter to tune

    const auto tasks = all_transfer_tasks();
    struct Cell {
        size_t task_idx;
        size_t method_idx;
        int seed_idx;
    };
    std::vector<Cell> cells;
    for (size_t t = 0; t < tasks.size(); ++t)
        for (size_t m = 0; m < kReportMethods.size(); ++m)
            for (int s = 0; s < cfg.seeds; ++s) cells.push_back(Cell{t, m, s});

    std::vector<std::vector<std::vector<SeedOutcome>>> outcomes(
        tasks.size(), std::vector<std::vector<SeedOutcome>>(
                          kReportMethods.size(), std::vector<SeedOutcome>((size_t)cfg.seeds)));

    // Datasets fetched once per task up front; cells then share them.
    std::vector<std::pair<WindowedDataset, WindowedDataset>> task_data;
    task_data.reserve(tasks.size());
    for (const auto& task : tasks)
        task_data.emplace_back(store.get(task.source_load, report.norm_factor, DomainTag::kSource),
                               store.get(task.target_load, report.norm_factor, DomainTag::kTarget));

    parallel_for(cells.size(), effective_workers(cfg.workers), [&](size_t i) {
        const Cell& c = cells[i];
        outcomes[c.task_idx][c.method_idx][(size_t)c.seed_idx] = run_single_seed(
            task_data[c.task_idx].first, task_data[c.task_idx].second, tasks[c.task_idx],
            kReportMethods[c.method_idx], cfg, report.lambda_d, report.lambda_mmd, c.seed_idx,
            cfg.out_dir);
    });

    for (size_t t = 0; t < tasks.size(); ++t)
        for (size_t m = 0; m < kReportMethods.size(); ++m) {
            TaskReport rep = aggregate(tasks[t], kReportMethods[m], outcomes[t][m]);
            if (!rep.failed_seeds.empty()) report.partial_failure = true;
            report.cells.push_back(std::move(rep));
        }
    return report;
}

MatrixReport run_pair(const WindowedDataset& source, const WindowedDataset& target,
                      TransferTask task, const HarnessConfig& cfg, double factor,
                      double lambda_d, double lambda_mmd) {
    MatrixReport report;
    report.norm_factor = factor;
    report.lambda_d = lambda_d;
    report.lambda_mmd = lambda_mmd;

    struct Cell {
        size_t method_idx;
        int seed_idx;
    };
    std::vector<Cell> cells;
    for (size_t m = 0; m < kReportMethods.size(); ++m)
        for (int s = 0; s < cfg.seeds; ++s) cells.push_back(Cell{m, s});

    std::vector<std::vector<SeedOutcome>> outcomes(
        kReportMethods.size(), std::vector<SeedOutcome>((size_t)cfg.seeds));
    parallel_for(cells.size(), effective_workers(cfg.workers), [&](size_t i) {
        const Cell& c = cells[i];
        outcomes[c.method_idx][(size_t)c.seed_idx] =
            run_single_seed(source, target, task, kReportMethods[c.method_idx], cfg, lambda_d,
                            lambda_mmd, c.seed_idx, cfg.out_dir);
    });
    for (size_t m = 0; m < kReportMethods.size(); ++m) {
        TaskReport rep = aggregate(task, kReportMethods[m], outcomes[m]);
        if (!rep.failed_seeds.empty()) report.partial_failure = true;
        report.cells.push_back(std::move(rep));
    }
    return report;
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

std::string format_accuracy(double v) {
    if (!std::isfinite(v)) return "nan";
    const double r = std::floor(v * 100.0 + 0.5) / 100.0;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", r);
    return buf;
}

namespace {

struct ReportRows {
    size_t num_tasks = 0;
    std::vector<std::string> task_names;
    // [task][method] -> (mean, max)
    std::vector<std::array<std::pair<double, double>, 4>> acc;
    std::array<double, 4> avg_mean{}, avg_max{}, time_mean{};
    std::array<int64_t, 4> params{};
};

ReportRows collect(const MatrixReport& report) {
    ReportRows rows;
    rows.num_tasks = report.cells.size() / kReportMethods.size();
    rows.acc.resize(rows.num_tasks);
    std::array<double, 4> time_sum{};
    for (size_t t = 0; t < rows.num_tasks; ++t) {
        for (size_t m = 0; m < kReportMethods.size(); ++m) {
            const TaskReport& cell = report.cells[t * kReportMethods.size() + m];
            if (m == 0) rows.task_names.push_back(cell.task.name());
            rows.acc[t][m] = {cell.mean_accuracy, cell.max_accuracy};
            rows.avg_mean[m] += cell.mean_accuracy;
            rows.avg_max[m] += cell.max_accuracy;
            time_sum[m] += cell.train_seconds_mean;
            rows.params[m] = cell.param_count;
        }
    }
    for (size_t m = 0; m < 4; ++m) {
        rows.avg_mean[m] /= (double)rows.num_tasks;
        rows.avg_max[m] /= (double)rows.num_tasks;
        rows.time_mean[m] = time_sum[m] / (double)rows.num_tasks;
    }
    return rows;
}

}  // namespace

void write_report_csv(const MatrixReport& report, const std::string& path) {
    const ReportRows rows = collect(report);
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw DataError("cannot open report '" + path + "'");
    f << "task,baseline_mean,baseline_max,dann_mean,dann_max,mmd_mean,mmd_max,"
         "adabn_mean,adabn_max\n";
    for (size_t t = 0; t < rows.num_tasks; ++t) {
        f << rows.task_names[t];
        for (size_t m = 0; m < 4; ++m)
            f << ',' << format_accuracy(rows.acc[t][m].first) << ','
              << format_accuracy(rows.acc[t][m].second);
        f << '\n';
    }
    f << "average";
    for (size_t m = 0; m < 4; ++m)
        f << ',' << format_accuracy(rows.avg_mean[m]) << ',' << format_accuracy(rows.avg_max[m]);
    f << '\n';
    char buf[32];
    f << "train_time_s";
    for (size_t m = 0; m < 4; ++m) {
        std::snprintf(buf, sizeof(buf), "%.1f", rows.time_mean[m]);
        f << ',' << buf << ',' << buf;
    }
    f << '\n';
    f << "parameters";
    for (size_t m = 0; m < 4; ++m)
        f << ',' << rows.params[m] << ',' << rows.params[m];
    f << '\n';
}

void write_report_md(const MatrixReport& report, const std::string& path) {
    const ReportRows rows = collect(report);
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw DataError("cannot open report '" + path + "'");

    std::vector<std::vector<std::string>> table;
    table.push_back({"Task", "Baseline Mean", "Baseline Max", "DANN Mean", "DANN Max",
                     "MMD Mean", "MMD Max", "AdaBN Mean", "AdaBN Max"});
    for (size_t t = 0; t < rows.num_tasks; ++t) {
        std::vector<std::string> row{rows.task_names[t]};
        for (size_t m = 0; m < 4; ++m) {
            row.push_back(format_accuracy(rows.acc[t][m].first));
            row.push_back(format_accuracy(rows.acc[t][m].second));
        }
        table.push_back(std::move(row));
    }
    {
        std::vector<std::string> row{"Average"};
        for (size_t m = 0; m < 4; ++m) {
            row.push_back(format_accuracy(rows.avg_mean[m]));
            row.push_back(format_accuracy(rows.avg_max[m]));
        }
        table.push_back(std::move(row));
    }
    {
        char buf[32];
        std::vector<std::string> row{"Train time (s)"};
        for (size_t m = 0; m < 4; ++m) {
            std::snprintf(buf, sizeof(buf), "%.1f", rows.time_mean[m]);
            row.push_back(buf);
            row.push_back(buf);
        }
        table.push_back(std::move(row));
    }
    {
        std::vector<std::string> row{"Parameters"};
        for (size_t m = 0; m < 4; ++m) {
            row.push_back(std::to_string(rows.params[m]));
            row.push_back(std::to_string(rows.params[m]));
        }
        table.push_back(std::move(row));
    }

    std::vector<size_t> widths(table[0].size(), 0);
    for (const auto& row : table)
        for (size_t c = 0; c < row.size(); ++c) widths[c] = std::max(widths[c], row[c].size());
    auto emit = [&](const std::vector<std::string>& row) {
        f << '|';
        for (size_t c = 0; c < row.size(); ++c) {
            f << ' ' << row[c] << std::string(widths[c] - row[c].size(), ' ') << " |";
        }
        f << '\n';
    };
    emit(table[0]);
    f << '|';
    for (size_t c = 0; c < widths.size(); ++c) f << std::string(widths[c] + 2, '-') << '|';
    f << '\n';
    for (size_t r = 1; r < table.size(); ++r) emit(table[r]);
}

void write_report_meta(const MatrixReport& report, const HarnessConfig& cfg,
                       const std::string& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw DataError("cannot open report meta '" + path + "'");
    f << "master_seed = " << cfg.master_seed << '\n';
    f << "seeds = " << cfg.seeds << '\n';
    f << "epochs = " << cfg.epochs << '\n';
    f << "batch_size = " << cfg.batch_size << '\n';
    f << "norm_factor = " << report.norm_factor << '\n';
    f << "lambda_d = " << report.lambda_d << '\n';
    f << "lambda_mmd = " << report.lambda_mmd << '\n';
    f << "tuning_runs_dann = " << report.tuning_runs_dann << '\n';
    f << "tuning_runs_mmd = " << report.tuning_runs_mmd << '\n';
    f << "tuning_runs_adabn = " << report.tuning_runs_adabn << '\n';
    f << "partial_failure = " << (report.partial_failure ? "true" : "false") << '\n';
}

std::string report_csv_without_timing(const std::string& csv_path) {
    std::ifstream f(csv_path);
    if (!f) throw DataError("cannot open report '" + csv_path + "'");
    std::string out, line;
    while (std::getline(f, line)) {
        if (line.rfind("train_time", 0) == 0) continue;
        out += line;
        out += '\n';
    }
    return out;
}

}  // namespace dafd
