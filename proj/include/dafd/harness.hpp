#pragma once

#include <array>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dafd/adaptation.hpp"
#include "dafd/config.hpp"
#include "dafd/datasets.hpp"
#include "dafd/model.hpp"
#include "dafd/signal_prep.hpp"

namespace dafd {

struct TransferTask {
    int source_load = 0;
    int target_load = 0;
    std::string name() const;  // "0-1"
};

// The 12 ordered load pairs, source-major.
std::vector<TransferTask> all_transfer_tasks();
// Task 0->3, the designated hyper-parameter validation task.
TransferTask validation_task();
TransferTask parse_task(const std::string& text);  // "i-j"

// Provides the per-load datasets at any normalization factor. The
// factor-1 dataset per load is built once; other factors are scalar
// rescalings of it. preload() must run before concurrent get() calls.
class DatasetStore {
public:
    static DatasetStore from_files(std::string dir, size_t windows_per_class);
    static DatasetStore from_synthetic(std::array<SyntheticSpec, 4> specs,
                                       size_t windows_per_class);

    void preload(std::initializer_list<int> loads);
    void preload_all();
    WindowedDataset get(int load, double factor, DomainTag tag) const;

private:
    std::function<WindowedDataset(int load)> loader_;
    mutable std::array<std::optional<WindowedDataset>, 4> base_;  // factor 1
};

struct TaskReport {
    TransferTask task;
    ModelVariant method = ModelVariant::kBaseline;
    std::vector<double> seed_accuracies;  // diverged seeds excluded
    std::vector<int> failed_seeds;
    double mean_accuracy = 0.0;
    double max_accuracy = 0.0;
    double train_seconds_mean = 0.0;
    int64_t param_count = 0;
};

struct NormalizationChoice {
    double factor = 1.0;
    std::vector<double> candidate_accuracy;  // aligned with candidates
};

struct LambdaChoice {
    double lambda = 0.1;
    std::vector<double> pool_accuracy;
    int runs_consumed = 0;
};

struct MatrixReport {
    double norm_factor = 1.0;
    double lambda_d = 1.0;
    double lambda_mmd = 1.0;
    int tuning_runs_dann = 0;
    int tuning_runs_mmd = 0;
    int tuning_runs_adabn = 0;
    std::vector<TaskReport> cells;  // task-major; methods in report order
    bool partial_failure = false;
};

// Methods in Table column order.
inline constexpr std::array<ModelVariant, 4> kReportMethods = {
    ModelVariant::kBaseline, ModelVariant::kDann, ModelVariant::kMmd, ModelVariant::kAdaBn};

// Trains a baseline per candidate factor on the validation task's source
// load and picks the factor with the best target accuracy (ties go to the
// smaller factor). Single candidate short-circuits without training.
NormalizationChoice select_normalization(const DatasetStore& store, const HarnessConfig& cfg,
                                         std::vector<double> candidates = {1.0, 8.0, 64.0,
                                                                           512.0});

// Runs `method` on the validation task once per pool value with a fixed
// seed; returns the best value (ties go to the smaller lambda).
LambdaChoice select_lambda(ModelVariant method, const DatasetStore& store,
                           const HarnessConfig& cfg, double factor,
                           std::vector<double> pool = {0.1, 1.0, 10.0});

// Per-seed train + evaluate on the full target set. A diverged seed is
// recorded in failed_seeds and excluded from the aggregates. When out_dir
// is non-empty, writes one checkpoint and one trace CSV per seed.
TaskReport run_task(const WindowedDataset& source, const WindowedDataset& target,
                    TransferTask task, ModelVariant method, const HarnessConfig& cfg,
                    double factor, double lambda_d, double lambda_mmd,
                    const std::string& out_dir = "", int workers = 1);

// The full 12-task x 4-method protocol.
MatrixReport run_matrix(const DatasetStore& store, const HarnessConfig& cfg);

// Single-pair protocol (used by the synthetic-pair experiments): all four
// methods on one source/target dataset pair.
MatrixReport run_pair(const WindowedDataset& source, const WindowedDataset& target,
                      TransferTask task, const HarnessConfig& cfg, double factor,
                      double lambda_d, double lambda_mmd);

// Table-layout reports: one row per task, then Average / Train time /
// Parameter rows, mean and max columns per method. Accuracies printed to
// two decimals, half-up.
void write_report_csv(const MatrixReport& report, const std::string& path);
void write_report_md(const MatrixReport& report, const std::string& path);
void write_report_meta(const MatrixReport& report, const HarnessConfig& cfg,
                       const std::string& path);
std::string report_csv_without_timing(const std::string& csv_path);

std::string format_accuracy(double v);  // two decimals, half-up

}  // namespace dafd
