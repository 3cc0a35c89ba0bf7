#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dafd/model.hpp"
#include "dafd/signal_prep.hpp"
#include "dafd/tensor.hpp"

namespace dafd {

struct AdaptationConfig {
    ModelVariant method = ModelVariant::kBaseline;
    double lambda_d = 1.0;    // DANN reversal strength, pool {0.1, 1, 10}
    double lambda_mmd = 1.0;  // MMD loss weight, pool {0.1, 1, 10}
    std::vector<double> kernel_widths = {1.0, 2.0, 4.0, 8.0, 16.0};
    int epochs = 2000;
    int batch_size = 64;
    double learning_rate = 0.0002;
    uint64_t seed = 0;

    void validate() const;
};

struct TrainStepRecord {
    int epoch = 0;
    double l_clf = 0.0;
    double l_align = 0.0;  // L_d for DANN, MMD^2 for MMD, 0 otherwise
    double ms = 0.0;       // wall clock for the epoch
};

struct TrainResult {
    BackboneModel model;
    std::vector<TrainStepRecord> trace;
    double train_seconds = 0.0;
};

// Biased (V-statistic) multi-kernel MMD^2 between two feature batches:
// mean(K_ss) + mean(K_tt) - 2 mean(K_st) with k(a, b) being the
// equal-weight sum of Gaussian kernels exp(-|a-b|^2 / (2 sigma^2)) over
// the given widths. Differentiable w.r.t. both inputs.
Tensor mmd_multikernel(Tape* tape, const Tensor& fs, const Tensor& ft,
                       const std::vector<double>& widths);

// Source-only supervised training (L_clf, Adam).
TrainResult train_baseline(const WindowedDataset& source, const AdaptationConfig& cfg);

// Same recipe on the BN-augmented backbone: the source-training stage of
// the AdaBN pipeline, before any statistics are replaced.
TrainResult train_bn_baseline(const WindowedDataset& source, const AdaptationConfig& cfg);

// DANN: per step, source batch + target batch; features of both pass
// through a gradient-reversal layer into the domain discriminator;
// one Adam step on L_clf + L_d updates extractor, classifier and
// discriminator together.
TrainResult train_dann(const WindowedDataset& source, const WindowedDataset& target,
                       const AdaptationConfig& cfg);

// MMD: as DANN but the alignment term is
// lambda_mmd * MMD^2(f(x_s), f(x_t)) on the 256-d feature layer.
TrainResult train_mmd(const WindowedDataset& source, const WindowedDataset& target,
                      const AdaptationConfig& cfg);

// AdaBN: freeze all trainable parameters of a BN-variant model and
// replace every BN layer's running statistics with exact population
// statistics of the target set, layer by layer (statistics for layer k+1
// are computed after layers <= k already use their replaced statistics).
BackboneModel adapt_adabn(const BackboneModel& trained, const WindowedDataset& target);

// Full method pipeline: baseline/mmd/dann as above; adabn = BN-variant
// source training followed by adapt_adabn on the target.
TrainResult train_method(const WindowedDataset& source, const WindowedDataset* target,
                         const AdaptationConfig& cfg);

// Proxy A-distance 2 * (1 - 2 * eps), clamped to [0, 2], where eps is the
// held-out error of a logistic domain classifier trained on a 50/50
// split. Diagnostic only; needs >= 20 rows per domain.
double proxy_a_distance(const std::vector<double>& fs, size_t ns, const std::vector<double>& ft,
                        size_t nt, size_t dim, uint64_t seed);

// Per-epoch trace as CSV: epoch,l_clf,l_align,ms.
void save_trace_csv(const std::vector<TrainStepRecord>& trace, const std::string& path);

}  // namespace dafd
