#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dafd/ops.hpp"
#include "dafd/rng.hpp"
#include "dafd/signal_prep.hpp"
#include "dafd/tensor.hpp"

namespace dafd {

enum class ModelVariant { kBaseline, kDann, kMmd, kAdaBn };
enum class RunMode { kTrain, kEval };

std::string to_string(ModelVariant v);
ModelVariant variant_from_string(const std::string& s);

// Architecture constants. The flattened width 512 * 10 = 5120 ties the
// input length to the published parameter counts.
inline constexpr size_t kInputWidth = 512;
inline constexpr size_t kKernelWidth = 3;
inline constexpr size_t kConvChannels = 10;
inline constexpr size_t kFlatWidth = kInputWidth * kConvChannels;
inline constexpr size_t kFeatureSize = 256;
inline constexpr size_t kClassCount = 10;
inline constexpr size_t kDiscriminatorHidden = 1024;
inline constexpr double kDropoutRate = 0.5;

struct BnLayer {
    Tensor gamma, beta;  // trainable
    std::vector<double> running_mean, running_var;
    double eps = 1e-5;
    double momentum = 0.9;

    size_t width() const { return gamma.size(); }

    // mu <- m * mu + (1 - m) * batch_mean, likewise for the variance.
    void update_running(const std::vector<double>& mean, const std::vector<double>& var);
};

BnLayer make_bn_layer(size_t width, const std::string& name);

struct FeatureExtractor {
    Tensor conv1_kernel, conv1_bias;  // [3, 1, 10], [10]
    Tensor conv2_kernel, conv2_bias;  // [3, 10, 10], [10]
    Tensor conv3_kernel, conv3_bias;  // [3, 10, 10], [10]
    Tensor dense_w, dense_b;          // [5120, 256], [256]
    bool has_bn = false;
    BnLayer bn1, bn2, bn3, bn4;  // widths 10, 10, 10, 256
};

struct Classifier {
    Tensor d1_w, d1_b;  // [256, 256], [256]
    Tensor d2_w, d2_b;  // [256, 10], [10]
};

struct Discriminator {
    Tensor d1_w, d1_b;  // [256, 1024], [1024]
    Tensor d2_w, d2_b;  // [1024, 1024], [1024]
    Tensor d3_w, d3_b;  // [1024, 2], [2]
};

struct BackboneModel {
    ModelVariant variant = ModelVariant::kBaseline;
    FeatureExtractor fe;
    Classifier clf;
    std::optional<Discriminator> disc;

    // All trainable tensors, fixed order (running stats excluded).
    std::vector<Tensor> trainable_params();
    // Extractor + classifier only (the theta_e, theta_l subset).
    std::vector<Tensor> backbone_params();
    // Deep value copy (fresh tensors, same numbers).
    BackboneModel clone() const;
};

// Glorot-uniform weights, zero biases, gamma=1/beta=0. The discriminator
// draws from its own derived stream so its presence does not perturb the
// extractor/classifier initialization.
BackboneModel make_model(ModelVariant variant, uint64_t master_seed);

int64_t count_parameters(BackboneModel& model);
int64_t count_parameters(ModelVariant variant);

struct ForwardCtx {
    Tape* tape = nullptr;
    RunMode mode = RunMode::kEval;
    SeededRng* dropout_rng = nullptr;  // required in train mode
    bool update_bn_stats = true;       // train mode only
};

// x: [B, 512] -> features [B, 256].
Tensor forward_features(ForwardCtx& ctx, const Tensor& x, BackboneModel& model);
// f: [B, 256] -> logits [B, 10].
Tensor forward_classifier(ForwardCtx& ctx, const Tensor& f, BackboneModel& model);
// f: [B, 256] -> domain logits [B, 2].
Tensor forward_discriminator(Tape* tape, const Tensor& f, Discriminator& disc);

// Argmax with ties broken toward the lowest class index.
int argmax_class(const double* logits, size_t n);

// Fraction of rows classified correctly, in percent. Eval mode.
double evaluate_accuracy(BackboneModel& model, const WindowedDataset& ds,
                         size_t batch_rows = 256);
std::vector<int> predict(BackboneModel& model, const WindowedDataset& ds,
                         size_t batch_rows = 256);

// Flat binary checkpoint: magic "DAFD", version byte, then named records
// (u32 name length, name, u32 rank, u64 dims, float64 payload), little
// endian. Round-trips bit-exactly.
void save_model(BackboneModel& model, const std::string& path);
BackboneModel load_model(const std::string& path);

}  // namespace dafd
