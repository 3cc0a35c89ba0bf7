#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace dafd {

struct RawSignal {
    std::vector<double> samples;
    int sampling_rate_hz = 12000;
    int source_load = 0;   // working condition 0..3
    int class_label = 0;   // 0..9
    std::string origin;    // file path or generator tag, for error messages
};

enum class DomainTag { kSource, kTarget };

// Preprocessed dataset: N rows of half-spectrum features plus labels.
struct WindowedDataset {
    size_t num_rows = 0;
    size_t num_features = 0;  // 512 under standard settings
    std::vector<double> features;  // row-major, num_rows x num_features
    std::vector<int> labels;       // in [0, 10)
    DomainTag domain_tag = DomainTag::kSource;
    int load_id = 0;
    double normalization_factor = 1.0;

    const double* row(size_t r) const { return features.data() + r * num_features; }
};

inline constexpr size_t kTruncateLimit = 120000;
inline constexpr size_t kWindowWidth = 1024;
inline constexpr size_t kWindowsPerClass = 200;
inline constexpr size_t kFeatureDim = kWindowWidth / 2;
inline constexpr size_t kNumClasses = 10;

bool is_allowed_normalization_factor(double factor);  // {1, 8, 64, 512}

// Keeps exactly the first `limit` samples. Shorter input is a data error
// that names the origin and the deficit.
RawSignal truncate(const RawSignal& signal, size_t limit = kTruncateLimit);

// Splits into `count` windows of `width` samples with a constant stride
// floor((len - width) / (count - 1)); window i starts at i * stride.
std::vector<std::vector<double>> window(const RawSignal& signal, size_t count = kWindowsPerClass,
                                        size_t width = kWindowWidth);

// Half-spectrum magnitudes of one window (length must be a power of two).
std::vector<double> fft_features(const std::vector<double>& window_samples);

// Elementwise division by one of the allowed factors.
void normalize(std::vector<double>& features, double factor);

// One signal per class (10 total, any order) -> class-major, window-minor
// dataset of (10 * count) rows. Signals must share the load id.
WindowedDataset build_dataset(const std::vector<RawSignal>& signals, double factor,
                              DomainTag tag = DomainTag::kSource,
                              size_t windows_per_class = kWindowsPerClass);

// Decimate a 48 kHz signal to 12 kHz by taking every 4th sample; when
// `prefilter` is set, a 9-tap moving-average low pass is applied first.
RawSignal downsample_to_12khz(const RawSignal& signal, bool prefilter = false);

// Dataset dumps: CSV with header `label,f0..f511`.
void save_dataset_csv(const WindowedDataset& ds, const std::string& path);
WindowedDataset load_dataset_csv(const std::string& path);

}  // namespace dafd
