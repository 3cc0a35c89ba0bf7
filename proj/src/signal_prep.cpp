#include "dafd/signal_prep.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <set>

#include "dafd/errors.hpp"
#include "dafd/fft.hpp"

namespace dafd {

bool is_allowed_normalization_factor(double factor) {
    return factor == 1.0 || factor == 8.0 || factor == 64.0 || factor == 512.0;
}

RawSignal truncate(const RawSignal& signal, size_t limit) {
    if (signal.samples.size() < limit)
        throw DataError("signal '" + signal.origin + "' has " +
                        std::to_string(signal.samples.size()) + " samples, " +
                        std::to_string(limit - signal.samples.size()) + " short of " +
                        std::to_string(limit));
    RawSignal out = signal;
    out.samples.resize(limit);
    return out;
}

std::vector<std::vector<double>> window(const RawSignal& signal, size_t count, size_t width) {
    const size_t len = signal.samples.size();
    if (count == 0) throw UsageError("window: count must be positive");
    if (len < width)
        throw DataError("signal '" + signal.origin + "' shorter than one window");
    if (count == 1) return {std::vector<double>(signal.samples.begin(),
                                                signal.samples.begin() + width)};
    const size_t stride = (len - width) / (count - 1);
    if (stride == 0)
        throw DataError("signal '" + signal.origin + "' too short for " +
                        std::to_string(count) + " windows of " + std::to_string(width));
    std::vector<std::vector<double>> out;
    out.reserve(count);
    for (size_t i = 0; i < count; ++i) {
        const size_t start = i * stride;
        out.emplace_back(signal.samples.begin() + start, signal.samples.begin() + start + width);
    }
    return out;
}

std::vector<double> fft_features(const std::vector<double>& window_samples) {
    const size_t n = window_samples.size();
    if (n == 0 || (n & (n - 1)) != 0)
        throw UsageError("fft_features: window length " + std::to_string(n) +
                         " is not a power of two");
    return fft_half_magnitudes(window_samples);
}

void normalize(std::vector<double>& features, double factor) {
    if (!is_allowed_normalization_factor(factor))
        throw ConfigError("normalization factor " + std::to_string(factor) +
                          " not in {1, 8, 64, 512}");
    if (factor == 1.0) return;
    for (double& v : features) v /= factor;
}

WindowedDataset build_dataset(const std::vector<RawSignal>& signals, double factor,
                              DomainTag tag, size_t windows_per_class) {
    if (!is_allowed_normalization_factor(factor))
        throw ConfigError("normalization factor " + std::to_string(factor) +
                          " not in {1, 8, 64, 512}");

    const RawSignal* per_class[kNumClasses] = {nullptr};
    for (const auto& s : signals) {
        if (s.class_label < 0 || (size_t)s.class_label >= kNumClasses)
            throw DataError("signal '" + s.origin + "' has class label " +
                            std::to_string(s.class_label) + " outside [0, 10)");
        if (per_class[s.class_label] != nullptr)
            throw DataError("duplicate signal for class " + std::to_string(s.class_label) +
                            " ('" + s.origin + "')");
        if (!signals.empty() && s.source_load != signals.front().source_load)
            throw DataError("signal '" + s.origin + "' has load " +
                            std::to_string(s.source_load) + ", expected " +
                            std::to_string(signals.front().source_load));
        per_class[s.class_label] = &s;
    }
    std::string missing;
    for (size_t c = 0; c < kNumClasses; ++c)
        if (per_class[c] == nullptr) missing += (missing.empty() ? "" : ", ") + std::to_string(c);
    if (!missing.empty()) throw DataError("missing signals for class ids: " + missing);

    WindowedDataset ds;
    ds.num_rows = kNumClasses * windows_per_class;
    ds.num_features = kFeatureDim;
    ds.features.reserve(ds.num_rows * ds.num_features);
    ds.labels.reserve(ds.num_rows);
    ds.domain_tag = tag;
    ds.load_id = per_class[0]->source_load;
    ds.normalization_factor = factor;

    for (size_t c = 0; c < kNumClasses; ++c) {
        const RawSignal truncated = truncate(*per_class[c]);
        const auto windows = window(truncated, windows_per_class);
        for (const auto& w : windows) {
            auto feats = fft_features(w);
            normalize(feats, factor);
            ds.features.insert(ds.features.end(), feats.begin(), feats.end());
            ds.labels.push_back((int)c);
        }
    }
    return ds;
}

RawSignal downsample_to_12khz(const RawSignal& signal, bool prefilter) {
    if (signal.sampling_rate_hz == 12000) return signal;
    if (signal.sampling_rate_hz != 48000)
        throw DataError("signal '" + signal.origin + "' sampled at " +
                        std::to_string(signal.sampling_rate_hz) + " Hz; expected 12 or 48 kHz");
    std::vector<double> src = signal.samples;
    if (prefilter) {
        constexpr int kTaps = 9;
        std::vector<double> filtered(src.size(), 0.0);
        for (size_t i = 0; i < src.size(); ++i) {
            double acc = 0.0;
            for (int t = -(kTaps / 2); t <= kTaps / 2; ++t) {
                const long j = (long)i + t;
                if (j >= 0 && j < (long)src.size()) acc += src[j];
            }
            filtered[i] = acc / kTaps;
        }
        src = std::move(filtered);
    }
    RawSignal out = signal;
    out.sampling_rate_hz = 12000;
    out.samples.clear();
    out.samples.reserve(src.size() / 4 + 1);
    for (size_t i = 0; i < src.size(); i += 4) out.samples.push_back(src[i]);
    return out;
}

void save_dataset_csv(const WindowedDataset& ds, const std::string& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw DataError("cannot open '" + path + "' for writing");
    f << "label";
    for (size_t j = 0; j < ds.num_features; ++j) f << ",f" << j;
    f << "\n";
    char buf[64];
    for (size_t r = 0; r < ds.num_rows; ++r) {
        f << ds.labels[r];
        const double* row = ds.row(r);
        for (size_t j = 0; j < ds.num_features; ++j) {
            // %.17g round-trips doubles exactly.
            std::snprintf(buf, sizeof(buf), ",%.17g", row[j]);
            f << buf;
        }
        f << "\n";
    }
    if (!f) throw DataError("failed writing dataset to '" + path + "'");
}

WindowedDataset load_dataset_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw DataError("cannot open dataset '" + path + "'");
    std::string line;
    if (!std::getline(f, line)) throw DataError("dataset '" + path + "' is empty");

    WindowedDataset ds;
    ds.num_features = (size_t)std::count(line.begin(), line.end(), ',');
    if (ds.num_features == 0) throw DataError("dataset '" + path + "' has no feature columns");

    size_t line_no = 1;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.empty()) continue;
        const char* p = line.data();
        const char* end = line.data() + line.size();
        int label = 0;
        auto rc = std::from_chars(p, end, label);
        if (rc.ec != std::errc())
            throw DataError(path + ":" + std::to_string(line_no) + ": bad label");
        ds.labels.push_back(label);
        p = rc.ptr;
        for (size_t j = 0; j < ds.num_features; ++j) {
            if (p >= end || *p != ',')
                throw DataError(path + ":" + std::to_string(line_no) + ": expected " +
                                std::to_string(ds.num_features) + " features");
            ++p;
            double v = 0.0;
            auto fc = std::from_chars(p, end, v);
            if (fc.ec != std::errc())
                throw DataError(path + ":" + std::to_string(line_no) + ": bad value in column " +
                                std::to_string(j));
            ds.features.push_back(v);
            p = fc.ptr;
        }
    }
    ds.num_rows = ds.labels.size();
    return ds;
}

}  // namespace dafd
