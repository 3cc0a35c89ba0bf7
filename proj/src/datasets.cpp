#include "dafd/datasets.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "dafd/errors.hpp"
#include "dafd/rng.hpp"

namespace dafd {

// ---------------------------------------------------------------------------
// Label taxonomy
// ---------------------------------------------------------------------------

ClassLabel class_label_from_id(int id) {
    if (id < 0 || id > 9) throw DataError("class id " + std::to_string(id) + " outside [0, 10)");
    if (id == 0) return ClassLabel{0, FaultLocation::kNone, 0};
    static constexpr int kSizes[3] = {7, 14, 21};
    const FaultLocation loc = id <= 3   ? FaultLocation::kInnerRace
                              : id <= 6 ? FaultLocation::kBall
                                        : FaultLocation::kOuterRace;
    return ClassLabel{id, loc, kSizes[(id - 1) % 3]};
}

int class_id_from(FaultLocation location, int size_mils) {
    if (location == FaultLocation::kNone) {
        if (size_mils != 0) throw DataError("healthy class has no fault size");
        return 0;
    }
    int size_idx;
    switch (size_mils) {
        case 7: size_idx = 0; break;
        case 14: size_idx = 1; break;
        case 21: size_idx = 2; break;
        default:
            throw DataError("fault size " + std::to_string(size_mils) +
                            " mils not in {7, 14, 21}");
    }
    const int base = location == FaultLocation::kInnerRace ? 1
                     : location == FaultLocation::kBall    ? 4
                                                           : 7;
    return base + size_idx;
}

std::string to_string(FaultLocation loc) {
    switch (loc) {
        case FaultLocation::kNone: return "NA";
        case FaultLocation::kInnerRace: return "IF";
        case FaultLocation::kBall: return "BF";
        case FaultLocation::kOuterRace: return "OF";
    }
    return "?";
}

// ---------------------------------------------------------------------------
// Flat signal files
// ---------------------------------------------------------------------------

namespace {

// Expects "load<i>_class<j>" in the file stem.
std::pair<int, int> parse_signal_name(const std::string& path) {
    const std::string stem = std::filesystem::path(path).stem().string();
    int load = -1, cls = -1;
    if (std::sscanf(stem.c_str(), "load%d_class%d", &load, &cls) != 2)
        throw DataError("file name '" + stem +
                        "' does not match the load<i>_class<j> naming scheme");
    if (load < 0 || load > 3 || cls < 0 || cls > 9)
        throw DataError("file '" + path + "' names load " + std::to_string(load) + ", class " +
                        std::to_string(cls) + " outside the valid ranges");
    return {load, cls};
}

}  // namespace

RawSignal load_signal_file(const std::string& path, std::optional<std::pair<int, int>> expected) {
    const auto [load, cls] = parse_signal_name(path);
    if (expected.has_value() && (expected->first != load || expected->second != cls))
        throw DataError("file '" + path + "' encodes (load " + std::to_string(load) +
                        ", class " + std::to_string(cls) + ") but (load " +
                        std::to_string(expected->first) + ", class " +
                        std::to_string(expected->second) + ") was requested");

    const std::string ext = std::filesystem::path(path).extension().string();
    RawSignal sig;
    sig.source_load = load;
    sig.class_label = cls;
    sig.origin = path;

    if (ext == ".f32") {
        std::ifstream f(path, std::ios::binary | std::ios::ate);
        if (!f) throw DataError("cannot open signal file '" + path + "'");
        const auto bytes = (size_t)f.tellg();
        if (bytes == 0) throw DataError("signal file '" + path + "' is empty");
        if (bytes % 4 != 0)
            throw DataError("signal file '" + path + "' has " + std::to_string(bytes) +
                            " bytes, not a multiple of 4");
        f.seekg(0);
        std::vector<float> raw(bytes / 4);
        f.read(reinterpret_cast<char*>(raw.data()), (std::streamsize)bytes);
        if (!f) throw DataError("failed reading signal file '" + path + "'");
        sig.samples.assign(raw.begin(), raw.end());
    } else if (ext == ".csv") {
        std::ifstream f(path);
        if (!f) throw DataError("cannot open signal file '" + path + "'");
        std::string line;
        size_t line_no = 0;
        while (std::getline(f, line)) {
            ++line_no;
            if (line.empty()) continue;
            try {
                size_t pos = 0;
                const double v = std::stod(line, &pos);
                while (pos < line.size() && (line[pos] == ' ' || line[pos] == '\r')) ++pos;
                if (pos != line.size()) throw std::invalid_argument("trailing characters");
                sig.samples.push_back(v);
            } catch (const std::exception&) {
                throw DataError(path + ":" + std::to_string(line_no) + ": malformed value '" +
                                line + "'");
            }
        }
        if (sig.samples.empty()) throw DataError("signal file '" + path + "' is empty");
    } else {
        throw DataError("signal file '" + path + "' has unsupported extension '" + ext +
                        "' (expected .f32 or .csv)");
    }
    return sig;
}

void save_signal_f32(const RawSignal& signal, const std::string& path) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot open '" + path + "' for writing");
    std::vector<float> raw(signal.samples.begin(), signal.samples.end());
    f.write(reinterpret_cast<const char*>(raw.data()),
            (std::streamsize)(raw.size() * sizeof(float)));
    if (!f) throw DataError("failed writing '" + path + "'");
}

// ---------------------------------------------------------------------------
// Synthetic generator
// ---------------------------------------------------------------------------

namespace {

constexpr double kSampleRate = 12000.0;

constexpr double kLoadRotationHz[4] = {29.9, 29.2, 28.8, 28.5};
constexpr double kLoadAmplitude[4] = {1.0, 1.12, 1.24, 1.36};

// Impacts per shaft revolution by fault location (bearing-geometry
// flavored constants, frozen after the learnability calibration).
double location_rate_multiplier(FaultLocation loc) {
    switch (loc) {
        case FaultLocation::kInnerRace: return 5.415;
        case FaultLocation::kBall: return 2.357;
        case FaultLocation::kOuterRace: return 3.585;
        default: return 0.0;
    }
}

// Resonance band excited by each fault location.
double location_resonance_hz(FaultLocation loc) {
    switch (loc) {
        case FaultLocation::kInnerRace: return 3200.0;
        case FaultLocation::kBall: return 1900.0;
        case FaultLocation::kOuterRace: return 4400.0;
        default: return 0.0;
    }
}

// Impulse strength and ring-down time grow with the fault size. Short
// rings spread each class signature over hundreds of spectral bins,
// which keeps it inside the sigmoid's linear range after normalization.
double size_amplitude(int mils) { return mils == 7 ? 1.2 : mils == 14 ? 2.0 : 3.0; }
double size_tau_seconds(int mils) { return mils == 7 ? 0.00035 : mils == 14 ? 0.0007 : 0.0014; }

}  // namespace

double SyntheticSpec::effective_rotation_hz() const {
    if (rotation_hz.has_value()) return *rotation_hz;
    if (load_id < 0 || load_id > 3)
        throw ConfigError("synthetic load id " + std::to_string(load_id) + " outside 0..3");
    return kLoadRotationHz[load_id];
}

double SyntheticSpec::effective_amplitude() const {
    if (amplitude_scale.has_value()) return *amplitude_scale;
    if (load_id < 0 || load_id > 3)
        throw ConfigError("synthetic load id " + std::to_string(load_id) + " outside 0..3");
    return kLoadAmplitude[load_id];
}

RawSignal synthesize_signal(const SyntheticSpec& spec, int class_id, size_t n) {
    const ClassLabel label = class_label_from_id(class_id);
    if (spec.noise_std < 0.0) throw ConfigError("noise_std must be >= 0");
    const double f_rot = spec.effective_rotation_hz();
    const double amp = spec.effective_amplitude();
    if (f_rot <= 0.0 || f_rot >= kSampleRate / 2.0)
        throw ConfigError("rotation frequency " + std::to_string(f_rot) +
                          " Hz outside (0, Nyquist)");
    if (amp < 0.0) throw ConfigError("amplitude scale must be >= 0");

    SeededRng rng = derive_rng(spec.seed, "synth", (uint64_t)class_id, (uint64_t)spec.load_id);

    RawSignal sig;
    sig.sampling_rate_hz = (int)kSampleRate;
    sig.source_load = spec.load_id;
    sig.class_label = class_id;
    sig.origin = "synthetic(load=" + std::to_string(spec.load_id) +
                 ",class=" + std::to_string(class_id) + ")";
    sig.samples.assign(n, 0.0);

    // Slow speed and load fluctuation. Without it, consecutive windows of
    // a stationary signal have near-identical magnitude spectra and each
    // class degenerates to a handful of distinct points.
    const double drift_phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double drift_phase2 = rng.uniform(0.0, 2.0 * std::numbers::pi);
    auto speed_factor = [&](double t) {
        return 1.0 + 0.015 * std::sin(2.0 * std::numbers::pi * 0.35 * t + drift_phase) +
               0.010 * std::sin(2.0 * std::numbers::pi * 0.11 * t + drift_phase2);
    };
    auto load_factor = [&](double t) {
        return 1.0 + 0.20 * std::sin(2.0 * std::numbers::pi * 0.23 * t + drift_phase2) +
               0.12 * std::sin(2.0 * std::numbers::pi * 0.07 * t + drift_phase);
    };

    // Shaft rotation tone (with a weak second harmonic). Kept small so the
    // uninformative rotation line does not dominate the spectrum.
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    for (size_t i = 0; i < n; ++i) {
        const double t = (double)i / kSampleRate;
        const double f = f_rot * speed_factor(t);
        sig.samples[i] =
            amp * load_factor(t) *
            (0.3 * std::sin(2.0 * std::numbers::pi * f * t + phase) +
             0.1 * std::sin(4.0 * std::numbers::pi * f * t + 2.0 * phase));
    }

    if (label.location != FaultLocation::kNone) {
        const double rate = location_rate_multiplier(label.location) * f_rot;
        const double period = kSampleRate / rate;  // samples between impacts
        const double f_res = location_resonance_hz(label.location);
        if (f_res >= kSampleRate / 2.0)
            throw ConfigError("resonance above Nyquist for " + to_string(label.location));
        const double tau = size_tau_seconds(label.size_mils) * kSampleRate;  // samples
        const double base_amp = amp * size_amplitude(label.size_mils);

        // Ring-down kernel, truncated at 6 tau.
        const size_t klen = (size_t)(6.0 * tau) + 1;
        std::vector<double> kernel(klen);
        for (size_t k = 0; k < klen; ++k)
            kernel[k] = std::exp(-(double)k / tau) *
                        std::sin(2.0 * std::numbers::pi * f_res * (double)k / kSampleRate);

        // Impact train at the fault repetition rate, with timing jitter,
        // per-impact amplitude variation, and the slow load envelope.
        double pos = rng.uniform(0.0, period);
        while (pos < (double)n) {
            const size_t start = (size_t)pos;
            const double t = pos / kSampleRate;
            const double a =
                base_amp * load_factor(t) * (1.0 + 0.25 * rng.normal());
            for (size_t k = 0; k < klen && start + k < n; ++k)
                sig.samples[start + k] += a * kernel[k];
            pos += period / speed_factor(t) * (1.0 + 0.02 * rng.normal());
        }
    }

    if (spec.noise_std > 0.0) {
        for (size_t i = 0; i < n; ++i) sig.samples[i] += spec.noise_std * rng.normal();
    }
    return sig;
}

WindowedDataset synthesize_dataset(const SyntheticSpec& spec, double factor, DomainTag tag,
                                   size_t windows_per_class) {
    std::vector<RawSignal> signals;
    signals.reserve(kNumClasses);
    for (int c = 0; c < (int)kNumClasses; ++c) signals.push_back(synthesize_signal(spec, c));
    return build_dataset(signals, factor, tag, windows_per_class);
}

std::pair<WindowedDataset, WindowedDataset> synthesize_domain_pair(const SyntheticSpec& source,
                                                                   const SyntheticSpec& target,
                                                                   double factor,
                                                                   size_t windows_per_class) {
    if (source.effective_rotation_hz() == target.effective_rotation_hz() &&
        source.effective_amplitude() == target.effective_amplitude() &&
        source.noise_std == target.noise_std) {
        std::fprintf(stderr,
                     "warning: source and target synthetic specs are identical; "
                     "there is no domain shift to adapt to\n");
    }
    return {synthesize_dataset(source, factor, DomainTag::kSource, windows_per_class),
            synthesize_dataset(target, factor, DomainTag::kTarget, windows_per_class)};
}

SyntheticSpec shifted_spec(const SyntheticSpec& source, int shift_level, uint64_t target_seed) {
    if (shift_level < 0) throw ConfigError("shift level must be >= 0");
    SyntheticSpec t = source;
    t.rotation_hz = source.effective_rotation_hz() * (1.0 + 0.05 * shift_level);
    t.amplitude_scale = source.effective_amplitude() * (1.0 + 0.25 * shift_level);
    t.seed = target_seed;
    return t;
}

}  // namespace dafd
