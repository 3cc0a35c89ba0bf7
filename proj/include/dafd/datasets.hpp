#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dafd/signal_prep.hpp"

namespace dafd {

enum class FaultLocation { kNone, kInnerRace, kBall, kOuterRace };

// Ten bearing conditions: healthy (0), then inner-race / ball / outer-race
// faults at 7, 14 and 21 mils.
struct ClassLabel {
    int id = 0;
    FaultLocation location = FaultLocation::kNone;
    int size_mils = 0;
};

ClassLabel class_label_from_id(int id);
int class_id_from(FaultLocation location, int size_mils);
std::string to_string(FaultLocation loc);

// ---------------------------------------------------------------------------
// Flat signal files
// ---------------------------------------------------------------------------

// Parses `load<i>_class<j>.f32` (little-endian 32-bit floats) or
// `load<i>_class<j>.csv` (one decimal per line). The name encodes the
// metadata; a mismatch with `expected` is an error.
RawSignal load_signal_file(const std::string& path,
                           std::optional<std::pair<int, int>> expected = std::nullopt);

void save_signal_f32(const RawSignal& signal, const std::string& path);

// ---------------------------------------------------------------------------
// Synthetic bearing-like signals
// ---------------------------------------------------------------------------

// Generator model: a shaft-rotation sinusoid plus, for faulty classes, a
// periodic impulse train convolved with a decaying-exponential resonance,
// plus white noise. The fault location picks the impulse repetition rate
// and resonance band; the fault size scales the impulse amplitude and the
// ring-down time. Loads differ in rotation speed and overall amplitude.
struct SyntheticSpec {
    int load_id = 0;
    // Unset -> the load defaults (rotation 29.9/29.2/28.8/28.5 Hz,
    // amplitude 1.0/1.12/1.24/1.36).
    std::optional<double> rotation_hz;
    std::optional<double> amplitude_scale;
    double noise_std = 0.1;
    uint64_t seed = 0;

    double effective_rotation_hz() const;
    double effective_amplitude() const;
};

RawSignal synthesize_signal(const SyntheticSpec& spec, int class_id, size_t n = kTruncateLimit);

// All ten classes of one spec through the standard preprocessing chain.
WindowedDataset synthesize_dataset(const SyntheticSpec& spec, double factor,
                                   DomainTag tag = DomainTag::kSource,
                                   size_t windows_per_class = kWindowsPerClass);

// Two full datasets for a source/target spec pair. Identical specs (same
// shift-inducing fields) emit a warning on stderr: there is no shift to
// adapt to.
std::pair<WindowedDataset, WindowedDataset> synthesize_domain_pair(
    const SyntheticSpec& source, const SyntheticSpec& target, double factor,
    size_t windows_per_class = kWindowsPerClass);

// Calibrated shift ladder used by the synthetic experiments: level L sets
// the target rotation to (1 + 0.05 L) and amplitude to (1 + 0.25 L) times
// the source values. Level 0 is the no-shift control.
SyntheticSpec shifted_spec(const SyntheticSpec& source, int shift_level, uint64_t target_seed);

}  // namespace dafd
