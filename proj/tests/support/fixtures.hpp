#pragma once

// Reduced synthetic datasets shared by the training-level tests. Small
// window counts keep each training run in the seconds range; the full-size
// settings live in the acceptance suite.

#include <utility>

#include "dafd/datasets.hpp"
#include "dafd/signal_prep.hpp"

namespace dafd::testing {

inline constexpr double kTestFactor = 64.0;

inline SyntheticSpec small_source_spec(uint64_t seed) {
    SyntheticSpec spec;
    spec.load_id = 0;
    spec.seed = seed;
    return spec;
}

inline std::pair<WindowedDataset, WindowedDataset> small_pair(int shift_level, uint64_t seed,
                                                              size_t windows_per_class = 10,
                                                              double factor = kTestFactor) {
    const SyntheticSpec src = small_source_spec(seed);
    const SyntheticSpec tgt = shifted_spec(src, shift_level, seed + 1);
    return synthesize_domain_pair(src, tgt, factor, windows_per_class);
}

}  // namespace dafd::testing
