#pragma once

#include <complex>
#include <vector>

namespace dafd {

// In-place iterative radix-2 FFT (decimation in time, bit-reversal
// ordering). Length must be a power of two.
void fft_radix2(std::vector<std::complex<double>>& a);

// Full magnitude spectrum |X_k|, k = 0..n-1, of a real signal.
std::vector<double> fft_magnitudes(const std::vector<double>& window);

// The first half of the magnitude spectrum (bins 0..n/2-1): DC included,
// Nyquist excluded. For the standard 1024-point window this is the
// 512-coefficient feature vector.
std::vector<double> fft_half_magnitudes(const std::vector<double>& window);

}  // namespace dafd
