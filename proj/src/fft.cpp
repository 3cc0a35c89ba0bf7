#include "dafd/fft.hpp"

#include <cmath>
#include <numbers>

#include "dafd/errors.hpp"

namespace dafd {

void fft_radix2(std::vector<std::complex<double>>& a) {
    const size_t n = a.size();
    if (n == 0 || (n & (n - 1)) != 0)
        throw UsageError("fft_radix2: length " + std::to_string(n) +
                         " is not a power of two");
    if (n == 1) return;

    // Bit-reversal permutation.
    for (size_t i = 1, j = 0; i < n; ++i) {
        size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }

    for (size_t len = 2; len <= n; len <<= 1) {
        const double ang = -2.0 * std::numbers::pi / (double)len;
        const std::complex<double> wlen(std::cos(ang), std::sin(ang));
        for (size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (size_t k = 0; k < len / 2; ++k) {
                const std::complex<double> u = a[i + k];
                const std::complex<double> v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
}

std::vector<double> fft_magnitudes(const std::vector<double>& window) {
    std::vector<std::complex<double>> a(window.size());
    for (size_t i = 0; i < window.size(); ++i) a[i] = std::complex<double>(window[i], 0.0);
    fft_radix2(a);
    std::vector<double> mags(a.size());
    for (size_t i = 0; i < a.size(); ++i) mags[i] = std::abs(a[i]);
    return mags;
}

std::vector<double> fft_half_magnitudes(const std::vector<double>& window) {
    std::vector<double> mags = fft_magnitudes(window);
    mags.resize(window.size() / 2);
    return mags;
}

}  // namespace dafd
