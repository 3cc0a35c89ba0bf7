#pragma once

// Independent oracles used by the test suites. These deliberately take the
// slow, obviously-correct route (central differences, O(n^2) transforms,
// double loops) and never call the code paths they are checking.

#include <cmath>
#include <complex>
#include <functional>
#include <vector>

#include "dafd/rng.hpp"
#include "dafd/tensor.hpp"

namespace dafd::testing {

// Central finite differences against tape gradients.
//
//   build: reconstructs the scalar loss from the CURRENT parameter values
//          on a fresh tape. It must be deterministic (re-derive any RNG
//          inside).
//   params: tensors whose gradients are compared.
//
// Returns |g_ad - g_fd| / max(|g_fd|, 1e-8) over all checked coordinates
// (vector norms). When sample_per_tensor is set, only that many randomly
// chosen coordinates per tensor enter the comparison.
struct GradCheck {
    std::function<Tensor(Tape&)> build;
    std::vector<Tensor> params;
    double step = 1e-5;
    size_t sample_per_tensor = SIZE_MAX;
    uint64_t sample_seed = 9001;

    double max_rel_err() {
        Tape tape;
        Tensor loss = build(tape);
        for (auto& p : params) p.drop_grad();
        tape.backward(loss);

        auto eval = [&]() {
            Tape t;
            return build(t).item();
        };

        SeededRng rng(sample_seed);
        double num = 0.0, den = 0.0;
        for (auto& p : params) {
            std::vector<size_t> idx;
            if (p.size() <= sample_per_tensor) {
                idx.resize(p.size());
                for (size_t i = 0; i < p.size(); ++i) idx[i] = i;
            } else {
                for (size_t k = 0; k < sample_per_tensor; ++k)
                    idx.push_back((size_t)rng.below(p.size()));
            }
            const double* g = p.has_grad() ? p.grad().data() : nullptr;
            for (size_t i : idx) {
                const double orig = p.values()[i];
                p.values()[i] = orig + step;
                const double fp = eval();
                p.values()[i] = orig - step;
                const double fm = eval();
                p.values()[i] = orig;
                const double gfd = (fp - fm) / (2.0 * step);
                const double gad = g == nullptr ? 0.0 : g[i];
                num += (gad - gfd) * (gad - gfd);
                den += gfd * gfd;
            }
        }
        return std::sqrt(num) / std::max(std::sqrt(den), 1e-8);
    }
};

// Naive O(n^2) DFT magnitudes. Integer phase reduction keeps the twiddle
// arguments exact.
inline std::vector<double> naive_dft_magnitudes(const std::vector<double>& x) {
    const size_t n = x.size();
    std::vector<double> mags(n);
    for (size_t k = 0; k < n; ++k) {
        double re = 0.0, im = 0.0;
        for (size_t t = 0; t < n; ++t) {
            const double ang = -2.0 * M_PI * (double)((k * t) % n) / (double)n;
            re += x[t] * std::cos(ang);
            im += x[t] * std::sin(ang);
        }
        mags[k] = std::hypot(re, im);
    }
    return mags;
}

// Double-loop multi-kernel MMD^2 (biased V-statistic), the estimator
// written out literally.
inline double naive_mmd2(const std::vector<double>& fs, size_t bs, const std::vector<double>& ft,
                         size_t bt, size_t dim, const std::vector<double>& widths) {
    auto kval = [&](const double* a, const double* b) {
        double d2 = 0.0;
        for (size_t i = 0; i < dim; ++i) {
            const double d = a[i] - b[i];
            d2 += d * d;
        }
        double k = 0.0;
        for (double s : widths) k += std::exp(-d2 / (2.0 * s * s));
        return k;
    };
    double ss = 0.0, tt = 0.0, st = 0.0;
    for (size_t i = 0; i < bs; ++i)
        for (size_t j = 0; j < bs; ++j) ss += kval(&fs[i * dim], &fs[j * dim]);
    for (size_t i = 0; i < bt; ++i)
        for (size_t j = 0; j < bt; ++j) tt += kval(&ft[i * dim], &ft[j * dim]);
    for (size_t i = 0; i < bs; ++i)
        for (size_t j = 0; j < bt; ++j) st += kval(&fs[i * dim], &ft[j * dim]);
    return ss / (double)(bs * bs) + tt / (double)(bt * bt) - 2.0 * st / (double)(bs * bt);
}

// Direct (shift-and-sum) same-length 1-D convolution.
inline std::vector<double> naive_conv1d(const std::vector<double>& x, size_t B, size_t L,
                                        size_t cin, const std::vector<double>& ker, size_t K,
                                        size_t cout, const std::vector<double>& bias) {
    std::vector<double> y(B * L * cout, 0.0);
    const long P = (long)(K - 1) / 2;
    for (size_t b = 0; b < B; ++b)
        for (size_t l = 0; l < L; ++l)
            for (size_t o = 0; o < cout; ++o) {
                double acc = bias[o];
                for (size_t k = 0; k < K; ++k) {
                    const long src = (long)(l + k) - P;
                    if (src < 0 || src >= (long)L) continue;
                    for (size_t c = 0; c < cin; ++c)
                        acc += x[(b * L + (size_t)src) * cin + c] * ker[(k * cin + c) * cout + o];
                }
                y[(b * L + l) * cout + o] = acc;
            }
    return y;
}

inline Tensor random_tensor(SeededRng& rng, Shape shape, double lo = -1.0, double hi = 1.0,
                            bool requires_grad = true) {
    Tensor t(std::move(shape));
    for (auto& v : t.values()) v = rng.uniform(lo, hi);
    t.set_requires_grad(requires_grad);
    return t;
}

}  // namespace dafd::testing
