#include "dafd/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "dafd/blas.hpp"
#include "dafd/errors.hpp"
#include "fast_math.hpp"

namespace dafd {

namespace {

bool wants_grad(const Tape* tape, std::initializer_list<const Tensor*> inputs) {
    if (tape == nullptr) return false;
    for (const Tensor* t : inputs)
        if (t->requires_grad()) return true;
    return false;
}

Tensor make_output(Shape shape, bool requires_grad) {
    Tensor out(std::move(shape));
    out.set_requires_grad(requires_grad);
    out.mark_output();
    return out;
}

void maybe_check(const Tensor& t, const char* what) {
    if (finite_checks_enabled()) check_finite(t, what);
}

// dst.grad += alpha * src, elementwise. Skips entirely when alpha == 0 so
// a zero-weighted branch leaves dst's grad buffer untouched (not even
// allocated), which keeps lambda=0 runs bit-identical to runs without the
// branch.
void axpy_grad(Tensor& dst, double alpha, const double* src) {
    if (alpha == 0.0) return;
    double* g = dst.grad_data();
    const size_t n = dst.size();
    for (size_t i = 0; i < n; ++i) g[i] += alpha * src[i];
}

}  // namespace

Tensor dense(Tape* tape, const Tensor& x, const Tensor& w, const Tensor& b) {
    if (x.rank() != 2 || w.rank() != 2 || b.rank() != 1)
        throw ShapeError("dense: expected x[B,Din], w[Din,Dout], b[Dout]");
    const size_t B = x.dim(0), din = x.dim(1), dout = w.dim(1);
    if (w.dim(0) != din)
        throw ShapeError("dense: input width " + std::to_string(din) +
                         " does not match weight rows " + std::to_string(w.dim(0)));
    if (b.dim(0) != dout) throw ShapeError("dense: bias length does not match output width");

    Tensor out = make_output({B, dout}, wants_grad(tape, {&x, &w, &b}));
    blas::dgemm(false, false, (int)B, (int)dout, (int)din, 1.0, x.data(), (int)din, w.data(),
                (int)dout, 0.0, out.data(), (int)dout);
    for (size_t r = 0; r < B; ++r) {
        double* row = out.data() + r * dout;
        for (size_t j = 0; j < dout; ++j) row[j] += b.data()[j];
    }
    maybe_check(out, "dense");

    if (out.requires_grad()) {
        Tensor xc = x, wc = w, bc = b, oc = out;
        tape->record(out, [xc, wc, bc, oc, B, din, dout]() mutable {
            if (!oc.has_grad()) return;
            const double* g = oc.grad().data();
            if (xc.requires_grad())
                blas::dgemm(false, true, (int)B, (int)din, (int)dout, 1.0, g, (int)dout,
                            wc.data(), (int)dout, 1.0, xc.grad_data(), (int)din);
            if (wc.requires_grad())
                blas::dgemm(true, false, (int)din, (int)dout, (int)B, 1.0, xc.data(), (int)din,
                            g, (int)dout, 1.0, wc.grad_data(), (int)dout);
            if (bc.requires_grad()) {
                double* bg = bc.grad_data();
                for (size_t r = 0; r < B; ++r) {
                    const double* grow = g + r * dout;
                    for (size_t j = 0; j < dout; ++j) bg[j] += grow[j];
                }
            }
        });
    }
    return out;
}

namespace {

// In the row-major [B, L, C] layout the K*Cin im2col window of an
// interior position is one contiguous slice of the input, so the
// convolution reads overlapping rows in place instead of materializing
// column buffers. The narrow output dimension (Cout ~ 10) makes direct
// loops faster than a general BLAS here; only the P boundary positions
// per edge need zero-padding treatment.
constexpr size_t kSmallConvWidth = 16;

// One zero-padded output row.
void conv_pad_row(const double* xb, size_t L, size_t cin, const double* w, size_t K,
                  size_t cout, const double* bias, size_t l, double* yrow) {
    const long P = (long)(K - 1) / 2;
    for (size_t o = 0; o < cout; ++o) yrow[o] = bias[o];
    for (size_t k = 0; k < K; ++k) {
        const long src = (long)l + (long)k - P;
        if (src < 0 || src >= (long)L) continue;
        const double* xrow = xb + (size_t)src * cin;
        const double* wk = w + k * cin * cout;
        for (size_t c = 0; c < cin; ++c) {
            const double xv = xrow[c];
            const double* wrow = wk + c * cout;
            for (size_t o = 0; o < cout; ++o) yrow[o] += xv * wrow[o];
        }
    }
}

// Interior block: C[r, :] = bias + A[r, :] * W with A rows advancing by
// `lda` (overlapping windows).
void conv_interior_forward(const double* a, size_t m, size_t width, size_t lda,
                           const double* w, size_t cout, const double* bias, double* y) {
    for (size_t r = 0; r < m; ++r) {
        const double* arow = a + r * lda;
        double* yrow = y + r * cout;
        for (size_t o = 0; o < cout; ++o) yrow[o] = bias[o];
        for (size_t i = 0; i < width; ++i) {
            const double av = arow[i];
            const double* wrow = w + i * cout;
            for (size_t o = 0; o < cout; ++o) yrow[o] += av * wrow[o];
        }
    }
}

void conv_small_forward(const double* x, size_t B, size_t L, size_t cin, const double* w,
                        size_t K, size_t cout, const double* bias, double* y) {
    const size_t P = (K - 1) / 2;
    const size_t width = K * cin;
    const size_t lo = std::min(P, L);
    const size_t hi = L > P ? L - P : lo;
    for (size_t b = 0; b < B; ++b) {
        const double* xb = x + b * L * cin;
        double* yb = y + b * L * cout;
        for (size_t l = 0; l < lo; ++l) conv_pad_row(xb, L, cin, w, K, cout, bias, l, yb + l * cout);
        if (hi > lo)
            conv_interior_forward(xb + (lo - P) * cin, hi - lo, width, cin, w, cout, bias,
                                  yb + lo * cout);
        for (size_t l = std::max(hi, lo); l < L; ++l)
            conv_pad_row(xb, L, cin, w, K, cout, bias, l, yb + l * cout);
    }
}

// dW += sum over positions of window^T * g, same overlapping-row reading.
void conv_small_dw(const double* x, const double* g, size_t B, size_t L, size_t cin, size_t K,
                   size_t cout, double* dw) {
    const size_t P = (K - 1) / 2;
    const size_t width = K * cin;
    std::vector<double> local(width * cout, 0.0);
    for (size_t b = 0; b < B; ++b) {
        const double* xb = x + b * L * cin;
        const double* gb = g + b * L * cout;
        for (size_t l = 0; l < L; ++l) {
            const double* grow = gb + l * cout;
            if (l >= P && l + P < L) {
                const double* arow = xb + (l - P) * cin;
                for (size_t i = 0; i < width; ++i) {
                    const double av = arow[i];
                    double* lrow = local.data() + i * cout;
                    for (size_t o = 0; o < cout; ++o) lrow[o] += av * grow[o];
                }
            } else {
                for (size_t k = 0; k < K; ++k) {
                    const long src = (long)l + (long)k - (long)P;
                    if (src < 0 || src >= (long)L) continue;
                    const double* xrow = xb + (size_t)src * cin;
                    for (size_t c = 0; c < cin; ++c) {
                        double* lrow = local.data() + (k * cin + c) * cout;
                        const double xv = xrow[c];
                        for (size_t o = 0; o < cout; ++o) lrow[o] += xv * grow[o];
                    }
                }
            }
        }
    }
    for (size_t i = 0; i < width * cout; ++i) dw[i] += local[i];
}

// dX[b, l+k-P, c] += sum_o g[b, l, o] * w[k, c, o].
void conv_small_dx(const double* g, const double* w, size_t B, size_t L, size_t cin, size_t K,
                   size_t cout, double* dx) {
    const long P = (long)(K - 1) / 2;
    for (size_t b = 0; b < B; ++b) {
        const double* gb = g + b * L * cout;
        double* xb = dx + b * L * cin;
        for (size_t l = 0; l < L; ++l) {
            const double* grow = gb + l * cout;
            for (size_t k = 0; k < K; ++k) {
                const long src = (long)l + (long)k - P;
                if (src < 0 || src >= (long)L) continue;
                double* drow = xb + (size_t)src * cin;
                const double* wk = w + k * cin * cout;
                for (size_t c = 0; c < cin; ++c) {
                    const double* wrow = wk + c * cout;
                    double acc = 0.0;
                    for (size_t o = 0; o < cout; ++o) acc += grow[o] * wrow[o];
                    drow[c] += acc;
                }
            }
        }
    }
}

// im2col for the generic (wide output) path: cols[(b*L+l), k*Cin+c] = x[b, l+k-P, c].
void im2col(const double* x, size_t B, size_t L, size_t cin, size_t K, double* cols) {
    const size_t P = (K - 1) / 2;
    const size_t width = K * cin;
    for (size_t b = 0; b < B; ++b) {
        for (size_t l = 0; l < L; ++l) {
            double* row = cols + (b * L + l) * width;
            for (size_t k = 0; k < K; ++k) {
                const long src = (long)(l + k) - (long)P;
                if (src < 0 || src >= (long)L) {
                    std::memset(row + k * cin, 0, cin * sizeof(double));
                } else {
                    std::memcpy(row + k * cin, x + (b * L + (size_t)src) * cin,
                                cin * sizeof(double));
                }
            }
        }
    }
}

}  // namespace

Tensor conv1d(Tape* tape, const Tensor& x, const Tensor& kernel, const Tensor& bias) {
    if (x.rank() != 3 || kernel.rank() != 3 || bias.rank() != 1)
        throw ShapeError("conv1d: expected x[B,L,Cin], kernel[K,Cin,Cout], bias[Cout]");
    const size_t B = x.dim(0), L = x.dim(1), cin = x.dim(2);
    const size_t K = kernel.dim(0), cout = kernel.dim(2);
    if (K % 2 == 0) throw ConfigError("conv1d: kernel width must be odd for same padding");
    if (kernel.dim(1) != cin)
        throw ConfigError("conv1d: kernel expects " + std::to_string(kernel.dim(1)) +
                          " input channels, got " + std::to_string(cin));
    if (bias.dim(0) != cout) throw ShapeError("conv1d: bias length does not match Cout");

    const size_t rows = B * L, width = K * cin;
    Tensor out = make_output({B, L, cout}, wants_grad(tape, {&x, &kernel, &bias}));

    if (cout <= kSmallConvWidth) {
        conv_small_forward(x.data(), B, L, cin, kernel.data(), K, cout, bias.data(),
                           out.data());
        maybe_check(out, "conv1d");
        if (out.requires_grad()) {
            Tensor xc = x, kc = kernel, bc = bias, oc = out;
            tape->record(out, [xc, kc, bc, oc, B, L, cin, K, cout, rows]() mutable {
                if (!oc.has_grad()) return;
                const double* g = oc.grad().data();
                if (kc.requires_grad())
                    conv_small_dw(xc.data(), g, B, L, cin, K, cout, kc.grad_data());
                if (bc.requires_grad()) {
                    double* bg = bc.grad_data();
                    for (size_t r = 0; r < rows; ++r) {
                        const double* grow = g + r * cout;
                        for (size_t j = 0; j < cout; ++j) bg[j] += grow[j];
                    }
                }
                if (xc.requires_grad())
                    conv_small_dx(g, kc.data(), B, L, cin, K, cout, xc.grad_data());
            });
        }
        return out;
    }

    auto cols = std::make_shared<std::vector<double>>(rows * width);
    im2col(x.data(), B, L, cin, K, cols->data());
    blas::dgemm(false, false, (int)rows, (int)cout, (int)width, 1.0, cols->data(), (int)width,
                kernel.data(), (int)cout, 0.0, out.data(), (int)cout);
    for (size_t r = 0; r < rows; ++r) {
        double* row = out.data() + r * cout;
        for (size_t j = 0; j < cout; ++j) row[j] += bias.data()[j];
    }
    maybe_check(out, "conv1d");

    if (out.requires_grad()) {
        Tensor xc = x, kc = kernel, bc = bias, oc = out;
        tape->record(out, [xc, kc, bc, oc, cols, B, L, cin, K, cout, rows, width]() mutable {
            if (!oc.has_grad()) return;
            const double* g = oc.grad().data();
            if (kc.requires_grad())
                blas::dgemm(true, false, (int)width, (int)cout, (int)rows, 1.0, cols->data(),
                            (int)width, g, (int)cout, 1.0, kc.grad_data(), (int)cout);
            if (bc.requires_grad()) {
                double* bg = bc.grad_data();
                for (size_t r = 0; r < rows; ++r) {
                    const double* grow = g + r * cout;
                    for (size_t j = 0; j < cout; ++j) bg[j] += grow[j];
                }
            }
            if (xc.requires_grad()) {
                // gcols = g @ kernel^T, then scatter-add back (col2im).
                std::vector<double> gcols(rows * width);
                blas::dgemm(false, true, (int)rows, (int)width, (int)cout, 1.0, g, (int)cout,
                            kc.data(), (int)cout, 0.0, gcols.data(), (int)width);
                double* xg = xc.grad_data();
                const size_t P = (K - 1) / 2;
                for (size_t b = 0; b < B; ++b)
                    for (size_t l = 0; l < L; ++l) {
                        const double* row = gcols.data() + (b * L + l) * width;
                        for (size_t k = 0; k < K; ++k) {
                            const long src = (long)(l + k) - (long)P;
                            if (src < 0 || src >= (long)L) continue;
                            double* dst = xg + (b * L + (size_t)src) * cin;
                            const double* s = row + k * cin;
                            for (size_t c = 0; c < cin; ++c) dst[c] += s[c];
                        }
                    }
            }
        });
    }
    return out;
}

Tensor sigmoid(Tape* tape, const Tensor& x) {
    Tensor out = make_output(x.shape(), wants_grad(tape, {&x}));
    const size_t n = x.size();
    const double* xp = x.data();
    double* yp = out.data();
    // Branch-free stable form so the loop vectorizes: e = exp(-|v|),
    // then 1/(1+e) for v >= 0 and e/(1+e) otherwise.
    for (size_t i = 0; i < n; ++i) {
        const double v = xp[i];
        const double e = detail::fast_exp(v < 0.0 ? v : -v);
        const double t = 1.0 / (1.0 + e);
        yp[i] = v >= 0.0 ? t : e * t;
    }
    maybe_check(out, "sigmoid");
    if (out.requires_grad()) {
        Tensor xc = x, oc = out;
        tape->record(out, [xc, oc, n]() mutable {
            if (!oc.has_grad() || !xc.requires_grad()) return;
            const double* g = oc.grad().data();
            const double* y = oc.data();
            double* xg = xc.grad_data();
            for (size_t i = 0; i < n; ++i) xg[i] += g[i] * y[i] * (1.0 - y[i]);
        });
    }
    return out;
}

Tensor relu(Tape* tape, const Tensor& x) {
    Tensor out = make_output(x.shape(), wants_grad(tape, {&x}));
    const size_t n = x.size();
    const double* xp = x.data();
    double* yp = out.data();
    // x < 0 (not x > 0) so that NaN falls through to the loss-side abort
    // instead of being silently zeroed.
    for (size_t i = 0; i < n; ++i) yp[i] = xp[i] < 0.0 ? 0.0 : xp[i];
    if (out.requires_grad()) {
        Tensor xc = x, oc = out;
        tape->record(out, [xc, oc, n]() mutable {
            if (!oc.has_grad() || !xc.requires_grad()) return;
            const double* g = oc.grad().data();
            const double* xv = xc.data();
            double* xg = xc.grad_data();
            for (size_t i = 0; i < n; ++i)
                if (xv[i] > 0.0) xg[i] += g[i];
        });
    }
    return out;
}

Tensor dropout(Tape* tape, const Tensor& x, double rate, bool training, SeededRng& rng) {
    if (rate < 0.0 || rate >= 1.0)
        throw ConfigError("dropout rate must be in [0, 1), got " + std::to_string(rate));
    if (!training) return x;

    const size_t n = x.size();
    const double keep_scale = 1.0 / (1.0 - rate);
    auto mask = std::make_shared<std::vector<double>>(n);
    Tensor out = make_output(x.shape(), wants_grad(tape, {&x}));
    const double* xp = x.data();
    double* yp = out.data();
    double* mp = mask->data();
    for (size_t i = 0; i < n; ++i) {
        const double m = rng.uniform01() < rate ? 0.0 : keep_scale;
        mp[i] = m;
        yp[i] = xp[i] * m;
    }
    if (out.requires_grad()) {
        Tensor xc = x, oc = out;
        tape->record(out, [xc, oc, mask, n]() mutable {
            if (!oc.has_grad() || !xc.requires_grad()) return;
            const double* g = oc.grad().data();
            double* xg = xc.grad_data();
            for (size_t i = 0; i < n; ++i) xg[i] += g[i] * (*mask)[i];
        });
    }
    return out;
}

Tensor softmax(const Tensor& logits) {
    if (logits.rank() != 2) throw ShapeError("softmax: expected [B, C]");
    const size_t B = logits.dim(0), C = logits.dim(1);
    Tensor out(logits.shape());
    for (size_t r = 0; r < B; ++r) {
        const double* z = logits.data() + r * C;
        double* p = out.data() + r * C;
        double m = z[0];
        for (size_t c = 1; c < C; ++c) m = std::max(m, z[c]);
        double s = 0.0;
        for (size_t c = 0; c < C; ++c) {
            p[c] = std::exp(z[c] - m);
            s += p[c];
        }
        for (size_t c = 0; c < C; ++c) p[c] /= s;
    }
    return out;
}

Tensor softmax_cross_entropy(Tape* tape, const Tensor& logits, const std::vector<int>& labels) {
    if (logits.rank() != 2) throw ShapeError("softmax_cross_entropy: expected logits[B, C]");
    const size_t B = logits.dim(0), C = logits.dim(1);
    if (labels.size() != B)
        throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                         " labels for batch of " + std::to_string(B));
    for (int y : labels)
        if (y < 0 || (size_t)y >= C)
            throw DataError("label " + std::to_string(y) + " outside [0, " + std::to_string(C) +
                            ")");

    auto probs = std::make_shared<std::vector<double>>(B * C);
    double total = 0.0;
    for (size_t r = 0; r < B; ++r) {
        const double* z = logits.data() + r * C;
        double* p = probs->data() + r * C;
        double m = z[0];
        for (size_t c = 1; c < C; ++c) m = std::max(m, z[c]);
        double s = 0.0;
        for (size_t c = 0; c < C; ++c) {
            p[c] = std::exp(z[c] - m);
            s += p[c];
        }
        const double lse = m + std::log(s);
        for (size_t c = 0; c < C; ++c) p[c] /= s;
        total += lse - z[labels[r]];
    }

    Tensor out = make_output(Shape{}, wants_grad(tape, {&logits}));
    out.data()[0] = total / (double)B;
    maybe_check(out, "softmax_cross_entropy");
    if (out.requires_grad()) {
        Tensor lc = logits, oc = out;
        auto lab = std::make_shared<std::vector<int>>(labels);
        tape->record(out, [lc, oc, probs, lab, B, C]() mutable {
            if (!oc.has_grad() || !lc.requires_grad()) return;
            const double up = oc.grad()[0] / (double)B;
            double* lg = lc.grad_data();
            for (size_t r = 0; r < B; ++r) {
                const double* p = probs->data() + r * C;
                double* grow = lg + r * C;
                const size_t y = (size_t)(*lab)[r];
                for (size_t c = 0; c < C; ++c) grow[c] += up * (p[c] - (c == y ? 1.0 : 0.0));
            }
        });
    }
    return out;
}

Tensor gradient_reversal(Tape* tape, const Tensor& x, double lambda) {
    if (lambda < 0.0) throw UsageError("gradient_reversal: lambda must be >= 0");
    Tensor out = make_output(x.shape(), wants_grad(tape, {&x}));
    std::memcpy(out.data(), x.data(), x.size() * sizeof(double));
    if (out.requires_grad()) {
        Tensor xc = x, oc = out;
        tape->record(out, [xc, oc, lambda]() mutable {
            if (!oc.has_grad() || !xc.requires_grad()) return;
            axpy_grad(xc, -lambda, oc.grad().data());
        });
    }
    return out;
}

Tensor reshape(Tape* tape, const Tensor& x, Shape shape) {
    size_t n = 1;
    for (size_t d : shape) n *= d;
    if (n != x.size())
        throw ShapeError("reshape: size " + std::to_string(x.size()) + " -> " +
                         std::to_string(n));
    Tensor out = make_output(std::move(shape), wants_grad(tape, {&x}));
    std::memcpy(out.data(), x.data(), x.size() * sizeof(double));
    if (out.requires_grad()) {
        Tensor xc = x, oc = out;
        tape->record(out, [xc, oc]() mutable {
            if (!oc.has_grad() || !xc.requires_grad()) return;
            axpy_grad(xc, 1.0, oc.grad().data());
        });
    }
    return out;
}

Tensor concat_rows(Tape* tape, const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(1))
        throw ShapeError("concat_rows: expected [Ra, D] and [Rb, D]");
    const size_t ra = a.dim(0), rb = b.dim(0), D = a.dim(1);
    Tensor out = make_output({ra + rb, D}, wants_grad(tape, {&a, &b}));
    std::memcpy(out.data(), a.data(), ra * D * sizeof(double));
    std::memcpy(out.data() + ra * D, b.data(), rb * D * sizeof(double));
    if (out.requires_grad()) {
        Tensor ac = a, bc = b, oc = out;
        tape->record(out, [ac, bc, oc, ra, rb, D]() mutable {
            if (!oc.has_grad()) return;
            const double* g = oc.grad().data();
            if (ac.requires_grad()) {
                double* ag = ac.grad_data();
                for (size_t i = 0; i < ra * D; ++i) ag[i] += g[i];
            }
            if (bc.requires_grad()) {
                double* bg = bc.grad_data();
                const double* gb = g + ra * D;
                for (size_t i = 0; i < rb * D; ++i) bg[i] += gb[i];
            }
        });
    }
    return out;
}

Tensor add(Tape* tape, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) throw ShapeError("add: shape mismatch");
    Tensor out = make_output(a.shape(), wants_grad(tape, {&a, &b}));
    const size_t n = a.size();
    for (size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] + b.data()[i];
    if (out.requires_grad()) {
        Tensor ac = a, bc = b, oc = out;
        tape->record(out, [ac, bc, oc]() mutable {
            if (!oc.has_grad()) return;
            const double* g = oc.grad().data();
            if (ac.requires_grad()) axpy_grad(ac, 1.0, g);
            if (bc.requires_grad()) axpy_grad(bc, 1.0, g);
        });
    }
    return out;
}

Tensor mul(Tape* tape, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) throw ShapeError("mul: shape mismatch");
    Tensor out = make_output(a.shape(), wants_grad(tape, {&a, &b}));
    const size_t n = a.size();
    for (size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] * b.data()[i];
    if (out.requires_grad()) {
        Tensor ac = a, bc = b, oc = out;
        tape->record(out, [ac, bc, oc, n]() mutable {
            if (!oc.has_grad()) return;
            const double* g = oc.grad().data();
            if (ac.requires_grad()) {
                double* ag = ac.grad_data();
                for (size_t i = 0; i < n; ++i) ag[i] += g[i] * bc.data()[i];
            }
            if (bc.requires_grad()) {
                double* bg = bc.grad_data();
                for (size_t i = 0; i < n; ++i) bg[i] += g[i] * ac.data()[i];
            }
        });
    }
    return out;
}

Tensor scale(Tape* tape, const Tensor& x, double alpha) {
    Tensor out = make_output(x.shape(), wants_grad(tape, {&x}));
    const size_t n = x.size();
    for (size_t i = 0; i < n; ++i) out.data()[i] = alpha * x.data()[i];
    if (out.requires_grad()) {
        Tensor xc = x, oc = out;
        tape->record(out, [xc, oc, alpha]() mutable {
            if (!oc.has_grad() || !xc.requires_grad()) return;
            axpy_grad(xc, alpha, oc.grad().data());
        });
    }
    return out;
}

Tensor sum(Tape* tape, const Tensor& x) {
    Tensor out = make_output(Shape{}, wants_grad(tape, {&x}));
    double s = 0.0;
    for (size_t i = 0; i < x.size(); ++i) s += x.data()[i];
    out.data()[0] = s;
    if (out.requires_grad()) {
        Tensor xc = x, oc = out;
        tape->record(out, [xc, oc]() mutable {
            if (!oc.has_grad() || !xc.requires_grad()) return;
            const double g = oc.grad()[0];
            if (g == 0.0) return;
            double* xg = xc.grad_data();
            for (size_t i = 0; i < xc.size(); ++i) xg[i] += g;
        });
    }
    return out;
}

Tensor mean(Tape* tape, const Tensor& x) {
    if (x.size() == 0) throw UsageError("mean of empty tensor");
    Tensor out = make_output(Shape{}, wants_grad(tape, {&x}));
    double s = 0.0;
    for (size_t i = 0; i < x.size(); ++i) s += x.data()[i];
    out.data()[0] = s / (double)x.size();
    if (out.requires_grad()) {
        Tensor xc = x, oc = out;
        tape->record(out, [xc, oc]() mutable {
            if (!oc.has_grad() || !xc.requires_grad()) return;
            const double g = oc.grad()[0] / (double)xc.size();
            if (g == 0.0) return;
            double* xg = xc.grad_data();
            for (size_t i = 0; i < xc.size(); ++i) xg[i] += g;
        });
    }
    return out;
}

Tensor batch_norm_train(Tape* tape, const Tensor& x, const Tensor& gamma, const Tensor& beta,
                        double eps, std::vector<double>* batch_mean,
                        std::vector<double>* batch_var) {
    if (x.rank() != 2) throw ShapeError("batch_norm_train: expected [R, p]");
    const size_t R = x.dim(0), p = x.dim(1);
    if (R < 2) throw TrainingError("batch_norm_train: needs at least 2 rows, got " +
                                   std::to_string(R));
    if (gamma.size() != p || beta.size() != p)
        throw ShapeError("batch_norm_train: gamma/beta length mismatch");

    std::vector<double> mu(p, 0.0), var(p, 0.0);
    for (size_t r = 0; r < R; ++r) {
        const double* row = x.data() + r * p;
        for (size_t j = 0; j < p; ++j) mu[j] += row[j];
    }
    for (size_t j = 0; j < p; ++j) mu[j] /= (double)R;
    for (size_t r = 0; r < R; ++r) {
        const double* row = x.data() + r * p;
        for (size_t j = 0; j < p; ++j) {
            const double d = row[j] - mu[j];
            var[j] += d * d;
        }
    }
    for (size_t j = 0; j < p; ++j) var[j] /= (double)R;

    auto inv_std = std::make_shared<std::vector<double>>(p);
    for (size_t j = 0; j < p; ++j) (*inv_std)[j] = 1.0 / std::sqrt(var[j] + eps);

    auto xhat = std::make_shared<std::vector<double>>(R * p);
    Tensor out = make_output(x.shape(), wants_grad(tape, {&x, &gamma, &beta}));
    for (size_t r = 0; r < R; ++r) {
        const double* row = x.data() + r * p;
        double* h = xhat->data() + r * p;
        double* o = out.data() + r * p;
        for (size_t j = 0; j < p; ++j) {
            h[j] = (row[j] - mu[j]) * (*inv_std)[j];
            o[j] = gamma.data()[j] * h[j] + beta.data()[j];
        }
    }
    maybe_check(out, "batch_norm_train");

    if (batch_mean != nullptr) *batch_mean = mu;
    if (batch_var != nullptr) *batch_var = var;

    if (out.requires_grad()) {
        Tensor xc = x, gc = gamma, bc = beta, oc = out;
        tape->record(out, [xc, gc, bc, oc, xhat, inv_std, R, p]() mutable {
            if (!oc.has_grad()) return;
            const double* g = oc.grad().data();
            if (gc.requires_grad()) {
                double* gg = gc.grad_data();
                for (size_t r = 0; r < R; ++r)
                    for (size_t j = 0; j < p; ++j)
                        gg[j] += g[r * p + j] * (*xhat)[r * p + j];
            }
            if (bc.requires_grad()) {
                double* bg = bc.grad_data();
                for (size_t r = 0; r < R; ++r)
                    for (size_t j = 0; j < p; ++j) bg[j] += g[r * p + j];
            }
            if (xc.requires_grad()) {
                std::vector<double> mean_g(p, 0.0), mean_gh(p, 0.0);
                for (size_t r = 0; r < R; ++r)
                    for (size_t j = 0; j < p; ++j) {
                        mean_g[j] += g[r * p + j];
                        mean_gh[j] += g[r * p + j] * (*xhat)[r * p + j];
                    }
                for (size_t j = 0; j < p; ++j) {
                    mean_g[j] /= (double)R;
                    mean_gh[j] /= (double)R;
                }
                double* xg = xc.grad_data();
                for (size_t r = 0; r < R; ++r)
                    for (size_t j = 0; j < p; ++j) {
                        const double t =
                            g[r * p + j] - mean_g[j] - (*xhat)[r * p + j] * mean_gh[j];
                        xg[r * p + j] += gc.data()[j] * (*inv_std)[j] * t;
                    }
            }
        });
    }
    return out;
}

Tensor batch_norm_eval(Tape* tape, const Tensor& x, const Tensor& gamma, const Tensor& beta,
                       const std::vector<double>& mean, const std::vector<double>& var,
                       double eps) {
    if (x.rank() != 2) throw ShapeError("batch_norm_eval: expected [R, p]");
    const size_t R = x.dim(0), p = x.dim(1);
    if (gamma.size() != p || beta.size() != p || mean.size() != p || var.size() != p)
        throw ShapeError("batch_norm_eval: statistics length mismatch");

    auto inv_std = std::make_shared<std::vector<double>>(p);
    for (size_t j = 0; j < p; ++j) (*inv_std)[j] = 1.0 / std::sqrt(var[j] + eps);
    auto mu = std::make_shared<std::vector<double>>(mean);

    Tensor out = make_output(x.shape(), wants_grad(tape, {&x, &gamma, &beta}));
    for (size_t r = 0; r < R; ++r) {
        const double* row = x.data() + r * p;
        double* o = out.data() + r * p;
        for (size_t j = 0; j < p; ++j)
            o[j] = gamma.data()[j] * (row[j] - (*mu)[j]) * (*inv_std)[j] + beta.data()[j];
    }
    maybe_check(out, "batch_norm_eval");

    if (out.requires_grad()) {
        Tensor xc = x, gc = gamma, bc = beta, oc = out;
        tape->record(out, [xc, gc, bc, oc, mu, inv_std, R, p]() mutable {
            if (!oc.has_grad()) return;
            const double* g = oc.grad().data();
            if (gc.requires_grad()) {
                double* gg = gc.grad_data();
                for (size_t r = 0; r < R; ++r)
                    for (size_t j = 0; j < p; ++j)
                        gg[j] += g[r * p + j] * (xc.data()[r * p + j] - (*mu)[j]) * (*inv_std)[j];
            }
            if (bc.requires_grad()) {
                double* bg = bc.grad_data();
                for (size_t r = 0; r < R; ++r)
                    for (size_t j = 0; j < p; ++j) bg[j] += g[r * p + j];
            }
            if (xc.requires_grad()) {
                double* xg = xc.grad_data();
                for (size_t r = 0; r < R; ++r)
                    for (size_t j = 0; j < p; ++j)
                        xg[r * p + j] += g[r * p + j] * gc.data()[j] * (*inv_std)[j];
            }
        });
    }
    return out;
}

}  // namespace dafd
