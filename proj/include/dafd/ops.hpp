#pragma once

#include <vector>

#include "dafd/rng.hpp"
#include "dafd/tensor.hpp"

namespace dafd {

// Differentiable operations. Every op takes the tape first; passing
// nullptr runs forward-only (inference). An op records a backward rule
// only when a tape is given and at least one input requires gradients.
//
// Backward rules accumulate (+=) into input grad buffers and only into
// tensors with requires_grad set. A rule whose output never received a
// gradient does nothing, so branches cut off by an exact-zero weight do
// not disturb the rest of the graph.

// y = x @ w + b. x: [B, Din], w: [Din, Dout], b: [Dout].
Tensor dense(Tape* tape, const Tensor& x, const Tensor& w, const Tensor& b);

// Same-length 1-D convolution, stride 1, zero padding, odd kernel width.
// x: [B, L, Cin], kernel: [K, Cin, Cout], bias: [Cout] -> [B, L, Cout].
Tensor conv1d(Tape* tape, const Tensor& x, const Tensor& kernel, const Tensor& bias);

Tensor sigmoid(Tape* tape, const Tensor& x);
Tensor relu(Tape* tape, const Tensor& x);

// Inverted dropout: in training mode each element is zeroed with
// probability `rate` and survivors are scaled by 1/(1-rate); in eval mode
// the input tensor is returned unchanged. 0 <= rate < 1.
Tensor dropout(Tape* tape, const Tensor& x, double rate, bool training, SeededRng& rng);

// Mean over the batch of -log softmax(logits)[label]. logits: [B, C].
Tensor softmax_cross_entropy(Tape* tape, const Tensor& logits, const std::vector<int>& labels);

// Row-wise softmax probabilities (forward only, for prediction).
Tensor softmax(const Tensor& logits);

// Identity forward; backward scales the upstream gradient by -lambda.
Tensor gradient_reversal(Tape* tape, const Tensor& x, double lambda);

// Same data, new shape (sizes must agree).
Tensor reshape(Tape* tape, const Tensor& x, Shape shape);

// Stack two row-major matrices with equal trailing dimensions.
Tensor concat_rows(Tape* tape, const Tensor& a, const Tensor& b);

Tensor add(Tape* tape, const Tensor& a, const Tensor& b);  // same shape
Tensor mul(Tape* tape, const Tensor& a, const Tensor& b);  // elementwise
Tensor scale(Tape* tape, const Tensor& x, double alpha);
Tensor sum(Tape* tape, const Tensor& x);   // scalar
Tensor mean(Tape* tape, const Tensor& x);  // scalar

// Batch normalization over the leading dimension of a [R, p] view.
// Training mode normalizes by the batch statistics (population variance)
// and reports them through *batch_mean / *batch_var so the caller can
// maintain running statistics outside the graph. R >= 2.
Tensor batch_norm_train(Tape* tape, const Tensor& x, const Tensor& gamma, const Tensor& beta,
                        double eps, std::vector<double>* batch_mean,
                        std::vector<double>* batch_var);

// Eval mode: normalize with the provided (running) statistics.
Tensor batch_norm_eval(Tape* tape, const Tensor& x, const Tensor& gamma, const Tensor& beta,
                       const std::vector<double>& mean, const std::vector<double>& var,
                       double eps);

}  // namespace dafd
