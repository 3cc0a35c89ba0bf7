#pragma once

#include <cstddef>

namespace dafd::blas {

// Row-major GEMM: C = alpha * op(A) * op(B) + beta * C.
// op(A) is M x K, op(B) is K x N, C is M x N, leading dimensions are the
// row strides of the stored (untransposed) matrices.
//
// Dispatches to OpenBLAS (loaded at runtime, pinned to a single thread so
// results are reproducible) and falls back to a blocked native kernel when
// no BLAS is installed. Both paths use a fixed reduction order, so a given
// machine always produces bit-identical results.
void dgemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha, const double* a,
           int lda, const double* b, int ldb, double beta, double* c, int ldc);

// True when the OpenBLAS backend was found and loaded.
bool using_openblas();

}  // namespace dafd::blas
