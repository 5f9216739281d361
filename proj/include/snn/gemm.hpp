#pragma once

// Thin typed wrapper over cblas_{s,d}gemm, row-major. All matrix products in
// the tensor ops (dense layers, im2col convolution, their backward passes)
// funnel through here.

#include <cstddef>

#include <cblas.h>

namespace snn {

// C = alpha * op(A) * op(B) + beta * C, row-major.
// op(A) is m x k, op(B) is k x n, C is m x n.
inline void gemm(bool trans_a, bool trans_b, size_t m, size_t n, size_t k,
                 float alpha, const float* a, size_t lda, const float* b,
                 size_t ldb, float beta, float* c, size_t ldc) {
  cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, static_cast<int>(m),
              static_cast<int>(n), static_cast<int>(k), alpha, a,
              static_cast<int>(lda), b, static_cast<int>(ldb), beta, c,
              static_cast<int>(ldc));
}

inline void gemm(bool trans_a, bool trans_b, size_t m, size_t n, size_t k,
                 double alpha, const double* a, size_t lda, const double* b,
                 size_t ldb, double beta, double* c, size_t ldc) {
  cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, static_cast<int>(m),
              static_cast<int>(n), static_cast<int>(k), alpha, a,
              static_cast<int>(lda), b, static_cast<int>(ldb), beta, c,
              static_cast<int>(ldc));
}

}  // namespace snn
