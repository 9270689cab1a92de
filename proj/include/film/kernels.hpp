#pragma once

// Dense kernels used by the autodiff graph. Every kernel exists twice:
//   serial::   straightforward loops, kept as the reference for tests
//   parallel:: OpenMP row-parallel versions used by the graph
// Parallel kernels assign each output row to exactly one thread and sum in a
// fixed order, so results do not depend on the thread count.

#include <cstddef>

namespace film::kernels {

/// Row-major matrix multiply C = op(A) * op(B) (+ C when accumulate).
/// op(A) is M x K, op(B) is K x N. Transposed operands are stored as their
/// untransposed shape (A stored K x M when trans_a).
struct GemmShape {
    std::size_t m = 0, n = 0, k = 0;
    bool trans_a = false;
    bool trans_b = false;
};

namespace serial {

template <typename T>
void gemm(const GemmShape& s, const T* a, const T* b, T* c, bool accumulate);

template <typename T>
void softmax_rows(const T* x, T* y, std::size_t rows, std::size_t cols, T inv_temperature);

template <typename T>
void layer_norm_rows(const T* x, const T* gain, const T* bias, T* y, T* mean, T* rstd,
                     std::size_t rows, std::size_t cols, T eps);

template <typename T>
void gelu(const T* x, T* y, std::size_t n);

}  // namespace serial

namespace parallel {

template <typename T>
void gemm(const GemmShape& s, const T* a, const T* b, T* c, bool accumulate);

template <typename T>
void softmax_rows(const T* x, T* y, std::size_t rows, std::size_t cols, T inv_temperature);

template <typename T>
void layer_norm_rows(const T* x, const T* gain, const T* bias, T* y, T* mean, T* rstd,
                     std::size_t rows, std::size_t cols, T eps);

template <typename T>
void gelu(const T* x, T* y, std::size_t n);

/// Number of OpenMP threads kernels will use (1 when built without OpenMP).
int max_threads();
void set_threads(int n);

}  // namespace parallel

}  // namespace film::kernels
