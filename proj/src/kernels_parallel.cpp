#include "film/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace film::kernels::parallel {

namespace {

// Below this many multiply-adds the fork/join overhead dominates.
constexpr std::size_t kParallelWork = 1u << 14;

using Index = std::int64_t;

}  // namespace

int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

void set_threads(int n) {
#ifdef _OPENMP
    if (n > 0) omp_set_num_threads(n);
#else
    (void)n;
#endif
}

template <typename T>
void gemm(const GemmShape& s, const T* a, const T* b, T* c, bool accumulate) {
    const Index m = static_cast<Index>(s.m);
    const std::size_t n = s.n, k = s.k;
    const bool big = s.m * s.n * s.k >= kParallelWork;

    if (!s.trans_a && !s.trans_b) {
#pragma omp parallel for schedule(static) if (big)
        for (Index i = 0; i < m; ++i) {
            T* ci = c + i * n;
            if (!accumulate) std::fill(ci, ci + n, T(0));
            const T* ai = a + i * k;
            for (std::size_t p = 0; p < k; ++p) {
                const T av = ai[p];
                const T* bp = b + p * n;
                for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
            }
        }
    } else if (!s.trans_a && s.trans_b) {
#pragma omp parallel for schedule(static) if (big)
        for (Index i = 0; i < m; ++i) {
            const T* ai = a + i * k;
            T* ci = c + i * n;
            for (std::size_t j = 0; j < n; ++j) {
                const T* bj = b + j * k;
                T acc = 0;
                for (std::size_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
                ci[j] = accumulate ? ci[j] + acc : acc;
            }
        }
    } else if (s.trans_a && !s.trans_b) {
#pragma omp parallel for schedule(static) if (big)
        for (Index i = 0; i < m; ++i) {
            T* ci = c + i * n;
            if (!accumulate) std::fill(ci, ci + n, T(0));
            for (std::size_t p = 0; p < k; ++p) {
                const T av = a[p * s.m + i];
                if (av == T(0)) continue;
                const T* bp = b + p * n;
                for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
            }
        }
    } else {
#pragma omp parallel for schedule(static) if (big)
        for (Index i = 0; i < m; ++i) {
            T* ci = c + i * n;
            for (std::size_t j = 0; j < n; ++j) {
                T acc = 0;
                for (std::size_t p = 0; p < k; ++p) acc += a[p * s.m + i] * b[j * k + p];
                ci[j] = accumulate ? ci[j] + acc : acc;
            }
        }
    }
}

template <typename T>
void softmax_rows(const T* x, T* y, std::size_t rows, std::size_t cols, T inv_temperature) {
    const bool big = rows * cols >= kParallelWork;
#pragma omp parallel for schedule(static) if (big)
    for (Index r = 0; r < static_cast<Index>(rows); ++r) {
        const T* xr = x + r * cols;
        T* yr = y + r * cols;
        const T mx = *std::max_element(xr, xr + cols);
        T sum = 0;
        for (std::size_t j = 0; j < cols; ++j) {
            const T e = std::exp((xr[j] - mx) * inv_temperature);
            yr[j] = e;
            sum += e;
        }
        const T inv = T(1) / sum;
        for (std::size_t j = 0; j < cols; ++j) yr[j] *= inv;
    }
}

template <typename T>
void layer_norm_rows(const T* x, const T* gain, const T* bias, T* y, T* mean, T* rstd,
                     std::size_t rows, std::size_t cols, T eps) {
    const bool big = rows * cols >= kParallelWork;
#pragma omp parallel for schedule(static) if (big)
    for (Index r = 0; r < static_cast<Index>(rows); ++r) {
        const T* xr = x + r * cols;
        T* yr = y + r * cols;
        T mu = 0;
        for (std::size_t j = 0; j < cols; ++j) mu += xr[j];
        mu /= static_cast<T>(cols);
        T var = 0;
        for (std::size_t j = 0; j < cols; ++j) {
            const T d = xr[j] - mu;
            var += d * d;
        }
        var /= static_cast<T>(cols);
        const T rs = T(1) / std::sqrt(var + eps);
        mean[r] = mu;
        rstd[r] = rs;
        for (std::size_t j = 0; j < cols; ++j) yr[j] = (xr[j] - mu) * rs * gain[j] + bias[j];
    }
}

template <typename T>
void gelu(const T* x, T* y, std::size_t n) {
    const T c = static_cast<T>(std::sqrt(2.0 / std::numbers::pi));
    const bool big = n >= kParallelWork;
#pragma omp parallel for schedule(static) if (big)
    for (Index i = 0; i < static_cast<Index>(n); ++i) {
        const T v = x[i];
        const T inner = c * (v + T(0.044715) * v * v * v);
        y[i] = T(0.5) * v * (T(1) + std::tanh(inner));
    }
}

#define FILM_INSTANTIATE(T)                                                                  \
    template void gemm<T>(const GemmShape&, const T*, const T*, T*, bool);                 \
    template void softmax_rows<T>(const T*, T*, std::size_t, std::size_t, T);              \
    template void layer_norm_rows<T>(const T*, const T*, const T*, T*, T*, T*, std::size_t, \
                                     std::size_t, T);                                      \
    template void gelu<T>(const T*, T*, std::size_t);

FILM_INSTANTIATE(float)
FILM_INSTANTIATE(double)
#undef FILM_INSTANTIATE

}  // namespace film::kernels::parallel
