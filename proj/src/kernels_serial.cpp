#include "film/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace film::kernels::serial {

template <typename T>
void gemm(const GemmShape& s, const T* a, const T* b, T* c, bool accumulate) {
    for (std::size_t i = 0; i < s.m; ++i) {
        for (std::size_t j = 0; j < s.n; ++j) {
            T acc = accumulate ? c[i * s.n + j] : T(0);
            for (std::size_t p = 0; p < s.k; ++p) {
                const T av = s.trans_a ? a[p * s.m + i] : a[i * s.k + p];
                const T bv = s.trans_b ? b[j * s.k + p] : b[p * s.n + j];
                acc += av * bv;
            }
            c[i * s.n + j] = acc;
        }
    }
}

template <typename T>
void softmax_rows(const T* x, T* y, std::size_t rows, std::size_t cols, T inv_temperature) {
    for (std::size_t r = 0; r < rows; ++r) {
        const T* xr = x + r * cols;
        T* yr = y + r * cols;
        T mx = xr[0];
        for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, xr[j]);
        T sum = 0;
        for (std::size_t j = 0; j < cols; ++j) {
            yr[j] = std::exp((xr[j] - mx) * inv_temperature);
            sum += yr[j];
        }
        for (std::size_t j = 0; j < cols; ++j) yr[j] /= sum;
    }
}

template <typename T>
void layer_norm_rows(const T* x, const T* gain, const T* bias, T* y, T* mean, T* rstd,
                     std::size_t rows, std::size_t cols, T eps) {
    for (std::size_t r = 0; r < rows; ++r) {
        const T* xr = x + r * cols;
        T mu = 0;
        for (std::size_t j = 0; j < cols; ++j) mu += xr[j];
        mu /= static_cast<T>(cols);
        T var = 0;
        for (std::size_t j = 0; j < cols; ++j) var += (xr[j] - mu) * (xr[j] - mu);
        var /= static_cast<T>(cols);
        const T rs = T(1) / std::sqrt(var + eps);
        mean[r] = mu;
        rstd[r] = rs;
        for (std::size_t j = 0; j < cols; ++j) y[r * cols + j] = (xr[j] - mu) * rs * gain[j] + bias[j];
    }
}

template <typename T>
void gelu(const T* x, T* y, std::size_t n) {
    const T c = static_cast<T>(std::sqrt(2.0 / std::numbers::pi));
    for (std::size_t i = 0; i < n; ++i) {
        const T v = x[i];
        y[i] = T(0.5) * v * (T(1) + std::tanh(c * (v + T(0.044715) * v * v * v)));
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

}  // namespace film::kernels::serial
