#pragma once

#include <cstddef>
#include <string>

// Runtime-dispatched arithmetic kernels. Every kernel has a scalar reference
// implementation and (on x86-64) an AVX2+FMA variant; the active backend is
// chosen once at startup from cpuid, overridable via the VOLLAB_SIMD
// environment variable ("scalar" or "avx2") or set_backend(). Scalar and SIMD
// variants are equivalence-tested against each other in tests/test_simd.cpp.

namespace vollab::simd {

enum class Backend { scalar, avx2 };

Backend active_backend();
/// Throws NumericalError if the requested backend is unsupported on this CPU.
void set_backend(Backend b);
const char* backend_name(Backend b);
bool avx2_supported();

struct KernelTable {
    double (*dot)(const double* a, const double* b, std::size_t n);
    void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
    // y = A x + bias, A row-major rows x cols; bias may be null.
    void (*gemv)(const double* a, std::size_t rows, std::size_t cols, const double* x,
                 const double* bias, double* y);
    // y = A^T x, A row-major rows x cols, y length cols (accumulated from zero).
    void (*gemv_t)(const double* a, std::size_t rows, std::size_t cols, const double* x,
                   double* y);
    // A += alpha * x y^T.
    void (*ger)(double* a, std::size_t rows, std::size_t cols, double alpha, const double* x,
                const double* y);
    void (*exp_v)(const double* x, double* y, std::size_t n);
    // ELU with alpha = 1: x for x >= 0, e^x - 1 otherwise.
    void (*elu_v)(const double* x, double* y, std::size_t n);
    // Inverse standard normal CDF on (0,1) uniforms (Acklam rational
    // approximation, abs error < 2e-9; adequate for Monte Carlo sampling).
    void (*norminv_v)(const double* u, double* z, std::size_t n);
    double (*reduce_sum)(const double* x, std::size_t n);
    // sum_i (x[i]-mx)*(y[i]-my); pass x==y for a centered sum of squares.
    double (*centered_dot)(const double* x, const double* y, double mx, double my,
                           std::size_t n);
    // out[i][0..8) = sum_{j<=i} L[i][j] * u[j][0..8) for dense row-major
    // lower-triangular L (entries above the diagonal are ignored).
    void (*tri_matvec8)(const double* lower, std::size_t dim, const double* u, double* out);
    // log_s[i] += -0.5*v[i]*dt + sqrt(v[i])*dw[i]
    void (*log_euler_step)(double* log_s, const double* v, const double* dw, double dt,
                           std::size_t n);
    void (*running_min)(double* m, const double* x, std::size_t n);
};

const KernelTable& kernels();

inline double dot(const double* a, const double* b, std::size_t n) {
    return kernels().dot(a, b, n);
}
inline void axpy(double alpha, const double* x, double* y, std::size_t n) {
    kernels().axpy(alpha, x, y, n);
}
inline void gemv(const double* a, std::size_t rows, std::size_t cols, const double* x,
                 const double* bias, double* y) {
    kernels().gemv(a, rows, cols, x, bias, y);
}
inline void gemv_t(const double* a, std::size_t rows, std::size_t cols, const double* x,
                   double* y) {
    kernels().gemv_t(a, rows, cols, x, y);
}
inline void ger(double* a, std::size_t rows, std::size_t cols, double alpha, const double* x,
                const double* y) {
    kernels().ger(a, rows, cols, alpha, x, y);
}
inline void exp_v(const double* x, double* y, std::size_t n) { kernels().exp_v(x, y, n); }
inline void elu_v(const double* x, double* y, std::size_t n) { kernels().elu_v(x, y, n); }
inline void norminv_v(const double* u, double* z, std::size_t n) {
    kernels().norminv_v(u, z, n);
}
inline double reduce_sum(const double* x, std::size_t n) { return kernels().reduce_sum(x, n); }
inline double centered_dot(const double* x, const double* y, double mx, double my,
                           std::size_t n) {
    return kernels().centered_dot(x, y, mx, my, n);
}
inline void tri_matvec8(const double* lower, std::size_t dim, const double* u, double* out) {
    kernels().tri_matvec8(lower, dim, u, out);
}
inline void log_euler_step(double* log_s, const double* v, const double* dw, double dt,
                           std::size_t n) {
    kernels().log_euler_step(log_s, v, dw, dt, n);
}
inline void running_min(double* m, const double* x, std::size_t n) {
    kernels().running_min(m, x, n);
}

namespace detail {
extern const KernelTable scalar_table;
// Null when the build or CPU lacks AVX2.
const KernelTable* avx2_table();
}  // namespace detail

}  // namespace vollab::simd
