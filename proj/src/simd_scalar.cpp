#include <cmath>

#include "simd_detail.hpp"
#include "vollab/simd.hpp"

// Scalar reference kernels. These define the semantics the SIMD variants are
// tested against; keep them simple and obviously correct.

namespace vollab::simd {
namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void gemv_scalar(const double* a, std::size_t rows, std::size_t cols, const double* x,
                 const double* bias, double* y) {
    for (std::size_t i = 0; i < rows; ++i) {
        double acc = bias ? bias[i] : 0.0;
        const double* row = a + i * cols;
        for (std::size_t j = 0; j < cols; ++j) acc += row[j] * x[j];
        y[i] = acc;
    }
}

void gemv_t_scalar(const double* a, std::size_t rows, std::size_t cols, const double* x,
                   double* y) {
    for (std::size_t j = 0; j < cols; ++j) y[j] = 0.0;
    for (std::size_t i = 0; i < rows; ++i) {
        const double* row = a + i * cols;
        double xi = x[i];
        for (std::size_t j = 0; j < cols; ++j) y[j] += xi * row[j];
    }
}

void ger_scalar(double* a, std::size_t rows, std::size_t cols, double alpha, const double* x,
                const double* y) {
    for (std::size_t i = 0; i < rows; ++i) {
        double s = alpha * x[i];
        double* row = a + i * cols;
        for (std::size_t j = 0; j < cols; ++j) row[j] += s * y[j];
    }
}

void exp_v_scalar(const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = std::exp(x[i]);
}

void elu_v_scalar(const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = x[i] >= 0.0 ? x[i] : std::expm1(x[i]);
}

void norminv_v_scalar(const double* u, double* z, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) z[i] = detail::norminv_one(u[i]);
}

double reduce_sum_scalar(const double* x, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += x[i];
    return acc;
}

double centered_dot_scalar(const double* x, const double* y, double mx, double my,
                           std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += (x[i] - mx) * (y[i] - my);
    return acc;
}

void tri_matvec8_scalar(const double* lower, std::size_t dim, const double* u, double* out) {
    for (std::size_t i = 0; i < dim; ++i) {
        double acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
        const double* lrow = lower + i * dim;
        for (std::size_t j = 0; j <= i; ++j) {
            double lij = lrow[j];
            const double* urow = u + j * 8;
            for (int r = 0; r < 8; ++r) acc[r] += lij * urow[r];
        }
        double* orow = out + i * 8;
        for (int r = 0; r < 8; ++r) orow[r] = acc[r];
    }
}

void log_euler_step_scalar(double* log_s, const double* v, const double* dw, double dt,
                           std::size_t n) {
    for (std::size_t i = 0; i < n; ++i)
        log_s[i] += -0.5 * v[i] * dt + std::sqrt(v[i]) * dw[i];
}

void running_min_scalar(double* m, const double* x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i)
        if (x[i] < m[i]) m[i] = x[i];
}

}  // namespace

namespace detail {
const KernelTable scalar_table = {
    dot_scalar,         axpy_scalar,         gemv_scalar,  gemv_t_scalar,
    ger_scalar,         exp_v_scalar,        elu_v_scalar, norminv_v_scalar,
    reduce_sum_scalar,  centered_dot_scalar, tri_matvec8_scalar,
    log_euler_step_scalar, running_min_scalar,
};
}  // namespace detail

}  // namespace vollab::simd
