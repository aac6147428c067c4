#include "simd_detail.hpp"
#include "vollab/simd.hpp"

// AVX2+FMA kernel variants. Each function carries a target attribute so the
// translation unit itself builds without -mavx2; the dispatcher only installs
// this table after a cpuid check.

#if defined(__x86_64__) || defined(__i386__)

#include <immintrin.h>

#include <cmath>
#include <cstring>

#define VOLLAB_AVX2 __attribute__((target("avx2,fma")))

namespace vollab::simd {
namespace {

VOLLAB_AVX2 double hsum(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d shuf = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, shuf));
}

VOLLAB_AVX2 double dot_avx2(const double* a, const double* b, std::size_t n) {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
        acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
    }
    for (; i + 4 <= n; i += 4)
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    double acc = hsum(_mm256_add_pd(acc0, acc1));
    for (; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

VOLLAB_AVX2 void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
    __m256d va = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d vy = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i));
        _mm256_storeu_pd(y + i, vy);
    }
    for (; i < n; ++i) y[i] += alpha * x[i];
}

VOLLAB_AVX2 void gemv_avx2(const double* a, std::size_t rows, std::size_t cols,
                           const double* x, const double* bias, double* y) {
    for (std::size_t i = 0; i < rows; ++i) {
        double acc = dot_avx2(a + i * cols, x, cols);
        y[i] = bias ? acc + bias[i] : acc;
    }
}

VOLLAB_AVX2 void gemv_t_avx2(const double* a, std::size_t rows, std::size_t cols,
                             const double* x, double* y) {
    for (std::size_t j = 0; j < cols; ++j) y[j] = 0.0;
    for (std::size_t i = 0; i < rows; ++i) {
        const double* row = a + i * cols;
        __m256d xi = _mm256_set1_pd(x[i]);
        std::size_t j = 0;
        for (; j + 4 <= cols; j += 4) {
            __m256d vy = _mm256_fmadd_pd(xi, _mm256_loadu_pd(row + j), _mm256_loadu_pd(y + j));
            _mm256_storeu_pd(y + j, vy);
        }
        for (; j < cols; ++j) y[j] += x[i] * row[j];
    }
}

VOLLAB_AVX2 void ger_avx2(double* a, std::size_t rows, std::size_t cols, double alpha,
                          const double* x, const double* y) {
    for (std::size_t i = 0; i < rows; ++i) {
        double s = alpha * x[i];
        __m256d vs = _mm256_set1_pd(s);
        double* row = a + i * cols;
        std::size_t j = 0;
        for (; j + 4 <= cols; j += 4) {
            __m256d vr = _mm256_fmadd_pd(vs, _mm256_loadu_pd(y + j), _mm256_loadu_pd(row + j));
            _mm256_storeu_pd(row + j, vr);
        }
        for (; j < cols; ++j) row[j] += s * y[j];
    }
}

// exp on 4 lanes; Cephes-style rational on the reduced argument, two-step
// power-of-two scaling so subnormal results stay representable.
VOLLAB_AVX2 __m256d exp4(__m256d x) {
    const __m256d log2e = _mm256_set1_pd(1.4426950408889634073599);
    const __m256d c1 = _mm256_set1_pd(6.93145751953125e-1);
    const __m256d c2 = _mm256_set1_pd(1.42860682030941723212e-6);
    const __m256d p0 = _mm256_set1_pd(1.26177193074810590878e-4);
    const __m256d p1 = _mm256_set1_pd(3.02994407707441961300e-2);
    const __m256d p2 = _mm256_set1_pd(9.99999999999999999910e-1);
    const __m256d q0 = _mm256_set1_pd(3.00198505138664455042e-6);
    const __m256d q1 = _mm256_set1_pd(2.52448340349684104192e-3);
    const __m256d q2 = _mm256_set1_pd(2.27265548208155028766e-1);
    const __m256d q3 = _mm256_set1_pd(2.00000000000000000005e0);
    const __m256d one = _mm256_set1_pd(1.0);
    const __m256d overflow = _mm256_set1_pd(709.782712893384);
    const __m256d underflow = _mm256_set1_pd(-745.133219101941);

    __m256d nan_mask = _mm256_cmp_pd(x, x, _CMP_UNORD_Q);
    __m256d over_mask = _mm256_cmp_pd(x, overflow, _CMP_GT_OQ);
    __m256d under_mask = _mm256_cmp_pd(x, underflow, _CMP_LT_OQ);
    __m256d xc = _mm256_max_pd(_mm256_min_pd(x, overflow), underflow);

    __m256d n = _mm256_round_pd(_mm256_mul_pd(xc, log2e),
                                _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
    __m256d r = _mm256_fnmadd_pd(n, c1, xc);
    r = _mm256_fnmadd_pd(n, c2, r);

    __m256d rr = _mm256_mul_pd(r, r);
    __m256d p = _mm256_fmadd_pd(p0, rr, p1);
    p = _mm256_fmadd_pd(p, rr, p2);
    p = _mm256_mul_pd(p, r);
    __m256d q = _mm256_fmadd_pd(q0, rr, q1);
    q = _mm256_fmadd_pd(q, rr, q2);
    q = _mm256_fmadd_pd(q, rr, q3);
    __m256d e = _mm256_div_pd(p, _mm256_sub_pd(q, p));
    e = _mm256_fmadd_pd(_mm256_set1_pd(2.0), e, one);

    // scale by 2^n = 2^n1 * 2^n2 with n1 = n/2 (truncated), n2 = n - n1
    __m128i ni = _mm256_cvtpd_epi32(n);
    __m128i n1i = _mm_srai_epi32(ni, 1);  // floor(n/2) for even/odd alike is fine here
    __m128i n2i = _mm_sub_epi32(ni, n1i);
    const __m128i bias = _mm_set1_epi32(1023);
    __m256i e1 = _mm256_slli_epi64(_mm256_cvtepi32_epi64(_mm_add_epi32(n1i, bias)), 52);
    __m256i e2 = _mm256_slli_epi64(_mm256_cvtepi32_epi64(_mm_add_epi32(n2i, bias)), 52);
    e = _mm256_mul_pd(e, _mm256_castsi256_pd(e1));
    e = _mm256_mul_pd(e, _mm256_castsi256_pd(e2));

    e = _mm256_blendv_pd(e, _mm256_setzero_pd(), under_mask);
    e = _mm256_blendv_pd(e, _mm256_set1_pd(HUGE_VAL), over_mask);
    e = _mm256_blendv_pd(e, x, nan_mask);
    return e;
}

VOLLAB_AVX2 void exp_v_avx2(const double* x, double* y, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) _mm256_storeu_pd(y + i, exp4(_mm256_loadu_pd(x + i)));
    if (i < n) {
        double in[4] = {0, 0, 0, 0}, out[4];
        std::memcpy(in, x + i, (n - i) * sizeof(double));
        _mm256_storeu_pd(out, exp4(_mm256_loadu_pd(in)));
        std::memcpy(y + i, out, (n - i) * sizeof(double));
    }
}

VOLLAB_AVX2 void elu_v_avx2(const double* x, double* y, std::size_t n) {
    const __m256d zero = _mm256_setzero_pd();
    const __m256d one = _mm256_set1_pd(1.0);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d vx = _mm256_loadu_pd(x + i);
        __m256d em1 = _mm256_sub_pd(exp4(vx), one);
        __m256d mask = _mm256_cmp_pd(vx, zero, _CMP_GE_OQ);
        _mm256_storeu_pd(y + i, _mm256_blendv_pd(em1, vx, mask));
    }
    for (; i < n; ++i) y[i] = x[i] >= 0.0 ? x[i] : std::exp(x[i]) - 1.0;
}

VOLLAB_AVX2 void norminv_v_avx2(const double* u, double* z, std::size_t n) {
    using namespace detail;
    const __m256d half = _mm256_set1_pd(0.5);
    const __m256d plow = _mm256_set1_pd(kNormInvPLow);
    const __m256d phigh = _mm256_set1_pd(1.0 - kNormInvPLow);
    const __m256d one = _mm256_set1_pd(1.0);

    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d vu = _mm256_loadu_pd(u + i);
        __m256d q = _mm256_sub_pd(vu, half);
        __m256d r = _mm256_mul_pd(q, q);
        __m256d num = _mm256_set1_pd(kNormInvA[0]);
        num = _mm256_fmadd_pd(num, r, _mm256_set1_pd(kNormInvA[1]));
        num = _mm256_fmadd_pd(num, r, _mm256_set1_pd(kNormInvA[2]));
        num = _mm256_fmadd_pd(num, r, _mm256_set1_pd(kNormInvA[3]));
        num = _mm256_fmadd_pd(num, r, _mm256_set1_pd(kNormInvA[4]));
        num = _mm256_fmadd_pd(num, r, _mm256_set1_pd(kNormInvA[5]));
        num = _mm256_mul_pd(num, q);
        __m256d den = _mm256_set1_pd(kNormInvB[0]);
        den = _mm256_fmadd_pd(den, r, _mm256_set1_pd(kNormInvB[1]));
        den = _mm256_fmadd_pd(den, r, _mm256_set1_pd(kNormInvB[2]));
        den = _mm256_fmadd_pd(den, r, _mm256_set1_pd(kNormInvB[3]));
        den = _mm256_fmadd_pd(den, r, _mm256_set1_pd(kNormInvB[4]));
        den = _mm256_fmadd_pd(den, r, one);
        __m256d central = _mm256_div_pd(num, den);

        __m256d tail_mask = _mm256_or_pd(_mm256_cmp_pd(vu, plow, _CMP_LT_OQ),
                                         _mm256_cmp_pd(vu, phigh, _CMP_GT_OQ));
        int tails = _mm256_movemask_pd(tail_mask);
        _mm256_storeu_pd(z + i, central);
        if (tails) {
            // read tail inputs from the register: z may alias u (in-place use)
            double ubuf[4];
            _mm256_storeu_pd(ubuf, vu);
            for (int lane = 0; lane < 4; ++lane)
                if (tails & (1 << lane)) z[i + lane] = norminv_one(ubuf[lane]);
        }
    }
    for (; i < n; ++i) z[i] = norminv_one(u[i]);
}

VOLLAB_AVX2 double reduce_sum_avx2(const double* x, std::size_t n) {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        acc0 = _mm256_add_pd(acc0, _mm256_loadu_pd(x + i));
        acc1 = _mm256_add_pd(acc1, _mm256_loadu_pd(x + i + 4));
    }
    for (; i + 4 <= n; i += 4) acc0 = _mm256_add_pd(acc0, _mm256_loadu_pd(x + i));
    double acc = hsum(_mm256_add_pd(acc0, acc1));
    for (; i < n; ++i) acc += x[i];
    return acc;
}

VOLLAB_AVX2 double centered_dot_avx2(const double* x, const double* y, double mx, double my,
                                     std::size_t n) {
    __m256d vmx = _mm256_set1_pd(mx);
    __m256d vmy = _mm256_set1_pd(my);
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d dx = _mm256_sub_pd(_mm256_loadu_pd(x + i), vmx);
        __m256d dy = _mm256_sub_pd(_mm256_loadu_pd(y + i), vmy);
        acc = _mm256_fmadd_pd(dx, dy, acc);
    }
    double s = hsum(acc);
    for (; i < n; ++i) s += (x[i] - mx) * (y[i] - my);
    return s;
}

VOLLAB_AVX2 void tri_matvec8_avx2(const double* lower, std::size_t dim, const double* u,
                                  double* out) {
    for (std::size_t i = 0; i < dim; ++i) {
        __m256d acc0 = _mm256_setzero_pd();
        __m256d acc1 = _mm256_setzero_pd();
        const double* lrow = lower + i * dim;
        for (std::size_t j = 0; j <= i; ++j) {
            __m256d lij = _mm256_set1_pd(lrow[j]);
            acc0 = _mm256_fmadd_pd(lij, _mm256_loadu_pd(u + j * 8), acc0);
            acc1 = _mm256_fmadd_pd(lij, _mm256_loadu_pd(u + j * 8 + 4), acc1);
        }
        _mm256_storeu_pd(out + i * 8, acc0);
        _mm256_storeu_pd(out + i * 8 + 4, acc1);
    }
}

VOLLAB_AVX2 void log_euler_step_avx2(double* log_s, const double* v, const double* dw,
                                     double dt, std::size_t n) {
    const __m256d mhalf_dt = _mm256_set1_pd(-0.5 * dt);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d vv = _mm256_loadu_pd(v + i);
        __m256d vs = _mm256_loadu_pd(log_s + i);
        vs = _mm256_fmadd_pd(mhalf_dt, vv, vs);
        vs = _mm256_fmadd_pd(_mm256_sqrt_pd(vv), _mm256_loadu_pd(dw + i), vs);
        _mm256_storeu_pd(log_s + i, vs);
    }
    for (; i < n; ++i) log_s[i] += -0.5 * v[i] * dt + std::sqrt(v[i]) * dw[i];
}

VOLLAB_AVX2 void running_min_avx2(double* m, const double* x, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(m + i, _mm256_min_pd(_mm256_loadu_pd(m + i), _mm256_loadu_pd(x + i)));
    for (; i < n; ++i)
        if (x[i] < m[i]) m[i] = x[i];
}

const KernelTable avx2_table_impl = {
    dot_avx2,         axpy_avx2,         gemv_avx2,  gemv_t_avx2,
    ger_avx2,         exp_v_avx2,        elu_v_avx2, norminv_v_avx2,
    reduce_sum_avx2,  centered_dot_avx2, tri_matvec8_avx2,
    log_euler_step_avx2, running_min_avx2,
};

}  // namespace

namespace detail {
const KernelTable* avx2_table() { return &avx2_table_impl; }
}  // namespace detail

}  // namespace vollab::simd

#else  // non-x86 build: no AVX2 variants

namespace vollab::simd::detail {
const KernelTable* avx2_table() { return nullptr; }
}  // namespace vollab::simd::detail

#endif
