#pragma once

#include <cmath>
#include <cstddef>

// Shared pieces of the kernel implementations (scalar reference versions and
// coefficient tables reused by the AVX2 tail paths).

namespace vollab::simd::detail {

// Acklam's rational approximation to the inverse standard normal CDF.
// Absolute error < 1.2e-9 over (0,1); plenty below Monte Carlo noise.
inline constexpr double kNormInvA[6] = {
    -3.969683028665376e+01, 2.209460984245205e+02,  -2.759285104469687e+02,
    1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
inline constexpr double kNormInvB[5] = {
    -5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
    6.680131188771972e+01,  -1.328068155288572e+01};
inline constexpr double kNormInvC[6] = {
    -7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
    -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
inline constexpr double kNormInvD[4] = {7.784695709041462e-03, 3.224671290700398e-01,
                                        2.445134137142996e+00, 3.754408661907416e+00};
inline constexpr double kNormInvPLow = 0.02425;

inline double norminv_central(double q) {
    // |q| <= 0.5 - p_low, q = u - 0.5
    const double* a = kNormInvA;
    const double* b = kNormInvB;
    double r = q * q;
    double num = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q;
    double den = ((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0;
    return num / den;
}

inline double norminv_tail(double p) {
    // p < p_low: lower tail. Upper tail is handled by symmetry.
    const double* c = kNormInvC;
    const double* d = kNormInvD;
    double q = std::sqrt(-2.0 * std::log(p));
    double num = ((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5];
    double den = (((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0;
    return num / den;
}

inline double norminv_one(double u) {
    if (u < kNormInvPLow) return norminv_tail(u);
    if (u > 1.0 - kNormInvPLow) return -norminv_tail(1.0 - u);
    return norminv_central(u - 0.5);
}

}  // namespace vollab::simd::detail
