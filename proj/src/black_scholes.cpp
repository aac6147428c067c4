#include "vollab/black_scholes.hpp"

#include <algorithm>
#include <cmath>

namespace vollab {

namespace {
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;
constexpr double kSigmaLo = 1e-4;
constexpr double kSigmaHi = 5.0;
}  // namespace

double norm_cdf(double x) { return 0.5 * std::erfc(-x * kInvSqrt2); }

double norm_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }

double bs_call(const BSQuote& q) {
    if (!(q.sigma > 0.0) || !(q.s0 > 0.0) || !(q.strike > 0.0) || !(q.maturity > 0.0))
        throw std::domain_error("bs_call requires positive sigma, s0, strike, maturity");
    double st = q.sigma * std::sqrt(q.maturity);
    double d_plus = std::log(q.s0 / q.strike) / st + 0.5 * st;
    double d_minus = d_plus - st;
    return q.s0 * norm_cdf(d_plus) - q.strike * norm_cdf(d_minus);
}

double bs_call(double sigma, double s0, double strike, double maturity) {
    return bs_call(BSQuote{sigma, s0, strike, maturity});
}

double bs_vega(const BSQuote& q) {
    double st = q.sigma * std::sqrt(q.maturity);
    double d_plus = std::log(q.s0 / q.strike) / st + 0.5 * st;
    return q.s0 * norm_pdf(d_plus) * std::sqrt(q.maturity);
}

double implied_vol(double price, double s0, double strike, double maturity) {
    if (!(s0 > 0.0) || !(strike > 0.0) || !(maturity > 0.0))
        throw std::domain_error("implied_vol requires positive s0, strike, maturity");
    const double intrinsic = std::max(s0 - strike, 0.0);
    // Prices within ~machine epsilon of a no-arbitrage boundary carry no
    // volatility information; treat them as boundary violations.
    if (!(price > intrinsic + 1e-13 * s0))
        throw InversionError("price at or below intrinsic value", price, intrinsic, s0);
    if (!(price < s0 * (1.0 - 1e-13)))
        throw InversionError("price at or above spot", price, intrinsic, s0);

    double lo = kSigmaLo, hi = kSigmaHi;
    double f_lo = bs_call(lo, s0, strike, maturity) - price;
    if (f_lo > 0.0)
        throw InversionError("price below bracket floor value", price, intrinsic, s0);
    double f_hi = bs_call(hi, s0, strike, maturity) - price;
    if (f_hi < 0.0)
        throw InversionError("price above bracket ceiling value", price, intrinsic, s0);

    // Iterate to sigma resolution rather than a price tolerance: with an
    // absolute price stop, deep wings (tiny vega) would quit far from the
    // root. Newton steps are kept inside the shrinking bracket.
    double sigma = 0.5 * (lo + hi);
    for (int it = 0; it < 200; ++it) {
        double f = bs_call(sigma, s0, strike, maturity) - price;
        if (f == 0.0) return sigma;
        if (f > 0.0) hi = sigma; else lo = sigma;
        if (hi - lo < 5e-12 * std::max(sigma, 1e-3)) return 0.5 * (lo + hi);

        double vega = bs_vega(BSQuote{sigma, s0, strike, maturity});
        double next = vega > 1e-300 ? sigma - f / vega : lo - 1.0;
        if (!(next > lo) || !(next < hi)) next = 0.5 * (lo + hi);
        sigma = next;
    }
    return sigma;
}

VolSurface surface_from_prices(const Matrix& prices, const StrikeMaturityGrid& grid) {
    if (prices.rows() != grid.n_maturities() || prices.cols() != grid.n_strikes())
        throw ConfigError("price grid shape does not match grid");
    Matrix vols(prices.rows(), prices.cols());
    for (std::size_t i = 0; i < prices.rows(); ++i) {
        for (std::size_t j = 0; j < prices.cols(); ++j) {
            try {
                vols(i, j) = implied_vol(prices(i, j), 1.0, grid.strikes[j],
                                         grid.maturities[i]);
            } catch (InversionError& e) {
                e.row = i;
                e.col = j;
                throw;
            }
        }
    }
    return VolSurface(grid, std::move(vols));
}

}  // namespace vollab
