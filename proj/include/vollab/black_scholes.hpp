#pragma once

#include "vollab/common.hpp"
#include "vollab/grid.hpp"

namespace vollab {

struct BSQuote {
    double sigma;
    double s0;
    double strike;
    double maturity;
};

/// Standard normal CDF via erfc; accurate to ~1 ulp including deep tails.
double norm_cdf(double x);
double norm_pdf(double x);

/// Undiscounted Black-Scholes call (zero rates and dividends throughout).
double bs_call(const BSQuote& q);
double bs_call(double sigma, double s0, double strike, double maturity);

/// Analytic vega dPrice/dSigma.
double bs_vega(const BSQuote& q);

/// Inverts bs_call for sigma on the bracket [1e-4, 5]. Newton with analytic
/// vega, falling back to bisection whenever a step leaves the bracket.
/// Requires price strictly inside (max(s0-K,0), s0); throws InversionError
/// carrying the violated bound otherwise.
double implied_vol(double price, double s0, double strike, double maturity);

/// Elementwise implied vol of a price grid; rows are maturities. Inversion
/// failures are rethrown with the offending (row, col) attached.
VolSurface surface_from_prices(const Matrix& prices, const StrikeMaturityGrid& grid);

}  // namespace vollab
