#pragma once

#include <cstdint>
#include <vector>

#include "vollab/common.hpp"
#include "vollab/grid.hpp"
#include "vollab/models.hpp"

namespace vollab {

struct SimConfig {
    std::size_t n_paths = 10000;
    std::size_t n_steps = 100;
    uint64_t seed = 0;
    bool antithetic = false;

    void validate() const;
};

/// Simulation time grid: a uniform refinement of [0, T_max] that contains
/// every requested maturity exactly.
struct TimeGrid {
    std::vector<double> times;                 // strictly increasing, > 0
    std::vector<std::size_t> maturity_index;   // times[maturity_index[k]] == maturities[k]

    static TimeGrid build(std::size_t n_steps, const std::vector<double>& maturities);
};

/// Joint covariance of (Z_{t_1..t_n}, X_{t_1..t_n}) where Z is the driving
/// Brownian motion and X_t = sqrt(2H) int_0^t (t-u)^{H-1/2} dZ_u is the
/// unit-vol-of-vol Volterra process. Z block first, X block second.
///
/// Var[X_t] = t^{2H} and Cov[X_t, Z_s] are analytic; Cov[X_t, X_s] is
/// evaluated by adaptive Gauss-Kronrod quadrature (tolerance 1e-10) after the
/// substitution u = min(s,t) - w^{1/(H+1/2)} removes the kernel singularity.
Matrix volterra_covariance(const std::vector<double>& t_grid, double hurst);

/// Same layout for the 1-factor Bergomi driver Y_t = int_0^t e^{-beta(t-u)} dZ_u;
/// all blocks are analytic.
Matrix ou_driver_covariance(const std::vector<double>& t_grid, double beta);

/// Lower Cholesky factor with diagonal jitter escalation (up to 1e-10
/// absolute). Throws NumericalError with a pivot diagnostic on failure.
Matrix cholesky_lower(const Matrix& a);

struct PathSet {
    std::vector<double> times;
    Matrix spot;      // n_paths x n_times
    Matrix variance;  // n_paths x n_times, instantaneous variance at times[j]
    double v0 = 0.0;  // deterministic variance at t = 0
};

/// Simulates asset and variance paths on t_grid. Bergomi-family variance is
/// sampled exactly from the joint Gaussian law of (Z, X); the asset uses a
/// log-Euler step that preserves the spot martingale exactly in expectation.
/// Heston uses full-truncation Euler.
PathSet simulate_paths(const ModelParams& model, const SimConfig& config,
                       const std::vector<double>& t_grid);

struct PriceGridResult {
    Matrix prices;   // maturities x strikes
    Matrix stderrs;  // same shape, >= 0
    Matrix ci95_half_width() const;
};

/// Call prices on the grid with s0 = 1 (strikes are moneyness). The spot
/// martingale condition E[S_T] = 1 is used as a control variate per cell
/// unless disabled.
PriceGridResult mc_vanilla_surface(const ModelParams& model, const StrikeMaturityGrid& grid,
                                   const SimConfig& config, bool control_variate = true);

enum class BarrierKind { down_in, down_out };

/// Digital barrier hitting probabilities on a (maturity x barrier-level)
/// grid, all levels below spot. Monitoring is discrete at simulation steps.
/// down_in uses the event {tau_B <= T}, down_out its strict complement, so
/// the two sum to exactly 1 on the same path set.
PriceGridResult mc_barrier_grid(const ModelParams& model,
                                const StrikeMaturityGrid& barrier_grid,
                                const SimConfig& config, BarrierKind kind);

/// Both barrier kinds from a single simulation pass.
std::pair<PriceGridResult, PriceGridResult> mc_barrier_grid_both(
    const ModelParams& model, const StrikeMaturityGrid& barrier_grid,
    const SimConfig& config);

}  // namespace vollab
