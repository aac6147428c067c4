#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vollab/common.hpp"
#include "vollab/grid.hpp"
#include "vollab/models.hpp"
#include "vollab/neuralnet.hpp"

namespace vollab {

struct CalibrationTarget {
    VolSurface surface;
    std::optional<Matrix> cell_weights;  // least-squares weights, defaults to 1
};

struct CalibrationResult {
    std::vector<double> theta_hat;  // raw parameter units
    double rmse = 0.0;              // sqrt(sum of squared vol residuals), unnormalized
    double mae = 0.0;               // per-cell mean absolute error (convenience metric)
    std::size_t n_objective_evals = 0;
    std::size_t n_jacobian_evals = 0;
    std::size_t iterations = 0;
    double wall_ms = 0.0;
    bool converged = false;
    std::string solver;
};

// ---------------------------------------------------------------------------
// Generic solver cores (box-constrained; also used directly by tests)
// ---------------------------------------------------------------------------

struct LsqProblem {
    std::size_t dim = 0;
    std::size_t n_res = 0;
    Bounds box;
    std::function<void(std::span<const double>, std::vector<double>&)> residuals;
    std::function<void(std::span<const double>, Matrix&)> jacobian;
};

struct ScalarProblem {
    std::size_t dim = 0;
    Bounds box;
    std::function<double(std::span<const double>)> objective;
};

struct SolveOutcome {
    std::vector<double> x;
    double objective = 0.0;
    std::size_t n_objective_evals = 0;
    std::size_t n_jacobian_evals = 0;
    std::size_t iterations = 0;
    bool converged = false;
};

struct LMConfig {
    std::size_t max_iters = 500;
    double step_tol = 1e-10;
    double grad_tol = 1e-10;
    double lambda0 = 1e-3;
    double lambda_up = 10.0;
    double lambda_down = 10.0;
    std::size_t n_starts = 1;  // > 1 adds seeded restarts; single start is the default
    uint64_t seed = 0;
};

struct GDConfig {
    double step = 0.05;
    std::size_t max_iters = 5000;
    double grad_tol = 1e-8;
};

struct NMConfig {
    double diameter_tol = 1e-8;
    std::size_t max_evals = 2000;
    double initial_step = 0.05;  // fraction of box width per coordinate
};

struct DEConfig {
    std::size_t pop_per_dim = 15;
    double differential_weight = 0.8;  // F
    double crossover = 0.9;            // CR
    std::size_t max_generations = 200;
    std::size_t stall_generations = 50;
    uint64_t seed = 0;
};

/// Levenberg damping with lambda*I: start 1e-3, x10 on reject, /10 on accept;
/// stops on ||projected step|| < step_tol, ||J^T r||_inf < grad_tol, or
/// max_iters. Singular normal equations escalate lambda.
SolveOutcome lm_minimize(const LsqProblem& p, std::span<const double> x_init,
                         const LMConfig& cfg);

/// Fixed-step projected gradient descent on 0.5*||r||^2.
SolveOutcome gd_minimize(const LsqProblem& p, std::span<const double> x_init,
                         const GDConfig& cfg);

/// Nelder-Mead with standard coefficients (1, 2, 0.5, 0.5); candidate points
/// are projected into the box before evaluation.
SolveOutcome nm_minimize(const ScalarProblem& p, std::span<const double> x_init,
                         const NMConfig& cfg);

/// rand/1/bin differential evolution, population 15*dim, clamped to the box.
SolveOutcome de_minimize(const ScalarProblem& p, const DEConfig& cfg);

// ---------------------------------------------------------------------------
// Net-facing calibration (optimizes in normalized theta space)
// ---------------------------------------------------------------------------

/// Residuals r_ij = F(theta)_ij - target_ij in vol units, flattened row-major.
class SurfaceObjective {
public:
    SurfaceObjective(const PricingNet& net, const CalibrationTarget& target);

    std::size_t dim() const { return net_->theta_bounds.dim(); }
    std::size_t n_res() const { return target_flat_.size(); }

    void residuals(std::span<const double> z, std::vector<double>& r) const;
    void jacobian(std::span<const double> z, Matrix& jac) const;
    double objective(std::span<const double> z) const;  // 0.5 * ||r||^2 (weighted)

    /// Unweighted metrics at a normalized point.
    double rmse_at(std::span<const double> z) const;
    double mae_at(std::span<const double> z) const;

    LsqProblem as_lsq() const;
    ScalarProblem as_scalar() const;

private:
    const PricingNet* net_;
    std::vector<double> target_flat_;
    std::vector<double> sqrt_weights_;
};

CalibrationResult levenberg_marquardt(const PricingNet& net, const CalibrationTarget& target,
                                      std::span<const double> theta_init,
                                      const LMConfig& cfg = {});
CalibrationResult gradient_descent(const PricingNet& net, const CalibrationTarget& target,
                                   std::span<const double> theta_init, const GDConfig& cfg = {});
CalibrationResult nelder_mead(const PricingNet& net, const CalibrationTarget& target,
                              std::span<const double> theta_init, const NMConfig& cfg = {});
CalibrationResult differential_evolution(const PricingNet& net,
                                         const CalibrationTarget& target,
                                         const DEConfig& cfg = {});

/// E_R = |theta_hat - theta_bar| / |theta_bar| per coordinate (inf where
/// theta_bar is 0; relative error blows up around zero by construction).
std::vector<double> param_relative_error(std::span<const double> theta_hat,
                                         std::span<const double> theta_bar);

/// sqrt(sum_ij (a_ij - b_ij)^2) with no cell-count normalization.
double rmse(const VolSurface& a, const VolSurface& b);
double rmse_flat(std::span<const double> a, std::span<const double> b);

}  // namespace vollab
