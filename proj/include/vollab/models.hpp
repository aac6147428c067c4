#pragma once

#include <span>
#include <string>
#include <variant>
#include <vector>

#include "vollab/common.hpp"

namespace vollab {

/// Piecewise-constant forward variance curve xi_0(t) on intervals
/// (t_{i-1}, t_i] with t_0 = 0; flat extension beyond the last knot.
struct ForwardVarianceCurve {
    std::vector<double> knot_times;  // strictly increasing, first > 0
    std::vector<double> values;      // same length, all > 0

    ForwardVarianceCurve() = default;
    ForwardVarianceCurve(std::vector<double> knot_times, std::vector<double> values);

    double at(double t) const;

    static ForwardVarianceCurve flat(double xi);
};

double forward_variance_at(const ForwardVarianceCurve& curve, double t);

/// Default forward-variance knot times: the 8 training maturities.
const std::vector<double>& default_curve_knots();

/// Elementwise box bounds for a parameter vector.
struct Bounds {
    std::vector<double> lower;
    std::vector<double> upper;

    Bounds() = default;
    Bounds(std::vector<double> lower, std::vector<double> upper);

    std::size_t dim() const { return lower.size(); }
    bool contains(std::span<const double> theta, double tol = 0.0) const;
    std::vector<double> clamp(std::span<const double> theta) const;
    std::vector<double> midpoint() const;
};

/// Maps theta in [lo,hi] to [-1,1] per coordinate:
/// (2*theta - (hi + lo)) / (hi - lo). Throws if theta is outside the box.
std::vector<double> normalize_theta(std::span<const double> theta, const Bounds& bounds);

/// Exact inverse of normalize_theta; throws if z is outside [-1,1].
std::vector<double> denormalize_theta(std::span<const double> z, const Bounds& bounds);

enum class ModelKind { rough_bergomi, one_factor_bergomi, heston };

const char* to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& name);

/// theta = (xi_1..xi_8, nu, rho, H)
struct RBergomiParams {
    std::vector<double> xi;
    double nu = 1.0;
    double rho = -0.5;
    double hurst = 0.1;
};

/// theta = (xi_1..xi_8, eta, rho, beta)
struct OneFactorBergomiParams {
    std::vector<double> xi;
    double eta = 1.0;
    double rho = -0.5;
    double beta = 1.0;
};

/// Calibration vector is (a, b, v, rho); v0 and s0 are configuration,
/// v0 defaulting to the long-run variance b.
struct HestonParams {
    double a = 2.0;
    double b = 0.09;
    double v = 0.3;
    double rho = -0.5;
    double v0 = 0.09;
    double s0 = 1.0;

    bool feller_ok() const { return 2.0 * a * b > v * v; }
};

/// Tagged union of model parameters with a lossless flat-vector view.
class ModelParams {
public:
    ModelParams(RBergomiParams p, std::vector<double> knot_times = default_curve_knots());
    ModelParams(OneFactorBergomiParams p,
                std::vector<double> knot_times = default_curve_knots());
    explicit ModelParams(HestonParams p);

    static ModelParams from_flat(ModelKind kind, std::span<const double> theta,
                                 std::vector<double> knot_times = default_curve_knots());
    std::vector<double> to_flat() const;
    std::size_t flat_dim() const;

    ModelKind kind() const { return kind_; }
    const RBergomiParams& rbergomi() const { return std::get<RBergomiParams>(params_); }
    const OneFactorBergomiParams& bergomi1f() const {
        return std::get<OneFactorBergomiParams>(params_);
    }
    const HestonParams& heston() const { return std::get<HestonParams>(params_); }

    /// Forward variance curve built from the xi knots (Bergomi models only).
    ForwardVarianceCurve variance_curve() const;
    const std::vector<double>& knot_times() const { return knot_times_; }

private:
    ModelKind kind_;
    std::variant<RBergomiParams, OneFactorBergomiParams, HestonParams> params_;
    std::vector<double> knot_times_;
};

/// Training-box defaults. The Bergomi boxes follow the synthetic-experiment
/// ranges; the Heston box is chosen so that every point satisfies the Feller
/// condition 2ab > v^2.
Bounds default_bounds(ModelKind kind);

/// Default flat dimension: 8 xi knots + 3 for the Bergomi models, 4 for
/// Heston. Bergomi thetas may carry any knot count n >= 1 (dimension n + 3)
/// when the curve knots are configured, e.g. to the grid maturities.
std::size_t theta_dim(ModelKind kind);

/// Builds ModelParams from a flat theta, resolving the Bergomi curve knots
/// against the grid: a theta of dimension n_maturities + 3 uses the grid
/// maturities as knots, dimension 11 uses the default 8 training maturities.
ModelParams model_from_theta(ModelKind kind, std::span<const double> theta,
                             const std::vector<double>& grid_maturities);

}  // namespace vollab
