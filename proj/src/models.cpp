#include "vollab/models.hpp"

#include <algorithm>
#include <cmath>

#include "vollab/grid.hpp"

namespace vollab {

ForwardVarianceCurve::ForwardVarianceCurve(std::vector<double> knot_times_in,
                                           std::vector<double> values_in)
    : knot_times(std::move(knot_times_in)), values(std::move(values_in)) {
    if (knot_times.empty() || knot_times.size() != values.size())
        throw ConfigError("forward variance curve needs matching, nonempty knots and values");
    double prev = 0.0;
    for (double t : knot_times) {
        if (!(t > prev)) throw ConfigError("curve knot times must be strictly increasing, > 0");
        prev = t;
    }
    for (double v : values)
        if (!(v > 0.0)) throw ConfigError("forward variance values must be positive");
}

double ForwardVarianceCurve::at(double t) const { return forward_variance_at(*this, t); }

ForwardVarianceCurve ForwardVarianceCurve::flat(double xi) {
    return {default_curve_knots(), std::vector<double>(default_curve_knots().size(), xi)};
}

double forward_variance_at(const ForwardVarianceCurve& curve, double t) {
    if (!(t > 0.0)) throw std::domain_error("forward_variance_at requires t > 0");
    // Intervals are (t_{i-1}, t_i]; value beyond the last knot extends flat.
    auto it = std::lower_bound(curve.knot_times.begin(), curve.knot_times.end(), t);
    if (it == curve.knot_times.end()) return curve.values.back();
    return curve.values[static_cast<std::size_t>(it - curve.knot_times.begin())];
}

const std::vector<double>& default_curve_knots() {
    static const std::vector<double> knots = default_training_grid().maturities;
    return knots;
}

Bounds::Bounds(std::vector<double> lower_in, std::vector<double> upper_in)
    : lower(std::move(lower_in)), upper(std::move(upper_in)) {
    if (lower.size() != upper.size() || lower.empty())
        throw ConfigError("bounds vectors must be nonempty and the same length");
    for (std::size_t i = 0; i < lower.size(); ++i)
        if (!(lower[i] < upper[i]))
            throw ConfigError("bounds must satisfy lower < upper elementwise");
}

bool Bounds::contains(std::span<const double> theta, double tol) const {
    if (theta.size() != dim()) return false;
    for (std::size_t i = 0; i < dim(); ++i)
        if (theta[i] < lower[i] - tol || theta[i] > upper[i] + tol) return false;
    return true;
}

std::vector<double> Bounds::clamp(std::span<const double> theta) const {
    std::vector<double> out(theta.begin(), theta.end());
    for (std::size_t i = 0; i < dim() && i < out.size(); ++i)
        out[i] = std::clamp(out[i], lower[i], upper[i]);
    return out;
}

std::vector<double> Bounds::midpoint() const {
    std::vector<double> out(dim());
    for (std::size_t i = 0; i < dim(); ++i) out[i] = 0.5 * (lower[i] + upper[i]);
    return out;
}

std::vector<double> normalize_theta(std::span<const double> theta, const Bounds& bounds) {
    if (theta.size() != bounds.dim())
        throw std::domain_error("normalize_theta: dimension mismatch");
    if (!bounds.contains(theta))
        throw std::domain_error("normalize_theta: theta outside bounds");
    std::vector<double> z(theta.size());
    for (std::size_t i = 0; i < theta.size(); ++i)
        z[i] = (2.0 * theta[i] - (bounds.upper[i] + bounds.lower[i])) /
               (bounds.upper[i] - bounds.lower[i]);
    return z;
}

std::vector<double> denormalize_theta(std::span<const double> z, const Bounds& bounds) {
    if (z.size() != bounds.dim())
        throw std::domain_error("denormalize_theta: dimension mismatch");
    std::vector<double> theta(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) {
        if (z[i] < -1.0 || z[i] > 1.0)
            throw std::domain_error("denormalize_theta: z outside [-1,1]");
        theta[i] = 0.5 * (z[i] * (bounds.upper[i] - bounds.lower[i]) + bounds.upper[i] +
                          bounds.lower[i]);
    }
    return theta;
}

const char* to_string(ModelKind kind) {
    switch (kind) {
        case ModelKind::rough_bergomi: return "rbergomi";
        case ModelKind::one_factor_bergomi: return "bergomi1f";
        case ModelKind::heston: return "heston";
    }
    return "?";
}

ModelKind model_kind_from_string(const std::string& name) {
    if (name == "rbergomi") return ModelKind::rough_bergomi;
    if (name == "bergomi1f") return ModelKind::one_factor_bergomi;
    if (name == "heston") return ModelKind::heston;
    throw ConfigError("unknown model kind: " + name);
}

namespace {

void check_xi(const std::vector<double>& xi, std::size_t n_knots) {
    if (xi.size() != n_knots)
        throw std::domain_error("xi knot count does not match curve knot times");
    for (double v : xi)
        if (!(v > 0.0)) throw std::domain_error("xi values must be positive");
}

}  // namespace

ModelParams::ModelParams(RBergomiParams p, std::vector<double> knot_times)
    : kind_(ModelKind::rough_bergomi), params_(std::move(p)), knot_times_(std::move(knot_times)) {
    const auto& rb = std::get<RBergomiParams>(params_);
    check_xi(rb.xi, knot_times_.size());
    if (rb.nu < 0.0) throw std::domain_error("nu must be >= 0");  // nu = 0 = deterministic variance
    if (rb.rho < -1.0 || rb.rho > 1.0) throw std::domain_error("rho must be in [-1,1]");
    if (!(rb.hurst > 0.0 && rb.hurst < 1.0)) throw std::domain_error("H must be in (0,1)");
}

ModelParams::ModelParams(OneFactorBergomiParams p, std::vector<double> knot_times)
    : kind_(ModelKind::one_factor_bergomi), params_(std::move(p)),
      knot_times_(std::move(knot_times)) {
    const auto& b1 = std::get<OneFactorBergomiParams>(params_);
    check_xi(b1.xi, knot_times_.size());
    if (b1.eta < 0.0) throw std::domain_error("eta must be >= 0");
    if (b1.rho < -1.0 || b1.rho > 1.0) throw std::domain_error("rho must be in [-1,1]");
    if (b1.beta < 0.0) throw std::domain_error("beta must be >= 0");
}

ModelParams::ModelParams(HestonParams p) : kind_(ModelKind::heston), params_(p) {
    const auto& h = std::get<HestonParams>(params_);
    if (!(h.a > 0.0 && h.b > 0.0 && h.v > 0.0))
        throw std::domain_error("Heston a, b, v must be positive");
    if (h.rho < -1.0 || h.rho > 1.0) throw std::domain_error("rho must be in [-1,1]");
    if (!(h.v0 > 0.0 && h.s0 > 0.0)) throw std::domain_error("v0 and s0 must be positive");
    if (!h.feller_ok())
        throw std::domain_error("Feller condition 2ab > v^2 violated");
}

ModelParams ModelParams::from_flat(ModelKind kind, std::span<const double> theta,
                                   std::vector<double> knot_times) {
    switch (kind) {
        case ModelKind::rough_bergomi: {
            if (theta.size() != knot_times.size() + 3)
                throw std::domain_error("flat theta has wrong dimension for model");
            std::size_t n = knot_times.size();
            RBergomiParams p;
            p.xi.assign(theta.begin(), theta.begin() + n);
            p.nu = theta[n];
            p.rho = theta[n + 1];
            p.hurst = theta[n + 2];
            return ModelParams(std::move(p), std::move(knot_times));
        }
        case ModelKind::one_factor_bergomi: {
            if (theta.size() != knot_times.size() + 3)
                throw std::domain_error("flat theta has wrong dimension for model");
            std::size_t n = knot_times.size();
            OneFactorBergomiParams p;
            p.xi.assign(theta.begin(), theta.begin() + n);
            p.eta = theta[n];
            p.rho = theta[n + 1];
            p.beta = theta[n + 2];
            return ModelParams(std::move(p), std::move(knot_times));
        }
        case ModelKind::heston: {
            if (theta.size() != 4)
                throw std::domain_error("flat theta has wrong dimension for model");
            HestonParams p;
            p.a = theta[0];
            p.b = theta[1];
            p.v = theta[2];
            p.rho = theta[3];
            p.v0 = p.b;
            p.s0 = 1.0;
            return ModelParams(p);
        }
    }
    throw std::domain_error("bad model kind");
}

ModelParams model_from_theta(ModelKind kind, std::span<const double> theta,
                             const std::vector<double>& grid_maturities) {
    if (kind == ModelKind::heston) return ModelParams::from_flat(kind, theta);
    if (theta.size() == grid_maturities.size() + 3)
        return ModelParams::from_flat(kind, theta, grid_maturities);
    if (theta.size() == default_curve_knots().size() + 3)
        return ModelParams::from_flat(kind, theta, default_curve_knots());
    throw std::domain_error(
        "theta dimension matches neither the grid maturities nor the default knots");
}

std::vector<double> ModelParams::to_flat() const {
    switch (kind_) {
        case ModelKind::rough_bergomi: {
            const auto& p = rbergomi();
            std::vector<double> out(p.xi);
            out.push_back(p.nu);
            out.push_back(p.rho);
            out.push_back(p.hurst);
            return out;
        }
        case ModelKind::one_factor_bergomi: {
            const auto& p = bergomi1f();
            std::vector<double> out(p.xi);
            out.push_back(p.eta);
            out.push_back(p.rho);
            out.push_back(p.beta);
            return out;
        }
        case ModelKind::heston: {
            const auto& p = heston();
            return {p.a, p.b, p.v, p.rho};
        }
    }
    throw std::domain_error("bad model kind");
}

std::size_t ModelParams::flat_dim() const {
    switch (kind_) {
        case ModelKind::rough_bergomi: return rbergomi().xi.size() + 3;
        case ModelKind::one_factor_bergomi: return bergomi1f().xi.size() + 3;
        case ModelKind::heston: return 4;
    }
    return 0;
}

ForwardVarianceCurve ModelParams::variance_curve() const {
    switch (kind_) {
        case ModelKind::rough_bergomi: return {knot_times_, rbergomi().xi};
        case ModelKind::one_factor_bergomi: return {knot_times_, bergomi1f().xi};
        case ModelKind::heston:
            throw std::domain_error("Heston has no forward variance curve");
    }
    throw std::domain_error("bad model kind");
}

Bounds default_bounds(ModelKind kind) {
    switch (kind) {
        case ModelKind::rough_bergomi: {
            std::vector<double> lo(8, 0.01), hi(8, 0.16);
            lo.insert(lo.end(), {0.5, -0.95, 0.025});
            hi.insert(hi.end(), {4.0, -0.1, 0.5});
            return {std::move(lo), std::move(hi)};
        }
        case ModelKind::one_factor_bergomi: {
            std::vector<double> lo(8, 0.01), hi(8, 0.16);
            lo.insert(lo.end(), {0.5, -0.95, 0.0});
            hi.insert(hi.end(), {4.0, -0.1, 10.0});
            return {std::move(lo), std::move(hi)};
        }
        case ModelKind::heston:
            // 2ab > v^2 holds at the worst corner: 2*1*0.04 = 0.08 > 0.28^2.
            return {{1.0, 0.04, 0.1, -0.9}, {4.0, 0.16, 0.28, 0.0}};
    }
    throw ConfigError("bad model kind");
}

std::size_t theta_dim(ModelKind kind) { return kind == ModelKind::heston ? 4 : 11; }

}  // namespace vollab
