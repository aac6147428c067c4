#include "vollab/calibrate.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include "vollab/rng.hpp"
#include "vollab/simd.hpp"

namespace vollab {

namespace {

double squared_norm(const std::vector<double>& v) {
    return simd::dot(v.data(), v.data(), v.size());
}

// Solves (J^T J + lambda I) delta = -J^T r in place; false if the Cholesky
// factorization hits a non-positive pivot.
bool solve_damped_normal_equations(const Matrix& jac, const std::vector<double>& r,
                                   double lambda, std::vector<double>& delta) {
    const std::size_t d = jac.cols();
    Matrix a(d, d);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j <= i; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < jac.rows(); ++k) s += jac(k, i) * jac(k, j);
            a(i, j) = s;
            a(j, i) = s;
        }
    for (std::size_t i = 0; i < d; ++i) a(i, i) += lambda;

    std::vector<double> g(d, 0.0);  // J^T r
    for (std::size_t k = 0; k < jac.rows(); ++k)
        for (std::size_t i = 0; i < d; ++i) g[i] += jac(k, i) * r[k];

    // Cholesky factorization and two triangular solves.
    Matrix l(d, d);
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double s = a(i, j) - simd::dot(l.row(i), l.row(j), j);
            if (i == j) {
                if (!(s > 0.0)) return false;
                l(i, j) = std::sqrt(s);
            } else {
                l(i, j) = s / l(j, j);
            }
        }
    }
    delta.assign(d, 0.0);
    std::vector<double> y(d);
    for (std::size_t i = 0; i < d; ++i)
        y[i] = (-g[i] - simd::dot(l.row(i), y.data(), i)) / l(i, i);
    for (std::size_t i = d; i-- > 0;) {
        double s = y[i];
        for (std::size_t k = i + 1; k < d; ++k) s -= l(k, i) * delta[k];
        delta[i] = s / l(i, i);
    }
    return true;
}

double inf_norm_jt_r(const Matrix& jac, const std::vector<double>& r) {
    double worst = 0.0;
    for (std::size_t i = 0; i < jac.cols(); ++i) {
        double s = 0.0;
        for (std::size_t k = 0; k < jac.rows(); ++k) s += jac(k, i) * r[k];
        worst = std::max(worst, std::abs(s));
    }
    return worst;
}

SolveOutcome lm_single_start(const LsqProblem& p, std::span<const double> x_init,
                             const LMConfig& cfg) {
    SolveOutcome out;
    std::vector<double> x = p.box.clamp(x_init);
    std::vector<double> r(p.n_res), r_new(p.n_res), delta;
    Matrix jac;

    p.residuals(x, r);
    ++out.n_objective_evals;
    double obj = 0.5 * squared_norm(r);
    p.jacobian(x, jac);
    ++out.n_jacobian_evals;

    double lambda = cfg.lambda0;
    for (std::size_t iter = 1; iter <= cfg.max_iters; ++iter) {
        out.iterations = iter;
        if (inf_norm_jt_r(jac, r) < cfg.grad_tol) {
            out.converged = true;
            break;
        }
        if (!solve_damped_normal_equations(jac, r, lambda, delta)) {
            lambda *= cfg.lambda_up;  // singular normal equations: escalate damping
            if (lambda > 1e16) break;
            continue;
        }
        std::vector<double> x_new(p.dim);
        for (std::size_t i = 0; i < p.dim; ++i)
            x_new[i] = std::clamp(x[i] + delta[i], p.box.lower[i], p.box.upper[i]);

        double step_norm = 0.0;
        for (std::size_t i = 0; i < p.dim; ++i) {
            double d = x_new[i] - x[i];
            step_norm += d * d;
        }
        step_norm = std::sqrt(step_norm);
        if (step_norm < cfg.step_tol) {
            out.converged = true;
            break;
        }

        p.residuals(x_new, r_new);
        ++out.n_objective_evals;
        double obj_new = 0.5 * squared_norm(r_new);
        if (obj_new < obj) {
            x = std::move(x_new);
            r = r_new;
            obj = obj_new;
            p.jacobian(x, jac);
            ++out.n_jacobian_evals;
            lambda = std::max(lambda / cfg.lambda_down, 1e-12);
        } else {
            lambda *= cfg.lambda_up;
            if (lambda > 1e16) break;
        }
    }
    out.x = std::move(x);
    out.objective = obj;
    return out;
}

}  // namespace

SolveOutcome lm_minimize(const LsqProblem& p, std::span<const double> x_init,
                         const LMConfig& cfg) {
    SolveOutcome best = lm_single_start(p, x_init, cfg);
    for (std::size_t s = 1; s < cfg.n_starts; ++s) {
        Xoshiro256pp rng = make_stream(cfg.seed, StreamKind::target_suite, s);
        std::vector<double> start(p.dim);
        for (std::size_t i = 0; i < p.dim; ++i)
            start[i] = rng.uniform(p.box.lower[i], p.box.upper[i]);
        SolveOutcome trial = lm_single_start(p, start, cfg);
        trial.n_objective_evals += best.n_objective_evals;
        trial.n_jacobian_evals += best.n_jacobian_evals;
        trial.iterations += best.iterations;
        if (trial.objective < best.objective)
            best = std::move(trial);
        else {
            best.n_objective_evals = trial.n_objective_evals;
            best.n_jacobian_evals = trial.n_jacobian_evals;
            best.iterations = trial.iterations;
        }
    }
    return best;
}

SolveOutcome gd_minimize(const LsqProblem& p, std::span<const double> x_init,
                         const GDConfig& cfg) {
    SolveOutcome out;
    std::vector<double> x = p.box.clamp(x_init);
    std::vector<double> r(p.n_res);
    Matrix jac;

    for (std::size_t iter = 1; iter <= cfg.max_iters; ++iter) {
        out.iterations = iter;
        p.residuals(x, r);
        ++out.n_objective_evals;
        p.jacobian(x, jac);
        ++out.n_jacobian_evals;

        std::vector<double> g(p.dim, 0.0);
        for (std::size_t k = 0; k < jac.rows(); ++k)
            for (std::size_t i = 0; i < p.dim; ++i) g[i] += jac(k, i) * r[k];
        double gnorm = 0.0;
        for (double v : g) gnorm = std::max(gnorm, std::abs(v));
        if (gnorm < cfg.grad_tol) {
            out.converged = true;
            break;
        }
        for (std::size_t i = 0; i < p.dim; ++i)
            x[i] = std::clamp(x[i] - cfg.step * g[i], p.box.lower[i], p.box.upper[i]);
    }
    p.residuals(x, r);
    ++out.n_objective_evals;
    out.objective = 0.5 * squared_norm(r);
    out.x = std::move(x);
    return out;
}

SolveOutcome nm_minimize(const ScalarProblem& p, std::span<const double> x_init,
                         const NMConfig& cfg) {
    constexpr double kReflect = 1.0, kExpand = 2.0, kContract = 0.5, kShrink = 0.5;
    const std::size_t d = p.dim;
    SolveOutcome out;

    auto project = [&](std::vector<double> v) {
        for (std::size_t i = 0; i < d; ++i) v[i] = std::clamp(v[i], p.box.lower[i], p.box.upper[i]);
        return v;
    };
    auto eval = [&](const std::vector<double>& v) {
        ++out.n_objective_evals;
        return p.objective(v);
    };

    std::vector<std::vector<double>> simplex;
    std::vector<double> f;
    simplex.push_back(project({x_init.begin(), x_init.end()}));
    for (std::size_t i = 0; i < d; ++i) {
        std::vector<double> v = simplex[0];
        double step = cfg.initial_step * (p.box.upper[i] - p.box.lower[i]);
        v[i] += v[i] + step <= p.box.upper[i] ? step : -step;
        simplex.push_back(project(std::move(v)));
    }
    for (const auto& v : simplex) f.push_back(eval(v));

    auto diameter = [&] {
        double worst = 0.0;
        for (std::size_t a = 0; a < simplex.size(); ++a)
            for (std::size_t b = a + 1; b < simplex.size(); ++b) {
                double s = 0.0;
                for (std::size_t i = 0; i < d; ++i) {
                    double diff = simplex[a][i] - simplex[b][i];
                    s += diff * diff;
                }
                worst = std::max(worst, std::sqrt(s));
            }
        return worst;
    };

    while (out.n_objective_evals < cfg.max_evals) {
        ++out.iterations;
        std::vector<std::size_t> order(simplex.size());
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(),
                  [&](std::size_t a, std::size_t b) { return f[a] < f[b]; });
        std::vector<std::vector<double>> sx;
        std::vector<double> sf;
        for (std::size_t k : order) {
            sx.push_back(std::move(simplex[k]));
            sf.push_back(f[k]);
        }
        simplex = std::move(sx);
        f = std::move(sf);

        if (diameter() < cfg.diameter_tol) {
            out.converged = true;
            break;
        }

        std::vector<double> centroid(d, 0.0);
        for (std::size_t k = 0; k + 1 < simplex.size(); ++k)
            for (std::size_t i = 0; i < d; ++i) centroid[i] += simplex[k][i];
        for (double& c : centroid) c /= static_cast<double>(d);

        const std::vector<double>& worst = simplex.back();
        std::vector<double> reflected(d);
        for (std::size_t i = 0; i < d; ++i)
            reflected[i] = centroid[i] + kReflect * (centroid[i] - worst[i]);
        reflected = project(std::move(reflected));
        double f_r = eval(reflected);

        if (f_r < f.front()) {
            std::vector<double> expanded(d);
            for (std::size_t i = 0; i < d; ++i)
                expanded[i] = centroid[i] + kExpand * (reflected[i] - centroid[i]);
            expanded = project(std::move(expanded));
            double f_e = eval(expanded);
            if (f_e < f_r) {
                simplex.back() = std::move(expanded);
                f.back() = f_e;
            } else {
                simplex.back() = std::move(reflected);
                f.back() = f_r;
            }
        } else if (f_r < f[f.size() - 2]) {
            simplex.back() = std::move(reflected);
            f.back() = f_r;
        } else {
            std::vector<double> contracted(d);
            bool outside = f_r < f.back();
            const std::vector<double>& anchor = outside ? reflected : worst;
            for (std::size_t i = 0; i < d; ++i)
                contracted[i] = centroid[i] + kContract * (anchor[i] - centroid[i]);
            contracted = project(std::move(contracted));
            double f_c = eval(contracted);
            if (f_c < std::min(f_r, f.back())) {
                simplex.back() = std::move(contracted);
                f.back() = f_c;
            } else {
                for (std::size_t k = 1; k < simplex.size(); ++k) {
                    for (std::size_t i = 0; i < d; ++i)
                        simplex[k][i] = simplex[0][i] + kShrink * (simplex[k][i] - simplex[0][i]);
                    simplex[k] = project(std::move(simplex[k]));
                    f[k] = eval(simplex[k]);
                    if (out.n_objective_evals >= cfg.max_evals) break;
                }
            }
        }
    }

    std::size_t best = 0;
    for (std::size_t k = 1; k < simplex.size(); ++k)
        if (f[k] < f[best]) best = k;
    out.x = simplex[best];
    out.objective = f[best];
    return out;
}

SolveOutcome de_minimize(const ScalarProblem& p, const DEConfig& cfg) {
    const std::size_t d = p.dim;
    const std::size_t pop_size = std::max<std::size_t>(4, cfg.pop_per_dim * d);
    SolveOutcome out;
    Xoshiro256pp rng = make_stream(cfg.seed, StreamKind::de_population, 0);

    std::vector<std::vector<double>> pop(pop_size, std::vector<double>(d));
    std::vector<double> fitness(pop_size);
    for (std::size_t k = 0; k < pop_size; ++k) {
        for (std::size_t i = 0; i < d; ++i)
            pop[k][i] = rng.uniform(p.box.lower[i], p.box.upper[i]);
        fitness[k] = p.objective(pop[k]);
        ++out.n_objective_evals;
    }

    std::size_t best = 0;
    for (std::size_t k = 1; k < pop_size; ++k)
        if (fitness[k] < fitness[best]) best = k;

    std::size_t stall = 0;
    std::vector<double> trial(d);
    for (std::size_t gen = 1; gen <= cfg.max_generations && stall < cfg.stall_generations;
         ++gen) {
        ++out.iterations;
        double best_before = fitness[best];
        for (std::size_t k = 0; k < pop_size; ++k) {
            std::size_t r1, r2, r3;
            do { r1 = rng.below(pop_size); } while (r1 == k);
            do { r2 = rng.below(pop_size); } while (r2 == k || r2 == r1);
            do { r3 = rng.below(pop_size); } while (r3 == k || r3 == r2 || r3 == r1);
            std::size_t j_rand = rng.below(d);
            for (std::size_t i = 0; i < d; ++i) {
                bool cross = rng.uniform01() < cfg.crossover || i == j_rand;
                double v = cross ? pop[r1][i] +
                                       cfg.differential_weight * (pop[r2][i] - pop[r3][i])
                                 : pop[k][i];
                trial[i] = std::clamp(v, p.box.lower[i], p.box.upper[i]);
            }
            double f_t = p.objective(trial);
            ++out.n_objective_evals;
            if (f_t < fitness[k]) {
                pop[k] = trial;
                fitness[k] = f_t;
                if (f_t < fitness[best]) best = k;
            }
        }
        if (fitness[best] < best_before) stall = 0; else ++stall;
    }
    out.converged = stall >= cfg.stall_generations || out.iterations >= cfg.max_generations;
    out.x = pop[best];
    out.objective = fitness[best];
    return out;
}

// ---------------------------------------------------------------------------
// Net-facing calibration
// ---------------------------------------------------------------------------

SurfaceObjective::SurfaceObjective(const PricingNet& net, const CalibrationTarget& target)
    : net_(&net), target_flat_(flatten(target.surface)) {
    if (!(target.surface.grid() == net.grid))
        throw ConfigError("calibration target grid does not match the net grid");
    sqrt_weights_.assign(target_flat_.size(), 1.0);
    if (target.cell_weights) {
        const Matrix& w = *target.cell_weights;
        if (w.rows() * w.cols() != target_flat_.size())
            throw ConfigError("cell weight shape mismatch");
        for (std::size_t i = 0; i < target_flat_.size(); ++i) {
            double wi = w.storage()[i];
            if (wi < 0.0) throw ConfigError("cell weights must be nonnegative");
            sqrt_weights_[i] = std::sqrt(wi);
        }
    }
}

void SurfaceObjective::residuals(std::span<const double> z, std::vector<double>& r) const {
    std::vector<double> pred = net_->forward_normalized(z);
    r.resize(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i)
        r[i] = sqrt_weights_[i] * (pred[i] - target_flat_[i]);
}

void SurfaceObjective::jacobian(std::span<const double> z, Matrix& jac) const {
    jac = net_->jacobian_normalized(z);
    for (std::size_t i = 0; i < jac.rows(); ++i)
        for (std::size_t j = 0; j < jac.cols(); ++j) jac(i, j) *= sqrt_weights_[i];
}

double SurfaceObjective::objective(std::span<const double> z) const {
    std::vector<double> r;
    residuals(z, r);
    return 0.5 * simd::dot(r.data(), r.data(), r.size());
}

double SurfaceObjective::rmse_at(std::span<const double> z) const {
    std::vector<double> pred = net_->forward_normalized(z);
    return rmse_flat(pred, target_flat_);
}

double SurfaceObjective::mae_at(std::span<const double> z) const {
    std::vector<double> pred = net_->forward_normalized(z);
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) s += std::abs(pred[i] - target_flat_[i]);
    return s / static_cast<double>(pred.size());
}

LsqProblem SurfaceObjective::as_lsq() const {
    LsqProblem p;
    p.dim = dim();
    p.n_res = n_res();
    p.box = Bounds(std::vector<double>(p.dim, -1.0), std::vector<double>(p.dim, 1.0));
    p.residuals = [this](std::span<const double> z, std::vector<double>& r) {
        residuals(z, r);
    };
    p.jacobian = [this](std::span<const double> z, Matrix& jac) { jacobian(z, jac); };
    return p;
}

ScalarProblem SurfaceObjective::as_scalar() const {
    ScalarProblem p;
    p.dim = dim();
    p.box = Bounds(std::vector<double>(p.dim, -1.0), std::vector<double>(p.dim, 1.0));
    p.objective = [this](std::span<const double> z) { return objective(z); };
    return p;
}

namespace {

// Optimization runs in normalized space; init is clamped into the raw box
// first, per the module contract.
std::vector<double> normalized_init(const PricingNet& net, std::span<const double> theta_init) {
    return normalize_theta(net.theta_bounds.clamp(theta_init), net.theta_bounds);
}

CalibrationResult finish(const PricingNet& net, const SurfaceObjective& obj,
                         const SolveOutcome& o, const char* solver,
                         std::chrono::steady_clock::time_point t0) {
    CalibrationResult res;
    res.theta_hat = denormalize_theta(o.x, net.theta_bounds);
    res.rmse = obj.rmse_at(o.x);
    res.mae = obj.mae_at(o.x);
    res.n_objective_evals = o.n_objective_evals;
    res.n_jacobian_evals = o.n_jacobian_evals;
    res.iterations = o.iterations;
    res.converged = o.converged;
    res.solver = solver;
    res.wall_ms = std::chrono::duration<double, std::milli>(
                      std::chrono::steady_clock::now() - t0)
                      .count();
    return res;
}

}  // namespace

CalibrationResult levenberg_marquardt(const PricingNet& net, const CalibrationTarget& target,
                                      std::span<const double> theta_init, const LMConfig& cfg) {
    auto t0 = std::chrono::steady_clock::now();
    SurfaceObjective obj(net, target);
    SolveOutcome o = lm_minimize(obj.as_lsq(), normalized_init(net, theta_init), cfg);
    return finish(net, obj, o, "lm", t0);
}

CalibrationResult gradient_descent(const PricingNet& net, const CalibrationTarget& target,
                                   std::span<const double> theta_init, const GDConfig& cfg) {
    auto t0 = std::chrono::steady_clock::now();
    SurfaceObjective obj(net, target);
    SolveOutcome o = gd_minimize(obj.as_lsq(), normalized_init(net, theta_init), cfg);
    return finish(net, obj, o, "gd", t0);
}

CalibrationResult nelder_mead(const PricingNet& net, const CalibrationTarget& target,
                              std::span<const double> theta_init, const NMConfig& cfg) {
    auto t0 = std::chrono::steady_clock::now();
    SurfaceObjective obj(net, target);
    SolveOutcome o = nm_minimize(obj.as_scalar(), normalized_init(net, theta_init), cfg);
    return finish(net, obj, o, "nm", t0);
}

CalibrationResult differential_evolution(const PricingNet& net,
                                         const CalibrationTarget& target,
                                         const DEConfig& cfg) {
    auto t0 = std::chrono::steady_clock::now();
    SurfaceObjective obj(net, target);
    SolveOutcome o = de_minimize(obj.as_scalar(), cfg);
    return finish(net, obj, o, "de", t0);
}

std::vector<double> param_relative_error(std::span<const double> theta_hat,
                                         std::span<const double> theta_bar) {
    if (theta_hat.size() != theta_bar.size())
        throw std::domain_error("param_relative_error: dimension mismatch");
    std::vector<double> e(theta_hat.size());
    for (std::size_t i = 0; i < e.size(); ++i) {
        double denom = std::abs(theta_bar[i]);
        e[i] = denom == 0.0 ? std::numeric_limits<double>::infinity()
                            : std::abs(theta_hat[i] - theta_bar[i]) / denom;
    }
    return e;
}

double rmse(const VolSurface& a, const VolSurface& b) {
    if (!(a.grid() == b.grid())) throw ConfigError("rmse: grids differ");
    return rmse_flat(a.vols().storage(), b.vols().storage());
}

double rmse_flat(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw std::domain_error("rmse_flat: length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double d = a[i] - b[i];
        s += d * d;
    }
    return std::sqrt(s);
}

}  // namespace vollab
