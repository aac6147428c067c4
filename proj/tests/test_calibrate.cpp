#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "vollab/calibrate.hpp"
#include "vollab/rng.hpp"

using namespace vollab;

namespace {

// Small synthetic pricing net used for self-calibration tests: 3 parameters,
// 6 outputs, moderate weights so the landscape is benign.
PricingNet make_test_net(uint64_t seed) {
    PricingNet pn;
    pn.net = MLP::create({3, 10, 10, 6}, seed);
    pn.theta_bounds = Bounds({0.1, -1.0, 0.5}, {2.0, 1.0, 4.0});
    pn.vol_mean = 0.25;
    pn.vol_std = 0.08;
    pn.grid = StrikeMaturityGrid({0.5, 1.0}, {0.9, 1.0, 1.1});
    pn.model = ModelKind::heston;  // tag only; dimension is what matters here
    return pn;
}

CalibrationTarget target_at(const PricingNet& pn, std::span<const double> theta) {
    return CalibrationTarget{unflatten(pn.grid, pn.predict_flat(theta)), std::nullopt};
}

LsqProblem linear_problem(const Matrix& a, const std::vector<double>& b, Bounds box) {
    LsqProblem p;
    p.dim = a.cols();
    p.n_res = a.rows();
    p.box = std::move(box);
    p.residuals = [&a, &b](std::span<const double> x, std::vector<double>& r) {
        r.resize(a.rows());
        for (std::size_t i = 0; i < a.rows(); ++i) {
            double s = -b[i];
            for (std::size_t j = 0; j < a.cols(); ++j) s += a(i, j) * x[j];
            r[i] = s;
        }
    };
    p.jacobian = [&a](std::span<const double>, Matrix& jac) { jac = a; };
    return p;
}

double rosenbrock(std::span<const double> x) {
    double a = 1.0 - x[0];
    double b = x[1] - x[0] * x[0];
    return a * a + 100.0 * b * b;
}

double ackley(std::span<const double> x) {
    double sq = 0.5 * (x[0] * x[0] + x[1] * x[1]);
    double cs = 0.5 * (std::cos(2 * M_PI * x[0]) + std::cos(2 * M_PI * x[1]));
    return -20.0 * std::exp(-0.2 * std::sqrt(sq)) - std::exp(cs) + 20.0 + std::exp(1.0);
}

}  // namespace

TEST_CASE("LM is exact on linear least squares") {
    Xoshiro256pp rng(3);
    Matrix a(5, 3);
    for (double& v : a.storage()) v = rng.uniform(-1.0, 1.0);
    std::vector<double> x_true = {0.3, -0.4, 0.7};
    std::vector<double> b(5, 0.0);
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 3; ++j) b[i] += a(i, j) * x_true[j];

    Bounds box({-2.0, -2.0, -2.0}, {2.0, 2.0, 2.0});
    LsqProblem p = linear_problem(a, b, box);

    SUBCASE("converges to machine precision") {
        SolveOutcome o = lm_minimize(p, std::vector<double>{0.0, 0.0, 0.0}, {});
        CHECK(o.converged);
        CHECK(o.iterations <= 8);
        for (std::size_t j = 0; j < 3; ++j)
            CHECK(o.x[j] == doctest::Approx(x_true[j]).epsilon(1e-8));
    }
    SUBCASE("two iterations already give the Gauss-Newton answer") {
        LMConfig cfg;
        cfg.max_iters = 2;
        SolveOutcome o = lm_minimize(p, std::vector<double>{0.0, 0.0, 0.0}, cfg);
        for (std::size_t j = 0; j < 3; ++j)
            CHECK(std::abs(o.x[j] - x_true[j]) < 1e-5);
    }
    SUBCASE("huge damping turns the step into steepest descent") {
        // one iteration, lambda = 1e6: step ~ -J^T r / lambda
        LMConfig cfg;
        cfg.max_iters = 1;
        cfg.lambda0 = 1e6;
        std::vector<double> x0 = {0.5, 0.5, 0.5};
        SolveOutcome o = lm_minimize(p, x0, cfg);
        std::vector<double> r0(5), g(3, 0.0);
        p.residuals(x0, r0);
        for (std::size_t i = 0; i < 5; ++i)
            for (std::size_t j = 0; j < 3; ++j) g[j] += a(i, j) * r0[i];
        double dot = 0.0, ns = 0.0, ng = 0.0;
        for (std::size_t j = 0; j < 3; ++j) {
            double step = o.x[j] - x0[j];
            dot += step * -g[j];
            ns += step * step;
            ng += g[j] * g[j];
        }
        CHECK(dot / std::sqrt(ns * ng) > 0.99);
    }
}

TEST_CASE("gradient descent on a quadratic bowl") {
    Matrix a(3, 3);
    a(0, 0) = 1.0;
    a(1, 1) = 2.0;
    a(2, 2) = 0.5;
    std::vector<double> b = {0.5, -1.0, 0.25};
    Bounds box({-3.0, -3.0, -3.0}, {3.0, 3.0, 3.0});
    LsqProblem p = linear_problem(a, b, box);

    std::vector<double> objective_trace;
    LsqProblem traced = p;
    traced.residuals = [&](std::span<const double> x, std::vector<double>& r) {
        p.residuals(x, r);
        double obj = 0.0;
        for (double v : r) obj += 0.5 * v * v;
        objective_trace.push_back(obj);
    };

    GDConfig cfg;
    cfg.step = 0.2;
    SolveOutcome o = gd_minimize(traced, std::vector<double>{2.0, 2.0, 2.0}, cfg);
    CHECK(o.converged);
    CHECK(o.x[0] == doctest::Approx(0.5).epsilon(1e-5));
    CHECK(o.x[1] == doctest::Approx(-0.5).epsilon(1e-5));
    CHECK(o.x[2] == doctest::Approx(0.5).epsilon(1e-5));
    for (std::size_t k = 1; k < objective_trace.size(); ++k)
        CHECK(objective_trace[k] <= objective_trace[k - 1] + 1e-12);
}

TEST_CASE("Nelder-Mead solves 2-d Rosenbrock") {
    ScalarProblem p;
    p.dim = 2;
    p.box = Bounds({-5.0, -5.0}, {5.0, 5.0});
    std::size_t evals_outside = 0;
    p.objective = [&](std::span<const double> x) {
        if (!p.box.contains(x, 1e-12)) ++evals_outside;
        return rosenbrock(x);
    };
    NMConfig cfg;
    cfg.max_evals = 2000;
    SolveOutcome o = nm_minimize(p, std::vector<double>{-1.2, 1.0}, cfg);
    CHECK(o.objective < 1e-6);
    CHECK(o.x[0] == doctest::Approx(1.0).epsilon(1e-3));
    CHECK(o.x[1] == doctest::Approx(1.0).epsilon(1e-3));
    CHECK(evals_outside == 0);
    CHECK(o.n_objective_evals <= 2000);
}

TEST_CASE("differential evolution finds the Ackley global minimum") {
    ScalarProblem p;
    p.dim = 2;
    p.box = Bounds({-4.0, -4.0}, {4.0, 4.0});
    std::size_t evals_outside = 0;
    p.objective = [&](std::span<const double> x) {
        if (!p.box.contains(x, 1e-12)) ++evals_outside;
        return ackley(x);
    };
    DEConfig cfg;
    cfg.seed = 11;
    SolveOutcome o = de_minimize(p, cfg);
    CHECK(o.objective < 1e-4);
    CHECK(std::abs(o.x[0]) < 1e-4);
    CHECK(std::abs(o.x[1]) < 1e-4);
    CHECK(evals_outside == 0);

    SolveOutcome o2 = de_minimize(p, cfg);
    CHECK(o.x == o2.x);  // deterministic given the seed
}

TEST_CASE("surface objective: residuals, jacobian, objective FD") {
    PricingNet pn = make_test_net(21);
    std::vector<double> theta_bar = {0.7, 0.2, 2.5};
    CalibrationTarget target = target_at(pn, theta_bar);
    SurfaceObjective obj(pn, target);

    std::vector<double> z_bar = normalize_theta(theta_bar, pn.theta_bounds);
    std::vector<double> r;
    obj.residuals(z_bar, r);
    for (double v : r) CHECK(std::abs(v) < 1e-14);
    CHECK(obj.objective(z_bar) >= 0.0);

    // d(objective)/dz matches J^T r away from the optimum
    std::vector<double> z = {0.2, -0.3, 0.4};
    Matrix jac;
    obj.jacobian(z, jac);
    obj.residuals(z, r);
    const double h = 1e-6;
    for (std::size_t c = 0; c < 3; ++c) {
        std::vector<double> zp = z, zm = z;
        zp[c] += h;
        zm[c] -= h;
        double fd = (obj.objective(zp) - obj.objective(zm)) / (2.0 * h);
        double analytic = 0.0;
        for (std::size_t i = 0; i < r.size(); ++i) analytic += jac(i, c) * r[i];
        CHECK(std::abs(fd - analytic) < 1e-6 * std::max(1.0, std::abs(analytic)));
    }
}

TEST_CASE("self-calibration across solvers") {
    PricingNet pn = make_test_net(33);
    std::vector<double> theta_bar = {1.4, -0.6, 1.2};
    CalibrationTarget target = target_at(pn, theta_bar);
    std::vector<double> midpoint = pn.theta_bounds.midpoint();

    CalibrationResult lm = levenberg_marquardt(pn, target, midpoint);
    CHECK(lm.converged);
    CHECK(lm.rmse < 1e-6);
    CHECK(lm.solver == "lm");
    CHECK(pn.theta_bounds.contains(lm.theta_hat, 1e-12));

    CalibrationResult nm = nelder_mead(pn, target, midpoint);
    CHECK(nm.rmse < 1e-3);

    DEConfig de_cfg;
    de_cfg.seed = 4;
    CalibrationResult de = differential_evolution(pn, target, de_cfg);
    CHECK(de.rmse < 1e-3);
    CHECK(de.n_objective_evals > lm.n_objective_evals);

    GDConfig gd_cfg;
    gd_cfg.step = 0.1;
    gd_cfg.max_iters = 100000;
    CalibrationResult gd = gradient_descent(pn, target, midpoint, gd_cfg);
    CHECK(std::abs(gd.rmse - lm.rmse) < 1e-3);  // same answer on a convex-enough target
}

TEST_CASE("parameter relative error and RMSE metrics") {
    std::vector<double> hat = {1.1, 2.0, 0.0};
    std::vector<double> bar = {1.0, 2.0, 0.0};
    std::vector<double> er = param_relative_error(hat, bar);
    CHECK(er[0] == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(er[1] == 0.0);
    CHECK(std::isinf(er[2]));  // relative error blows up at zero

    StrikeMaturityGrid grid({0.5, 1.0}, {0.9, 1.1});
    Matrix va(2, 2, 0.2), vb(2, 2, 0.2);
    VolSurface sa(grid, va), sb(grid, vb);
    CHECK(rmse(sa, sb) == 0.0);

    vb(1, 1) = 0.2 + 3e-3;
    VolSurface sc(grid, vb);
    CHECK(rmse(sa, sc) == doctest::Approx(3e-3).epsilon(1e-12));

    // brute-force double loop
    Xoshiro256pp rng(9);
    Matrix vx(2, 2), vy(2, 2);
    for (double& v : vx.storage()) v = rng.uniform(0.1, 0.5);
    for (double& v : vy.storage()) v = rng.uniform(0.1, 0.5);
    double acc = 0.0;
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 2; ++j)
            acc += (vx(i, j) - vy(i, j)) * (vx(i, j) - vy(i, j));
    CHECK(rmse(VolSurface(grid, vx), VolSurface(grid, vy)) ==
          doctest::Approx(std::sqrt(acc)).epsilon(1e-12));
}

TEST_CASE("identical target, init and seed give identical results") {
    PricingNet pn = make_test_net(55);
    std::vector<double> theta_bar = {0.9, 0.5, 3.0};
    CalibrationTarget target = target_at(pn, theta_bar);
    std::vector<double> midpoint = pn.theta_bounds.midpoint();

    CalibrationResult a = levenberg_marquardt(pn, target, midpoint);
    CalibrationResult b = levenberg_marquardt(pn, target, midpoint);
    CHECK(a.theta_hat == b.theta_hat);
    CHECK(a.rmse == b.rmse);
    CHECK(a.n_objective_evals == b.n_objective_evals);
}
