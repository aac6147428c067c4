#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "vollab/black_scholes.hpp"
#include "vollab/mc_engine.hpp"
#include "vollab/rng.hpp"

using namespace vollab;

namespace {

// Independent discrete-convolution oracle for the Volterra covariances:
// midpoint rule on [0, m - du] plus an analytic last cell for the kernel
// singularity. Stays independent of the quadrature used by the module.
double oracle_cov_xx(double s, double t, double hurst, std::size_t n_sub) {
    if (s > t) std::swap(s, t);
    double du = s / static_cast<double>(n_sub);
    double acc = 0.0;
    for (std::size_t k = 0; k + 1 < n_sub; ++k) {
        double u = (static_cast<double>(k) + 0.5) * du;
        acc += std::pow(t - u, hurst - 0.5) * std::pow(s - u, hurst - 0.5) * du;
    }
    if (t > s) {
        acc += std::pow(t - s + 0.5 * du, hurst - 0.5) * std::pow(du, hurst + 0.5) /
               (hurst + 0.5);
    } else {
        acc += std::pow(du, 2.0 * hurst) / (2.0 * hurst);
    }
    return 2.0 * hurst * acc;
}

double oracle_cov_xz(double t, double s, double hurst, std::size_t n_sub) {
    double m = std::min(s, t);
    double du = m / static_cast<double>(n_sub);
    double acc = 0.0;
    for (std::size_t k = 0; k + 1 < n_sub; ++k) {
        double u = (static_cast<double>(k) + 0.5) * du;
        acc += std::pow(t - u, hurst - 0.5) * du;
    }
    if (t > m)
        acc += std::pow(t - m + 0.5 * du, hurst - 0.5) * du;
    else
        acc += std::pow(du, hurst + 0.5) / (hurst + 0.5);
    return std::sqrt(2.0 * hurst) * acc;
}

// Continuous-monitoring GBM hitting probability via the reflection principle,
// with the Broadie-Glasserman-Kou barrier shift for discrete monitoring.
double gbm_hit_probability(double barrier, double sigma, double maturity, double dt) {
    double b_eff = barrier * std::exp(-0.5826 * sigma * std::sqrt(dt));
    double m = std::log(b_eff);
    double mu = -0.5 * sigma * sigma;
    double st = sigma * std::sqrt(maturity);
    return norm_cdf((m - mu * maturity) / st) +
           std::exp(2.0 * mu * m / (sigma * sigma)) * norm_cdf((m + mu * maturity) / st);
}

ModelParams flat_rbergomi(double xi, double nu, double rho, double hurst) {
    RBergomiParams p;
    p.xi.assign(8, xi);
    p.nu = nu;
    p.rho = rho;
    p.hurst = hurst;
    return ModelParams(std::move(p));
}

}  // namespace

TEST_CASE("time grid contains every maturity exactly") {
    StrikeMaturityGrid g = default_training_grid();
    TimeGrid tg = TimeGrid::build(100, g.maturities);
    CHECK(tg.times.size() == 100);  // all 8 maturities snap onto the uniform grid
    for (std::size_t q = 0; q < g.maturities.size(); ++q)
        CHECK(tg.times[tg.maturity_index[q]] == g.maturities[q]);

    TimeGrid th = TimeGrid::build(100, historical_grid().maturities);
    for (std::size_t q = 0; q < 5; ++q)
        CHECK(th.times[th.maturity_index[q]] == historical_grid().maturities[q]);
    for (std::size_t k = 1; k < th.times.size(); ++k) CHECK(th.times[k] > th.times[k - 1]);
}

TEST_CASE("cholesky with jitter") {
    Matrix a(2, 2);
    a(0, 0) = 4.0; a(0, 1) = 2.0; a(1, 0) = 2.0; a(1, 1) = 3.0;
    Matrix l = cholesky_lower(a);
    CHECK(l(0, 0) == doctest::Approx(2.0));
    CHECK(l(1, 0) == doctest::Approx(1.0));
    CHECK(l(1, 1) == doctest::Approx(std::sqrt(2.0)));

    Matrix bad(2, 2);
    bad(0, 0) = 1.0; bad(0, 1) = 2.0; bad(1, 0) = 2.0; bad(1, 1) = 1.0;
    CHECK_THROWS_AS(cholesky_lower(bad), NumericalError);
}

TEST_CASE("volterra covariance: H = 1/2 is Brownian") {
    std::vector<double> t = {0.1, 0.4, 0.7, 1.3, 2.0};
    Matrix c = volterra_covariance(t, 0.5);
    std::size_t n = t.size();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double mn = std::min(t[i], t[j]);
            CHECK(std::abs(c(i, j) - mn) < 1e-12);
            CHECK(std::abs(c(n + i, j) - mn) < 1e-12);
            CHECK(std::abs(c(n + i, n + j) - mn) < 1e-12);
        }
}

TEST_CASE("volterra covariance analytic pieces") {
    std::vector<double> t = {0.5, 1.0};
    Matrix c3 = volterra_covariance(t, 0.3);
    CHECK(std::abs(c3(3, 3) - 1.0) < 1e-12);  // Var[X_1] = 1^{0.6}
    CHECK(std::abs(c3(2, 2) - std::pow(0.5, 0.6)) < 1e-12);

    Matrix c1 = volterra_covariance(t, 0.1);
    // frozen references computed at 30-digit precision
    CHECK(std::abs(c1(3, 0) - 0.25360442827711013) < 1e-10);  // Cov[X_1, Z_0.5]
    CHECK(std::abs(c1(3, 2) - 0.25880151939831386) < 1e-9);   // Cov[X_1, X_0.5]
}

TEST_CASE("volterra covariance vs discrete-convolution oracle") {
    std::vector<double> t = {0.1, 0.5, 1.0, 1.7};
    const std::size_t n_sub = 100000;
    for (double hurst : {0.1, 0.3, 0.45}) {
        Matrix c = volterra_covariance(t, hurst);
        std::size_t n = t.size();
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j <= i; ++j) {
                double oracle = oracle_cov_xx(t[j], t[i], hurst, n_sub);
                CHECK(std::abs(c(n + i, n + j) - oracle) < 1e-3 * std::abs(oracle));
                double oracle_xz = oracle_cov_xz(t[i], t[j], hurst, n_sub);
                CHECK(std::abs(c(n + i, j) - oracle_xz) < 1e-3 * std::abs(oracle_xz));
            }
        }
        // full default-size grid factors with bounded jitter
        TimeGrid tg = TimeGrid::build(100, default_training_grid().maturities);
        CHECK_NOTHROW(cholesky_lower(volterra_covariance(tg.times, hurst)));
    }
}

TEST_CASE("ou driver covariance: beta -> 0 limit and brute-force check") {
    std::vector<double> t = {0.3, 0.8, 1.5};
    Matrix c0 = ou_driver_covariance(t, 0.0);
    std::size_t n = t.size();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double mn = std::min(t[i], t[j]);
            CHECK(std::abs(c0(n + i, n + j) - mn) < 1e-12);
            CHECK(std::abs(c0(n + i, j) - mn) < 1e-12);
        }

    double beta = 2.3;
    Matrix c = ou_driver_covariance(t, beta);
    const std::size_t n_sub = 200000;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double m = std::min(t[i], t[j]);
            double du = m / static_cast<double>(n_sub);
            double acc_yy = 0.0, acc_yz = 0.0;
            for (std::size_t k = 0; k < n_sub; ++k) {
                double u = (static_cast<double>(k) + 0.5) * du;
                acc_yy += std::exp(-beta * (t[i] - u)) * std::exp(-beta * (t[j] - u)) * du;
                acc_yz += std::exp(-beta * (t[i] - u)) * du;
            }
            CHECK(c(n + i, n + j) == doctest::Approx(acc_yy).epsilon(1e-6));
            CHECK(c(n + i, j) == doctest::Approx(acc_yz).epsilon(1e-6));
        }
}

TEST_CASE("simulate_paths: deterministic-variance limits") {
    SimConfig cfg;
    cfg.n_paths = 64;
    cfg.n_steps = 16;
    cfg.seed = 99;
    std::vector<double> t_grid = TimeGrid::build(16, {0.5, 1.0}).times;

    SUBCASE("rBergomi nu = 0 pins V at the curve") {
        PathSet ps = simulate_paths(flat_rbergomi(0.04, 0.0, -0.7, 0.1), cfg, t_grid);
        for (double v : ps.variance.storage()) CHECK(v == 0.04);
        for (double s : ps.spot.storage()) CHECK(s > 0.0);
        CHECK(ps.v0 == 0.04);
    }

    SUBCASE("1F Bergomi beta -> 0: Var[log V_t] ~ eta^2 t") {
        OneFactorBergomiParams p;
        p.xi.assign(8, 0.04);
        p.eta = 1.5;
        p.rho = -0.5;
        p.beta = 1e-8;
        SimConfig big = cfg;
        big.n_paths = 20000;
        PathSet ps = simulate_paths(ModelParams(std::move(p)), big, t_grid);
        std::size_t last = t_grid.size() - 1;
        double tt = t_grid[last];
        double sum = 0.0, sumsq = 0.0;
        for (std::size_t r = 0; r < big.n_paths; ++r) {
            double lv = std::log(ps.variance(r, last));
            sum += lv;
            sumsq += lv * lv;
        }
        double n = static_cast<double>(big.n_paths);
        double var = sumsq / n - (sum / n) * (sum / n);
        double expect = 1.5 * 1.5 * tt;
        // sample variance of a chi^2-ish statistic: ~3 sigma band
        CHECK(std::abs(var - expect) < 3.0 * expect * std::sqrt(2.0 / n));
    }

    SUBCASE("Heston with tiny vol-of-vol pins V at b") {
        HestonParams p{2.0, 0.09, 1e-8, -0.5, 0.09, 1.0};
        SimConfig big = cfg;
        big.n_paths = 4096;
        PathSet ps = simulate_paths(ModelParams(p), big, t_grid);
        std::size_t last = t_grid.size() - 1;
        double sum = 0.0, sumsq = 0.0;
        for (std::size_t r = 0; r < big.n_paths; ++r) {
            double v = ps.variance(r, last);
            sum += v;
            sumsq += v * v;
        }
        double n = static_cast<double>(big.n_paths);
        double var = sumsq / n - (sum / n) * (sum / n);
        CHECK(var < 1e-6);
    }
}

TEST_CASE("simulate_paths is bit-deterministic in (model, config, seed)") {
    SimConfig cfg;
    cfg.n_paths = 128;
    cfg.n_steps = 32;
    cfg.seed = 1234;
    std::vector<double> t_grid = TimeGrid::build(32, {0.5, 1.0}).times;
    ModelParams model = flat_rbergomi(0.05, 2.0, -0.6, 0.2);

    PathSet a = simulate_paths(model, cfg, t_grid);
    PathSet b = simulate_paths(model, cfg, t_grid);
    CHECK(a.spot.storage() == b.spot.storage());
    CHECK(a.variance.storage() == b.variance.storage());

    cfg.seed = 1235;
    PathSet c = simulate_paths(model, cfg, t_grid);
    CHECK(a.spot.storage() != c.spot.storage());
}

TEST_CASE("vanilla surface: degenerate rBergomi equals Black-Scholes") {
    SimConfig cfg;
    cfg.n_paths = 10000;
    cfg.n_steps = 100;
    cfg.seed = 31;
    StrikeMaturityGrid grid = default_training_grid();
    PriceGridResult r = mc_vanilla_surface(flat_rbergomi(0.04, 0.0, -0.7, 0.1), grid, cfg);

    // The 1e-5 floor covers wing cells whose exercise probability is below
    // ~3/n_paths: there the sample shows zero crossings, the reported stderr
    // collapses, and the irreducible gap equals the true time value (< 6e-6
    // at sigma = 0.2 on this grid).
    for (std::size_t i = 0; i < grid.n_maturities(); ++i)
        for (std::size_t j = 0; j < grid.n_strikes(); ++j) {
            double bs = bs_call(0.2, 1.0, grid.strikes[j], grid.maturities[i]);
            CHECK(std::abs(r.prices(i, j) - bs) <= 3.0 * r.stderrs(i, j) + 1e-5);
            CHECK(r.prices(i, j) >= std::max(1.0 - grid.strikes[j], 0.0) - 1e-9);
        }
}

TEST_CASE("vanilla surface: degenerate Heston equals Black-Scholes") {
    SimConfig cfg;
    cfg.n_paths = 10000;
    cfg.n_steps = 100;
    cfg.seed = 32;
    StrikeMaturityGrid grid = default_training_grid();
    HestonParams p{2.0, 0.09, 1e-6, -0.5, 0.09, 1.0};
    PriceGridResult r = mc_vanilla_surface(ModelParams(p), grid, cfg);
    for (std::size_t i = 0; i < grid.n_maturities(); ++i)
        for (std::size_t j = 0; j < grid.n_strikes(); ++j) {
            double bs = bs_call(0.3, 1.0, grid.strikes[j], grid.maturities[i]);
            CHECK(std::abs(r.prices(i, j) - bs) <= 3.0 * r.stderrs(i, j) + 1e-5);
        }
}

TEST_CASE("martingale property per maturity, all models") {
    // E[S_T] = 1 is exact for the discretization; this is a pure 3-sigma test
    // of the sampler, run over a few seeds with a small allowance for the
    // expected number of 3-sigma excursions.
    StrikeMaturityGrid grid({0.1, 0.5, 1.0, 2.0}, {1.0});
    std::size_t violations = 0, cells = 0;
    for (uint64_t seed : {1u, 2u, 3u, 4u, 5u}) {
        SimConfig cfg;
        cfg.n_paths = 8192;
        cfg.n_steps = 64;
        cfg.seed = seed;
        std::vector<ModelParams> models;
        models.push_back(flat_rbergomi(0.05, 1.5, -0.7, 0.15));
        {
            OneFactorBergomiParams p;
            p.xi.assign(8, 0.05);
            p.eta = 1.5;
            p.rho = -0.7;
            p.beta = 4.0;
            models.push_back(ModelParams(std::move(p)));
        }
        models.push_back(ModelParams(HestonParams{2.0, 0.09, 0.4, -0.6, 0.09, 1.0}));

        for (const ModelParams& model : models) {
            std::vector<double> t_grid = TimeGrid::build(cfg.n_steps, grid.maturities).times;
            TimeGrid tg = TimeGrid::build(cfg.n_steps, grid.maturities);
            PathSet ps = simulate_paths(model, cfg, tg.times);
            for (std::size_t q = 0; q < grid.maturities.size(); ++q) {
                std::size_t col = tg.maturity_index[q];
                double sum = 0.0, sumsq = 0.0;
                for (std::size_t r = 0; r < cfg.n_paths; ++r) {
                    double s = ps.spot(r, col);
                    sum += s;
                    sumsq += s * s;
                }
                double n = static_cast<double>(cfg.n_paths);
                double mean = sum / n;
                double se = std::sqrt(std::max(sumsq / n - mean * mean, 0.0) / n);
                ++cells;
                if (std::abs(mean - 1.0) > 3.0 * se) ++violations;
            }
        }
    }
    // 60 cells at ~0.3% violation probability each; allow 2
    CHECK(cells == 60);
    CHECK(violations <= 2);
}

TEST_CASE("control variate reduces reported stderr on >= 95% of cells") {
    StrikeMaturityGrid grid = default_training_grid();
    ModelParams model = flat_rbergomi(0.06, 1.2, -0.5, 0.3);
    std::size_t wins = 0, cells = 0;
    for (uint64_t seed = 0; seed < 20; ++seed) {
        SimConfig cfg;
        cfg.n_paths = 2000;
        cfg.n_steps = 50;
        cfg.seed = seed;
        PriceGridResult cv = mc_vanilla_surface(model, grid, cfg, true);
        PriceGridResult plain = mc_vanilla_surface(model, grid, cfg, false);
        for (std::size_t c = 0; c < cv.stderrs.size(); ++c) {
            ++cells;
            if (cv.stderrs.storage()[c] <= plain.stderrs.storage()[c]) ++wins;
        }
    }
    CHECK(static_cast<double>(wins) >= 0.95 * static_cast<double>(cells));
}

TEST_CASE("stderr scales like n^(-1/2)") {
    StrikeMaturityGrid grid({0.5, 1.0}, {0.9, 1.0, 1.1});
    ModelParams model = flat_rbergomi(0.04, 1.0, -0.5, 0.25);
    SimConfig small;
    small.n_paths = 4000;
    small.n_steps = 32;
    small.seed = 7;
    SimConfig big = small;
    big.n_paths = 16000;
    PriceGridResult rs = mc_vanilla_surface(model, grid, small);
    PriceGridResult rb = mc_vanilla_surface(model, grid, big);
    for (std::size_t c = 0; c < rs.stderrs.size(); ++c) {
        double ratio = rb.stderrs.storage()[c] / rs.stderrs.storage()[c];
        CHECK(ratio > 0.45);
        CHECK(ratio < 0.55);
    }
}

TEST_CASE("antithetic sampling works and keeps the martingale") {
    StrikeMaturityGrid grid({0.5, 1.0}, {1.0});
    ModelParams model = flat_rbergomi(0.04, 1.0, -0.5, 0.25);
    SimConfig cfg;
    cfg.n_paths = 8000;
    cfg.n_steps = 32;
    cfg.seed = 17;
    cfg.antithetic = true;
    PriceGridResult r = mc_vanilla_surface(model, grid, cfg);
    for (std::size_t c = 0; c < r.prices.size(); ++c) {
        CHECK(std::isfinite(r.prices.storage()[c]));
        CHECK(r.stderrs.storage()[c] >= 0.0);
    }
    SimConfig bad = cfg;
    bad.n_paths = 8001;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("barrier grid: complement identity, monotonicity, limits") {
    StrikeMaturityGrid bgrid({0.25, 0.5, 1.0, 2.0}, {0.01, 0.7, 0.8, 0.9});
    ModelParams model = flat_rbergomi(0.04, 1.5, -0.6, 0.2);
    SimConfig cfg;
    cfg.n_paths = 4096;
    cfg.n_steps = 64;
    cfg.seed = 5;
    auto [down_in, down_out] = mc_barrier_grid_both(model, bgrid, cfg);

    for (std::size_t i = 0; i < bgrid.n_maturities(); ++i)
        for (std::size_t j = 0; j < bgrid.n_strikes(); ++j) {
            double p_in = down_in.prices(i, j);
            double p_out = down_out.prices(i, j);
            CHECK(p_in >= 0.0);
            CHECK(p_in <= 1.0);
            CHECK(p_in + p_out == 1.0);  // exact complement on the shared path set
            if (i > 0) CHECK(p_in >= down_in.prices(i - 1, j));  // more time to hit
        }
    // unreachable barrier
    for (std::size_t i = 0; i < bgrid.n_maturities(); ++i) {
        CHECK(down_in.prices(i, 0) == 0.0);
        CHECK(down_out.prices(i, 0) == 1.0);
    }
    CHECK_THROWS_AS(
        mc_barrier_grid(model, StrikeMaturityGrid({1.0}, {1.5}), cfg, BarrierKind::down_in),
        std::domain_error);
}

TEST_CASE("barrier probabilities vs GBM reflection oracle (nu = 0)") {
    StrikeMaturityGrid bgrid({0.5, 1.0}, {0.7, 0.8, 0.9});
    ModelParams model = flat_rbergomi(0.04, 0.0, -0.5, 0.3);  // sigma = 0.2 GBM
    SimConfig cfg;
    cfg.n_paths = 20000;
    cfg.n_steps = 100;
    cfg.seed = 77;
    PriceGridResult down_in = mc_barrier_grid(model, bgrid, cfg, BarrierKind::down_in);
    double t_max = bgrid.maturities.back();
    double dt = t_max / static_cast<double>(cfg.n_steps);
    for (std::size_t i = 0; i < bgrid.n_maturities(); ++i)
        for (std::size_t j = 0; j < bgrid.n_strikes(); ++j) {
            double oracle = gbm_hit_probability(bgrid.strikes[j], 0.2,
                                                bgrid.maturities[i], dt);
            CHECK(std::abs(down_in.prices(i, j) - oracle) <=
                  3.0 * down_in.stderrs(i, j) + 2e-3);
        }
}

TEST_CASE("thread count does not change results") {
    StrikeMaturityGrid grid({0.5, 1.0}, {0.9, 1.0, 1.1});
    ModelParams model = flat_rbergomi(0.05, 1.8, -0.4, 0.12);
    SimConfig cfg;
    cfg.n_paths = 4096;
    cfg.n_steps = 32;
    cfg.seed = 555;
    set_max_threads(1);
    PriceGridResult one = mc_vanilla_surface(model, grid, cfg);
    set_max_threads(2);
    PriceGridResult two = mc_vanilla_surface(model, grid, cfg);
    set_max_threads(0);
    CHECK(one.prices.storage() == two.prices.storage());
    CHECK(one.stderrs.storage() == two.stderrs.storage());
}
