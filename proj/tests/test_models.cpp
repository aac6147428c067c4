#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "vollab/grid.hpp"
#include "vollab/models.hpp"
#include "vollab/rng.hpp"

using namespace vollab;

TEST_CASE("forward variance curve lookup") {
    ForwardVarianceCurve flat = ForwardVarianceCurve::flat(0.04);
    CHECK(flat.at(0.05) == 0.04);
    CHECK(flat.at(2.5) == 0.04);  // flat extension past the last knot

    std::vector<double> values = {0.01, 0.02, 0.03, 0.04, 0.05, 0.06, 0.07, 0.08};
    ForwardVarianceCurve curve(default_curve_knots(), values);
    // left-closed at the first knot: intervals are (t_{i-1}, t_i]
    CHECK(curve.at(default_curve_knots()[0]) == values[0]);
    CHECK(curve.at(default_curve_knots()[0] + 1e-12) == values[1]);

    // t = 1.0 sits in (0.9, 1.2], the fifth interval; check by direct scan
    double t = 1.0;
    std::size_t expected = 0;
    double prev = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (t > prev && t <= default_curve_knots()[i]) expected = i;
        prev = default_curve_knots()[i];
    }
    CHECK(expected == 4);
    CHECK(curve.at(t) == values[4]);

    CHECK_THROWS_AS(curve.at(0.0), std::domain_error);
    CHECK_THROWS_AS(curve.at(-1.0), std::domain_error);
}

TEST_CASE("curve is piecewise constant on half-open intervals") {
    std::vector<double> values = {0.02, 0.05, 0.03, 0.08, 0.04, 0.06, 0.11, 0.09};
    ForwardVarianceCurve curve(default_curve_knots(), values);
    Xoshiro256pp rng(3);
    for (int k = 0; k < 5000; ++k) {
        double t = rng.uniform(1e-6, 2.5);
        double prev = 0.0;
        double expect = values.back();
        for (std::size_t i = 0; i < values.size(); ++i) {
            if (t > prev && t <= curve.knot_times[i]) {
                expect = values[i];
                break;
            }
            prev = curve.knot_times[i];
        }
        CHECK(curve.at(t) == expect);
    }
}

TEST_CASE("normalize/denormalize theta") {
    Bounds b({0.025}, {0.5});
    CHECK(normalize_theta(std::vector<double>{0.1}, b)[0] ==
          doctest::Approx(-0.68421052631578949).epsilon(1e-14));

    Bounds box({0.0, -1.0, 2.0}, {1.0, 1.0, 6.0});
    std::vector<double> lo = box.lower, hi = box.upper, mid = box.midpoint();
    auto z_lo = normalize_theta(lo, box);
    auto z_hi = normalize_theta(hi, box);
    auto z_mid = normalize_theta(mid, box);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(z_lo[i] == doctest::Approx(-1.0));
        CHECK(z_hi[i] == doctest::Approx(1.0));
        CHECK(z_mid[i] == doctest::Approx(0.0));
    }
    CHECK(denormalize_theta(std::vector<double>{-1.0, -1.0, -1.0}, box) == box.lower);
    CHECK(denormalize_theta(std::vector<double>{1.0, 1.0, 1.0}, box) == box.upper);

    CHECK_THROWS_AS(normalize_theta(std::vector<double>{2.0, 0.0, 3.0}, box),
                    std::domain_error);
    CHECK_THROWS_AS(denormalize_theta(std::vector<double>{1.5, 0.0, 0.0}, box),
                    std::domain_error);
}

TEST_CASE("normalize/denormalize round trip over random boxes") {
    Xoshiro256pp rng(5);
    for (int k = 0; k < 10000; ++k) {
        std::size_t dim = 1 + rng.below(11);
        std::vector<double> lo(dim), hi(dim), theta(dim);
        for (std::size_t i = 0; i < dim; ++i) {
            lo[i] = rng.uniform(-10.0, 10.0);
            hi[i] = lo[i] + rng.uniform(1e-3, 10.0);
        }
        Bounds box(lo, hi);
        for (std::size_t i = 0; i < dim; ++i) theta[i] = rng.uniform(lo[i], hi[i]);
        auto back = denormalize_theta(normalize_theta(theta, box), box);
        for (std::size_t i = 0; i < dim; ++i)
            CHECK(back[i] == doctest::Approx(theta[i]).epsilon(1e-12));
    }
}

TEST_CASE("Feller condition on Heston parameters") {
    HestonParams bad{1.0, 0.04, 0.3, -0.5, 0.04, 1.0};
    CHECK(!bad.feller_ok());  // 0.08 < 0.09
    CHECK_THROWS_AS(ModelParams{bad}, std::domain_error);

    HestonParams good{2.0, 0.04, 0.3, -0.5, 0.04, 1.0};
    CHECK(good.feller_ok());  // 0.16 > 0.09
    ModelParams mp(good);
    CHECK(mp.kind() == ModelKind::heston);
}

TEST_CASE("flat view round-trips losslessly") {
    Xoshiro256pp rng(6);
    for (ModelKind kind : {ModelKind::rough_bergomi, ModelKind::one_factor_bergomi,
                           ModelKind::heston}) {
        Bounds box = default_bounds(kind);
        for (int k = 0; k < 200; ++k) {
            std::vector<double> theta(box.dim());
            do {
                for (std::size_t i = 0; i < box.dim(); ++i)
                    theta[i] = rng.uniform(box.lower[i], box.upper[i]);
            } while (kind == ModelKind::heston && !(2 * theta[0] * theta[1] > theta[2] * theta[2]));
            ModelParams mp = ModelParams::from_flat(kind, theta);
            CHECK(mp.to_flat() == theta);
        }
    }
}

TEST_CASE("default bounds are valid boxes; Heston box is Feller-safe") {
    for (ModelKind kind : {ModelKind::rough_bergomi, ModelKind::one_factor_bergomi,
                           ModelKind::heston}) {
        Bounds b = default_bounds(kind);
        CHECK(b.dim() == theta_dim(kind));
        for (std::size_t i = 0; i < b.dim(); ++i) CHECK(b.lower[i] < b.upper[i]);
    }
    Bounds h = default_bounds(ModelKind::heston);
    CHECK(2.0 * h.lower[0] * h.lower[1] > h.upper[2] * h.upper[2]);
}

TEST_CASE("training and historical grids") {
    StrikeMaturityGrid g = default_training_grid();
    CHECK(g.n_maturities() == 8);
    CHECK(g.n_strikes() == 11);
    CHECK(g.strikes[0] == 0.5);
    CHECK(g.strikes[10] == 1.5);
    CHECK(g.maturities[7] == 2.0);
    CHECK(g.n_cells() == 88);

    StrikeMaturityGrid h = historical_grid();
    CHECK(h.n_maturities() == 5);
    CHECK(h.n_strikes() == 9);
    CHECK(h.maturities[0] == doctest::Approx(1.0 / 12));
    CHECK(h.strikes[8] == doctest::Approx(1.25));
    CHECK(h.n_cells() == 45);

    StrikeMaturityGrid b = default_barrier_grid();
    for (double lvl : b.strikes) CHECK(lvl < 1.0);
}

TEST_CASE("surface flatten/unflatten") {
    StrikeMaturityGrid g = default_training_grid();
    Matrix vols(8, 11);
    Xoshiro256pp rng(7);
    for (double& v : vols.storage()) v = rng.uniform(0.05, 0.8);
    VolSurface s(g, vols);

    std::vector<double> flat = flatten(s);
    CHECK(flat.size() == 88);
    for (std::size_t i = 0; i < 8; ++i)
        for (std::size_t j = 0; j < 11; ++j) CHECK(flat[i * 11 + j] == s(i, j));

    VolSurface back = unflatten(g, flat);
    for (std::size_t i = 0; i < 8; ++i)
        for (std::size_t j = 0; j < 11; ++j) CHECK(back(i, j) == s(i, j));

    Matrix bad = vols;
    bad(3, 4) = std::nan("");
    CHECK_THROWS_AS(VolSurface(g, bad), ConfigError);
    Matrix neg = vols;
    neg(0, 0) = -0.1;
    CHECK_THROWS_AS(VolSurface(g, neg), ConfigError);
}
