#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "vollab/black_scholes.hpp"
#include "vollab/rng.hpp"
#include "vollab/simd.hpp"

using namespace vollab;

namespace {

std::vector<double> random_vec(Xoshiro256pp& rng, std::size_t n, double lo = -3.0,
                               double hi = 3.0) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.uniform(lo, hi);
    return v;
}

// Runs fn under both backends and returns {scalar_result, avx2_result}.
template <typename F>
auto both_backends(const F& fn) {
    simd::set_backend(simd::Backend::scalar);
    auto scalar = fn();
    simd::set_backend(simd::avx2_supported() ? simd::Backend::avx2 : simd::Backend::scalar);
    auto vec = fn();
    return std::pair(scalar, vec);
}

}  // namespace

TEST_CASE("backend dispatch is sane") {
    simd::Backend original = simd::active_backend();
    simd::set_backend(simd::Backend::scalar);
    CHECK(simd::active_backend() == simd::Backend::scalar);
    if (simd::avx2_supported()) {
        simd::set_backend(simd::Backend::avx2);
        CHECK(simd::active_backend() == simd::Backend::avx2);
    } else {
        CHECK_THROWS_AS(simd::set_backend(simd::Backend::avx2), NumericalError);
    }
    simd::set_backend(original);
}

TEST_CASE("dot/axpy/reduce equivalence") {
    Xoshiro256pp rng(11);
    for (std::size_t n : {1u, 3u, 4u, 7u, 64u, 257u}) {
        std::vector<double> a = random_vec(rng, n), b = random_vec(rng, n);
        auto [ds, dv] = both_backends([&] { return simd::dot(a.data(), b.data(), n); });
        CHECK(ds == doctest::Approx(dv).epsilon(1e-13));

        auto [ss, sv] = both_backends([&] { return simd::reduce_sum(a.data(), n); });
        CHECK(ss == doctest::Approx(sv).epsilon(1e-13));

        auto run_axpy = [&] {
            std::vector<double> y = b;
            simd::axpy(0.7, a.data(), y.data(), n);
            return y;
        };
        auto [ys, yv] = both_backends(run_axpy);
        for (std::size_t i = 0; i < n; ++i) CHECK(ys[i] == doctest::Approx(yv[i]).epsilon(1e-14));
    }
}

TEST_CASE("gemv family equivalence") {
    Xoshiro256pp rng(12);
    for (auto [rows, cols] : {std::pair<std::size_t, std::size_t>{3, 5},
                              {30, 11}, {88, 30}, {50, 100}}) {
        std::vector<double> a = random_vec(rng, rows * cols);
        std::vector<double> x = random_vec(rng, cols);
        std::vector<double> xt = random_vec(rng, rows);
        std::vector<double> bias = random_vec(rng, rows);

        auto run_gemv = [&] {
            std::vector<double> y(rows);
            simd::gemv(a.data(), rows, cols, x.data(), bias.data(), y.data());
            return y;
        };
        auto [gs, gv] = both_backends(run_gemv);
        for (std::size_t i = 0; i < rows; ++i)
            CHECK(gs[i] == doctest::Approx(gv[i]).epsilon(1e-12));

        auto run_gemv_t = [&] {
            std::vector<double> y(cols);
            simd::gemv_t(a.data(), rows, cols, xt.data(), y.data());
            return y;
        };
        auto [ts, tv] = both_backends(run_gemv_t);
        for (std::size_t i = 0; i < cols; ++i)
            CHECK(ts[i] == doctest::Approx(tv[i]).epsilon(1e-12));

        auto run_ger = [&] {
            std::vector<double> m = a;
            simd::ger(m.data(), rows, cols, 0.3, xt.data(), x.data());
            return m;
        };
        auto [rs, rv] = both_backends(run_ger);
        for (std::size_t i = 0; i < rows * cols; ++i)
            CHECK(rs[i] == doctest::Approx(rv[i]).epsilon(1e-13));
    }
}

TEST_CASE("exp_v matches std::exp across the full range") {
    Xoshiro256pp rng(13);
    std::vector<double> xs;
    for (int i = 0; i < 4000; ++i) xs.push_back(rng.uniform(-700.0, 700.0));
    for (int i = 0; i < 1000; ++i) xs.push_back(rng.uniform(-30.0, 30.0));
    xs.insert(xs.end(), {0.0, 1.0, -1.0, 709.0, -745.0, -0.0, 1e-300, 708.5, -708.5});

    std::vector<double> out(xs.size());
    simd::set_backend(simd::avx2_supported() ? simd::Backend::avx2 : simd::Backend::scalar);
    simd::exp_v(xs.data(), out.data(), xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        double ref = std::exp(xs[i]);
        if (ref > 1e-280) {
            CHECK(std::abs(out[i] - ref) <= 4e-15 * ref);
        } else {
            CHECK(out[i] == doctest::Approx(ref).epsilon(1e-9));
        }
    }
}

TEST_CASE("elu_v equivalence and values") {
    std::vector<double> xs = {-5.0, -1.0, -1e-8, 0.0, 1e-8, 0.5, 3.0};
    auto run = [&] {
        std::vector<double> y(xs.size());
        simd::elu_v(xs.data(), y.data(), xs.size());
        return y;
    };
    auto [s, v] = both_backends(run);
    for (std::size_t i = 0; i < xs.size(); ++i) {
        CHECK(s[i] == doctest::Approx(v[i]).epsilon(1e-12));
        double expect = xs[i] >= 0 ? xs[i] : std::expm1(xs[i]);
        CHECK(s[i] == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("norminv_v: backend equivalence and CDF inversion accuracy") {
    Xoshiro256pp rng(14);
    std::vector<double> u(20000);
    for (double& x : u) x = rng.uniform01();
    u.insert(u.end(), {1e-12, 1e-6, 0.024, 0.0243, 0.5, 0.9757, 0.999999, 1 - 1e-12});

    auto run = [&] {
        std::vector<double> z(u.size());
        simd::norminv_v(u.data(), z.data(), u.size());
        return z;
    };
    auto [zs, zv] = both_backends(run);
    for (std::size_t i = 0; i < u.size(); ++i) {
        CHECK(std::abs(zs[i] - zv[i]) < 1e-12 * std::max(1.0, std::abs(zs[i])));
        // Acklam's approximation: |Phi(z) - u| below 2e-9.
        CHECK(std::abs(norm_cdf(zs[i]) - u[i]) < 2e-9);
    }
}

TEST_CASE("centered_dot equivalence") {
    Xoshiro256pp rng(15);
    std::vector<double> x = random_vec(rng, 1001, 0.5, 1.5), y = random_vec(rng, 1001, 0.0, 2.0);
    auto [s, v] = both_backends(
        [&] { return simd::centered_dot(x.data(), y.data(), 1.0, 1.0, x.size()); });
    CHECK(s == doctest::Approx(v).epsilon(1e-12));
}

TEST_CASE("tri_matvec8 equivalence against direct triangular product") {
    Xoshiro256pp rng(16);
    const std::size_t dim = 53;
    std::vector<double> lower(dim * dim, 0.0);
    for (std::size_t i = 0; i < dim; ++i)
        for (std::size_t j = 0; j <= i; ++j) lower[i * dim + j] = rng.uniform(-1.0, 1.0);
    std::vector<double> u = random_vec(rng, dim * 8);

    auto run = [&] {
        std::vector<double> out(dim * 8);
        simd::tri_matvec8(lower.data(), dim, u.data(), out.data());
        return out;
    };
    auto [s, v] = both_backends(run);
    for (std::size_t i = 0; i < s.size(); ++i)
        CHECK(s[i] == doctest::Approx(v[i]).epsilon(1e-12));

    // direct reference
    for (std::size_t i = 0; i < dim; ++i)
        for (int r = 0; r < 8; ++r) {
            double acc = 0.0;
            for (std::size_t j = 0; j <= i; ++j) acc += lower[i * dim + j] * u[j * 8 + r];
            CHECK(s[i * 8 + r] == doctest::Approx(acc).epsilon(1e-12));
        }
}

TEST_CASE("log_euler_step and running_min equivalence") {
    Xoshiro256pp rng(17);
    std::vector<double> v = random_vec(rng, 333, 0.001, 0.5);
    std::vector<double> dw = random_vec(rng, 333, -0.1, 0.1);
    std::vector<double> s0 = random_vec(rng, 333, -0.5, 0.5);

    auto run_step = [&] {
        std::vector<double> s = s0;
        simd::log_euler_step(s.data(), v.data(), dw.data(), 0.02, s.size());
        return s;
    };
    auto [as, av] = both_backends(run_step);
    for (std::size_t i = 0; i < as.size(); ++i)
        CHECK(as[i] == doctest::Approx(av[i]).epsilon(1e-14));

    auto run_min = [&] {
        std::vector<double> m = s0;
        simd::running_min(m.data(), dw.data(), m.size());
        return m;
    };
    auto [ms, mv] = both_backends(run_min);
    for (std::size_t i = 0; i < ms.size(); ++i) {
        CHECK(ms[i] == mv[i]);
        CHECK(ms[i] == std::min(s0[i], dw[i]));
    }
}

TEST_CASE("fill_normals has sane moments") {
    Xoshiro256pp rng = make_stream(7, StreamKind::path_block, 0);
    std::vector<double> z(200000);
    fill_normals(rng, z.data(), z.size());
    double sum = 0.0, sumsq = 0.0;
    for (double x : z) {
        sum += x;
        sumsq += x * x;
    }
    double n = static_cast<double>(z.size());
    double mean = sum / n;
    double var = sumsq / n - mean * mean;
    CHECK(std::abs(mean) < 4.0 / std::sqrt(n));          // 4 sigma
    CHECK(std::abs(var - 1.0) < 4.0 * std::sqrt(2.0 / n));
}
