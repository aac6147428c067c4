#include "vollab/mc_engine.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <memory>
#include <mutex>

#include "vollab/rng.hpp"
#include "vollab/simd.hpp"

namespace vollab {

namespace {

// ---------------------------------------------------------------------------
// Adaptive Gauss-Kronrod 15(7) quadrature
// ---------------------------------------------------------------------------

// QUADPACK dqk15 nodes/weights on [-1, 1] (symmetric; node 0 last).
constexpr double kGkNodes[8] = {
    0.9914553711208126, 0.9491079123427585, 0.8648644233597691, 0.7415311855993944,
    0.5860872354676911, 0.4058451513773972, 0.2077849550078985, 0.0};
constexpr double kGkWeights[8] = {
    0.0229353220105292, 0.0630920926299786, 0.1047900103222502, 0.1406532597155259,
    0.1690047266392679, 0.1903505780647854, 0.2044329400752989, 0.2094821410847278};
constexpr double kGaussWeights[4] = {
    0.1294849661688697, 0.2797053914892767, 0.3818300505051189, 0.4179591836734694};

struct GkResult {
    double integral;
    double error;
};

template <typename F>
GkResult gk15(const F& f, double a, double b) {
    double c = 0.5 * (a + b);
    double h = 0.5 * (b - a);
    double fc = f(c);
    double kron = kGkWeights[7] * fc;
    double gauss = kGaussWeights[3] * fc;
    for (int k = 0; k < 7; ++k) {
        double x = h * kGkNodes[k];
        double f1 = f(c - x);
        double f2 = f(c + x);
        kron += kGkWeights[k] * (f1 + f2);
        if (k % 2 == 1) gauss += kGaussWeights[k / 2] * (f1 + f2);
    }
    return {kron * h, std::abs(kron - gauss) * h};
}

template <typename F>
double adaptive_gk(const F& f, double a, double b, double tol, int depth = 0) {
    GkResult r = gk15(f, a, b);
    if (r.error < tol || depth >= 48) return r.integral;
    double m = 0.5 * (a + b);
    return adaptive_gk(f, a, m, 0.5 * tol, depth + 1) +
           adaptive_gk(f, m, b, 0.5 * tol, depth + 1);
}

constexpr double kQuadTol = 1e-10;

// Cov[X_t, X_s] = 2H int_0^m (t-u)^{H-1/2} (s-u)^{H-1/2} du, m = min(s,t).
// After u = m - w^{1/(H+1/2)} and rescaling w to [0,1] this becomes
// 2H/(H+1/2) * m^{H+1/2} * int_0^1 (t - m + m*y^{1/(H+1/2)})^{H-1/2} dy,
// whose integrand is bounded.
double volterra_xx(double s, double t, double hurst) {
    if (s > t) std::swap(s, t);
    if (s == t) return std::pow(t, 2.0 * hurst);
    double half_plus = hurst + 0.5;
    double p = 1.0 / half_plus;
    double gap = t - s;
    auto f = [&](double y) { return std::pow(gap + s * std::pow(y, p), hurst - 0.5); };
    double integral = adaptive_gk(f, 0.0, 1.0, kQuadTol);
    return 2.0 * hurst / half_plus * std::pow(s, half_plus) * integral;
}

double volterra_xz(double t, double s, double hurst) {
    double half_plus = hurst + 0.5;
    double m = std::min(s, t);
    return std::sqrt(2.0 * hurst) / half_plus *
           (std::pow(t, half_plus) - std::pow(t - m, half_plus));
}

// (1 - e^{-2 beta t}) / (2 beta), continuous at beta = 0.
double ou_variance_scale(double beta, double t) {
    if (beta * t < 1e-12) return t;
    return -std::expm1(-2.0 * beta * t) / (2.0 * beta);
}

}  // namespace

void SimConfig::validate() const {
    if (n_paths < 2) throw ConfigError("n_paths must be >= 2");
    if (n_steps < 8) throw ConfigError("n_steps must be >= 8");
    if (antithetic && n_paths % 8 != 0)
        throw ConfigError("antithetic sampling requires n_paths divisible by 8");
}

TimeGrid TimeGrid::build(std::size_t n_steps, const std::vector<double>& maturities) {
    if (maturities.empty()) throw ConfigError("time grid needs at least one maturity");
    for (std::size_t k = 1; k < maturities.size(); ++k)
        if (!(maturities[k] > maturities[k - 1]))
            throw ConfigError("maturities must be strictly increasing");
    if (!(maturities.front() > 0.0)) throw ConfigError("maturities must be positive");

    double t_max = maturities.back();
    double dt = t_max / static_cast<double>(n_steps);
    std::vector<double> times(n_steps);
    for (std::size_t k = 0; k < n_steps; ++k) times[k] = dt * static_cast<double>(k + 1);

    // Snap near-coincident points to the exact maturity value so curve lookup
    // and payoff timing see the requested maturities bit-for-bit.
    for (double T : maturities) {
        auto it = std::lower_bound(times.begin(), times.end(), T - 0.5 * dt);
        bool snapped = false;
        for (; it != times.end() && *it < T + 0.5 * dt; ++it) {
            if (std::abs(*it - T) < 1e-9 * dt + 1e-15) {
                *it = T;
                snapped = true;
                break;
            }
        }
        if (!snapped) times.insert(std::upper_bound(times.begin(), times.end(), T), T);
    }
    times.erase(std::unique(times.begin(), times.end()), times.end());

    TimeGrid grid;
    grid.times = std::move(times);
    for (double T : maturities) {
        auto it = std::find(grid.times.begin(), grid.times.end(), T);
        if (it == grid.times.end()) throw NumericalError("maturity lost while building grid");
        grid.maturity_index.push_back(static_cast<std::size_t>(it - grid.times.begin()));
    }
    return grid;
}

Matrix volterra_covariance(const std::vector<double>& t_grid, double hurst) {
    if (t_grid.empty() || !(t_grid.front() > 0.0))
        throw ConfigError("t_grid must be nonempty with positive first element");
    for (std::size_t k = 1; k < t_grid.size(); ++k)
        if (!(t_grid[k] > t_grid[k - 1]))
            throw ConfigError("t_grid must be strictly increasing");
    if (!(hurst > 0.0 && hurst < 1.0)) throw std::domain_error("hurst must be in (0,1)");

    std::size_t n = t_grid.size();
    Matrix c(2 * n, 2 * n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double zz = std::min(t_grid[i], t_grid[j]);
            c(i, j) = zz;
            c(j, i) = zz;
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double xz = volterra_xz(t_grid[i], t_grid[j], hurst);
            c(n + i, j) = xz;
            c(j, n + i) = xz;
        }
    }
    // The X-X block is symmetric; fill the lower triangle in parallel rows.
    parallel_for(n, [&](std::size_t i) {
        for (std::size_t j = 0; j <= i; ++j)
            c(n + i, n + j) = volterra_xx(t_grid[j], t_grid[i], hurst);
    });
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < i; ++j) c(n + j, n + i) = c(n + i, n + j);
    return c;
}

Matrix ou_driver_covariance(const std::vector<double>& t_grid, double beta) {
    if (t_grid.empty() || !(t_grid.front() > 0.0))
        throw ConfigError("t_grid must be nonempty with positive first element");
    if (beta < 0.0) throw std::domain_error("beta must be >= 0");

    std::size_t n = t_grid.size();
    Matrix c(2 * n, 2 * n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double ti = t_grid[i], tj = t_grid[j];
            c(i, j) = std::min(ti, tj);
            double m = std::min(ti, tj);
            // Cov[Y_ti, Z_tj] = e^{-beta ti} (e^{beta m} - 1)/beta
            double yz = beta * m < 1e-12 ? m * std::exp(-beta * ti)
                                         : std::exp(-beta * ti) * std::expm1(beta * m) / beta;
            c(n + i, j) = yz;
            c(j, n + i) = yz;
            // Cov[Y_ti, Y_tj] = e^{-beta(ti+tj)} (e^{2 beta m} - 1)/(2 beta)
            double yy = beta * m < 1e-12
                            ? m * std::exp(-beta * (ti + tj))
                            : std::exp(-beta * (ti + tj)) * std::expm1(2.0 * beta * m) /
                                  (2.0 * beta);
            c(n + i, n + j) = yy;
        }
    return c;
}

Matrix cholesky_lower(const Matrix& a) {
    if (a.rows() != a.cols()) throw NumericalError("cholesky needs a square matrix");
    const std::size_t n = a.rows();
    static constexpr double kJitters[] = {0.0, 1e-14, 1e-12, 1e-10};

    for (double jitter : kJitters) {
        Matrix l(n, n);
        bool ok = true;
        std::size_t bad_pivot = 0;
        double bad_value = 0.0;
        for (std::size_t i = 0; i < n && ok; ++i) {
            for (std::size_t j = 0; j <= i; ++j) {
                double sum = a(i, j) - simd::dot(l.row(i), l.row(j), j);
                if (i == j) {
                    sum += jitter;
                    if (!(sum > 0.0)) {
                        ok = false;
                        bad_pivot = i;
                        bad_value = sum;
                        break;
                    }
                    l(i, j) = std::sqrt(sum);
                } else {
                    l(i, j) = sum / l(j, j);
                }
            }
        }
        if (ok) return l;
        if (jitter == kJitters[std::size(kJitters) - 1])
            throw NumericalError("cholesky failed at jitter 1e-10: pivot " +
                                 std::to_string(bad_pivot) + " = " + g17(bad_value));
    }
    throw NumericalError("cholesky failed");  // unreachable
}

// ---------------------------------------------------------------------------
// Path simulation
// ---------------------------------------------------------------------------

namespace {

constexpr std::size_t kLanes = 8;        // paths per simd block
constexpr std::size_t kBlocksPerChunk = 32;

struct BergomiPlan {
    std::shared_ptr<const Matrix> chol;   // 2n x 2n lower factor of (Z, X)
    std::vector<double> xi;               // xi_0(t_i)
    std::vector<double> drift_comp;       // 0.5 * volvol^2 * Var[X_{t_i}]
    double volvol = 0.0;
    double rho = 0.0;
    double v0 = 0.0;
};

struct HestonPlan {
    HestonParams p;
};

// Small cache for Cholesky factors: dataset sweeps rebuild per sample, but
// repeated pricing at fixed parameters (benchmarks, seed sweeps) reuses them.
struct CholCacheKey {
    ModelKind kind;
    uint64_t param_bits;
    uint64_t grid_hash;
    bool operator==(const CholCacheKey&) const = default;
};

std::shared_ptr<const Matrix> cached_cholesky(const CholCacheKey& key,
                                              const std::function<Matrix()>& make) {
    static std::mutex mu;
    static std::vector<std::pair<CholCacheKey, std::shared_ptr<const Matrix>>> cache;
    {
        std::lock_guard<std::mutex> lock(mu);
        for (auto& e : cache)
            if (e.first == key) return e.second;
    }
    auto value = std::make_shared<const Matrix>(make());
    std::lock_guard<std::mutex> lock(mu);
    for (auto& e : cache)
        if (e.first == key) return e.second;
    if (cache.size() >= 4) cache.erase(cache.begin());
    cache.emplace_back(key, value);
    return value;
}

uint64_t hash_times(const std::vector<double>& t) {
    return fnv1a64(t.data(), t.size() * sizeof(double));
}

uint64_t double_bits(double x) {
    uint64_t b;
    std::memcpy(&b, &x, sizeof(b));
    return b;
}

BergomiPlan make_bergomi_plan(const ModelParams& model, const std::vector<double>& t_grid) {
    BergomiPlan plan;
    ForwardVarianceCurve curve = model.variance_curve();
    std::size_t n = t_grid.size();
    plan.xi.resize(n);
    plan.drift_comp.resize(n);
    for (std::size_t i = 0; i < n; ++i) plan.xi[i] = curve.at(t_grid[i]);
    plan.v0 = curve.values.front();

    if (model.kind() == ModelKind::rough_bergomi) {
        const auto& p = model.rbergomi();
        plan.volvol = p.nu;
        plan.rho = p.rho;
        for (std::size_t i = 0; i < n; ++i)
            plan.drift_comp[i] = 0.5 * p.nu * p.nu * std::pow(t_grid[i], 2.0 * p.hurst);
        plan.chol = cached_cholesky(
            {model.kind(), double_bits(p.hurst), hash_times(t_grid)},
            [&] { return cholesky_lower(volterra_covariance(t_grid, p.hurst)); });
    } else {
        const auto& p = model.bergomi1f();
        plan.volvol = p.eta;
        plan.rho = p.rho;
        for (std::size_t i = 0; i < n; ++i)
            plan.drift_comp[i] = 0.5 * p.eta * p.eta * ou_variance_scale(p.beta, t_grid[i]);
        plan.chol = cached_cholesky(
            {model.kind(), double_bits(p.beta), hash_times(t_grid)},
            [&] { return cholesky_lower(ou_driver_covariance(t_grid, p.beta)); });
    }
    return plan;
}

// Scratch buffers for one 8-path block.
struct BlockScratch {
    std::vector<double> normals;   // joint (2n) + perp (n), laid out [component][lane]
    std::vector<double> zx;        // 2n x lanes
    std::vector<double> log_s;     // lanes
    std::vector<double> v_prev;    // lanes
    std::vector<double> v_curr;    // lanes
    std::vector<double> dw;        // lanes
    std::vector<double> arg;       // lanes
    std::vector<double> min_log;   // lanes
    std::vector<double> spot_row;  // lanes

    explicit BlockScratch(std::size_t n_times)
        : normals(3 * n_times * kLanes), zx(2 * n_times * kLanes), log_s(kLanes),
          v_prev(kLanes), v_curr(kLanes), dw(kLanes), arg(kLanes), min_log(kLanes),
          spot_row(kLanes) {}
};

void mirror_antithetic(double* normals, std::size_t components) {
    // Lanes 4..7 become the negation of lanes 0..3.
    for (std::size_t c = 0; c < components; ++c) {
        double* row = normals + c * kLanes;
        for (int r = 0; r < 4; ++r) row[4 + r] = -row[r];
    }
}

// Visitor receives, per time index i, the lane arrays of spot (log scale),
// instantaneous variance used on [t_{i-1}, t_i), and the running log-min.
using StepVisitor = std::function<void(std::size_t block, std::size_t i,
                                       const double* log_s, const double* v_at_ti,
                                       const double* min_log)>;

void simulate_block_bergomi(const BergomiPlan& plan, const std::vector<double>& t_grid,
                            uint64_t seed, std::size_t block, bool antithetic,
                            BlockScratch& s, const StepVisitor& visit) {
    const std::size_t n = t_grid.size();
    Xoshiro256pp rng = make_stream(seed, StreamKind::path_block, block);
    fill_normals(rng, s.normals.data(), 3 * n * kLanes);
    if (antithetic) mirror_antithetic(s.normals.data(), 3 * n);

    const double* joint = s.normals.data();           // 2n components
    const double* perp = s.normals.data() + 2 * n * kLanes;

    simd::tri_matvec8(plan.chol->data(), 2 * n, joint, s.zx.data());
    const double* z_levels = s.zx.data();
    const double* x_levels = s.zx.data() + n * kLanes;

    std::fill(s.log_s.begin(), s.log_s.end(), 0.0);
    std::fill(s.min_log.begin(), s.min_log.end(), 0.0);
    std::fill(s.v_prev.begin(), s.v_prev.end(), plan.v0);

    const double rho = plan.rho;
    const double rho_perp = std::sqrt(std::max(0.0, 1.0 - rho * rho));
    double t_prev = 0.0;

    for (std::size_t i = 0; i < n; ++i) {
        double dt = t_grid[i] - t_prev;
        double sqrt_dt = std::sqrt(dt);
        const double* z_row = z_levels + i * kLanes;
        const double* z_prev_row = i > 0 ? z_levels + (i - 1) * kLanes : nullptr;
        const double* perp_row = perp + i * kLanes;
        for (std::size_t r = 0; r < kLanes; ++r) {
            double dz = z_row[r] - (z_prev_row ? z_prev_row[r] : 0.0);
            s.dw[r] = rho * dz + rho_perp * sqrt_dt * perp_row[r];
        }
        simd::log_euler_step(s.log_s.data(), s.v_prev.data(), s.dw.data(), dt, kLanes);
        simd::running_min(s.min_log.data(), s.log_s.data(), kLanes);

        const double* x_row = x_levels + i * kLanes;
        for (std::size_t r = 0; r < kLanes; ++r)
            s.arg[r] = plan.volvol * x_row[r] - plan.drift_comp[i];
        simd::exp_v(s.arg.data(), s.v_curr.data(), kLanes);
        for (std::size_t r = 0; r < kLanes; ++r) s.v_curr[r] *= plan.xi[i];

        visit(block, i, s.log_s.data(), s.v_curr.data(), s.min_log.data());
        std::swap(s.v_prev, s.v_curr);
        t_prev = t_grid[i];
    }
}

void simulate_block_heston(const HestonParams& p, const std::vector<double>& t_grid,
                           uint64_t seed, std::size_t block, bool antithetic,
                           BlockScratch& s, const StepVisitor& visit) {
    const std::size_t n = t_grid.size();
    Xoshiro256pp rng = make_stream(seed, StreamKind::path_block, block);
    fill_normals(rng, s.normals.data(), 2 * n * kLanes);
    if (antithetic) mirror_antithetic(s.normals.data(), 2 * n);

    const double* zv = s.normals.data();
    const double* zp = s.normals.data() + n * kLanes;

    std::fill(s.log_s.begin(), s.log_s.end(), 0.0);
    std::fill(s.min_log.begin(), s.min_log.end(), 0.0);
    std::vector<double>& v_state = s.zx;  // reuse: lanes of raw (untruncated) V
    std::fill(v_state.begin(), v_state.begin() + kLanes, p.v0);

    const double rho = p.rho;
    const double rho_perp = std::sqrt(std::max(0.0, 1.0 - rho * rho));
    double t_prev = 0.0;

    for (std::size_t i = 0; i < n; ++i) {
        double dt = t_grid[i] - t_prev;
        double sqrt_dt = std::sqrt(dt);
        const double* zv_row = zv + i * kLanes;
        const double* zp_row = zp + i * kLanes;
        for (std::size_t r = 0; r < kLanes; ++r) {
            double vplus = std::max(v_state[r], 0.0);
            s.v_prev[r] = vplus;
            double dz = sqrt_dt * zv_row[r];
            s.dw[r] = rho * dz + rho_perp * sqrt_dt * zp_row[r];
            // full-truncation Euler: V+ in both drift and diffusion
            v_state[r] += p.a * (p.b - vplus) * dt + p.v * std::sqrt(vplus) * dz;
        }
        simd::log_euler_step(s.log_s.data(), s.v_prev.data(), s.dw.data(), dt, kLanes);
        simd::running_min(s.min_log.data(), s.log_s.data(), kLanes);
        for (std::size_t r = 0; r < kLanes; ++r) s.v_curr[r] = std::max(v_state[r], 0.0);

        visit(block, i, s.log_s.data(), s.v_curr.data(), s.min_log.data());
        t_prev = t_grid[i];
    }
}

struct SimDriver {
    const ModelParams& model;
    const SimConfig& config;
    const std::vector<double>& t_grid;

    // Runs all blocks, chunked for the thread pool; the visitor must be safe
    // for concurrent calls with distinct block indices.
    void run(const StepVisitor& visit) const {
        config.validate();
        const std::size_t n_blocks = (config.n_paths + kLanes - 1) / kLanes;
        const std::size_t n_chunks = (n_blocks + kBlocksPerChunk - 1) / kBlocksPerChunk;
        const bool heston = model.kind() == ModelKind::heston;

        BergomiPlan bergomi;
        HestonParams heston_params;
        if (heston)
            heston_params = model.heston();
        else
            bergomi = make_bergomi_plan(model, t_grid);

        parallel_for(n_chunks, [&](std::size_t chunk) {
            BlockScratch scratch(t_grid.size());
            std::size_t begin = chunk * kBlocksPerChunk;
            std::size_t end = std::min(begin + kBlocksPerChunk, n_blocks);
            for (std::size_t block = begin; block < end; ++block) {
                if (heston)
                    simulate_block_heston(heston_params, t_grid, config.seed, block,
                                          config.antithetic, scratch, visit);
                else
                    simulate_block_bergomi(bergomi, t_grid, config.seed, block,
                                           config.antithetic, scratch, visit);
            }
        });
    }

    std::size_t lanes_in_block(std::size_t block) const {
        std::size_t begin = block * kLanes;
        return std::min(kLanes, config.n_paths - std::min(config.n_paths, begin));
    }
};

}  // namespace

PathSet simulate_paths(const ModelParams& model, const SimConfig& config,
                       const std::vector<double>& t_grid) {
    SimDriver driver{model, config, t_grid};
    PathSet out;
    out.times = t_grid;
    out.spot = Matrix(config.n_paths, t_grid.size());
    out.variance = Matrix(config.n_paths, t_grid.size());
    if (model.kind() == ModelKind::heston)
        out.v0 = model.heston().v0;
    else
        out.v0 = model.variance_curve().values.front();

    driver.run([&](std::size_t block, std::size_t i, const double* log_s, const double* v,
                   const double* /*min_log*/) {
        std::size_t base = block * kLanes;
        std::size_t lanes = driver.lanes_in_block(block);
        for (std::size_t r = 0; r < lanes; ++r) {
            out.spot(base + r, i) = std::exp(log_s[r]);
            out.variance(base + r, i) = v[r];
        }
    });
    return out;
}

Matrix PriceGridResult::ci95_half_width() const {
    Matrix w(stderrs.rows(), stderrs.cols());
    for (std::size_t k = 0; k < stderrs.size(); ++k)
        w.storage()[k] = 1.96 * stderrs.storage()[k];
    return w;
}

namespace {

struct VanillaPartial {
    // Per maturity: sum S, sum S^2; per (maturity, strike): sum Y, sum Y^2, sum XY.
    std::vector<double> sx, sxx, sy, syy, sxy;
    bool has_nan = false;

    VanillaPartial(std::size_t m, std::size_t k)
        : sx(m, 0.0), sxx(m, 0.0), sy(m * k, 0.0), syy(m * k, 0.0), sxy(m * k, 0.0) {}
};

}  // namespace

PriceGridResult mc_vanilla_surface(const ModelParams& model, const StrikeMaturityGrid& grid,
                                   const SimConfig& config, bool control_variate) {
    const std::size_t m = grid.n_maturities();
    const std::size_t k = grid.n_strikes();
    TimeGrid tg = TimeGrid::build(config.n_steps, grid.maturities);

    // maturity lookup: time index -> maturity slot (or npos)
    std::vector<std::size_t> slot(tg.times.size(), static_cast<std::size_t>(-1));
    for (std::size_t q = 0; q < tg.maturity_index.size(); ++q)
        slot[tg.maturity_index[q]] = q;

    SimDriver driver{model, config, tg.times};
    const std::size_t n_blocks = (config.n_paths + kLanes - 1) / kLanes;
    std::vector<VanillaPartial> partials(n_blocks, VanillaPartial(m, k));
    const bool anti = config.antithetic;

    driver.run([&](std::size_t block, std::size_t i, const double* log_s, const double*,
                   const double*) {
        std::size_t q = slot[i];
        if (q == static_cast<std::size_t>(-1)) return;
        VanillaPartial& p = partials[block];
        std::size_t lanes = driver.lanes_in_block(block);

        double spot[kLanes];
        simd::exp_v(log_s, spot, kLanes);
        for (std::size_t r = 0; r < lanes; ++r)
            if (std::isnan(spot[r])) p.has_nan = true;

        std::size_t n_obs = anti ? lanes / 2 : lanes;
        for (std::size_t o = 0; o < n_obs; ++o) {
            double x = anti ? 0.5 * (spot[o] + spot[o + 4]) : spot[o];
            p.sx[q] += x;
            p.sxx[q] += x * x;
            for (std::size_t j = 0; j < k; ++j) {
                double strike = grid.strikes[j];
                double y = anti ? 0.5 * (std::max(spot[o] - strike, 0.0) +
                                         std::max(spot[o + 4] - strike, 0.0))
                                : std::max(x - strike, 0.0);
                std::size_t cell = q * k + j;
                p.sy[cell] += y;
                p.syy[cell] += y * y;
                p.sxy[cell] += y * x;
            }
        }
    });

    // Deterministic reduction in block order.
    VanillaPartial total(m, k);
    for (const auto& p : partials) {
        if (p.has_nan) throw SimulationError("NaN in simulated paths");
        for (std::size_t q = 0; q < m; ++q) {
            total.sx[q] += p.sx[q];
            total.sxx[q] += p.sxx[q];
        }
        for (std::size_t cell = 0; cell < m * k; ++cell) {
            total.sy[cell] += p.sy[cell];
            total.syy[cell] += p.syy[cell];
            total.sxy[cell] += p.sxy[cell];
        }
    }

    const double n_obs = static_cast<double>(anti ? config.n_paths / 2 : config.n_paths);
    PriceGridResult out;
    out.prices = Matrix(m, k);
    out.stderrs = Matrix(m, k);
    for (std::size_t q = 0; q < m; ++q) {
        double mean_x = total.sx[q] / n_obs;
        double var_x = std::max(total.sxx[q] / n_obs - mean_x * mean_x, 0.0);
        for (std::size_t j = 0; j < k; ++j) {
            std::size_t cell = q * k + j;
            double mean_y = total.sy[cell] / n_obs;
            double var_y = std::max(total.syy[cell] / n_obs - mean_y * mean_y, 0.0);
            if (control_variate && var_x > 0.0) {
                double cov = total.sxy[cell] / n_obs - mean_y * mean_x;
                double c_star = cov / var_x;
                out.prices(q, j) = mean_y - c_star * (mean_x - 1.0);
                double resid = std::max(var_y - cov * cov / var_x, 0.0);
                out.stderrs(q, j) = std::sqrt(resid / n_obs);
            } else {
                out.prices(q, j) = mean_y;
                out.stderrs(q, j) = std::sqrt(var_y / n_obs);
            }
        }
    }
    return out;
}

namespace {

struct BarrierPartial {
    std::vector<int64_t> hits;       // per (maturity, level)
    std::vector<int64_t> pair_both;  // antithetic only: both members hit
    bool has_nan = false;
    BarrierPartial(std::size_t m, std::size_t k) : hits(m * k, 0), pair_both(m * k, 0) {}
};

PriceGridResult barrier_from_counts(const std::vector<int64_t>& hits,
                                    const std::vector<int64_t>& pair_both,
                                    std::size_t m, std::size_t k, double n_paths,
                                    bool anti, BarrierKind kind) {
    PriceGridResult out;
    out.prices = Matrix(m, k);
    out.stderrs = Matrix(m, k);
    for (std::size_t cell = 0; cell < m * k; ++cell) {
        double p_in = static_cast<double>(hits[cell]) / n_paths;
        double se;
        if (!anti) {
            se = std::sqrt(std::max(p_in * (1.0 - p_in), 0.0) / n_paths);
        } else {
            // pair means take values {0, 1/2, 1}; variance from pair counts
            double n_pairs = 0.5 * n_paths;
            double both = static_cast<double>(pair_both[cell]);
            double single = static_cast<double>(hits[cell]) - 2.0 * both;
            double ex2 = (0.25 * single + both) / n_pairs;
            se = std::sqrt(std::max(ex2 - p_in * p_in, 0.0) / n_pairs);
        }
        std::size_t q = cell / k, j = cell % k;
        out.prices(q, j) = kind == BarrierKind::down_in ? p_in : 1.0 - p_in;
        out.stderrs(q, j) = se;
    }
    return out;
}

std::pair<PriceGridResult, PriceGridResult> barrier_impl(const ModelParams& model,
                                                         const StrikeMaturityGrid& grid,
                                                         const SimConfig& config) {
    for (double b : grid.strikes)
        if (!(b < 1.0)) throw std::domain_error("barrier levels must be below spot (= 1)");

    const std::size_t m = grid.n_maturities();
    const std::size_t k = grid.n_strikes();
    TimeGrid tg = TimeGrid::build(config.n_steps, grid.maturities);
    std::vector<std::size_t> slot(tg.times.size(), static_cast<std::size_t>(-1));
    for (std::size_t q = 0; q < tg.maturity_index.size(); ++q)
        slot[tg.maturity_index[q]] = q;

    std::vector<double> log_levels(k);
    for (std::size_t j = 0; j < k; ++j) log_levels[j] = std::log(grid.strikes[j]);

    SimDriver driver{model, config, tg.times};
    const std::size_t n_blocks = (config.n_paths + kLanes - 1) / kLanes;
    std::vector<BarrierPartial> partials(n_blocks, BarrierPartial(m, k));
    const bool anti = config.antithetic;

    driver.run([&](std::size_t block, std::size_t i, const double* log_s, const double*,
                   const double* min_log) {
        std::size_t q = slot[i];
        if (q == static_cast<std::size_t>(-1)) return;
        BarrierPartial& p = partials[block];
        std::size_t lanes = driver.lanes_in_block(block);
        for (std::size_t r = 0; r < lanes; ++r)
            if (std::isnan(log_s[r])) p.has_nan = true;

        for (std::size_t j = 0; j < k; ++j) {
            double lb = log_levels[j];
            std::size_t cell = q * k + j;
            for (std::size_t r = 0; r < lanes; ++r)
                if (min_log[r] <= lb) ++p.hits[cell];
            if (anti)
                for (std::size_t r = 0; r < lanes / 2; ++r)
                    if (min_log[r] <= lb && min_log[r + 4] <= lb) ++p.pair_both[cell];
        }
    });

    std::vector<int64_t> hits(m * k, 0), pair_both(m * k, 0);
    for (const auto& p : partials) {
        if (p.has_nan) throw SimulationError("NaN in simulated paths");
        for (std::size_t cell = 0; cell < m * k; ++cell) {
            hits[cell] += p.hits[cell];
            pair_both[cell] += p.pair_both[cell];
        }
    }

    double n = static_cast<double>(config.n_paths);
    return {barrier_from_counts(hits, pair_both, m, k, n, anti, BarrierKind::down_in),
            barrier_from_counts(hits, pair_both, m, k, n, anti, BarrierKind::down_out)};
}

}  // namespace

PriceGridResult mc_barrier_grid(const ModelParams& model, const StrikeMaturityGrid& grid,
                                const SimConfig& config, BarrierKind kind) {
    auto [down_in, down_out] = barrier_impl(model, grid, config);
    return kind == BarrierKind::down_in ? std::move(down_in) : std::move(down_out);
}

std::pair<PriceGridResult, PriceGridResult> mc_barrier_grid_both(
    const ModelParams& model, const StrikeMaturityGrid& grid, const SimConfig& config) {
    return barrier_impl(model, grid, config);
}

}  // namespace vollab
