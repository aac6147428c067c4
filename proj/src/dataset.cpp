#include "vollab/dataset.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "vollab/black_scholes.hpp"
#include "vollab/rng.hpp"

namespace vollab {

std::size_t Dataset::theta_dim() const {
    return stats.theta_bounds.dim() ? stats.theta_bounds.dim()
                                    : samples.empty() ? vollab::theta_dim(model)
                                                      : samples.front().theta.size();
}

namespace {

std::vector<double> draw_theta(Xoshiro256pp& rng, const Bounds& bounds, ModelKind kind) {
    std::vector<double> theta(bounds.dim());
    for (int guard = 0; guard < 4096; ++guard) {
        for (std::size_t i = 0; i < bounds.dim(); ++i)
            theta[i] = rng.uniform(bounds.lower[i], bounds.upper[i]);
        if (kind != ModelKind::heston) return theta;
        // theta = (a, b, v, rho): keep only Feller-satisfying draws
        if (2.0 * theta[0] * theta[1] > theta[2] * theta[2]) return theta;
    }
    throw DataError("could not draw a Feller-satisfying Heston sample from the box");
}

constexpr std::size_t kMaxAttemptsPerSample = 256;

}  // namespace

std::vector<std::vector<double>> sample_parameters(const Bounds& bounds, std::size_t n,
                                                   uint64_t seed, ModelKind kind) {
    if (kind == ModelKind::heston ? bounds.dim() != 4 : bounds.dim() < 4)
        throw ConfigError("bounds dimension does not match model");
    std::vector<std::vector<double>> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        Xoshiro256pp rng = make_stream(seed, StreamKind::theta, i);
        out[i] = draw_theta(rng, bounds, kind);
    }
    return out;
}

namespace {

// Shared sample loop: fn prices one theta and either returns surfaces or
// throws InversionError to signal rejection.
template <typename PriceFn>
GenReport run_generation(std::size_t n_samples, const Bounds& bounds, ModelKind kind,
                         uint64_t seed, double max_rejection_rate, const PriceFn& price) {
    auto t0 = std::chrono::steady_clock::now();
    std::atomic<std::size_t> total_rejected{0};

    parallel_for(n_samples, [&](std::size_t i) {
        Xoshiro256pp theta_rng = make_stream(seed, StreamKind::theta, i);
        for (std::size_t attempt = 0;; ++attempt) {
            if (attempt >= kMaxAttemptsPerSample)
                throw DataError("sample " + std::to_string(i) + " rejected " +
                                std::to_string(attempt) + " times; box/pricer look broken");
            std::vector<double> theta = draw_theta(theta_rng, bounds, kind);
            uint64_t sim_seed =
                derive_seed(seed, StreamKind::sample_sim, i * kMaxAttemptsPerSample + attempt);
            try {
                price(i, theta, sim_seed);
                break;
            } catch (const InversionError&) {
                ++total_rejected;
            }
        }
    });

    auto t1 = std::chrono::steady_clock::now();
    GenReport report;
    report.accepted = n_samples;
    report.rejected = total_rejected.load();
    report.seconds = std::chrono::duration<double>(t1 - t0).count();
    if (report.rejection_rate() > max_rejection_rate)
        throw DataError("rejection rate " + g17(report.rejection_rate()) +
                        " exceeds limit " + g17(max_rejection_rate) + " (" +
                        std::to_string(report.rejected) + " rejected of " +
                        std::to_string(report.accepted + report.rejected) +
                        " attempts); the box/pricer combination looks broken");
    return report;
}

}  // namespace

namespace {

void check_bounds_for(ModelKind kind, const Bounds& bounds, const StrikeMaturityGrid& grid) {
    if (kind == ModelKind::heston) {
        if (bounds.dim() != 4) throw ConfigError("Heston bounds must have dimension 4");
        return;
    }
    std::size_t knots = bounds.dim() >= 4 ? bounds.dim() - 3 : 0;
    if (knots != grid.n_maturities() && knots != default_curve_knots().size())
        throw ConfigError("Bergomi bounds must carry one xi knot per grid maturity (or the "
                          "8 default knots) plus 3 tail parameters");
}

}  // namespace

GenerationResult generate_dataset(ModelKind kind, const Bounds& bounds,
                                  const StrikeMaturityGrid& grid, const GenConfig& config,
                                  uint64_t seed) {
    check_bounds_for(kind, bounds, grid);
    config.sim.validate();

    GenerationResult out;
    Dataset& ds = out.dataset;
    ds.model = kind;
    ds.payoff = "vanilla";
    ds.grid = grid;
    ds.seed = seed;
    ds.train_fraction = config.train_fraction;
    ds.samples.resize(config.n_samples);

    out.report = run_generation(
        config.n_samples, bounds, kind, seed, config.max_rejection_rate,
        [&](std::size_t i, const std::vector<double>& theta, uint64_t sim_seed) {
            SimConfig sim = config.sim;
            sim.seed = sim_seed;
            ModelParams model = model_from_theta(kind, theta, grid.maturities);
            PriceGridResult prices = mc_vanilla_surface(model, grid, sim);
            VolSurface surface = surface_from_prices(prices.prices, grid);
            ds.samples[i] = {theta, flatten(surface)};
        });

    split_dataset(ds, config.train_fraction, seed);
    compute_stats(ds, bounds);
    return out;
}

std::pair<GenerationResult, GenerationResult> generate_barrier_datasets(
    ModelKind kind, const Bounds& bounds, const StrikeMaturityGrid& barrier_grid,
    const GenConfig& config, uint64_t seed) {
    check_bounds_for(kind, bounds, barrier_grid);
    config.sim.validate();

    GenerationResult down_in, down_out;
    for (auto* r : {&down_in, &down_out}) {
        r->dataset.model = kind;
        r->dataset.grid = barrier_grid;
        r->dataset.seed = seed;
        r->dataset.train_fraction = config.train_fraction;
        r->dataset.samples.resize(config.n_samples);
    }
    down_in.dataset.payoff = "down_in";
    down_out.dataset.payoff = "down_out";

    GenReport report = run_generation(
        config.n_samples, bounds, kind, seed, config.max_rejection_rate,
        [&](std::size_t i, const std::vector<double>& theta, uint64_t sim_seed) {
            SimConfig sim = config.sim;
            sim.seed = sim_seed;
            ModelParams model = model_from_theta(kind, theta, barrier_grid.maturities);
            auto [in_grid, out_grid] = mc_barrier_grid_both(model, barrier_grid, sim);
            down_in.dataset.samples[i] = {theta, in_grid.prices.storage()};
            down_out.dataset.samples[i] = {theta, out_grid.prices.storage()};
        });

    down_in.report = report;
    down_out.report = report;
    for (auto* r : {&down_in, &down_out}) {
        split_dataset(r->dataset, config.train_fraction, seed);
        compute_stats(r->dataset, bounds);
    }
    return {std::move(down_in), std::move(down_out)};
}

void split_dataset(Dataset& ds, double train_fraction, uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw ConfigError("train_fraction must be in (0,1)");
    std::size_t n = ds.samples.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Xoshiro256pp rng = make_stream(seed, StreamKind::split_shuffle, 0);
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

    std::size_t n_train = static_cast<std::size_t>(
        std::llround(train_fraction * static_cast<double>(n)));
    n_train = std::clamp<std::size_t>(n_train, 1, n > 1 ? n - 1 : 1);
    ds.train_fraction = train_fraction;
    ds.train_idx.assign(order.begin(), order.begin() + n_train);
    ds.test_idx.assign(order.begin() + n_train, order.end());
}

void compute_stats(Dataset& ds, const Bounds& bounds) {
    if (ds.train_idx.empty()) throw DataError("compute_stats needs a train split");
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t i : ds.train_idx) {
        for (double v : ds.samples[i].surface) sum += v;
        count += ds.samples[i].surface.size();
    }
    double m = sum / static_cast<double>(count);
    double ss = 0.0;
    for (std::size_t i : ds.train_idx)
        for (double v : ds.samples[i].surface) ss += (v - m) * (v - m);
    double sd = std::sqrt(ss / static_cast<double>(count));
    if (!(sd > 0.0)) throw DataError("train-set surface values are constant; std would be 0");
    ds.stats.theta_bounds = bounds;
    ds.stats.vol_mean = m;
    ds.stats.vol_std = sd;
}

Matrix normalized_inputs(const Dataset& ds, const std::vector<std::size_t>& idx) {
    Matrix x(idx.size(), ds.theta_dim());
    for (std::size_t r = 0; r < idx.size(); ++r) {
        std::vector<double> z = normalize_theta(ds.samples[idx[r]].theta,
                                                ds.stats.theta_bounds);
        std::copy(z.begin(), z.end(), x.row(r));
    }
    return x;
}

Matrix normalized_targets(const Dataset& ds, const std::vector<std::size_t>& idx) {
    Matrix y(idx.size(), ds.grid.n_cells());
    for (std::size_t r = 0; r < idx.size(); ++r) {
        const auto& s = ds.samples[idx[r]].surface;
        if (s.size() != y.cols()) throw DataError("sample surface length mismatch");
        for (std::size_t c = 0; c < y.cols(); ++c)
            y(r, c) = (s[c] - ds.stats.vol_mean) / ds.stats.vol_std;
    }
    return y;
}

// ---------------------------------------------------------------------------
// CSV persistence
// ---------------------------------------------------------------------------

namespace {

std::string grid_json(const StrikeMaturityGrid& grid) {
    std::ostringstream os;
    os << "{\"maturities\":[";
    for (std::size_t i = 0; i < grid.maturities.size(); ++i)
        os << (i ? "," : "") << g17(grid.maturities[i]);
    os << "],\"strikes\":[";
    for (std::size_t i = 0; i < grid.strikes.size(); ++i)
        os << (i ? "," : "") << g17(grid.strikes[i]);
    os << "]}";
    return os.str();
}

std::string stats_json(const Dataset& ds) {
    std::ostringstream os;
    os << "{\"theta_min\":[";
    for (std::size_t i = 0; i < ds.stats.theta_bounds.dim(); ++i)
        os << (i ? "," : "") << g17(ds.stats.theta_bounds.lower[i]);
    os << "],\"theta_max\":[";
    for (std::size_t i = 0; i < ds.stats.theta_bounds.dim(); ++i)
        os << (i ? "," : "") << g17(ds.stats.theta_bounds.upper[i]);
    os << "],\"vol_mean\":" << g17(ds.stats.vol_mean);
    os << ",\"vol_std\":" << g17(ds.stats.vol_std);
    os << ",\"train_fraction\":" << g17(ds.train_fraction) << "}";
    return os.str();
}

}  // namespace

void save_dataset(const Dataset& ds, const std::string& path, const std::string& config_hash) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write dataset file: " + path);
    out << "# model=" << to_string(ds.model) << " grid=" << grid_json(ds.grid)
        << " stats=" << stats_json(ds) << " seed=" << ds.seed;
    if (ds.payoff != "vanilla") out << " payoff=" << ds.payoff;
    if (!config_hash.empty()) out << " config=" << config_hash;
    out << "\n";
    for (const auto& s : ds.samples) {
        for (std::size_t i = 0; i < s.theta.size(); ++i)
            out << (i ? "," : "") << g17(s.theta[i]);
        for (double v : s.surface) out << "," << g17(v);
        out << "\n";
    }
    if (!out) throw DataError("write failed: " + path);
}

Dataset load_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open dataset file: " + path);
    std::string header;
    if (!std::getline(in, header) || header.size() < 2 || header[0] != '#')
        throw DataError("dataset file missing header row: " + path);

    Dataset ds;
    std::istringstream hs(header.substr(1));
    std::string token;
    std::string grid_text, stats_text;
    bool have_seed = false;
    while (hs >> token) {
        auto eq = token.find('=');
        if (eq == std::string::npos) throw DataError("bad header token: " + token);
        std::string key = token.substr(0, eq), value = token.substr(eq + 1);
        if (key == "model") ds.model = model_kind_from_string(value);
        else if (key == "grid") grid_text = value;
        else if (key == "stats") stats_text = value;
        else if (key == "seed") { ds.seed = std::stoull(value); have_seed = true; }
        else if (key == "payoff") ds.payoff = value;
        // unknown keys (e.g. config) are tolerated
    }
    if (grid_text.empty() || stats_text.empty() || !have_seed)
        throw DataError("dataset header is missing model/grid/stats/seed fields");

    nlohmann::json gj = nlohmann::json::parse(grid_text);
    ds.grid = StrikeMaturityGrid(gj.at("maturities").get<std::vector<double>>(),
                                 gj.at("strikes").get<std::vector<double>>());
    nlohmann::json sj = nlohmann::json::parse(stats_text);
    ds.stats.theta_bounds = Bounds(sj.at("theta_min").get<std::vector<double>>(),
                                   sj.at("theta_max").get<std::vector<double>>());
    ds.stats.vol_mean = sj.at("vol_mean").get<double>();
    ds.stats.vol_std = sj.at("vol_std").get<double>();
    ds.train_fraction = sj.value("train_fraction", 0.85);

    std::size_t dim = ds.theta_dim();
    std::size_t cells = ds.grid.n_cells();
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        TrainingSample s;
        s.theta.reserve(dim);
        s.surface.reserve(cells);
        std::size_t pos = 0, col = 0;
        while (pos <= line.size()) {
            std::size_t comma = line.find(',', pos);
            if (comma == std::string::npos) comma = line.size();
            double v = std::strtod(line.c_str() + pos, nullptr);
            if (col < dim) s.theta.push_back(v);
            else s.surface.push_back(v);
            ++col;
            pos = comma + 1;
        }
        if (col != dim + cells)
            throw DataError("dataset row has " + std::to_string(col) + " fields, expected " +
                            std::to_string(dim + cells));
        ds.samples.push_back(std::move(s));
    }
    split_dataset(ds, ds.train_fraction, ds.seed);
    return ds;
}

}  // namespace vollab
