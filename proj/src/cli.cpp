#include "vollab/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "vollab/black_scholes.hpp"
#include "vollab/calibrate.hpp"
#include "vollab/classifier.hpp"
#include "vollab/common.hpp"
#include "vollab/dataset.hpp"
#include "vollab/mc_engine.hpp"
#include "vollab/models.hpp"
#include "vollab/neuralnet.hpp"
#include "vollab/rng.hpp"
#include "vollab/simd.hpp"
#include "vollab/stats.hpp"

namespace vollab {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitCheckFailed = 4;

struct CheckFailure {
    std::string message;
};

// ---------------------------------------------------------------------------
// Experiment configuration
// ---------------------------------------------------------------------------

struct ClassifyConfig {
    Bounds heston_bounds = default_bounds(ModelKind::heston);
    std::size_t pool_train = 1500;
    std::size_t pool_val = 500;
    std::size_t n_train_mixtures = 30000;
    std::size_t n_val_mixtures = 10000;
    std::vector<double> a_grid_train;  // default {0, 0.1, ..., 1}
    std::vector<double> a_grid_val;    // default {0, 0.05, ..., 1}
};

struct ExperimentConfig {
    ModelKind model = ModelKind::rough_bergomi;
    Bounds bounds = default_bounds(ModelKind::rough_bergomi);
    StrikeMaturityGrid grid = default_training_grid();
    StrikeMaturityGrid barrier_grid = default_barrier_grid();
    SimConfig sim;
    TrainConfig train;
    std::size_t n_samples = 1000;
    double train_fraction = 0.85;
    double max_rejection_rate = 0.05;
    uint64_t seed = 0;
    std::string out_dir = "out";
    ClassifyConfig classify;

    json resolved;  // fully resolved values, used for the config hash

    std::string hash_for(const std::string& command) const {
        json j = resolved;
        j["command"] = command;
        return hex64(fnv1a64_str(j.dump()));
    }
};

std::vector<double> linspace_grid(double step, std::size_t count) {
    std::vector<double> g(count);
    for (std::size_t i = 0; i < count; ++i) g[i] = std::min(1.0, step * static_cast<double>(i));
    return g;
}

json bounds_to_json(const Bounds& b) {
    return json{{"lower", b.lower}, {"upper", b.upper}};
}

json grid_to_json(const StrikeMaturityGrid& g) {
    return json{{"maturities", g.maturities}, {"strikes", g.strikes}};
}

ExperimentConfig load_experiment_config(const std::string& path, uint64_t seed_override,
                                        bool have_seed_override,
                                        const std::string& out_override) {
    ExperimentConfig cfg;
    cfg.classify.a_grid_train = linspace_grid(0.1, 11);
    cfg.classify.a_grid_val = linspace_grid(0.05, 21);

    json j = json::object();
    if (!path.empty()) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config file: " + path);
        try {
            in >> j;
        } catch (const std::exception& e) {
            throw ConfigError(std::string("config is not valid JSON: ") + e.what());
        }
    }

    if (j.contains("model")) cfg.model = model_kind_from_string(j["model"].get<std::string>());
    cfg.bounds = default_bounds(cfg.model);
    if (j.contains("bounds"))
        cfg.bounds = Bounds(j["bounds"].at("lower").get<std::vector<double>>(),
                            j["bounds"].at("upper").get<std::vector<double>>());
    if (cfg.model == ModelKind::heston ? cfg.bounds.dim() != 4 : cfg.bounds.dim() < 4)
        throw ConfigError("bounds dimension does not match model");
    if (j.contains("grid"))
        cfg.grid = StrikeMaturityGrid(j["grid"].at("maturities").get<std::vector<double>>(),
                                      j["grid"].at("strikes").get<std::vector<double>>());
    if (j.contains("barrier_grid"))
        cfg.barrier_grid =
            StrikeMaturityGrid(j["barrier_grid"].at("maturities").get<std::vector<double>>(),
                               j["barrier_grid"].at("strikes").get<std::vector<double>>());
    if (j.contains("sim")) {
        const json& s = j["sim"];
        cfg.sim.n_paths = s.value("n_paths", cfg.sim.n_paths);
        cfg.sim.n_steps = s.value("n_steps", cfg.sim.n_steps);
        cfg.sim.antithetic = s.value("antithetic", cfg.sim.antithetic);
    }
    if (j.contains("train")) {
        const json& t = j["train"];
        cfg.train.batch_size = t.value("batch_size", cfg.train.batch_size);
        cfg.train.max_epochs = t.value("max_epochs", cfg.train.max_epochs);
        cfg.train.patience = t.value("patience", cfg.train.patience);
        cfg.train.learning_rate = t.value("learning_rate", cfg.train.learning_rate);
        cfg.train.lr_halve_patience = t.value("lr_halve_patience", cfg.train.lr_halve_patience);
        cfg.train.min_learning_rate = t.value("min_learning_rate", cfg.train.min_learning_rate);
        std::string opt = t.value("optimizer", std::string("adam"));
        if (opt == "adam") cfg.train.optimizer = Optimizer::adam;
        else if (opt == "sgd") cfg.train.optimizer = Optimizer::sgd;
        else throw ConfigError("unknown optimizer: " + opt);
    }
    cfg.n_samples = j.value("n_samples", cfg.n_samples);
    cfg.train_fraction = j.value("train_fraction", cfg.train_fraction);
    cfg.max_rejection_rate = j.value("max_rejection_rate", cfg.max_rejection_rate);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.out_dir = j.value("out", cfg.out_dir);
    if (j.contains("classify")) {
        const json& c = j["classify"];
        cfg.classify.pool_train = c.value("pool_train", cfg.classify.pool_train);
        cfg.classify.pool_val = c.value("pool_val", cfg.classify.pool_val);
        cfg.classify.n_train_mixtures = c.value("n_train_mixtures", cfg.classify.n_train_mixtures);
        cfg.classify.n_val_mixtures = c.value("n_val_mixtures", cfg.classify.n_val_mixtures);
        if (c.contains("heston_bounds"))
            cfg.classify.heston_bounds =
                Bounds(c["heston_bounds"].at("lower").get<std::vector<double>>(),
                       c["heston_bounds"].at("upper").get<std::vector<double>>());
        if (c.contains("a_grid_train"))
            cfg.classify.a_grid_train = c["a_grid_train"].get<std::vector<double>>();
        if (c.contains("a_grid_val"))
            cfg.classify.a_grid_val = c["a_grid_val"].get<std::vector<double>>();
    }

    if (have_seed_override) cfg.seed = seed_override;
    if (!out_override.empty()) cfg.out_dir = out_override;

    cfg.resolved = json{{"model", to_string(cfg.model)},
                        {"bounds", bounds_to_json(cfg.bounds)},
                        {"grid", grid_to_json(cfg.grid)},
                        {"barrier_grid", grid_to_json(cfg.barrier_grid)},
                        {"sim",
                         {{"n_paths", cfg.sim.n_paths},
                          {"n_steps", cfg.sim.n_steps},
                          {"antithetic", cfg.sim.antithetic}}},
                        {"train",
                         {{"batch_size", cfg.train.batch_size},
                          {"max_epochs", cfg.train.max_epochs},
                          {"patience", cfg.train.patience},
                          {"learning_rate", cfg.train.learning_rate},
                          {"lr_halve_patience", cfg.train.lr_halve_patience},
                          {"min_learning_rate", cfg.train.min_learning_rate},
                          {"optimizer",
                           cfg.train.optimizer == Optimizer::adam ? "adam" : "sgd"}}},
                        {"n_samples", cfg.n_samples},
                        {"train_fraction", cfg.train_fraction},
                        {"max_rejection_rate", cfg.max_rejection_rate},
                        {"seed", cfg.seed},
                        {"classify",
                         {{"pool_train", cfg.classify.pool_train},
                          {"pool_val", cfg.classify.pool_val},
                          {"n_train_mixtures", cfg.classify.n_train_mixtures},
                          {"n_val_mixtures", cfg.classify.n_val_mixtures},
                          {"heston_bounds", bounds_to_json(cfg.classify.heston_bounds)},
                          {"a_grid_train", cfg.classify.a_grid_train},
                          {"a_grid_val", cfg.classify.a_grid_val}}}};
    return cfg;
}

// ---------------------------------------------------------------------------
// Small file helpers
// ---------------------------------------------------------------------------

std::ofstream open_out(const fs::path& path) {
    fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write file: " + path.string());
    return out;
}

void write_cell_matrix_csv(const fs::path& path, const Matrix& m,
                           const StrikeMaturityGrid& grid, const std::string& hash) {
    std::ofstream out = open_out(path);
    out << "# config_hash=" << hash << "\n";
    out << "maturity";
    for (double k : grid.strikes) out << "," << g17(k);
    out << "\n";
    for (std::size_t i = 0; i < m.rows(); ++i) {
        out << g17(grid.maturities[i]);
        for (std::size_t j = 0; j < m.cols(); ++j) out << "," << g17(m(i, j));
        out << "\n";
    }
}

void write_json_file(const fs::path& path, const json& j) {
    std::ofstream out = open_out(path);
    out << j.dump(2) << "\n";
}

VolSurface load_target_surface(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open target file: " + path);
    json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw ConfigError(std::string("target file is not valid JSON: ") + e.what());
    }
    StrikeMaturityGrid grid(j.at("grid").at("maturities").get<std::vector<double>>(),
                            j.at("grid").at("strikes").get<std::vector<double>>());
    auto rows = j.at("vols").get<std::vector<std::vector<double>>>();
    if (rows.size() != grid.n_maturities())
        throw ConfigError("target vols row count does not match grid");
    Matrix m(grid.n_maturities(), grid.n_strikes());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != grid.n_strikes())
            throw ConfigError("target vols col count does not match grid");
        for (std::size_t jcol = 0; jcol < rows[i].size(); ++jcol) m(i, jcol) = rows[i][jcol];
    }
    return VolSurface(grid, std::move(m));
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

int cmd_gen_data(const ExperimentConfig& cfg, bool barrier) {
    std::string hash = cfg.hash_for(barrier ? "barrier-gen" : "gen-data");
    GenConfig gen{cfg.n_samples, cfg.sim, cfg.train_fraction, cfg.max_rejection_rate};
    gen.sim.seed = cfg.seed;

    json report{{"config_hash", hash}, {"model", to_string(cfg.model)},
                {"n_samples", cfg.n_samples}, {"seed", cfg.seed}};
    fs::path dir(cfg.out_dir);

    if (!barrier) {
        GenerationResult r = generate_dataset(cfg.model, cfg.bounds, cfg.grid, gen, cfg.seed);
        fs::path file = dir / ("dataset_" + std::string(to_string(cfg.model)) + ".csv");
        fs::create_directories(dir);
        save_dataset(r.dataset, file.string(), hash);
        report["file"] = file.string();
        report["rejected"] = r.report.rejected;
        report["rejection_rate"] = r.report.rejection_rate();
        report["seconds"] = r.report.seconds;
        std::cout << "wrote " << file.string() << " (" << r.dataset.samples.size()
                  << " samples, " << r.report.rejected << " rejected)\n";
    } else {
        auto [down_in, down_out] =
            generate_barrier_datasets(cfg.model, cfg.bounds, cfg.barrier_grid, gen, cfg.seed);
        fs::create_directories(dir);
        fs::path f_in = dir / ("dataset_" + std::string(to_string(cfg.model)) + "_down_in.csv");
        fs::path f_out =
            dir / ("dataset_" + std::string(to_string(cfg.model)) + "_down_out.csv");
        save_dataset(down_in.dataset, f_in.string(), hash);
        save_dataset(down_out.dataset, f_out.string(), hash);
        report["files"] = {f_in.string(), f_out.string()};
        report["rejected"] = down_in.report.rejected;
        report["seconds"] = down_in.report.seconds;
        std::cout << "wrote " << f_in.string() << " and " << f_out.string() << "\n";
    }
    write_json_file(dir / (barrier ? "barrier_gen_report.json" : "gen_report.json"), report);
    return kExitOk;
}

int cmd_train(const ExperimentConfig& cfg, const std::string& data_path) {
    std::string hash = cfg.hash_for("train");
    Dataset ds = load_dataset(data_path);

    Matrix x_train = normalized_inputs(ds, ds.train_idx);
    Matrix y_train = normalized_targets(ds, ds.train_idx);
    Matrix x_val = normalized_inputs(ds, ds.test_idx);
    Matrix y_val = normalized_targets(ds, ds.test_idx);

    TrainConfig tc = cfg.train;
    tc.seed = cfg.seed;
    MLP net = MLP::create(pricing_layer_sizes(ds.theta_dim(), ds.grid.n_cells()), cfg.seed);
    TrainHistory hist = train(net, x_train, y_train, x_val, y_val, tc);

    PricingNet pn;
    pn.net = std::move(net);
    pn.theta_bounds = ds.stats.theta_bounds;
    pn.vol_mean = ds.stats.vol_mean;
    pn.vol_std = ds.stats.vol_std;
    pn.grid = ds.grid;
    pn.model = ds.model;
    pn.payoff = ds.payoff;

    fs::path dir(cfg.out_dir);
    fs::create_directories(dir);
    std::string stem = "weights_" + std::string(to_string(ds.model)) +
                       (ds.payoff == "vanilla" ? "" : "_" + ds.payoff);
    fs::path wfile = dir / (stem + ".json");
    save_pricing_net(pn, wfile.string(), hash);

    {
        std::ofstream out = open_out(dir / "history.csv");
        out << "# config_hash=" << hash << "\n";
        out << "epoch,train_loss,val_loss,learning_rate\n";
        for (std::size_t e = 0; e < hist.train_loss.size(); ++e)
            out << (e + 1) << "," << g17(hist.train_loss[e]) << "," << g17(hist.val_loss[e])
                << "," << g17(hist.learning_rate[e]) << "\n";
    }
    {
        // Wall-clock lives in a sidecar so the data artifacts stay bit-reproducible.
        std::ofstream out = open_out(dir / "history_timing.csv");
        out << "epoch,ms\n";
        for (std::size_t e = 0; e < hist.epoch_ms.size(); ++e)
            out << (e + 1) << "," << g17(hist.epoch_ms[e]) << "\n";
    }
    std::cout << "trained " << wfile.string() << ": stopped_epoch=" << hist.stopped_epoch
              << " best_epoch=" << hist.best_epoch
              << " best_val_loss=" << g17(hist.val_loss[hist.best_epoch - 1]) << "\n";
    return kExitOk;
}

struct EvalStats {
    Matrix mean, stddev, max;
    double grand_mean = 0.0, grand_std = 0.0, grand_max = 0.0;
};

EvalStats evaluate_net(const PricingNet& pn, const Dataset& ds, bool relative) {
    const std::size_t m = ds.grid.n_maturities(), k = ds.grid.n_strikes();
    if (!(pn.grid == ds.grid)) throw ConfigError("weights grid does not match dataset grid");
    Matrix sum(m, k), sumsq(m, k), worst(m, k);
    double gsum = 0.0, gsumsq = 0.0;
    for (const auto& s : ds.samples) {
        std::vector<double> pred = pn.predict_flat(s.theta);
        for (std::size_t c = 0; c < pred.size(); ++c) {
            double err = std::abs(pred[c] - s.surface[c]);
            if (relative) err /= std::abs(s.surface[c]);
            sum.storage()[c] += err;
            sumsq.storage()[c] += err * err;
            worst.storage()[c] = std::max(worst.storage()[c], err);
            gsum += err;
            gsumsq += err * err;
        }
    }
    double n = static_cast<double>(ds.samples.size());
    EvalStats out{Matrix(m, k), Matrix(m, k), worst, 0, 0, 0};
    for (std::size_t c = 0; c < m * k; ++c) {
        double mu = sum.storage()[c] / n;
        out.mean.storage()[c] = mu;
        out.stddev.storage()[c] = std::sqrt(std::max(sumsq.storage()[c] / n - mu * mu, 0.0));
    }
    double total = n * static_cast<double>(m * k);
    out.grand_mean = gsum / total;
    out.grand_std = std::sqrt(std::max(gsumsq / total - out.grand_mean * out.grand_mean, 0.0));
    for (double v : worst.storage()) out.grand_max = std::max(out.grand_max, v);
    return out;
}

int cmd_eval(const ExperimentConfig& cfg, const std::string& weights_path,
             const std::string& data_path, bool check, bool barrier) {
    std::string hash = cfg.hash_for(barrier ? "barrier-eval" : "eval");
    PricingNet pn = load_pricing_net(weights_path);
    Dataset ds = load_dataset(data_path);
    if (barrier && ds.payoff == "vanilla")
        throw ConfigError("barrier-eval expects a barrier dataset");
    if (!barrier && ds.payoff != "vanilla")
        throw ConfigError("eval expects a vanilla dataset; use barrier-eval");

    EvalStats stats = evaluate_net(pn, ds, /*relative=*/!barrier);
    fs::path dir(cfg.out_dir);
    std::string prefix = barrier ? "barrier_eval" : "eval";
    write_cell_matrix_csv(dir / (prefix + "_mean.csv"), stats.mean, ds.grid, hash);
    write_cell_matrix_csv(dir / (prefix + "_std.csv"), stats.stddev, ds.grid, hash);
    write_cell_matrix_csv(dir / (prefix + "_max.csv"), stats.max, ds.grid, hash);

    json summary{{"config_hash", hash},
                 {"n_samples", ds.samples.size()},
                 {"metric", barrier ? "absolute_error" : "relative_error"},
                 {"grand_mean", stats.grand_mean},
                 {"grand_std", stats.grand_std},
                 {"grand_max", stats.grand_max}};
    write_json_file(dir / (prefix + "_summary.json"), summary);

    if (barrier)
        std::cout << prefix << ": mean=" << g17(stats.grand_mean * 1e4)
                  << "bps std=" << g17(stats.grand_std * 1e4) << "bps\n";
    else
        std::cout << prefix << ": grand mean=" << g17(stats.grand_mean)
                  << " std=" << g17(stats.grand_std) << "\n";

    if (check) {
        if (barrier) {
            if (!(stats.grand_mean < 25e-4 && stats.grand_std < 25e-4))
                throw CheckFailure{"barrier error above 25 bps: mean=" +
                                   g17(stats.grand_mean * 1e4) +
                                   "bps std=" + g17(stats.grand_std * 1e4) + "bps"};
        } else {
            double worst_mean = 0.0, worst_std = 0.0;
            for (double v : stats.mean.storage()) worst_mean = std::max(worst_mean, v);
            for (double v : stats.stddev.storage()) worst_std = std::max(worst_std, v);
            if (!(worst_mean < 0.01 && worst_std < 0.02))
                throw CheckFailure{"per-cell relative error above threshold: worst mean=" +
                                   g17(worst_mean) + " worst std=" + g17(worst_std)};
        }
    }
    return kExitOk;
}

void write_cdf_csv(const fs::path& path, const std::vector<double>& values,
                   const std::string& hash, const std::string& value_name) {
    std::ofstream out = open_out(path);
    out << "# config_hash=" << hash << "\n";
    out << value_name << ",cum_fraction\n";
    for (auto [v, c] : cdf_points(values)) out << g17(v) << "," << g17(c) << "\n";
}

int cmd_calibrate(const ExperimentConfig& cfg, const std::string& weights_path,
                  const std::string& target_path, std::size_t self_test_n,
                  std::vector<std::string> solvers, std::size_t lm_starts, bool check) {
    std::string hash = cfg.hash_for("calibrate");
    PricingNet pn = load_pricing_net(weights_path);
    if (solvers.empty()) solvers = {"lm"};
    fs::path dir(cfg.out_dir);
    fs::create_directories(dir);

    struct TargetCase {
        VolSurface surface;
        std::vector<double> theta_true;  // empty for file targets
    };
    std::vector<TargetCase> targets;
    if (!target_path.empty()) {
        targets.push_back({load_target_surface(target_path), {}});
    } else if (self_test_n == 0) {
        throw ConfigError("calibrate needs --target or --self-test > 0");
    } else {
        for (std::size_t k = 0; k < self_test_n; ++k) {
            Xoshiro256pp rng = make_stream(cfg.seed, StreamKind::target_suite, k);
            std::vector<double> theta(pn.theta_bounds.dim());
            for (std::size_t i = 0; i < theta.size(); ++i)
                theta[i] = rng.uniform(pn.theta_bounds.lower[i], pn.theta_bounds.upper[i]);
            targets.push_back({pn.price_surface(theta), theta});
        }
    }

    std::ofstream report = open_out(dir / "calibration_report.csv");
    report << "# config_hash=" << hash << "\n";
    report << "solver,target,converged,iterations,objective_evals,jacobian_evals,rmse,mae";
    for (std::size_t i = 0; i < pn.theta_bounds.dim(); ++i) report << ",theta_hat_" << i;
    report << "\n";
    std::ofstream timing = open_out(dir / "calibration_timing.csv");
    timing << "solver,target,ms\n";

    std::vector<double> midpoint = pn.theta_bounds.midpoint();
    double lm_q95 = 0.0;
    for (const std::string& solver : solvers) {
        std::vector<double> rmses;
        std::vector<std::vector<double>> er_by_coord(pn.theta_bounds.dim());
        for (std::size_t t = 0; t < targets.size(); ++t) {
            CalibrationTarget target{targets[t].surface, std::nullopt};
            CalibrationResult res;
            if (solver == "lm") {
                LMConfig lc;
                lc.n_starts = lm_starts;
                lc.seed = cfg.seed;
                res = levenberg_marquardt(pn, target, midpoint, lc);
            } else if (solver == "gd") {
                res = gradient_descent(pn, target, midpoint);
            } else if (solver == "nm") {
                res = nelder_mead(pn, target, midpoint);
            } else if (solver == "de") {
                DEConfig dc;
                dc.seed = derive_seed(cfg.seed, StreamKind::de_population, t);
                res = differential_evolution(pn, target, dc);
            } else {
                throw ConfigError("unknown solver: " + solver);
            }
            rmses.push_back(res.rmse);
            if (!targets[t].theta_true.empty()) {
                std::vector<double> er =
                    param_relative_error(res.theta_hat, targets[t].theta_true);
                for (std::size_t i = 0; i < er.size(); ++i) er_by_coord[i].push_back(er[i]);
            }
            report << solver << "," << t << "," << (res.converged ? 1 : 0) << ","
                   << res.iterations << "," << res.n_objective_evals << ","
                   << res.n_jacobian_evals << "," << g17(res.rmse) << "," << g17(res.mae);
            for (double v : res.theta_hat) report << "," << g17(v);
            report << "\n";
            timing << solver << "," << t << "," << g17(res.wall_ms) << "\n";
        }
        write_cdf_csv(dir / ("rmse_cdf_" + solver + ".csv"), rmses, hash, "rmse");
        if (!targets.front().theta_true.empty()) {
            std::ofstream er = open_out(dir / ("er_cdf_" + solver + ".csv"));
            er << "# config_hash=" << hash << "\n";
            er << "coordinate,er,cum_fraction\n";
            for (std::size_t i = 0; i < er_by_coord.size(); ++i)
                for (auto [v, c] : cdf_points(er_by_coord[i]))
                    er << i << "," << g17(v) << "," << g17(c) << "\n";
        }
        double q95 = quantile(rmses, 0.95);
        if (solver == "lm") lm_q95 = q95;
        std::cout << solver << ": median rmse=" << g17(quantile(rmses, 0.5))
                  << " q95=" << g17(q95) << " over " << targets.size() << " targets\n";
    }

    if (check && std::find(solvers.begin(), solvers.end(), "lm") != solvers.end() &&
        targets.size() > 1 && !(lm_q95 < 0.01))
        throw CheckFailure{"LM 95% RMSE quantile " + g17(lm_q95) + " not below 0.01"};
    return kExitOk;
}

int cmd_bench(const ExperimentConfig& cfg, const std::string& weights_path, bool check) {
    std::string hash = cfg.hash_for("bench");
    PricingNet pn = load_pricing_net(weights_path);
    std::vector<double> theta = pn.theta_bounds.midpoint();
    std::vector<double> z = normalize_theta(theta, pn.theta_bounds);

    auto median_time_us = [](std::size_t reps, const std::function<void()>& fn) {
        std::vector<double> times;
        times.reserve(reps);
        for (std::size_t i = 0; i < reps; ++i) {
            auto t0 = std::chrono::steady_clock::now();
            fn();
            auto t1 = std::chrono::steady_clock::now();
            times.push_back(std::chrono::duration<double, std::micro>(t1 - t0).count());
        }
        return quantile(times, 0.5);
    };

    volatile double sink = 0.0;
    double nn_us = median_time_us(100, [&] {
        std::vector<double> out = pn.forward_normalized(z);
        sink = sink + out[0];
    });
    double jac_us = median_time_us(100, [&] {
        Matrix j = pn.jacobian_normalized(z);
        sink = sink + j(0, 0);
    });

    ModelParams model = model_from_theta(pn.model, theta, pn.grid.maturities);
    SimConfig sim = cfg.sim;
    sim.seed = cfg.seed;
    double mc_us = median_time_us(5, [&] {
        PriceGridResult r = mc_vanilla_surface(model, pn.grid, sim);
        sink = sink + r.prices(0, 0);
    });

    double speedup = mc_us / nn_us;
    fs::path dir(cfg.out_dir);
    {
        std::ofstream out = open_out(dir / "bench.csv");
        out << "# config_hash=" << hash << "\n";
        out << "metric,microseconds\n";
        out << "nn_full_surface," << g17(nn_us) << "\n";
        out << "nn_jacobian," << g17(jac_us) << "\n";
        out << "mc_full_surface_" << sim.n_paths << "_paths," << g17(mc_us) << "\n";
        out << "speedup," << g17(speedup) << "\n";
    }
    std::cout << "NN full surface:  " << g17(nn_us) << " us (median of 100)\n"
              << "NN Jacobian:      " << g17(jac_us) << " us (median of 100)\n"
              << "MC full surface:  " << g17(mc_us) << " us (median of 5, " << sim.n_paths
              << " paths)\n"
              << "speedup NN vs MC: " << g17(speedup) << "x\n";
    if (check && !(speedup >= 500.0))
        throw CheckFailure{"speedup " + g17(speedup) + " below 500x"};
    return kExitOk;
}

MixtureExperimentConfig mixture_config(const ExperimentConfig& cfg, bool validation) {
    MixtureExperimentConfig mc;
    mc.heston_bounds = cfg.classify.heston_bounds;
    mc.rbergomi_bounds =
        cfg.model == ModelKind::rough_bergomi ? cfg.bounds
                                              : default_bounds(ModelKind::rough_bergomi);
    mc.grid = cfg.grid;
    mc.sim = cfg.sim;
    mc.max_rejection_rate = cfg.max_rejection_rate;
    if (validation) {
        mc.pool_size = cfg.classify.pool_val;
        mc.n_mixtures = cfg.classify.n_val_mixtures;
        mc.a_grid = cfg.classify.a_grid_val;
        mc.seed = derive_seed(cfg.seed, StreamKind::mixture, 999);
    } else {
        mc.pool_size = cfg.classify.pool_train;
        mc.n_mixtures = cfg.classify.n_train_mixtures;
        mc.a_grid = cfg.classify.a_grid_train;
        mc.seed = cfg.seed;
    }
    return mc;
}

int cmd_classify_train(const ExperimentConfig& cfg) {
    std::string hash = cfg.hash_for("classify-train");
    auto t0 = std::chrono::steady_clock::now();
    std::vector<MixtureSample> train_set = build_mixture_set(mixture_config(cfg, false));

    ClassifierTrainConfig tc;
    tc.seed = cfg.seed;
    ClassifierNet net = train_classifier(train_set, cfg.grid, tc);

    fs::path dir(cfg.out_dir);
    fs::create_directories(dir);
    fs::path wfile = dir / "classifier.json";
    save_classifier(net, wfile.string(), hash);
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_json_file(dir / "classify_train_report.json",
                    json{{"config_hash", hash},
                         {"n_mixtures", train_set.size()},
                         {"seconds", secs},
                         {"weights", wfile.string()}});
    std::cout << "trained classifier on " << train_set.size() << " mixtures -> "
              << wfile.string() << "\n";
    return kExitOk;
}

int cmd_classify_eval(const ExperimentConfig& cfg, const std::string& weights_path,
                      bool check) {
    std::string hash = cfg.hash_for("classify-eval");
    ClassifierNet net = load_classifier(weights_path);
    std::vector<MixtureSample> val_set = build_mixture_set(mixture_config(cfg, true));

    // Group by true Heston weight a; track mean predicted a and pure accuracy.
    std::map<double, std::pair<double, std::size_t>> by_a;
    std::size_t pure_total = 0, pure_correct = 0;
    for (const auto& s : val_set) {
        std::array<double, 3> q = net.predict(s.surface);
        double a = s.coeffs[0];
        auto& acc = by_a[a];
        acc.first += q[0];
        acc.second += 1;
        if (a == 0.0 || a == 1.0) {
            ++pure_total;
            std::size_t argmax = 0;
            for (std::size_t i = 1; i < 3; ++i)
                if (q[i] > q[argmax]) argmax = i;
            if ((a == 1.0 && argmax == 0) || (a == 0.0 && argmax == 2)) ++pure_correct;
        }
    }

    std::vector<double> a_values, a_means;
    fs::path dir(cfg.out_dir);
    {
        std::ofstream out = open_out(dir / "classifier_curve.csv");
        out << "# config_hash=" << hash << "\n";
        out << "a,mean_a_hat,count\n";
        for (const auto& [a, acc] : by_a) {
            double mean_hat = acc.first / static_cast<double>(acc.second);
            out << g17(a) << "," << g17(mean_hat) << "," << acc.second << "\n";
            a_values.push_back(a);
            a_means.push_back(mean_hat);
        }
    }
    double accuracy =
        pure_total ? static_cast<double>(pure_correct) / static_cast<double>(pure_total) : 0.0;
    double rho = spearman(a_values, a_means);
    write_json_file(dir / "classify_eval_summary.json",
                    json{{"config_hash", hash},
                         {"n_validation", val_set.size()},
                         {"pure_accuracy", accuracy},
                         {"spearman", rho}});
    std::cout << "classifier: pure accuracy=" << g17(accuracy) << " spearman=" << g17(rho)
              << " over " << val_set.size() << " surfaces\n";
    if (check && !(accuracy >= 0.9 && rho > 0.9))
        throw CheckFailure{"classifier below thresholds: accuracy=" + g17(accuracy) +
                           " spearman=" + g17(rho)};
    return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
    CLI::App app{"vollab: neural-surrogate volatility modelling laboratory"};
    app.require_subcommand(1);

    std::string config_path, out_dir, weights_path, data_path, target_path;
    uint64_t seed = 0;
    bool have_seed = false;
    unsigned threads = 0;
    bool check = false;
    std::size_t self_test_n = 100;
    std::size_t lm_starts = 1;
    std::vector<std::string> solvers;

    app.add_option("--config", config_path, "experiment config JSON");
    app.add_option("--seed", seed, "seed override")->each([&](const std::string&) {
        have_seed = true;
    });
    app.add_option("--out", out_dir, "output directory override");
    app.add_option("--threads", threads, "worker thread cap (0 = hardware)");
    app.add_flag("--check", check, "exit 4 when acceptance thresholds fail");
    app.fallthrough();

    CLI::App* c_gen = app.add_subcommand("gen-data", "generate a vanilla training dataset");
    CLI::App* c_bgen = app.add_subcommand("barrier-gen", "generate barrier datasets");
    CLI::App* c_train = app.add_subcommand("train", "train the pricing net on a dataset");
    c_train->add_option("--data", data_path, "dataset CSV")->required();
    CLI::App* c_eval = app.add_subcommand("eval", "per-cell error surfaces of a trained net");
    c_eval->add_option("--weights", weights_path, "weight file")->required();
    c_eval->add_option("--data", data_path, "dataset CSV")->required();
    CLI::App* c_beval = app.add_subcommand("barrier-eval", "barrier-net absolute error");
    c_beval->add_option("--weights", weights_path, "weight file")->required();
    c_beval->add_option("--data", data_path, "dataset CSV")->required();
    CLI::App* c_cal = app.add_subcommand("calibrate", "calibrate against targets");
    c_cal->add_option("--weights", weights_path, "weight file")->required();
    c_cal->add_option("--target", target_path, "target surface JSON");
    c_cal->add_option("--self-test", self_test_n, "number of synthetic targets");
    c_cal->add_option("--solvers", solvers, "subset of lm,gd,nm,de")->delimiter(',');
    c_cal->add_option("--multi-start", lm_starts, "LM restarts (1 = single start)");
    CLI::App* c_bench = app.add_subcommand("bench", "time NN vs MC surface evaluation");
    c_bench->add_option("--weights", weights_path, "weight file")->required();
    CLI::App* c_cls = app.add_subcommand("classify", "model-recognition experiments");
    c_cls->require_subcommand(1);
    CLI::App* c_cls_train = c_cls->add_subcommand("train", "build mixtures and train");
    CLI::App* c_cls_eval = c_cls->add_subcommand("eval", "evaluate on validation mixtures");
    c_cls_eval->add_option("--weights", weights_path, "classifier weight file")->required();

    std::vector<std::string> argv_copy = args;
    std::reverse(argv_copy.begin(), argv_copy.end());
    try {
        app.parse(argv_copy);
    } catch (const CLI::ParseError& e) {
        if (e.get_name() == "CallForHelp" || e.get_name() == "CallForAllHelp") {
            std::cout << app.help();
            return kExitOk;
        }
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    }

    try {
        if (threads) set_max_threads(threads);
        ExperimentConfig cfg =
            load_experiment_config(config_path, seed, have_seed, out_dir);

        if (c_gen->parsed()) return cmd_gen_data(cfg, false);
        if (c_bgen->parsed()) return cmd_gen_data(cfg, true);
        if (c_train->parsed()) return cmd_train(cfg, data_path);
        if (c_eval->parsed()) return cmd_eval(cfg, weights_path, data_path, check, false);
        if (c_beval->parsed()) return cmd_eval(cfg, weights_path, data_path, check, true);
        if (c_cal->parsed())
            return cmd_calibrate(cfg, weights_path, target_path, self_test_n, solvers,
                                 lm_starts, check);
        if (c_bench->parsed()) return cmd_bench(cfg, weights_path, check);
        if (c_cls->parsed()) {
            if (c_cls_train->parsed()) return cmd_classify_train(cfg);
            if (c_cls_eval->parsed()) return cmd_classify_eval(cfg, weights_path, check);
        }
        std::cerr << "error: no subcommand\n";
        return kExitConfig;
    } catch (const CheckFailure& f) {
        std::cerr << "check failed: " << f.message << "\n";
        return kExitCheckFailed;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumerical;
    }
}

}  // namespace vollab
