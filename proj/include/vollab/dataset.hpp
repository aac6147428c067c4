#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vollab/common.hpp"
#include "vollab/grid.hpp"
#include "vollab/mc_engine.hpp"
#include "vollab/models.hpp"

namespace vollab {

struct TrainingSample {
    std::vector<double> theta;
    std::vector<double> surface;  // flattened, row-major maturity-major
};

struct NormalizationStats {
    Bounds theta_bounds;
    double vol_mean = 0.0;
    double vol_std = 1.0;  // > 0
};

struct Dataset {
    ModelKind model = ModelKind::rough_bergomi;
    std::string payoff = "vanilla";  // vanilla | down_in | down_out
    StrikeMaturityGrid grid;
    std::vector<TrainingSample> samples;
    NormalizationStats stats;
    std::vector<std::size_t> train_idx;
    std::vector<std::size_t> test_idx;
    uint64_t seed = 0;
    double train_fraction = 0.85;

    std::size_t theta_dim() const;
};

/// i.i.d. uniform draws over the box, one derived stream per sample. Heston
/// draws are redrawn within their stream until the Feller condition holds.
std::vector<std::vector<double>> sample_parameters(const Bounds& bounds, std::size_t n,
                                                   uint64_t seed, ModelKind kind);

struct GenConfig {
    std::size_t n_samples = 1000;
    SimConfig sim;
    double train_fraction = 0.85;
    double max_rejection_rate = 0.05;
};

struct GenReport {
    std::size_t accepted = 0;
    std::size_t rejected = 0;
    double seconds = 0.0;
    double rejection_rate() const {
        std::size_t total = accepted + rejected;
        return total ? static_cast<double>(rejected) / static_cast<double>(total) : 0.0;
    }
};

struct GenerationResult {
    Dataset dataset;
    GenReport report;
};

/// Samples the box, prices each draw by Monte Carlo, inverts to implied vols.
/// Draws whose price grid violates no-arbitrage bounds at any cell are
/// rejected, logged and redrawn from the same per-sample stream. Aborts with
/// DataError if the overall rejection rate exceeds config.max_rejection_rate.
GenerationResult generate_dataset(ModelKind kind, const Bounds& bounds,
                                  const StrikeMaturityGrid& grid, const GenConfig& config,
                                  uint64_t seed);

/// Same driver for digital barrier probabilities: no inversion, both barrier
/// kinds priced from one simulation pass per sample.
std::pair<GenerationResult, GenerationResult> generate_barrier_datasets(
    ModelKind kind, const Bounds& bounds, const StrikeMaturityGrid& barrier_grid,
    const GenConfig& config, uint64_t seed);

/// Seeded shuffle split; stats are then recomputed from the train split only.
void split_dataset(Dataset& ds, double train_fraction, uint64_t seed);
void compute_stats(Dataset& ds, const Bounds& bounds);

/// Normalized views: inputs in [-1,1]^dim, targets z-scored with train stats.
Matrix normalized_inputs(const Dataset& ds, const std::vector<std::size_t>& idx);
Matrix normalized_targets(const Dataset& ds, const std::vector<std::size_t>& idx);

void save_dataset(const Dataset& ds, const std::string& path,
                  const std::string& config_hash = "");
Dataset load_dataset(const std::string& path);

}  // namespace vollab
