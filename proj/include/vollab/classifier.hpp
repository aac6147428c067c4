#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "vollab/grid.hpp"
#include "vollab/mc_engine.hpp"
#include "vollab/neuralnet.hpp"

namespace vollab {

/// Coefficient order: (a, b, c) = (heston, bergomi1f, rbergomi) weights.
struct MixtureSample {
    std::vector<double> surface;      // flattened
    std::array<double, 3> coeffs{};   // nonnegative, sums to 1
};

/// Elementwise convex combination a*heston + b*bergomi + c*rbergomi.
VolSurface make_mixture(const VolSurface& heston, const VolSurface& bergomi1f,
                        const VolSurface& rbergomi, const std::array<double, 3>& coeffs);

/// H(p, q) = -sum p_i log q_i for discrete distributions on the simplex.
double cross_entropy(std::span<const double> p, std::span<const double> q);

/// 88 -> 100 -> 50 -> 3 ELU net with softmax output; inputs are z-scored
/// surfaces using the classifier train-set scalar mean/std.
struct ClassifierNet {
    MLP net;
    double in_mean = 0.0;
    double in_std = 1.0;
    StrikeMaturityGrid grid;

    std::array<double, 3> predict(std::span<const double> surface_flat) const;
};

std::array<double, 3> predict_mixture(const ClassifierNet& net,
                                      std::span<const double> surface_flat);

struct ClassifierTrainConfig {
    std::size_t epochs = 20;
    std::size_t batch_size = 32;
    double learning_rate = 0.05;  // plain SGD
    uint64_t seed = 0;
};

/// 20-epoch SGD on cross-entropy against the soft coefficient targets.
ClassifierNet train_classifier(const std::vector<MixtureSample>& samples,
                               const StrikeMaturityGrid& grid,
                               const ClassifierTrainConfig& config);

void save_classifier(const ClassifierNet& net, const std::string& path,
                     const std::string& config_hash);
ClassifierNet load_classifier(const std::string& path);

/// Two-model mixture experiment (b = 0): surfaces drawn from per-model pools,
/// mixed with a Heston weight a sampled from a_grid, labelled (a, 0, 1-a).
struct MixtureExperimentConfig {
    Bounds heston_bounds;
    Bounds rbergomi_bounds;
    StrikeMaturityGrid grid;
    SimConfig sim;
    std::size_t pool_size = 1500;    // surfaces generated per model
    std::size_t n_mixtures = 30000;
    std::vector<double> a_grid;      // Heston mixture weights
    double max_rejection_rate = 0.9;
    uint64_t seed = 0;
};

std::vector<MixtureSample> build_mixture_set(const MixtureExperimentConfig& cfg);

}  // namespace vollab
