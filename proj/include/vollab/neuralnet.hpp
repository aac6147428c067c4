#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "vollab/common.hpp"
#include "vollab/grid.hpp"
#include "vollab/models.hpp"

namespace vollab {

enum class Activation { elu, linear, softmax };

/// Plain fully connected feedforward network. Hidden layers share one
/// activation (ELU with alpha = 1 by default); the output layer is linear for
/// regression nets and softmax for the classifier.
struct MLP {
    std::vector<std::size_t> layer_sizes;
    std::vector<Matrix> weights;              // weights[l]: layer_sizes[l+1] x layer_sizes[l]
    std::vector<std::vector<double>> biases;  // biases[l]: layer_sizes[l+1]
    Activation hidden_activation = Activation::elu;
    Activation output_activation = Activation::linear;

    /// Glorot-uniform weights, zero biases, seeded.
    static MLP create(std::vector<std::size_t> sizes, uint64_t seed,
                      Activation hidden = Activation::elu,
                      Activation output = Activation::linear);

    std::size_t n_in() const { return layer_sizes.front(); }
    std::size_t n_out() const { return layer_sizes.back(); }
    std::size_t n_affine() const { return weights.size(); }

    /// sum over affine stages of (fan_in + 1) * fan_out.
    std::size_t param_count() const;

    void forward(std::span<const double> x, std::vector<double>& y) const;
    std::vector<double> forward(std::span<const double> x) const;

    /// Analytic dF/dx, n_out x n_in, by forward accumulation. Not defined for
    /// softmax outputs.
    Matrix input_jacobian(std::span<const double> x) const;
};

/// Architecture of the price-map approximator: an input stage to width 30,
/// four 30-wide hidden stages, and a linear output stage. Parameter count is
/// (n_in+1)*30 + 4*(30+1)*30 + (30+1)*n_out.
std::vector<std::size_t> pricing_layer_sizes(std::size_t n_in, std::size_t n_out);

/// Model-recognition head: 88 -> 100 -> 50 -> 3 with softmax output.
std::vector<std::size_t> classifier_layer_sizes(std::size_t n_cells = 88);

struct Gradients {
    std::vector<Matrix> w;
    std::vector<std::vector<double>> b;
    static Gradients zeros_like(const MLP& net);
    void reset();
};

enum class Loss { mse, cross_entropy };

/// Mean loss over the batch rows and its gradient w.r.t. all weights/biases.
/// MSE is averaged over batch and outputs; cross-entropy over the batch.
double loss_and_gradients(const MLP& net, const Matrix& x, const Matrix& y,
                          std::span<const std::size_t> batch, Loss loss, Gradients& grads);

double evaluate_loss(const MLP& net, const Matrix& x, const Matrix& y, Loss loss);

enum class Optimizer { adam, sgd };

struct TrainConfig {
    std::size_t batch_size = 32;
    std::size_t max_epochs = 200;
    std::size_t patience = 25;          // early-stopping window (epochs)
    double learning_rate = 1e-3;
    std::size_t lr_halve_patience = 10; // halve lr after this many stale epochs
    double min_learning_rate = 1e-6;
    Optimizer optimizer = Optimizer::adam;
    Loss loss = Loss::mse;
    uint64_t seed = 0;

    void validate() const;
};

struct TrainHistory {
    std::vector<double> train_loss;
    std::vector<double> val_loss;
    std::vector<double> learning_rate;
    std::vector<double> epoch_ms;
    std::size_t stopped_epoch = 0;  // number of epochs actually run
    std::size_t best_epoch = 0;     // 1-based epoch whose weights were kept
};

/// Mini-batch training with per-epoch reshuffling, validation-based early
/// stopping (patience epochs without improvement) and plateau lr halving.
/// On return the net holds the best-validation-epoch weights. Throws
/// TrainingError if the loss turns non-finite.
TrainHistory train(MLP& net, const Matrix& x_train, const Matrix& y_train,
                   const Matrix& x_val, const Matrix& y_val, const TrainConfig& config);

/// A frozen pricing net bundled with everything needed to map a raw theta to
/// denormalized outputs: bounds, output normalization, grid.
struct PricingNet {
    MLP net;
    Bounds theta_bounds;
    double vol_mean = 0.0;
    double vol_std = 1.0;
    StrikeMaturityGrid grid;
    ModelKind model = ModelKind::rough_bergomi;
    std::string payoff = "vanilla";  // vanilla | down_in | down_out

    /// Normalizes theta, runs the net, undoes the output z-score.
    std::vector<double> predict_flat(std::span<const double> theta_raw) const;
    VolSurface price_surface(std::span<const double> theta_raw) const;

    /// Forward/Jacobian against normalized inputs, outputs in vol units.
    std::vector<double> forward_normalized(std::span<const double> z) const;
    Matrix jacobian_normalized(std::span<const double> z) const;
};

void save_pricing_net(const PricingNet& pn, const std::string& path,
                      const std::string& config_hash);
PricingNet load_pricing_net(const std::string& path);

/// Shared low-level weight-file writer/reader (also used by the classifier).
std::string weights_to_json(const MLP& net, const std::string& kind,
                            const std::string& model, const std::string& payoff,
                            const Bounds& theta_bounds, double out_mean, double out_std,
                            const StrikeMaturityGrid& grid, const std::string& config_hash);
struct ParsedWeights {
    MLP net;
    std::string kind, model, payoff, config_hash;
    Bounds theta_bounds;
    double out_mean = 0.0, out_std = 1.0;
    StrikeMaturityGrid grid;
};
ParsedWeights parse_weights_json(const std::string& text);
ParsedWeights load_weights_file(const std::string& path);

}  // namespace vollab
