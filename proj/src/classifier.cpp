#include "vollab/classifier.hpp"

#include <cmath>
#include <fstream>
#include <numeric>

#include "vollab/dataset.hpp"
#include "vollab/rng.hpp"
#include "vollab/simd.hpp"

namespace vollab {

VolSurface make_mixture(const VolSurface& heston, const VolSurface& bergomi1f,
                        const VolSurface& rbergomi, const std::array<double, 3>& coeffs) {
    if (!(heston.grid() == bergomi1f.grid()) || !(heston.grid() == rbergomi.grid()))
        throw ConfigError("mixture surfaces must share one grid");
    double sum = coeffs[0] + coeffs[1] + coeffs[2];
    if (coeffs[0] < 0.0 || coeffs[1] < 0.0 || coeffs[2] < 0.0 || std::abs(sum - 1.0) > 1e-12)
        throw std::domain_error("mixture coefficients must be nonnegative and sum to 1");

    Matrix vols(heston.vols().rows(), heston.vols().cols());
    for (std::size_t idx = 0; idx < vols.size(); ++idx)
        vols.storage()[idx] = coeffs[0] * heston.vols().storage()[idx] +
                              coeffs[1] * bergomi1f.vols().storage()[idx] +
                              coeffs[2] * rbergomi.vols().storage()[idx];
    return VolSurface(heston.grid(), std::move(vols));
}

double cross_entropy(std::span<const double> p, std::span<const double> q) {
    if (p.size() != q.size()) throw std::domain_error("cross_entropy: length mismatch");
    double sp = 0.0, sq = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] < 0.0 || q[i] < 0.0)
            throw std::domain_error("cross_entropy needs nonnegative entries");
        sp += p[i];
        sq += q[i];
    }
    if (std::abs(sp - 1.0) > 1e-9 || std::abs(sq - 1.0) > 1e-9)
        throw std::domain_error("cross_entropy arguments must lie on the simplex");
    double h = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i)
        if (p[i] > 0.0) h -= p[i] * std::log(std::max(q[i], 1e-300));
    return h;
}

std::array<double, 3> ClassifierNet::predict(std::span<const double> surface_flat) const {
    if (surface_flat.size() != net.n_in())
        throw std::domain_error("classifier input length mismatch");
    std::vector<double> z(surface_flat.size());
    for (std::size_t i = 0; i < z.size(); ++i)
        z[i] = (surface_flat[i] - in_mean) / in_std;
    std::vector<double> q = net.forward(z);
    return {q[0], q[1], q[2]};
}

std::array<double, 3> predict_mixture(const ClassifierNet& net,
                                      std::span<const double> surface_flat) {
    return net.predict(surface_flat);
}

ClassifierNet train_classifier(const std::vector<MixtureSample>& samples,
                               const StrikeMaturityGrid& grid,
                               const ClassifierTrainConfig& config) {
    if (samples.empty()) throw ConfigError("classifier training set is empty");
    const std::size_t cells = grid.n_cells();
    for (const auto& s : samples)
        if (s.surface.size() != cells)
            throw ConfigError("mixture sample surface length does not match grid");

    double sum = 0.0;
    for (const auto& s : samples)
        for (double v : s.surface) sum += v;
    double m = sum / static_cast<double>(samples.size() * cells);
    double ss = 0.0;
    for (const auto& s : samples)
        for (double v : s.surface) ss += (v - m) * (v - m);
    double sd = std::sqrt(ss / static_cast<double>(samples.size() * cells));
    if (!(sd > 0.0)) throw DataError("classifier inputs are constant");

    Matrix x(samples.size(), cells), y(samples.size(), 3);
    for (std::size_t r = 0; r < samples.size(); ++r) {
        for (std::size_t c = 0; c < cells; ++c)
            x(r, c) = (samples[r].surface[c] - m) / sd;
        for (std::size_t c = 0; c < 3; ++c) y(r, c) = samples[r].coeffs[c];
    }

    ClassifierNet out;
    out.grid = grid;
    out.in_mean = m;
    out.in_std = sd;
    out.net = MLP::create(classifier_layer_sizes(cells), config.seed, Activation::elu,
                          Activation::softmax);

    // Fixed-epoch SGD; no early stopping for the classifier.
    Gradients grads = Gradients::zeros_like(out.net);
    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        Xoshiro256pp rng = make_stream(config.seed, StreamKind::epoch_shuffle, epoch);
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[rng.below(i)]);
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            std::size_t len = std::min(config.batch_size, order.size() - start);
            std::span<const std::size_t> batch(order.data() + start, len);
            double loss = loss_and_gradients(out.net, x, y, batch, Loss::cross_entropy, grads);
            if (!std::isfinite(loss))
                throw TrainingError("classifier loss became non-finite", epoch);
            for (std::size_t l = 0; l < out.net.n_affine(); ++l) {
                simd::axpy(-config.learning_rate, grads.w[l].data(),
                           out.net.weights[l].data(), out.net.weights[l].size());
                simd::axpy(-config.learning_rate, grads.b[l].data(),
                           out.net.biases[l].data(), out.net.biases[l].size());
            }
        }
    }
    return out;
}

void save_classifier(const ClassifierNet& net, const std::string& path,
                     const std::string& config_hash) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write weight file: " + path);
    Bounds dummy({0.0, 0.0, 0.0}, {1.0, 1.0, 1.0});
    out << weights_to_json(net.net, "classifier", "mixture", "classifier", dummy, net.in_mean,
                           net.in_std, net.grid, config_hash);
}

ClassifierNet load_classifier(const std::string& path) {
    ParsedWeights p = load_weights_file(path);
    if (p.kind != "classifier") throw DataError("weight file is not a classifier: " + path);
    ClassifierNet net;
    net.net = std::move(p.net);
    net.in_mean = p.out_mean;
    net.in_std = p.out_std;
    net.grid = std::move(p.grid);
    return net;
}

std::vector<MixtureSample> build_mixture_set(const MixtureExperimentConfig& cfg) {
    if (cfg.a_grid.empty()) throw ConfigError("mixture experiment needs an a grid");
    for (double a : cfg.a_grid)
        if (a < 0.0 || a > 1.0) throw ConfigError("mixture weights must lie in [0,1]");

    GenConfig gen;
    gen.n_samples = cfg.pool_size;
    gen.sim = cfg.sim;
    gen.max_rejection_rate = cfg.max_rejection_rate;

    Dataset heston_pool = generate_dataset(ModelKind::heston, cfg.heston_bounds, cfg.grid,
                                           gen, derive_seed(cfg.seed, StreamKind::mixture, 1))
                              .dataset;
    Dataset rbergomi_pool =
        generate_dataset(ModelKind::rough_bergomi, cfg.rbergomi_bounds, cfg.grid, gen,
                         derive_seed(cfg.seed, StreamKind::mixture, 2))
            .dataset;

    std::vector<MixtureSample> out(cfg.n_mixtures);
    const std::size_t cells = cfg.grid.n_cells();
    for (std::size_t k = 0; k < cfg.n_mixtures; ++k) {
        Xoshiro256pp rng = make_stream(cfg.seed, StreamKind::mixture, 100 + k);
        double a = cfg.a_grid[rng.below(cfg.a_grid.size())];
        const auto& h = heston_pool.samples[rng.below(cfg.pool_size)].surface;
        const auto& r = rbergomi_pool.samples[rng.below(cfg.pool_size)].surface;
        MixtureSample s;
        s.coeffs = {a, 0.0, 1.0 - a};
        s.surface.resize(cells);
        for (std::size_t c = 0; c < cells; ++c) s.surface[c] = a * h[c] + (1.0 - a) * r[c];
        out[k] = std::move(s);
    }
    return out;
}

}  // namespace vollab
