#include "vollab/neuralnet.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "vollab/rng.hpp"
#include "vollab/simd.hpp"

namespace vollab {

namespace {

void apply_activation(Activation act, const std::vector<double>& z, std::vector<double>& a) {
    a.resize(z.size());
    switch (act) {
        case Activation::linear:
            a = z;
            return;
        case Activation::elu:
            simd::elu_v(z.data(), a.data(), z.size());
            return;
        case Activation::softmax: {
            double zmax = *std::max_element(z.begin(), z.end());
            double sum = 0.0;
            for (std::size_t i = 0; i < z.size(); ++i) {
                a[i] = std::exp(z[i] - zmax);
                sum += a[i];
            }
            for (double& v : a) v /= sum;
            return;
        }
    }
}

// ELU'(z) from the activated value: 1 for a >= 0, a + 1 (= e^z) otherwise.
double elu_deriv_from_act(double a) { return a >= 0.0 ? 1.0 : a + 1.0; }

double hidden_deriv_from_act(Activation act, double a) {
    return act == Activation::linear ? 1.0 : elu_deriv_from_act(a);
}

struct Workspace {
    std::vector<std::vector<double>> z;  // pre-activations per affine stage
    std::vector<std::vector<double>> a;  // a[0] = input, a[l+1] = activation of z[l]
    std::vector<std::vector<double>> delta;

    void resize(const MLP& net) {
        z.resize(net.n_affine());
        delta.resize(net.n_affine());
        a.resize(net.n_affine() + 1);
        a[0].resize(net.n_in());
        for (std::size_t l = 0; l < net.n_affine(); ++l) {
            z[l].resize(net.layer_sizes[l + 1]);
            delta[l].resize(net.layer_sizes[l + 1]);
            a[l + 1].resize(net.layer_sizes[l + 1]);
        }
    }
};

void forward_ws(const MLP& net, std::span<const double> x, Workspace& ws) {
    std::copy(x.begin(), x.end(), ws.a[0].begin());
    for (std::size_t l = 0; l < net.n_affine(); ++l) {
        const Matrix& w = net.weights[l];
        simd::gemv(w.data(), w.rows(), w.cols(), ws.a[l].data(), net.biases[l].data(),
                   ws.z[l].data());
        bool last = l + 1 == net.n_affine();
        apply_activation(last ? net.output_activation : net.hidden_activation, ws.z[l],
                         ws.a[l + 1]);
    }
}

}  // namespace

MLP MLP::create(std::vector<std::size_t> sizes, uint64_t seed, Activation hidden,
                Activation output) {
    if (sizes.size() < 2) throw ConfigError("network needs at least input and output layers");
    for (std::size_t s : sizes)
        if (s == 0) throw ConfigError("layer sizes must be positive");

    MLP net;
    net.layer_sizes = std::move(sizes);
    net.hidden_activation = hidden;
    net.output_activation = output;
    Xoshiro256pp rng = make_stream(seed, StreamKind::weight_init, 0);
    for (std::size_t l = 0; l + 1 < net.layer_sizes.size(); ++l) {
        std::size_t fan_in = net.layer_sizes[l];
        std::size_t fan_out = net.layer_sizes[l + 1];
        double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        Matrix w(fan_out, fan_in);
        for (double& v : w.storage()) v = rng.uniform(-limit, limit);
        net.weights.push_back(std::move(w));
        net.biases.emplace_back(fan_out, 0.0);
    }
    return net;
}

std::size_t MLP::param_count() const {
    std::size_t count = 0;
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l)
        count += (layer_sizes[l] + 1) * layer_sizes[l + 1];
    return count;
}

void MLP::forward(std::span<const double> x, std::vector<double>& y) const {
    if (x.size() != n_in()) throw std::domain_error("forward: input dimension mismatch");
    thread_local Workspace ws;
    ws.resize(*this);
    forward_ws(*this, x, ws);
    y = ws.a.back();
}

std::vector<double> MLP::forward(std::span<const double> x) const {
    std::vector<double> y;
    forward(x, y);
    return y;
}

Matrix MLP::input_jacobian(std::span<const double> x) const {
    if (output_activation == Activation::softmax)
        throw std::domain_error("input_jacobian is not provided for softmax outputs");
    if (x.size() != n_in()) throw std::domain_error("input_jacobian: dimension mismatch");

    Workspace ws;
    ws.resize(*this);
    forward_ws(*this, x, ws);

    // Forward accumulation: jac holds dA_l/dx, layer_sizes[l] x n_in.
    std::size_t nin = n_in();
    Matrix jac(nin, nin);
    for (std::size_t i = 0; i < nin; ++i) jac(i, i) = 1.0;

    std::vector<double> col_in, col_out;
    for (std::size_t l = 0; l < n_affine(); ++l) {
        const Matrix& w = weights[l];
        Matrix next(w.rows(), nin);
        col_in.resize(w.cols());
        col_out.resize(w.rows());
        for (std::size_t c = 0; c < nin; ++c) {
            for (std::size_t r = 0; r < w.cols(); ++r) col_in[r] = jac(r, c);
            simd::gemv(w.data(), w.rows(), w.cols(), col_in.data(), nullptr, col_out.data());
            for (std::size_t r = 0; r < w.rows(); ++r) next(r, c) = col_out[r];
        }
        bool last = l + 1 == n_affine();
        if (!last) {
            for (std::size_t r = 0; r < next.rows(); ++r) {
                double d = hidden_deriv_from_act(hidden_activation, ws.a[l + 1][r]);
                for (std::size_t c = 0; c < nin; ++c) next(r, c) *= d;
            }
        }
        jac = std::move(next);
    }
    return jac;
}

std::vector<std::size_t> pricing_layer_sizes(std::size_t n_in, std::size_t n_out) {
    return {n_in, 30, 30, 30, 30, 30, n_out};
}

std::vector<std::size_t> classifier_layer_sizes(std::size_t n_cells) {
    return {n_cells, 100, 50, 3};
}

Gradients Gradients::zeros_like(const MLP& net) {
    Gradients g;
    for (std::size_t l = 0; l < net.n_affine(); ++l) {
        g.w.emplace_back(net.weights[l].rows(), net.weights[l].cols());
        g.b.emplace_back(net.biases[l].size(), 0.0);
    }
    return g;
}

void Gradients::reset() {
    for (auto& m : w) std::fill(m.storage().begin(), m.storage().end(), 0.0);
    for (auto& v : b) std::fill(v.begin(), v.end(), 0.0);
}

namespace {

// Backpropagates one sample's output delta into grads; returns nothing.
void backprop_sample(const MLP& net, Workspace& ws, Gradients& grads) {
    for (std::size_t l = net.n_affine(); l-- > 0;) {
        std::vector<double>& delta = ws.delta[l];
        if (l + 1 < net.n_affine()) {
            const Matrix& w_up = net.weights[l + 1];
            simd::gemv_t(w_up.data(), w_up.rows(), w_up.cols(), ws.delta[l + 1].data(),
                         delta.data());
            for (std::size_t r = 0; r < delta.size(); ++r)
                delta[r] *= hidden_deriv_from_act(net.hidden_activation, ws.a[l + 1][r]);
        }
        Matrix& gw = grads.w[l];
        simd::ger(gw.data(), gw.rows(), gw.cols(), 1.0, delta.data(), ws.a[l].data());
        for (std::size_t r = 0; r < delta.size(); ++r) grads.b[l][r] += delta[r];
    }
}

double output_delta(const Matrix& y, std::size_t row, double inv_scale,
                    Workspace& ws, Loss loss) {
    std::vector<double>& delta = ws.delta.back();
    const std::vector<double>& out = ws.a.back();
    double sample_loss = 0.0;
    if (loss == Loss::mse) {
        for (std::size_t j = 0; j < out.size(); ++j) {
            double r = out[j] - y(row, j);
            sample_loss += r * r;
            delta[j] = 2.0 * r * inv_scale;
        }
    } else {
        // softmax + cross-entropy: delta on pre-softmax z is (q - p)
        for (std::size_t j = 0; j < out.size(); ++j) {
            double q = std::max(out[j], 1e-300);
            double p = y(row, j);
            if (p > 0.0) sample_loss -= p * std::log(q);
            delta[j] = (out[j] - p) * inv_scale;
        }
    }
    return sample_loss;
}

}  // namespace

double loss_and_gradients(const MLP& net, const Matrix& x, const Matrix& y,
                          std::span<const std::size_t> batch, Loss loss, Gradients& grads) {
    if (x.cols() != net.n_in() || y.cols() != net.n_out() || x.rows() != y.rows())
        throw std::domain_error("loss_and_gradients: shape mismatch");
    if (loss == Loss::cross_entropy && net.output_activation != Activation::softmax)
        throw std::domain_error("cross-entropy loss requires a softmax output layer");

    grads.reset();
    thread_local Workspace ws;
    ws.resize(net);

    const double n_batch = static_cast<double>(batch.size());
    const double inv_scale =
        loss == Loss::mse ? 1.0 / (n_batch * static_cast<double>(net.n_out())) : 1.0 / n_batch;

    double total = 0.0;
    for (std::size_t row : batch) {
        forward_ws(net, x.row_span(row), ws);
        total += output_delta(y, row, inv_scale, ws, loss);
        backprop_sample(net, ws, grads);
    }
    return loss == Loss::mse ? total / (n_batch * static_cast<double>(net.n_out()))
                             : total / n_batch;
}

double evaluate_loss(const MLP& net, const Matrix& x, const Matrix& y, Loss loss) {
    thread_local Workspace ws;
    ws.resize(net);
    double total = 0.0;
    for (std::size_t row = 0; row < x.rows(); ++row) {
        forward_ws(net, x.row_span(row), ws);
        const std::vector<double>& out = ws.a.back();
        if (loss == Loss::mse) {
            for (std::size_t j = 0; j < out.size(); ++j) {
                double r = out[j] - y(row, j);
                total += r * r;
            }
        } else {
            for (std::size_t j = 0; j < out.size(); ++j) {
                double p = y(row, j);
                if (p > 0.0) total -= p * std::log(std::max(out[j], 1e-300));
            }
        }
    }
    double n = static_cast<double>(x.rows());
    return loss == Loss::mse ? total / (n * static_cast<double>(net.n_out())) : total / n;
}

void TrainConfig::validate() const {
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (patience >= max_epochs) throw ConfigError("patience must be < max_epochs");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
}

namespace {

struct AdamState {
    std::vector<Matrix> mw, vw;
    std::vector<std::vector<double>> mb, vb;
    std::size_t t = 0;

    explicit AdamState(const MLP& net) {
        for (std::size_t l = 0; l < net.n_affine(); ++l) {
            mw.emplace_back(net.weights[l].rows(), net.weights[l].cols());
            vw.emplace_back(net.weights[l].rows(), net.weights[l].cols());
            mb.emplace_back(net.biases[l].size(), 0.0);
            vb.emplace_back(net.biases[l].size(), 0.0);
        }
    }
};

constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

void adam_update(double* w, const double* g, double* m, double* v, std::size_t n, double lr,
                 double bc1, double bc2) {
    for (std::size_t i = 0; i < n; ++i) {
        m[i] = kAdamBeta1 * m[i] + (1.0 - kAdamBeta1) * g[i];
        v[i] = kAdamBeta2 * v[i] + (1.0 - kAdamBeta2) * g[i] * g[i];
        double mhat = m[i] / bc1;
        double vhat = v[i] / bc2;
        w[i] -= lr * mhat / (std::sqrt(vhat) + kAdamEps);
    }
}

}  // namespace

TrainHistory train(MLP& net, const Matrix& x_train, const Matrix& y_train,
                   const Matrix& x_val, const Matrix& y_val, const TrainConfig& config) {
    config.validate();
    if (x_train.rows() == 0 || x_val.rows() == 0)
        throw ConfigError("train/validation sets must be nonempty");

    Gradients grads = Gradients::zeros_like(net);
    AdamState adam(net);
    TrainHistory hist;

    std::vector<std::size_t> order(x_train.rows());
    std::iota(order.begin(), order.end(), 0);

    double lr = config.learning_rate;
    double best_val = std::numeric_limits<double>::infinity();
    MLP best_net = net;
    std::size_t best_epoch = 0;
    std::size_t stale = 0;     // epochs since last improvement
    std::size_t lr_stale = 0;  // epochs since last improvement or lr change

    for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
        auto t0 = std::chrono::steady_clock::now();

        Xoshiro256pp shuffle_rng = make_stream(config.seed, StreamKind::epoch_shuffle, epoch);
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rng.below(i)]);

        double epoch_loss = 0.0;
        std::size_t n_batches = 0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            std::size_t len = std::min(config.batch_size, order.size() - start);
            std::span<const std::size_t> batch(order.data() + start, len);
            double batch_loss = loss_and_gradients(net, x_train, y_train, batch, config.loss,
                                                   grads);
            epoch_loss += batch_loss;
            ++n_batches;
            if (!std::isfinite(batch_loss))
                throw TrainingError("training loss became non-finite", epoch);

            if (config.optimizer == Optimizer::adam) {
                ++adam.t;
                double bc1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(adam.t));
                double bc2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(adam.t));
                for (std::size_t l = 0; l < net.n_affine(); ++l) {
                    adam_update(net.weights[l].data(), grads.w[l].data(), adam.mw[l].data(),
                                adam.vw[l].data(), net.weights[l].size(), lr, bc1, bc2);
                    adam_update(net.biases[l].data(), grads.b[l].data(), adam.mb[l].data(),
                                adam.vb[l].data(), net.biases[l].size(), lr, bc1, bc2);
                }
            } else {
                for (std::size_t l = 0; l < net.n_affine(); ++l) {
                    simd::axpy(-lr, grads.w[l].data(), net.weights[l].data(),
                               net.weights[l].size());
                    simd::axpy(-lr, grads.b[l].data(), net.biases[l].data(),
                               net.biases[l].size());
                }
            }
        }

        double val_loss = evaluate_loss(net, x_val, y_val, config.loss);
        if (!std::isfinite(val_loss))
            throw TrainingError("validation loss became non-finite", epoch);

        auto t1 = std::chrono::steady_clock::now();
        hist.train_loss.push_back(epoch_loss / static_cast<double>(n_batches));
        hist.val_loss.push_back(val_loss);
        hist.learning_rate.push_back(lr);
        hist.epoch_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
        hist.stopped_epoch = epoch;

        if (val_loss < best_val) {
            best_val = val_loss;
            best_net = net;
            best_epoch = epoch;
            stale = 0;
            lr_stale = 0;
        } else {
            ++stale;
            ++lr_stale;
        }

        if (stale >= config.patience) break;
        if (lr_stale >= config.lr_halve_patience && lr > config.min_learning_rate) {
            lr = std::max(0.5 * lr, config.min_learning_rate);
            lr_stale = 0;
        }
    }

    net = std::move(best_net);
    hist.best_epoch = best_epoch;
    return hist;
}

std::vector<double> PricingNet::predict_flat(std::span<const double> theta_raw) const {
    return forward_normalized(normalize_theta(theta_raw, theta_bounds));
}

VolSurface PricingNet::price_surface(std::span<const double> theta_raw) const {
    return unflatten(grid, predict_flat(theta_raw));
}

std::vector<double> PricingNet::forward_normalized(std::span<const double> z) const {
    std::vector<double> out = net.forward(z);
    for (double& v : out) v = v * vol_std + vol_mean;
    return out;
}

Matrix PricingNet::jacobian_normalized(std::span<const double> z) const {
    Matrix j = net.input_jacobian(z);
    for (double& v : j.storage()) v *= vol_std;
    return j;
}

// ---------------------------------------------------------------------------
// Weight files: JSON written with %.17g so reload is bit-exact.
// ---------------------------------------------------------------------------

namespace {

constexpr const char* kWeightsMagic = "vollab-weights-v1";

void write_array(std::ostream& os, const std::vector<double>& xs) {
    os << '[';
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (i) os << ',';
        os << g17(xs[i]);
    }
    os << ']';
}

void write_matrix(std::ostream& os, const Matrix& m) {
    os << '[';
    for (std::size_t i = 0; i < m.rows(); ++i) {
        if (i) os << ',';
        os << '[';
        for (std::size_t j = 0; j < m.cols(); ++j) {
            if (j) os << ',';
            os << g17(m(i, j));
        }
        os << ']';
    }
    os << ']';
}

const char* activation_name(Activation a) {
    switch (a) {
        case Activation::elu: return "elu";
        case Activation::linear: return "linear";
        case Activation::softmax: return "softmax";
    }
    return "?";
}

Activation activation_from(const std::string& s) {
    if (s == "elu") return Activation::elu;
    if (s == "linear") return Activation::linear;
    if (s == "softmax") return Activation::softmax;
    throw DataError("unknown activation: " + s);
}

}  // namespace

std::string weights_to_json(const MLP& net, const std::string& kind, const std::string& model,
                            const std::string& payoff, const Bounds& theta_bounds,
                            double out_mean, double out_std, const StrikeMaturityGrid& grid,
                            const std::string& config_hash) {
    std::ostringstream os;
    os << "{\"magic\":\"" << kWeightsMagic << "\"";
    os << ",\"kind\":\"" << kind << "\"";
    os << ",\"model\":\"" << model << "\"";
    os << ",\"payoff\":\"" << payoff << "\"";
    os << ",\"layer_sizes\":[";
    for (std::size_t i = 0; i < net.layer_sizes.size(); ++i) {
        if (i) os << ',';
        os << net.layer_sizes[i];
    }
    os << "],\"activation\":\"" << activation_name(net.hidden_activation) << "\"";
    os << ",\"alpha\":1.0";
    os << ",\"output_activation\":\"" << activation_name(net.output_activation) << "\"";
    os << ",\"weights\":[";
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
        if (l) os << ',';
        write_matrix(os, net.weights[l]);
    }
    os << "],\"biases\":[";
    for (std::size_t l = 0; l < net.biases.size(); ++l) {
        if (l) os << ',';
        write_array(os, net.biases[l]);
    }
    os << "],\"theta_bounds\":{\"lower\":";
    write_array(os, theta_bounds.lower);
    os << ",\"upper\":";
    write_array(os, theta_bounds.upper);
    os << "},\"vol_mean\":" << g17(out_mean);
    os << ",\"vol_std\":" << g17(out_std);
    os << ",\"grid\":{\"maturities\":";
    write_array(os, grid.maturities);
    os << ",\"strikes\":";
    write_array(os, grid.strikes);
    os << "},\"config_hash\":\"" << config_hash << "\"}\n";
    return os.str();
}

ParsedWeights parse_weights_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const std::exception& e) {
        throw DataError(std::string("weight file is not valid JSON: ") + e.what());
    }
    if (!j.contains("magic") || j["magic"] != kWeightsMagic)
        throw DataError("weight file magic missing or wrong");

    ParsedWeights out;
    out.kind = j.at("kind").get<std::string>();
    out.model = j.at("model").get<std::string>();
    out.payoff = j.value("payoff", std::string("vanilla"));
    out.config_hash = j.value("config_hash", std::string());

    MLP& net = out.net;
    net.layer_sizes = j.at("layer_sizes").get<std::vector<std::size_t>>();
    net.hidden_activation = activation_from(j.at("activation").get<std::string>());
    net.output_activation = activation_from(j.at("output_activation").get<std::string>());
    for (const auto& wj : j.at("weights")) {
        auto rows = wj.get<std::vector<std::vector<double>>>();
        Matrix m(rows.size(), rows.empty() ? 0 : rows[0].size());
        for (std::size_t r = 0; r < rows.size(); ++r) {
            if (rows[r].size() != m.cols()) throw DataError("ragged weight matrix");
            for (std::size_t c = 0; c < m.cols(); ++c) m(r, c) = rows[r][c];
        }
        net.weights.push_back(std::move(m));
    }
    for (const auto& bj : j.at("biases")) net.biases.push_back(bj.get<std::vector<double>>());
    if (net.weights.size() + 1 != net.layer_sizes.size() ||
        net.biases.size() != net.weights.size())
        throw DataError("weight file layer structure is inconsistent");
    for (std::size_t l = 0; l < net.weights.size(); ++l)
        if (net.weights[l].rows() != net.layer_sizes[l + 1] ||
            net.weights[l].cols() != net.layer_sizes[l] ||
            net.biases[l].size() != net.layer_sizes[l + 1])
            throw DataError("weight shapes do not chain with layer_sizes");

    out.theta_bounds = Bounds(j.at("theta_bounds").at("lower").get<std::vector<double>>(),
                              j.at("theta_bounds").at("upper").get<std::vector<double>>());
    out.out_mean = j.at("vol_mean").get<double>();
    out.out_std = j.at("vol_std").get<double>();
    out.grid = StrikeMaturityGrid(j.at("grid").at("maturities").get<std::vector<double>>(),
                                  j.at("grid").at("strikes").get<std::vector<double>>());
    return out;
}

ParsedWeights load_weights_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open weight file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_weights_json(ss.str());
}

void save_pricing_net(const PricingNet& pn, const std::string& path,
                      const std::string& config_hash) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write weight file: " + path);
    out << weights_to_json(pn.net, "pricing", to_string(pn.model), pn.payoff, pn.theta_bounds,
                           pn.vol_mean, pn.vol_std, pn.grid, config_hash);
}

PricingNet load_pricing_net(const std::string& path) {
    ParsedWeights p = load_weights_file(path);
    if (p.kind != "pricing") throw DataError("weight file is not a pricing net: " + path);
    PricingNet pn;
    pn.net = std::move(p.net);
    pn.theta_bounds = std::move(p.theta_bounds);
    pn.vol_mean = p.out_mean;
    pn.vol_std = p.out_std;
    pn.grid = std::move(p.grid);
    pn.model = model_kind_from_string(p.model);
    pn.payoff = p.payoff;
    return pn;
}

}  // namespace vollab
