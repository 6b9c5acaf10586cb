#include "flamekit/network.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "flamekit/error.hpp"
#include "flamekit/fsio.hpp"
#include "flamekit/rng.hpp"
#include "model_json.hpp"

namespace flamekit {

namespace {

using ordered_json = nlohmann::ordered_json;

constexpr double kStdFloor = 1e-12;

// Seed stream tags, so init / validation split / batch shuffling never
// share a random stream even though they share one user-facing seed.
constexpr std::uint64_t kTagInit = 0x171;
constexpr std::uint64_t kTagValSplit = 0x5A1D;
constexpr std::uint64_t kTagShuffle = 0xBA7C4;

bool relu_on_layer(Activation mode, bool is_output) {
    return mode == Activation::HiddenRelu ? !is_output : is_output;
}

long round_half_up(double x) { return static_cast<long>(std::floor(x + 0.5)); }

// Activations (a) and pre-activations (z) for a packed batch, column per
// sample. a[0] is the normalized input, a[L] the normalized output.
struct PackedForward {
    std::vector<Eigen::MatrixXd> a;
    std::vector<Eigen::MatrixXd> z;
};

PackedForward forward_packed(const Mlp& m, const Eigen::MatrixXd& x) {
    const std::size_t n_layers = m.weights.size();
    PackedForward f;
    f.a.resize(n_layers + 1);
    f.z.resize(n_layers);
    f.a[0] = x;
    for (std::size_t l = 0; l < n_layers; ++l) {
        f.z[l] = (m.weights[l] * f.a[l]).colwise() + m.biases[l];
        const bool is_output = (l + 1 == n_layers);
        f.a[l + 1] = relu_on_layer(m.activation, is_output) ? f.z[l].cwiseMax(0.0) : f.z[l];
    }
    return f;
}

// Rare path: called only once a non-finite loss has been observed, to
// name the first layer whose activations went bad.
[[noreturn]] void throw_non_finite(const PackedForward& f) {
    for (std::size_t l = 1; l < f.a.size(); ++l) {
        if (!f.a[l].allFinite()) {
            throw TrainingError("non-finite activations after layer " + std::to_string(l) +
                                " (training diverged; lower the learning rate)");
        }
    }
    throw TrainingError("non-finite loss with finite activations (check targets)");
}

double packed_loss(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target) {
    return (pred - target).squaredNorm() /
           (static_cast<double>(pred.rows()) * static_cast<double>(pred.cols()));
}

void pack_batch(std::span<const EncodedPoint> pts, const NormStats& norm, Eigen::MatrixXd& x,
                Eigen::MatrixXd& t) {
    const auto in = static_cast<Eigen::Index>(pts.front().input.size());
    const auto out = static_cast<Eigen::Index>(pts.front().targets.size());
    x.resize(in, static_cast<Eigen::Index>(pts.size()));
    t.resize(out, static_cast<Eigen::Index>(pts.size()));
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const auto& p = pts[i];
        if (static_cast<Eigen::Index>(p.input.size()) != in ||
            static_cast<Eigen::Index>(p.targets.size()) != out) {
            throw DimensionError("encoded point " + std::to_string(i) +
                                 " has inconsistent input/target width");
        }
        for (Eigen::Index j = 0; j < in; ++j) {
            x(j, static_cast<Eigen::Index>(i)) = (p.input[static_cast<std::size_t>(j)] -
                                                  norm.input_mean(j)) / norm.input_std(j);
        }
        for (Eigen::Index j = 0; j < out; ++j) {
            t(j, static_cast<Eigen::Index>(i)) = (p.targets[static_cast<std::size_t>(j)] -
                                                  norm.target_mean(j)) / norm.target_std(j);
        }
    }
}

BackwardResult backward_packed(const Mlp& m, const Eigen::MatrixXd& x, const Eigen::MatrixXd& t) {
    const PackedForward f = forward_packed(m, x);
    const std::size_t n_layers = m.weights.size();
    const double scale = static_cast<double>(t.rows()) * static_cast<double>(t.cols());

    BackwardResult r;
    r.loss = (f.a[n_layers] - t).squaredNorm() / scale;
    if (!std::isfinite(r.loss)) throw_non_finite(f);

    r.grads.weights.resize(n_layers);
    r.grads.biases.resize(n_layers);

    // ReLU subgradient at exactly zero is taken as zero.
    Eigen::MatrixXd delta = (2.0 / scale) * (f.a[n_layers] - t);
    if (relu_on_layer(m.activation, /*is_output=*/true)) {
        delta = delta.cwiseProduct((f.z[n_layers - 1].array() > 0.0).cast<double>().matrix());
    }
    for (std::size_t l = n_layers; l-- > 0;) {
        r.grads.weights[l] = delta * f.a[l].transpose();
        r.grads.biases[l] = delta.rowwise().sum();
        if (l > 0) {
            delta = m.weights[l].transpose() * delta;
            if (relu_on_layer(m.activation, /*is_output=*/false)) {
                delta = delta.cwiseProduct((f.z[l - 1].array() > 0.0).cast<double>().matrix());
            }
        }
    }
    return r;
}

void snapshot_params(const Mlp& m, std::vector<Eigen::MatrixXd>& w, std::vector<Eigen::VectorXd>& b) {
    w = m.weights;
    b = m.biases;
}

ordered_json norm_to_json(const NormStats& n) {
    auto vec = [](const Eigen::VectorXd& v) {
        return std::vector<double>(v.data(), v.data() + v.size());
    };
    ordered_json j;
    j["input_mean"] = vec(n.input_mean);
    j["input_std"] = vec(n.input_std);
    j["target_mean"] = vec(n.target_mean);
    j["target_std"] = vec(n.target_std);
    return j;
}

Eigen::VectorXd vector_from_json(const ordered_json& j, const char* field) {
    if (!j.is_array()) throw SerializationError(std::string("Corrupted: field '") + field + "' is not an array");
    Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_number() && !j[i].is_null()) {
            throw SerializationError(std::string("Corrupted: non-numeric entry in '") + field + "'");
        }
        v(static_cast<Eigen::Index>(i)) =
            j[i].is_null() ? std::numeric_limits<double>::quiet_NaN() : j[i].get<double>();
    }
    return v;
}

}  // namespace

namespace detail {

ordered_json train_config_to_json(const TrainConfig& c) {
    ordered_json j;
    j["hidden_dims"] = c.hidden_dims;
    j["learning_rate"] = c.learning_rate;
    j["beta1"] = c.beta1;
    j["beta2"] = c.beta2;
    j["epsilon"] = c.epsilon;
    j["batch_size"] = c.batch_size;
    j["max_epochs"] = c.max_epochs;
    j["patience"] = c.patience;
    j["val_fraction"] = c.val_fraction;
    j["activation"] = to_string(c.activation);
    j["seed"] = c.seed;
    return j;
}

TrainConfig train_config_from_json(const ordered_json& j) {
    TrainConfig c;
    c.hidden_dims = j.at("hidden_dims").get<std::vector<int>>();
    c.learning_rate = j.at("learning_rate").get<double>();
    c.beta1 = j.at("beta1").get<double>();
    c.beta2 = j.at("beta2").get<double>();
    c.epsilon = j.at("epsilon").get<double>();
    c.batch_size = j.at("batch_size").get<int>();
    c.max_epochs = j.at("max_epochs").get<int>();
    c.patience = j.at("patience").get<int>();
    c.val_fraction = j.at("val_fraction").get<double>();
    c.activation = activation_from_string(j.at("activation").get<std::string>());
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
}

}  // namespace

namespace detail {

ordered_json model_to_json(const Mlp& m) {
    m.validate();
    ordered_json j;
    j["format_version"] = 1;
    j["kind"] = "mlp";
    j["layer_dims"] = m.layer_dims;
    j["activation"] = to_string(m.activation);
    j["seed"] = m.seed;
    j["train_config"] = train_config_to_json(m.config);
    j["norm"] = norm_to_json(m.norm);
    ordered_json weights = ordered_json::array();
    for (const auto& w : m.weights) {
        std::vector<double> flat(static_cast<std::size_t>(w.size()));
        for (Eigen::Index r = 0; r < w.rows(); ++r) {// row-major on disk
            for (Eigen::Index c = 0; c < w.cols(); ++c) {
                flat[static_cast<std::size_t>(r * w.cols() + c)] = w(r, c);
            }
        }
        weights.push_back(flat);
    }
    j["weights"] = std::move(weights);
    ordered_json biases = ordered_json::array();
    for (const auto& b : m.biases) {
        biases.push_back(std::vector<double>(b.data(), b.data() + b.size()));
    }
    j["biases"] = std::move(biases);
    ordered_json meta;
    meta["epochs_run"] = m.meta.epochs_run;
    meta["best_epoch"] = m.meta.best_epoch;
    if (std::isfinite(m.meta.best_val_loss)) {
        meta["best_val_loss"] = m.meta.best_val_loss;
    } else {
        meta["best_val_loss"] = nullptr;
    }
    meta["dataset_fingerprint"] = m.meta.dataset_fingerprint;
    j["meta"] = meta;
    return j;
}

Mlp model_from_json(const ordered_json& j) {
    if (!j.is_object()) throw SerializationError("Corrupted: model document is not a JSON object");
    if (!j.contains("format_version")) {
        throw SerializationError("Corrupted: model document has no format_version field");
    }
    const auto version = j.at("format_version").get<long>();
    if (version != 1) {
        throw SerializationError("UnsupportedVersion: model format_version " +
                                 std::to_string(version) + " (this build reads version 1)");
    }
    if (j.value("kind", std::string{}) != "mlp") {
        throw SerializationError("Corrupted: model kind is not 'mlp'");
    }
    Mlp m;
    try {
        m.layer_dims = j.at("layer_dims").get<std::vector<int>>();
        m.activation = activation_from_string(j.at("activation").get<std::string>());
        m.seed = j.at("seed").get<std::uint64_t>();
        m.config = train_config_from_json(j.at("train_config"));
        const auto& jn = j.at("norm");
        m.norm.input_mean = vector_from_json(jn.at("input_mean"), "input_mean");
        m.norm.input_std = vector_from_json(jn.at("input_std"), "input_std");
        m.norm.target_mean = vector_from_json(jn.at("target_mean"), "target_mean");
        m.norm.target_std = vector_from_json(jn.at("target_std"), "target_std");

        const auto& jw = j.at("weights");
        const auto& jb = j.at("biases");
        if (m.layer_dims.size() < 2 || jw.size() != m.layer_dims.size() - 1 ||
            jb.size() != m.layer_dims.size() - 1) {
            throw SerializationError("Corrupted: layer_dims does not match weights/biases count");
        }
        for (std::size_t l = 0; l + 1 < m.layer_dims.size(); ++l) {
            const auto rows = static_cast<Eigen::Index>(m.layer_dims[l + 1]);
            const auto cols = static_cast<Eigen::Index>(m.layer_dims[l]);
            const Eigen::VectorXd flat = vector_from_json(jw[l], "weights");
            if (flat.size() != rows * cols) {
                throw SerializationError("Corrupted: weight matrix " + std::to_string(l) +
                                         " has " + std::to_string(flat.size()) +
                                         " entries, expected " + std::to_string(rows * cols));
            }
            Eigen::MatrixXd w(rows, cols);
            for (Eigen::Index r = 0; r < rows; ++r) {
                for (Eigen::Index c = 0; c < cols; ++c) w(r, c) = flat(r * cols + c);
            }
            m.weights.push_back(std::move(w));
            Eigen::VectorXd b = vector_from_json(jb[l], "biases");
            if (b.size() != rows) {
                throw SerializationError("Corrupted: bias vector " + std::to_string(l) +
                                         " has " + std::to_string(b.size()) + " entries, expected " +
                                         std::to_string(rows));
            }
            m.biases.push_back(std::move(b));
        }
        const auto& jm = j.at("meta");
        m.meta.epochs_run = jm.at("epochs_run").get<int>();
        m.meta.best_epoch = jm.at("best_epoch").get<int>();
        m.meta.best_val_loss = jm.at("best_val_loss").is_null()
                                   ? std::numeric_limits<double>::quiet_NaN()
                                   : jm.at("best_val_loss").get<double>();
        m.meta.dataset_fingerprint = jm.at("dataset_fingerprint").get<std::string>();
    } catch (const ordered_json::exception& e) {
        throw SerializationError(std::string("Corrupted: model document is incomplete (") +
                                 e.what() + ")");
    }
    m.validate();
    return m;
}

}  // namespace detail

std::string to_string(Activation a) {
    return a == Activation::HiddenRelu ? "hidden-relu" : "paper-literal";
}

Activation activation_from_string(const std::string& s) {
    if (s == "hidden-relu") return Activation::HiddenRelu;
    if (s == "paper-literal") return Activation::PaperLiteral;
    throw DataError("unknown activation '" + s + "' (expected hidden-relu or paper-literal)");
}

NormStats NormStats::identity(int input_dim, int output_dim) {
    NormStats n;
    n.input_mean = Eigen::VectorXd::Zero(input_dim);
    n.input_std = Eigen::VectorXd::Ones(input_dim);
    n.target_mean = Eigen::VectorXd::Zero(output_dim);
    n.target_std = Eigen::VectorXd::Ones(output_dim);
    return n;
}

void NormStats::validate(int input_dim, int output_dim) const {
    if (input_mean.size() != input_dim || input_std.size() != input_dim ||
        target_mean.size() != output_dim || target_std.size() != output_dim) {
        throw DimensionError("normalization statistics do not match model dimensions");
    }
    if ((input_std.array() <= 0.0).any() || (target_std.array() <= 0.0).any()) {
        throw DimensionError("normalization standard deviations must be positive");
    }
    if (!input_mean.allFinite() || !input_std.allFinite() || !target_mean.allFinite() ||
        !target_std.allFinite()) {
        throw DimensionError("normalization statistics contain non-finite values");
    }
}

void TrainConfig::validate() const {
    for (int d : hidden_dims) {
        if (d <= 0) throw DimensionError("hidden layer widths must be positive");
    }
    if (!(learning_rate > 0.0)) throw TrainingError("learning_rate must be positive");
    if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) {
        throw TrainingError("Adam betas must lie in [0, 1)");
    }
    if (!(epsilon > 0.0)) throw TrainingError("Adam epsilon must be positive");
    if (batch_size < 1) throw TrainingError("batch_size must be at least 1");
    if (max_epochs < 1) throw TrainingError("max_epochs must be at least 1");
    if (patience < 1) throw TrainingError("patience must be at least 1");
    if (!(val_fraction > 0.0) || !(val_fraction < 1.0)) {
        throw TrainingError("val_fraction must lie strictly between 0 and 1");
    }
}

std::size_t Mlp::n_parameters() const {
    std::size_t n = 0;
    for (const auto& w : weights) n += static_cast<std::size_t>(w.size());
    for (const auto& b : biases) n += static_cast<std::size_t>(b.size());
    return n;
}

void Mlp::validate() const {
    if (layer_dims.size() < 2) throw DimensionError("model needs an input and an output layer");
    for (int d : layer_dims) {
        if (d <= 0) throw DimensionError("layer widths must be positive");
    }
    if (weights.size() != layer_dims.size() - 1 || biases.size() != weights.size()) {
        throw DimensionError("parameter count does not match layer_dims");
    }
    for (std::size_t l = 0; l < weights.size(); ++l) {
        if (weights[l].rows() != layer_dims[l + 1] || weights[l].cols() != layer_dims[l] ||
            biases[l].size() != layer_dims[l + 1]) {
            throw DimensionError("parameter shapes at layer " + std::to_string(l + 1) +
                                 " do not match layer_dims");
        }
        if (!weights[l].allFinite() || !biases[l].allFinite()) {
            throw DimensionError("non-finite parameters at layer " + std::to_string(l + 1));
        }
    }
    norm.validate(input_dim(), output_dim());
}

Mlp make_mlp(const std::vector<int>& layer_dims, Activation activation, std::uint64_t seed) {
    if (layer_dims.size() < 2) throw DimensionError("model needs an input and an output layer");
    Mlp m;
    m.layer_dims = layer_dims;
    m.activation = activation;
    m.seed = seed;
    m.norm = NormStats::identity(layer_dims.front(), layer_dims.back());
    SplitMix64 rng(derive_seed(seed, kTagInit));
    for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
        const auto rows = static_cast<Eigen::Index>(layer_dims[l + 1]);
        const auto cols = static_cast<Eigen::Index>(layer_dims[l]);
        const double limit = std::sqrt(6.0 / static_cast<double>(layer_dims[l]));
        Eigen::MatrixXd w(rows, cols);
        for (Eigen::Index r = 0; r < rows; ++r) {
            for (Eigen::Index c = 0; c < cols; ++c) w(r, c) = rng.uniform(-limit, limit);
        }
        m.weights.push_back(std::move(w));
        m.biases.push_back(Eigen::VectorXd::Zero(rows));
    }
    return m;
}

NormStats fit_norm_stats(std::span<const EncodedPoint> points) {
    if (points.empty()) throw DataError("EmptyDataset: cannot fit normalization on zero points");
    const auto in = static_cast<Eigen::Index>(points.front().input.size());
    const auto out = static_cast<Eigen::Index>(points.front().targets.size());
    NormStats n;
    n.input_mean = Eigen::VectorXd::Zero(in);
    n.target_mean = Eigen::VectorXd::Zero(out);
    for (const auto& p : points) {
        if (static_cast<Eigen::Index>(p.input.size()) != in ||
            static_cast<Eigen::Index>(p.targets.size()) != out) {
            throw DimensionError("encoded points have inconsistent widths");
        }
        for (Eigen::Index j = 0; j < in; ++j) n.input_mean(j) += p.input[static_cast<std::size_t>(j)];
        for (Eigen::Index j = 0; j < out; ++j) n.target_mean(j) += p.targets[static_cast<std::size_t>(j)];
    }
    const double count = static_cast<double>(points.size());
    n.input_mean /= count;
    n.target_mean /= count;
    // Population standard deviation, floored so the transform stays
    // invertible when a feature is constant.
    Eigen::VectorXd in_ss = Eigen::VectorXd::Zero(in);
    Eigen::VectorXd out_ss = Eigen::VectorXd::Zero(out);
    for (const auto& p : points) {
        for (Eigen::Index j = 0; j < in; ++j) {
            const double d = p.input[static_cast<std::size_t>(j)] - n.input_mean(j);
            in_ss(j) += d * d;
        }
        for (Eigen::Index j = 0; j < out; ++j) {
            const double d = p.targets[static_cast<std::size_t>(j)] - n.target_mean(j);
            out_ss(j) += d * d;
        }
    }
    n.input_std = (in_ss / count).cwiseSqrt().cwiseMax(kStdFloor);
    n.target_std = (out_ss / count).cwiseSqrt().cwiseMax(kStdFloor);
    return n;
}

std::vector<double> forward(const Mlp& model, std::span<const double> input) {
    if (static_cast<int>(input.size()) != model.input_dim()) {
        throw DimensionError("forward input has " + std::to_string(input.size()) +
                             " entries, model expects " + std::to_string(model.input_dim()));
    }
    Eigen::VectorXd a(model.input_dim());
    for (Eigen::Index j = 0; j < a.size(); ++j) {
        const double v = input[static_cast<std::size_t>(j)];
        if (!std::isfinite(v)) throw DataError("non-finite value in forward input");
        a(j) = (v - model.norm.input_mean(j)) / model.norm.input_std(j);
    }
    const std::size_t n_layers = model.weights.size();
    for (std::size_t l = 0; l < n_layers; ++l) {
        a = (model.weights[l] * a + model.biases[l]).eval();
        if (relu_on_layer(model.activation, l + 1 == n_layers)) a = a.cwiseMax(0.0);
        if (!a.allFinite()) {
            throw TrainingError("non-finite activations after layer " + std::to_string(l + 1));
        }
    }
    std::vector<double> out(static_cast<std::size_t>(model.output_dim()));
    for (Eigen::Index j = 0; j < a.size(); ++j) {
        out[static_cast<std::size_t>(j)] = a(j) * model.norm.target_std(j) + model.norm.target_mean(j);
    }
    return out;
}

Eigen::MatrixXd forward_batch(const Mlp& model, const Eigen::MatrixXd& inputs) {
    if (inputs.rows() != model.input_dim()) {
        throw DimensionError("forward_batch inputs have " + std::to_string(inputs.rows()) +
                             " rows, model expects " + std::to_string(model.input_dim()));
    }
    if (!inputs.allFinite()) throw DataError("non-finite value in forward_batch inputs");
    Eigen::MatrixXd x = ((inputs.colwise() - model.norm.input_mean).array().colwise() /
                         model.norm.input_std.array()).matrix();
    const PackedForward f = forward_packed(model, x);
    const Eigen::MatrixXd& y = f.a.back();
    if (!y.allFinite()) throw_non_finite(f);
    return ((y.array().colwise() * model.norm.target_std.array()).colwise() +
            model.norm.target_mean.array()).matrix();
}

double loss_mse(std::span<const double> pred, std::span<const double> target) {
    if (pred.size() != target.size() || pred.empty()) {
        throw DimensionError("loss_mse needs equal-length, non-empty vectors");
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - target[i];
        acc += d * d;
    }
    return acc / static_cast<double>(pred.size());
}

BackwardResult backward(const Mlp& model, std::span<const EncodedPoint> batch) {
    if (batch.empty()) throw DataError("EmptyDataset: backward needs at least one point");
    model.validate();
    Eigen::MatrixXd x, t;
    pack_batch(batch, model.norm, x, t);
    if (static_cast<int>(x.rows()) != model.input_dim() ||
        static_cast<int>(t.rows()) != model.output_dim()) {
        throw DimensionError("encoded points do not match model dimensions");
    }
    return backward_packed(model, x, t);
}

double batch_loss(const Mlp& model, std::span<const EncodedPoint> batch) {
    if (batch.empty()) throw DataError("EmptyDataset: batch_loss needs at least one point");
    Eigen::MatrixXd x, t;
    pack_batch(batch, model.norm, x, t);
    const PackedForward f = forward_packed(model, x);
    return packed_loss(f.a.back(), t);
}

AdamState AdamState::zeros_like(const Mlp& model) {
    AdamState s;
    for (const auto& w : model.weights) {
        s.m_weights.push_back(Eigen::MatrixXd::Zero(w.rows(), w.cols()));
        s.v_weights.push_back(Eigen::MatrixXd::Zero(w.rows(), w.cols()));
    }
    for (const auto& b : model.biases) {
        s.m_biases.push_back(Eigen::VectorXd::Zero(b.size()));
        s.v_biases.push_back(Eigen::VectorXd::Zero(b.size()));
    }
    return s;
}

void adam_step(Mlp& model, const Gradients& grads, AdamState& state, long t,
               double learning_rate, double beta1, double beta2, double epsilon) {
    if (t != state.step + 1) {
        throw ConsistencyError("adam_step called with t=" + std::to_string(t) +
                               ", expected " + std::to_string(state.step + 1));
    }
    if (grads.weights.size() != model.weights.size() || grads.biases.size() != model.biases.size()) {
        throw DimensionError("gradient shapes do not match model");
    }
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (std::size_t l = 0; l < model.weights.size(); ++l) {
        auto& mw = state.m_weights[l];
        auto& vw = state.v_weights[l];
        mw = beta1 * mw + (1.0 - beta1) * grads.weights[l];
        vw = beta2 * vw + (1.0 - beta2) * grads.weights[l].cwiseProduct(grads.weights[l]);
        model.weights[l].array() -=
            learning_rate * (mw.array() / bc1) / ((vw.array() / bc2).sqrt() + epsilon);

        auto& mb = state.m_biases[l];
        auto& vb = state.v_biases[l];
        mb = beta1 * mb + (1.0 - beta1) * grads.biases[l];
        vb = beta2 * vb + (1.0 - beta2) * grads.biases[l].cwiseProduct(grads.biases[l]);
        model.biases[l].array() -=
            learning_rate * (mb.array() / bc1) / ((vb.array() / bc2).sqrt() + epsilon);
    }
    state.step = t;
}

Mlp train_single(std::span<const EncodedPoint> data, const TrainConfig& cfg) {
    cfg.validate();
    if (data.empty()) throw DataError("EmptyDataset: cannot train on zero points");
    const auto n = data.size();
    const int in = static_cast<int>(data.front().input.size());
    const int out = static_cast<int>(data.front().targets.size());

    // Validation split, drawn once per training run from its own stream.
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    SplitMix64 split_rng(derive_seed(cfg.seed, kTagValSplit));
    fisher_yates(order, split_rng);
    auto n_val = static_cast<std::size_t>(round_half_up(cfg.val_fraction * static_cast<double>(n)));
    n_val = std::max<std::size_t>(n_val, 1);
    if (n_val >= n) {
        throw TrainingError("validation split leaves no training data (" + std::to_string(n) +
                            " points, val_fraction=" + std::to_string(cfg.val_fraction) + ")");
    }
    std::vector<std::size_t> val_idx(order.begin(), order.begin() + static_cast<long>(n_val));
    std::vector<std::size_t> train_idx(order.begin() + static_cast<long>(n_val), order.end());
    std::sort(val_idx.begin(), val_idx.end());
    std::sort(train_idx.begin(), train_idx.end());
    const auto n_train = train_idx.size();
    if (n_train < static_cast<std::size_t>(cfg.batch_size)) {
        throw TrainingError("training data after validation split (" + std::to_string(n_train) +
                            " points) is smaller than one batch (batch_size=" +
                            std::to_string(cfg.batch_size) + ")");
    }

    std::vector<EncodedPoint> train_pts, val_pts;
    train_pts.reserve(n_train);
    val_pts.reserve(n_val);
    for (auto i : train_idx) train_pts.push_back(data[i]);
    for (auto i : val_idx) val_pts.push_back(data[i]);

    std::vector<int> dims;
    dims.push_back(in);
    dims.insert(dims.end(), cfg.hidden_dims.begin(), cfg.hidden_dims.end());
    dims.push_back(out);
    Mlp model = make_mlp(dims, cfg.activation, cfg.seed);
    model.config = cfg;
    model.norm = fit_norm_stats(train_pts);  // training portion only

    Eigen::MatrixXd x_train, t_train, x_val, t_val;
    pack_batch(train_pts, model.norm, x_train, t_train);
    pack_batch(val_pts, model.norm, x_val, t_val);

    AdamState adam = AdamState::zeros_like(model);
    SplitMix64 shuffle_rng(derive_seed(cfg.seed, kTagShuffle));
    std::vector<int> epoch_order(n_train);
    std::iota(epoch_order.begin(), epoch_order.end(), 0);

    std::vector<Eigen::MatrixXd> best_w;
    std::vector<Eigen::VectorXd> best_b;
    snapshot_params(model, best_w, best_b);
    double best_val = std::numeric_limits<double>::infinity();
    int best_epoch = 0;
    int since_best = 0;
    long step = 0;

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        fisher_yates(epoch_order, shuffle_rng);
        for (std::size_t start = 0; start < n_train; start += static_cast<std::size_t>(cfg.batch_size)) {
            const auto stop = std::min(n_train, start + static_cast<std::size_t>(cfg.batch_size));
            const std::vector<int> batch_idx(epoch_order.begin() + static_cast<long>(start),
                                             epoch_order.begin() + static_cast<long>(stop));
            const Eigen::MatrixXd xb = x_train(Eigen::all, batch_idx);
            const Eigen::MatrixXd tb = t_train(Eigen::all, batch_idx);
            const BackwardResult r = backward_packed(model, xb, tb);
            adam_step(model, r.grads, adam, ++step, cfg.learning_rate, cfg.beta1, cfg.beta2,
                      cfg.epsilon);
        }
        const PackedForward vf = forward_packed(model, x_val);
        const double val_loss = packed_loss(vf.a.back(), t_val);
        if (!std::isfinite(val_loss)) {
            throw TrainingError("non-finite validation loss at epoch " + std::to_string(epoch));
        }
        model.meta.val_history.push_back(val_loss);
        model.meta.epochs_run = epoch;
        if (val_loss < best_val) {
            best_val = val_loss;
            best_epoch = epoch;
            since_best = 0;
            snapshot_params(model, best_w, best_b);
        } else if (++since_best >= cfg.patience) {
            break;
        }
    }

    model.weights = std::move(best_w);
    model.biases = std::move(best_b);
    model.meta.best_epoch = best_epoch;
    model.meta.best_val_loss = best_val;
    model.meta.dataset_fingerprint = fingerprint(data);
    return model;
}

GradCheckReport gradient_check(const Mlp& model, std::span<const EncodedPoint> batch, double h,
                               double tol) {
    if (!(h > 0.0)) throw TrainingError("gradient_check step h must be positive");
    const BackwardResult analytic = backward(model, batch);
    Mlp probe = model;

    GradCheckReport report;
    report.h = h;
    report.tol = tol;
    report.n_parameters = model.n_parameters();

    // Relative discrepancy |analytic - numeric| / max(|analytic| + |numeric|, 1e-8),
    // the usual symmetric metric; exact zeros on both sides contribute zero.
    auto update = [&](double a, double num) {
        const double denom = std::max(std::abs(a) + std::abs(num), 1e-8);
        report.max_rel_error = std::max(report.max_rel_error, std::abs(a - num) / denom);
    };
    auto probe_param = [&](double& slot, double analytic_grad) {
        const double saved = slot;
        slot = saved + h;
        const double up = batch_loss(probe, batch);
        slot = saved - h;
        const double down = batch_loss(probe, batch);
        slot = saved;
        update(analytic_grad, (up - down) / (2.0 * h));
    };
    for (std::size_t l = 0; l < probe.weights.size(); ++l) {
        for (Eigen::Index r = 0; r < probe.weights[l].rows(); ++r) {
            for (Eigen::Index c = 0; c < probe.weights[l].cols(); ++c) {
                probe_param(probe.weights[l](r, c), analytic.grads.weights[l](r, c));
            }
        }
        for (Eigen::Index r = 0; r < probe.biases[l].size(); ++r) {
            probe_param(probe.biases[l](r), analytic.grads.biases[l](r));
        }
    }
    report.pass = report.max_rel_error <= tol;
    return report;
}

void save_model(const Mlp& model, const std::string& path) {
    write_file_atomic(path, detail::model_to_json(model).dump());
}

Mlp load_model(const std::string& path) {
    const std::string text = read_file(path);
    ordered_json j;
    try {
        j = ordered_json::parse(text);
    } catch (const ordered_json::parse_error& e) {
        throw SerializationError("Corrupted: JSON parse error at byte " + std::to_string(e.byte) +
                                 " in '" + path + "'");
    }
    try {
        return detail::model_from_json(j);
    } catch (const SerializationError& e) {
        throw SerializationError(std::string(e.what()) + " in '" + path + "'");
    }
}

std::string model_to_json_string(const Mlp& model) { return detail::model_to_json(model).dump(); }

Mlp model_from_json_string(const std::string& doc) {
    ordered_json j;
    try {
        j = ordered_json::parse(doc);
    } catch (const ordered_json::parse_error& e) {
        throw SerializationError("Corrupted: JSON parse error at byte " + std::to_string(e.byte));
    }
    return detail::model_from_json(j);
}

}  // namespace flamekit
