#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "flamekit/dataset.hpp"

namespace flamekit {

/// Activation placement. HiddenRelu (the default) applies ReLU on every
/// hidden layer and leaves the output affine, so negative source terms
/// are representable. PaperLiteral keeps hidden layers affine and applies
/// ReLU on the output layer instead; it exists for comparison runs only.
enum class Activation { HiddenRelu, PaperLiteral };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

/// Per-feature z-scoring statistics, fitted on training data only.
struct NormStats {
    Eigen::VectorXd input_mean, input_std;
    Eigen::VectorXd target_mean, target_std;

    static NormStats identity(int input_dim, int output_dim);
    void validate(int input_dim, int output_dim) const;
};

struct TrainConfig {
    std::vector<int> hidden_dims = {64, 128, 64};
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    int batch_size = 256;
    int max_epochs = 400;
    int patience = 25;             // epochs without validation improvement
    double val_fraction = 0.1;
    Activation activation = Activation::HiddenRelu;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Per-layer gradient arrays mirroring an Mlp's parameter shapes.
struct Gradients {
    std::vector<Eigen::MatrixXd> weights;
    std::vector<Eigen::VectorXd> biases;
};

/// Adam first/second moment buffers plus the step counter.
struct AdamState {
    std::vector<Eigen::MatrixXd> m_weights, v_weights;
    std::vector<Eigen::VectorXd> m_biases, v_biases;
    long step = 0;

    static AdamState zeros_like(const struct Mlp& model);
};

struct TrainMeta {
    int epochs_run = 0;
    int best_epoch = 0;  // 1-based; 0 when never trained
    double best_val_loss = std::numeric_limits<double>::quiet_NaN();
    std::vector<double> val_history;  // one entry per epoch run
    std::string dataset_fingerprint;
};

/// Feed-forward regressor: dense layers W[l] (dims[l+1] x dims[l]) with
/// bias vectors, plus the normalization statistics baked in at fit time.
struct Mlp {
    std::vector<int> layer_dims;  // input, hidden..., output
    std::vector<Eigen::MatrixXd> weights;
    std::vector<Eigen::VectorXd> biases;
    Activation activation = Activation::HiddenRelu;
    NormStats norm;
    TrainConfig config;  // echo of the fitting configuration
    std::uint64_t seed = 0;
    TrainMeta meta;

    int input_dim() const { return layer_dims.front(); }
    int output_dim() const { return layer_dims.back(); }
    std::size_t n_layers() const { return weights.size(); }
    std::size_t n_parameters() const;
    void validate() const;
};

/// Fresh model with He-uniform weights (|w| <= sqrt(6/fan_in)), zero
/// biases, identity normalization. Bit-reproducible for a given seed.
Mlp make_mlp(const std::vector<int>& layer_dims, Activation activation, std::uint64_t seed);

/// Fits z-scoring statistics; standard deviations are floored at 1e-12.
NormStats fit_norm_stats(std::span<const EncodedPoint> points);

/// Denormalized prediction for one input of length input_dim().
std::vector<double> forward(const Mlp& model, std::span<const double> input);

/// Denormalized predictions for inputs packed one per column.
Eigen::MatrixXd forward_batch(const Mlp& model, const Eigen::MatrixXd& inputs);

/// Mean of component-wise squared error. Callers pass normalized vectors
/// when they want the training objective.
double loss_mse(std::span<const double> pred, std::span<const double> target);

struct BackwardResult {
    double loss = 0.0;
    Gradients grads;
};

/// Mean normalized MSE over the batch and its exact analytic gradients.
BackwardResult backward(const Mlp& model, std::span<const EncodedPoint> batch);

/// Batch loss alone, matching backward()'s objective exactly.
double batch_loss(const Mlp& model, std::span<const EncodedPoint> batch);

/// Standard bias-corrected Adam update, applied in place. `t` is the
/// 1-based step count and must equal state.step + 1.
void adam_step(Mlp& model, const Gradients& grads, AdamState& state, long t,
               double learning_rate, double beta1, double beta2, double epsilon);

/// Trains one regressor: fits NormStats on the training portion only,
/// holds out cfg.val_fraction for early stopping, restores the
/// best-validation weights. Deterministic in cfg.seed.
Mlp train_single(std::span<const EncodedPoint> data, const TrainConfig& cfg);

struct GradCheckReport {
    double max_rel_error = 0.0;
    double h = 0.0;
    double tol = 0.0;
    bool pass = false;
    std::size_t n_parameters = 0;
};

/// Central-difference check of backward() over every parameter.
GradCheckReport gradient_check(const Mlp& model, std::span<const EncodedPoint> batch,
                               double h, double tol);

/// Versioned JSON model file. Round trips are bit-exact.
void save_model(const Mlp& model, const std::string& path);
Mlp load_model(const std::string& path);

/// In-memory JSON document form, used by the ensemble container format.
std::string model_to_json_string(const Mlp& model);
Mlp model_from_json_string(const std::string& doc);

}  // namespace flamekit
