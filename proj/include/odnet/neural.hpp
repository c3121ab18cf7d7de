#pragma once

// Single-hidden-layer ReLU network mapping sensor flows to the free-entry
// OD vector. Dropout (inverted) follows the hidden layer; the output layer
// is also ReLU so predictions are never negative. Trained with Adam on
// MSE + lambda * sum|W|.

#include "odnet/kernels.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace odnet {

struct NnModel {
    Matrix w1;                // hidden x inputs
    std::vector<double> b1;   // hidden
    Matrix w2;                // outputs x hidden
    std::vector<double> b2;   // outputs
    double dropout = 0.2;     // drop probability
    double l1 = 0.02;
    std::uint64_t seed = 0;
    // Per-input affine normalization x' = (x - offset) * scale. Identity unless
    // TrainConfig::normalize_inputs was set.
    std::vector<double> input_offset;
    std::vector<double> input_scale;
    // Bumped by every parameter update; forward caches record it.
    std::uint64_t version = 0;

    std::size_t inputs() const { return w1.cols; }
    std::size_t hidden() const { return w1.rows; }
    std::size_t outputs() const { return w2.rows; }
    void validate() const;  // shapes consistent and parameters finite
    double weight_l1() const;
};

struct NnGradients {
    Matrix w1;
    std::vector<double> b1;
    Matrix w2;
    std::vector<double> b2;

    static NnGradients zeros_like(const NnModel& m);
};

struct TrainConfig {
    int hidden = 80;
    double dropout = 0.2;
    double l1 = 0.02;
    double learning_rate = 0.001;
    int epochs = 50;
    int batch_size = 96;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 1;
    bool normalize_inputs = true;
    // Start the output bias at the training-target mean.
    bool init_output_bias = true;
    Exec exec = Exec::serial;

    void validate() const;
};

struct Dataset {
    Matrix inputs;   // K x S sensor flows
    Matrix targets;  // K x M OD vectors
    std::vector<int> hours;
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;

    std::size_t size() const { return inputs.rows; }
    void validate() const;
};

enum class Mode { train, infer };

struct ForwardCache {
    Matrix x;       // normalized batch input
    Matrix z1;      // hidden preactivation
    Matrix mask;    // dropout multipliers (0 or 1/(1-p)); empty in infer mode
    Matrix h;       // hidden activation after dropout
    Matrix z2;      // output preactivation
    Matrix out;     // ReLU(z2)
    std::uint64_t model_version = 0;
    std::size_t hidden = 0, outputs = 0;
};

NnModel init_model(std::size_t inputs, std::size_t outputs, const TrainConfig& cfg);

// Batch forward pass (rows of x are samples). rng is required in train mode
// when dropout > 0.
ForwardCache forward(const NnModel& model, const Matrix& x, Mode mode, std::mt19937_64* rng = nullptr,
                     Exec exec = Exec::serial);

std::vector<double> predict(const NnModel& model, std::span<const double> x);

// Mean over samples and elements of the squared error, plus l1 * sum|W|.
double loss(const NnModel& model, const Matrix& targets, const Matrix& predictions);
double mse(const Matrix& targets, const Matrix& predictions);

// Gradients of loss() w.r.t. every parameter. sign(0) = 0 for the L1 term.
NnGradients backward(const NnModel& model, const ForwardCache& cache, const Matrix& targets, Exec exec = Exec::serial);

struct AdamState {
    NnGradients m;
    NnGradients v;
    long step = 0;

    static AdamState for_model(const NnModel& model);
};

// Advances state.step and updates the model in place. Throws DomainError on
// non-finite gradients.
void adam_step(NnModel& model, const NnGradients& grads, AdamState& state, const TrainConfig& cfg);

struct TrainResult {
    NnModel model;
    std::vector<double> loss_trace;  // mean training objective per epoch
};

TrainResult train(const Dataset& data, const TrainConfig& cfg);

struct NnMetrics {
    double mse = 0.0;
    double rmse = 0.0;
    std::optional<double> rrmse;  // percent; empty when the target mean is 0
    std::string note;
};

NnMetrics evaluate_nn(const NnModel& model, const Dataset& data, std::span<const std::size_t> rows);
NnMetrics prediction_metrics(const Matrix& targets, const Matrix& predictions);

// Checkpoint: JSON with shapes, hyperparameters, seed and row-major arrays.
void save_model(const NnModel& model, const std::filesystem::path& path);
std::string dump_model(const NnModel& model);
NnModel parse_model(const std::string& text, std::optional<std::size_t> expected_outputs = std::nullopt);
NnModel load_model(const std::filesystem::path& path, std::optional<std::size_t> expected_outputs = std::nullopt);

}  // namespace odnet
