#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <span>
#include <utility>
#include <vector>

#include "fsodl/rng.hpp"

namespace fsodl {

enum class Activation { relu, tanh, sigmoid };
enum class OutputHead { linear, softmax, linear_pair };

Activation activation_from_string(std::string_view name);
std::string to_string(Activation a);

/// Dense row-major matrix of doubles; the batch/parameter carrier for the
/// network engine. Rows are samples, columns are features.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double value = 0.0)
        : rows(r), cols(c), data(r * c, value) {}

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
    double* row(std::size_t r) { return data.data() + r * cols; }
    const double* row(std::size_t r) const { return data.data() + r * cols; }

    /// Reshape without preserving contents (storage reused when possible).
    void resize(std::size_t r, std::size_t c) {
        rows = r;
        cols = c;
        data.resize(r * c);
    }
};

/// Feed-forward topology: input_dim -> hidden_layers x neurons_per_layer
/// -> output_dim, with the activation on hidden layers only.
struct NetworkSpec {
    int input_dim = 0;
    int output_dim = 0;
    int hidden_layers = 0;
    int neurons_per_layer = 0;
    Activation activation = Activation::relu;
    OutputHead output_head = OutputHead::linear;

    /// Layer widths [input, hidden..., output].
    std::vector<int> layer_sizes() const;
    void validate() const;
};

/// Per-layer gradient (or moment) storage shaped exactly like the parameters.
struct ParamGradients {
    std::vector<Matrix> weights;
    std::vector<std::vector<double>> biases;
};

/// Dense MLP: weights[l] is (sizes[l] x sizes[l+1]), biases[l] has sizes[l+1].
struct MlpNetwork {
    NetworkSpec spec;
    std::vector<Matrix> weights;
    std::vector<std::vector<double>> biases;

    std::size_t parameter_count() const;
    ParamGradients zero_gradients() const;
};

/// Everything backward() needs from the matching forward() call.
struct ForwardCache {
    std::vector<Matrix> layer_inputs;    // input to each linear layer
    std::vector<Matrix> pre_activations; // one per layer
    Matrix output;                       // head output (logits for linear heads)
    const MlpNetwork* net = nullptr;
    std::size_t batch = 0;
};

/// Glorot-uniform weights (+-sqrt(6 / (fan_in + fan_out))), zero biases.
MlpNetwork init_network(const NetworkSpec& spec, Rng& rng);

/// Batched forward pass; input is (K x input_dim). With a softmax head the
/// returned rows are probabilities summing to 1; otherwise raw logits.
const Matrix& forward(const MlpNetwork& net, const Matrix& input, ForwardCache& cache);
Matrix forward(const MlpNetwork& net, const Matrix& input);

/// Batch-mean softmax cross entropy, fused through log-sum-exp so no log(0)
/// occurs. Returns (loss, dLoss/dlogits) with the 1/K already applied.
std::pair<double, Matrix> softmax_cross_entropy(const Matrix& logits, const Matrix& one_hot_targets);
std::pair<double, Matrix> softmax_cross_entropy(const Matrix& logits, std::span<const int> labels);

/// Reverse-mode gradients for the cached forward pass. `upstream` is
/// dLoss/d(head output). Optionally also yields dLoss/d(input).
/// Throws std::logic_error on a cache that does not match `net`.
void backward(const MlpNetwork& net, const ForwardCache& cache, const Matrix& upstream,
              ParamGradients& grads, Matrix* input_gradient = nullptr);
ParamGradients backward(const MlpNetwork& net, const ForwardCache& cache, const Matrix& upstream);

struct OptimizerState {
    enum class Kind { sgd, adam };

    Kind kind = Kind::adam;
    double learning_rate = 0.005;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    long step_count = 0;
    ParamGradients first_moment;  // adam
    ParamGradients second_moment; // adam

    static OptimizerState sgd(double learning_rate);
    static OptimizerState adam(double learning_rate, double beta1 = 0.9, double beta2 = 0.999,
                               double epsilon = 1e-8);
};

/// theta <- theta - eta * g.
void sgd_step(MlpNetwork& net, const ParamGradients& grads, OptimizerState& state);

/// Bias-corrected Adam update; moment accumulators are allocated on first use.
void adam_step(MlpNetwork& net, const ParamGradients& grads, OptimizerState& state);

/// Dispatch on state.kind.
void optimizer_step(MlpNetwork& net, const ParamGradients& grads, OptimizerState& state);

/// Loss on a head output, plus dLoss/d(output): the probe target for
/// gradient_check and the pipeline training heads.
using LossFn = std::function<std::pair<double, Matrix>(const Matrix& output)>;

/// Central-difference check of backward() over every parameter. Returns
/// max over parameters of |g_fd - g_bp| / max(|g_fd|, |g_bp|, 1e-12).
double gradient_check(MlpNetwork& net, const LossFn& loss, const Matrix& probe_batch, double step);

/// Versioned text serialization: header (dims, activation, head), then
/// row-major weight matrices and bias vectors in layer order. Values are
/// written with 17 significant digits and reload bit-exactly.
void save_network(const MlpNetwork& net, std::ostream& out);
MlpNetwork load_network(std::istream& in);

} // namespace fsodl
