#include "fsodl/neural.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>

namespace fsodl {

Activation activation_from_string(std::string_view name) {
    if (name == "relu") return Activation::relu;
    if (name == "tanh") return Activation::tanh;
    if (name == "sigmoid") return Activation::sigmoid;
    throw std::invalid_argument("unknown activation '" + std::string(name) + "'");
}

std::string to_string(Activation a) {
    switch (a) {
        case Activation::relu: return "relu";
        case Activation::tanh: return "tanh";
        case Activation::sigmoid: return "sigmoid";
    }
    return "relu";
}

std::vector<int> NetworkSpec::layer_sizes() const {
    std::vector<int> sizes;
    sizes.push_back(input_dim);
    for (int i = 0; i < hidden_layers; ++i) sizes.push_back(neurons_per_layer);
    sizes.push_back(output_dim);
    return sizes;
}

void NetworkSpec::validate() const {
    if (input_dim < 1 || output_dim < 1)
        throw std::invalid_argument("NetworkSpec: dims must be >= 1");
    if (hidden_layers < 0 || (hidden_layers > 0 && neurons_per_layer < 1))
        throw std::invalid_argument("NetworkSpec: bad hidden layout");
    if (output_head == OutputHead::linear_pair && output_dim != 2)
        throw std::invalid_argument("NetworkSpec: linear_pair head requires output_dim == 2");
}

std::size_t MlpNetwork::parameter_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights.size(); ++l)
        n += weights[l].data.size() + biases[l].size();
    return n;
}

ParamGradients MlpNetwork::zero_gradients() const {
    ParamGradients g;
    g.weights.reserve(weights.size());
    g.biases.reserve(biases.size());
    for (std::size_t l = 0; l < weights.size(); ++l) {
        g.weights.emplace_back(weights[l].rows, weights[l].cols, 0.0);
        g.biases.emplace_back(biases[l].size(), 0.0);
    }
    return g;
}

namespace {

// out = a * w + bias (rows of `a` are samples)
void linear_forward(const Matrix& a, const Matrix& w, const std::vector<double>& bias, Matrix& out) {
    out.resize(a.rows, w.cols);
    const std::size_t inner = a.cols;
    const std::size_t cols = w.cols;
#pragma omp parallel for schedule(static) if (a.rows * inner * cols > 200000)
    for (std::ptrdiff_t r = 0; r < static_cast<std::ptrdiff_t>(a.rows); ++r) {
        double* out_row = out.row(r);
        const double* a_row = a.row(r);
        for (std::size_t c = 0; c < cols; ++c) out_row[c] = bias[c];
        for (std::size_t i = 0; i < inner; ++i) {
            const double av = a_row[i];
            if (av == 0.0) continue;
            const double* w_row = w.row(i);
            for (std::size_t c = 0; c < cols; ++c) out_row[c] += av * w_row[c];
        }
    }
}

// dw = a^T * g
void weight_gradient(const Matrix& a, const Matrix& g, Matrix& dw) {
    dw.resize(a.cols, g.cols);
    std::fill(dw.data.begin(), dw.data.end(), 0.0);
    for (std::size_t k = 0; k < a.rows; ++k) {
        const double* a_row = a.row(k);
        const double* g_row = g.row(k);
        for (std::size_t i = 0; i < a.cols; ++i) {
            const double av = a_row[i];
            if (av == 0.0) continue;
            double* dw_row = dw.row(i);
            for (std::size_t c = 0; c < g.cols; ++c) dw_row[c] += av * g_row[c];
        }
    }
}

void bias_gradient(const Matrix& g, std::vector<double>& db) {
    db.assign(g.cols, 0.0);
    for (std::size_t k = 0; k < g.rows; ++k) {
        const double* g_row = g.row(k);
        for (std::size_t c = 0; c < g.cols; ++c) db[c] += g_row[c];
    }
}

// da = g * w^T
void input_gradient(const Matrix& g, const Matrix& w, Matrix& da) {
    da.resize(g.rows, w.rows);
#pragma omp parallel for schedule(static) if (g.rows * g.cols * w.rows > 200000)
    for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(g.rows); ++k) {
        const double* g_row = g.row(k);
        double* da_row = da.row(k);
        for (std::size_t i = 0; i < w.rows; ++i) {
            const double* w_row = w.row(i);
            double acc = 0.0;
            for (std::size_t c = 0; c < g.cols; ++c) acc += g_row[c] * w_row[c];
            da_row[i] = acc;
        }
    }
}

double activate(Activation a, double z) {
    switch (a) {
        case Activation::relu: return z > 0.0 ? z : 0.0;
        case Activation::tanh: return std::tanh(z);
        case Activation::sigmoid: return 1.0 / (1.0 + std::exp(-z));
    }
    return z;
}

// derivative at the pre-activation; relu takes subgradient 0 at exactly 0
double activate_derivative(Activation a, double z) {
    switch (a) {
        case Activation::relu: return z > 0.0 ? 1.0 : 0.0;
        case Activation::tanh: {
            const double t = std::tanh(z);
            return 1.0 - t * t;
        }
        case Activation::sigmoid: {
            const double s = 1.0 / (1.0 + std::exp(-z));
            return s * (1.0 - s);
        }
    }
    return 1.0;
}

void softmax_rows(const Matrix& logits, Matrix& probs) {
    probs.resize(logits.rows, logits.cols);
    for (std::size_t k = 0; k < logits.rows; ++k) {
        const double* in = logits.row(k);
        double* out = probs.row(k);
        double max_v = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < logits.cols; ++c) max_v = std::max(max_v, in[c]);
        double sum = 0.0;
        for (std::size_t c = 0; c < logits.cols; ++c) {
            out[c] = std::exp(in[c] - max_v);
            sum += out[c];
        }
        for (std::size_t c = 0; c < logits.cols; ++c) out[c] /= sum;
    }
}

} // namespace

MlpNetwork init_network(const NetworkSpec& spec, Rng& rng) {
    spec.validate();
    MlpNetwork net;
    net.spec = spec;
    const auto sizes = spec.layer_sizes();
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
        const int fan_in = sizes[l];
        const int fan_out = sizes[l + 1];
        const double limit = std::sqrt(6.0 / (fan_in + fan_out));
        Matrix w(fan_in, fan_out);
        for (auto& v : w.data) v = rng.uniform_pm1() * limit;
        net.weights.push_back(std::move(w));
        net.biases.emplace_back(fan_out, 0.0);
    }
    return net;
}

const Matrix& forward(const MlpNetwork& net, const Matrix& input, ForwardCache& cache) {
    if (input.cols != static_cast<std::size_t>(net.spec.input_dim))
        throw std::invalid_argument("forward: input width does not match spec.input_dim");
    const std::size_t layers = net.weights.size();
    cache.net = &net;
    cache.batch = input.rows;
    cache.layer_inputs.resize(layers);
    cache.pre_activations.resize(layers);

    cache.layer_inputs[0] = input;
    for (std::size_t l = 0; l < layers; ++l) {
        linear_forward(cache.layer_inputs[l], net.weights[l], net.biases[l],
                       cache.pre_activations[l]);
        if (l + 1 < layers) {
            Matrix& next = cache.layer_inputs[l + 1];
            const Matrix& z = cache.pre_activations[l];
            next.resize(z.rows, z.cols);
            for (std::size_t i = 0; i < z.data.size(); ++i)
                next.data[i] = activate(net.spec.activation, z.data[i]);
        }
    }

    const Matrix& logits = cache.pre_activations[layers - 1];
    if (net.spec.output_head == OutputHead::softmax) {
        softmax_rows(logits, cache.output);
    } else {
        cache.output = logits;
    }
    return cache.output;
}

Matrix forward(const MlpNetwork& net, const Matrix& input) {
    ForwardCache cache;
    forward(net, input, cache);
    return std::move(cache.output);
}

std::pair<double, Matrix> softmax_cross_entropy(const Matrix& logits, const Matrix& one_hot_targets) {
    if (logits.rows != one_hot_targets.rows || logits.cols != one_hot_targets.cols)
        throw std::invalid_argument("softmax_cross_entropy: shape mismatch");
    std::vector<int> labels(logits.rows);
    for (std::size_t k = 0; k < logits.rows; ++k) {
        const double* t = one_hot_targets.row(k);
        int hit = -1;
        for (std::size_t c = 0; c < logits.cols; ++c) {
            if (t[c] == 1.0 && hit < 0) {
                hit = static_cast<int>(c);
            } else if (t[c] != 0.0) {
                hit = -2;
                break;
            }
        }
        if (hit < 0) throw std::invalid_argument("softmax_cross_entropy: target row is not one-hot");
        labels[k] = hit;
    }
    return softmax_cross_entropy(logits, std::span<const int>(labels));
}

std::pair<double, Matrix> softmax_cross_entropy(const Matrix& logits, std::span<const int> labels) {
    if (labels.size() != logits.rows)
        throw std::invalid_argument("softmax_cross_entropy: batch size mismatch");
    const std::size_t k_count = logits.rows;
    const std::size_t m = logits.cols;
    Matrix grad(k_count, m);
    double loss = 0.0;
    const double inv_k = 1.0 / static_cast<double>(k_count);
    for (std::size_t k = 0; k < k_count; ++k) {
        const int label = labels[k];
        if (label < 0 || static_cast<std::size_t>(label) >= m)
            throw std::out_of_range("softmax_cross_entropy: label out of range");
        const double* in = logits.row(k);
        double* g = grad.row(k);
        double max_v = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < m; ++c) max_v = std::max(max_v, in[c]);
        double sum = 0.0;
        for (std::size_t c = 0; c < m; ++c) {
            g[c] = std::exp(in[c] - max_v);
            sum += g[c];
        }
        // loss_k = logsumexp(logits) - logit_label
        loss += (std::log(sum) + max_v - in[label]) * inv_k;
        const double inv_sum = 1.0 / sum;
        for (std::size_t c = 0; c < m; ++c) g[c] *= inv_sum * inv_k;
        g[label] -= inv_k;
    }
    return {loss, std::move(grad)};
}

void backward(const MlpNetwork& net, const ForwardCache& cache, const Matrix& upstream,
              ParamGradients& grads, Matrix* input_grad) {
    if (cache.net != &net || cache.layer_inputs.size() != net.weights.size())
        throw std::logic_error("backward: cache does not match this network");
    if (upstream.rows != cache.batch ||
        upstream.cols != static_cast<std::size_t>(net.spec.output_dim))
        throw std::invalid_argument("backward: upstream gradient shape mismatch");

    const std::size_t layers = net.weights.size();
    grads.weights.resize(layers);
    grads.biases.resize(layers);

    // dL/dlogits; a softmax head folds its jacobian into the upstream gradient
    Matrix g;
    if (net.spec.output_head == OutputHead::softmax) {
        const Matrix& p = cache.output;
        g.resize(upstream.rows, upstream.cols);
        for (std::size_t k = 0; k < upstream.rows; ++k) {
            const double* gu = upstream.row(k);
            const double* pr = p.row(k);
            double dot = 0.0;
            for (std::size_t c = 0; c < upstream.cols; ++c) dot += gu[c] * pr[c];
            double* gr = g.row(k);
            for (std::size_t c = 0; c < upstream.cols; ++c) gr[c] = pr[c] * (gu[c] - dot);
        }
    } else {
        g = upstream;
    }

    Matrix g_prev;
    for (std::size_t l = layers; l-- > 0;) {
        weight_gradient(cache.layer_inputs[l], g, grads.weights[l]);
        bias_gradient(g, grads.biases[l]);
        const bool need_input = l > 0 || input_grad != nullptr;
        if (!need_input) break;
        input_gradient(g, net.weights[l], g_prev);
        if (l > 0) {
            const Matrix& z = cache.pre_activations[l - 1];
            for (std::size_t i = 0; i < g_prev.data.size(); ++i)
                g_prev.data[i] *= activate_derivative(net.spec.activation, z.data[i]);
        }
        std::swap(g, g_prev);
    }
    if (input_grad != nullptr) *input_grad = std::move(g);
}

ParamGradients backward(const MlpNetwork& net, const ForwardCache& cache, const Matrix& upstream) {
    ParamGradients grads;
    backward(net, cache, upstream, grads, nullptr);
    return grads;
}

OptimizerState OptimizerState::sgd(double learning_rate) {
    OptimizerState s;
    s.kind = Kind::sgd;
    s.learning_rate = learning_rate;
    return s;
}

OptimizerState OptimizerState::adam(double learning_rate, double beta1, double beta2,
                                    double epsilon) {
    OptimizerState s;
    s.kind = Kind::adam;
    s.learning_rate = learning_rate;
    s.beta1 = beta1;
    s.beta2 = beta2;
    s.epsilon = epsilon;
    return s;
}

namespace {

void check_shapes(const MlpNetwork& net, const ParamGradients& grads) {
    if (grads.weights.size() != net.weights.size() || grads.biases.size() != net.biases.size())
        throw std::invalid_argument("optimizer: gradient layout does not match network");
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
        if (grads.weights[l].rows != net.weights[l].rows ||
            grads.weights[l].cols != net.weights[l].cols ||
            grads.biases[l].size() != net.biases[l].size())
            throw std::invalid_argument("optimizer: gradient shape mismatch");
    }
}

} // namespace

void sgd_step(MlpNetwork& net, const ParamGradients& grads, OptimizerState& state) {
    if (state.kind != OptimizerState::Kind::sgd)
        throw std::logic_error("sgd_step: optimizer state is not sgd");
    check_shapes(net, grads);
    const double eta = state.learning_rate;
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
        for (std::size_t i = 0; i < net.weights[l].data.size(); ++i)
            net.weights[l].data[i] -= eta * grads.weights[l].data[i];
        for (std::size_t i = 0; i < net.biases[l].size(); ++i)
            net.biases[l][i] -= eta * grads.biases[l][i];
    }
    ++state.step_count;
}

void adam_step(MlpNetwork& net, const ParamGradients& grads, OptimizerState& state) {
    if (state.kind != OptimizerState::Kind::adam)
        throw std::logic_error("adam_step: optimizer state is not adam");
    check_shapes(net, grads);
    if (state.first_moment.weights.empty()) {
        state.first_moment = net.zero_gradients();
        state.second_moment = net.zero_gradients();
    }
    ++state.step_count;
    const double t = static_cast<double>(state.step_count);
    const double c1 = 1.0 - std::pow(state.beta1, t);
    const double c2 = 1.0 - std::pow(state.beta2, t);
    const double eta = state.learning_rate;

    auto update = [&](double& theta, double& m, double& v, double g) {
        m = state.beta1 * m + (1.0 - state.beta1) * g;
        v = state.beta2 * v + (1.0 - state.beta2) * g * g;
        theta -= eta * (m / c1) / (std::sqrt(v / c2) + state.epsilon);
    };
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
        auto& mw = state.first_moment.weights[l].data;
        auto& vw = state.second_moment.weights[l].data;
        auto& w = net.weights[l].data;
        for (std::size_t i = 0; i < w.size(); ++i)
            update(w[i], mw[i], vw[i], grads.weights[l].data[i]);
        auto& mb = state.first_moment.biases[l];
        auto& vb = state.second_moment.biases[l];
        auto& b = net.biases[l];
        for (std::size_t i = 0; i < b.size(); ++i) update(b[i], mb[i], vb[i], grads.biases[l][i]);
    }
}

void optimizer_step(MlpNetwork& net, const ParamGradients& grads, OptimizerState& state) {
    if (state.kind == OptimizerState::Kind::sgd)
        sgd_step(net, grads, state);
    else
        adam_step(net, grads, state);
}

double gradient_check(MlpNetwork& net, const LossFn& loss, const Matrix& probe_batch, double step) {
    if (!(step > 0.0)) throw std::invalid_argument("gradient_check: step must be positive");
    ForwardCache cache;
    forward(net, probe_batch, cache);
    const auto [base_loss, upstream] = loss(cache.output);
    (void)base_loss;
    ParamGradients analytic;
    backward(net, cache, upstream, analytic, nullptr);

    auto loss_at = [&]() {
        forward(net, probe_batch, cache);
        return loss(cache.output).first;
    };

    double worst = 0.0;
    auto probe_param = [&](double& theta, double g_bp) {
        const double saved = theta;
        theta = saved + step;
        const double lp = loss_at();
        theta = saved - step;
        const double lm = loss_at();
        theta = saved;
        const double g_fd = (lp - lm) / (2.0 * step);
        const double denom = std::max({std::fabs(g_fd), std::fabs(g_bp), 1e-12});
        worst = std::max(worst, std::fabs(g_fd - g_bp) / denom);
    };
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
        for (std::size_t i = 0; i < net.weights[l].data.size(); ++i)
            probe_param(net.weights[l].data[i], analytic.weights[l].data[i]);
        for (std::size_t i = 0; i < net.biases[l].size(); ++i)
            probe_param(net.biases[l][i], analytic.biases[l][i]);
    }
    return worst;
}

namespace {

const char* head_name(OutputHead h) {
    switch (h) {
        case OutputHead::linear: return "linear";
        case OutputHead::softmax: return "softmax";
        case OutputHead::linear_pair: return "linear_pair";
    }
    return "linear";
}

OutputHead head_from_string(const std::string& name) {
    if (name == "linear") return OutputHead::linear;
    if (name == "softmax") return OutputHead::softmax;
    if (name == "linear_pair") return OutputHead::linear_pair;
    throw std::runtime_error("load_network: unknown output head '" + name + "'");
}

} // namespace

void save_network(const MlpNetwork& net, std::ostream& out) {
    out << "fsodl-mlp 1\n";
    out << net.spec.input_dim << ' ' << net.spec.output_dim << ' ' << net.spec.hidden_layers << ' '
        << net.spec.neurons_per_layer << ' ' << to_string(net.spec.activation) << ' '
        << head_name(net.spec.output_head) << '\n';
    out << std::setprecision(17);
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
        const Matrix& w = net.weights[l];
        for (std::size_t r = 0; r < w.rows; ++r) {
            for (std::size_t c = 0; c < w.cols; ++c) out << (c ? " " : "") << w(r, c);
            out << '\n';
        }
        for (std::size_t i = 0; i < net.biases[l].size(); ++i)
            out << (i ? " " : "") << net.biases[l][i];
        out << '\n';
    }
    if (!out) throw std::runtime_error("save_network: write failed");
}

MlpNetwork load_network(std::istream& in) {
    std::string magic;
    int version = 0;
    in >> magic >> version;
    if (!in || magic != "fsodl-mlp" || version != 1)
        throw std::runtime_error("load_network: bad header");
    NetworkSpec spec;
    std::string activation, head;
    in >> spec.input_dim >> spec.output_dim >> spec.hidden_layers >> spec.neurons_per_layer >>
        activation >> head;
    if (!in) throw std::runtime_error("load_network: truncated header");
    spec.activation = activation_from_string(activation);
    spec.output_head = head_from_string(head);
    spec.validate();

    MlpNetwork net;
    net.spec = spec;
    const auto sizes = spec.layer_sizes();
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
        Matrix w(sizes[l], sizes[l + 1]);
        for (auto& v : w.data) in >> v;
        std::vector<double> b(sizes[l + 1]);
        for (auto& v : b) in >> v;
        if (!in) throw std::runtime_error("load_network: truncated parameters");
        net.weights.push_back(std::move(w));
        net.biases.push_back(std::move(b));
    }
    return net;
}

} // namespace fsodl
