#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <span>
#include <sstream>
#include <vector>

#include "fsodl/neural.hpp"

using namespace fsodl;

namespace {

NetworkSpec make_spec(int in, int out, int hidden, int neurons, Activation act = Activation::relu,
                      OutputHead head = OutputHead::linear) {
    NetworkSpec s;
    s.input_dim = in;
    s.output_dim = out;
    s.hidden_layers = hidden;
    s.neurons_per_layer = neurons;
    s.activation = act;
    s.output_head = head;
    return s;
}

Matrix random_batch(Rng& rng, std::size_t rows, std::size_t cols, double scale = 1.0) {
    Matrix m(rows, cols);
    for (auto& v : m.data) v = scale * rng.uniform_pm1();
    return m;
}

LossFn cross_entropy_loss(std::vector<int> labels) {
    return [labels = std::move(labels)](const Matrix& out) {
        return softmax_cross_entropy(out, std::span<const int>(labels));
    };
}

LossFn quadratic_loss(Matrix targets) {
    return [targets = std::move(targets)](const Matrix& out) {
        Matrix grad(out.rows, out.cols);
        double loss = 0.0;
        const double inv_k = 1.0 / static_cast<double>(out.rows);
        for (std::size_t i = 0; i < out.data.size(); ++i) {
            const double d = out.data[i] - targets.data[i];
            loss += 0.5 * d * d * inv_k;
            grad.data[i] = d * inv_k;
        }
        return std::pair<double, Matrix>{loss, std::move(grad)};
    };
}

} // namespace

TEST_CASE("init: deterministic, zero biases, centered weights") {
    const auto spec = make_spec(2, 16, 4, 40);
    Rng r1(101), r2(101);
    const auto n1 = init_network(spec, r1);
    const auto n2 = init_network(spec, r2);
    REQUIRE(n1.weights.size() == 5);
    for (std::size_t l = 0; l < n1.weights.size(); ++l) {
        CHECK(n1.weights[l].data == n2.weights[l].data);
        for (double b : n1.biases[l]) CHECK(b == 0.0);
    }
    // 40x40 layer: sample mean of uniform(+-limit) within 3 standard errors
    const Matrix& w = n1.weights[1];
    REQUIRE(w.rows == 40);
    REQUIRE(w.cols == 40);
    const double limit = std::sqrt(6.0 / 80.0);
    double mean = 0.0;
    for (double v : w.data) {
        CHECK(std::fabs(v) <= limit);
        mean += v;
    }
    mean /= static_cast<double>(w.data.size());
    const double se = limit / std::sqrt(3.0 * w.data.size());
    CHECK(std::fabs(mean) < 3.0 * se);
    CHECK(n1.parameter_count() == 2 * 40 + 40 + 3 * (40 * 40 + 40) + 40 * 16 + 16);
}

TEST_CASE("forward: zero parameters give zero logits and a uniform softmax") {
    auto spec = make_spec(2, 8, 2, 5);
    Rng rng(1);
    auto net = init_network(spec, rng);
    for (auto& w : net.weights) std::fill(w.data.begin(), w.data.end(), 0.0);
    const Matrix out = forward(net, random_batch(rng, 3, 2));
    for (double v : out.data) CHECK(v == 0.0);

    net.spec.output_head = OutputHead::softmax;
    const Matrix probs = forward(net, random_batch(rng, 3, 2));
    for (double v : probs.data) CHECK(v == doctest::Approx(0.125).epsilon(1e-12));
}

TEST_CASE("forward: hand-computed single relu neuron") {
    auto spec = make_spec(2, 1, 1, 1);
    Rng rng(1);
    auto net = init_network(spec, rng);
    net.weights[0](0, 0) = 0.5;
    net.weights[0](1, 0) = -0.25;
    net.biases[0][0] = 0.1;
    net.weights[1](0, 0) = 2.0;
    net.biases[1][0] = -0.3;

    Matrix in(2, 2);
    in(0, 0) = 1.0;
    in(0, 1) = -1.0; // z = 0.85, out = 2*0.85 - 0.3 = 1.4
    in(1, 0) = -1.0;
    in(1, 1) = 1.0; // z = -0.65, relu clips, out = -0.3
    const Matrix out = forward(net, in);
    CHECK(out(0, 0) == doctest::Approx(1.4).epsilon(1e-15));
    CHECK(out(1, 0) == doctest::Approx(-0.3).epsilon(1e-15));
}

TEST_CASE("forward: batch rows are preserved in order") {
    Rng rng(33);
    const auto net = init_network(make_spec(2, 3, 2, 7), rng);
    const Matrix batch = random_batch(rng, 9, 2);
    const Matrix all = forward(net, batch);
    REQUIRE(all.rows == 9);
    for (std::size_t r = 0; r < batch.rows; ++r) {
        Matrix single(1, 2);
        single(0, 0) = batch(r, 0);
        single(0, 1) = batch(r, 1);
        const Matrix one = forward(net, single);
        for (std::size_t c = 0; c < 3; ++c) CHECK(one(0, c) == all(r, c));
    }
}

TEST_CASE("forward rejects a shape mismatch") {
    Rng rng(2);
    const auto net = init_network(make_spec(4, 2, 1, 3), rng);
    Matrix bad(5, 3);
    CHECK_THROWS_AS(forward(net, bad), std::invalid_argument);
}

TEST_CASE("softmax cross entropy values") {
    SUBCASE("an effectively one-hot prediction has zero loss") {
        Matrix logits(1, 4, 0.0);
        logits(0, 2) = 60.0;
        const auto [loss, grad] = softmax_cross_entropy(logits, std::vector<int>{2});
        CHECK(loss == 0.0);
        (void)grad;
    }
    SUBCASE("target e_2 with probabilities (.1,.2,.6,.1)") {
        Matrix logits(1, 4);
        logits(0, 0) = std::log(0.1);
        logits(0, 1) = std::log(0.2);
        logits(0, 2) = std::log(0.6);
        logits(0, 3) = std::log(0.1);
        const auto [loss, grad] = softmax_cross_entropy(logits, std::vector<int>{2});
        CHECK(loss == doctest::Approx(0.510825623766).epsilon(1e-12));
        // gradient is (softmax - onehot) / K
        CHECK(grad(0, 0) == doctest::Approx(0.1).epsilon(1e-12));
        CHECK(grad(0, 2) == doctest::Approx(-0.4).epsilon(1e-12));
    }
    SUBCASE("uniform over 16 costs ln 16") {
        Matrix logits(2, 16, 0.0);
        const auto [loss, grad] = softmax_cross_entropy(logits, std::vector<int>{3, 9});
        CHECK(loss == doctest::Approx(2.77258872224).epsilon(1e-12));
        (void)grad;
    }
    SUBCASE("one-hot matrix targets agree with label targets") {
        Rng rng(4);
        Matrix logits = random_batch(rng, 6, 5, 2.0);
        Matrix onehot(6, 5, 0.0);
        std::vector<int> labels;
        for (int k = 0; k < 6; ++k) {
            const int lab = static_cast<int>(rng.uniform_below(5));
            labels.push_back(lab);
            onehot(k, lab) = 1.0;
        }
        const auto a = softmax_cross_entropy(logits, onehot);
        const auto b = softmax_cross_entropy(logits, std::span<const int>(labels));
        CHECK(a.first == b.first);
        CHECK(a.second.data == b.second.data);
    }
    SUBCASE("malformed one-hot rows are rejected") {
        Matrix logits(1, 3, 0.0);
        Matrix bad(1, 3, 0.0);
        CHECK_THROWS_AS(softmax_cross_entropy(logits, bad), std::invalid_argument);
        bad(0, 0) = 1.0;
        bad(0, 1) = 1.0;
        CHECK_THROWS_AS(softmax_cross_entropy(logits, bad), std::invalid_argument);
    }
    SUBCASE("batch loss equals the mean of per-sample losses") {
        Rng rng(15);
        Matrix logits = random_batch(rng, 8, 6, 3.0);
        std::vector<int> labels;
        for (int k = 0; k < 8; ++k) labels.push_back(static_cast<int>(rng.uniform_below(6)));
        const auto whole = softmax_cross_entropy(logits, std::span<const int>(labels));
        double mean = 0.0;
        for (int k = 0; k < 8; ++k) {
            Matrix row(1, 6);
            for (int c = 0; c < 6; ++c) row(0, c) = logits(k, c);
            mean += softmax_cross_entropy(row, std::vector<int>{labels[k]}).first / 8.0;
        }
        CHECK(std::fabs(whole.first - mean) < 1e-12);
    }
    SUBCASE("loss is non-negative") {
        Rng rng(16);
        for (int t = 0; t < 200; ++t) {
            Matrix logits = random_batch(rng, 3, 4, 5.0);
            std::vector<int> labels{static_cast<int>(rng.uniform_below(4)),
                                    static_cast<int>(rng.uniform_below(4)),
                                    static_cast<int>(rng.uniform_below(4))};
            CHECK(softmax_cross_entropy(logits, std::span<const int>(labels)).first >= 0.0);
        }
    }
}

TEST_CASE("backward: zero upstream gradient zeroes every parameter gradient") {
    Rng rng(21);
    const auto net = init_network(make_spec(3, 4, 2, 6), rng);
    ForwardCache cache;
    forward(net, random_batch(rng, 5, 3), cache);
    const auto grads = backward(net, cache, Matrix(5, 4, 0.0));
    for (const auto& w : grads.weights)
        for (double v : w.data) CHECK(v == 0.0);
    for (const auto& b : grads.biases)
        for (double v : b) CHECK(v == 0.0);
}

TEST_CASE("backward: duplicated batch rows reproduce the single-row gradient") {
    Rng rng(22);
    const auto net = init_network(make_spec(2, 5, 2, 8), rng);
    Matrix one = random_batch(rng, 1, 2);
    Matrix two(2, 2);
    for (int c = 0; c < 2; ++c) two(0, c) = two(1, c) = one(0, c);

    ForwardCache c1, c2;
    forward(net, one, c1);
    forward(net, two, c2);
    const auto g1 = backward(net, c1, softmax_cross_entropy(c1.output, std::vector<int>{3}).second);
    const auto g2 =
        backward(net, c2, softmax_cross_entropy(c2.output, std::vector<int>{3, 3}).second);
    for (std::size_t l = 0; l < g1.weights.size(); ++l)
        for (std::size_t i = 0; i < g1.weights[l].data.size(); ++i)
            CHECK(g1.weights[l].data[i] == doctest::Approx(g2.weights[l].data[i]).epsilon(1e-12));
}

TEST_CASE("backward rejects a cache from another network") {
    Rng rng(23);
    const auto net1 = init_network(make_spec(2, 2, 1, 3), rng);
    const auto net2 = init_network(make_spec(2, 2, 1, 3), rng);
    ForwardCache cache;
    forward(net1, random_batch(rng, 2, 2), cache);
    CHECK_THROWS_AS(backward(net2, cache, Matrix(2, 2, 0.0)), std::logic_error);
}

TEST_CASE("gradient check against central differences") {
    SUBCASE("tiny relu net with cross entropy") {
        Rng rng(31);
        auto net = init_network(make_spec(2, 4, 1, 3), rng);
        const Matrix probe = random_batch(rng, 8, 2);
        const double err =
            gradient_check(net, cross_entropy_loss({0, 1, 2, 3, 0, 1, 2, 3}), probe, 1e-5);
        CHECK(err < 1e-4);
    }
    SUBCASE("tanh and sigmoid hidden layers") {
        Rng rng(32);
        for (auto act : {Activation::tanh, Activation::sigmoid}) {
            auto net = init_network(make_spec(3, 4, 2, 5, act), rng);
            const Matrix probe = random_batch(rng, 6, 3);
            const double err =
                gradient_check(net, cross_entropy_loss({3, 0, 1, 2, 1, 0}), probe, 1e-5);
            CHECK(err < 1e-4);
        }
    }
    SUBCASE("linear network with quadratic loss is exact to roundoff") {
        Rng rng(33);
        auto net = init_network(make_spec(3, 2, 0, 0), rng);
        const Matrix probe = random_batch(rng, 4, 3);
        const Matrix targets = random_batch(rng, 4, 2);
        const double err = gradient_check(net, quadratic_loss(targets), probe, 1e-5);
        CHECK(err < 1e-7);
    }
    SUBCASE("relu net probed away from kinks") {
        Rng rng(34);
        auto net = init_network(make_spec(2, 6, 3, 10), rng);
        const Matrix probe = random_batch(rng, 8, 2);
        const double err =
            gradient_check(net, cross_entropy_loss({0, 5, 2, 4, 1, 3, 0, 2}), probe, 1e-5);
        CHECK(err < 1e-4);
    }
    SUBCASE("softmax head with a quadratic loss on probabilities") {
        Rng rng(35);
        auto net = init_network(make_spec(2, 4, 1, 5, Activation::tanh, OutputHead::softmax), rng);
        Matrix targets(3, 4, 0.25);
        const Matrix probe = random_batch(rng, 3, 2);
        const double err = gradient_check(net, quadratic_loss(targets), probe, 1e-5);
        CHECK(err < 1e-4);
    }
}

TEST_CASE("softmax head rows sum to one") {
    Rng rng(41);
    const auto net = init_network(make_spec(2, 16, 4, 40, Activation::relu, OutputHead::softmax), rng);
    const Matrix probs = forward(net, random_batch(rng, 32, 2, 3.0));
    for (std::size_t k = 0; k < probs.rows; ++k) {
        double sum = 0.0;
        for (std::size_t c = 0; c < probs.cols; ++c) {
            CHECK(probs(k, c) > 0.0);
            sum += probs(k, c);
        }
        CHECK(std::fabs(sum - 1.0) < 1e-9);
    }
}

TEST_CASE("sgd step") {
    Rng rng(51);
    auto net = init_network(make_spec(1, 1, 0, 0), rng);
    auto state = OptimizerState::sgd(0.1);

    SUBCASE("zero gradient is a fixed point") {
        const auto before = net.weights[0].data;
        sgd_step(net, net.zero_gradients(), state);
        CHECK(net.weights[0].data == before);
    }
    SUBCASE("theta=1, g=0.5, eta=0.1 gives 0.95") {
        net.weights[0](0, 0) = 1.0;
        auto grads = net.zero_gradients();
        grads.weights[0](0, 0) = 0.5;
        sgd_step(net, grads, state);
        CHECK(net.weights[0](0, 0) == doctest::Approx(0.95).epsilon(1e-15));
    }
    SUBCASE("two half steps match one double step for a constant gradient") {
        auto grads = net.zero_gradients();
        grads.weights[0](0, 0) = 0.37;
        auto net2 = net;
        auto half = OptimizerState::sgd(0.05);
        auto full = OptimizerState::sgd(0.1);
        sgd_step(net, grads, half);
        sgd_step(net, grads, half);
        sgd_step(net2, grads, full);
        CHECK(net.weights[0](0, 0) == doctest::Approx(net2.weights[0](0, 0)).epsilon(1e-14));
    }
    SUBCASE("kind mismatch is a usage error") {
        auto adam = OptimizerState::adam(0.1);
        CHECK_THROWS_AS(sgd_step(net, net.zero_gradients(), adam), std::logic_error);
    }
}

TEST_CASE("adam step") {
    Rng rng(52);

    SUBCASE("zero gradient from t=0 leaves parameters and moments at rest") {
        auto net = init_network(make_spec(2, 2, 1, 3), rng);
        const auto before = net.weights[0].data;
        auto state = OptimizerState::adam(0.005);
        adam_step(net, net.zero_gradients(), state);
        CHECK(net.weights[0].data == before);
        for (double v : state.first_moment.weights[0].data) CHECK(v == 0.0);
        for (double v : state.second_moment.weights[0].data) CHECK(v == 0.0);
    }
    SUBCASE("first step moves by about -eta * sign(g)") {
        auto net = init_network(make_spec(1, 1, 0, 0), rng);
        net.weights[0](0, 0) = 0.2;
        auto grads = net.zero_gradients();
        grads.weights[0](0, 0) = 0.5;
        auto state = OptimizerState::adam(0.005);
        adam_step(net, grads, state);
        CHECK(net.weights[0](0, 0) == doctest::Approx(0.2 - 0.005).epsilon(1e-6));
        CHECK(state.step_count == 1);
    }
    SUBCASE("same gradients give identical trajectories") {
        auto n1 = init_network(make_spec(2, 3, 1, 4), rng);
        auto n2 = n1;
        auto s1 = OptimizerState::adam(0.01);
        auto s2 = OptimizerState::adam(0.01);
        Rng g_rng(7);
        for (int it = 0; it < 20; ++it) {
            auto grads = n1.zero_gradients();
            for (auto& w : grads.weights)
                for (auto& v : w.data) v = g_rng.uniform_pm1();
            adam_step(n1, grads, s1);
            adam_step(n2, grads, s2);
        }
        for (std::size_t l = 0; l < n1.weights.size(); ++l)
            CHECK(n1.weights[l].data == n2.weights[l].data);
    }
}

TEST_CASE("parameters stay finite over many optimizer steps") {
    Rng rng(61);
    auto net = init_network(make_spec(2, 4, 2, 6), rng);
    auto state = OptimizerState::adam(0.05);
    ForwardCache cache;
    const Matrix batch = random_batch(rng, 16, 2, 2.0);
    std::vector<int> labels;
    for (int i = 0; i < 16; ++i) labels.push_back(static_cast<int>(rng.uniform_below(4)));
    for (int it = 0; it < 500; ++it) {
        forward(net, batch, cache);
        const auto [loss, g] = softmax_cross_entropy(cache.output, std::span<const int>(labels));
        CHECK(std::isfinite(loss));
        auto grads = backward(net, cache, g);
        adam_step(net, grads, state);
    }
    for (const auto& w : net.weights)
        for (double v : w.data) CHECK(std::isfinite(v));
}

TEST_CASE("serialization round trip is bit exact") {
    Rng rng(71);
    const auto net = init_network(make_spec(3, 5, 2, 7, Activation::tanh, OutputHead::softmax), rng);
    std::stringstream buffer;
    save_network(net, buffer);
    const auto copy = load_network(buffer);
    CHECK(copy.spec.input_dim == 3);
    CHECK(copy.spec.output_head == OutputHead::softmax);
    CHECK(copy.spec.activation == Activation::tanh);
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
        CHECK(copy.weights[l].data == net.weights[l].data);
        CHECK(copy.biases[l] == net.biases[l]);
    }
    std::stringstream bad("fsodl-mlp 99\n");
    CHECK_THROWS_AS(load_network(bad), std::runtime_error);
}
