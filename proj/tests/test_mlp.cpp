#include "onlc/mlp.hpp"

#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

using onlc::nn::BatchView;
using onlc::nn::Mlp;

namespace {

struct Batch {
    std::vector<double> x;
    std::vector<double> t;
    std::vector<double> mask;
    std::size_t rows = 0;

    BatchView view() const { return {x, t, mask, rows}; }
};

Batch random_batch(const Mlp &net, std::size_t rows, std::mt19937_64 &rng, double mask_rate = 0.0) {
    std::normal_distribution<double> z;
    std::bernoulli_distribution drop{mask_rate};
    Batch b;
    b.rows = rows;
    for (std::size_t i = 0; i < rows * net.input_size(); ++i) {
        b.x.push_back(z(rng));
    }
    for (std::size_t i = 0; i < rows * net.output_size(); ++i) {
        b.t.push_back(z(rng));
        b.mask.push_back(drop(rng) ? 0.0 : 1.0);
    }
    return b;
}

// Straightforward re-derivation of the forward pass, one neuron at a time.
std::vector<double> naive_forward(const Mlp &net, std::vector<double> a) {
    const auto &layers = net.layers();
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto &layer = layers[l];
        std::vector<double> next(layer.outputs);
        for (std::size_t o = 0; o < layer.outputs; ++o) {
            double s = layer.bias[o];
            for (std::size_t i = 0; i < layer.inputs; ++i) {
                s += layer.weights[o * layer.inputs + i] * a[i];
            }
            next[o] = l + 1 < layers.size() ? std::tanh(s) : s;
        }
        a = std::move(next);
    }
    return a;
}

} // namespace

TEST_CASE("glorot initialization is deterministic and sized by the widths") {
    const std::vector<std::size_t> widths{9, 32, 32, 16, 3};
    const auto a = Mlp::glorot(widths, 4);
    const auto b = Mlp::glorot(widths, 4);
    const auto c = Mlp::glorot(widths, 5);
    CHECK(a == b);
    CHECK_FALSE(a == c);
    CHECK(a.widths() == widths);
    CHECK(a.parameter_count() == 9 * 32 + 32 + 32 * 32 + 32 + 32 * 16 + 16 + 16 * 3 + 3);
    for (const auto &layer : a.layers()) {
        const double limit = std::sqrt(6.0 / static_cast<double>(layer.inputs + layer.outputs));
        for (double w : layer.weights) {
            CHECK(std::abs(w) <= limit);
        }
        for (double bias : layer.bias) {
            CHECK(bias == 0.0);
        }
    }
}

TEST_CASE("forward matches a neuron-by-neuron evaluation") {
    const std::vector<std::size_t> widths{4, 6, 5, 2};
    std::mt19937_64 rng{1};
    std::normal_distribution<double> z;
    for (int trial = 0; trial < 20; ++trial) {
        auto net = Mlp::glorot(widths, trial);
        auto p = net.parameters();
        for (auto &v : p) {
            v += 0.1 * z(rng);
        }
        net.set_parameters(p);
        std::vector<double> x(4);
        for (auto &v : x) {
            v = z(rng);
        }
        std::vector<double> y(2);
        net.forward(x, y);
        const auto oracle = naive_forward(net, x);
        CHECK(y[0] == doctest::Approx(oracle[0]).epsilon(1e-12));
        CHECK(y[1] == doctest::Approx(oracle[1]).epsilon(1e-12));
    }
}

TEST_CASE("batched forward equals row-by-row forward") {
    const std::vector<std::size_t> widths{3, 7, 2};
    const auto net = Mlp::glorot(widths, 9);
    std::mt19937_64 rng{2};
    const auto b = random_batch(net, 13, rng);
    std::vector<double> batched(13 * 2);
    net.forward_batch(b.x, 13, batched);
    for (std::size_t r = 0; r < 13; ++r) {
        std::vector<double> y(2);
        net.forward(std::span<const double>{b.x}.subspan(r * 3, 3), y);
        CHECK(batched[r * 2] == y[0]);
        CHECK(batched[r * 2 + 1] == y[1]);
    }
}

TEST_CASE("loss is the masked squared error averaged over rows") {
    const std::vector<std::size_t> widths{2, 3, 2};
    const auto net = Mlp::glorot(widths, 3);
    std::mt19937_64 rng{4};
    const auto b = random_batch(net, 6, rng, 0.4);
    double expected = 0.0;
    for (std::size_t r = 0; r < b.rows; ++r) {
        const auto y = naive_forward(net, {b.x[r * 2], b.x[r * 2 + 1]});
        for (std::size_t k = 0; k < 2; ++k) {
            const double e = y[k] - b.t[r * 2 + k];
            expected += b.mask[r * 2 + k] * e * e;
        }
    }
    expected /= static_cast<double>(b.rows);
    CHECK(net.loss(b.view()) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("backprop agrees with central differences") {
    std::mt19937_64 rng{17};
    std::uniform_int_distribution<std::size_t> width{1, 6};
    for (int trial = 0; trial < 25; ++trial) {
        std::vector<std::size_t> widths{width(rng), width(rng), width(rng), width(rng)};
        const auto net = Mlp::glorot(widths, 100 + trial);
        const auto b = random_batch(net, 5, rng, 0.3);
        std::vector<double> grad;
        net.loss_and_gradient(b.view(), grad);
        REQUIRE(grad.size() == net.parameter_count());
        const auto p = net.parameters();
        const double h = 1e-6;
        for (std::size_t i = 0; i < p.size(); ++i) {
            auto plus = net;
            auto minus = net;
            auto pp = p;
            pp[i] += h;
            plus.set_parameters(pp);
            pp[i] -= 2 * h;
            minus.set_parameters(pp);
            const double numeric = (plus.loss(b.view()) - minus.loss(b.view())) / (2 * h);
            const double denom = std::max({std::abs(numeric), std::abs(grad[i]), 1e-8});
            CHECK(std::abs(numeric - grad[i]) / denom <= 1e-4);
        }
    }
}

TEST_CASE("a fully masked batch has zero loss and zero gradient") {
    const std::vector<std::size_t> widths{3, 4, 2};
    const auto net = Mlp::glorot(widths, 1);
    std::mt19937_64 rng{8};
    auto b = random_batch(net, 4, rng);
    std::fill(b.mask.begin(), b.mask.end(), 0.0);
    std::vector<double> grad;
    CHECK(net.loss_and_gradient(b.view(), grad) == 0.0);
    for (double g : grad) {
        CHECK(g == 0.0);
    }
}

TEST_CASE("parameters round-trip and add_to_parameters is elementwise") {
    const std::vector<std::size_t> widths{2, 3, 1};
    auto net = Mlp::glorot(widths, 6);
    const auto p = net.parameters();
    std::vector<double> delta(p.size(), 0.5);
    net.add_to_parameters(delta);
    const auto q = net.parameters();
    for (std::size_t i = 0; i < p.size(); ++i) {
        CHECK(q[i] == p[i] + 0.5);
    }
    net.set_parameters(p);
    CHECK(net == Mlp::glorot(widths, 6));
}
