#include "onlc/mlp.hpp"
#include "onlc/errors.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <random>

namespace onlc::nn {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstVectorMap = Eigen::Map<const Eigen::VectorXd>;

ConstMatrixMap weights_of(const DenseLayer &layer) {
    return {layer.weights.data(), static_cast<Eigen::Index>(layer.outputs),
            static_cast<Eigen::Index>(layer.inputs)};
}

ConstVectorMap bias_of(const DenseLayer &layer) {
    return {layer.bias.data(), static_cast<Eigen::Index>(layer.outputs)};
}

// Activations of every layer for a batch; index 0 is the input.
std::vector<RowMatrix> forward_all(const std::vector<DenseLayer> &layers,
                                   std::span<const double> inputs, std::size_t rows) {
    std::vector<RowMatrix> acts;
    acts.reserve(layers.size() + 1);
    acts.emplace_back(ConstMatrixMap{inputs.data(), static_cast<Eigen::Index>(rows),
                                     static_cast<Eigen::Index>(layers.front().inputs)});
    for (std::size_t l = 0; l < layers.size(); ++l) {
        RowMatrix z = acts.back() * weights_of(layers[l]).transpose();
        z.rowwise() += bias_of(layers[l]).transpose();
        if (l + 1 < layers.size()) {
            z = z.array().tanh();
        }
        acts.push_back(std::move(z));
    }
    return acts;
}

void check_batch(const Mlp &net, const BatchView &batch) {
    if (batch.rows == 0 || batch.inputs.size() != batch.rows * net.input_size() ||
        batch.targets.size() != batch.rows * net.output_size() ||
        batch.mask.size() != batch.targets.size()) {
        throw DomainError("batch shape does not match network");
    }
}

} // namespace

Mlp::Mlp(std::span<const std::size_t> widths) {
    if (widths.size() < 2) {
        throw DomainError("network needs at least an input and an output width");
    }
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
        if (widths[i] == 0 || widths[i + 1] == 0) {
            throw DomainError("layer widths must be positive");
        }
        DenseLayer layer;
        layer.inputs = widths[i];
        layer.outputs = widths[i + 1];
        layer.weights.assign(layer.inputs * layer.outputs, 0.0);
        layer.bias.assign(layer.outputs, 0.0);
        layers_.push_back(std::move(layer));
    }
}

Mlp Mlp::glorot(std::span<const std::size_t> widths, std::uint64_t seed) {
    Mlp net{widths};
    std::mt19937_64 rng{seed};
    for (auto &layer : net.layers_) {
        const double limit = std::sqrt(6.0 / static_cast<double>(layer.inputs + layer.outputs));
        std::uniform_real_distribution<double> dist{-limit, limit};
        for (auto &w : layer.weights) {
            w = dist(rng);
        }
    }
    return net;
}

std::size_t Mlp::parameter_count() const {
    std::size_t n = 0;
    for (const auto &layer : layers_) {
        n += layer.weights.size() + layer.bias.size();
    }
    return n;
}

std::vector<std::size_t> Mlp::widths() const {
    std::vector<std::size_t> w;
    if (layers_.empty()) {
        return w;
    }
    w.push_back(layers_.front().inputs);
    for (const auto &layer : layers_) {
        w.push_back(layer.outputs);
    }
    return w;
}

void Mlp::forward(std::span<const double> input, std::span<double> out) const {
    if (input.size() != input_size() || out.size() != output_size()) {
        throw DomainError("forward: size mismatch");
    }
    // Small fixed networks: plain loops beat Eigen's dynamic allocation here.
    thread_local std::vector<double> a;
    thread_local std::vector<double> b;
    a.assign(input.begin(), input.end());
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const auto &layer = layers_[l];
        b.resize(layer.outputs);
        const double *w = layer.weights.data();
        for (std::size_t o = 0; o < layer.outputs; ++o) {
            double z = layer.bias[o];
            const double *row = w + o * layer.inputs;
            for (std::size_t i = 0; i < layer.inputs; ++i) {
                z += row[i] * a[i];
            }
            b[o] = (l + 1 < layers_.size()) ? std::tanh(z) : z;
        }
        std::swap(a, b);
    }
    std::copy(a.begin(), a.end(), out.begin());
}

void Mlp::forward_batch(std::span<const double> inputs, std::size_t rows,
                        std::span<double> out) const {
    if (inputs.size() != rows * input_size() || out.size() != rows * output_size()) {
        throw DomainError("forward_batch: size mismatch");
    }
    if (rows == 0) {
        return;
    }
    const auto acts = forward_all(layers_, inputs, rows);
    MatrixMap{out.data(), static_cast<Eigen::Index>(rows),
              static_cast<Eigen::Index>(output_size())} = acts.back();
}

double Mlp::loss(const BatchView &batch) const {
    check_batch(*this, batch);
    const auto acts = forward_all(layers_, batch.inputs, batch.rows);
    const auto rows = static_cast<Eigen::Index>(batch.rows);
    const auto cols = static_cast<Eigen::Index>(output_size());
    const ConstMatrixMap targets{batch.targets.data(), rows, cols};
    const ConstMatrixMap mask{batch.mask.data(), rows, cols};
    const RowMatrix err = (acts.back() - targets).cwiseProduct(mask);
    return err.cwiseProduct(acts.back() - targets).sum() / static_cast<double>(batch.rows);
}

double Mlp::loss_and_gradient(const BatchView &batch, std::vector<double> &gradient) const {
    check_batch(*this, batch);
    const auto acts = forward_all(layers_, batch.inputs, batch.rows);
    const auto rows = static_cast<Eigen::Index>(batch.rows);
    const auto cols = static_cast<Eigen::Index>(output_size());
    const ConstMatrixMap targets{batch.targets.data(), rows, cols};
    const ConstMatrixMap mask{batch.mask.data(), rows, cols};
    const double inv_n = 1.0 / static_cast<double>(batch.rows);

    const RowMatrix diff = acts.back() - targets;
    const double loss = diff.cwiseProduct(mask).cwiseProduct(diff).sum() * inv_n;

    gradient.assign(parameter_count(), 0.0);
    // Offsets of each layer's block in the flattened gradient.
    std::vector<std::size_t> offsets(layers_.size());
    std::size_t offset = 0;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        offsets[l] = offset;
        offset += layers_[l].weights.size() + layers_[l].bias.size();
    }

    RowMatrix delta = 2.0 * inv_n * diff.cwiseProduct(mask);
    for (std::size_t l = layers_.size(); l-- > 0;) {
        const auto &layer = layers_[l];
        MatrixMap grad_w{gradient.data() + offsets[l], static_cast<Eigen::Index>(layer.outputs),
                         static_cast<Eigen::Index>(layer.inputs)};
        Eigen::Map<Eigen::VectorXd> grad_b{gradient.data() + offsets[l] + layer.weights.size(),
                                           static_cast<Eigen::Index>(layer.outputs)};
        grad_w.noalias() = delta.transpose() * acts[l];
        grad_b = delta.colwise().sum().transpose();
        if (l > 0) {
            RowMatrix back = delta * weights_of(layer);
            // acts[l] is the tanh output of the previous layer.
            delta = back.cwiseProduct((1.0 - acts[l].array().square()).matrix());
        }
    }
    return loss;
}

std::vector<double> Mlp::parameters() const {
    std::vector<double> p;
    p.reserve(parameter_count());
    for (const auto &layer : layers_) {
        p.insert(p.end(), layer.weights.begin(), layer.weights.end());
        p.insert(p.end(), layer.bias.begin(), layer.bias.end());
    }
    return p;
}

void Mlp::set_parameters(std::span<const double> params) {
    if (params.size() != parameter_count()) {
        throw DomainError("set_parameters: size mismatch");
    }
    auto it = params.begin();
    for (auto &layer : layers_) {
        std::copy_n(it, layer.weights.size(), layer.weights.begin());
        it += static_cast<std::ptrdiff_t>(layer.weights.size());
        std::copy_n(it, layer.bias.size(), layer.bias.begin());
        it += static_cast<std::ptrdiff_t>(layer.bias.size());
    }
}

void Mlp::add_to_parameters(std::span<const double> delta) {
    if (delta.size() != parameter_count()) {
        throw DomainError("add_to_parameters: size mismatch");
    }
    auto it = delta.begin();
    for (auto &layer : layers_) {
        for (auto &w : layer.weights) {
            w += *it++;
        }
        for (auto &b : layer.bias) {
            b += *it++;
        }
    }
}

} // namespace onlc::nn
