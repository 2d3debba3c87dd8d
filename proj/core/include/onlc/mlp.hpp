#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace onlc::nn {

//! Fully connected layer. Weights are stored row-major, one row per output.
struct DenseLayer {
    std::size_t inputs = 0;
    std::size_t outputs = 0;
    std::vector<double> weights;
    std::vector<double> bias;

    bool operator==(const DenseLayer &) const = default;
};

//! A batch of training rows, all row-major. `mask` has the shape of
//! `targets`; a zero entry removes that output from the loss.
struct BatchView {
    std::span<const double> inputs;
    std::span<const double> targets;
    std::span<const double> mask;
    std::size_t rows = 0;
};

//! Feed-forward network with tanh hidden layers and a linear output layer.
//!
//! Loss is the masked squared error summed over outputs and averaged over
//! rows: L = (1/N) * sum_n sum_k mask_nk * (y_nk - t_nk)^2.
class Mlp {
  public:
    Mlp() = default;

    //! Zero-initialized network with the given layer widths
    //! (input, hidden..., output).
    explicit Mlp(std::span<const std::size_t> widths);

    //! Glorot-uniform weights, zero biases, deterministic in `seed`.
    static Mlp glorot(std::span<const std::size_t> widths, std::uint64_t seed);

    std::size_t input_size() const { return layers_.empty() ? 0 : layers_.front().inputs; }
    std::size_t output_size() const { return layers_.empty() ? 0 : layers_.back().outputs; }
    std::size_t parameter_count() const;
    std::vector<std::size_t> widths() const;

    const std::vector<DenseLayer> &layers() const { return layers_; }
    std::vector<DenseLayer> &layers() { return layers_; }

    //! Single-row forward pass. `out` must hold output_size() values.
    void forward(std::span<const double> input, std::span<double> out) const;

    //! Batched forward pass; `out` is rows x output_size().
    void forward_batch(std::span<const double> inputs, std::size_t rows,
                       std::span<double> out) const;

    double loss(const BatchView &batch) const;

    //! Loss and its gradient with respect to all parameters, flattened in
    //! layer order (weights, then bias, per layer).
    double loss_and_gradient(const BatchView &batch, std::vector<double> &gradient) const;

    std::vector<double> parameters() const;
    void set_parameters(std::span<const double> params);
    //! params += delta
    void add_to_parameters(std::span<const double> delta);

    bool operator==(const Mlp &) const = default;

  private:
    std::vector<DenseLayer> layers_;
};

} // namespace onlc::nn
