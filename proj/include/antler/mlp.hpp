#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <vector>

namespace antler {

enum class Activation { Tanh, Linear };

/// Dense layer y = act(W x + b).
struct MlpLayer {
    Eigen::MatrixXd weight; // out x in
    Eigen::VectorXd bias;   // out
    Activation activation = Activation::Tanh;
};

/// Per-layer parameter gradients, same shapes as the layers.
struct MlpGrad {
    std::vector<Eigen::MatrixXd> weight;
    std::vector<Eigen::VectorXd> bias;

    void accumulate(const MlpGrad& other, double scale = 1.0);
    void scale(double s);
};

/// Cached pre-activations/activations from a forward pass, consumed by the
/// backward pass. Column b of each matrix belongs to input column b.
struct MlpTape {
    std::vector<Eigen::MatrixXd> activations; // activations[0] is the input
};

/// Minimal multilayer perceptron on double precision Eigen types with
/// explicit backpropagation. Batched: inputs/outputs are column-major
/// matrices, one sample per column.
struct Mlp {
    std::vector<MlpLayer> layers;

    int input_dim() const { return layers.empty() ? 0 : int(layers.front().weight.cols()); }
    int output_dim() const { return layers.empty() ? 0 : int(layers.back().weight.rows()); }
    std::size_t parameter_count() const;

    /// Layer sizes in0 -> widths... -> out with tanh on hidden layers and a
    /// linear output layer; weights ~ N(0, 1/fan_in), biases zero (seeded).
    static Mlp make(int input, const std::vector<int>& hidden, int output, std::uint64_t seed);

    Eigen::MatrixXd forward(const Eigen::MatrixXd& input, MlpTape* tape = nullptr) const;
    Eigen::VectorXd forward_vec(const Eigen::VectorXd& input) const;

    /// Backpropagates dL/d(output); accumulates parameter gradients into
    /// `grad` and returns dL/d(input).
    Eigen::MatrixXd backward(const MlpTape& tape, const Eigen::MatrixXd& output_grad,
                             MlpGrad& grad) const;

    MlpGrad zero_grad() const;

    /// Plain SGD step: params -= lr * grad.
    void apply_sgd(const MlpGrad& grad, double learning_rate);

    bool all_finite() const;
};

} // namespace antler
