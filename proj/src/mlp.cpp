#include "antler/mlp.hpp"

#include "antler/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace antler {

void MlpGrad::accumulate(const MlpGrad& other, double s) {
    for (std::size_t l = 0; l < weight.size(); ++l) {
        weight[l] += s * other.weight[l];
        bias[l] += s * other.bias[l];
    }
}

void MlpGrad::scale(double s) {
    for (std::size_t l = 0; l < weight.size(); ++l) {
        weight[l] *= s;
        bias[l] *= s;
    }
}

std::size_t Mlp::parameter_count() const {
    std::size_t n = 0;
    for (const MlpLayer& l : layers) n += l.weight.size() + l.bias.size();
    return n;
}

Mlp Mlp::make(int input, const std::vector<int>& hidden, int output, std::uint64_t seed) {
    if (input < 1 || output < 1) throw std::runtime_error("Mlp::make: bad layer sizes");
    Rng rng(seed);
    Mlp mlp;
    std::vector<int> sizes;
    sizes.push_back(input);
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(output);
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
        if (sizes[l + 1] < 1) throw std::runtime_error("Mlp::make: bad layer sizes");
        MlpLayer layer;
        layer.weight.resize(sizes[l + 1], sizes[l]);
        const double scale = 1.0 / std::sqrt(double(sizes[l]));
        for (Eigen::Index i = 0; i < layer.weight.rows(); ++i)
            for (Eigen::Index j = 0; j < layer.weight.cols(); ++j)
                layer.weight(i, j) = scale * rng.normal();
        layer.bias = Eigen::VectorXd::Zero(sizes[l + 1]);
        layer.activation = (l + 2 < sizes.size()) ? Activation::Tanh : Activation::Linear;
        mlp.layers.push_back(std::move(layer));
    }
    return mlp;
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& input, MlpTape* tape) const {
    if (input.rows() != input_dim()) throw std::runtime_error("Mlp::forward: input dim mismatch");
    if (tape) {
        tape->activations.clear();
        tape->activations.push_back(input);
    }
    Eigen::MatrixXd a = input;
    for (const MlpLayer& l : layers) {
        Eigen::MatrixXd z = (l.weight * a).colwise() + l.bias;
        if (l.activation == Activation::Tanh) z = z.array().tanh();
        a = std::move(z);
        if (tape) tape->activations.push_back(a);
    }
    return a;
}

Eigen::VectorXd Mlp::forward_vec(const Eigen::VectorXd& input) const {
    return forward(Eigen::MatrixXd(input)).col(0);
}

Eigen::MatrixXd Mlp::backward(const MlpTape& tape, const Eigen::MatrixXd& output_grad,
                              MlpGrad& grad) const {
    if (tape.activations.size() != layers.size() + 1)
        throw std::runtime_error("Mlp::backward: tape does not match network depth");
    Eigen::MatrixXd g = output_grad;
    for (int l = int(layers.size()) - 1; l >= 0; --l) {
        const MlpLayer& layer = layers[l];
        if (layer.activation == Activation::Tanh) {
            // tanh'(z) = 1 - a^2, with a the cached activation
            g = g.array() * (1.0 - tape.activations[l + 1].array().square());
        }
        grad.weight[l].noalias() += g * tape.activations[l].transpose();
        grad.bias[l] += g.rowwise().sum();
        if (l > 0)
            g = (layer.weight.transpose() * g).eval();
        else
            g = layer.weight.transpose() * g;
    }
    return g;
}

MlpGrad Mlp::zero_grad() const {
    MlpGrad grad;
    for (const MlpLayer& l : layers) {
        grad.weight.push_back(Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()));
        grad.bias.push_back(Eigen::VectorXd::Zero(l.bias.size()));
    }
    return grad;
}

void Mlp::apply_sgd(const MlpGrad& grad, double learning_rate) {
    for (std::size_t l = 0; l < layers.size(); ++l) {
        layers[l].weight -= learning_rate * grad.weight[l];
        layers[l].bias -= learning_rate * grad.bias[l];
    }
}

bool Mlp::all_finite() const {
    for (const MlpLayer& l : layers)
        if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
    return true;
}

} // namespace antler
