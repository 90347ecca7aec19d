#pragma once

#include "madv/core.hpp"

#include <cmath>
#include <random>
#include <string>
#include <vector>

namespace madv {

enum class HiddenActivation { tanh, relu };
enum class OutputActivation { linear, softmax };

/// Layer widths and activations of a feed-forward net, without the values.
struct MlpShape {
    std::vector<int> dims;  ///< input, hidden..., output
    HiddenActivation hidden = HiddenActivation::tanh;
    OutputActivation output = OutputActivation::linear;

    int input_dim() const { return dims.front(); }
    int output_dim() const { return dims.back(); }
    int layer_count() const { return static_cast<int>(dims.size()) - 1; }

    Eigen::Index param_count() const {
        Eigen::Index n = 0;
        for (int k = 0; k < layer_count(); ++k) n += Eigen::Index(dims[k + 1]) * (dims[k] + 1);
        return n;
    }

    bool operator==(const MlpShape&) const = default;
};

inline void validate(const MlpShape& shape) {
    require(shape.dims.size() >= 2, "network needs at least an input and an output width");
    for (int d : shape.dims) require(d > 0, "network layer widths must be positive");
}

template <typename Scalar>
struct Layer {
    Matrix<Scalar> weight;  // out x in
    Vector<Scalar> bias;    // out
};

/// Dense feed-forward network. Hidden layers use `shape.hidden`; the last
/// layer is affine followed by `shape.output`.
template <typename Scalar>
class Mlp {
public:
    Mlp() = default;

    explicit Mlp(MlpShape shape) : shape_(std::move(shape)) {
        validate(shape_);
        for (int k = 0; k < shape_.layer_count(); ++k) {
            layers_.push_back({Matrix<Scalar>::Zero(shape_.dims[k + 1], shape_.dims[k]),
                               Vector<Scalar>::Zero(shape_.dims[k + 1])});
        }
    }

    Mlp(MlpShape shape, const Eigen::Ref<const Vector<Scalar>>& flat) : Mlp(std::move(shape)) {
        assign(flat);
    }

    /// Glorot-normal weights, zero biases.
    template <typename Rng>
    static Mlp glorot(MlpShape shape, Rng& rng) {
        Mlp net(std::move(shape));
        for (auto& layer : net.layers_) {
            const double sd = std::sqrt(2.0 / double(layer.weight.rows() + layer.weight.cols()));
            std::normal_distribution<double> normal(0.0, sd);
            for (Eigen::Index i = 0; i < layer.weight.size(); ++i)
                layer.weight.data()[i] = Scalar(normal(rng));
        }
        return net;
    }

    const MlpShape& shape() const { return shape_; }
    const std::vector<Layer<Scalar>>& layers() const { return layers_; }
    std::vector<Layer<Scalar>>& layers() { return layers_; }
    int input_dim() const { return shape_.input_dim(); }
    int output_dim() const { return shape_.output_dim(); }
    Eigen::Index param_count() const { return shape_.param_count(); }

    /// Per layer: weight (row-major), then bias.
    Vector<Scalar> flatten() const {
        Vector<Scalar> flat(param_count());
        Eigen::Index at = 0;
        for (const auto& layer : layers_) {
            flat.segment(at, layer.weight.size()) =
                Eigen::Map<const Vector<Scalar>>(layer.weight.data(), layer.weight.size());
            at += layer.weight.size();
            flat.segment(at, layer.bias.size()) = layer.bias;
            at += layer.bias.size();
        }
        return flat;
    }

    void assign(const Eigen::Ref<const Vector<Scalar>>& flat) {
        require(flat.size() == param_count(),
                "parameter vector length " + std::to_string(flat.size()) + " does not match network (" +
                    std::to_string(param_count()) + ")");
        Eigen::Index at = 0;
        for (auto& layer : layers_) {
            Eigen::Map<Vector<Scalar>>(layer.weight.data(), layer.weight.size()) =
                flat.segment(at, layer.weight.size());
            at += layer.weight.size();
            layer.bias = flat.segment(at, layer.bias.size());
            at += layer.bias.size();
        }
    }

private:
    MlpShape shape_;
    std::vector<Layer<Scalar>> layers_;
};

using Mlpd = Mlp<double>;

/// Activations recorded by a forward pass, consumed by `mlp_backward`.
/// `inputs[k]` is the input of layer k; `logits` is the last affine output.
template <typename Scalar>
struct MlpTape {
    std::vector<Matrix<Scalar>> inputs;
    Matrix<Scalar> logits;
};

namespace detail {

template <typename Scalar>
void softmax_rows(Matrix<Scalar>& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        Scalar mx = m(i, 0);
        for (Eigen::Index j = 1; j < m.cols(); ++j) mx = std::max(mx, m(i, j));
        Scalar total(0);
        for (Eigen::Index j = 0; j < m.cols(); ++j) total += (m(i, j) = Scalar(std::exp(m(i, j) - mx)));
        for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) /= total;
    }
}

// Activations and reductions avoid Eigen packet paths, whose results depend
// on position and alignment within a row. Row-at-a-time affine map so a batch and its rows evaluated one by one go
// through the same kernel and agree bit for bit.
template <typename Scalar>
Matrix<Scalar> affine_rows(const Layer<Scalar>& layer, const Matrix<Scalar>& in) {
    Matrix<Scalar> out(in.rows(), layer.weight.rows());
    for (Eigen::Index i = 0; i < in.rows(); ++i) {
        const Vector<Scalar> x = in.row(i).transpose();  // aligned copy
        out.row(i).noalias() = (layer.weight * x).transpose();
        out.row(i) += layer.bias.transpose();
    }
    return out;
}

}  // namespace detail

/// Row-wise forward pass. Pass a tape to record what the backward pass needs.
template <typename Scalar>
Matrix<Scalar> mlp_forward(const Mlp<Scalar>& net, const Matrix<Scalar>& input, MlpTape<Scalar>* tape = nullptr) {
    if (input.cols() != net.input_dim())
        throw ConfigError("network input has " + std::to_string(input.cols()) + " columns, expected " +
                          std::to_string(net.input_dim()));
    if (tape) tape->inputs.clear();
    Matrix<Scalar> a = input;
    const auto& layers = net.layers();
    for (std::size_t k = 0; k < layers.size(); ++k) {
        if (tape) tape->inputs.push_back(a);
        Matrix<Scalar> pre = detail::affine_rows(layers[k], a);
        if (k + 1 < layers.size()) {
            if (net.shape().hidden == HiddenActivation::tanh)
                a = pre.unaryExpr([](Scalar v) { return Scalar(std::tanh(v)); });
            else
                a = pre.cwiseMax(Scalar(0));
        } else {
            if (tape) tape->logits = pre;
            a = std::move(pre);
            if (net.shape().output == OutputActivation::softmax) detail::softmax_rows(a);
        }
    }
    return a;
}

template <typename Scalar>
Vector<Scalar> mlp_forward(const Mlp<Scalar>& net, const Vector<Scalar>& input) {
    Matrix<Scalar> row = input.transpose();
    return mlp_forward(net, row).row(0).transpose();
}

/// Reverse pass from the gradient w.r.t. the last affine output (for softmax
/// nets the caller supplies the fused gradient w.r.t. the logits).
/// Parameter gradients are accumulated into `d_params` in flatten() order.
template <typename Scalar>
void mlp_backward(const Mlp<Scalar>& net, const MlpTape<Scalar>& tape, const Matrix<Scalar>& d_logits,
                  std::type_identity_t<Vector<Scalar>>* d_params,
                  std::type_identity_t<Matrix<Scalar>>* d_input = nullptr) {
    const auto& layers = net.layers();
    const auto n_layers = layers.size();
    if (tape.inputs.size() != n_layers) throw ContractError("tape was not recorded on this network");
    if (d_params && d_params->size() != net.param_count()) {
        if (d_params->size() != 0) throw ContractError("gradient buffer has the wrong length");
        *d_params = Vector<Scalar>::Zero(net.param_count());
    }
    // Offsets of each layer's block in the flat vector.
    std::vector<Eigen::Index> offset(n_layers, 0);
    for (std::size_t k = 1; k < n_layers; ++k)
        offset[k] = offset[k - 1] + layers[k - 1].weight.size() + layers[k - 1].bias.size();

    Matrix<Scalar> delta = d_logits;
    for (std::size_t k = n_layers; k-- > 0;) {
        const auto& layer = layers[k];
        const auto& in = tape.inputs[k];
        if (d_params) {
            Matrix<Scalar> dw = delta.transpose() * in;
            Eigen::Map<Vector<Scalar>>(d_params->data() + offset[k], dw.size()) +=
                Eigen::Map<const Vector<Scalar>>(dw.data(), dw.size());
            d_params->segment(offset[k] + dw.size(), layer.bias.size()) += delta.colwise().sum().transpose();
        }
        if (k == 0 && !d_input) break;
        Matrix<Scalar> d_in = delta * layer.weight;
        if (k > 0) {
            // `in` is the activated output of layer k-1.
            if (net.shape().hidden == HiddenActivation::tanh)
                d_in.array() *= (Scalar(1) - in.array().square());
            else
                d_in.array() *= (in.array() > Scalar(0)).template cast<Scalar>();
            delta = std::move(d_in);
        } else {
            *d_input = std::move(d_in);
        }
    }
}

}  // namespace madv
