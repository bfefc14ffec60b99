#pragma once

// Dense MLP substrate: forward/backward with exact gradients, He init and Adam.
// Everything is templated on the scalar type; the trainers use double.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "dcss/errors.hpp"

namespace dcss::nn {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using MatrixXd = Matrix<double>;

enum class Activation { relu, linear, softmax };

inline const char* to_string(Activation a) {
    switch (a) {
        case Activation::relu: return "relu";
        case Activation::linear: return "linear";
        case Activation::softmax: return "softmax";
    }
    return "?";
}

template <typename Scalar>
struct Layer {
    Matrix<Scalar> weight;  // out × in
    Vector<Scalar> bias;    // out
    Activation activation = Activation::linear;

    Eigen::Index in_dim() const { return weight.cols(); }
    Eigen::Index out_dim() const { return weight.rows(); }
};

template <typename Scalar>
struct MlpParams {
    std::vector<Layer<Scalar>> layers;

    Eigen::Index input_dim() const { return layers.front().in_dim(); }
    Eigen::Index output_dim() const { return layers.back().out_dim(); }

    std::vector<Eigen::Index> layer_dims() const {
        std::vector<Eigen::Index> dims;
        if (layers.empty()) return dims;
        dims.push_back(input_dim());
        for (const auto& l : layers) dims.push_back(l.out_dim());
        return dims;
    }

    // Same shapes and activations, all zeros.
    MlpParams zeros_like() const {
        MlpParams z;
        z.layers.reserve(layers.size());
        for (const auto& l : layers) {
            z.layers.push_back({Matrix<Scalar>::Zero(l.weight.rows(), l.weight.cols()),
                                Vector<Scalar>::Zero(l.bias.size()), l.activation});
        }
        return z;
    }

    Eigen::Index parameter_count() const {
        Eigen::Index n = 0;
        for (const auto& l : layers) n += l.weight.size() + l.bias.size();
        return n;
    }

    void validate() const {
        if (layers.empty()) throw ConfigError("MLP has no layers");
        for (std::size_t i = 0; i < layers.size(); ++i) {
            const auto& l = layers[i];
            if (l.bias.size() != l.weight.rows())
                throw ShapeError("bias length does not match weight rows at layer " + std::to_string(i));
            if (i > 0 && layers[i - 1].out_dim() != l.in_dim())
                throw ShapeError("layer " + std::to_string(i) + " input dim does not match previous output");
            if (l.activation == Activation::softmax && i + 1 != layers.size())
                throw ConfigError("softmax activation only permitted on the final layer");
            if (!l.weight.allFinite() || !l.bias.allFinite())
                throw NumericError("non-finite parameter", static_cast<std::ptrdiff_t>(i));
        }
    }

    MlpParams& operator+=(const MlpParams& other) {
        for (std::size_t i = 0; i < layers.size(); ++i) {
            layers[i].weight += other.layers[i].weight;
            layers[i].bias += other.layers[i].bias;
        }
        return *this;
    }

    bool operator==(const MlpParams& other) const {
        if (layers.size() != other.layers.size()) return false;
        for (std::size_t i = 0; i < layers.size(); ++i) {
            const auto& a = layers[i];
            const auto& b = other.layers[i];
            if (a.activation != b.activation || a.weight.rows() != b.weight.rows() ||
                a.weight.cols() != b.weight.cols() || a.weight != b.weight || a.bias != b.bias)
                return false;
        }
        return true;
    }
};

using MlpParamsd = MlpParams<double>;

// Post-activation outputs of every layer; activations[0] is the input.
template <typename Scalar>
struct ForwardCache {
    std::vector<Matrix<Scalar>> activations;

    const Matrix<Scalar>& output() const { return activations.back(); }
};

template <typename Scalar>
struct BackwardResult {
    MlpParams<Scalar> grads;
    Matrix<Scalar> input_grad;
};

// Row-wise softmax with max subtraction.
template <typename Derived>
Matrix<typename Derived::Scalar> softmax_rows(const Eigen::MatrixBase<Derived>& logits) {
    using Scalar = typename Derived::Scalar;
    Matrix<Scalar> out = logits;
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
        const Scalar mx = out.row(i).maxCoeff();
        out.row(i) = (out.row(i).array() - mx).exp();
        out.row(i) /= out.row(i).sum();
    }
    return out;
}

template <typename Scalar>
ForwardCache<Scalar> mlp_forward(const MlpParams<Scalar>& params, const Matrix<Scalar>& input) {
    if (params.layers.empty()) throw ConfigError("MLP has no layers");
    if (input.cols() != params.input_dim())
        throw ShapeError("input has " + std::to_string(input.cols()) + " columns, network expects " +
                         std::to_string(params.input_dim()));
    ForwardCache<Scalar> cache;
    cache.activations.reserve(params.layers.size() + 1);
    cache.activations.push_back(input);
    for (const auto& layer : params.layers) {
        Matrix<Scalar> z = cache.activations.back() * layer.weight.transpose();
        z.rowwise() += layer.bias.transpose();
        switch (layer.activation) {
            case Activation::relu: z = z.cwiseMax(Scalar(0)); break;
            case Activation::linear: break;
            case Activation::softmax: z = softmax_rows(z); break;
        }
        cache.activations.push_back(std::move(z));
    }
    return cache;
}

// Gradients of a scalar loss whose gradient w.r.t. the network output is output_grad.
template <typename Scalar>
BackwardResult<Scalar> mlp_backward(const MlpParams<Scalar>& params, const ForwardCache<Scalar>& cache,
                                    const Matrix<Scalar>& output_grad) {
    const auto n_layers = params.layers.size();
    if (cache.activations.size() != n_layers + 1) throw ShapeError("forward cache does not match network depth");
    const auto& out = cache.output();
    if (output_grad.rows() != out.rows() || output_grad.cols() != out.cols())
        throw ShapeError("output gradient shape does not match network output");

    BackwardResult<Scalar> result{params.zeros_like(), {}};
    Matrix<Scalar> grad = output_grad;
    for (std::size_t idx = n_layers; idx-- > 0;) {
        const auto& layer = params.layers[idx];
        const auto& y = cache.activations[idx + 1];
        switch (layer.activation) {
            case Activation::relu: grad = (y.array() > Scalar(0)).select(grad, Scalar(0)); break;
            case Activation::linear: break;
            case Activation::softmax: {
                // dz = y ⊙ (g − ⟨g, y⟩)
                const Vector<Scalar> dots = (grad.array() * y.array()).rowwise().sum();
                grad = (y.array() * (grad.colwise() - dots).array()).matrix();
                break;
            }
        }
        const auto& x = cache.activations[idx];
        result.grads.layers[idx].weight.noalias() = grad.transpose() * x;
        result.grads.layers[idx].bias = grad.colwise().sum().transpose();
        if (idx > 0) {
            Matrix<Scalar> next = grad * layer.weight;
            grad = std::move(next);
        } else {
            result.input_grad = grad * layer.weight;
        }
    }
    return result;
}

template <typename Scalar>
MlpParams<Scalar> init_params(const std::vector<Eigen::Index>& layer_dims, const std::vector<Activation>& activations,
                              std::uint64_t seed) {
    if (layer_dims.size() < 2) throw ConfigError("layer_dims needs at least an input and an output size");
    if (activations.size() != layer_dims.size() - 1)
        throw ConfigError("need one activation per layer (" + std::to_string(layer_dims.size() - 1) + ")");
    for (auto d : layer_dims)
        if (d < 1) throw ConfigError("layer dims must be positive");

    std::mt19937_64 rng(seed);
    MlpParams<Scalar> params;
    for (std::size_t i = 0; i + 1 < layer_dims.size(); ++i) {
        const auto fan_in = layer_dims[i];
        const auto fan_out = layer_dims[i + 1];
        std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
        Layer<Scalar> layer{Matrix<Scalar>(fan_out, fan_in), Vector<Scalar>::Zero(fan_out), activations[i]};
        for (Eigen::Index r = 0; r < fan_out; ++r)
            for (Eigen::Index c = 0; c < fan_in; ++c) layer.weight(r, c) = static_cast<Scalar>(dist(rng));
        params.layers.push_back(std::move(layer));
    }
    params.validate();
    return params;
}

// A single linear layer with W = I and b = 0.
template <typename Scalar>
MlpParams<Scalar> identity_linear(Eigen::Index dim) {
    MlpParams<Scalar> params;
    params.layers.push_back({Matrix<Scalar>::Identity(dim, dim), Vector<Scalar>::Zero(dim), Activation::linear});
    return params;
}

template <typename Scalar>
struct AdamState {
    MlpParams<Scalar> first_moment;
    MlpParams<Scalar> second_moment;
    std::int64_t step = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    AdamState() = default;
    explicit AdamState(const MlpParams<Scalar>& params)
        : first_moment(params.zeros_like()), second_moment(params.zeros_like()) {}
};

template <typename Scalar>
void adam_step(MlpParams<Scalar>& params, const MlpParams<Scalar>& grads, AdamState<Scalar>& state, double lr) {
    if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
    if (grads.layers.size() != params.layers.size() || state.first_moment.layers.size() != params.layers.size())
        throw ShapeError("gradient / optimizer state depth does not match parameters");
    for (std::size_t i = 0; i < params.layers.size(); ++i) {
        const auto& g = grads.layers[i];
        const auto& p = params.layers[i];
        if (g.weight.rows() != p.weight.rows() || g.weight.cols() != p.weight.cols() || g.bias.size() != p.bias.size())
            throw ShapeError("gradient shape mismatch at layer " + std::to_string(i));
        if (!g.weight.allFinite() || !g.bias.allFinite())
            throw NumericError("non-finite gradient", static_cast<std::ptrdiff_t>(i));
    }

    ++state.step;
    const Scalar b1 = static_cast<Scalar>(state.beta1);
    const Scalar b2 = static_cast<Scalar>(state.beta2);
    const Scalar eps = static_cast<Scalar>(state.epsilon);
    const Scalar c1 = Scalar(1) - static_cast<Scalar>(std::pow(state.beta1, static_cast<double>(state.step)));
    const Scalar c2 = Scalar(1) - static_cast<Scalar>(std::pow(state.beta2, static_cast<double>(state.step)));
    const Scalar step_size = static_cast<Scalar>(lr);

    auto update = [&](auto& param, const auto& grad, auto& m, auto& v) {
        m = b1 * m + (Scalar(1) - b1) * grad;
        v = b2 * v + (Scalar(1) - b2) * grad.cwiseProduct(grad);
        param.array() -= step_size * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
    };
    for (std::size_t i = 0; i < params.layers.size(); ++i) {
        auto& p = params.layers[i];
        const auto& g = grads.layers[i];
        update(p.weight, g.weight, state.first_moment.layers[i].weight, state.second_moment.layers[i].weight);
        update(p.bias, g.bias, state.first_moment.layers[i].bias, state.second_moment.layers[i].bias);
    }
}

// Architectures used by the clustering pipeline.
struct Autoencoder {
    MlpParamsd encoder;
    MlpParamsd decoder;

    bool operator==(const Autoencoder&) const = default;
};

inline Autoencoder make_autoencoder(Eigen::Index input_dim, Eigen::Index latent_dim, std::uint64_t seed) {
    using A = Activation;
    return {init_params<double>({input_dim, 256, 64, latent_dim}, {A::relu, A::relu, A::linear}, seed),
            init_params<double>({latent_dim, 64, 256, input_dim}, {A::relu, A::relu, A::linear}, seed + 1)};
}

inline MlpParamsd make_mnet(Eigen::Index latent_dim, Eigen::Index clusters, std::uint64_t seed) {
    using A = Activation;
    return init_params<double>({latent_dim, 128, 128, clusters}, {A::relu, A::relu, A::softmax}, seed);
}

}  // namespace dcss::nn
