#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "sounderfeit/kernels.hpp"

namespace sounderfeit {

enum class Activation { relu, tanh };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& name);

// y = x * w + b with w stored in_dim x out_dim.
struct DenseAffine {
    Matrix w;
    std::vector<double> b;

    std::size_t in_dim() const noexcept { return w.rows; }
    std::size_t out_dim() const noexcept { return w.cols; }

    friend bool operator==(const DenseAffine&, const DenseAffine&) = default;
};

// One hidden layer, one nonlinearity, linear output:
//   f(x) = act(x * w1 + b1) * w2 + b2
struct Mlp2 {
    DenseAffine layer1;
    DenseAffine layer2;
    Activation activation = Activation::relu;
    // Bumped on every parameter update so stale caches can be detected.
    std::uint64_t generation = 0;

    std::size_t in_dim() const noexcept { return layer1.in_dim(); }
    std::size_t hidden_dim() const noexcept { return layer1.out_dim(); }
    std::size_t out_dim() const noexcept { return layer2.out_dim(); }

    bool operator==(const Mlp2& other) const {
        return layer1 == other.layer1 && layer2 == other.layer2 && activation == other.activation;
    }
};

struct Mlp2Cache {
    const Mlp2* net = nullptr;
    std::uint64_t generation = 0;
    Matrix input;
    Matrix pre;     // x * w1 + b1
    Matrix hidden;  // act(pre)
};

struct Mlp2Grads {
    Matrix dw1;
    std::vector<double> db1;
    Matrix dw2;
    std::vector<double> db2;

    static Mlp2Grads zeros_like(const Mlp2& net);
    Mlp2Grads& operator+=(const Mlp2Grads& other);
};

struct SgdConfig {
    double learning_rate = 0.01;
};

// Glorot-uniform weights U(-r, r), r = sqrt(6 / (fan_in + fan_out)); zero biases.
Mlp2 make_mlp2(std::size_t in_dim, std::size_t hidden_dim, std::size_t out_dim, Activation activation,
               std::mt19937_64& rng);

// Batch forward pass, one sample per row. When `cache` is non-null it
// receives what mlp_backward needs.
Matrix mlp_forward(const Mlp2& net, const Matrix& x, Mlp2Cache* cache = nullptr);

struct MlpBackward {
    Mlp2Grads grads;
    Matrix grad_x;
};

// Reverse-mode gradients of the forward map recorded in `cache`. Throws
// Error(usage) when the cache came from another network or an older
// parameter generation.
MlpBackward mlp_backward(const Mlp2& net, const Mlp2Cache& cache, const Matrix& grad_out);

// Single-sample forward pass into caller-owned buffers; never allocates.
void mlp_forward_row(const Mlp2& net, std::span<const double> x, std::span<double> hidden,
                     std::span<double> out) noexcept;

// p <- p - lr * g on every weight and bias.
void sgd_step(Mlp2& net, const Mlp2Grads& grads, const SgdConfig& config);
void sgd_step(std::span<double> params, std::span<const double> grads, double learning_rate);

}  // namespace sounderfeit
