#include "sounderfeit/neuralnet.hpp"

#include <algorithm>
#include <cmath>

#include "sounderfeit/error.hpp"

namespace sounderfeit {

std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "tanh"; }

Activation activation_from_string(const std::string& name) {
    if (name == "relu") return Activation::relu;
    if (name == "tanh") return Activation::tanh;
    throw Error(ErrorKind::format, "unknown activation '" + name + "'");
}

namespace {

DenseAffine glorot(std::size_t in, std::size_t out, std::mt19937_64& rng) {
    DenseAffine layer{Matrix(in, out), std::vector<double>(out, 0.0)};
    const double r = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> u(-r, r);
    for (auto& v : layer.w.data) v = u(rng);
    return layer;
}

inline double activate(Activation a, double v) noexcept { return a == Activation::relu ? std::max(0.0, v) : std::tanh(v); }

// Derivative expressed through the pre-activation and activation values.
// relu'(0) is taken as 0.
inline double activate_grad(Activation a, double pre, double post) noexcept {
    return a == Activation::relu ? (pre > 0.0 ? 1.0 : 0.0) : 1.0 - post * post;
}

void check_grads_shape(const Mlp2& net, const Mlp2Grads& g) {
    if (g.dw1.rows != net.layer1.w.rows || g.dw1.cols != net.layer1.w.cols || g.db1.size() != net.layer1.b.size()
        || g.dw2.rows != net.layer2.w.rows || g.dw2.cols != net.layer2.w.cols || g.db2.size() != net.layer2.b.size()) {
        throw Error(ErrorKind::shape, "gradient shapes do not match the network");
    }
}

}  // namespace

Mlp2Grads Mlp2Grads::zeros_like(const Mlp2& net) {
    return {Matrix(net.layer1.w.rows, net.layer1.w.cols), std::vector<double>(net.layer1.b.size(), 0.0),
            Matrix(net.layer2.w.rows, net.layer2.w.cols), std::vector<double>(net.layer2.b.size(), 0.0)};
}

Mlp2Grads& Mlp2Grads::operator+=(const Mlp2Grads& other) {
    if (dw1.data.size() != other.dw1.data.size() || dw2.data.size() != other.dw2.data.size()
        || db1.size() != other.db1.size() || db2.size() != other.db2.size()) {
        throw Error(ErrorKind::shape, "cannot add gradients of different shapes");
    }
    for (std::size_t i = 0; i < dw1.data.size(); ++i) dw1.data[i] += other.dw1.data[i];
    for (std::size_t i = 0; i < db1.size(); ++i) db1[i] += other.db1[i];
    for (std::size_t i = 0; i < dw2.data.size(); ++i) dw2.data[i] += other.dw2.data[i];
    for (std::size_t i = 0; i < db2.size(); ++i) db2[i] += other.db2[i];
    return *this;
}

Mlp2 make_mlp2(std::size_t in_dim, std::size_t hidden_dim, std::size_t out_dim, Activation activation,
               std::mt19937_64& rng) {
    Mlp2 net;
    net.layer1 = glorot(in_dim, hidden_dim, rng);
    net.layer2 = glorot(hidden_dim, out_dim, rng);
    net.activation = activation;
    return net;
}

Matrix mlp_forward(const Mlp2& net, const Matrix& x, Mlp2Cache* cache) {
    if (x.cols != net.in_dim()) throw Error(ErrorKind::shape, "input width does not match the network");
    Matrix pre;
    kernels::gemm(x, net.layer1.w, pre);
    kernels::add_row_bias(pre, net.layer1.b);
    Matrix hidden(pre.rows, pre.cols);
    for (std::size_t i = 0; i < pre.data.size(); ++i) hidden.data[i] = activate(net.activation, pre.data[i]);
    Matrix y;
    kernels::gemm(hidden, net.layer2.w, y);
    kernels::add_row_bias(y, net.layer2.b);
    if (cache) {
        cache->net = &net;
        cache->generation = net.generation;
        cache->input = x;
        cache->pre = std::move(pre);
        cache->hidden = std::move(hidden);
    }
    return y;
}

MlpBackward mlp_backward(const Mlp2& net, const Mlp2Cache& cache, const Matrix& grad_out) {
    if (cache.net != &net || cache.generation != net.generation) {
        throw Error(ErrorKind::usage, "backward called with a stale or foreign forward cache");
    }
    if (grad_out.rows != cache.input.rows || grad_out.cols != net.out_dim()) {
        throw Error(ErrorKind::shape, "output gradient shape does not match the forward batch");
    }
    MlpBackward out;
    out.grads = Mlp2Grads::zeros_like(net);
    kernels::gemm_tn(cache.hidden, grad_out, out.grads.dw2);
    kernels::column_sums(grad_out, out.grads.db2);

    Matrix grad_pre;
    kernels::gemm_nt(grad_out, net.layer2.w, grad_pre);
    for (std::size_t i = 0; i < grad_pre.data.size(); ++i) {
        grad_pre.data[i] *= activate_grad(net.activation, cache.pre.data[i], cache.hidden.data[i]);
    }
    kernels::gemm_tn(cache.input, grad_pre, out.grads.dw1);
    kernels::column_sums(grad_pre, out.grads.db1);
    kernels::gemm_nt(grad_pre, net.layer1.w, out.grad_x);
    return out;
}

void mlp_forward_row(const Mlp2& net, std::span<const double> x, std::span<double> hidden,
                     std::span<double> out) noexcept {
    const std::size_t in = net.in_dim();
    const std::size_t h = net.hidden_dim();
    const std::size_t o = net.out_dim();
    std::copy(net.layer1.b.begin(), net.layer1.b.end(), hidden.begin());
    for (std::size_t k = 0; k < in; ++k) {
        const double xk = x[k];
        const double* wk = net.layer1.w.data.data() + k * h;
        for (std::size_t j = 0; j < h; ++j) hidden[j] += xk * wk[j];
    }
    for (std::size_t j = 0; j < h; ++j) hidden[j] = activate(net.activation, hidden[j]);
    std::copy(net.layer2.b.begin(), net.layer2.b.end(), out.begin());
    for (std::size_t k = 0; k < h; ++k) {
        const double hk = hidden[k];
        const double* wk = net.layer2.w.data.data() + k * o;
        for (std::size_t j = 0; j < o; ++j) out[j] += hk * wk[j];
    }
}

void sgd_step(std::span<double> params, std::span<const double> grads, double learning_rate) {
    if (params.size() != grads.size()) throw Error(ErrorKind::shape, "parameter and gradient sizes differ");
    for (std::size_t i = 0; i < params.size(); ++i) params[i] -= learning_rate * grads[i];
}

void sgd_step(Mlp2& net, const Mlp2Grads& grads, const SgdConfig& config) {
    if (!(config.learning_rate > 0.0)) throw Error(ErrorKind::config, "learning rate must be positive");
    check_grads_shape(net, grads);
    sgd_step(net.layer1.w.data, grads.dw1.data, config.learning_rate);
    sgd_step(net.layer1.b, grads.db1, config.learning_rate);
    sgd_step(net.layer2.w.data, grads.dw2.data, config.learning_rate);
    sgd_step(net.layer2.b, grads.db2, config.learning_rate);
    ++net.generation;
}

}  // namespace sounderfeit
