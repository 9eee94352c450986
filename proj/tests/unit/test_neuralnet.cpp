#include <cmath>

#include "doctest.h"
#include "sounderfeit/error.hpp"
#include "sounderfeit/neuralnet.hpp"
#include "support.hpp"

using namespace sounderfeit;

namespace {

// Straight-line re-evaluation of act(x w1 + b1) w2 + b2 for one row.
std::vector<double> reference_forward(const Mlp2& net, std::span<const double> x) {
    std::vector<double> h(net.hidden_dim());
    for (std::size_t j = 0; j < h.size(); ++j) {
        double a = net.layer1.b[j];
        for (std::size_t i = 0; i < x.size(); ++i) a += x[i] * net.layer1.w(i, j);
        h[j] = net.activation == Activation::relu ? std::max(0.0, a) : std::tanh(a);
    }
    std::vector<double> y(net.out_dim());
    for (std::size_t k = 0; k < y.size(); ++k) {
        double a = net.layer2.b[k];
        for (std::size_t j = 0; j < h.size(); ++j) a += h[j] * net.layer2.w(j, k);
        y[k] = a;
    }
    return y;
}

// Scalar objective sum(out * probe) so its gradient wrt out is `probe`.
double objective(const Mlp2& net, const Matrix& x, const Matrix& probe) {
    const Matrix y = mlp_forward(net, x);
    double s = 0.0;
    for (std::size_t i = 0; i < y.data.size(); ++i) s += y.data[i] * probe.data[i];
    return s;
}

void fd_check(double analytic, double& p, const std::function<double()>& f) {
    const double eps = 1e-5;
    const double keep = p;
    p = keep + eps;
    const double up = f();
    p = keep - eps;
    const double down = f();
    p = keep;
    const double numeric = (up - down) / (2 * eps);
    CHECK(testing::rel_err(analytic, numeric) < 1e-4);
}

}  // namespace

TEST_CASE("forward matches straight-line evaluation") {
    std::mt19937_64 rng(4);
    for (auto act : {Activation::relu, Activation::tanh}) {
        const Mlp2 net = make_mlp2(7, 6, 3, act, rng);
        const Matrix x = testing::random_matrix(rng, 5, 7);
        const Matrix y = mlp_forward(net, x);
        for (std::size_t r = 0; r < 5; ++r) {
            const auto ref = reference_forward(net, x.row(r));
            for (std::size_t k = 0; k < 3; ++k) CHECK(std::abs(y(r, k) - ref[k]) < 1e-12);
            std::vector<double> hidden(6), out(3);
            mlp_forward_row(net, x.row(r), hidden, out);
            for (std::size_t k = 0; k < 3; ++k) CHECK(std::abs(out[k] - ref[k]) < 1e-12);
        }
    }
}

TEST_CASE("zero weights collapse to the output bias") {
    std::mt19937_64 rng(1);
    Mlp2 net = make_mlp2(4, 5, 2, Activation::tanh, rng);
    for (auto& v : net.layer1.w.data) v = 0.0;
    for (auto& v : net.layer2.w.data) v = 0.0;
    net.layer2.b = {1.5, -2.0};
    const Matrix y = mlp_forward(net, testing::random_matrix(rng, 3, 4));
    for (std::size_t r = 0; r < 3; ++r) {
        CHECK(y(r, 0) == 1.5);
        CHECK(y(r, 1) == -2.0);
    }
}

TEST_CASE("relu with all-negative pre-activations gives the output bias") {
    std::mt19937_64 rng(1);
    Mlp2 net = make_mlp2(3, 4, 2, Activation::relu, rng);
    for (auto& v : net.layer1.w.data) v = 0.0;
    for (auto& v : net.layer1.b) v = -1.0;
    net.layer2.b = {0.25, 0.5};
    const Matrix y = mlp_forward(net, testing::random_matrix(rng, 2, 3));
    CHECK(y(0, 0) == 0.25);
    CHECK(y(1, 1) == 0.5);
}

TEST_CASE("initialization is Glorot uniform with zero biases and seeded") {
    std::mt19937_64 a(9), b(9);
    const Mlp2 n1 = make_mlp2(200, 100, 3, Activation::relu, a);
    const Mlp2 n2 = make_mlp2(200, 100, 3, Activation::relu, b);
    CHECK(n1 == n2);
    const double r1 = std::sqrt(6.0 / 300.0), r2 = std::sqrt(6.0 / 103.0);
    for (double v : n1.layer1.w.data) CHECK(std::abs(v) <= r1);
    for (double v : n1.layer2.w.data) CHECK(std::abs(v) <= r2);
    for (double v : n1.layer1.b) CHECK(v == 0.0);
    for (double v : n1.layer2.b) CHECK(v == 0.0);
}

TEST_CASE("backward matches central finite differences") {
    std::mt19937_64 rng(12);
    for (auto act : {Activation::relu, Activation::tanh}) {
        for (int trial = 0; trial < 5; ++trial) {
            Mlp2 net = make_mlp2(5, 4, 3, act, rng);
            for (auto& v : net.layer1.b) v = std::uniform_real_distribution<double>(-0.5, 0.5)(rng);
            for (auto& v : net.layer2.b) v = std::uniform_real_distribution<double>(-0.5, 0.5)(rng);
            Matrix x = testing::random_matrix(rng, 6, 5);
            const Matrix probe = testing::random_matrix(rng, 6, 3);
            Mlp2Cache cache;
            mlp_forward(net, x, &cache);
            const auto back = mlp_backward(net, cache, probe);
            auto f = [&] { return objective(net, x, probe); };
            for (std::size_t i = 0; i < net.layer1.w.data.size(); ++i) fd_check(back.grads.dw1.data[i], net.layer1.w.data[i], f);
            for (std::size_t i = 0; i < net.layer1.b.size(); ++i) fd_check(back.grads.db1[i], net.layer1.b[i], f);
            for (std::size_t i = 0; i < net.layer2.w.data.size(); ++i) fd_check(back.grads.dw2.data[i], net.layer2.w.data[i], f);
            for (std::size_t i = 0; i < net.layer2.b.size(); ++i) fd_check(back.grads.db2[i], net.layer2.b[i], f);
            for (std::size_t i = 0; i < x.data.size(); ++i) fd_check(back.grad_x.data[i], x.data[i], f);
        }
    }
}

TEST_CASE("input gradient of a linear net is the composed weights") {
    std::mt19937_64 rng(3);
    Mlp2 net = make_mlp2(3, 4, 2, Activation::relu, rng);
    for (auto& v : net.layer1.b) v = 100.0;  // every unit active: relu is identity
    Mlp2Cache cache;
    const Matrix x = testing::random_matrix(rng, 1, 3, 0.1);
    mlp_forward(net, x, &cache);
    Matrix g(1, 2);
    g(0, 0) = 1.0;
    const auto back = mlp_backward(net, cache, g);
    for (std::size_t i = 0; i < 3; ++i) {
        double expect = 0.0;
        for (std::size_t j = 0; j < 4; ++j) expect += net.layer1.w(i, j) * net.layer2.w(j, 0);
        CHECK(back.grad_x(0, i) == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("zero upstream gradient gives zero gradients") {
    std::mt19937_64 rng(3);
    const Mlp2 net = make_mlp2(3, 4, 2, Activation::tanh, rng);
    Mlp2Cache cache;
    mlp_forward(net, testing::random_matrix(rng, 4, 3), &cache);
    const auto back = mlp_backward(net, cache, Matrix(4, 2));
    for (double v : back.grads.dw1.data) CHECK(v == 0.0);
    for (double v : back.grads.dw2.data) CHECK(v == 0.0);
    for (double v : back.grad_x.data) CHECK(v == 0.0);
}

TEST_CASE("relu derivative at zero is zero") {
    std::mt19937_64 rng(3);
    Mlp2 net = make_mlp2(1, 1, 1, Activation::relu, rng);
    net.layer1.w(0, 0) = 1.0;
    net.layer2.w(0, 0) = 1.0;
    Mlp2Cache cache;
    Matrix x(1, 1, 0.0);
    mlp_forward(net, x, &cache);
    const auto back = mlp_backward(net, cache, Matrix(1, 1, 1.0));
    CHECK(back.grads.dw1(0, 0) == 0.0);
    CHECK(back.grads.db1[0] == 0.0);
}

TEST_CASE("stale or foreign caches are rejected") {
    std::mt19937_64 rng(5);
    Mlp2 net = make_mlp2(3, 4, 2, Activation::relu, rng);
    const Mlp2 other = make_mlp2(3, 4, 2, Activation::relu, rng);
    Mlp2Cache cache;
    mlp_forward(net, testing::random_matrix(rng, 2, 3), &cache);
    CHECK_THROWS_AS(mlp_backward(other, cache, Matrix(2, 2)), Error);
    sgd_step(net, Mlp2Grads::zeros_like(net), SgdConfig{0.1});
    try {
        mlp_backward(net, cache, Matrix(2, 2));
        FAIL("stale cache accepted");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::usage);
    }
}

TEST_CASE("shape mismatches are errors") {
    std::mt19937_64 rng(5);
    const Mlp2 net = make_mlp2(3, 4, 2, Activation::relu, rng);
    CHECK_THROWS_AS(mlp_forward(net, Matrix(2, 4)), Error);
    Mlp2Cache cache;
    mlp_forward(net, Matrix(2, 3), &cache);
    CHECK_THROWS_AS(mlp_backward(net, cache, Matrix(2, 3)), Error);
    Mlp2 copy = net;
    Mlp2Grads g = Mlp2Grads::zeros_like(make_mlp2(3, 5, 2, Activation::relu, rng));
    CHECK_THROWS_AS(sgd_step(copy, g, SgdConfig{0.1}), Error);
    std::vector<double> p(3);
    CHECK_THROWS_AS(sgd_step(p, std::vector<double>(2), 0.1), Error);
}

TEST_CASE("sgd step arithmetic") {
    std::vector<double> p{1.0};
    sgd_step(p, std::vector<double>{2.0}, 0.1);
    CHECK(p[0] == doctest::Approx(0.8));
    sgd_step(p, std::vector<double>{0.0}, 0.1);
    CHECK(p[0] == doctest::Approx(0.8));

    // Affine update: step(p, g1 + g2) == step(step(p, g1), g2).
    std::mt19937_64 rng(8);
    const Mlp2 base = make_mlp2(3, 4, 2, Activation::tanh, rng);
    Mlp2Grads g1 = Mlp2Grads::zeros_like(base), g2 = g1;
    for (auto* m : {&g1.dw1, &g1.dw2, &g2.dw1, &g2.dw2})
        for (auto& v : m->data) v = std::uniform_real_distribution<double>(-1, 1)(rng);
    Mlp2 a = base, b = base;
    Mlp2Grads sum = g1;
    sum += g2;
    sgd_step(a, sum, SgdConfig{0.05});
    sgd_step(b, g1, SgdConfig{0.05});
    sgd_step(b, g2, SgdConfig{0.05});
    for (std::size_t i = 0; i < a.layer1.w.data.size(); ++i)
        CHECK(a.layer1.w.data[i] == doctest::Approx(b.layer1.w.data[i]).epsilon(1e-14));
    CHECK(b.generation == base.generation + 2);
}

TEST_CASE("activation names") {
    CHECK(to_string(Activation::relu) == "relu");
    CHECK(activation_from_string("tanh") == Activation::tanh);
    CHECK_THROWS_AS(activation_from_string("sigmoid"), Error);
}
