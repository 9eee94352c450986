#pragma once

#include <cmath>
#include <complex>
#include <functional>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "sounderfeit/adversarial.hpp"

namespace testing {

// Per-test scratch directory under the system temp dir, removed on exit.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() / ("sndf-" + tag + "-" + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

// Frequency of the largest-magnitude bin of a direct DFT, refined by
// parabolic interpolation, searched over [lo_hz, hi_hz].
inline double dft_peak_hz(std::span<const double> x, double sample_rate, double lo_hz, double hi_hz) {
    const std::size_t n = x.size();
    const double bin_hz = sample_rate / static_cast<double>(n);
    const auto lo = static_cast<std::size_t>(lo_hz / bin_hz);
    const auto hi = static_cast<std::size_t>(hi_hz / bin_hz) + 1;
    std::vector<double> mag(hi + 2, 0.0);
    for (std::size_t k = lo > 0 ? lo - 1 : 0; k <= hi + 1; ++k) {
        std::complex<double> acc;
        for (std::size_t i = 0; i < n; ++i) {
            const double ph = -2.0 * M_PI * static_cast<double>(k * i % n) / static_cast<double>(n);
            acc += x[i] * std::complex<double>(std::cos(ph), std::sin(ph));
        }
        mag[k] = std::abs(acc);
    }
    std::size_t best = lo;
    for (std::size_t k = lo; k <= hi; ++k)
        if (mag[k] > mag[best]) best = k;
    const double a = mag[best - 1], b = mag[best], c = mag[best + 1];
    const double denom = a - 2 * b + c;
    const double shift = denom == 0.0 ? 0.0 : 0.5 * (a - c) / denom;
    return (static_cast<double>(best) + shift) * bin_hz;
}

// Lag in [lo, hi] with the largest normalized autocorrelation.
inline double autocorr_peak_lag(std::span<const double> x, std::size_t lo, std::size_t hi) {
    double best_r = -2.0;
    std::size_t best = lo;
    std::vector<double> r(hi + 2, 0.0);
    for (std::size_t lag = lo - 1; lag <= hi + 1; ++lag) {
        double num = 0.0, e0 = 0.0, e1 = 0.0;
        for (std::size_t i = 0; i + lag < x.size(); ++i) {
            num += x[i] * x[i + lag];
            e0 += x[i] * x[i];
            e1 += x[i + lag] * x[i + lag];
        }
        r[lag] = num / std::sqrt(e0 * e1);
        if (lag >= lo && lag <= hi && r[lag] > best_r) {
            best_r = r[lag];
            best = lag;
        }
    }
    const double a = r[best - 1], b = r[best], c = r[best + 1];
    const double denom = a - 2 * b + c;
    return static_cast<double>(best) + (denom == 0.0 ? 0.0 : 0.5 * (a - c) / denom);
}

inline sounderfeit::Matrix random_matrix(std::mt19937_64& rng, std::size_t r, std::size_t c, double scale = 1.0) {
    std::uniform_real_distribution<double> u(-scale, scale);
    sounderfeit::Matrix m(r, c);
    for (auto& v : m.data) v = u(rng);
    return m;
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max(1.0, std::max(std::abs(a), std::abs(b))); }

// Small synthetic corpus with smooth, label-dependent frames; fast to train on.
inline sounderfeit::Corpus toy_corpus(std::size_t n, std::uint64_t seed) {
    using namespace sounderfeit;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 128.0);
    Corpus c;
    c.seed = seed;
    for (std::size_t k = 0; k < n; ++k) {
        const double p = std::round(u(rng)), q = std::round(u(rng));
        std::vector<double> cut(kWindowLen);
        for (std::size_t i = 0; i < kWindowLen; ++i) {
            const double t = 2.0 * M_PI * static_cast<double>(i) / 100.5;
            cut[i] = 0.1 * (std::sin(t) + (p / 128.0) * std::sin(2 * t + q / 40.0));
        }
        c.windows.push_back(make_window(cut, BowParams{p, 100.0, q, kCorpusFrequency}));
    }
    for (std::size_t i = 0; i < kWindowLen; ++i) c.reference[i] = c.windows.front().raw[i];
    renormalize(c);
    return c;
}

}  // namespace testing

namespace testing {

// AaeModel with small layers (in -> hidden -> n+m etc.) and random biases,
// for finite-difference checks.
inline sounderfeit::AaeModel small_model(std::size_t n, std::size_t m, sounderfeit::Activation act, std::uint64_t seed,
                                         std::size_t in = 6, std::size_t hidden = 5) {
    using namespace sounderfeit;
    std::mt19937_64 rng(seed);
    AaeModel model;
    model.n_latent = n;
    model.n_cond = m;
    model.lambda = 0.5;
    model.encoder = make_mlp2(in, hidden, n + m, act, rng);
    model.decoder = make_mlp2(n + m, hidden, in, act, rng);
    model.discriminator = make_mlp2(n, hidden, 1, act, rng);
    std::uniform_real_distribution<double> u(-0.3, 0.3);
    for (auto* net : {&model.encoder, &model.decoder, &model.discriminator}) {
        for (auto& v : net->layer1.b) v = u(rng);
        for (auto& v : net->layer2.b) v = u(rng);
    }
    return model;
}

// Every weight and bias of a network, in a fixed order, for perturbation.
inline std::vector<double*> parameters(sounderfeit::Mlp2& net) {
    std::vector<double*> p;
    for (auto& v : net.layer1.w.data) p.push_back(&v);
    for (auto& v : net.layer1.b) p.push_back(&v);
    for (auto& v : net.layer2.w.data) p.push_back(&v);
    for (auto& v : net.layer2.b) p.push_back(&v);
    return p;
}

inline std::vector<double> flatten(const sounderfeit::Mlp2Grads& g) {
    std::vector<double> out(g.dw1.data);
    out.insert(out.end(), g.db1.begin(), g.db1.end());
    out.insert(out.end(), g.dw2.data.begin(), g.dw2.data.end());
    out.insert(out.end(), g.db2.begin(), g.db2.end());
    return out;
}

// Largest relative error between analytic gradients and central
// differences (eps 1e-5) of `loss` with respect to the parameters of `net`.
inline double max_fd_error(sounderfeit::Mlp2& net, const sounderfeit::Mlp2Grads& analytic,
                           const std::function<double()>& loss) {
    const auto params = parameters(net);
    const auto grads = flatten(analytic);
    double worst = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double keep = *params[i];
        *params[i] = keep + 1e-5;
        const double up = loss();
        *params[i] = keep - 1e-5;
        const double down = loss();
        *params[i] = keep;
        worst = std::max(worst, rel_err(grads[i], (up - down) / 2e-5));
    }
    return worst;
}

}  // namespace testing
