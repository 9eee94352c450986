#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "sounderfeit/dataset.hpp"
#include "sounderfeit/neuralnet.hpp"

namespace sounderfeit {

inline constexpr std::size_t kHiddenWidth = 100;

// One row of the experiment table: latent dims, conditional dims, and whether
// the latent code is adversarially regularized.
struct ExperimentCondition {
    std::string_view name;
    std::size_t n_latent;
    std::size_t n_cond;
    bool adversarial;

    friend bool operator==(const ExperimentCondition&, const ExperimentCondition&) = default;
};

const std::array<ExperimentCondition, 6>& experiment_conditions();
// Throws Error(usage) naming the six valid conditions.
const ExperimentCondition& condition_by_name(std::string_view name);

// How the sums in each loss are reduced. `sum` is the plain sum over batch
// and dimensions; `batch_mean` divides by the batch size; `mean` averages
// each term over all of its elements (batch x dims).
enum class Reduction { sum, batch_mean, mean };

std::string to_string(Reduction r);
Reduction reduction_from_string(const std::string& name);

// Encoder f: 200 -> 100 -> n+m, decoder g: n+m -> 100 -> 200, discriminator
// h: n -> 100 -> 1. Encoder output columns [0, n) are z, [n, n+m) are y.
struct AaeModel {
    Mlp2 encoder;
    Mlp2 decoder;
    Mlp2 discriminator;
    std::size_t n_latent = 0;
    std::size_t n_cond = 0;
    double lambda = 0.5;
    NormStats stats{};
    std::string condition;
    std::uint64_t seed = 0;
    std::string corpus_hash;
    std::vector<std::size_t> holdout_indices;

    std::size_t code_dim() const noexcept { return n_latent + n_cond; }
    Activation activation() const noexcept { return encoder.activation; }

    bool operator==(const AaeModel& o) const {
        return encoder == o.encoder && decoder == o.decoder && discriminator == o.discriminator
               && n_latent == o.n_latent && n_cond == o.n_cond && lambda == o.lambda && stats == o.stats
               && condition == o.condition && seed == o.seed && corpus_hash == o.corpus_hash
               && holdout_indices == o.holdout_indices;
    }
};

AaeModel make_model(std::size_t n_latent, std::size_t n_cond, Activation activation, double lambda,
                    std::uint64_t seed);
AaeModel make_model(const ExperimentCondition& condition, Activation activation, double lambda, std::uint64_t seed);

// FNV-1a over every weight and bias, for "was this model touched" checks.
std::uint64_t model_fingerprint(const AaeModel& model);

struct AeLoss {
    double value = 0.0;
    Mlp2Grads encoder;
    Mlp2Grads decoder;
};

struct GenLoss {
    double value = 0.0;
    Mlp2Grads encoder;
};

struct DiscLoss {
    double value = 0.0;
    Mlp2Grads discriminator;
};

// sum (x - g(f(x)))^2 + lambda * sum (y - E_y(x))^2. The y term is skipped
// when the model has no conditional dimensions.
AeLoss loss_ae(const AaeModel& model, const Matrix& x, const Matrix& y, Reduction reduction = Reduction::sum);

// -sum log sigmoid(h(E_z(x))); gradients reach the encoder only.
GenLoss loss_g(const AaeModel& model, const Matrix& x, Reduction reduction = Reduction::sum);

// -sum (log sigmoid(h(z)) + log(1 - sigmoid(h(E_z(x))))); the encoder is held
// constant and only the discriminator receives gradients.
DiscLoss loss_d(const AaeModel& model, const Matrix& x, const Matrix& z_prior, Reduction reduction = Reduction::sum);

// Numerically stable log(1 + e^a).
double softplus(double a) noexcept;

// Uniform U(-1, 1) draws, rows x n.
Matrix sample_prior(std::mt19937_64& rng, std::size_t rows, std::size_t n);

struct TrainConfig {
    std::size_t batch_size = 50;
    std::size_t n_batches = 4000;
    double lr_ae = 0.005;
    double lr_g = 0.05;
    double lr_d = 0.05;
    double lambda = 0.5;
    double holdout_fraction = 0.25;
    Reduction reduction = Reduction::mean;
    Activation activation = Activation::relu;
    std::uint64_t seed = 0;
};

struct BatchReport {
    double l_ae = 0.0;
    double l_g = 0.0;  // zero when the adversarial steps are skipped
    double l_d = 0.0;

    friend bool operator==(const BatchReport&, const BatchReport&) = default;
};

// The three per-batch steps: autoencoder SGD on f and g, then (when
// adversarial and n >= 1) generator SGD on f against L_G and discriminator
// SGD on h against L_D. `z_prior` feeds the discriminator step. Throws
// DivergenceError when any loss is not finite.
BatchReport train_batch(AaeModel& model, const Matrix& x, const Matrix& y, const Matrix& z_prior, bool adversarial,
                        const TrainConfig& config, std::size_t batch_index);

// Conditional labels of a window, scaled to [-1,1]: pressure then position,
// truncated to n_cond.
std::vector<double> condition_labels(const PeriodWindow& window, std::size_t n_cond);

struct BatchData {
    Matrix x;
    Matrix y;
};

BatchData gather_batch(const Corpus& corpus, std::span<const std::size_t> indices, std::size_t n_cond);

struct Split {
    std::vector<std::size_t> train;
    std::vector<std::size_t> holdout;
};

// Seeded shuffle; the last `holdout_fraction` of it is held out.
Split split_holdout(std::size_t n, double holdout_fraction, std::uint64_t seed);

struct TrainResult {
    AaeModel model;
    std::vector<BatchReport> reports;
    Split split;
};

using ProgressFn = std::function<void(std::size_t batch, const BatchReport&)>;

TrainResult train(const Corpus& corpus, const ExperimentCondition& condition, const TrainConfig& config,
                  const ProgressFn& progress = {});

struct Encoded {
    Matrix z;      // rows x n
    Matrix y_hat;  // rows x m
};

Encoded encode(const AaeModel& model, const Matrix& x);
Matrix decode(const AaeModel& model, const Matrix& z, const Matrix& y);

// Mean squared error per element of g(f(x)) against x over the given windows.
double reconstruction_mse(const AaeModel& model, const Corpus& corpus, std::span<const std::size_t> indices);

// --- checkpoint -----------------------------------------------------------

inline constexpr int kCheckpointVersion = 1;

std::string serialize_model(const AaeModel& model);
AaeModel deserialize_model(const std::string& text);
void save_model(const AaeModel& model, const std::filesystem::path& path);
AaeModel load_model(const std::filesystem::path& path);

}  // namespace sounderfeit
