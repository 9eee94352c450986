#include "sounderfeit/adversarial.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"

#include "sounderfeit/error.hpp"

namespace sounderfeit {

const std::array<ExperimentCondition, 6>& experiment_conditions() {
    static const std::array<ExperimentCondition, 6> table{{
        {"D1_Z2_Y", 1, 2, true},
        {"D0_Z2_Y", 0, 2, true},
        {"N1_Z2_Y", 1, 2, false},
        {"D1_Z1_Y", 1, 1, true},
        {"D2_Z0_Y", 2, 0, true},
        {"N2_Z0_Y", 2, 0, false},
    }};
    return table;
}

const ExperimentCondition& condition_by_name(std::string_view name) {
    for (const auto& c : experiment_conditions())
        if (c.name == name) return c;
    std::string valid;
    for (const auto& c : experiment_conditions()) {
        if (!valid.empty()) valid += ", ";
        valid += c.name;
    }
    throw Error(ErrorKind::usage, "unknown condition '" + std::string(name) + "'; valid conditions: " + valid);
}

std::string to_string(Reduction r) {
    switch (r) {
        case Reduction::sum: return "sum";
        case Reduction::batch_mean: return "batch_mean";
        case Reduction::mean: return "mean";
    }
    return "sum";
}

Reduction reduction_from_string(const std::string& name) {
    if (name == "sum") return Reduction::sum;
    if (name == "batch_mean") return Reduction::batch_mean;
    if (name == "mean") return Reduction::mean;
    throw Error(ErrorKind::usage, "unknown reduction '" + name + "'");
}

AaeModel make_model(std::size_t n_latent, std::size_t n_cond, Activation activation, double lambda,
                    std::uint64_t seed) {
    if (n_latent + n_cond < 1) throw Error(ErrorKind::config, "model needs at least one code dimension");
    std::seed_seq seq{seed, std::uint64_t{0x1d17}};
    std::mt19937_64 rng(seq);
    AaeModel m;
    m.encoder = make_mlp2(kFrameLen, kHiddenWidth, n_latent + n_cond, activation, rng);
    m.decoder = make_mlp2(n_latent + n_cond, kHiddenWidth, kFrameLen, activation, rng);
    m.discriminator = make_mlp2(n_latent, kHiddenWidth, 1, activation, rng);
    m.n_latent = n_latent;
    m.n_cond = n_cond;
    m.lambda = lambda;
    m.seed = seed;
    for (auto& s : m.stats.std) s = 1.0f;
    return m;
}

AaeModel make_model(const ExperimentCondition& condition, Activation activation, double lambda, std::uint64_t seed) {
    auto m = make_model(condition.n_latent, condition.n_cond, activation, lambda, seed);
    m.condition = std::string(condition.name);
    return m;
}

namespace {

void fnv(std::uint64_t& h, const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
}

void fnv(std::uint64_t& h, const Mlp2& net) {
    fnv(h, net.layer1.w.data.data(), net.layer1.w.data.size() * sizeof(double));
    fnv(h, net.layer1.b.data(), net.layer1.b.size() * sizeof(double));
    fnv(h, net.layer2.w.data.data(), net.layer2.w.data.size() * sizeof(double));
    fnv(h, net.layer2.b.data(), net.layer2.b.size() * sizeof(double));
}

double sigmoid(double a) noexcept {
    if (a >= 0.0) return 1.0 / (1.0 + std::exp(-a));
    const double e = std::exp(a);
    return e / (1.0 + e);
}

Matrix columns(const Matrix& m, std::size_t first, std::size_t count) {
    Matrix out(m.rows, count);
    for (std::size_t r = 0; r < m.rows; ++r)
        for (std::size_t c = 0; c < count; ++c) out(r, c) = m(r, first + c);
    return out;
}

void scale(Mlp2Grads& g, double s) {
    for (auto& v : g.dw1.data) v *= s;
    for (auto& v : g.db1) v *= s;
    for (auto& v : g.dw2.data) v *= s;
    for (auto& v : g.db2) v *= s;
}

// Divisor applied to a term summing `rows` x `dims` elements.
double reduction_scale(Reduction r, std::size_t rows, std::size_t dims = 1) {
    if (r == Reduction::sum || rows == 0 || dims == 0) return 1.0;
    if (r == Reduction::batch_mean) return 1.0 / static_cast<double>(rows);
    return 1.0 / static_cast<double>(rows * dims);
}

void require_adversarial(const AaeModel& model) {
    if (model.n_latent == 0) throw Error(ErrorKind::usage, "adversarial losses need at least one latent dimension");
}

}  // namespace

std::uint64_t model_fingerprint(const AaeModel& model) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    fnv(h, model.encoder);
    fnv(h, model.decoder);
    fnv(h, model.discriminator);
    return h;
}

double softplus(double a) noexcept { return std::max(a, 0.0) + std::log1p(std::exp(-std::abs(a))); }

AeLoss loss_ae(const AaeModel& model, const Matrix& x, const Matrix& y, Reduction reduction) {
    if (x.cols != model.encoder.in_dim() || x.cols != model.decoder.out_dim()) {
        throw Error(ErrorKind::shape, "loss_ae: x width does not match the encoder input");
    }
    if (model.n_cond > 0 && (y.rows != x.rows || y.cols != model.n_cond)) {
        throw Error(ErrorKind::shape, "loss_ae: y must be batch x n_cond");
    }
    Mlp2Cache enc_cache;
    Mlp2Cache dec_cache;
    const Matrix code = mlp_forward(model.encoder, x, &enc_cache);
    const Matrix x_hat = mlp_forward(model.decoder, code, &dec_cache);

    AeLoss loss;
    const double sx = reduction_scale(reduction, x.rows, x.cols);
    const double sy = reduction_scale(reduction, x.rows, model.n_cond);
    Matrix grad_xhat(x.rows, x.cols);
    for (std::size_t i = 0; i < x.data.size(); ++i) {
        const double r = x_hat.data[i] - x.data[i];
        loss.value += sx * r * r;
        grad_xhat.data[i] = 2.0 * sx * r;
    }
    auto dec = mlp_backward(model.decoder, dec_cache, grad_xhat);
    Matrix& grad_code = dec.grad_x;
    const std::size_t n = model.n_latent;
    for (std::size_t r = 0; r < x.rows && model.n_cond > 0; ++r) {
        for (std::size_t c = 0; c < model.n_cond; ++c) {
            const double e = code(r, n + c) - y(r, c);
            loss.value += sy * model.lambda * e * e;
            grad_code(r, n + c) += 2.0 * sy * model.lambda * e;
        }
    }
    auto enc = mlp_backward(model.encoder, enc_cache, grad_code);
    loss.encoder = std::move(enc.grads);
    loss.decoder = std::move(dec.grads);
    return loss;
}

GenLoss loss_g(const AaeModel& model, const Matrix& x, Reduction reduction) {
    require_adversarial(model);
    Mlp2Cache enc_cache;
    Mlp2Cache disc_cache;
    const Matrix code = mlp_forward(model.encoder, x, &enc_cache);
    const Matrix z = columns(code, 0, model.n_latent);
    const Matrix logits = mlp_forward(model.discriminator, z, &disc_cache);

    GenLoss loss;
    Matrix grad_logits(logits.rows, 1);
    for (std::size_t r = 0; r < logits.rows; ++r) {
        loss.value += softplus(-logits(r, 0));
        grad_logits(r, 0) = sigmoid(logits(r, 0)) - 1.0;
    }
    const auto disc = mlp_backward(model.discriminator, disc_cache, grad_logits);
    Matrix grad_code(code.rows, code.cols);
    for (std::size_t r = 0; r < code.rows; ++r)
        for (std::size_t c = 0; c < model.n_latent; ++c) grad_code(r, c) = disc.grad_x(r, c);
    loss.encoder = mlp_backward(model.encoder, enc_cache, grad_code).grads;

    const double s = reduction_scale(reduction, x.rows);
    loss.value *= s;
    scale(loss.encoder, s);
    return loss;
}

DiscLoss loss_d(const AaeModel& model, const Matrix& x, const Matrix& z_prior, Reduction reduction) {
    require_adversarial(model);
    if (z_prior.rows != x.rows || z_prior.cols != model.n_latent) {
        throw Error(ErrorKind::shape, "loss_d: prior batch must be batch x n_latent");
    }
    const Matrix z_fake = columns(mlp_forward(model.encoder, x), 0, model.n_latent);
    Mlp2Cache real_cache;
    Mlp2Cache fake_cache;
    const Matrix real = mlp_forward(model.discriminator, z_prior, &real_cache);
    const Matrix fake = mlp_forward(model.discriminator, z_fake, &fake_cache);

    DiscLoss loss;
    Matrix grad_real(real.rows, 1);
    Matrix grad_fake(fake.rows, 1);
    for (std::size_t r = 0; r < real.rows; ++r) {
        loss.value += softplus(-real(r, 0)) + softplus(fake(r, 0));
        grad_real(r, 0) = sigmoid(real(r, 0)) - 1.0;
        grad_fake(r, 0) = sigmoid(fake(r, 0));
    }
    loss.discriminator = mlp_backward(model.discriminator, real_cache, grad_real).grads;
    loss.discriminator += mlp_backward(model.discriminator, fake_cache, grad_fake).grads;

    const double s = reduction_scale(reduction, x.rows);
    loss.value *= s;
    scale(loss.discriminator, s);
    return loss;
}

Matrix sample_prior(std::mt19937_64& rng, std::size_t rows, std::size_t n) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Matrix z(rows, n);
    for (auto& v : z.data) v = u(rng);
    return z;
}

BatchReport train_batch(AaeModel& model, const Matrix& x, const Matrix& y, const Matrix& z_prior, bool adversarial,
                        const TrainConfig& config, std::size_t batch_index) {
    BatchReport report;
    {
        const auto ae = loss_ae(model, x, y, config.reduction);
        if (!std::isfinite(ae.value)) throw DivergenceError(batch_index, "autoencoder loss is not finite");
        report.l_ae = ae.value;
        sgd_step(model.encoder, ae.encoder, {config.lr_ae});
        sgd_step(model.decoder, ae.decoder, {config.lr_ae});
    }
    if (!adversarial || model.n_latent == 0) return report;
    {
        const auto g = loss_g(model, x, config.reduction);
        if (!std::isfinite(g.value)) throw DivergenceError(batch_index, "generator loss is not finite");
        report.l_g = g.value;
        sgd_step(model.encoder, g.encoder, {config.lr_g});
    }
    {
        const auto d = loss_d(model, x, z_prior, config.reduction);
        if (!std::isfinite(d.value)) throw DivergenceError(batch_index, "discriminator loss is not finite");
        report.l_d = d.value;
        sgd_step(model.discriminator, d.discriminator, {config.lr_d});
    }
    return report;
}

std::vector<double> condition_labels(const PeriodWindow& window, std::size_t n_cond) {
    const std::array<double, 2> all{scale_param(window.params.pressure), scale_param(window.params.position)};
    if (n_cond > all.size()) throw Error(ErrorKind::config, "at most two conditional labels exist");
    return {all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n_cond)};
}

BatchData gather_batch(const Corpus& corpus, std::span<const std::size_t> indices, std::size_t n_cond) {
    BatchData b{Matrix(indices.size(), kFrameLen), Matrix(indices.size(), n_cond)};
    for (std::size_t r = 0; r < indices.size(); ++r) {
        const auto& w = corpus.windows.at(indices[r]);
        std::copy(w.normalized.begin(), w.normalized.end(), b.x.row(r).begin());
        const auto labels = condition_labels(w, n_cond);
        std::copy(labels.begin(), labels.end(), b.y.row(r).begin());
    }
    return b;
}

Split split_holdout(std::size_t n, double holdout_fraction, std::uint64_t seed) {
    if (!(holdout_fraction >= 0.0 && holdout_fraction < 1.0)) {
        throw Error(ErrorKind::config, "holdout fraction must lie in [0,1)");
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::seed_seq seq{seed, std::uint64_t{0x5b11}};
    std::mt19937_64 rng(seq);
    std::shuffle(order.begin(), order.end(), rng);
    const auto n_hold = static_cast<std::size_t>(std::llround(holdout_fraction * static_cast<double>(n)));
    Split split;
    split.train.assign(order.begin(), order.end() - static_cast<std::ptrdiff_t>(n_hold));
    split.holdout.assign(order.end() - static_cast<std::ptrdiff_t>(n_hold), order.end());
    return split;
}

TrainResult train(const Corpus& corpus, const ExperimentCondition& condition, const TrainConfig& config,
                  const ProgressFn& progress) {
    if (corpus.windows.empty()) throw Error(ErrorKind::corpus, "cannot train on an empty corpus");
    if (config.batch_size == 0 || config.n_batches == 0) throw Error(ErrorKind::config, "batch size and count must be positive");
    if (!(config.lr_ae > 0.0 && config.lr_g > 0.0 && config.lr_d > 0.0)) {
        throw Error(ErrorKind::config, "learning rates must be positive");
    }

    TrainResult result;
    result.split = split_holdout(corpus.windows.size(), config.holdout_fraction, config.seed);
    if (result.split.train.empty()) throw Error(ErrorKind::corpus, "no training windows after the holdout split");

    AaeModel& model = result.model;
    model = make_model(condition, config.activation, config.lambda, config.seed);
    model.stats = corpus.stats;
    model.corpus_hash = corpus_hash(corpus);
    model.holdout_indices = result.split.holdout;

    std::seed_seq batch_seq{config.seed, std::uint64_t{0xba7c}};
    std::mt19937_64 batch_rng(batch_seq);
    std::seed_seq prior_seq{config.seed, std::uint64_t{0x9e10}};
    std::mt19937_64 prior_rng(prior_seq);

    std::vector<std::size_t> order = result.split.train;
    std::size_t cursor = order.size();
    std::vector<std::size_t> batch(config.batch_size);
    result.reports.reserve(config.n_batches);

    for (std::size_t b = 0; b < config.n_batches; ++b) {
        for (auto& idx : batch) {
            if (cursor == order.size()) {
                std::shuffle(order.begin(), order.end(), batch_rng);
                cursor = 0;
            }
            idx = order[cursor++];
        }
        const auto data = gather_batch(corpus, batch, condition.n_cond);
        const Matrix z = sample_prior(prior_rng, config.batch_size, condition.n_latent);
        result.reports.push_back(train_batch(model, data.x, data.y, z, condition.adversarial, config, b));
        if (progress) progress(b, result.reports.back());
    }
    return result;
}

Encoded encode(const AaeModel& model, const Matrix& x) {
    const Matrix code = mlp_forward(model.encoder, x);
    return {columns(code, 0, model.n_latent), columns(code, model.n_latent, model.n_cond)};
}

Matrix decode(const AaeModel& model, const Matrix& z, const Matrix& y) {
    if (z.cols != model.n_latent || y.cols != model.n_cond || (model.n_latent > 0 && model.n_cond > 0 && z.rows != y.rows)) {
        throw Error(ErrorKind::shape, "decode: z/y shapes do not match the model");
    }
    const std::size_t rows = model.n_latent > 0 ? z.rows : y.rows;
    Matrix code(rows, model.code_dim());
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < model.n_latent; ++c) code(r, c) = z(r, c);
        for (std::size_t c = 0; c < model.n_cond; ++c) code(r, model.n_latent + c) = y(r, c);
    }
    return mlp_forward(model.decoder, code);
}

double reconstruction_mse(const AaeModel& model, const Corpus& corpus, std::span<const std::size_t> indices) {
    if (indices.empty()) throw Error(ErrorKind::range, "reconstruction_mse needs at least one window");
    const auto data = gather_batch(corpus, indices, 0);
    const Matrix code = mlp_forward(model.encoder, data.x);
    const Matrix x_hat = mlp_forward(model.decoder, code);
    double acc = 0.0;
    for (std::size_t i = 0; i < x_hat.data.size(); ++i) {
        const double r = x_hat.data[i] - data.x.data[i];
        acc += r * r;
    }
    return acc / static_cast<double>(x_hat.data.size());
}

// --- checkpoint -----------------------------------------------------------

namespace {

using nlohmann::json;

json matrix_to_json(const Matrix& m) {
    json rows = json::array();
    for (std::size_t r = 0; r < m.rows; ++r) rows.push_back(std::vector<double>(m.row(r).begin(), m.row(r).end()));
    return rows;
}

Matrix matrix_from_json(const json& j, std::size_t rows, std::size_t cols, const char* name) {
    if (!j.is_array() || j.size() != rows) throw Error(ErrorKind::format, std::string(name) + " has the wrong row count");
    Matrix m(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
        const auto row = j[r].get<std::vector<double>>();
        if (row.size() != cols) throw Error(ErrorKind::format, std::string(name) + " has the wrong column count");
        std::copy(row.begin(), row.end(), m.row(r).begin());
    }
    return m;
}

std::vector<double> vector_from_json(const json& j, std::size_t n, const char* name) {
    auto v = j.get<std::vector<double>>();
    if (v.size() != n) throw Error(ErrorKind::format, std::string(name) + " has the wrong length");
    return v;
}

Frame frame_from_json(const json& j, const char* name) {
    const auto v = j.get<std::vector<float>>();
    if (v.size() != kFrameLen) throw Error(ErrorKind::format, std::string(name) + " must hold 200 values");
    Frame f;
    std::copy(v.begin(), v.end(), f.begin());
    return f;
}

}  // namespace

std::string serialize_model(const AaeModel& m) {
    json j;
    j["version"] = kCheckpointVersion;
    j["condition"] = m.condition;
    j["n_latent"] = m.n_latent;
    j["n_cond"] = m.n_cond;
    j["lambda"] = m.lambda;
    j["activation"] = to_string(m.activation());
    j["seed"] = m.seed;
    j["corpus_hash"] = m.corpus_hash;
    j["norm_mean"] = std::vector<float>(m.stats.mean.begin(), m.stats.mean.end());
    j["norm_std"] = std::vector<float>(m.stats.std.begin(), m.stats.std.end());
    const std::array<const Mlp2*, 3> nets{&m.encoder, &m.decoder, &m.discriminator};
    for (std::size_t i = 0; i < nets.size(); ++i) {
        j["w" + std::to_string(2 * i + 1)] = matrix_to_json(nets[i]->layer1.w);
        j["b" + std::to_string(2 * i + 1)] = nets[i]->layer1.b;
        j["w" + std::to_string(2 * i + 2)] = matrix_to_json(nets[i]->layer2.w);
        j["b" + std::to_string(2 * i + 2)] = nets[i]->layer2.b;
    }
    j["holdout_indices"] = m.holdout_indices;
    return j.dump(1);
}

AaeModel deserialize_model(const std::string& text) {
    try {
        const json j = json::parse(text);
        if (j.at("version").get<int>() != kCheckpointVersion) throw Error(ErrorKind::format, "unsupported checkpoint version");
        AaeModel m;
        m.condition = j.at("condition").get<std::string>();
        m.n_latent = j.at("n_latent").get<std::size_t>();
        m.n_cond = j.at("n_cond").get<std::size_t>();
        if (m.n_latent + m.n_cond < 1) throw Error(ErrorKind::format, "checkpoint has no code dimensions");
        m.lambda = j.at("lambda").get<double>();
        const Activation act = activation_from_string(j.at("activation").get<std::string>());
        m.seed = j.at("seed").get<std::uint64_t>();
        m.corpus_hash = j.at("corpus_hash").get<std::string>();
        m.stats.mean = frame_from_json(j.at("norm_mean"), "norm_mean");
        m.stats.std = frame_from_json(j.at("norm_std"), "norm_std");
        const std::size_t code = m.code_dim();
        const std::array<std::pair<std::size_t, std::size_t>, 3> dims{{{kFrameLen, code}, {code, kFrameLen}, {m.n_latent, 1}}};
        const std::array<Mlp2*, 3> nets{&m.encoder, &m.decoder, &m.discriminator};
        for (std::size_t i = 0; i < nets.size(); ++i) {
            const auto w1 = "w" + std::to_string(2 * i + 1);
            const auto b1 = "b" + std::to_string(2 * i + 1);
            const auto w2 = "w" + std::to_string(2 * i + 2);
            const auto b2 = "b" + std::to_string(2 * i + 2);
            nets[i]->activation = act;
            nets[i]->layer1.w = matrix_from_json(j.at(w1), dims[i].first, kHiddenWidth, w1.c_str());
            nets[i]->layer1.b = vector_from_json(j.at(b1), kHiddenWidth, b1.c_str());
            nets[i]->layer2.w = matrix_from_json(j.at(w2), kHiddenWidth, dims[i].second, w2.c_str());
            nets[i]->layer2.b = vector_from_json(j.at(b2), dims[i].second, b2.c_str());
        }
        m.holdout_indices = j.at("holdout_indices").get<std::vector<std::size_t>>();
        return m;
    } catch (const json::exception& e) {
        throw Error(ErrorKind::format, std::string("malformed checkpoint: ") + e.what());
    }
}

void save_model(const AaeModel& model, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error(ErrorKind::format, "cannot open " + path.string() + " for writing");
    out << serialize_model(model) << '\n';
    if (!out) throw Error(ErrorKind::format, "failed writing " + path.string());
}

AaeModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::format, "cannot open checkpoint " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return deserialize_model(ss.str());
}

}  // namespace sounderfeit
