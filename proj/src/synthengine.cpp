#include "sounderfeit/synthengine.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "sounderfeit/error.hpp"

namespace sounderfeit {

std::vector<double> blackman(std::size_t n) {
    if (n < 2) throw Error(ErrorKind::range, "Blackman window needs at least 2 points");
    std::vector<double> w(n);
    const double m = static_cast<double>(n - 1);
    for (std::size_t k = 0; k < n; ++k) {
        const double x = static_cast<double>(k) / m;
        w[k] = 0.42 - 0.5 * std::cos(2.0 * std::numbers::pi * x) + 0.08 * std::cos(4.0 * std::numbers::pi * x);
    }
    w.front() = 0.0;
    w.back() = 0.0;
    return w;
}

std::vector<double> integrate(std::span<const double> diffs, double y0, double leak) {
    std::vector<double> y(diffs.size());
    double prev = y0;
    for (std::size_t i = 0; i < diffs.size(); ++i) prev = y[i] = diffs[i] + leak * prev;
    return y;
}

OlaState::OlaState() : window_(blackman(kWindowLen)) {
    for (std::size_t r = 0; r < kHop; ++r) {
        double e = 0.0;
        for (std::size_t k = r; k < kWindowLen; k += kHop) e += window_[k];
        envelope_[r] = e;
    }
}

void OlaState::push(std::span<const double> frame, std::span<double> out) noexcept {
    std::copy(carry_.begin(), carry_.end(), acc_.begin());
    std::fill(acc_.begin() + kCarryLen, acc_.end(), 0.0);
    for (std::size_t k = 0; k < kWindowLen; ++k) acc_[k] += window_[k] * frame[k];
    for (std::size_t i = 0; i < kHop; ++i) out[i] = acc_[i] / envelope_[i];
    std::copy(acc_.begin() + kHop, acc_.end(), carry_.begin());
}

void OlaState::clear() noexcept {
    carry_.fill(0.0);
    acc_.fill(0.0);
}

void ControlSnapshot::clamp() noexcept {
    for (auto& v : y) v = std::clamp(std::isnan(v) ? 0.0 : v, -1.0, 1.0);
    for (auto& v : z) v = std::clamp(std::isnan(v) ? 0.0 : v, -1.0, 1.0);
}

ControlSnapshot make_snapshot(const AaeModel& model) {
    return ControlSnapshot{std::vector<double>(model.n_cond, 0.0), std::vector<double>(model.n_latent, 0.0), 0.0};
}

SynthEngine::SynthEngine(const AaeModel& model)
    : model_(&model),
      code_(model.code_dim()),
      hidden_(model.decoder.layer1.b.size()),
      frame_(kWindowLen, 0.0) {
    if (model.decoder.layer2.b.size() != kFrameLen) throw Error(ErrorKind::shape, "decoder does not emit 200-sample frames");
}

void SynthEngine::reset() noexcept {
    ola_.clear();
    y_prev_ = 0.0;
    hops_ = 0;
}

void SynthEngine::decode_frame(const ControlSnapshot& snapshot) noexcept {
    std::copy(snapshot.z.begin(), snapshot.z.end(), code_.begin());
    std::copy(snapshot.y.begin(), snapshot.y.end(), code_.begin() + static_cast<std::ptrdiff_t>(model_->n_latent));
    mlp_forward_row(model_->decoder, code_, hidden_, std::span<double>(frame_).first(kFrameLen));
    const auto& stats = model_->stats;
    for (std::size_t i = 0; i < kFrameLen; ++i) frame_[i] = frame_[i] * stats.std[i] + stats.mean[i];
    frame_[kFrameLen] = 0.0;  // the window is zero there anyway
}

void SynthEngine::synth_block(const ControlSnapshot& snapshot, std::span<double> out) {
    if (snapshot.y.size() != model_->n_cond || snapshot.z.size() != model_->n_latent) {
        throw Error(ErrorKind::shape, "control snapshot dimensions do not match the model");
    }
    if (out.size() != kHop) throw Error(ErrorKind::length, "synth_block emits exactly one hop");
    decode_frame(snapshot);

    if (hops_ == 0) {
        // Start as if this frame had already been playing: fill the carry,
        // then seed the integrator with the periodic steady state so the
        // leak has no start-up transient.
        ola_.push(frame_, diffs_);
        ola_.push(frame_, diffs_);
        double acc = 0.0;
        double gain = 1.0;
        for (std::size_t j = 0; j < kHop; ++j) {
            acc += gain * diffs_[kHop - 1 - j];
            gain *= kIntegratorLeak;
        }
        y_prev_ = acc / (1.0 - gain);
    }
    ola_.push(frame_, diffs_);
    for (std::size_t i = 0; i < kHop; ++i) out[i] = y_prev_ = diffs_[i] + kIntegratorLeak * y_prev_;
    ++hops_;
}

// --- control curves -------------------------------------------------------

namespace {

std::vector<std::string> control_names(const AaeModel& model) {
    std::vector<std::string> names;
    for (std::size_t i = 0; i < model.n_cond; ++i) names.push_back("y" + std::to_string(i));
    for (std::size_t i = 0; i < model.n_latent; ++i) names.push_back("z" + std::to_string(i));
    return names;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        const auto b = cell.find_first_not_of(" \t\r");
        const auto e = cell.find_last_not_of(" \t\r");
        cells.push_back(b == std::string::npos ? std::string() : cell.substr(b, e - b + 1));
    }
    return cells;
}

double parse_number(const std::string& s) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size() || !std::isfinite(v)) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw Error(ErrorKind::format, "control script: bad number '" + s + "'");
    }
}

}  // namespace

ControlSnapshot ControlCurve::at(const AaeModel& model, double t) const {
    ControlSnapshot s = make_snapshot(model);
    s.timestamp = t;
    if (times.empty()) return s;
    std::vector<double> v;
    const auto hi = std::upper_bound(times.begin(), times.end(), t);
    if (hi == times.begin()) {
        v = rows.front();
    } else if (hi == times.end()) {
        v = rows.back();
    } else {
        const std::size_t j = static_cast<std::size_t>(hi - times.begin());
        const double a = (t - times[j - 1]) / (times[j] - times[j - 1]);
        v.resize(names.size());
        for (std::size_t c = 0; c < names.size(); ++c) v[c] = rows[j - 1][c] + a * (rows[j][c] - rows[j - 1][c]);
    }
    for (std::size_t c = 0; c < names.size(); ++c) {
        const auto idx = static_cast<std::size_t>(std::stoul(names[c].substr(1)));
        (names[c][0] == 'y' ? s.y : s.z)[idx] = v[c];
    }
    s.clamp();
    return s;
}

ControlCurve parse_control_csv(const std::string& text, const AaeModel& model) {
    std::stringstream in(text);
    std::string line;
    while (std::getline(in, line) && line.find_first_not_of(" \t\r") == std::string::npos) {
    }
    const auto header = split_csv_line(line);
    if (header.empty() || header.front() != "t") throw Error(ErrorKind::format, "control script must start with a 't' column");
    const auto valid = control_names(model);
    ControlCurve curve;
    for (std::size_t i = 1; i < header.size(); ++i) {
        if (std::find(valid.begin(), valid.end(), header[i]) == valid.end()) {
            throw Error(ErrorKind::format, "control script: model has no control named '" + header[i] + "'");
        }
        if (std::find(curve.names.begin(), curve.names.end(), header[i]) != curve.names.end()) {
            throw Error(ErrorKind::format, "control script: duplicate column '" + header[i] + "'");
        }
        curve.names.push_back(header[i]);
    }
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != header.size()) throw Error(ErrorKind::format, "control script: ragged row '" + line + "'");
        const double t = parse_number(cells[0]);
        if (!curve.times.empty() && t <= curve.times.back()) {
            throw Error(ErrorKind::format, "control script: times must be strictly increasing");
        }
        curve.times.push_back(t);
        std::vector<double> row;
        for (std::size_t i = 1; i < cells.size(); ++i) row.push_back(parse_number(cells[i]));
        curve.rows.push_back(std::move(row));
    }
    if (curve.times.empty()) throw Error(ErrorKind::format, "control script has no breakpoints");
    return curve;
}

ControlCurve constant_curve(const ControlSnapshot& snapshot) {
    ControlCurve curve;
    std::vector<double> row;
    for (std::size_t i = 0; i < snapshot.y.size(); ++i) {
        curve.names.push_back("y" + std::to_string(i));
        row.push_back(snapshot.y[i]);
    }
    for (std::size_t i = 0; i < snapshot.z.size(); ++i) {
        curve.names.push_back("z" + std::to_string(i));
        row.push_back(snapshot.z[i]);
    }
    curve.times.push_back(0.0);
    curve.rows.push_back(std::move(row));
    return curve;
}

std::vector<double> render_samples(const AaeModel& model, const ControlCurve& curve, double duration) {
    if (!(duration > 0.0) || !std::isfinite(duration)) throw Error(ErrorKind::range, "render duration must be positive");
    const auto n = static_cast<std::size_t>(std::llround(duration * kSampleRate));
    std::vector<double> out(n);
    SynthEngine engine(model);
    std::array<double, kHop> block{};
    for (std::size_t start = 0; start < n; start += kHop) {
        const double t = static_cast<double>(start) / kSampleRate;
        engine.synth_block(curve.at(model, t), block);
        std::copy_n(block.begin(), std::min(kHop, n - start), out.begin() + static_cast<std::ptrdiff_t>(start));
    }
    return out;
}

namespace {

void put_u32(std::vector<std::uint8_t>& b, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) b.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u16(std::vector<std::uint8_t>& b, std::uint16_t v) {
    b.push_back(static_cast<std::uint8_t>(v));
    b.push_back(static_cast<std::uint8_t>(v >> 8));
}

}  // namespace

std::vector<std::uint8_t> wav_bytes(std::span<const double> samples, std::uint32_t sample_rate) {
    const auto data_size = static_cast<std::uint32_t>(samples.size() * 2);
    std::vector<std::uint8_t> b;
    b.reserve(kWavHeaderSize + data_size);
    for (char c : {'R', 'I', 'F', 'F'}) b.push_back(static_cast<std::uint8_t>(c));
    put_u32(b, 36 + data_size);
    for (char c : {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '}) b.push_back(static_cast<std::uint8_t>(c));
    put_u32(b, 16);
    put_u16(b, 1);  // PCM
    put_u16(b, 1);  // mono
    put_u32(b, sample_rate);
    put_u32(b, sample_rate * 2);
    put_u16(b, 2);
    put_u16(b, 16);
    for (char c : {'d', 'a', 't', 'a'}) b.push_back(static_cast<std::uint8_t>(c));
    put_u32(b, data_size);
    for (double s : samples) {
        const double c = std::isnan(s) ? 0.0 : std::clamp(s, -1.0, 1.0);
        put_u16(b, static_cast<std::uint16_t>(static_cast<std::int16_t>(std::lround(c * 32767.0))));
    }
    return b;
}

void write_wav(const std::filesystem::path& path, std::span<const double> samples) {
    const auto bytes = wav_bytes(samples);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::format, "cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorKind::format, "failed writing " + path.string());
}

void render_wav(const AaeModel& model, const ControlCurve& curve, double duration, const std::filesystem::path& path) {
    write_wav(path, render_samples(model, curve, duration));
}

}  // namespace sounderfeit
