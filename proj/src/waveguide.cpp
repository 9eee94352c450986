#include "sounderfeit/waveguide.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "sounderfeit/error.hpp"

namespace sounderfeit {

void BowParams::validate() const {
    auto check_raw = [](double v, const char* name) {
        if (!(v >= 0.0 && v <= kRawControlMax)) {
            throw Error(ErrorKind::range, std::string(name) + " must lie in [0,128], got " + std::to_string(v));
        }
    };
    check_raw(pressure, "pressure");
    check_raw(velocity, "velocity");
    check_raw(position, "position");
    if (!(frequency >= 20.0 && frequency <= 10000.0)) {
        throw Error(ErrorKind::range, "frequency must lie in [20,10000] Hz, got " + std::to_string(frequency));
    }
}

FractionalDelay::FractionalDelay(std::size_t max_delay) : buffer_(max_delay + 2, 0.0) {}

void FractionalDelay::set_delay(double delay) {
    if (!(delay >= 0.0 && delay <= static_cast<double>(buffer_.size() - 2))) {
        throw Error(ErrorKind::config, "delay " + std::to_string(delay) + " outside line capacity");
    }
    delay_ = delay;
    whole_ = static_cast<std::size_t>(delay);
    frac_ = delay - static_cast<double>(whole_);
}

double FractionalDelay::tick(double input) noexcept {
    const std::size_t n = buffer_.size();
    buffer_[write_] = input;
    const std::size_t a = (write_ + n - whole_) % n;
    const std::size_t b = (a + n - 1) % n;
    last_out_ = (1.0 - frac_) * buffer_[a] + frac_ * buffer_[b];
    write_ = (write_ + 1) % n;
    return last_out_;
}

void FractionalDelay::clear() noexcept {
    std::fill(buffer_.begin(), buffer_.end(), 0.0);
    last_out_ = 0.0;
}

namespace {

std::size_t line_capacity(double sample_rate) { return static_cast<std::size_t>(sample_rate / 20.0) + 8; }

}  // namespace

BowedString::BowedString(double frequency, double sample_rate)
    : sample_rate_(sample_rate),
      frequency_(frequency),
      neck_(line_capacity(sample_rate)),
      bridge_(line_capacity(sample_rate)) {
    if (sample_rate != kSampleRate) {
        throw Error(ErrorKind::config, "sample rate must be 48000 Hz");
    }
    if (!(frequency >= 20.0 && frequency <= 10000.0)) {
        throw Error(ErrorKind::config, "frequency must lie in [20,10000] Hz");
    }
    const double w = 2.0 * std::numbers::pi * kBodyFrequency / sample_rate_;
    body_a2_ = kBodyRadius * kBodyRadius;
    body_a1_ = -2.0 * kBodyRadius * std::cos(w);
    body_b0_ = 0.5 - 0.5 * body_a2_;
    body_b2_ = -body_b0_;
    set_tuning(frequency, beta_ratio(current_.position));
}

double BowedString::reflection_phase_delay(double frequency) const noexcept {
    const double w = 2.0 * std::numbers::pi * frequency / sample_rate_;
    const double p = kReflectionPole;
    return std::atan2(p * std::sin(w), 1.0 - p * std::cos(w)) / w;
}

void BowedString::set_tuning(double frequency, double beta) {
    frequency_ = frequency;
    beta_ = beta;
    const double base = sample_rate_ / frequency - 2.0 - reflection_phase_delay(frequency);
    bridge_.set_delay(base * beta);
    neck_.set_delay(base * (1.0 - beta));
}

double BowedString::loop_delay() const noexcept {
    return neck_.delay() + bridge_.delay() + 2.0 + reflection_phase_delay(frequency_);
}

void BowedString::apply_params(const BowParams& params) {
    if (have_params_ && params == current_) return;
    params.validate();
    const bool retune = !have_params_ || params.frequency != current_.frequency || params.position != current_.position;
    current_ = params;
    have_params_ = true;
    slope_ = bow_slope(params.pressure);
    bow_down_ = params.pressure > 0.0;
    const double amplitude = params.velocity / kRawControlMax;
    max_velocity_ = 0.03 + 0.2 * amplitude;
    attack_rate_ = 0.001 * amplitude;
    if (retune) set_tuning(params.frequency, beta_ratio(params.position));
}

double BowedString::bow_table(double delta_v, double slope) noexcept {
    const double s = std::abs(delta_v * slope) + 0.75;
    const double s2 = s * s;
    return std::min(1.0, 1.0 / (s2 * s2));
}

double BowedString::tick(const BowParams& params) {
    if (!usable_) throw Error(ErrorKind::blowup, "waveguide state is unusable after a blowup");
    apply_params(params);

    envelope_ = std::min(1.0, envelope_ + attack_rate_);
    const double bow_velocity = max_velocity_ * envelope_;

    const double filtered = kReflectionGain * (1.0 - kReflectionPole) * bridge_.last_out()
                            + kReflectionPole * reflection_state_;
    reflection_state_ = filtered;
    const double bridge_reflection = -filtered;
    const double nut_reflection = -neck_.last_out();
    const double string_velocity = bridge_reflection + nut_reflection;
    const double delta_v = bow_velocity - string_velocity;

    double new_velocity = 0.0;
    if (bow_down_ && envelope_ > 0.0) new_velocity = delta_v * bow_table(delta_v, slope_);

    neck_.tick(bridge_reflection + new_velocity);
    const double into_body = bridge_.tick(nut_reflection + new_velocity);

    const double body = body_b0_ * into_body + body_b2_ * body_x2_ - body_a1_ * body_y1_ - body_a2_ * body_y2_;
    body_x2_ = body_x1_;
    body_x1_ = into_body;
    body_y2_ = body_y1_;
    body_y1_ = body;

    const double out = kOutputGain * body;
    if (!std::isfinite(out) || std::abs(out) >= kBlowupLimit) {
        usable_ = false;
        throw Error(ErrorKind::blowup, "waveguide output left the finite bound");
    }
    return out;
}

void BowedString::clear() noexcept {
    neck_.clear();
    bridge_.clear();
    reflection_state_ = 0.0;
    body_x1_ = body_x2_ = body_y1_ = body_y2_ = 0.0;
    envelope_ = 0.0;
    usable_ = true;
}

std::vector<double> render(const BowParams& params, double duration_seconds, double sample_rate) {
    if (!(duration_seconds > 0.0)) throw Error(ErrorKind::range, "render duration must be positive");
    params.validate();
    BowedString string(params.frequency, sample_rate);
    const auto n = static_cast<std::size_t>(std::llround(duration_seconds * sample_rate));
    std::vector<double> out(n);
    for (auto& s : out) s = string.tick(params);
    return out;
}

}  // namespace sounderfeit
