#pragma once

#include <cstddef>
#include <vector>

namespace sounderfeit {

inline constexpr double kSampleRate = 48000.0;
inline constexpr double kRawControlMax = 128.0;

// The four STK-style controls. Pressure, velocity and position are raw 0..128
// values; frequency is in Hz.
struct BowParams {
    double pressure = 64.0;
    double velocity = 100.0;
    double position = 32.0;
    double frequency = 476.5;

    // Throws Error(range) when a control leaves its legal domain.
    void validate() const;

    friend bool operator==(const BowParams&, const BowParams&) = default;
};

// Delay line read with linear interpolation. Delay d yields out[n] = in[n - d].
class FractionalDelay {
public:
    explicit FractionalDelay(std::size_t max_delay = 4096);

    void set_delay(double delay);
    double delay() const noexcept { return delay_; }
    double tick(double input) noexcept;
    double last_out() const noexcept { return last_out_; }
    void clear() noexcept;

private:
    std::vector<double> buffer_;
    std::size_t write_ = 0;
    double delay_ = 0.0;
    std::size_t whole_ = 0;
    double frac_ = 0.0;
    double last_out_ = 0.0;
};

// Bowed-string digital waveguide: nut-side and bridge-side delay lines meet at
// the bow point, a one-pole lowpass models string losses at the bridge, a
// two-pole resonator stands in for the body, and a memoryless friction table
// couples bow and string.
class BowedString {
public:
    static constexpr double kReflectionGain = 0.95;
    static constexpr double kReflectionPole = 0.6;
    static constexpr double kBodyFrequency = 500.0;
    static constexpr double kBodyRadius = 0.85;
    static constexpr double kOutputGain = 0.6;
    static constexpr double kBlowupLimit = 10.0;

    BowedString(double frequency, double sample_rate = kSampleRate);

    // Advances the model by one sample. Throws Error(blowup) and marks the
    // state unusable when the output stops being finite or exceeds the limit.
    double tick(const BowParams& params);

    // Round-trip loop delay in samples: both delay lines, one sample of read
    // latency per line, and the reflection filter's phase delay at the
    // fundamental.
    double loop_delay() const noexcept;

    double frequency() const noexcept { return frequency_; }
    double sample_rate() const noexcept { return sample_rate_; }
    double neck_delay() const noexcept { return neck_.delay(); }
    double bridge_delay() const noexcept { return bridge_.delay(); }
    bool usable() const noexcept { return usable_; }

    void clear() noexcept;

    // Friction curve: min(1, (|dv * slope| + 0.75)^-4).
    static double bow_table(double delta_v, double slope) noexcept;
    static double bow_slope(double pressure) noexcept { return 5.0 - 4.0 * (pressure / kRawControlMax); }
    static double beta_ratio(double position) noexcept { return 0.027 + 0.2 * (position / kRawControlMax); }

private:
    void apply_params(const BowParams& params);
    void set_tuning(double frequency, double beta);
    double reflection_phase_delay(double frequency) const noexcept;

    double sample_rate_;
    double frequency_;
    double beta_ = 0.0;
    double slope_ = 0.0;
    bool bow_down_ = false;
    bool usable_ = true;
    bool have_params_ = false;
    BowParams current_{};

    FractionalDelay neck_;
    FractionalDelay bridge_;

    // One-pole reflection filter memory.
    double reflection_state_ = 0.0;

    // Body biquad (direct form I) coefficients and memory.
    double body_b0_ = 0.0, body_b2_ = 0.0, body_a1_ = 0.0, body_a2_ = 0.0;
    double body_x1_ = 0.0, body_x2_ = 0.0, body_y1_ = 0.0, body_y2_ = 0.0;

    // Bow velocity envelope: linear attack to 1, then held.
    double envelope_ = 0.0;
    double attack_rate_ = 0.0;
    double max_velocity_ = 0.0;
};

// Renders duration seconds from a fresh state at fixed parameters.
std::vector<double> render(const BowParams& params, double duration_seconds,
                           double sample_rate = kSampleRate);

}  // namespace sounderfeit
