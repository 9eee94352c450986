#pragma once

#include <array>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "sounderfeit/adversarial.hpp"

namespace sounderfeit {

inline constexpr std::size_t kHop = 100;
inline constexpr std::size_t kCarryLen = kWindowLen - kHop;  // 101
inline constexpr double kIntegratorLeak = 0.995;

std::vector<double> blackman(std::size_t n = kWindowLen);

// y[i] = diffs[i] + leak * y[i-1], with y[-1] = y0.
std::vector<double> integrate(std::span<const double> diffs, double y0, double leak = kIntegratorLeak);

// Overlap-add of 201-sample frames at a 100-sample hop, divided by the
// window-sum envelope so a constant frame comes out constant.
class OlaState {
public:
    OlaState();

    // Adds `frame` (201 samples) at the current hop and writes the next
    // 100 compensated samples to `out`.
    void push(std::span<const double> frame, std::span<double> out) noexcept;
    void clear() noexcept;

    const std::vector<double>& window() const { return window_; }
    const std::array<double, kHop>& envelope() const { return envelope_; }
    const std::array<double, kCarryLen>& carry() const { return carry_; }

private:
    std::vector<double> window_;
    std::array<double, kHop> envelope_{};
    std::array<double, kCarryLen> carry_{};
    std::array<double, kWindowLen> acc_{};
};

struct ControlSnapshot {
    std::vector<double> y;
    std::vector<double> z;
    double timestamp = 0.0;

    void clamp() noexcept;
    friend bool operator==(const ControlSnapshot&, const ControlSnapshot&) = default;
};

ControlSnapshot make_snapshot(const AaeModel& model);

// Decoder-driven synthesizer. One decode per hop; the Blackman crossfade
// between consecutive frames smooths control changes over a hop.
class SynthEngine {
public:
    explicit SynthEngine(const AaeModel& model);

    // Emits the next kHop samples. Throws a shape error when the snapshot
    // dimensions do not match the model. Does not allocate.
    void synth_block(const ControlSnapshot& snapshot, std::span<double> out);

    void reset() noexcept;
    std::uint64_t hops() const { return hops_; }
    const AaeModel& model() const { return *model_; }

private:
    void decode_frame(const ControlSnapshot& snapshot) noexcept;

    const AaeModel* model_;
    OlaState ola_;
    std::vector<double> code_;
    std::vector<double> hidden_;
    std::vector<double> frame_;
    std::array<double, kHop> diffs_{};
    double y_prev_ = 0.0;
    std::uint64_t hops_ = 0;
};

// Latest-value mailbox: one writer, one reader, both wait-free. The reader
// sees the most recent completed publish.
template <class T>
class TripleBuffer {
public:
    explicit TripleBuffer(const T& initial = T{}) : slots_{initial, initial, initial} {}

    // Writer side.
    T& back() { return slots_[back_]; }
    void publish() { back_ = middle_.exchange(back_ | kFresh, std::memory_order_acq_rel) & kIndex; }
    void publish(const T& value) {
        back() = value;
        publish();
    }

    // Reader side. Returns true when a new value was taken.
    bool update() {
        if (!(middle_.load(std::memory_order_relaxed) & kFresh)) return false;
        front_ = middle_.exchange(front_, std::memory_order_acq_rel) & kIndex;
        return true;
    }
    const T& front() const { return slots_[front_]; }

private:
    static constexpr unsigned kFresh = 4;
    static constexpr unsigned kIndex = 3;
    std::array<T, 3> slots_;
    unsigned front_ = 0;
    unsigned back_ = 1;
    std::atomic<unsigned> middle_{2};
};

// Piecewise-linear control curve over time in seconds. Values before the
// first breakpoint hold the first row, after the last hold the last row.
struct ControlCurve {
    std::vector<std::string> names;  // y0.., z0..
    std::vector<double> times;
    std::vector<std::vector<double>> rows;

    ControlSnapshot at(const AaeModel& model, double t) const;
};

// Parses `t,y0,y1,z0,...`. Columns not present default to 0; names the
// model does not have are a format error.
ControlCurve parse_control_csv(const std::string& text, const AaeModel& model);
ControlCurve constant_curve(const ControlSnapshot& snapshot);

std::vector<double> render_samples(const AaeModel& model, const ControlCurve& curve, double duration);

inline constexpr std::size_t kWavHeaderSize = 44;
std::vector<std::uint8_t> wav_bytes(std::span<const double> samples, std::uint32_t sample_rate = kSampleRate);
void write_wav(const std::filesystem::path& path, std::span<const double> samples);

// Renders `duration` seconds and writes a 16-bit mono WAV.
void render_wav(const AaeModel& model, const ControlCurve& curve, double duration, const std::filesystem::path& path);

}  // namespace sounderfeit
