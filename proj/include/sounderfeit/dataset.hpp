#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sounderfeit/waveguide.hpp"

namespace sounderfeit {

inline constexpr std::size_t kWindowLen = 201;  // two periods at 476.5 Hz
inline constexpr std::size_t kFrameLen = 200;   // first differences of a window
inline constexpr std::size_t kAlignLags = 101;  // one full period of lag search
inline constexpr double kCorpusFrequency = 476.5;
inline constexpr double kCorpusVelocity = 100.0;
inline constexpr double kSilenceRms = 1e-5;
inline constexpr double kStdFloor = 1e-8;

using RawWindow = std::array<float, kWindowLen>;
using Frame = std::array<float, kFrameLen>;

struct PeriodWindow {
    RawWindow raw{};
    Frame diffed{};
    Frame normalized{};
    BowParams params{};  // values are float-representable

    friend bool operator==(const PeriodWindow&, const PeriodWindow&) = default;
};

struct NormStats {
    Frame mean{};
    Frame std{};

    friend bool operator==(const NormStats&, const NormStats&) = default;
};

enum class CorpusKind : std::uint8_t { bowed1 = 0, bowed2 = 1 };

struct Corpus {
    CorpusKind kind = CorpusKind::bowed1;
    std::uint64_t seed = 0;
    NormStats stats{};
    RawWindow reference{};
    std::vector<PeriodWindow> windows;

    static constexpr double sample_rate = kSampleRate;
    static constexpr std::size_t window_len = kWindowLen;

    friend bool operator==(const Corpus&, const Corpus&) = default;
};

// --- signal helpers -------------------------------------------------------

// Final 201 samples of a render. Throws Error(length) on shorter input.
std::vector<double> extract_last_two_periods(std::span<const double> signal);

struct Alignment {
    std::size_t lag = 0;
    double score = 0.0;
    std::vector<double> window;  // 201 samples cut from the tail at `lag`
};

// Candidate k is tail[k, k+201) for k in [0, lags). Returns the candidate
// whose de-meaned correlation with the reference is largest; ties and flat
// input resolve to the smallest lag.
Alignment phase_align(std::span<const double> reference, std::span<const double> source_tail,
                      std::size_t lags = kAlignLags);

// Score used by phase_align, exposed for exhaustive re-scan checks.
double alignment_score(std::span<const double> reference, std::span<const double> candidate);

std::vector<double> differentiate(std::span<const double> x);
double rms(std::span<const double> x);

// --- normalization --------------------------------------------------------

NormStats fit_norm_stats(std::span<const Frame> diffed);
std::vector<double> apply_norm(std::span<const double> diffed, const NormStats& stats);
std::vector<double> unapply_norm(std::span<const double> normalized, const NormStats& stats);

// Raw 0..128 control to [-1,1] and back.
double scale_param(double raw);
double unscale_param(double scaled);

// --- corpus building ------------------------------------------------------

// Anchor window: steady state at pressure 64, position 32, de-meaned.
RawWindow make_reference_window();

// Builds one window from an aligned 201-sample cut (de-means, differences).
// `normalized` is left zero until the corpus stats are known.
PeriodWindow make_window(std::span<const double> cut, const BowParams& params);

// Refits stats over all windows and rewrites every normalized field.
void renormalize(Corpus& corpus);

// Rendered, aligned window for one grid point; empty when rejected as silent.
std::optional<PeriodWindow> render_grid_point(double pressure, double position, std::span<const double> reference);

// Steady-state grid over pressure x position in [0,128]. The grid loop is
// OpenMP-parallel; build_bowed1_serial is the single-threaded reference.
Corpus build_bowed1(int grid_step, std::uint64_t seed);
Corpus build_bowed1_serial(int grid_step, std::uint64_t seed);

struct Bowed2Options {
    std::size_t hop = 2048;
    double min_interval = 0.1;  // seconds between parameter redraws
    double max_interval = 1.0;
};

// Continuous render with random redraws of pressure and position.
Corpus build_bowed2(std::size_t n_windows, std::uint64_t seed, const Bowed2Options& options = {});

// Windows satisfying `keep`, restandardized over the subset.
Corpus subset(const Corpus& corpus, const std::function<bool(const PeriodWindow&)>& keep);

// --- persistence ----------------------------------------------------------

inline constexpr std::uint32_t kCorpusVersion = 1;

std::vector<std::uint8_t> serialize_corpus(const Corpus& corpus);
Corpus deserialize_corpus(std::span<const std::uint8_t> bytes);
void save_corpus(const Corpus& corpus, const std::filesystem::path& path);
Corpus load_corpus(const std::filesystem::path& path);

std::size_t corpus_file_size(std::size_t n_windows);

// FNV-1a over the serialized corpus, as 16 hex digits.
std::string corpus_hash(const Corpus& corpus);

}  // namespace sounderfeit
