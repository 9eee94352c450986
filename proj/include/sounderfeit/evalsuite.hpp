#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sounderfeit/adversarial.hpp"

namespace sounderfeit {

// --- statistics -----------------------------------------------------------

// Kolmogorov-Smirnov statistic of a sample against U(lo, hi).
double ks_uniform(std::span<const double> sample, double lo, double hi);
double pearson(std::span<const double> a, std::span<const double> b);

// Root mean square of (estimate - truth) over all entries.
double rms_error(std::span<const double> truth, std::span<const double> estimate);

// --- parameter-estimation trajectory ---------------------------------------

enum class Segment { pressure_only, position_only, both };

struct TrajectoryPoint {
    BowParams truth;
    Segment segment = Segment::both;
    Frame normalized{};
    double rms = 0.0;  // of the aligned raw window, before de-meaning
};

struct TrajectoryOptions {
    std::size_t windows_per_phase = 100;
    std::size_t hold_samples = 4800;   // render time per window step
    std::size_t preroll_samples = 24000;
};

// Three phases from one continuous render: pressure sweeps 32 -> 112 at
// position 32, position sweeps 16 -> 112 at pressure 64, then both move
// sinusoidally (phase offsets drawn from `seed`). Each window is aligned to
// `reference`, differenced and standardized with `stats`.
std::vector<TrajectoryPoint> make_test_trajectory(const NormStats& stats, const RawWindow& reference,
                                                  std::uint64_t seed, const TrajectoryOptions& options = {});

std::vector<TrajectoryPoint> restrict_position_below(std::span<const TrajectoryPoint> trajectory, double limit);

struct Estimate {
    BowParams truth;
    std::vector<double> estimated_raw;  // unscaled y_hat, n_cond values
};

struct EvalReport {
    std::string condition;
    std::optional<double> rms_param_error;  // raw 0..128 units; empty when n_cond = 0
    std::optional<double> holdout_mse;
    std::vector<double> latent_ks;
    std::optional<double> latent_corr;  // z0 vs z1 when n_latent >= 2
};

// Encodes every trajectory window; RMS over windows and estimated dims:
// sqrt(mean((unscale(y_hat) - truth)^2)).
EvalReport eval_param_estimation(const AaeModel& model, std::span<const TrajectoryPoint> trajectory,
                                 std::vector<Estimate>* estimates = nullptr);

// Same metric on the position < 64 part of the trajectory; the model is
// expected to have been trained on the matching half corpus.
EvalReport eval_half_dataset(const AaeModel& model, std::span<const TrajectoryPoint> trajectory,
                             std::vector<Estimate>* estimates = nullptr);

// Corpus windows with position < 64, restandardized.
Corpus half_corpus(const Corpus& corpus);

// --- latent scatter -------------------------------------------------------

struct LatentScatter {
    Matrix z;                       // windows x n_latent
    std::vector<double> ks;         // per dim against U(-1,1)
    Matrix corr;                    // n_latent x n_latent Pearson
};

LatentScatter latent_scatter(const AaeModel& model, const Corpus& corpus, std::span<const std::size_t> indices);
LatentScatter latent_scatter(const AaeModel& model, const Corpus& corpus);

// Holdout MSE, latent statistics on the holdout and, when labels exist,
// trajectory RMS error.
EvalReport evaluate(const AaeModel& model, const Corpus& corpus, std::span<const TrajectoryPoint> trajectory);

// --- decoder grid ---------------------------------------------------------

struct GridCell {
    std::vector<double> y;
    std::vector<double> z;
    std::vector<double> waveform;  // 201 samples: unnormalized, integrated, de-meaned
};

// Cartesian product of y points and z points (y major). Empty lists stand
// for the single empty vector.
std::vector<GridCell> render_decoder_grid(const AaeModel& model, std::span<const std::vector<double>> y_points,
                                          std::span<const std::vector<double>> z_points);

// Frame of 200 normalized differences back to a de-meaned 201-sample period.
std::vector<double> frame_to_waveform(std::span<const double> normalized, const NormStats& stats);

// Pearson correlation of a waveform against the corpus window nearest in
// (pressure, position); returns that window's index too.
std::pair<double, std::size_t> nearest_window_correlation(const Corpus& corpus, std::span<const double> waveform,
                                                          double pressure, double position);

// --- emitters -------------------------------------------------------------

void write_trajectory_csv(const std::filesystem::path& path, std::span<const Estimate> estimates);
void write_scatter_csv(const std::filesystem::path& path, const LatentScatter& scatter);
void write_grid_csv(const std::filesystem::path& path, std::span<const GridCell> cells);
void write_report_csv(const std::filesystem::path& path, const EvalReport& report);

std::string trajectory_svg(std::span<const Estimate> estimates);
std::string scatter_svg(const LatentScatter& scatter);
std::string grid_svg(std::span<const GridCell> cells, std::size_t columns);

// Files written by write_eval_outputs, in order.
const std::vector<std::string>& eval_output_files();

// Runs the full evaluation of `model` against `corpus` and writes every file
// in eval_output_files() into `out_dir`.
EvalReport write_eval_outputs(const AaeModel& model, const Corpus& corpus, const std::filesystem::path& out_dir);

}  // namespace sounderfeit
