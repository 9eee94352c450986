#include "sounderfeit/evalsuite.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include "sounderfeit/error.hpp"

namespace sounderfeit {

double ks_uniform(std::span<const double> sample, double lo, double hi) {
    if (sample.empty()) throw Error(ErrorKind::range, "KS statistic of an empty sample");
    std::vector<double> v(sample.begin(), sample.end());
    std::sort(v.begin(), v.end());
    const double n = static_cast<double>(v.size());
    double d = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double cdf = std::clamp((v[i] - lo) / (hi - lo), 0.0, 1.0);
        d = std::max({d, cdf - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - cdf});
    }
    return d;
}

double pearson(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size() || a.size() < 2) throw Error(ErrorKind::length, "pearson needs two equal samples of size >= 2");
    const double n = static_cast<double>(a.size());
    const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
    const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    if (saa == 0.0 || sbb == 0.0) return 0.0;
    return sab / std::sqrt(saa * sbb);
}

double rms_error(std::span<const double> truth, std::span<const double> estimate) {
    if (truth.size() != estimate.size() || truth.empty()) throw Error(ErrorKind::length, "rms_error needs equal non-empty inputs");
    double acc = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const double d = estimate[i] - truth[i];
        acc += d * d;
    }
    return std::sqrt(acc / static_cast<double>(truth.size()));
}

// --- trajectory -----------------------------------------------------------

std::vector<TrajectoryPoint> make_test_trajectory(const NormStats& stats, const RawWindow& reference,
                                                  std::uint64_t seed, const TrajectoryOptions& options) {
    const std::size_t per = options.windows_per_phase;
    if (per < 2) throw Error(ErrorKind::config, "trajectory phases need at least 2 windows");
    const std::size_t span = kWindowLen + kAlignLags - 1;
    if (options.hold_samples < span) throw Error(ErrorKind::config, "hold time shorter than the alignment span");

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
    const double phi_pressure = phase(rng);
    const double phi_position = phase(rng);

    std::vector<std::pair<BowParams, Segment>> plan;
    plan.reserve(3 * per);
    auto params = [](double pressure, double position) {
        return BowParams{pressure, kCorpusVelocity, position, kCorpusFrequency};
    };
    for (std::size_t i = 0; i < per; ++i) {
        const double t = static_cast<double>(i) / static_cast<double>(per - 1);
        plan.emplace_back(params(32.0 + 80.0 * t, 32.0), Segment::pressure_only);
    }
    for (std::size_t i = 0; i < per; ++i) {
        const double t = static_cast<double>(i) / static_cast<double>(per - 1);
        plan.emplace_back(params(64.0, 16.0 + 96.0 * t), Segment::position_only);
    }
    for (std::size_t i = 0; i < per; ++i) {
        const double t = static_cast<double>(i) / static_cast<double>(per);
        const double pressure = 72.0 + 40.0 * std::sin(2.0 * std::numbers::pi * t + phi_pressure);
        const double position = 64.0 + 48.0 * std::sin(4.0 * std::numbers::pi * t + phi_position);
        plan.emplace_back(params(pressure, position), Segment::both);
    }

    const std::vector<double> ref(reference.begin(), reference.end());
    BowedString string(kCorpusFrequency);
    for (std::size_t i = 0; i < options.preroll_samples; ++i) string.tick(plan.front().first);

    std::vector<double> buffer(options.hold_samples);
    std::vector<TrajectoryPoint> out;
    out.reserve(plan.size());
    for (const auto& [p, segment] : plan) {
        for (auto& s : buffer) s = string.tick(p);
        const std::span<const double> all(buffer);
        const auto aligned = phase_align(ref, all.last(span));
        const PeriodWindow w = make_window(aligned.window, p);
        TrajectoryPoint point;
        point.truth = p;
        point.segment = segment;
        point.rms = rms(aligned.window);
        for (std::size_t i = 0; i < kFrameLen; ++i) {
            point.normalized[i] = static_cast<float>((static_cast<double>(w.diffed[i]) - stats.mean[i]) / stats.std[i]);
        }
        out.push_back(point);
    }
    return out;
}

std::vector<TrajectoryPoint> restrict_position_below(std::span<const TrajectoryPoint> trajectory, double limit) {
    std::vector<TrajectoryPoint> out;
    std::copy_if(trajectory.begin(), trajectory.end(), std::back_inserter(out),
                 [limit](const TrajectoryPoint& p) { return p.truth.position < limit; });
    return out;
}

EvalReport eval_param_estimation(const AaeModel& model, std::span<const TrajectoryPoint> trajectory,
                                 std::vector<Estimate>* estimates) {
    EvalReport report;
    report.condition = model.condition;
    if (model.n_cond == 0) return report;
    if (trajectory.empty()) throw Error(ErrorKind::range, "empty trajectory");
    Matrix x(trajectory.size(), kFrameLen);
    for (std::size_t r = 0; r < trajectory.size(); ++r)
        std::copy(trajectory[r].normalized.begin(), trajectory[r].normalized.end(), x.row(r).begin());
    const Encoded enc = encode(model, x);

    std::vector<double> truth;
    std::vector<double> est;
    if (estimates) estimates->clear();
    for (std::size_t r = 0; r < trajectory.size(); ++r) {
        const std::array<double, 2> t{trajectory[r].truth.pressure, trajectory[r].truth.position};
        Estimate e{trajectory[r].truth, {}};
        for (std::size_t c = 0; c < model.n_cond; ++c) {
            const double raw = unscale_param(enc.y_hat(r, c));
            truth.push_back(t[c]);
            est.push_back(raw);
            e.estimated_raw.push_back(raw);
        }
        if (estimates) estimates->push_back(std::move(e));
    }
    report.rms_param_error = rms_error(truth, est);
    return report;
}

EvalReport eval_half_dataset(const AaeModel& model, std::span<const TrajectoryPoint> trajectory,
                             std::vector<Estimate>* estimates) {
    const auto restricted = restrict_position_below(trajectory, 64.0);
    return eval_param_estimation(model, restricted, estimates);
}

Corpus half_corpus(const Corpus& corpus) {
    return subset(corpus, [](const PeriodWindow& w) { return w.params.position < 64.0; });
}

// --- latent scatter -------------------------------------------------------

LatentScatter latent_scatter(const AaeModel& model, const Corpus& corpus, std::span<const std::size_t> indices) {
    const auto data = gather_batch(corpus, indices, 0);
    LatentScatter s;
    s.z = encode(model, data.x).z;
    const std::size_t n = model.n_latent;
    std::vector<std::vector<double>> cols(n, std::vector<double>(s.z.rows));
    for (std::size_t r = 0; r < s.z.rows; ++r)
        for (std::size_t c = 0; c < n; ++c) cols[c][r] = s.z(r, c);
    for (std::size_t c = 0; c < n; ++c) s.ks.push_back(ks_uniform(cols[c], -1.0, 1.0));
    s.corr = Matrix(n, n, 1.0);
    for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = a + 1; b < n; ++b) s.corr(a, b) = s.corr(b, a) = pearson(cols[a], cols[b]);
    return s;
}

LatentScatter latent_scatter(const AaeModel& model, const Corpus& corpus) {
    std::vector<std::size_t> all(corpus.windows.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    return latent_scatter(model, corpus, all);
}

namespace {

// Holdout indices only apply to the corpus the model was trained on.
std::vector<std::size_t> eval_indices(const AaeModel& model, const Corpus& corpus) {
    if (!model.holdout_indices.empty() && model.corpus_hash == corpus_hash(corpus)) return model.holdout_indices;
    std::vector<std::size_t> all(corpus.windows.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    return all;
}

}  // namespace

EvalReport evaluate(const AaeModel& model, const Corpus& corpus, std::span<const TrajectoryPoint> trajectory) {
    EvalReport report = eval_param_estimation(model, trajectory);
    const auto indices = eval_indices(model, corpus);
    report.holdout_mse = reconstruction_mse(model, corpus, indices);
    if (model.n_latent > 0 && indices.size() >= 2) {
        const auto scatter = latent_scatter(model, corpus, indices);
        report.latent_ks = scatter.ks;
        if (model.n_latent >= 2) report.latent_corr = scatter.corr(0, 1);
    }
    return report;
}

// --- decoder grid ---------------------------------------------------------

std::vector<double> frame_to_waveform(std::span<const double> normalized, const NormStats& stats) {
    const auto diffs = unapply_norm(normalized, stats);
    std::vector<double> wave(kWindowLen, 0.0);
    for (std::size_t i = 0; i < kFrameLen; ++i) wave[i + 1] = wave[i] + diffs[i];
    const double mean = std::accumulate(wave.begin(), wave.end(), 0.0) / static_cast<double>(kWindowLen);
    for (auto& v : wave) v -= mean;
    return wave;
}

std::vector<GridCell> render_decoder_grid(const AaeModel& model, std::span<const std::vector<double>> y_points,
                                          std::span<const std::vector<double>> z_points) {
    const std::vector<std::vector<double>> empty{{}};
    const auto ys = y_points.empty() ? std::span<const std::vector<double>>(empty) : y_points;
    const auto zs = z_points.empty() ? std::span<const std::vector<double>>(empty) : z_points;
    const std::size_t cells = ys.size() * zs.size();
    Matrix y(cells, model.n_cond);
    Matrix z(cells, model.n_latent);
    std::vector<GridCell> out;
    out.reserve(cells);
    std::size_t r = 0;
    for (const auto& yv : ys) {
        for (const auto& zv : zs) {
            if (yv.size() != model.n_cond || zv.size() != model.n_latent) {
                throw Error(ErrorKind::shape, "grid point dimensions do not match the model");
            }
            std::copy(yv.begin(), yv.end(), y.row(r).begin());
            std::copy(zv.begin(), zv.end(), z.row(r).begin());
            out.push_back({yv, zv, {}});
            ++r;
        }
    }
    const Matrix frames = decode(model, z, y);
    for (std::size_t i = 0; i < cells; ++i) out[i].waveform = frame_to_waveform(frames.row(i), model.stats);
    return out;
}

std::pair<double, std::size_t> nearest_window_correlation(const Corpus& corpus, std::span<const double> waveform,
                                                          double pressure, double position) {
    if (corpus.windows.empty()) throw Error(ErrorKind::corpus, "empty corpus");
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < corpus.windows.size(); ++i) {
        const auto& p = corpus.windows[i].params;
        const double d = std::hypot(p.pressure - pressure, p.position - position);
        if (d < best_d) {
            best_d = d;
            best = i;
        }
    }
    const auto& raw = corpus.windows[best].raw;
    const std::vector<double> ref(raw.begin(), raw.end());
    return {pearson(waveform, ref), best};
}

// --- emitters -------------------------------------------------------------

namespace {

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error(ErrorKind::format, "cannot open " + path.string() + " for writing");
    return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    auto out = open_out(path);
    out << text;
}

// Maps a value range onto a pixel range, flipping y.
struct Axis {
    double lo, hi, p0, p1;
    double operator()(double v) const { return hi == lo ? (p0 + p1) / 2 : p0 + (v - lo) / (hi - lo) * (p1 - p0); }
};

std::string polyline(std::span<const double> xs, std::span<const double> ys, const Axis& ax, const Axis& ay,
                     const char* colour) {
    std::ostringstream os;
    os << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"1\" points=\"";
    for (std::size_t i = 0; i < xs.size(); ++i) os << num(ax(xs[i])) << ',' << num(ay(ys[i])) << ' ';
    os << "\"/>\n";
    return os.str();
}

std::string svg_open(int w, int h) {
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\" viewBox=\"0 0 " << w
       << ' ' << h << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    return os.str();
}

}  // namespace

void write_trajectory_csv(const std::filesystem::path& path, std::span<const Estimate> estimates) {
    auto out = open_out(path);
    out << "window_idx,true_pressure,true_position,est_pressure,est_position\n";
    for (std::size_t i = 0; i < estimates.size(); ++i) {
        const auto& e = estimates[i];
        out << i << ',' << num(e.truth.pressure) << ',' << num(e.truth.position) << ','
            << (e.estimated_raw.size() > 0 ? num(e.estimated_raw[0]) : "") << ','
            << (e.estimated_raw.size() > 1 ? num(e.estimated_raw[1]) : "") << '\n';
    }
}

void write_scatter_csv(const std::filesystem::path& path, const LatentScatter& scatter) {
    auto out = open_out(path);
    for (std::size_t c = 0; c < scatter.z.cols; ++c) out << (c ? "," : "") << 'z' << c;
    out << '\n';
    for (std::size_t r = 0; r < scatter.z.rows; ++r) {
        for (std::size_t c = 0; c < scatter.z.cols; ++c) out << (c ? "," : "") << num(scatter.z(r, c));
        out << '\n';
    }
}

void write_grid_csv(const std::filesystem::path& path, std::span<const GridCell> cells) {
    auto out = open_out(path);
    out << "cell_id";
    if (!cells.empty()) {
        for (std::size_t i = 0; i < cells.front().y.size(); ++i) out << ",y" << i;
        for (std::size_t i = 0; i < cells.front().z.size(); ++i) out << ",z" << i;
    }
    for (std::size_t i = 0; i < kWindowLen; ++i) out << ",s" << i;
    out << '\n';
    for (std::size_t c = 0; c < cells.size(); ++c) {
        out << c;
        for (double v : cells[c].y) out << ',' << num(v);
        for (double v : cells[c].z) out << ',' << num(v);
        for (double v : cells[c].waveform) out << ',' << num(v);
        out << '\n';
    }
}

void write_report_csv(const std::filesystem::path& path, const EvalReport& report) {
    auto out = open_out(path);
    auto opt = [](const std::optional<double>& v) { return v ? num(*v) : std::string(); };
    out << "metric,value\n";
    out << "condition," << report.condition << '\n';
    out << "rms_param_error," << opt(report.rms_param_error) << '\n';
    out << "holdout_mse," << opt(report.holdout_mse) << '\n';
    for (std::size_t i = 0; i < report.latent_ks.size(); ++i) out << "latent_ks_z" << i << ',' << num(report.latent_ks[i]) << '\n';
    out << "latent_corr," << opt(report.latent_corr) << '\n';
}

std::string trajectory_svg(std::span<const Estimate> estimates) {
    const int w = 720, h = 420;
    std::string s = svg_open(w, h);
    const std::size_t dims = estimates.empty() ? 0 : estimates.front().estimated_raw.size();
    const char* names[] = {"pressure", "position"};
    for (std::size_t d = 0; d < dims; ++d) {
        const double top = 20.0 + static_cast<double>(d) * 200.0;
        std::vector<double> xs, truth, est;
        for (std::size_t i = 0; i < estimates.size(); ++i) {
            xs.push_back(static_cast<double>(i));
            truth.push_back(d == 0 ? estimates[i].truth.pressure : estimates[i].truth.position);
            est.push_back(estimates[i].estimated_raw[d]);
        }
        const Axis ax{0.0, std::max<double>(1.0, static_cast<double>(estimates.size() - 1)), 40.0, w - 10.0};
        const Axis ay{-16.0, 144.0, top + 170.0, top};
        s += "<text x=\"4\" y=\"" + num(top + 12) + "\" font-size=\"12\">" + names[d] + "</text>\n";
        s += polyline(xs, truth, ax, ay, "#1f5fbf");
        s += polyline(xs, est, ax, ay, "#d03020");
    }
    return s + "</svg>\n";
}

std::string scatter_svg(const LatentScatter& scatter) {
    const int w = 400, h = 400;
    std::string s = svg_open(w, h);
    const Axis ax{-2.0, 2.0, 10.0, w - 10.0};
    const Axis ay{-2.0, 2.0, h - 10.0, 10.0};
    s += "<rect x=\"" + num(ax(-1)) + "\" y=\"" + num(ay(1)) + "\" width=\"" + num(ax(1) - ax(-1)) + "\" height=\""
         + num(ay(-1) - ay(1)) + "\" fill=\"none\" stroke=\"#999\"/>\n";
    for (std::size_t r = 0; r < scatter.z.rows; ++r) {
        const double x = scatter.z.cols > 0 ? scatter.z(r, 0) : 0.0;
        const double y = scatter.z.cols > 1 ? scatter.z(r, 1) : 0.0;
        s += "<circle cx=\"" + num(ax(std::clamp(x, -2.0, 2.0))) + "\" cy=\"" + num(ay(std::clamp(y, -2.0, 2.0)))
             + "\" r=\"1.2\" fill=\"#1f5fbf\"/>\n";
    }
    return s + "</svg>\n";
}

std::string grid_svg(std::span<const GridCell> cells, std::size_t columns) {
    columns = std::max<std::size_t>(columns, 1);
    const std::size_t rows = (cells.size() + columns - 1) / columns;
    const int cw = 160, ch = 100;
    std::string s = svg_open(static_cast<int>(columns) * cw, std::max<int>(1, static_cast<int>(rows)) * ch);
    double peak = 1e-12;
    for (const auto& c : cells)
        for (double v : c.waveform) peak = std::max(peak, std::abs(v));
    std::vector<double> xs(kWindowLen);
    std::iota(xs.begin(), xs.end(), 0.0);
    for (std::size_t i = 0; i < cells.size(); ++i) {
        const double x0 = static_cast<double>(i % columns) * cw;
        const double y0 = static_cast<double>(i / columns) * ch;
        const Axis ax{0.0, static_cast<double>(kWindowLen - 1), x0 + 4.0, x0 + cw - 4.0};
        const Axis ay{-peak, peak, y0 + ch - 4.0, y0 + 4.0};
        s += "<rect x=\"" + num(x0) + "\" y=\"" + num(y0) + "\" width=\"" + std::to_string(cw) + "\" height=\""
             + std::to_string(ch) + "\" fill=\"none\" stroke=\"#ddd\"/>\n";
        s += polyline(xs, cells[i].waveform, ax, ay, "#d03020");
    }
    return s + "</svg>\n";
}

const std::vector<std::string>& eval_output_files() {
    static const std::vector<std::string> files{"report.csv",     "trajectory.csv", "scatter.csv", "grid.csv",
                                                "trajectory.svg", "scatter.svg",    "grid.svg"};
    return files;
}

namespace {

std::vector<double> four_levels(double lo, double hi) {
    std::vector<double> v;
    for (int i = 0; i < 4; ++i) v.push_back(lo + (hi - lo) * i / 3.0);
    return v;
}

}  // namespace

EvalReport write_eval_outputs(const AaeModel& model, const Corpus& corpus, const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    const auto trajectory = make_test_trajectory(model.stats, corpus.reference, model.seed);
    std::vector<Estimate> estimates;
    eval_param_estimation(model, trajectory, &estimates);
    EvalReport report = evaluate(model, corpus, trajectory);

    const auto indices = eval_indices(model, corpus);
    LatentScatter scatter;
    if (model.n_latent > 0) scatter = latent_scatter(model, corpus, indices);

    // Decoder grid: conditional dims sweep pressure then position in raw
    // units; latent dims sweep [-0.75, 0.75]. With two swept axes the grid
    // is 4 x 4; remaining latents stay at 0.
    const auto pressures = four_levels(32.0, 128.0);
    const auto positions = four_levels(16.0, 112.0);
    const auto latents = four_levels(-0.75, 0.75);
    std::vector<std::vector<double>> y_points;
    std::vector<std::vector<double>> z_points;
    if (model.n_cond >= 2) {
        for (double p : pressures)
            for (double q : positions) y_points.push_back({scale_param(p), scale_param(q)});
        z_points.push_back(std::vector<double>(model.n_latent, 0.0));
    } else if (model.n_cond == 1) {
        for (double p : pressures) y_points.push_back({scale_param(p)});
        for (double z : latents) {
            std::vector<double> zv(model.n_latent, 0.0);
            if (!zv.empty()) zv[0] = z;
            z_points.push_back(zv);
        }
    } else {
        for (double a : latents)
            for (double b : latents) {
                std::vector<double> zv(model.n_latent, 0.0);
                zv[0] = a;
                if (zv.size() > 1) zv[1] = b;
                z_points.push_back(zv);
            }
    }
    const auto cells = render_decoder_grid(model, y_points, z_points);

    write_report_csv(out_dir / "report.csv", report);
    write_trajectory_csv(out_dir / "trajectory.csv", estimates);
    write_scatter_csv(out_dir / "scatter.csv", scatter);
    write_grid_csv(out_dir / "grid.csv", cells);
    write_text(out_dir / "trajectory.svg", trajectory_svg(estimates));
    write_text(out_dir / "scatter.svg", scatter_svg(scatter));
    write_text(out_dir / "grid.svg", grid_svg(cells, 4));
    return report;
}

}  // namespace sounderfeit
