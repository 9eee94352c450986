#include "sounderfeit/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>

#include "sounderfeit/error.hpp"

namespace sounderfeit {

static_assert(std::endian::native == std::endian::little, "corpus I/O assumes a little-endian host");

std::vector<double> extract_last_two_periods(std::span<const double> signal) {
    if (signal.size() < kWindowLen) {
        throw Error(ErrorKind::length, "signal shorter than 201 samples");
    }
    return {signal.end() - kWindowLen, signal.end()};
}

double alignment_score(std::span<const double> reference, std::span<const double> candidate) {
    const double mean = std::accumulate(candidate.begin(), candidate.end(), 0.0) / static_cast<double>(candidate.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < candidate.size(); ++i) acc += (candidate[i] - mean) * reference[i];
    return acc;
}

Alignment phase_align(std::span<const double> reference, std::span<const double> source_tail, std::size_t lags) {
    if (reference.size() != kWindowLen) throw Error(ErrorKind::length, "reference must hold 201 samples");
    if (lags == 0 || source_tail.size() < kWindowLen + lags - 1) {
        throw Error(ErrorKind::length, "source tail too short for the lag search");
    }
    Alignment best;
    best.score = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < lags; ++k) {
        const double s = alignment_score(reference, source_tail.subspan(k, kWindowLen));
        if (s > best.score) {
            best.score = s;
            best.lag = k;
        }
    }
    const auto cut = source_tail.subspan(best.lag, kWindowLen);
    best.window.assign(cut.begin(), cut.end());
    return best;
}

std::vector<double> differentiate(std::span<const double> x) {
    if (x.size() < 2) throw Error(ErrorKind::length, "differentiate needs at least 2 samples");
    std::vector<double> out(x.size() - 1);
    for (std::size_t i = 0; i + 1 < x.size(); ++i) out[i] = x[i + 1] - x[i];
    return out;
}

double rms(std::span<const double> x) {
    if (x.empty()) return 0.0;
    double acc = 0.0;
    for (double v : x) acc += v * v;
    return std::sqrt(acc / static_cast<double>(x.size()));
}

NormStats fit_norm_stats(std::span<const Frame> diffed) {
    if (diffed.size() < 2) throw Error(ErrorKind::range, "norm stats need at least 2 windows");
    std::array<double, kFrameLen> mean{};
    std::array<double, kFrameLen> var{};
    for (const auto& f : diffed)
        for (std::size_t i = 0; i < kFrameLen; ++i) mean[i] += f[i];
    const double n = static_cast<double>(diffed.size());
    for (auto& m : mean) m /= n;
    for (const auto& f : diffed)
        for (std::size_t i = 0; i < kFrameLen; ++i) {
            const double d = f[i] - mean[i];
            var[i] += d * d;
        }
    NormStats stats;
    for (std::size_t i = 0; i < kFrameLen; ++i) {
        stats.mean[i] = static_cast<float>(mean[i]);
        stats.std[i] = static_cast<float>(std::max(std::sqrt(var[i] / n), kStdFloor));
    }
    return stats;
}

std::vector<double> apply_norm(std::span<const double> diffed, const NormStats& stats) {
    if (diffed.size() != kFrameLen) throw Error(ErrorKind::length, "frame must hold 200 values");
    std::vector<double> out(kFrameLen);
    for (std::size_t i = 0; i < kFrameLen; ++i) out[i] = (diffed[i] - stats.mean[i]) / stats.std[i];
    return out;
}

std::vector<double> unapply_norm(std::span<const double> normalized, const NormStats& stats) {
    if (normalized.size() != kFrameLen) throw Error(ErrorKind::length, "frame must hold 200 values");
    std::vector<double> out(kFrameLen);
    for (std::size_t i = 0; i < kFrameLen; ++i) out[i] = normalized[i] * stats.std[i] + stats.mean[i];
    return out;
}

double scale_param(double raw) {
    if (!(raw >= 0.0 && raw <= kRawControlMax)) throw Error(ErrorKind::range, "raw control outside [0,128]");
    return raw / 64.0 - 1.0;
}

double unscale_param(double scaled) { return (scaled + 1.0) * 64.0; }

namespace {

BowParams corpus_params(double pressure, double position) {
    return {static_cast<float>(pressure), static_cast<float>(kCorpusVelocity), static_cast<float>(position),
            static_cast<float>(kCorpusFrequency)};
}

std::vector<double> to_double(const RawWindow& w) { return {w.begin(), w.end()}; }

}  // namespace

RawWindow make_reference_window() {
    const auto signal = render(corpus_params(64.0, 32.0), 1.0);
    const auto tail = extract_last_two_periods(signal);
    const double mean = std::accumulate(tail.begin(), tail.end(), 0.0) / static_cast<double>(kWindowLen);
    RawWindow ref;
    for (std::size_t i = 0; i < kWindowLen; ++i) ref[i] = static_cast<float>(tail[i] - mean);
    return ref;
}

PeriodWindow make_window(std::span<const double> cut, const BowParams& params) {
    if (cut.size() != kWindowLen) throw Error(ErrorKind::length, "window cut must hold 201 samples");
    PeriodWindow w;
    const double mean = std::accumulate(cut.begin(), cut.end(), 0.0) / static_cast<double>(kWindowLen);
    for (std::size_t i = 0; i < kWindowLen; ++i) w.raw[i] = static_cast<float>(cut[i] - mean);
    for (std::size_t i = 0; i < kFrameLen; ++i) w.diffed[i] = w.raw[i + 1] - w.raw[i];
    w.params = {static_cast<float>(params.pressure), static_cast<float>(params.velocity),
                static_cast<float>(params.position), static_cast<float>(params.frequency)};
    return w;
}

void renormalize(Corpus& corpus) {
    if (corpus.windows.empty()) throw Error(ErrorKind::corpus, "corpus is empty");
    std::vector<Frame> diffed;
    diffed.reserve(corpus.windows.size());
    for (const auto& w : corpus.windows) diffed.push_back(w.diffed);
    corpus.stats = fit_norm_stats(diffed);
    for (auto& w : corpus.windows)
        for (std::size_t i = 0; i < kFrameLen; ++i)
            w.normalized[i] = static_cast<float>((static_cast<double>(w.diffed[i]) - corpus.stats.mean[i])
                                                 / static_cast<double>(corpus.stats.std[i]));
}

std::optional<PeriodWindow> render_grid_point(double pressure, double position, std::span<const double> reference) {
    const BowParams params = corpus_params(pressure, position);
    const auto signal = render(params, 1.0);
    if (rms(extract_last_two_periods(signal)) <= kSilenceRms) return std::nullopt;
    const std::span<const double> all(signal);
    const auto tail = all.last(kWindowLen + kAlignLags - 1);
    const auto aligned = phase_align(reference, tail);
    return make_window(aligned.window, params);
}

namespace {

std::vector<int> grid_axis(int grid_step) {
    if (grid_step < 1 || grid_step > 128) throw Error(ErrorKind::range, "grid step must lie in [1,128]");
    std::vector<int> axis;
    for (int v = 0; v <= 128; v += grid_step) axis.push_back(v);
    return axis;
}

Corpus finish_bowed1(std::vector<std::optional<PeriodWindow>>& slots, const RawWindow& reference,
                     std::uint64_t seed) {
    Corpus corpus;
    corpus.kind = CorpusKind::bowed1;
    corpus.seed = seed;
    corpus.reference = reference;
    for (auto& s : slots)
        if (s) corpus.windows.push_back(std::move(*s));
    if (corpus.windows.size() < 2) throw Error(ErrorKind::corpus, "bowed1 grid kept fewer than 2 windows");
    renormalize(corpus);
    return corpus;
}

}  // namespace

Corpus build_bowed1(int grid_step, std::uint64_t seed) {
    const auto axis = grid_axis(grid_step);
    const RawWindow reference = make_reference_window();
    const auto ref = to_double(reference);
    const auto n_axis = static_cast<std::ptrdiff_t>(axis.size());
    const std::ptrdiff_t total = n_axis * n_axis;
    std::vector<std::optional<PeriodWindow>> slots(static_cast<std::size_t>(total));

#pragma omp parallel for schedule(dynamic, 4)
    for (std::ptrdiff_t idx = 0; idx < total; ++idx) {
        const int pressure = axis[static_cast<std::size_t>(idx / n_axis)];
        const int position = axis[static_cast<std::size_t>(idx % n_axis)];
        slots[static_cast<std::size_t>(idx)] = render_grid_point(pressure, position, ref);
    }
    return finish_bowed1(slots, reference, seed);
}

Corpus build_bowed1_serial(int grid_step, std::uint64_t seed) {
    const auto axis = grid_axis(grid_step);
    const RawWindow reference = make_reference_window();
    const auto ref = to_double(reference);
    std::vector<std::optional<PeriodWindow>> slots;
    for (int pressure : axis)
        for (int position : axis) slots.push_back(render_grid_point(pressure, position, ref));
    return finish_bowed1(slots, reference, seed);
}

Corpus build_bowed2(std::size_t n_windows, std::uint64_t seed, const Bowed2Options& options) {
    if (n_windows < 1) throw Error(ErrorKind::range, "bowed2 needs at least one window");
    const std::size_t span = kWindowLen + kAlignLags - 1;
    if (options.hop < span) throw Error(ErrorKind::config, "bowed2 hop shorter than the alignment span");

    Corpus corpus;
    corpus.kind = CorpusKind::bowed2;
    corpus.seed = seed;
    corpus.reference = make_reference_window();
    const auto ref = to_double(corpus.reference);
    corpus.windows.reserve(n_windows);

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> control(0.0, kRawControlMax);
    std::uniform_real_distribution<double> interval(options.min_interval, options.max_interval);
    auto redraw = [&] {
        // Draw order is fixed: pressure, position, then the hold time.
        const double pressure = control(rng);
        const double position = control(rng);
        const auto hold = static_cast<std::size_t>(std::llround(interval(rng) * kSampleRate));
        return std::pair{corpus_params(pressure, position), std::max<std::size_t>(hold, 1)};
    };

    auto [params, remaining] = redraw();
    BowedString string(kCorpusFrequency);

    // Ring history of the last `span` samples and the parameters active at each.
    std::vector<double> history(span, 0.0);
    std::vector<BowParams> labels(span);
    std::vector<double> tail(span);
    std::size_t head = 0;
    std::size_t produced = 0;
    // A run that never leaves silence would loop forever; bound it generously.
    const std::size_t max_hops = 1000 + 20 * n_windows;
    std::size_t hops = 0;

    while (corpus.windows.size() < n_windows) {
        if (remaining == 0) std::tie(params, remaining) = redraw();
        history[head] = string.tick(params);
        labels[head] = params;
        head = (head + 1) % span;
        --remaining;
        ++produced;
        if (produced % options.hop != 0) continue;
        if (++hops > max_hops) throw Error(ErrorKind::corpus, "bowed2 run stayed silent");
        for (std::size_t i = 0; i < span; ++i) tail[i] = history[(head + i) % span];
        const auto aligned = phase_align(ref, tail);
        if (rms(aligned.window) <= kSilenceRms) continue;
        corpus.windows.push_back(make_window(aligned.window, labels[(head + aligned.lag) % span]));
    }
    if (corpus.windows.size() < 2) {
        throw Error(ErrorKind::corpus, "bowed2 needs at least 2 windows to standardize");
    }
    renormalize(corpus);
    return corpus;
}

Corpus subset(const Corpus& corpus, const std::function<bool(const PeriodWindow&)>& keep) {
    Corpus out;
    out.kind = corpus.kind;
    out.seed = corpus.seed;
    out.reference = corpus.reference;
    for (const auto& w : corpus.windows)
        if (keep(w)) out.windows.push_back(w);
    if (out.windows.size() < 2) throw Error(ErrorKind::corpus, "subset kept fewer than 2 windows");
    renormalize(out);
    return out;
}

// --- persistence ----------------------------------------------------------

namespace {

constexpr std::array<char, 4> kMagic{'S', 'N', 'D', 'F'};
constexpr std::size_t kHeaderBytes = 4 + 4 + 1 + 8 + 4 + 4 + 4;
constexpr std::uint32_t kCondLabels = 2;
constexpr std::size_t kWindowBytes = (kWindowLen + 2 * kFrameLen + 4) * sizeof(float);

// Emits little-endian fields into any sink accepting (pointer, byte count).
template <typename Sink>
class Writer {
public:
    explicit Writer(Sink& sink) : sink_(sink) {}
    template <typename T>
    void put(T v) {
        sink_(reinterpret_cast<const std::uint8_t*>(&v), sizeof(T));
    }
    void put_floats(std::span<const float> v) { sink_(reinterpret_cast<const std::uint8_t*>(v.data()), v.size_bytes()); }

private:
    Sink& sink_;
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}
    template <typename T>
    T get() {
        T v;
        take(&v, sizeof(T));
        return v;
    }
    void get_floats(std::span<float> v) { take(v.data(), v.size_bytes()); }
    bool done() const { return pos_ == in_.size(); }

private:
    void take(void* dst, std::size_t n) {
        if (in_.size() - pos_ < n) throw Error(ErrorKind::format, "corpus file truncated");
        std::memcpy(dst, in_.data() + pos_, n);
        pos_ += n;
    }
    std::span<const std::uint8_t> in_;
    std::size_t pos_ = 0;
};

}  // namespace

std::size_t corpus_file_size(std::size_t n_windows) {
    return kHeaderBytes + 2 * kFrameLen * sizeof(float) + kWindowLen * sizeof(float) + n_windows * kWindowBytes;
}

namespace {

template <typename Sink>
void write_corpus(const Corpus& corpus, Sink& sink) {
    Writer<Sink> w(sink);
    for (char c : kMagic) w.put(c);
    w.put(kCorpusVersion);
    w.put(static_cast<std::uint8_t>(corpus.kind));
    w.put(corpus.seed);
    w.put(static_cast<std::uint32_t>(corpus.windows.size()));
    w.put(static_cast<std::uint32_t>(kWindowLen));
    w.put(kCondLabels);
    w.put_floats(corpus.stats.mean);
    w.put_floats(corpus.stats.std);
    w.put_floats(corpus.reference);
    for (const auto& win : corpus.windows) {
        w.put_floats(win.raw);
        w.put_floats(win.diffed);
        w.put_floats(win.normalized);
        w.put(static_cast<float>(win.params.pressure));
        w.put(static_cast<float>(win.params.velocity));
        w.put(static_cast<float>(win.params.position));
        w.put(static_cast<float>(win.params.frequency));
    }
}

}  // namespace

std::vector<std::uint8_t> serialize_corpus(const Corpus& corpus) {
    std::vector<std::uint8_t> bytes;
    bytes.reserve(corpus_file_size(corpus.windows.size()));
    auto sink = [&bytes](const std::uint8_t* p, std::size_t n) { bytes.insert(bytes.end(), p, p + n); };
    write_corpus(corpus, sink);
    return bytes;
}

Corpus deserialize_corpus(std::span<const std::uint8_t> bytes) {
    Reader r(bytes);
    std::array<char, 4> magic{};
    for (char& c : magic) c = r.get<char>();
    if (magic != kMagic) throw Error(ErrorKind::format, "bad corpus magic");
    if (r.get<std::uint32_t>() != kCorpusVersion) throw Error(ErrorKind::format, "unsupported corpus version");
    Corpus corpus;
    const auto kind = r.get<std::uint8_t>();
    if (kind > 1) throw Error(ErrorKind::format, "unknown corpus kind");
    corpus.kind = static_cast<CorpusKind>(kind);
    corpus.seed = r.get<std::uint64_t>();
    const auto n = r.get<std::uint32_t>();
    if (r.get<std::uint32_t>() != kWindowLen) throw Error(ErrorKind::format, "unexpected window length");
    if (r.get<std::uint32_t>() != kCondLabels) throw Error(ErrorKind::format, "unexpected label count");
    if (bytes.size() != corpus_file_size(n)) throw Error(ErrorKind::format, "corpus size does not match header");
    r.get_floats(corpus.stats.mean);
    r.get_floats(corpus.stats.std);
    r.get_floats(corpus.reference);
    corpus.windows.resize(n);
    for (auto& win : corpus.windows) {
        r.get_floats(win.raw);
        r.get_floats(win.diffed);
        r.get_floats(win.normalized);
        win.params.pressure = r.get<float>();
        win.params.velocity = r.get<float>();
        win.params.position = r.get<float>();
        win.params.frequency = r.get<float>();
    }
    return corpus;
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
    const auto bytes = serialize_corpus(corpus);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::format, "cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorKind::format, "failed writing " + path.string());
}

Corpus load_corpus(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::format, "cannot open corpus " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize_corpus(bytes);
}

std::string corpus_hash(const Corpus& corpus) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto sink = [&h](const std::uint8_t* p, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) {
            h ^= p[i];
            h *= 0x100000001b3ULL;
        }
    };
    write_corpus(corpus, sink);
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

}  // namespace sounderfeit
