// Command-line driver: gen-data, train, eval, synth, serve.

#include <chrono>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "sounderfeit/error.hpp"
#include "sounderfeit/evalsuite.hpp"
#include "sounderfeit/service.hpp"
#include "sounderfeit/synthengine.hpp"

using namespace sounderfeit;

namespace {

enum ExitCode { kOk = 0, kUsage = 2, kData = 3, kDivergence = 4 };

int exit_code(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::usage:
        case ErrorKind::config:
            return kUsage;
        case ErrorKind::divergence:
        case ErrorKind::blowup:
            return kDivergence;
        default:
            return kData;
    }
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::format, "cannot read " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void require_file(const std::filesystem::path& path, const char* what) {
    if (!std::filesystem::is_regular_file(path)) throw Error(ErrorKind::format, std::string(what) + " not found: " + path.string());
}

struct GenDataArgs {
    std::string kind;
    int grid_step = 1;
    std::size_t count = 0;
    std::uint64_t seed = 0;
    std::string out;
};

int gen_data(const GenDataArgs& a) {
    Corpus corpus;
    if (a.kind == "bowed1") {
        corpus = build_bowed1(a.grid_step, a.seed);
    } else {
        if (a.count == 0) throw Error(ErrorKind::usage, "bowed2 needs --count");
        corpus = build_bowed2(a.count, a.seed);
    }
    save_corpus(corpus, a.out);
    std::printf("wrote %zu windows to %s (hash %s)\n", corpus.windows.size(), a.out.c_str(), corpus_hash(corpus).c_str());
    return kOk;
}

struct TrainArgs {
    std::string corpus;
    std::string condition;
    std::uint64_t seed = 0;
    std::string out;
    TrainConfig config;
    std::string reduction = "mean";
    std::string activation = "relu";
};

int train_cmd(TrainArgs a) {
    const auto& condition = condition_by_name(a.condition);
    require_file(a.corpus, "corpus");
    const Corpus corpus = load_corpus(a.corpus);
    a.config.seed = a.seed;
    a.config.reduction = reduction_from_string(a.reduction);
    a.config.activation = activation_from_string(a.activation);
    const auto result = train(corpus, condition, a.config, [](std::size_t batch, const BatchReport& r) {
        if ((batch + 1) % 100 == 0) {
            std::printf("batch %zu l_ae=%.6g l_g=%.6g l_d=%.6g\n", batch + 1, r.l_ae, r.l_g, r.l_d);
            std::fflush(stdout);
        }
    });
    save_model(result.model, a.out);
    std::printf("holdout_mse=%.6g\n", reconstruction_mse(result.model, corpus, result.split.holdout));
    std::printf("wrote %s\n", a.out.c_str());
    return kOk;
}

int eval_cmd(const std::string& model_path, const std::string& corpus_path, const std::string& out_dir) {
    require_file(model_path, "model");
    require_file(corpus_path, "corpus");
    const AaeModel model = load_model(model_path);
    const Corpus corpus = load_corpus(corpus_path);
    const EvalReport r = write_eval_outputs(model, corpus, out_dir);
    std::printf("condition %s\n", r.condition.c_str());
    if (r.rms_param_error) std::printf("rms_param_error %.6g\n", *r.rms_param_error);
    if (r.holdout_mse) std::printf("holdout_mse %.6g\n", *r.holdout_mse);
    for (std::size_t i = 0; i < r.latent_ks.size(); ++i) std::printf("latent_ks_z%zu %.6g\n", i, r.latent_ks[i]);
    if (r.latent_corr) std::printf("latent_corr %.6g\n", *r.latent_corr);
    return kOk;
}

int synth_cmd(const std::string& model_path, const std::string& script, const std::string& out, double duration) {
    require_file(model_path, "model");
    require_file(script, "control script");
    const AaeModel model = load_model(model_path);
    const ControlCurve curve = parse_control_csv(read_text(script), model);
    if (duration <= 0.0) duration = curve.times.back();
    if (duration <= 0.0) throw Error(ErrorKind::usage, "script ends at t=0; pass --duration");
    const auto t0 = std::chrono::steady_clock::now();
    const auto samples = render_samples(model, curve, duration);
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_wav(out, samples);
    const double audio = static_cast<double>(samples.size()) / kSampleRate;
    std::printf("wrote %zu samples to %s\n", samples.size(), out.c_str());
    std::printf("rendered %.3f s of audio in %.3f s (RTF %.2f)\n", audio, wall, wall > 0 ? audio / wall : 0.0);
    return kOk;
}

struct ServeArgs {
    std::string model;
    std::optional<std::uint16_t> port;
    std::string static_dir;
    std::string host = "127.0.0.1";
};

int serve_cmd(const ServeArgs& a) {
    require_file(a.model, "model");
    auto model = std::make_shared<const AaeModel>(load_model(a.model));
    ServiceConfig cfg;
    cfg.host = a.host;
    cfg.port = resolve_port(a.port);
    if (!a.static_dir.empty()) cfg.static_dir = a.static_dir;

    // Block termination signals so every thread inherits the mask and the
    // main thread can collect them with sigwait.
    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);

    Service service(model, cfg);
    const auto port = service.start();
    std::printf("listening on http://%s:%u\n", cfg.host.c_str(), static_cast<unsigned>(port));
    std::fflush(stdout);
    int sig = 0;
    sigwait(&signals, &sig);
    service.stop();
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Sounderfeit: bowed-string data generation, adversarial autoencoder training and synthesis"};
    app.require_subcommand(1);

    GenDataArgs gen;
    auto* gen_cmd = app.add_subcommand("gen-data", "Render a training corpus");
    gen_cmd->add_option("--kind", gen.kind, "bowed1 (parameter grid) or bowed2 (continuous random walk)")
        ->required()
        ->check(CLI::IsMember({"bowed1", "bowed2"}));
    auto* step_opt = gen_cmd->add_option("--grid-step", gen.grid_step, "bowed1 grid step")->check(CLI::Range(1, 128));
    auto* count_opt = gen_cmd->add_option("--count", gen.count, "bowed2 window count")->check(CLI::PositiveNumber);
    step_opt->excludes(count_opt);
    gen_cmd->add_option("--seed", gen.seed, "random seed");
    gen_cmd->add_option("--out", gen.out, "output corpus file")->required();

    TrainArgs tr;
    auto* train_sub = app.add_subcommand("train", "Train an adversarial autoencoder");
    train_sub->add_option("--corpus", tr.corpus)->required();
    train_sub->add_option("--condition", tr.condition, "D1_Z2_Y D0_Z2_Y N1_Z2_Y D1_Z1_Y D2_Z0_Y N2_Z0_Y")->required();
    train_sub->add_option("--seed", tr.seed);
    train_sub->add_option("--out", tr.out)->required();
    train_sub->add_option("--batches", tr.config.n_batches)->capture_default_str()->check(CLI::PositiveNumber);
    train_sub->add_option("--lambda", tr.config.lambda)->capture_default_str();
    train_sub->add_option("--batch-size", tr.config.batch_size)->capture_default_str()->check(CLI::PositiveNumber);
    train_sub->add_option("--lr-ae", tr.config.lr_ae)->capture_default_str();
    train_sub->add_option("--lr-g", tr.config.lr_g)->capture_default_str();
    train_sub->add_option("--lr-d", tr.config.lr_d)->capture_default_str();
    train_sub->add_option("--reduction", tr.reduction, "sum, batch_mean or mean")->capture_default_str();
    train_sub->add_option("--activation", tr.activation, "relu or tanh")->capture_default_str();

    std::string eval_model, eval_corpus, eval_out;
    auto* eval_sub = app.add_subcommand("eval", "Evaluate a checkpoint and write reports");
    eval_sub->add_option("--model", eval_model)->required();
    eval_sub->add_option("--corpus", eval_corpus)->required();
    eval_sub->add_option("--out-dir", eval_out)->required();

    std::string synth_model, synth_script, synth_out;
    double synth_duration = 0.0;
    auto* synth_sub = app.add_subcommand("synth", "Render a control script to WAV");
    synth_sub->add_option("--model", synth_model)->required();
    synth_sub->add_option("--script", synth_script, "CSV with header t,y0,y1,z0,...")->required();
    synth_sub->add_option("--out", synth_out)->required();
    synth_sub->add_option("--duration", synth_duration, "seconds (default: last breakpoint time)");

    ServeArgs serve;
    auto* serve_sub = app.add_subcommand("serve", "Serve the streaming synthesizer over HTTP/WebSocket");
    serve_sub->add_option("--model", serve.model)->required();
    serve_sub->add_option("--port", serve.port, "port (default $SOUNDERFEIT_PORT or 8080; 0 = ephemeral)");
    serve_sub->add_option("--static-dir", serve.static_dir);
    serve_sub->add_option("--host", serve.host)->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kUsage;
    }

    try {
        if (*gen_cmd) return gen_data(gen);
        if (*train_sub) return train_cmd(tr);
        if (*eval_sub) return eval_cmd(eval_model, eval_corpus, eval_out);
        if (*synth_sub) return synth_cmd(synth_model, synth_script, synth_out, synth_duration);
        if (*serve_sub) return serve_cmd(serve);
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return exit_code(e.kind());
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kData;
    }
    return kUsage;
}
