#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "sounderfeit/adversarial.hpp"

namespace sounderfeit {

inline constexpr std::uint16_t kDefaultPort = 8080;
inline constexpr std::size_t kStreamFrameSamples = 4800;  // 100 ms
inline constexpr const char* kPortEnvVar = "SOUNDERFEIT_PORT";

struct ServiceConfig {
    std::string host = "127.0.0.1";
    std::uint16_t port = kDefaultPort;  // 0 picks an ephemeral port
    std::optional<std::filesystem::path> static_dir;
    // Frames sent ahead of real time when a stream opens.
    std::size_t lead_frames = 1;
};

// Flag value, else SOUNDERFEIT_PORT, else the default. Throws a usage
// error for an unparsable environment value.
std::uint16_t resolve_port(std::optional<std::uint16_t> flag);

// {"condition","n_latent","n_cond","params":[...],"corpus_hash"}
std::string model_metadata_json(const AaeModel& model);

// Parses a render request body {"duration": s, "curve": [{"t":..,"y0":..}, ...]}
// and returns the WAV bytes. Throws range/format errors on invalid input.
std::vector<std::uint8_t> handle_render_request(const AaeModel& model, const std::string& body);

// HTTP + WebSocket front end running on its own thread.
//   GET  /api/model   model metadata, 503 when no model is loaded
//   POST /api/render  WAV bytes
//   WS   /api/stream  binary 4800-sample f32 frames at 10/s; text control messages
//   GET  /*           files from the static directory
class Service {
public:
    Service(std::shared_ptr<const AaeModel> model, ServiceConfig config);
    ~Service();
    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    // Binds and starts serving in the background. Returns the bound port.
    std::uint16_t start();
    // Blocks until stop() is called from another thread or a signal handler.
    void wait();
    void stop();
    std::uint16_t port() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace sounderfeit
