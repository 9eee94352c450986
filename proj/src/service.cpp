#include "sounderfeit/service.hpp"

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include <chrono>
#include <cstdlib>
#include <cstring>
#include <deque>
#include <fstream>
#include <iostream>
#include <thread>

#include "json.hpp"
#include "sounderfeit/error.hpp"
#include "sounderfeit/synthengine.hpp"

namespace sounderfeit {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;
using json = nlohmann::json;

std::uint16_t resolve_port(std::optional<std::uint16_t> flag) {
    if (flag) return *flag;
    const char* env = std::getenv(kPortEnvVar);
    if (!env || !*env) return kDefaultPort;
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (*end != '\0' || v < 0 || v > 65535) {
        throw Error(ErrorKind::usage, std::string(kPortEnvVar) + " is not a valid port: " + env);
    }
    return static_cast<std::uint16_t>(v);
}

namespace {

std::vector<std::string> param_names(const AaeModel& model) {
    std::vector<std::string> names;
    for (std::size_t i = 0; i < model.n_cond; ++i) names.push_back("y" + std::to_string(i));
    for (std::size_t i = 0; i < model.n_latent; ++i) names.push_back("z" + std::to_string(i));
    return names;
}

}  // namespace

std::string model_metadata_json(const AaeModel& model) {
    static const char* labels[] = {"pressure", "position"};
    json params = json::array();
    for (std::size_t i = 0; i < model.n_cond; ++i) {
        params.push_back({{"name", "y" + std::to_string(i)}, {"kind", "conditional"},
                          {"label", i < 2 ? labels[i] : "y" + std::to_string(i)}});
    }
    for (std::size_t i = 0; i < model.n_latent; ++i) {
        params.push_back({{"name", "z" + std::to_string(i)}, {"kind", "latent"}, {"label", "z" + std::to_string(i)}});
    }
    return json{{"condition", model.condition},
                {"n_latent", model.n_latent},
                {"n_cond", model.n_cond},
                {"params", params},
                {"corpus_hash", model.corpus_hash},
                {"sample_rate", static_cast<int>(kSampleRate)},
                {"frame_samples", kStreamFrameSamples}}
        .dump();
}

std::vector<std::uint8_t> handle_render_request(const AaeModel& model, const std::string& body) {
    json req;
    try {
        req = json::parse(body);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::format, std::string("render request is not JSON: ") + e.what());
    }
    if (!req.is_object() || !req.contains("duration") || !req["duration"].is_number()) {
        throw Error(ErrorKind::format, "render request needs a numeric 'duration'");
    }
    const double duration = req["duration"].get<double>();
    if (!(duration > 0.0)) throw Error(ErrorKind::range, "duration must be positive");
    if (duration > 600.0) throw Error(ErrorKind::range, "duration is limited to 600 s");

    ControlCurve curve = constant_curve(make_snapshot(model));
    if (req.contains("curve")) {
        const auto& pts = req["curve"];
        if (!pts.is_array() || pts.empty()) throw Error(ErrorKind::format, "'curve' must be a non-empty array");
        const auto names = param_names(model);
        curve = ControlCurve{};
        curve.names = names;
        for (const auto& p : pts) {
            if (!p.is_object() || !p.contains("t") || !p["t"].is_number()) {
                throw Error(ErrorKind::format, "curve points need a numeric 't'");
            }
            for (const auto& [key, value] : p.items()) {
                if (key != "t" && std::find(names.begin(), names.end(), key) == names.end()) {
                    throw Error(ErrorKind::format, "model has no control named '" + key + "'");
                }
                if (!value.is_number()) throw Error(ErrorKind::format, "curve value '" + key + "' is not a number");
            }
            const double t = p["t"].get<double>();
            if (!curve.times.empty() && t <= curve.times.back()) {
                throw Error(ErrorKind::format, "curve times must be strictly increasing");
            }
            curve.times.push_back(t);
            std::vector<double> row;
            for (const auto& n : names) row.push_back(p.value(n, 0.0));
            curve.rows.push_back(std::move(row));
        }
    }
    return wav_bytes(render_samples(model, curve, duration));
}

namespace {

std::string mime_type(const std::filesystem::path& p) {
    const auto ext = p.extension().string();
    if (ext == ".html" || ext == ".htm") return "text/html; charset=utf-8";
    if (ext == ".js" || ext == ".mjs") return "text/javascript";
    if (ext == ".css") return "text/css";
    if (ext == ".json") return "application/json";
    if (ext == ".svg") return "image/svg+xml";
    if (ext == ".png") return "image/png";
    if (ext == ".wasm") return "application/wasm";
    if (ext == ".wav") return "audio/wav";
    if (ext == ".ico") return "image/x-icon";
    return "application/octet-stream";
}

struct Shared {
    std::shared_ptr<const AaeModel> model;
    ServiceConfig config;
};

using Request = http::request<http::string_body>;

http::response<http::string_body> text_response(const Request& req, http::status status, std::string body,
                                                 const char* type = "application/json") {
    http::response<http::string_body> res{status, req.version()};
    res.set(http::field::content_type, type);
    res.keep_alive(req.keep_alive());
    res.body() = std::move(body);
    res.prepare_payload();
    return res;
}

std::string error_json(const std::string& message) { return json{{"error", message}}.dump(); }

// Resolves a request target inside the static root, refusing escapes.
std::optional<std::filesystem::path> static_path(const std::filesystem::path& root, std::string_view target) {
    const auto q = target.find_first_of("?#");
    std::string path(target.substr(0, q));
    if (path.empty() || path.front() != '/') return std::nullopt;
    if (path.back() == '/') path += "index.html";
    const std::filesystem::path rel = std::filesystem::path(path.substr(1)).lexically_normal();
    if (rel.empty() || rel.is_absolute() || *rel.begin() == "..") return std::nullopt;
    return root / rel;
}

http::response<http::string_body> handle_http(const Shared& shared, Request&& req) {
    const std::string target(req.target());
    const std::string path = target.substr(0, target.find('?'));

    if (path == "/api/model") {
        if (req.method() != http::verb::get) return text_response(req, http::status::method_not_allowed, error_json("use GET"));
        if (!shared.model) return text_response(req, http::status::service_unavailable, error_json("no model loaded"));
        return text_response(req, http::status::ok, model_metadata_json(*shared.model));
    }
    if (path == "/api/render") {
        if (req.method() != http::verb::post) return text_response(req, http::status::method_not_allowed, error_json("use POST"));
        if (!shared.model) return text_response(req, http::status::service_unavailable, error_json("no model loaded"));
        try {
            const auto wav = handle_render_request(*shared.model, req.body());
            return text_response(req, http::status::ok, std::string(wav.begin(), wav.end()), "audio/wav");
        } catch (const Error& e) {
            return text_response(req, http::status::bad_request, error_json(e.what()));
        }
    }
    if (path == "/api/stream") {
        return text_response(req, http::status::upgrade_required, error_json("WebSocket upgrade required"));
    }
    if (req.method() != http::verb::get && req.method() != http::verb::head) {
        return text_response(req, http::status::method_not_allowed, error_json("method not allowed"));
    }
    if (!shared.config.static_dir) return text_response(req, http::status::not_found, error_json("not found"));
    const auto file = static_path(*shared.config.static_dir, target);
    std::error_code ec;
    if (!file || !std::filesystem::is_regular_file(*file, ec)) {
        return text_response(req, http::status::not_found, error_json("not found"));
    }
    std::ifstream in(*file, std::ios::binary);
    if (!in) return text_response(req, http::status::not_found, error_json("not found"));
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const auto size = data.size();
    auto res = text_response(req, http::status::ok, req.method() == http::verb::head ? std::string() : std::move(data),
                             mime_type(*file).c_str());
    res.content_length(size);
    return res;
}

// --- WebSocket stream session ---------------------------------------------

class StreamSession : public std::enable_shared_from_this<StreamSession> {
public:
    StreamSession(tcp::socket&& socket, std::shared_ptr<const Shared> shared)
        : ws_(std::move(socket)),
          timer_(ws_.get_executor()),
          shared_(std::move(shared)),
          engine_(*shared_->model),
          names_(param_names(*shared_->model)),
          controls_(make_snapshot(*shared_->model)),
          current_(make_snapshot(*shared_->model)),
          samples_(kStreamFrameSamples) {}

    void run(Request req) {
        ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
        ws_.async_accept(req, [self = shared_from_this()](beast::error_code ec) { self->on_accept(ec); });
    }

private:
    struct Outgoing {
        bool binary;
        std::shared_ptr<const std::string> data;
    };

    void on_accept(beast::error_code ec) {
        if (ec) return;
        start_ = std::chrono::steady_clock::now();
        do_read();
        send_due_frames();
    }

    void do_read() {
        ws_.async_read(in_, [self = shared_from_this()](beast::error_code ec, std::size_t) { self->on_read(ec); });
    }

    void on_read(beast::error_code ec) {
        if (ec) {
            closed_ = true;
            timer_.cancel();
            return;
        }
        const bool text = ws_.got_text();
        const std::string msg = beast::buffers_to_string(in_.data());
        in_.consume(in_.size());
        if (!text) return close_protocol("binary control messages are not accepted");
        json j;
        try {
            j = json::parse(msg);
        } catch (const json::exception&) {
            return close_protocol("malformed JSON");
        }
        if (!j.is_object() || !j.contains("type") || !j["type"].is_string()) return close_protocol("missing message type");
        const auto type = j["type"].get<std::string>();
        if (type == "set") {
            if (!j.contains("name") || !j["name"].is_string() || !j.contains("value") || !j["value"].is_number()) {
                return close_protocol("set needs a string 'name' and a numeric 'value'");
            }
            const auto name = j["name"].get<std::string>();
            const auto it = std::find(names_.begin(), names_.end(), name);
            if (it == names_.end()) {
                send_text(json{{"type", "error"}, {"message", "unknown parameter '" + name + "'"}}.dump());
            } else {
                const double value = std::clamp(j["value"].get<double>(), -1.0, 1.0);
                const auto idx = static_cast<std::size_t>(std::stoul(name.substr(1)));
                (name[0] == 'y' ? current_.y : current_.z)[idx] = value;
                controls_.publish(current_);
                send_text(json{{"type", "ack"}, {"name", name}, {"value", value}}.dump());
            }
        } else if (type == "get") {
            json values = json::object();
            for (std::size_t i = 0; i < current_.y.size(); ++i) values["y" + std::to_string(i)] = current_.y[i];
            for (std::size_t i = 0; i < current_.z.size(); ++i) values["z" + std::to_string(i)] = current_.z[i];
            send_text(json{{"type", "state"}, {"values", values}, {"frames_sent", frames_sent_}}.dump());
        } else {
            send_text(json{{"type", "error"}, {"message", "unknown message type '" + type + "'"}}.dump());
        }
        if (!closed_) do_read();
    }

    void close_protocol(const std::string& reason) {
        if (closed_) return;
        closed_ = true;
        timer_.cancel();
        closing_ = true;
        close_reason_ = reason;
        maybe_close();
    }

    void maybe_close() {
        if (writing_ || !closing_) return;
        closing_ = false;
        ws_.async_close(websocket::close_reason(websocket::close_code::protocol_error, close_reason_),
                        [self = shared_from_this()](beast::error_code) {});
    }

    // Sends every frame whose due time has passed, then sleeps until the
    // next one. Frame k is due at start + (k - lead) * 100 ms.
    void send_due_frames() {
        if (closed_) return;
        const auto period = std::chrono::milliseconds(100);
        const auto lead = static_cast<std::int64_t>(shared_->config.lead_frames);
        const auto now = std::chrono::steady_clock::now();
        while (start_ + (static_cast<std::int64_t>(frames_sent_) - lead) * period <= now) {
            send_binary(render_frame());
            ++frames_sent_;
        }
        timer_.expires_at(start_ + (static_cast<std::int64_t>(frames_sent_) - lead) * period);
        timer_.async_wait([self = shared_from_this()](beast::error_code ec) {
            if (!ec) self->send_due_frames();
        });
    }

    std::shared_ptr<const std::string> render_frame() {
        std::array<double, kHop> block{};
        for (std::size_t h = 0; h < kStreamFrameSamples / kHop; ++h) {
            controls_.update();
            engine_.synth_block(controls_.front(), block);
            for (std::size_t i = 0; i < kHop; ++i) samples_[h * kHop + i] = static_cast<float>(block[i]);
        }
        auto bytes = std::make_shared<std::string>(kStreamFrameSamples * sizeof(float), '\0');
        for (std::size_t i = 0; i < kStreamFrameSamples; ++i) {
            std::uint32_t bits;
            std::memcpy(&bits, &samples_[i], sizeof bits);
            for (int b = 0; b < 4; ++b) (*bytes)[i * 4 + b] = static_cast<char>((bits >> (8 * b)) & 0xff);
        }
        return bytes;
    }

    void send_text(std::string s) { enqueue({false, std::make_shared<const std::string>(std::move(s))}); }
    void send_binary(std::shared_ptr<const std::string> s) { enqueue({true, std::move(s)}); }

    void enqueue(Outgoing out) {
        queue_.push_back(std::move(out));
        if (!writing_) do_write();
    }

    void do_write() {
        if (queue_.empty()) {
            writing_ = false;
            maybe_close();
            return;
        }
        writing_ = true;
        ws_.binary(queue_.front().binary);
        ws_.async_write(asio::buffer(*queue_.front().data),
                        [self = shared_from_this()](beast::error_code ec, std::size_t) {
                            if (ec) {
                                self->closed_ = true;
                                self->writing_ = false;
                                self->timer_.cancel();
                                return;
                            }
                            self->queue_.pop_front();
                            self->do_write();
                        });
    }

    websocket::stream<beast::tcp_stream> ws_;
    asio::steady_timer timer_;
    std::shared_ptr<const Shared> shared_;
    SynthEngine engine_;
    std::vector<std::string> names_;
    TripleBuffer<ControlSnapshot> controls_;
    ControlSnapshot current_;
    std::vector<float> samples_;
    beast::flat_buffer in_;
    std::deque<Outgoing> queue_;
    std::chrono::steady_clock::time_point start_;
    std::uint64_t frames_sent_ = 0;
    bool writing_ = false;
    bool closed_ = false;
    bool closing_ = false;
    std::string close_reason_;
};

// --- HTTP session ---------------------------------------------------------

class HttpSession : public std::enable_shared_from_this<HttpSession> {
public:
    HttpSession(tcp::socket&& socket, std::shared_ptr<const Shared> shared)
        : stream_(std::move(socket)), shared_(std::move(shared)) {}

    void run() { do_read(); }

private:
    void do_read() {
        parser_.emplace();
        parser_->body_limit(1 << 20);
        stream_.expires_after(std::chrono::seconds(30));
        http::async_read(stream_, buffer_, *parser_,
                         [self = shared_from_this()](beast::error_code ec, std::size_t) { self->on_read(ec); });
    }

    void on_read(beast::error_code ec) {
        if (ec) {
            beast::error_code ignored;
            stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
            return;
        }
        Request req = parser_->release();
        if (websocket::is_upgrade(req)) {
            const std::string target(req.target());
            if (target.substr(0, target.find('?')) == "/api/stream" && shared_->model) {
                stream_.expires_never();
                std::make_shared<StreamSession>(stream_.release_socket(), shared_)->run(std::move(req));
                return;
            }
            const auto status = shared_->model ? http::status::not_found : http::status::service_unavailable;
            send(text_response(req, status, error_json(shared_->model ? "not found" : "no model loaded")));
            return;
        }
        send(handle_http(*shared_, std::move(req)));
    }

    void send(http::response<http::string_body>&& msg) {
        const bool keep_alive = msg.keep_alive();
        auto res = std::make_shared<http::response<http::string_body>>(std::move(msg));
        http::async_write(stream_, *res,
                           [self = shared_from_this(), res, keep_alive](beast::error_code ec, std::size_t) {
                               if (ec) return;
                               if (!keep_alive) {
                                   beast::error_code ignored;
                                   self->stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
                                   return;
                               }
                               self->do_read();
                           });
    }

    beast::tcp_stream stream_;
    beast::flat_buffer buffer_;
    std::shared_ptr<const Shared> shared_;
    std::optional<http::request_parser<http::string_body>> parser_;
};

}  // namespace

struct Service::Impl {
    asio::io_context ioc{1};
    tcp::acceptor acceptor{ioc};
    std::shared_ptr<const Shared> shared;
    std::thread thread;
    std::uint16_t port = 0;

    void do_accept() {
        acceptor.async_accept(asio::make_strand(ioc), [this](beast::error_code ec, tcp::socket socket) {
            if (ec) {
                if (ec == asio::error::operation_aborted) return;
            } else {
                std::make_shared<HttpSession>(std::move(socket), shared)->run();
            }
            do_accept();
        });
    }
};

Service::Service(std::shared_ptr<const AaeModel> model, ServiceConfig config) : impl_(std::make_unique<Impl>()) {
    if (config.static_dir && !std::filesystem::is_directory(*config.static_dir)) {
        throw Error(ErrorKind::config, "static directory does not exist: " + config.static_dir->string());
    }
    impl_->shared = std::make_shared<const Shared>(Shared{std::move(model), std::move(config)});
}

Service::~Service() { stop(); }

std::uint16_t Service::start() {
    const auto& cfg = impl_->shared->config;
    beast::error_code ec;
    const auto address = asio::ip::make_address(cfg.host, ec);
    if (ec) throw Error(ErrorKind::config, "bad bind address: " + cfg.host);
    const tcp::endpoint endpoint{address, cfg.port};
    impl_->acceptor.open(endpoint.protocol(), ec);
    if (!ec) impl_->acceptor.set_option(asio::socket_base::reuse_address(true), ec);
    if (!ec) impl_->acceptor.bind(endpoint, ec);
    if (!ec) impl_->acceptor.listen(asio::socket_base::max_listen_connections, ec);
    if (ec) throw Error(ErrorKind::config, "cannot listen on " + cfg.host + ":" + std::to_string(cfg.port) + ": " + ec.message());
    impl_->port = impl_->acceptor.local_endpoint().port();
    impl_->do_accept();
    impl_->thread = std::thread([this] { impl_->ioc.run(); });
    return impl_->port;
}

void Service::wait() {
    if (impl_->thread.joinable()) impl_->thread.join();
}

void Service::stop() {
    if (!impl_) return;
    impl_->ioc.stop();
    if (impl_->thread.joinable() && impl_->thread.get_id() != std::this_thread::get_id()) impl_->thread.join();
}

std::uint16_t Service::port() const { return impl_->port; }

}  // namespace sounderfeit
