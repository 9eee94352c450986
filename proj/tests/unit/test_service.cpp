#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include <chrono>
#include <cstdlib>
#include <cstring>
#include <fstream>

#include "doctest.h"
#include "httplib.h"
#include "json.hpp"
#include "sounderfeit/error.hpp"
#include "sounderfeit/service.hpp"
#include "sounderfeit/synthengine.hpp"
#include "support.hpp"

using namespace sounderfeit;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = boost::asio::ip::tcp;
using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

std::shared_ptr<const AaeModel> test_model() {
    static const auto m = [] {
        TrainConfig cfg;
        cfg.n_batches = 200;
        cfg.seed = 1;
        return std::make_shared<const AaeModel>(train(testing::toy_corpus(100, 1), condition_by_name("D1_Z2_Y"), cfg).model);
    }();
    return m;
}

struct Running {
    explicit Running(std::shared_ptr<const AaeModel> model, ServiceConfig cfg = {}) : service(std::move(model), [&] {
        cfg.port = 0;
        return cfg;
    }()) {
        port = service.start();
    }
    Service service;
    std::uint16_t port;
};

// Blocking WebSocket client.
class WsClient {
public:
    explicit WsClient(std::uint16_t port) : ws_(ioc_) {
        tcp::resolver resolver(ioc_);
        boost::asio::connect(ws_.next_layer(), resolver.resolve("127.0.0.1", std::to_string(port)));
        ws_.handshake("127.0.0.1", "/api/stream");
    }
    void send(const std::string& text) {
        ws_.text(true);
        ws_.write(boost::asio::buffer(text));
    }
    // Returns (is_binary, payload); throws on close.
    std::pair<bool, std::string> read() {
        beast::flat_buffer buf;
        ws_.read(buf);
        return {ws_.got_binary(), beast::buffers_to_string(buf.data())};
    }
    // Reads until a text message arrives, collecting binary frames.
    json read_text(std::vector<std::string>* frames = nullptr) {
        for (;;) {
            auto [bin, data] = read();
            if (!bin) return json::parse(data);
            if (frames) frames->push_back(std::move(data));
        }
    }
    websocket::stream<tcp::socket>& ws() { return ws_; }

private:
    boost::asio::io_context ioc_;
    websocket::stream<tcp::socket> ws_;
};

std::vector<float> decode_frame(const std::string& bytes) {
    std::vector<float> out(bytes.size() / 4);
    for (std::size_t i = 0; i < out.size(); ++i) {
        std::uint32_t bits = 0;
        for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[i * 4 + b])) << (8 * b);
        std::memcpy(&out[i], &bits, 4);
    }
    return out;
}

}  // namespace

TEST_CASE("port resolution") {
    ::unsetenv(kPortEnvVar);
    CHECK(resolve_port(std::nullopt) == kDefaultPort);
    CHECK(resolve_port(std::uint16_t{9000}) == 9000);
    ::setenv(kPortEnvVar, "7123", 1);
    CHECK(resolve_port(std::nullopt) == 7123);
    CHECK(resolve_port(std::uint16_t{9000}) == 9000);
    ::setenv(kPortEnvVar, "port", 1);
    CHECK_THROWS_AS(resolve_port(std::nullopt), Error);
    ::setenv(kPortEnvVar, "70000", 1);
    CHECK_THROWS_AS(resolve_port(std::nullopt), Error);
    ::unsetenv(kPortEnvVar);
}

TEST_CASE("model metadata") {
    Running srv(test_model());
    httplib::Client cli("127.0.0.1", srv.port);
    const auto a = cli.Get("/api/model");
    REQUIRE(a);
    CHECK(a->status == 200);
    const auto j = json::parse(a->body);
    CHECK(j["condition"] == "D1_Z2_Y");
    CHECK(j["n_latent"] == 1);
    CHECK(j["n_cond"] == 2);
    CHECK(j["corpus_hash"] == test_model()->corpus_hash);
    REQUIRE(j["params"].size() == 3);
    CHECK(j["params"][0]["name"] == "y0");
    CHECK(j["params"][2]["name"] == "z0");
    const auto b = cli.Get("/api/model");
    CHECK(b->body == a->body);
}

TEST_CASE("no model loaded is a 503") {
    Running srv(nullptr);
    httplib::Client cli("127.0.0.1", srv.port);
    CHECK(cli.Get("/api/model")->status == 503);
    CHECK(cli.Post("/api/render", R"({"duration":1})", "application/json")->status == 503);
}

TEST_CASE("render endpoint") {
    Running srv(test_model());
    httplib::Client cli("127.0.0.1", srv.port);
    const auto a = cli.Post("/api/render", R"({"duration":1})", "application/json");
    REQUIRE(a);
    CHECK(a->status == 200);
    CHECK(a->body.size() == 96044);
    CHECK(a->get_header_value("Content-Type") == "audio/wav");
    const std::string curve = R"({"duration":0.5,"curve":[{"t":0,"y0":-1},{"t":0.5,"y0":1,"z0":0.3}]})";
    const auto b = cli.Post("/api/render", curve, "application/json");
    const auto c = cli.Post("/api/render", curve, "application/json");
    CHECK(b->status == 200);
    CHECK(b->body == c->body);
    CHECK(b->body.size() == 44 + 48000);
    for (const char* bad : {R"({"duration":0})", R"({"duration":-1})", R"({})", "garbage",
                            R"({"duration":1,"curve":[{"t":0,"w9":1}]})", R"({"duration":1,"curve":[{"t":1},{"t":0}]})"}) {
        CAPTURE(bad);
        const auto r = cli.Post("/api/render", bad, "application/json");
        CHECK(r->status == 400);
        CHECK(json::parse(r->body).contains("error"));
    }
    // The endpoint produces the same bytes as the library path.
    ControlCurve cc = constant_curve(make_snapshot(*test_model()));
    CHECK(a->body == std::string(reinterpret_cast<const char*>(wav_bytes(render_samples(*test_model(), cc, 1.0)).data()), 96044));
}

TEST_CASE("static files") {
    testing::TempDir dir("static");
    std::ofstream(dir / "index.html") << "<html>hi</html>";
    std::filesystem::create_directories(dir / "js");
    std::ofstream(dir / "js" / "app.js") << "console.log(1)";
    std::ofstream(dir.path().parent_path() / "secret.txt") << "no";
    ServiceConfig cfg;
    cfg.static_dir = dir.path();
    Running srv(test_model(), cfg);
    httplib::Client cli("127.0.0.1", srv.port);
    const auto root = cli.Get("/");
    CHECK(root->status == 200);
    CHECK(root->body == "<html>hi</html>");
    CHECK(root->get_header_value("Content-Type").rfind("text/html", 0) == 0);
    const auto js = cli.Get("/js/app.js");
    CHECK(js->body == "console.log(1)");
    CHECK(js->get_header_value("Content-Type") == "text/javascript");
    CHECK(cli.Get("/missing.css")->status == 404);
    CHECK(cli.Get("/../secret.txt")->status == 404);
    CHECK(cli.Get("/js/../../secret.txt")->status == 404);
    std::filesystem::remove(dir.path().parent_path() / "secret.txt");

    Running bare(test_model());
    httplib::Client c2("127.0.0.1", bare.port);
    CHECK(c2.Get("/")->status == 404);
    CHECK_THROWS_AS(Service(test_model(), ServiceConfig{"127.0.0.1", 0, "/no/such/dir", 1}), Error);
}

TEST_CASE("stream cadence and frame size") {
    Running srv(test_model());
    WsClient ws(srv.port);
    const auto t0 = Clock::now();
    std::vector<Clock::time_point> arrivals;
    for (int i = 0; i < 21; ++i) {
        auto [bin, data] = ws.read();
        REQUIRE(bin);
        CHECK(data.size() == 19200);
        arrivals.push_back(Clock::now());
    }
    // One lead frame arrives at once, then 10 per second.
    const double span = std::chrono::duration<double>(arrivals.back() - arrivals[1]).count();
    CHECK(span == doctest::Approx(1.9).epsilon(0.1));
    const double first_second = std::chrono::duration<double>(arrivals[10] - t0).count();
    CHECK(first_second == doctest::Approx(0.9).epsilon(0.15));
}

TEST_CASE("stream audio is continuous and matches an offline render") {
    Running srv(test_model());
    WsClient ws(srv.port);
    std::vector<float> got;
    for (int i = 0; i < 5; ++i) {
        auto [bin, data] = ws.read();
        REQUIRE(bin);
        const auto f = decode_frame(data);
        got.insert(got.end(), f.begin(), f.end());
    }
    const auto ref = render_samples(*test_model(), constant_curve(make_snapshot(*test_model())), 0.5);
    REQUIRE(got.size() == ref.size());
    for (std::size_t i = 0; i < ref.size(); ++i) CHECK(got[i] == static_cast<float>(ref[i]));
}

TEST_CASE("control messages") {
    Running srv(test_model());
    WsClient ws(srv.port);
    ws.send(R"({"type":"set","name":"y0","value":2.0})");
    auto ack = ws.read_text();
    CHECK(ack["type"] == "ack");
    CHECK(ack["name"] == "y0");
    CHECK(ack["value"] == 1.0);

    ws.send(R"({"type":"set","name":"z0","value":-0.25})");
    CHECK(ws.read_text()["value"] == -0.25);
    ws.send(R"({"type":"set","name":"z0","value":0.5})");
    ws.read_text();
    ws.send(R"({"type":"get"})");
    auto state = ws.read_text();
    CHECK(state["type"] == "state");
    CHECK(state["values"]["y0"] == 1.0);
    CHECK(state["values"]["z0"] == 0.5);  // last write wins
    CHECK(state["values"]["y1"] == 0.0);

    ws.send(R"({"type":"set","name":"q7","value":0.1})");
    auto err = ws.read_text();
    CHECK(err["type"] == "error");
    // Stream continues after an error frame.
    auto [bin, data] = ws.read();
    CHECK(bin);
    CHECK(data.size() == 19200);
}

TEST_CASE("control changes are audible within 200 ms of audio") {
    Running srv(test_model());
    WsClient ws(srv.port);
    ws.read();  // lead frame
    ws.send(R"({"type":"set","name":"y0","value":0.9})");
    std::vector<std::string> frames;
    ws.read_text(&frames);
    // Every frame produced after the ack carries the change; at most the
    // frames already in flight (lead + one) precede it.
    auto [bin, data] = ws.read();
    REQUIRE(bin);
    frames.push_back(data);
    CHECK(frames.size() <= 3);

    // Compare the post-ack frame against the unchanged render at the same
    // stream position.
    const std::size_t pos_frames = frames.size();  // lead frame + pre-ack frames
    const auto ref = render_samples(*test_model(), constant_curve(make_snapshot(*test_model())), 0.1 * (pos_frames + 1));
    const auto f = decode_frame(data);
    double diff = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) diff = std::max(diff, std::abs(f[i] - ref[pos_frames * 4800 + i]));
    CHECK(diff > 1e-4);
}

TEST_CASE("malformed messages close with a protocol error") {
    Running srv(test_model());
    for (const char* bad : {"{nope", R"({"name":"y0"})", R"({"type":"set","name":"y0"})", R"({"type":"set","name":3,"value":1})", "[1,2]"}) {
        CAPTURE(bad);
        WsClient ws(srv.port);
        ws.send(bad);
        bool closed = false;
        try {
            for (int i = 0; i < 20; ++i) ws.read();
        } catch (const beast::system_error& e) {
            closed = e.code() == websocket::error::closed;
        }
        CHECK(closed);
        CHECK(ws.ws().reason().code == websocket::close_code::protocol_error);
    }
}

TEST_CASE("sessions are independent") {
    Running srv(test_model());
    WsClient a(srv.port), b(srv.port);
    a.send(R"({"type":"set","name":"y0","value":0.7})");
    a.read_text();
    b.send(R"({"type":"get"})");
    CHECK(b.read_text()["values"]["y0"] == 0.0);
}
