#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <sstream>
#include <thread>

#include "doctest.h"
#include "openrgbt/error.hpp"
#include "openrgbt/mock.hpp"
#include "openrgbt/protocol.hpp"
#include "openrgbt/server.hpp"
#include "openrgbt/transport.hpp"
#include "protocol_gen.hpp"
#include "support.hpp"

extern char** environ;

using namespace openrgbt;
using namespace openrgbt::protocol;

using testing::random_request;
using testing::random_response;

namespace {

std::shared_ptr<const MockSceneSet> one_scene_set() {
    MockScene scene;
    scene.id = "s0";
    scene.width = 32;
    scene.height = 24;
    scene.objects = {{Box(0.125, 0.125, 0.25, 0.5), "car", {200, 30, 30}, 210},
                     {Box(0.5, 0.25, 0.25, 0.5), "person", {30, 200, 30}, 230}};
    return std::make_shared<const MockSceneSet>(std::vector<MockScene>{scene});
}

const std::vector<std::string> kClasses{"unlabeled", "car", "person"};

/// Serves requests from an in-process mock, with scripted failures.
struct LoopbackTransport : Transport {
    MockBackend backend{one_scene_set(), kClasses};
    int fail_next = 0;
    bool bad_id = false;
    std::size_t embedding_override = 0;
    int calls = 0;

    std::string exchange(const std::string& id, const std::string& line) override {
        ++calls;
        if (fail_next > 0) {
            --fail_next;
            throw BackendError(id, "connection reset", true);
        }
        auto reply = nlohmann::json::parse(handle_line(backend, line));
        if (bad_id) {
            reply["id"] = "other";
        }
        if (embedding_override != 0 && reply["op"] == "embed_texts") {
            for (auto& e : reply["result"]["embeddings"]) {
                e = std::vector<double>(embedding_override, 0.5);
            }
        }
        return reply.dump();
    }
    std::string describe() const override { return "loopback"; }
};

RetryPolicy fast_retry(int retries) { return RetryPolicy{retries, std::chrono::milliseconds(1)}; }

} // namespace

TEST_CASE("base64") {
    const std::string text = "foobar";
    const std::vector<std::uint8_t> bytes(text.begin(), text.end());
    CHECK(base64_encode(std::span(bytes).first(0)).empty());
    CHECK(base64_encode(std::span(bytes).first(1)) == "Zg==");
    CHECK(base64_encode(std::span(bytes).first(2)) == "Zm8=");
    CHECK(base64_encode(bytes) == "Zm9vYmFy");
    CHECK(base64_decode("Zm9vYg==") == std::vector<std::uint8_t>{'f', 'o', 'o', 'b'});
    CHECK_THROWS_AS(base64_decode("Zm9"), InvalidInput);
    CHECK_THROWS_AS(base64_decode("Zm9v!mFy"), InvalidInput);

    std::mt19937_64 rng(503);
    for (int i = 0; i < 300; ++i) {
        std::vector<std::uint8_t> data(rng() % 40);
        for (auto& v : data) {
            v = static_cast<std::uint8_t>(rng());
        }
        REQUIRE(base64_decode(base64_encode(data)) == data);
    }
}

TEST_CASE("randomized message round trips") {
    std::mt19937_64 rng(509);
    for (int i = 0; i < 1000; ++i) {
        const Request req = random_request(rng);
        const std::string line = encode(req);
        REQUIRE(line.find('\n') == std::string::npos);
        REQUIRE(decode_request(line) == req);

        const Response resp = random_response(rng);
        const std::string rline = encode(resp);
        REQUIRE(rline.find('\n') == std::string::npos);
        REQUIRE(decode_response(rline) == resp);
    }
}

TEST_CASE("invalid UTF-8 is replaced on encode") {
    const Response r{"1", "detect_text", DetectResult{{RawDetection{Box(), "car\xc3", 0.5}}}};
    const Response back = decode_response(encode(r));
    CHECK(std::get<DetectResult>(back.body).detections[0].label == "car\xef\xbf\xbd");
}

TEST_CASE("decoding errors") {
    CHECK_THROWS_AS(decode_request("not json"), InvalidInput);
    CHECK_THROWS_AS(decode_request(R"({"id":"1","op":"teleport"})"), InvalidInput);
    CHECK_THROWS_AS(decode_request(R"({"id":"1","op":"embed_texts"})"), InvalidInput);
    CHECK_THROWS_AS(decode_request(R"({"id":"1","op":"segment","image_id":"x","image":"AAAA","boxes":[]})"),
                    InvalidInput);
    CHECK_THROWS_AS(decode_response(R"({"id":"1","ok":true,"result":{}})", "nonsense"), InvalidInput);
    // Detector boxes leaking past the frame are clamped rather than rejected.
    const auto r = decode_response(
        R"({"id":"1","ok":true,"result":{"detections":[{"box":[0.9,0.9,0.2,0.2],"label":"car","score":0.8},)"
        R"({"box":[1.5,0.1,0.1,0.1],"label":"car","score":0.8}]}})",
        "detect_text");
    const auto& dets = std::get<DetectResult>(r.body).detections;
    REQUIRE(dets.size() == 1);
    CHECK(dets[0].box.w() == doctest::Approx(0.1));

    const std::string hello_v2 = R"({"id":"1","ok":true,"result":{"protocol_version":2,"embedding_dim":4,"capabilities":[]}})";
    CHECK_THROWS_WITH_AS(decode_response(hello_v2, "hello"), doctest::Contains("protocol version 2"), InvalidInput);
    const auto legacy = decode_response(R"({"id":"1","ok":true,"result":{"embedding_dim":4,"capabilities":[]}})", "hello");
    CHECK(std::get<HelloResult>(legacy.body).embedding_dim == 4);
}

TEST_CASE("server error responses") {
    MockBackend backend(one_scene_set(), kClasses);
    auto reply = nlohmann::json::parse(handle_line(backend, "{{{"));
    CHECK(reply["ok"] == false);
    CHECK(reply["id"] == "");

    reply = nlohmann::json::parse(handle_line(backend, R"({"id":"q7","op":"teleport"})"));
    CHECK(reply["ok"] == false);
    CHECK(reply["id"] == "q7");
    CHECK(reply["error"].get<std::string>().find("teleport") != std::string::npos);

    // Unknown scene ids surface in-band.
    const Request req{"q8", DetectTextRequest{"nowhere", Raster(32, 24, 3), {"car"}}};
    reply = nlohmann::json::parse(handle_line(backend, encode(req)));
    CHECK(reply["ok"] == false);
    CHECK(reply["id"] == "q8");
    CHECK(reply["op"] == "detect_text");

    const Request hello{"h", HelloRequest{}};
    const auto resp = decode_response(handle_line(backend, encode(hello)));
    const auto& h = std::get<HelloResult>(resp.body);
    CHECK(h.embedding_dim == kClasses.size() + 1);
    CHECK(h.capabilities.size() == 6);

    std::istringstream in(encode(hello) + "\n\n" + encode(hello) + "\n");
    std::ostringstream out;
    serve_stream(backend, in, out);
    const std::string written = out.str();
    CHECK(std::count(written.begin(), written.end(), '\n') == 2);
}

TEST_CASE("remote backend over a loopback transport") {
    auto owned = std::make_unique<LoopbackTransport>();
    LoopbackTransport& t = *owned;
    RemoteBackend remote(std::move(owned), fast_retry(2));
    MockBackend local(one_scene_set(), kClasses);
    const Raster image = one_scene_set()->find("s0")->render().rgb();

    SUBCASE("results equal the in-process backend") {
        CHECK(remote.embedding_dim() == local.embedding_dim());
        CHECK(remote.capabilities() == local.capabilities());
        CHECK(remote.detect_text("s0", image, {"car", "person"}) == local.detect_text("s0", image, {"car", "person"}));
        const std::vector<Box> boxes{Box(0.1, 0.1, 0.3, 0.6), Box(0.0, 0.0, 0.05, 0.05)};
        CHECK(remote.segment("s0", image, boxes) == local.segment("s0", image, boxes));
        CHECK(remote.embed_texts({"car", "person"}) == local.embed_texts({"car", "person"}));
        const std::vector<CropInput> crops{{boxes[0], crop(image, boxes[0])}};
        CHECK(remote.embed_crops("s0", crops) == local.embed_crops("s0", crops));
        const std::vector<VisualPrompt> prompts{{"person", Box(0.2, 0.2, 0.3, 0.3), nullptr}};
        CHECK(remote.detect_visual("s0", image, prompts) == local.detect_visual("s0", image, prompts));
        const ImagePair pair(image, Raster(32, 24, 1, 7), "s0");
        const WeightMap a = remote.fusion_weights(pair);
        const WeightMap b = local.fusion_weights(pair);
        CHECK(std::equal(a.weights().begin(), a.weights().end(), b.weights().begin(), b.weights().end()));
    }
    SUBCASE("transient failures are retried") {
        t.fail_next = 2;
        CHECK(remote.embedding_dim() == 4);
        CHECK(t.calls == 3);
    }
    SUBCASE("retries are bounded") {
        t.fail_next = 3;
        try {
            remote.embedding_dim();
            FAIL("expected a backend error");
        } catch (const BackendError& e) {
            const std::string what = e.what();
            CHECK(what == "request r1: connection reset (after 3 attempts)");
            CHECK(e.request_id() == "r1");
        }
        CHECK(t.calls == 3);
    }
    SUBCASE("in-band errors are not retried") {
        remote.embedding_dim();
        const int before = t.calls;
        CHECK_THROWS_AS(remote.detect_text("nowhere", image, {"car"}), BackendError);
        CHECK(t.calls == before + 1);
    }
    SUBCASE("response ids must echo the request") {
        t.bad_id = true;
        CHECK_THROWS_WITH_AS(remote.embedding_dim(), doctest::Contains("does not echo"), BackendError);
    }
    SUBCASE("embedding length must match the handshake") {
        t.embedding_override = 3;
        CHECK_THROWS_WITH_AS(remote.embed_texts({"car"}), doctest::Contains("declared dimension"), BackendError);
    }
}

TEST_CASE("process transport against the CLI mock server") {
    testing::TempDir dir("proc");
    one_scene_set()->find("s0")->save(dir / "s0.json");
    const std::string command =
        std::string(OPENRGBT_CLI) + " mock-serve --scenes " + dir.path().string() + " --classes unlabeled,car,person";
    RemoteBackend remote(make_transport("process:" + command), fast_retry(1));
    MockBackend local(one_scene_set(), kClasses);
    const Raster image = one_scene_set()->find("s0")->render().rgb();
    CHECK(remote.embedding_dim() == 4);
    CHECK(remote.detect_text("s0", image, {"car", "person"}) == local.detect_text("s0", image, {"car", "person"}));
    CHECK(remote.embed_texts({"person"}) == local.embed_texts({"person"}));

    RemoteBackend dead(make_transport("process:false"), fast_retry(1));
    CHECK_THROWS_AS(dead.embedding_dim(), BackendError);
    CHECK_THROWS_AS(make_transport("ftp://x"), ConfigError);
}

TEST_CASE("http transport against the CLI mock server") {
    testing::TempDir dir("http");
    one_scene_set()->find("s0")->save(dir / "s0.json");
    const int port = 20000 + static_cast<int>(::getpid() % 20000);
    const std::string address = "127.0.0.1:" + std::to_string(port);
    const std::string scenes = dir.path().string();
    std::vector<std::string> args{OPENRGBT_CLI, "mock-serve", "--scenes", scenes, "--classes", "unlabeled,car,person",
                                  "--http", address};
    std::vector<char*> argv;
    for (auto& a : args) {
        argv.push_back(a.data());
    }
    argv.push_back(nullptr);
    pid_t pid = 0;
    REQUIRE(posix_spawn(&pid, OPENRGBT_CLI, nullptr, nullptr, argv.data(), environ) == 0);

    RemoteBackend remote(make_transport("http://" + address + "/rpc", std::chrono::milliseconds(2000)),
                         RetryPolicy{8, std::chrono::milliseconds(25)});
    MockBackend local(one_scene_set(), kClasses);
    const Raster image = one_scene_set()->find("s0")->render().rgb();
    std::size_t dim = 0;
    try {
        dim = remote.embedding_dim();
    } catch (const BackendError& e) {
        MESSAGE(e.what());
    }
    CHECK(dim == 4);
    if (dim == 4) {
        const std::vector<Box> boxes{Box(0.1, 0.1, 0.3, 0.6)};
        CHECK(remote.segment("s0", image, boxes) == local.segment("s0", image, boxes));
    }
    ::kill(pid, SIGTERM);
    int status = 0;
    ::waitpid(pid, &status, 0);
}
