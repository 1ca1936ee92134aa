#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "slrkit/common.hpp"
#include "slrkit/stream.hpp"

#include "test_support.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <nlohmann/json.hpp>

#include <cmath>
#include <sstream>
#include <thread>

using namespace slrkit;
using json = nlohmann::json;

namespace {

FrameMessage make_frame(int64_t t, int64_t keypoints, float value = 0.0f) {
    FrameMessage f;
    f.t = t;
    for (int64_t k = 0; k < keypoints; ++k) {
        f.kps.push_back(value + static_cast<float>(k));
        f.kps.push_back(static_cast<float>(t));
    }
    f.valid.assign(static_cast<size_t>(keypoints), 1);
    return f;
}

FrozenModel tiny_model(int classes = 3, int keypoints = 5) {
    FrozenModel model;
    model.config.variant = "lstm";
    model.config.num_classes = classes;
    model.config.input_keypoints = keypoints;
    model.config.lstm = {1, 8, true, 8};
    model.params = init_parameters(model.config, 77);
    for (int64_t k = 0; k < keypoints; ++k) model.selection.indices.push_back(k);
    model.selection.shoulder_left = 0;
    model.selection.shoulder_right = 1;
    for (int c = 0; c < classes; ++c) model.labels.push_back("G" + std::to_string(c));
    return model;
}

}  // namespace

TEST_CASE("assembler emits one window per second at 30fps with window 60 stride 30") {
    WindowAssembler assembler(5, 60, 30, 30.0f);
    int64_t windows = 0;
    for (int64_t t = 0; t < 300; ++t)
        windows += static_cast<int64_t>(assembler.feed(make_frame(t, 5)).size());
    // frames 60, 90, 120, ... 300 complete a window: one per 30 frames = 1/s
    CHECK(windows == 9);
    CHECK(assembler.windows_emitted() == 9);
}

TEST_CASE("stride equal to window length gives non-overlapping windows") {
    WindowAssembler assembler(3, 10, 10, 30.0f);
    std::vector<PoseSequence> all;
    for (int64_t t = 0; t < 57; ++t)
        for (auto& w : assembler.feed(make_frame(t, 3))) all.push_back(std::move(w));
    CHECK(all.size() == 5);  // floor(57/10)
    // windows tile the stream: first frame of window i is frame 10*i
    for (size_t i = 0; i < all.size(); ++i)
        CHECK(all[i].at(0, 0, 1) == static_cast<float>(10 * i));
}

TEST_CASE("too few frames produce zero windows; non-monotone t is rejected") {
    WindowAssembler assembler(4, 60, 30, 30.0f);
    for (int64_t t = 0; t < 5; ++t) CHECK(assembler.feed(make_frame(t, 4)).empty());
    CHECK(assembler.windows_emitted() == 0);
    CHECK_THROWS_AS(assembler.feed(make_frame(2, 4)), InvalidArgument);
}

TEST_CASE("window queue drops the oldest on overflow and drains on close") {
    WindowQueue queue(2);
    queue.push({0, PoseSequence::zeros(1, 1)});
    queue.push({1, PoseSequence::zeros(1, 1)});
    queue.push({2, PoseSequence::zeros(1, 1)});  // evicts id 0
    CHECK(queue.dropped() == 1);
    CHECK(queue.depth() == 2);
    queue.close();
    auto a = queue.pop();
    auto b = queue.pop();
    auto end = queue.pop();
    REQUIRE(a.has_value());
    REQUIRE(b.has_value());
    CHECK(a->id == 1);
    CHECK(b->id == 2);
    CHECK_FALSE(end.has_value());
}

TEST_CASE("predict_window is deterministic, ranked, and validates k") {
    FrozenModel model = tiny_model();
    PoseSequence window = PoseSequence::zeros(12, 5);
    RandomSource rng(3);
    for (auto& x : window.data) x = static_cast<float>(rng.uniform_real(-1.0, 1.0));

    PredictionMessage a = predict_window(model, window, 3, 7);
    PredictionMessage b = predict_window(model, window, 3, 7);
    CHECK(a.window_id == 7);
    REQUIRE(a.top_k.size() == 3);
    CHECK(a.top_k == b.top_k);  // frozen determinism
    CHECK(a.top_k[0].second >= a.top_k[1].second);
    CHECK(a.top_k[1].second >= a.top_k[2].second);
    double total = 0.0;
    for (auto& [label, score] : a.top_k) total += score;
    CHECK(total == doctest::Approx(1.0).epsilon(1e-9));  // softmax over all 3 classes

    CHECK(predict_window(model, window, 1).top_k.size() == 1);
    CHECK_THROWS_AS(predict_window(model, window, 4), InvalidArgument);
    CHECK_THROWS_AS(predict_window(model, window, 0), InvalidArgument);
}

TEST_CASE("stream windows equal offline slices bitwise") {
    FrozenModel model = tiny_model();
    PoseSequence clip = PoseSequence::zeros(100, 5);
    RandomSource rng(5);
    for (auto& x : clip.data) x = static_cast<float>(rng.uniform_real(-1.0, 1.0));

    WindowAssembler assembler(5, 20, 10, 30.0f);
    std::vector<PoseSequence> streamed;
    for (int64_t t = 0; t < 100; ++t) {
        FrameMessage f;
        f.t = t;
        for (int64_t k = 0; k < 5; ++k) {
            f.kps.push_back(clip.at(t, k, 0));
            f.kps.push_back(clip.at(t, k, 1));
        }
        for (auto& w : assembler.feed(f)) streamed.push_back(std::move(w));
    }
    REQUIRE(streamed.size() == 9);
    for (size_t i = 0; i < streamed.size(); ++i) {
        int64_t start = static_cast<int64_t>(i) * 10;
        PoseSequence slice = PoseSequence::zeros(20, 5);
        std::copy(clip.data.begin() + start * 10, clip.data.begin() + (start + 20) * 10,
                  slice.data.begin());
        CHECK(streamed[i].data == slice.data);
        Tensor a = forward_logits(model.params, model.config, streamed[i], nullptr);
        Tensor b = forward_logits(model.params, model.config, slice, nullptr);
        CHECK(a.v == b.v);  // bitwise
    }
}

TEST_CASE("benchmark_latency reports one entry per sample per repetition") {
    testsupport::MiniCorpus mini("bench", 2, 3, 2, 15, 5, 90);
    FrozenModel model = tiny_model(2, 5);
    LatencyReport report = benchmark_latency(model, *mini.corpus, "val", 1, 2);
    CHECK(report.latencies_ms.size() == 4);  // 2 classes x 2 val samples
    CHECK(report.warmup_runs == 2);
    double mn = *std::min_element(report.latencies_ms.begin(), report.latencies_ms.end());
    double mx = *std::max_element(report.latencies_ms.begin(), report.latencies_ms.end());
    CHECK(report.mean_ms >= mn);
    CHECK(report.mean_ms <= mx);
    CHECK(!report.host.empty());
    CHECK_THROWS_AS(benchmark_latency(model, *mini.corpus, "nope", 1), NotFound);
}

namespace {

// Minimal blocking line client for the TCP tests.
struct Client {
    int fd = -1;
    std::string buffer;
    explicit Client(int port) {
        fd = ::socket(AF_INET, SOCK_STREAM, 0);
        REQUIRE(fd >= 0);
        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_port = htons(static_cast<uint16_t>(port));
        inet_pton(AF_INET, "127.0.0.1", &addr.sin_addr);
        REQUIRE(::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) == 0);
    }
    ~Client() {
        if (fd >= 0) ::close(fd);
    }
    void send_line(const std::string& line) {
        std::string out = line + "\n";
        REQUIRE(::send(fd, out.data(), out.size(), MSG_NOSIGNAL) ==
                static_cast<ssize_t>(out.size()));
    }
    bool read_line(std::string& line) {
        for (;;) {
            auto pos = buffer.find('\n');
            if (pos != std::string::npos) {
                line = buffer.substr(0, pos);
                buffer.erase(0, pos + 1);
                return true;
            }
            char chunk[4096];
            ssize_t n = ::read(fd, chunk, sizeof(chunk));
            if (n <= 0) return false;
            buffer.append(chunk, static_cast<size_t>(n));
        }
    }
    void shutdown_write() { ::shutdown(fd, SHUT_WR); }
};

json frame_json(int64_t t, int64_t keypoints) {
    json kps = json::array();
    for (int64_t k = 0; k < keypoints; ++k)
        kps.push_back(json::array({0.1 * static_cast<double>(k), 0.01 * static_cast<double>(t)}));
    return {{"type", "frame"}, {"t", t}, {"kps", kps}};
}

}  // namespace

TEST_CASE("TCP sessions: handshake, predictions, stats, isolation, malformed input") {
    ServeConfig sc;
    sc.window_len = 10;
    sc.stride = 5;
    sc.queue_depth = 4;
    sc.top_k = 2;
    StreamServer server(tiny_model(), sc);
    server.start();
    REQUIRE(server.port() > 0);

    SUBCASE("single session end to end") {
        Client client(server.port());
        client.send_line(json{{"type", "hello"}, {"k", 5}, {"fps", 30}, {"format_version", 1}}.dump());
        for (int64_t t = 0; t < 25; ++t) client.send_line(frame_json(t, 5).dump());
        client.shutdown_write();
        std::string line;
        int predictions = 0;
        json stats;
        while (client.read_line(line)) {
            json msg = json::parse(line);
            if (msg["type"] == "prediction") {
                CHECK(msg["window_id"] == predictions);
                CHECK(msg["top_k"].size() == 2);
                CHECK(msg.contains("latency_ms"));
                ++predictions;
            } else if (msg["type"] == "stats") {
                stats = msg;
            }
        }
        CHECK(predictions == 4);  // windows complete at frames 10, 15, 20, 25
        CHECK(stats["windows_emitted"] == 4);
        CHECK(stats["windows_dropped"] == 0);
    }

    SUBCASE("two concurrent sessions have independent window ids") {
        Client a(server.port()), b(server.port());
        json hello = {{"type", "hello"}, {"k", 5}, {"fps", 30}, {"format_version", 1}};
        a.send_line(hello.dump());
        b.send_line(hello.dump());
        for (int64_t t = 0; t < 15; ++t) {
            a.send_line(frame_json(t, 5).dump());
            b.send_line(frame_json(t, 5).dump());
        }
        a.shutdown_write();
        b.shutdown_write();
        for (Client* c : {&a, &b}) {
            std::string line;
            std::vector<int64_t> ids;
            while (c->read_line(line)) {
                json msg = json::parse(line);
                if (msg["type"] == "prediction") ids.push_back(msg["window_id"].get<int64_t>());
            }
            CHECK(ids == std::vector<int64_t>{0, 1});
        }
    }

    SUBCASE("malformed message gets an error reply and the session closes") {
        Client client(server.port());
        client.send_line(json{{"type", "hello"}, {"k", 5}, {"fps", 30}, {"format_version", 1}}.dump());
        client.send_line("{not json");
        std::string line;
        bool got_error = false;
        while (client.read_line(line)) {
            json msg = json::parse(line);
            if (msg["type"] == "error") got_error = true;
        }
        CHECK(got_error);
    }

    SUBCASE("wrong keypoint count in the handshake is refused") {
        Client client(server.port());
        client.send_line(json{{"type", "hello"}, {"k", 9}, {"fps", 30}, {"format_version", 1}}.dump());
        std::string line;
        REQUIRE(client.read_line(line));
        CHECK(json::parse(line)["type"] == "error");
    }

    server.stop();
}

TEST_CASE("overwhelmed session drops windows but stays alive") {
    // stgcn is slow enough that a full-speed producer outruns it
    FrozenModel model;
    model.config.variant = "stgcn";
    model.config.num_classes = 3;
    model.config.input_keypoints = 5;
    model.config.stgcn = {{16, 32, 32}, {1, 1, 1}, 9};
    model.params = init_parameters(model.config, 9);
    model.graph = make_skeleton_graph(5, {{0, 1}, {1, 2}, {2, 3}, {3, 4}});
    model.selection.indices = {0, 1, 2, 3, 4};
    model.selection.shoulder_left = 0;
    model.selection.shoulder_right = 1;

    ServeConfig sc;
    sc.window_len = 30;
    sc.stride = 1;  // a window per frame: far faster than the model
    sc.queue_depth = 2;
    sc.top_k = 1;
    StreamServer server(std::move(model), sc);

    std::ostringstream feed;
    feed << json{{"type", "hello"}, {"k", 5}, {"fps", 30}, {"format_version", 1}}.dump() << "\n";
    for (int64_t t = 0; t < 600; ++t) feed << frame_json(t, 5).dump() << "\n";
    std::istringstream in(feed.str());
    std::ostringstream out;
    server.run_stdio(in, out);

    json stats;
    std::istringstream result(out.str());
    std::string line;
    while (std::getline(result, line)) {
        json msg = json::parse(line);
        if (msg["type"] == "stats") stats = msg;
    }
    REQUIRE(!stats.is_null());  // the session survived to the stats line
    CHECK(stats["windows_emitted"] == 571);
    CHECK(stats["windows_dropped"].get<int64_t>() > 0);
    CHECK(stats["predictions"].get<int64_t>() + stats["windows_dropped"].get<int64_t>() == 571);
}
