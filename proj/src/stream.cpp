#include "slrkit/stream.hpp"

#include "slrkit/common.hpp"

#include <nlohmann/json.hpp>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <istream>
#include <ostream>
#include <sstream>

using json = nlohmann::json;

namespace slrkit {

// ---------------------------------------------------------------------------
// window assembly
// ---------------------------------------------------------------------------

WindowAssembler::WindowAssembler(int64_t keypoints, int64_t window_len, int64_t stride, float fps)
    : keypoints_(keypoints), window_len_(window_len), stride_(stride), fps_(fps) {
    if (keypoints < 1 || window_len < 1 || stride < 1)
        throw InvalidArgument("window_assembler: keypoints, window_len and stride must be >= 1");
}

std::vector<PoseSequence> WindowAssembler::feed(const FrameMessage& frame) {
    if (frame.t <= last_t_)
        throw InvalidArgument("window_assembler: non-monotone frame index " +
                              std::to_string(frame.t) + " after " + std::to_string(last_t_));
    if (static_cast<int64_t>(frame.kps.size()) != keypoints_ * 2)
        throw InvalidArgument("window_assembler: expected " + std::to_string(keypoints_) +
                              " keypoints, got " + std::to_string(frame.kps.size() / 2));
    if (!frame.valid.empty() && static_cast<int64_t>(frame.valid.size()) != keypoints_)
        throw InvalidArgument("window_assembler: valid flag count mismatch");
    last_t_ = frame.t;
    buffer_.push_back(frame);
    if (static_cast<int64_t>(buffer_.size()) > window_len_) buffer_.pop_front();
    ++frames_seen_;

    std::vector<PoseSequence> out;
    // window i covers frames [i*stride, i*stride + window_len)
    if (frames_seen_ >= window_len_ && (frames_seen_ - window_len_) % stride_ == 0) {
        PoseSequence window = PoseSequence::zeros(window_len_, keypoints_, fps_);
        for (int64_t f = 0; f < window_len_; ++f) {
            const FrameMessage& src = buffer_[static_cast<size_t>(f)];
            for (int64_t k = 0; k < keypoints_; ++k) {
                window.at(f, k, 0) = src.kps[static_cast<size_t>(2 * k)];
                window.at(f, k, 1) = src.kps[static_cast<size_t>(2 * k + 1)];
                bool ok = src.valid.empty() || src.valid[static_cast<size_t>(k)] != 0;
                window.set_valid(f, k, ok);
                if (!ok) {
                    window.at(f, k, 0) = 0.0f;
                    window.at(f, k, 1) = 0.0f;
                }
            }
        }
        ++windows_emitted_;
        out.push_back(std::move(window));
    }
    return out;
}

WindowQueue::WindowQueue(int64_t max_depth) : max_depth_(max_depth) {
    if (max_depth < 1) throw InvalidArgument("window queue depth must be >= 1");
}

void WindowQueue::push(PendingWindow window) {
    std::lock_guard<std::mutex> lock(mutex_);
    if (closed_) return;
    if (static_cast<int64_t>(queue_.size()) == max_depth_) {
        queue_.pop_front();  // drop-oldest: a stale window is worthless live
        dropped_.fetch_add(1);
    }
    queue_.push_back(std::move(window));
    cv_.notify_one();
}

std::optional<PendingWindow> WindowQueue::pop() {
    std::unique_lock<std::mutex> lock(mutex_);
    cv_.wait(lock, [&] { return closed_ || !queue_.empty(); });
    if (queue_.empty()) return std::nullopt;
    PendingWindow w = std::move(queue_.front());
    queue_.pop_front();
    return w;
}

void WindowQueue::close() {
    std::lock_guard<std::mutex> lock(mutex_);
    closed_ = true;
    cv_.notify_all();
}

int64_t WindowQueue::depth() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return static_cast<int64_t>(queue_.size());
}

// ---------------------------------------------------------------------------
// prediction
// ---------------------------------------------------------------------------

std::string FrozenModel::label_of(int64_t cls) const {
    if (cls >= 0 && cls < static_cast<int64_t>(labels.size()))
        return labels[static_cast<size_t>(cls)];
    return "CLASS_" + std::to_string(cls);
}

PredictionMessage predict_window(const FrozenModel& model, const PoseSequence& window, int64_t k,
                                 int64_t window_id) {
    int64_t classes = model.config.num_classes;
    if (k < 1 || k > classes)
        throw InvalidArgument("predict_window: k=" + std::to_string(k) +
                              " outside [1, num_classes=" + std::to_string(classes) + "]");
    auto t0 = std::chrono::steady_clock::now();
    PoseSequence pose = window;
    if (!model.normalization.empty()) {
        RandomSource rng(0);  // normalization pipelines are deterministic
        pose = compose(model.normalization, pose, model.selection, rng);
    }
    Tensor logits = forward_logits(model.params, model.config, pose, model.graph_ptr());
    auto t1 = std::chrono::steady_clock::now();

    // softmax scores, ranked descending with lowest-index tie-break
    double mx = *std::max_element(logits.v.begin(), logits.v.end());
    double denom = 0.0;
    for (double v : logits.v) denom += std::exp(v - mx);
    std::vector<int64_t> order(static_cast<size_t>(classes));
    for (int64_t c = 0; c < classes; ++c) order[static_cast<size_t>(c)] = c;
    std::stable_sort(order.begin(), order.end(), [&](int64_t a, int64_t b) {
        return logits.v[static_cast<size_t>(a)] > logits.v[static_cast<size_t>(b)];
    });

    PredictionMessage msg;
    msg.window_id = window_id;
    msg.latency_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    for (int64_t i = 0; i < k; ++i) {
        int64_t cls = order[static_cast<size_t>(i)];
        double score = std::exp(logits.v[static_cast<size_t>(cls)] - mx) / denom;
        msg.top_k.emplace_back(model.label_of(cls), score);
    }
    return msg;
}

// ---------------------------------------------------------------------------
// latency benchmark
// ---------------------------------------------------------------------------

namespace {

std::string host_descriptor() {
    std::ifstream f("/proc/cpuinfo");
    std::string line;
    while (std::getline(f, line)) {
        if (line.rfind("model name", 0) == 0) {
            auto pos = line.find(':');
            if (pos != std::string::npos) {
                std::string name = line.substr(pos + 1);
                size_t start = name.find_first_not_of(' ');
                return start == std::string::npos ? name : name.substr(start);
            }
        }
    }
    return "unknown-host";
}

double percentile_nearest_rank(std::vector<double> sorted, double q) {
    size_t idx = static_cast<size_t>(q * static_cast<double>(sorted.size() - 1));
    return sorted[idx];
}

}  // namespace

LatencyReport benchmark_latency(const FrozenModel& model, const Corpus& corpus,
                                const std::string& split, int64_t repetitions, int64_t warmup) {
    const auto& ids = corpus.split(split);
    if (ids.empty()) throw InvalidArgument("benchmark_latency: empty split");
    if (repetitions < 1) throw InvalidArgument("benchmark_latency: repetitions must be >= 1");

    // batch size 1 with complete serial processing: samples are loaded and
    // normalized up front so the timed region is the forward alone
    std::vector<PoseSequence> poses;
    poses.reserve(ids.size());
    for (const auto& id : ids) {
        PoseSequence pose = corpus.get(id).pose;
        if (!model.normalization.empty()) {
            RandomSource rng(0);
            pose = compose(model.normalization, pose, model.selection, rng);
        }
        poses.push_back(std::move(pose));
    }

    LatencyReport report;
    report.model_id = model.config.variant + ":" + model.config.config_hash().substr(0, 12);
    report.host = host_descriptor();
    report.warmup_runs = warmup;
    for (int64_t w = 0; w < warmup; ++w)
        forward_logits(model.params, model.config, poses[static_cast<size_t>(w % poses.size())],
                       model.graph_ptr());
    for (int64_t rep = 0; rep < repetitions; ++rep) {
        for (const auto& pose : poses) {
            auto t0 = std::chrono::steady_clock::now();
            forward_logits(model.params, model.config, pose, model.graph_ptr());
            auto t1 = std::chrono::steady_clock::now();
            report.latencies_ms.push_back(
                std::chrono::duration<double, std::milli>(t1 - t0).count());
        }
    }
    double sum = 0.0;
    for (double v : report.latencies_ms) sum += v;
    report.mean_ms = sum / static_cast<double>(report.latencies_ms.size());
    std::vector<double> sorted = report.latencies_ms;
    std::sort(sorted.begin(), sorted.end());
    report.p50_ms = percentile_nearest_rank(sorted, 0.50);
    report.p95_ms = percentile_nearest_rank(sorted, 0.95);
    return report;
}

// ---------------------------------------------------------------------------
// serving
// ---------------------------------------------------------------------------

namespace {

struct LineIo {
    std::function<bool(std::string&)> read_line;
    std::function<bool(const std::string&)> write_line;
};

// One session: frame assembler feeding a bounded queue, predictor draining
// it; both joined on EOF so in-flight windows are delivered.
void run_session(const FrozenModel& model, const ServeConfig& config, LineIo io) {
    std::mutex write_mutex;
    auto send = [&](const json& obj) {
        std::lock_guard<std::mutex> lock(write_mutex);
        return io.write_line(obj.dump());
    };
    auto fail = [&](const std::string& message) {
        send({{"type", "error"}, {"message", message}});
    };

    std::string line;
    json hello;
    // frames may be preceded by blank lines; the first message must be hello
    for (;;) {
        if (!io.read_line(line)) return;
        if (line.empty()) continue;
        try {
            hello = json::parse(line);
        } catch (const std::exception& e) {
            fail(std::string("malformed handshake: ") + e.what());
            return;
        }
        break;
    }
    if (hello.value("type", "") != "hello" || !hello.contains("k")) {
        fail("expected a hello message with fields k, fps, format_version");
        return;
    }
    if (hello.value("format_version", 1) != 1) {
        fail("unsupported format_version");
        return;
    }
    int64_t k = hello["k"].get<int64_t>();
    if (k != model.config.input_keypoints) {
        fail("session declares k=" + std::to_string(k) + " but the model expects " +
             std::to_string(model.config.input_keypoints));
        return;
    }
    float fps = hello.value("fps", 30.0f);

    WindowAssembler assembler(k, config.window_len, config.stride, fps);
    WindowQueue queue(config.queue_depth);
    std::atomic<int64_t> predictions{0};

    std::thread predictor([&] {
        while (auto pending = queue.pop()) {
            try {
                PredictionMessage msg =
                    predict_window(model, pending->pose, config.top_k, pending->id);
                json top_k = json::array();
                for (const auto& [label, score] : msg.top_k)
                    top_k.push_back(json::array({label, score}));
                send({{"type", "prediction"},
                      {"window_id", msg.window_id},
                      {"top_k", std::move(top_k)},
                      {"latency_ms", msg.latency_ms}});
                predictions.fetch_add(1);
            } catch (const std::exception& e) {
                fail(std::string("prediction failed: ") + e.what());
            }
        }
    });

    int64_t next_window_id = 0;
    bool failed = false;
    while (io.read_line(line)) {
        if (line.empty()) continue;
        json msg;
        try {
            msg = json::parse(line);
        } catch (const std::exception& e) {
            fail(std::string("malformed message: ") + e.what());
            failed = true;
            break;
        }
        std::string type = msg.value("type", "");
        if (type != "frame") {
            fail("unexpected message type '" + type + "'");
            failed = true;
            break;
        }
        try {
            FrameMessage frame;
            frame.t = msg.at("t").get<int64_t>();
            for (const auto& kp : msg.at("kps")) {
                frame.kps.push_back(kp.at(0).get<float>());
                frame.kps.push_back(kp.at(1).get<float>());
            }
            if (msg.contains("valid"))
                for (const auto& v : msg["valid"]) frame.valid.push_back(v.get<bool>() ? 1 : 0);
            for (PoseSequence& window : assembler.feed(frame))
                queue.push({next_window_id++, std::move(window)});
        } catch (const std::exception& e) {
            fail(std::string("bad frame: ") + e.what());
            failed = true;
            break;
        }
    }
    queue.close();  // graceful: the predictor drains in-flight windows
    predictor.join();
    if (!failed)
        send({{"type", "stats"},
              {"frames", assembler.frames_seen()},
              {"windows_emitted", assembler.windows_emitted()},
              {"windows_dropped", queue.dropped()},
              {"predictions", predictions.load()}});
}

LineIo fd_line_io(int fd, std::string& rdbuf) {
    LineIo io;
    io.read_line = [fd, &rdbuf](std::string& line) {
        for (;;) {
            auto pos = rdbuf.find('\n');
            if (pos != std::string::npos) {
                line = rdbuf.substr(0, pos);
                rdbuf.erase(0, pos + 1);
                if (!line.empty() && line.back() == '\r') line.pop_back();
                return true;
            }
            char chunk[4096];
            ssize_t n = ::read(fd, chunk, sizeof(chunk));
            if (n <= 0) {
                if (rdbuf.empty()) return false;
                line.swap(rdbuf);
                rdbuf.clear();
                return true;
            }
            rdbuf.append(chunk, static_cast<size_t>(n));
        }
    };
    io.write_line = [fd](const std::string& line) {
        std::string out = line + "\n";
        size_t sent = 0;
        while (sent < out.size()) {
            ssize_t n = ::send(fd, out.data() + sent, out.size() - sent, MSG_NOSIGNAL);
            if (n <= 0) return false;
            sent += static_cast<size_t>(n);
        }
        return true;
    };
    return io;
}

}  // namespace

StreamServer::StreamServer(FrozenModel model, ServeConfig config)
    : model_(std::move(model)), config_(std::move(config)) {}

StreamServer::~StreamServer() { stop(); }

void StreamServer::start() {
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (listen_fd_ < 0) throw IoError("serve: cannot create socket");
    int opt = 1;
    ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &opt, sizeof(opt));
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(static_cast<uint16_t>(config_.port));
    if (::inet_pton(AF_INET, config_.host.c_str(), &addr.sin_addr) != 1)
        throw InvalidArgument("serve: bad host address " + config_.host);
    if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
        ::close(listen_fd_);
        listen_fd_ = -1;
        throw IoError("serve: cannot bind " + config_.host + ":" + std::to_string(config_.port));
    }
    socklen_t len = sizeof(addr);
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
    if (::listen(listen_fd_, 16) != 0) throw IoError("serve: listen failed");
    running_ = true;
    accept_thread_ = std::thread([this] { accept_loop(); });
}

void StreamServer::accept_loop() {
    while (running_) {
        int fd = ::accept(listen_fd_, nullptr, nullptr);
        if (fd < 0) break;  // listen socket closed during stop()
        std::lock_guard<std::mutex> lock(sessions_mutex_);
        session_fds_.push_back(fd);
        session_threads_.emplace_back([this, fd] { session(fd); });
    }
}

void StreamServer::session(int fd) {
    std::string rdbuf;
    run_session(model_, config_, fd_line_io(fd, rdbuf));
    ::shutdown(fd, SHUT_RDWR);
    ::close(fd);
}

void StreamServer::stop() {
    if (!running_.exchange(false)) return;
    if (listen_fd_ >= 0) {
        ::shutdown(listen_fd_, SHUT_RDWR);
        ::close(listen_fd_);
        listen_fd_ = -1;
    }
    if (accept_thread_.joinable()) accept_thread_.join();
    {
        std::lock_guard<std::mutex> lock(sessions_mutex_);
        for (int fd : session_fds_) ::shutdown(fd, SHUT_RDWR);
    }
    for (auto& t : session_threads_)
        if (t.joinable()) t.join();
    session_threads_.clear();
    session_fds_.clear();
}

void StreamServer::run_stdio(std::istream& in, std::ostream& out) {
    LineIo io;
    io.read_line = [&in](std::string& line) { return static_cast<bool>(std::getline(in, line)); };
    io.write_line = [&out](const std::string& line) {
        out << line << "\n";
        out.flush();
        return static_cast<bool>(out);
    };
    run_session(model_, config_, io);
}

}  // namespace slrkit
