#pragma once

#include "slrkit/models.hpp"
#include "slrkit/pose.hpp"
#include "slrkit/train.hpp"
#include "slrkit/transforms.hpp"

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <iosfwd>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace slrkit {

struct FrameMessage {
    int64_t t = 0;
    std::vector<float> kps;     // K pairs, x0,y0,x1,y1,...
    std::vector<uint8_t> valid; // K flags
};

/// Collects frames into overlapping windows of window_len frames emitted
/// every stride frames. Frame indices must be strictly increasing.
class WindowAssembler {
  public:
    WindowAssembler(int64_t keypoints, int64_t window_len, int64_t stride, float fps);

    /// Feeds one frame; returns the windows completed by it (0 or 1).
    std::vector<PoseSequence> feed(const FrameMessage& frame);

    int64_t frames_seen() const { return frames_seen_; }
    int64_t windows_emitted() const { return windows_emitted_; }

  private:
    int64_t keypoints_, window_len_, stride_;
    float fps_;
    int64_t last_t_ = -1;
    int64_t frames_seen_ = 0;
    int64_t windows_emitted_ = 0;
    std::deque<FrameMessage> buffer_;  // most recent window_len frames
};

struct PendingWindow {
    int64_t id = 0;
    PoseSequence pose;
};

/// Bounded pending-window queue. On overflow the oldest pending window is
/// dropped (freshest window wins) and the drop counter increments.
class WindowQueue {
  public:
    explicit WindowQueue(int64_t max_depth);

    void push(PendingWindow window);
    /// Blocks until a window or shutdown; empty optional = drained + closed.
    std::optional<PendingWindow> pop();
    void close();  // no more pushes; pops drain what is left

    int64_t dropped() const { return dropped_.load(); }
    int64_t depth() const;

  private:
    int64_t max_depth_;
    mutable std::mutex mutex_;
    std::condition_variable cv_;
    std::deque<PendingWindow> queue_;
    std::atomic<int64_t> dropped_{0};
    bool closed_ = false;
};

struct PredictionMessage {
    int64_t window_id = 0;
    std::vector<std::pair<std::string, double>> top_k;  // scores descending
    double latency_ms = 0.0;
};

/// Frozen inference bundle: checkpoint weights, model shape, skeleton,
/// gloss labels, and the normalization pipeline applied per window.
struct FrozenModel {
    ParameterSet params;
    ModelConfig config;
    SkeletonGraph graph;
    KeypointSelection selection;
    std::vector<std::string> labels;
    std::vector<TransformStep> normalization;

    const SkeletonGraph* graph_ptr() const {
        return config.variant == "stgcn" ? &graph : nullptr;
    }
    std::string label_of(int64_t cls) const;
};

/// Normalization + forward + top-k; latency_ms covers exactly those two.
/// k must be in [1, num_classes].
PredictionMessage predict_window(const FrozenModel& model, const PoseSequence& window, int64_t k,
                                 int64_t window_id = 0);

struct LatencyReport {
    std::vector<double> latencies_ms;  // per timed run, in execution order
    double mean_ms = 0.0;
    double p50_ms = 0.0;
    double p95_ms = 0.0;
    std::string model_id;
    std::string host;
    int64_t warmup_runs = 0;
};

/// Strictly serial batch-1 latency benchmark over a split; the first
/// `warmup` forwards are excluded from the report.
LatencyReport benchmark_latency(const FrozenModel& model, const Corpus& corpus,
                                const std::string& split, int64_t repetitions,
                                int64_t warmup = 5);

struct ServeConfig {
    std::string host = "127.0.0.1";
    int port = 0;  // 0 picks an ephemeral port
    int64_t window_len = 60;
    int64_t stride = 30;
    int64_t queue_depth = 4;
    int64_t top_k = 3;
};

/// Line-delimited JSON session server. Each session runs two stages --
/// frame assembler and window predictor -- joined by the bounded queue;
/// the frozen model is shared read-only across sessions.
class StreamServer {
  public:
    StreamServer(FrozenModel model, ServeConfig config);
    ~StreamServer();

    void start();  // binds, listens, spawns the accept loop
    void stop();   // stops accepting, shuts down live sessions, joins
    int port() const { return port_; }

    /// Runs one session over streams instead of a socket (stdin/stdout
    /// piping); returns when the input reaches EOF.
    void run_stdio(std::istream& in, std::ostream& out);

  private:
    void accept_loop();
    void session(int fd);

    FrozenModel model_;
    ServeConfig config_;
    int listen_fd_ = -1;
    int port_ = 0;
    std::atomic<bool> running_{false};
    std::thread accept_thread_;
    std::mutex sessions_mutex_;
    std::vector<std::thread> session_threads_;
    std::vector<int> session_fds_;
};

}  // namespace slrkit
