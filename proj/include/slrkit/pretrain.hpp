#pragma once

#include "slrkit/corpus.hpp"
#include "slrkit/models.hpp"
#include "slrkit/train.hpp"
#include "slrkit/transforms.hpp"

#include <deque>
#include <string>
#include <vector>

namespace slrkit {

/// Partition of a clip into consecutive non-overlapping windows; DPC and
/// streaming both consume this shape.
using WindowBatch = std::vector<PoseSequence>;

/// floor(F / window_len) equal windows in order; the trailing remainder is
/// dropped. F < window_len is an error.
WindowBatch partition_windows(const PoseSequence& pose, int64_t window_len);

/// L = -sum_i log( exp(z_hat_i . z_i) / sum_j exp(z_hat_i . z_j) ) with j
/// ranging over the positive plus all shared negatives; raw dot products,
/// 64-bit log-sum-exp.
double infonce_loss(const std::vector<std::vector<double>>& predicted,
                    const std::vector<std::vector<double>>& actual,
                    const std::vector<std::vector<double>>& negatives);

/// Fixed-capacity FIFO of embeddings; eviction strictly oldest-first.
class MemoryBank {
  public:
    explicit MemoryBank(int64_t capacity);
    void enqueue(std::vector<double> embedding);
    int64_t size() const { return static_cast<int64_t>(entries_.size()); }
    int64_t capacity() const { return capacity_; }
    const std::deque<std::vector<double>>& entries() const { return entries_; }

  private:
    int64_t capacity_;
    std::deque<std::vector<double>> entries_;
};

struct DpcConfig {
    int64_t window_len = 10;
    int64_t input_windows = 4;   // W_n - W_p
    int64_t predict_windows = 3; // W_p
    int64_t gru_hidden = 256;
    StgcnConfig encoder;
    int64_t clip_min = 60;
    int64_t clip_max = 120;
    int64_t batch_size = 128;
    int64_t steps = 500;
    std::vector<TransformStep> transforms;  // per-clip normalization
    int64_t embedding_dim() const { return encoder.channels.back(); }
    int64_t frames_needed() const { return (input_windows + predict_windows) * window_len; }
    void check() const;
};

struct DpcForwardResult {
    std::vector<std::vector<double>> predicted;
    std::vector<std::vector<double>> actual;
};

/// Encoder embeds every window; the GRU consumes the input windows, then
/// phi predicts each future embedding and the prediction is fed back as
/// the next GRU input.
DpcForwardResult dpc_forward(const ParameterSet& params, const DpcConfig& config,
                             const SkeletonGraph& graph, const WindowBatch& windows);

struct PretrainResult {
    ParameterSet encoder;
    std::vector<std::pair<int64_t, double>> loss_history;  // (step, loss)
};

PretrainResult dpc_pretrain(const Corpus& corpus, const DpcConfig& config,
                            const SkeletonGraph& graph, const KeypointSelection& sel,
                            const AdamConfig& optimizer, uint64_t seed);

/// Mean InfoNCE over a batch of clips, with optionally shuffled future
/// windows (the ordering probe).
double dpc_eval_loss(const ParameterSet& params, const DpcConfig& config,
                     const SkeletonGraph& graph, const std::vector<WindowBatch>& batch,
                     bool shuffle_futures, uint64_t shuffle_seed);

struct MocoConfig {
    int64_t bank_capacity = 4096;
    double momentum = 0.999;
    double temperature = 0.07;
    StgcnConfig encoder;
    int64_t clip_min = 60;
    int64_t clip_max = 120;
    int64_t batch_size = 128;
    int64_t steps = 500;
    std::vector<TransformStep> transforms;     // normalization before the views
    std::vector<TransformStep> augmentations;  // per-view (shear/scale/rotation)
    void check() const;
};

PretrainResult moco_pretrain(const Corpus& corpus, const MocoConfig& config,
                             const SkeletonGraph& graph, const KeypointSelection& sel,
                             MemoryBank& bank, const AdamConfig& optimizer, uint64_t seed);

struct MaskConfig {
    double mask_ratio = 0.4;
    bool contiguous_spans = false;  // spans with length ~ U[span_min, span_max]
    int64_t span_min = 2;
    int64_t span_max = 10;
    bool direction_loss = false;  // adds quadrant classification
    void check() const;
};

struct MaskedPretrainConfig {
    MaskConfig mask;
    TransformerConfig encoder;
    int input_keypoints = 27;
    int input_dims = 2;
    int64_t clip_min = 60;
    int64_t clip_max = 120;
    int64_t batch_size = 128;
    int64_t steps = 500;
    double static_threshold = 1e-3;  // delta for direction labels
    std::vector<TransformStep> transforms;
    void check() const;
};

PretrainResult masked_pretrain(const Corpus& corpus, const MaskedPretrainConfig& config,
                               const KeypointSelection& sel, const AdamConfig& optimizer,
                               uint64_t seed);

/// Picks exactly max(1, round(F*ratio)) masked frames under the config's
/// span mode.
std::vector<uint8_t> draw_frame_mask(int64_t frames, const MaskConfig& config, RandomSource& rng);

enum class DirectionLabel : int { Q1 = 0, Q2 = 1, Q3 = 2, Q4 = 3, Static = 4 };

/// Per-frame, per-keypoint motion-vector class (row-major F*K). The first
/// frame is Static. Quadrants follow the image convention (x right,
/// y down): Q1 = x>0,y<=0, then counter-clockwise on screen; motion with
/// norm <= delta is Static.
std::vector<int> direction_labels(const PoseSequence& pose, double delta = 1e-3);

/// Copies encoder tensors (by name) from a pretrained set into a freshly
/// initialized target; the classification head stays fresh. Family
/// mismatch is an error; name/shape mismatches are fatal unless
/// allow_mismatch.
ParameterSet transplant_encoder(const ParameterSet& pretrained, const ModelConfig& target,
                                uint64_t head_seed, bool allow_mismatch = false);

}  // namespace slrkit
