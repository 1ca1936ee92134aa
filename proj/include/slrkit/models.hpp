#pragma once

#include "slrkit/autodiff.hpp"
#include "slrkit/pose.hpp"
#include "slrkit/tensor.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace slrkit {

struct LstmConfig {
    int layers = 4;
    int hidden = 128;
    bool bidirectional = true;
    int attention_dim = 128;
};

struct TransformerConfig {
    int layers = 5;
    int heads = 6;
    int hidden = 128;
    int head_dim = 21;  // 6 heads x 21 = 126, projected back to 128
    int ffn = 3072;
    int max_seq = 256;
};

struct StgcnConfig {
    std::vector<int> channels = {64, 64, 64, 64, 128, 128, 128, 256, 256, 256};
    std::vector<int> strides = {1, 1, 1, 1, 2, 1, 1, 2, 1, 1};
    int temporal_kernel = 9;
};

struct ModelConfig {
    std::string variant;  // "lstm" | "transformer" | "stgcn"
    int num_classes = 0;
    int input_keypoints = 27;
    int input_dims = 2;
    LstmConfig lstm;
    TransformerConfig transformer;
    StgcnConfig stgcn;

    int input_width() const { return input_keypoints * input_dims; }
    void check() const;
    /// Canonical serialization of the hyperparameters relevant to the
    /// chosen variant; hashed into checkpoints.
    std::string canonical_string() const;
    std::string config_hash() const;
};

/// Named tensors with matching gradient slots. `arch_id` is the encoder
/// family ("lstm", "transformer", "stgcn").
struct ParameterSet {
    std::string arch_id;
    std::string config_hash;
    std::map<std::string, Tensor> values;
    std::map<std::string, Tensor> grads;
    bool grads_filled = false;

    Tensor& value(const std::string& name);
    const Tensor& value(const std::string& name) const;
    Tensor& grad(const std::string& name);
    bool has(const std::string& name) const { return values.count(name) > 0; }
    void add(const std::string& name, Tensor t);
    void zero_grads();
    int64_t param_count() const;
};

/// Deterministic initialization: matrices U[-1/sqrt(fan_in), 1/sqrt(fan_in)]
/// with fan_in = row count, biases zero, normalization gains one,
/// edge-importance masks one. Each tensor draws from a stream derived
/// from (seed, tensor name).
ParameterSet init_parameters(const ModelConfig& config, uint64_t seed);

/// Encoder-only parameter sets for pretraining (no classifier head).
ParameterSet init_stgcn_encoder(const StgcnConfig& cfg, int keypoints, int dims, uint64_t seed);
ParameterSet init_transformer_encoder(const TransformerConfig& cfg, int input_width,
                                      uint64_t seed);

/// Flattens a pose clip to [F, K*D] doubles (per frame: x0,y0,x1,y1,...).
Tensor flatten_pose(const PoseSequence& pose);

/// Binds parameter tensors onto a tape on first use; with train=true the
/// gradient slots become backward sinks.
class ParamBinder {
  public:
    ParamBinder(nn::Tape& tape, ParameterSet& params, bool train)
        : tape_(tape), params_(params), train_(train) {}
    nn::Var operator()(const std::string& name);

  private:
    nn::Tape& tape_;
    ParameterSet& params_;
    bool train_;
    std::map<std::string, nn::Var> bound_;
};

// Tape-level forward graphs. Each returns logits [1, num_classes].
nn::Var lstm_logits(nn::Tape& tape, ParamBinder& bind, const ModelConfig& cfg,
                    const PoseSequence& pose);
nn::Var transformer_logits(nn::Tape& tape, ParamBinder& bind, const ModelConfig& cfg,
                           const PoseSequence& pose);
nn::Var stgcn_logits(nn::Tape& tape, ParamBinder& bind, const ModelConfig& cfg,
                     const PoseSequence& pose, const SkeletonGraph& graph);

/// ST-GCN trunk up to the global spatio-temporal average pool: [1, C_last].
nn::Var stgcn_embed(nn::Tape& tape, ParamBinder& bind, const StgcnConfig& cfg,
                    const PoseSequence& pose, const SkeletonGraph& graph);

/// Transformer encoder over already-flattened input rows [T, K*D];
/// prepends CLS when asked. Returns encoded rows [T(+1), hidden].
nn::Var transformer_encode(nn::Tape& tape, ParamBinder& bind, const TransformerConfig& cfg,
                           nn::Var input_rows, bool prepend_cls);

/// Dispatching tape-level forward.
nn::Var model_logits(nn::Tape& tape, ParamBinder& bind, const ModelConfig& cfg,
                     const PoseSequence& pose, const SkeletonGraph* graph);

/// Inference-only forward returning the logits values.
Tensor forward_logits(const ParameterSet& params, const ModelConfig& cfg, const PoseSequence& pose,
                      const SkeletonGraph* graph);

/// Temporal attention weights of the LSTM pooling layer ([1, F]); rows of
/// a softmax, so they sum to one.
Tensor lstm_attention_weights(const ParameterSet& params, const ModelConfig& cfg,
                              const PoseSequence& pose);

/// One forward/backward pairing with the spec'd ordering contract:
/// backward() without a recorded forward is an error.
class ModelSession {
  public:
    ModelSession(ParameterSet& params, const ModelConfig& cfg, const SkeletonGraph* graph)
        : params_(params), cfg_(cfg), graph_(graph) {}

    /// Records a fresh tape; returns logits values.
    const Tensor& forward(const PoseSequence& pose);

    /// Cross-entropy loss at `label`, backward pass scaled by `scale`;
    /// gradients accumulate into the ParameterSet slots. Returns the loss.
    double backward(int64_t label, double scale = 1.0);

  private:
    ParameterSet& params_;
    const ModelConfig& cfg_;
    const SkeletonGraph* graph_;
    std::optional<nn::Tape> tape_;
    std::optional<ParamBinder> binder_;
    nn::Var logits_{};
    Tensor logits_values_;
};

// ---- checkpoint format: header (arch id, config hash, format_version) +
// named tensor table, f32 little-endian values ----
void save_checkpoint(const ParameterSet& params, const std::string& path);
ParameterSet load_checkpoint(const std::string& path, const std::string& expected_config_hash = "",
                             bool allow_hash_mismatch = false);

/// Tensor-name prefixes that constitute the encoder for each family.
std::vector<std::string> encoder_prefixes(const std::string& arch_id);

}  // namespace slrkit
