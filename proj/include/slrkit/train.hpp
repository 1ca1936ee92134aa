#pragma once

#include "slrkit/corpus.hpp"
#include "slrkit/models.hpp"
#include "slrkit/transforms.hpp"

#include <map>
#include <string>
#include <vector>

namespace slrkit {

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// Adam with bias correction; moment buffers persist across steps.
class Adam {
  public:
    explicit Adam(AdamConfig cfg) : cfg_(cfg) {}

    /// Applies one update in place from the filled gradient slots, then
    /// clears them. Errors when no backward has filled the gradients.
    void step(ParameterSet& params);

    int64_t steps_taken() const { return t_; }

  private:
    AdamConfig cfg_;
    int64_t t_ = 0;
    std::map<std::string, Tensor> m_, v_;
};

/// -log softmax(logits)[label] with max-subtraction; logits is [1,C].
double cross_entropy(const Tensor& logits, int64_t label);

struct Metrics {
    double top1 = 0.0;
    std::map<int64_t, double> topk;
    double loss = 0.0;
    std::vector<double> per_class;
};

struct EpochRecord {
    int64_t epoch = 0;
    double train_loss = 0.0;
    double val_top1 = 0.0;
    std::map<int64_t, double> val_topk;
    double wall_time_s = 0.0;
};

struct TrainConfig {
    int64_t batch_size = 32;
    double learning_rate = 1e-3;
    int64_t max_epochs = 100;
    uint64_t seed = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    int64_t patience = 50;  // early stop on val top-1
    bool init_allow_mismatch = false;  // transplant override flag
    ModelConfig model;
    std::vector<TransformStep> train_transforms;
    std::vector<TransformStep> eval_transforms;
    std::vector<int64_t> topk = {1, 3};
    void check() const;
};

struct TrainResult {
    ParameterSet best_params;
    Metrics best_val;
    std::vector<EpochRecord> history;
};

/// Rank of `label` under descending score with lowest-index tie-break;
/// 0 means top-1.
int64_t prediction_rank(const Tensor& logits, int64_t label);
int64_t argmax_lowest_index(const Tensor& logits);

/// Deterministic evaluation over explicit sample ids; only
/// normalization-class transforms are permitted in the pipeline.
Metrics evaluate(const ParameterSet& params, const ModelConfig& model, const Corpus& corpus,
                 const std::vector<std::string>& ids,
                 const std::vector<TransformStep>& eval_transforms, const KeypointSelection& sel,
                 const SkeletonGraph* graph, const std::vector<int64_t>& topk);

Metrics evaluate_split(const ParameterSet& params, const ModelConfig& model, const Corpus& corpus,
                       const std::string& split,
                       const std::vector<TransformStep>& eval_transforms,
                       const KeypointSelection& sel, const SkeletonGraph* graph,
                       const std::vector<int64_t>& topk);

/// Supervised training loop: seeded shuffled batches, per-epoch validation,
/// best-by-val-top1 checkpointing, optional encoder transplant from
/// `initial`. `train_ids_override` restricts the train split (low-resource
/// subsetting); it must stay within the split.
TrainResult train_classifier(const TrainConfig& config, const Corpus& corpus,
                             const std::string& train_split, const std::string& val_split,
                             const KeypointSelection& sel, const SkeletonGraph* graph,
                             const ParameterSet* initial = nullptr,
                             const std::vector<std::string>* train_ids_override = nullptr);

/// One epoch record per JSON line: epoch, train_loss, val_top1, val_topk,
/// wall_time_s.
void write_history_jsonl(const std::vector<EpochRecord>& history, const std::string& path);

/// Worker cap from SLRKIT_THREADS (>=1); used by batch assembly.
int worker_threads();

}  // namespace slrkit
