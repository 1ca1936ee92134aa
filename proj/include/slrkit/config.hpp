#pragma once

#include "slrkit/corpus.hpp"
#include "slrkit/models.hpp"
#include "slrkit/pretrain.hpp"
#include "slrkit/stream.hpp"
#include "slrkit/synth.hpp"
#include "slrkit/train.hpp"
#include "slrkit/transforms.hpp"

#include <yaml-cpp/yaml.h>

#include <optional>
#include <string>
#include <vector>

namespace slrkit {

/// Split fractions used when packing from an ingest manifest.
struct IngestConfig {
    std::string manifest;  // JSON list of {jsonl, gloss?, signer?, id?}
    float fps = 30.0f;
    double max_missing_fraction = 0.5;
    std::string corpus_id = "ingested";
    double train_fraction = 0.8;
    double val_fraction = 0.1;  // remainder goes to test
};

struct DataConfig {
    std::string corpus;
    std::string keypoint_map;  // empty -> built-in default map
    std::string train_split = "train";
    std::string val_split = "val";
    std::string eval_split = "val";
    std::optional<SubsetSpec> subset;
    std::optional<IngestConfig> ingest;
    std::optional<SyntheticSpec> synthetic;
};

struct TrainSection {
    TrainConfig train;  // model filled from the model section
    std::string init_from;
    bool init_override = false;
};

struct PretrainSection {
    std::string strategy;  // "dpc" | "moco" | "masked"
    DpcConfig dpc;
    MocoConfig moco;
    MaskedPretrainConfig masked;
    AdamConfig optimizer{1e-3, 0.9, 0.999, 1e-8};
};

struct ServeSection {
    ServeConfig serve;
    bool stdio = false;
    std::string checkpoint;
    std::string labels;  // optional gloss list (JSON array)
};

struct EvaluateSection {
    std::string checkpoint;
    std::vector<int64_t> topk = {1, 3};
};

struct BenchmarkSection {
    std::string checkpoint;
    int64_t repetitions = 1;
    int64_t warmup = 5;
};

/// Parsed, validated run configuration. `raw` holds the resolved YAML
/// (file plus --set overrides) for the run manifest; rerunning from that
/// dump reproduces the run.
struct RunConfig {
    YAML::Node raw;
    int format_version = 1;
    uint64_t seed = 0;
    std::string output_dir = "runs/out";
    DataConfig data;
    std::optional<ModelConfig> model;
    std::vector<TransformStep> train_transforms;
    std::vector<TransformStep> eval_transforms;
    TrainSection train;
    PretrainSection pretrain;
    ServeSection serve;
    EvaluateSection evaluate;
    BenchmarkSection benchmark;

    std::string resolved_yaml() const;
};

/// Strict load: unknown keys anywhere are rejected with the full dotted
/// path. Overrides are `key.path=value` pairs applied before validation.
RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides);

/// Parses a config from a YAML string (used by round-trip checks).
RunConfig parse_run_config(const std::string& yaml_text,
                           const std::vector<std::string>& overrides = {});

}  // namespace slrkit
