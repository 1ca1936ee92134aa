#include "slrkit/config.hpp"

#include "slrkit/common.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace slrkit {

namespace {

void expect_map_keys(const YAML::Node& node, const std::string& path,
                     std::initializer_list<const char*> allowed) {
    if (!node.IsDefined() || node.IsNull()) return;
    if (!node.IsMap()) throw ConfigError("config: '" + path + "' must be a mapping");
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& kv : node) {
        std::string key = kv.first.as<std::string>();
        if (!ok.count(key))
            throw ConfigError("config: unknown key '" + (path.empty() ? key : path + "." + key) +
                              "'");
    }
}

template <typename T>
T get_or(const YAML::Node& node, const char* key, T fallback, const std::string& path) {
    if (!node.IsDefined() || node.IsNull() || !node[key]) return fallback;
    try {
        return node[key].as<T>();
    } catch (const std::exception&) {
        throw ConfigError("config: bad value for '" + path + "." + key + "'");
    }
}

std::vector<TransformStep> parse_pipeline(const YAML::Node& node, const std::string& path) {
    std::vector<TransformStep> steps;
    if (!node.IsDefined() || node.IsNull()) return steps;
    if (!node.IsSequence()) throw ConfigError("config: '" + path + "' must be a list");
    for (size_t i = 0; i < node.size(); ++i) {
        const YAML::Node& entry = node[i];
        std::string entry_path = path + "[" + std::to_string(i) + "]";
        if (!entry.IsMap() || !entry["name"])
            throw ConfigError("config: '" + entry_path + "' must be {name: ..., params...}");
        TransformStep step;
        step.name = entry["name"].as<std::string>();
        for (const auto& kv : entry) {
            std::string key = kv.first.as<std::string>();
            if (key == "name") continue;
            try {
                step.params[key] = kv.second.as<double>();
            } catch (const std::exception&) {
                throw ConfigError("config: '" + entry_path + "." + key + "' must be numeric");
            }
        }
        steps.push_back(std::move(step));
    }
    try {
        check_pipeline(steps, false);
    } catch (const std::exception& e) {
        throw ConfigError("config: '" + path + "': " + e.what());
    }
    return steps;
}

ModelConfig parse_model(const YAML::Node& node) {
    expect_map_keys(node, "model",
                    {"variant", "num_classes", "keypoints", "lstm", "transformer", "stgcn"});
    ModelConfig cfg;
    cfg.variant = get_or<std::string>(node, "variant", "", "model");
    if (cfg.variant.empty()) throw ConfigError("config: 'model.variant' is required");
    cfg.num_classes = get_or<int>(node, "num_classes", 0, "model");
    cfg.input_keypoints = get_or<int>(node, "keypoints", 27, "model");

    const YAML::Node& l = node["lstm"];
    expect_map_keys(l, "model.lstm", {"layers", "hidden", "bidirectional", "attention_dim"});
    cfg.lstm.layers = get_or<int>(l, "layers", cfg.lstm.layers, "model.lstm");
    cfg.lstm.hidden = get_or<int>(l, "hidden", cfg.lstm.hidden, "model.lstm");
    cfg.lstm.bidirectional = get_or<bool>(l, "bidirectional", true, "model.lstm");
    cfg.lstm.attention_dim = get_or<int>(l, "attention_dim", cfg.lstm.hidden, "model.lstm");

    const YAML::Node& t = node["transformer"];
    expect_map_keys(t, "model.transformer",
                    {"layers", "heads", "hidden", "head_dim", "ffn", "max_seq"});
    cfg.transformer.layers = get_or<int>(t, "layers", cfg.transformer.layers, "model.transformer");
    cfg.transformer.heads = get_or<int>(t, "heads", cfg.transformer.heads, "model.transformer");
    cfg.transformer.hidden = get_or<int>(t, "hidden", cfg.transformer.hidden, "model.transformer");
    cfg.transformer.head_dim =
        get_or<int>(t, "head_dim", cfg.transformer.head_dim, "model.transformer");
    cfg.transformer.ffn = get_or<int>(t, "ffn", cfg.transformer.ffn, "model.transformer");
    cfg.transformer.max_seq =
        get_or<int>(t, "max_seq", cfg.transformer.max_seq, "model.transformer");

    const YAML::Node& s = node["stgcn"];
    expect_map_keys(s, "model.stgcn", {"channels", "strides", "temporal_kernel"});
    if (s.IsDefined() && !s.IsNull()) {
        if (s["channels"]) cfg.stgcn.channels = s["channels"].as<std::vector<int>>();
        if (s["strides"]) cfg.stgcn.strides = s["strides"].as<std::vector<int>>();
        else if (s["channels"]) cfg.stgcn.strides.assign(cfg.stgcn.channels.size(), 1);
        cfg.stgcn.temporal_kernel =
            get_or<int>(s, "temporal_kernel", cfg.stgcn.temporal_kernel, "model.stgcn");
    }
    return cfg;
}

SyntheticSpec parse_synthetic(const YAML::Node& node) {
    expect_map_keys(node, "data.synthetic",
                    {"classes", "samples_per_class", "frames", "noise", "drift", "wiggle",
                     "affine_jitter", "fps", "val_per_class", "test_per_class", "unlabeled",
                     "count", "min_frames", "max_frames"});
    SyntheticSpec spec;
    spec.classes = get_or<int64_t>(node, "classes", spec.classes, "data.synthetic");
    spec.samples_per_class =
        get_or<int64_t>(node, "samples_per_class", spec.samples_per_class, "data.synthetic");
    spec.frames = get_or<int64_t>(node, "frames", spec.frames, "data.synthetic");
    spec.noise = get_or<double>(node, "noise", spec.noise, "data.synthetic");
    spec.drift = get_or<double>(node, "drift", spec.drift, "data.synthetic");
    spec.wiggle = get_or<double>(node, "wiggle", spec.wiggle, "data.synthetic");
    spec.affine_jitter =
        get_or<double>(node, "affine_jitter", spec.affine_jitter, "data.synthetic");
    spec.fps = get_or<float>(node, "fps", spec.fps, "data.synthetic");
    spec.val_per_class =
        get_or<int64_t>(node, "val_per_class", spec.val_per_class, "data.synthetic");
    spec.test_per_class =
        get_or<int64_t>(node, "test_per_class", spec.test_per_class, "data.synthetic");
    spec.unlabeled = get_or<bool>(node, "unlabeled", false, "data.synthetic");
    spec.count = get_or<int64_t>(node, "count", spec.count, "data.synthetic");
    spec.min_frames = get_or<int64_t>(node, "min_frames", spec.min_frames, "data.synthetic");
    spec.max_frames = get_or<int64_t>(node, "max_frames", spec.max_frames, "data.synthetic");
    return spec;
}

DataConfig parse_data(const YAML::Node& node) {
    expect_map_keys(node, "data",
                    {"corpus", "keypoint_map", "train_split", "val_split", "eval_split", "subset",
                     "ingest", "synthetic"});
    DataConfig data;
    data.corpus = get_or<std::string>(node, "corpus", "", "data");
    data.keypoint_map = get_or<std::string>(node, "keypoint_map", "", "data");
    data.train_split = get_or<std::string>(node, "train_split", data.train_split, "data");
    data.val_split = get_or<std::string>(node, "val_split", data.val_split, "data");
    data.eval_split = get_or<std::string>(node, "eval_split", data.eval_split, "data");
    if (node.IsDefined() && node["subset"]) {
        expect_map_keys(node["subset"], "data.subset", {"samples_per_class", "seed"});
        SubsetSpec spec;
        spec.samples_per_class =
            get_or<int64_t>(node["subset"], "samples_per_class", 1, "data.subset");
        spec.seed = get_or<uint64_t>(node["subset"], "seed", 0, "data.subset");
        data.subset = spec;
    }
    if (node.IsDefined() && node["ingest"]) {
        expect_map_keys(node["ingest"], "data.ingest",
                        {"manifest", "fps", "max_missing_fraction", "corpus_id", "train_fraction",
                         "val_fraction"});
        IngestConfig ing;
        ing.manifest = get_or<std::string>(node["ingest"], "manifest", "", "data.ingest");
        ing.fps = get_or<float>(node["ingest"], "fps", ing.fps, "data.ingest");
        ing.max_missing_fraction = get_or<double>(node["ingest"], "max_missing_fraction",
                                                  ing.max_missing_fraction, "data.ingest");
        ing.corpus_id = get_or<std::string>(node["ingest"], "corpus_id", ing.corpus_id,
                                            "data.ingest");
        ing.train_fraction =
            get_or<double>(node["ingest"], "train_fraction", ing.train_fraction, "data.ingest");
        ing.val_fraction =
            get_or<double>(node["ingest"], "val_fraction", ing.val_fraction, "data.ingest");
        data.ingest = ing;
    }
    if (node.IsDefined() && node["synthetic"]) data.synthetic = parse_synthetic(node["synthetic"]);
    return data;
}

}  // namespace

std::string RunConfig::resolved_yaml() const {
    std::ostringstream os;
    os << raw;
    return os.str();
}

RunConfig parse_run_config(const std::string& yaml_text, const std::vector<std::string>& overrides) {
    YAML::Node root;
    try {
        root = YAML::Load(yaml_text);
    } catch (const std::exception& e) {
        throw ConfigError(std::string("config: parse failure: ") + e.what());
    }
    if (!root.IsMap()) throw ConfigError("config: document root must be a mapping");

    // --set key.path=value overrides, applied before validation
    for (const auto& ov : overrides) {
        auto eq = ov.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config: override '" + ov + "' is not key=value");
        std::string path = ov.substr(0, eq), value = ov.substr(eq + 1);
        std::vector<std::string> segments;
        std::istringstream ps(path);
        std::string seg;
        while (std::getline(ps, seg, '.')) {
            if (seg.empty()) throw ConfigError("config: override path '" + path + "' is malformed");
            segments.push_back(seg);
        }
        if (segments.empty()) throw ConfigError("config: override path is empty");
        YAML::Node cursor;
        cursor.reset(root);
        for (size_t i = 0; i + 1 < segments.size(); ++i) {
            if (!cursor[segments[i]].IsDefined() || cursor[segments[i]].IsNull())
                cursor[segments[i]] = YAML::Node(YAML::NodeType::Map);
            // reset() rebinds the cursor; operator= would assign into the tree
            cursor.reset(cursor[segments[i]]);
        }
        try {
            cursor[segments.back()] = YAML::Load(value);
        } catch (const std::exception&) {
            cursor[segments.back()] = value;  // keep as a plain string
        }
    }

    expect_map_keys(root, "",
                    {"format_version", "seed", "output_dir", "data", "model", "transforms",
                     "train", "pretrain", "serve", "evaluate", "benchmark"});

    RunConfig cfg;
    cfg.raw = root;
    cfg.format_version = get_or<int>(root, "format_version", 0, "");
    if (cfg.format_version != 1)
        throw ConfigError("config: format_version must be 1 (got " +
                          std::to_string(cfg.format_version) + ")");
    cfg.seed = get_or<uint64_t>(root, "seed", 0, "");
    cfg.output_dir = get_or<std::string>(root, "output_dir", cfg.output_dir, "");
    cfg.data = parse_data(root["data"]);
    if (root["model"]) cfg.model = parse_model(root["model"]);

    expect_map_keys(root["transforms"], "transforms", {"train", "eval"});
    if (root["transforms"]) {
        cfg.train_transforms = parse_pipeline(root["transforms"]["train"], "transforms.train");
        cfg.eval_transforms = parse_pipeline(root["transforms"]["eval"], "transforms.eval");
        try {
            check_pipeline(cfg.eval_transforms, true);
        } catch (const std::exception& e) {
            throw ConfigError(std::string("config: 'transforms.eval': ") + e.what());
        }
    }

    const YAML::Node& tr = root["train"];
    expect_map_keys(tr, "train",
                    {"batch_size", "learning_rate", "max_epochs", "patience", "beta1", "beta2",
                     "epsilon", "topk", "init_from", "init_override"});
    cfg.train.train.batch_size = get_or<int64_t>(tr, "batch_size", 32, "train");
    cfg.train.train.learning_rate = get_or<double>(tr, "learning_rate", 1e-3, "train");
    cfg.train.train.max_epochs = get_or<int64_t>(tr, "max_epochs", 100, "train");
    cfg.train.train.patience = get_or<int64_t>(tr, "patience", 50, "train");
    cfg.train.train.beta1 = get_or<double>(tr, "beta1", 0.9, "train");
    cfg.train.train.beta2 = get_or<double>(tr, "beta2", 0.999, "train");
    cfg.train.train.epsilon = get_or<double>(tr, "epsilon", 1e-8, "train");
    if (tr.IsDefined() && tr["topk"]) cfg.train.train.topk = tr["topk"].as<std::vector<int64_t>>();
    cfg.train.init_from = get_or<std::string>(tr, "init_from", "", "train");
    cfg.train.init_override = get_or<bool>(tr, "init_override", false, "train");

    const YAML::Node& pt = root["pretrain"];
    expect_map_keys(pt, "pretrain",
                    {"strategy", "steps", "batch_size", "learning_rate", "clip_min", "clip_max",
                     "transforms", "dpc", "moco", "masked"});
    cfg.pretrain.strategy = get_or<std::string>(pt, "strategy", "", "pretrain");
    int64_t steps = get_or<int64_t>(pt, "steps", 500, "pretrain");
    int64_t batch = get_or<int64_t>(pt, "batch_size", 128, "pretrain");
    int64_t clip_min = get_or<int64_t>(pt, "clip_min", 60, "pretrain");
    int64_t clip_max = get_or<int64_t>(pt, "clip_max", 120, "pretrain");
    cfg.pretrain.optimizer.learning_rate = get_or<double>(pt, "learning_rate", 1e-3, "pretrain");
    std::vector<TransformStep> pre_norm;
    if (pt.IsDefined() && pt["transforms"])
        pre_norm = parse_pipeline(pt["transforms"], "pretrain.transforms");

    const YAML::Node& dpc = pt.IsDefined() ? pt["dpc"] : YAML::Node();
    expect_map_keys(dpc, "pretrain.dpc",
                    {"window_len", "input_windows", "predict_windows", "gru_hidden"});
    cfg.pretrain.dpc.window_len = get_or<int64_t>(dpc, "window_len", 10, "pretrain.dpc");
    cfg.pretrain.dpc.input_windows = get_or<int64_t>(dpc, "input_windows", 4, "pretrain.dpc");
    cfg.pretrain.dpc.predict_windows = get_or<int64_t>(dpc, "predict_windows", 3, "pretrain.dpc");
    cfg.pretrain.dpc.gru_hidden = get_or<int64_t>(dpc, "gru_hidden", 256, "pretrain.dpc");
    cfg.pretrain.dpc.steps = steps;
    cfg.pretrain.dpc.batch_size = batch;
    cfg.pretrain.dpc.clip_min = clip_min;
    cfg.pretrain.dpc.clip_max = clip_max;
    cfg.pretrain.dpc.transforms = pre_norm;

    const YAML::Node& moco = pt.IsDefined() ? pt["moco"] : YAML::Node();
    expect_map_keys(moco, "pretrain.moco",
                    {"bank_capacity", "momentum", "temperature", "augmentations"});
    cfg.pretrain.moco.bank_capacity =
        get_or<int64_t>(moco, "bank_capacity", 4096, "pretrain.moco");
    cfg.pretrain.moco.momentum = get_or<double>(moco, "momentum", 0.999, "pretrain.moco");
    cfg.pretrain.moco.temperature = get_or<double>(moco, "temperature", 0.07, "pretrain.moco");
    if (moco.IsDefined() && moco["augmentations"])
        cfg.pretrain.moco.augmentations =
            parse_pipeline(moco["augmentations"], "pretrain.moco.augmentations");
    else
        cfg.pretrain.moco.augmentations = {{"shear", {{"s_max", 0.15}}},
                                           {"scale", {{"lo", 0.8}, {"hi", 1.2}}},
                                           {"rotate", {{"theta_max", M_PI / 3.0}}}};
    cfg.pretrain.moco.steps = steps;
    cfg.pretrain.moco.batch_size = batch;
    cfg.pretrain.moco.clip_min = clip_min;
    cfg.pretrain.moco.clip_max = clip_max;
    cfg.pretrain.moco.transforms = pre_norm;

    const YAML::Node& masked = pt.IsDefined() ? pt["masked"] : YAML::Node();
    expect_map_keys(masked, "pretrain.masked",
                    {"mask_ratio", "contiguous_spans", "span_min", "span_max", "direction_loss",
                     "static_threshold"});
    cfg.pretrain.masked.mask.mask_ratio =
        get_or<double>(masked, "mask_ratio", 0.4, "pretrain.masked");
    cfg.pretrain.masked.mask.contiguous_spans =
        get_or<bool>(masked, "contiguous_spans", false, "pretrain.masked");
    cfg.pretrain.masked.mask.span_min = get_or<int64_t>(masked, "span_min", 2, "pretrain.masked");
    cfg.pretrain.masked.mask.span_max = get_or<int64_t>(masked, "span_max", 10, "pretrain.masked");
    cfg.pretrain.masked.mask.direction_loss =
        get_or<bool>(masked, "direction_loss", false, "pretrain.masked");
    cfg.pretrain.masked.static_threshold =
        get_or<double>(masked, "static_threshold", 1e-3, "pretrain.masked");
    cfg.pretrain.masked.steps = steps;
    cfg.pretrain.masked.batch_size = batch;
    cfg.pretrain.masked.clip_min = clip_min;
    cfg.pretrain.masked.clip_max = clip_max;
    cfg.pretrain.masked.transforms = pre_norm;

    const YAML::Node& sv = root["serve"];
    expect_map_keys(sv, "serve",
                    {"host", "port", "stdio", "window_len", "stride", "queue_depth", "top_k",
                     "checkpoint", "labels"});
    cfg.serve.serve.host = get_or<std::string>(sv, "host", "127.0.0.1", "serve");
    cfg.serve.serve.port = get_or<int>(sv, "port", 0, "serve");
    cfg.serve.stdio = get_or<bool>(sv, "stdio", false, "serve");
    cfg.serve.serve.window_len = get_or<int64_t>(sv, "window_len", 60, "serve");
    cfg.serve.serve.stride = get_or<int64_t>(sv, "stride", 30, "serve");
    cfg.serve.serve.queue_depth = get_or<int64_t>(sv, "queue_depth", 4, "serve");
    cfg.serve.serve.top_k = get_or<int64_t>(sv, "top_k", 3, "serve");
    cfg.serve.checkpoint = get_or<std::string>(sv, "checkpoint", "", "serve");
    cfg.serve.labels = get_or<std::string>(sv, "labels", "", "serve");

    const YAML::Node& ev = root["evaluate"];
    expect_map_keys(ev, "evaluate", {"checkpoint", "topk"});
    cfg.evaluate.checkpoint = get_or<std::string>(ev, "checkpoint", "", "evaluate");
    if (ev.IsDefined() && ev["topk"]) cfg.evaluate.topk = ev["topk"].as<std::vector<int64_t>>();

    const YAML::Node& bm = root["benchmark"];
    expect_map_keys(bm, "benchmark", {"checkpoint", "repetitions", "warmup"});
    cfg.benchmark.checkpoint = get_or<std::string>(bm, "checkpoint", "", "benchmark");
    cfg.benchmark.repetitions = get_or<int64_t>(bm, "repetitions", 1, "benchmark");
    cfg.benchmark.warmup = get_or<int64_t>(bm, "warmup", 5, "benchmark");

    return cfg;
}

RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides) {
    std::ifstream f(path);
    if (!f) throw ConfigError("config: cannot open " + path);
    std::ostringstream os;
    os << f.rdbuf();
    return parse_run_config(os.str(), overrides);
}

}  // namespace slrkit
