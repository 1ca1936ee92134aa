#include "slrkit/runner.hpp"

#include "slrkit/common.hpp"
#include "slrkit/hash.hpp"
#include "slrkit/pretrain.hpp"

#include <nlohmann/json.hpp>

#include <csignal>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace slrkit {

namespace {

// Hash of a file or (recursively) of a directory's files in path order.
std::string hash_path(const std::string& path) {
    if (fs::is_directory(path)) {
        std::vector<std::string> files;
        for (const auto& entry : fs::recursive_directory_iterator(path))
            if (entry.is_regular_file()) files.push_back(entry.path().string());
        std::sort(files.begin(), files.end());
        std::string combined;
        for (const auto& f : files) combined += f + ":" + sha256_file(f) + "\n";
        return sha256_hex(combined);
    }
    return sha256_file(path);
}

struct RunContext {
    std::string command;
    RunConfig config;
    std::map<std::string, std::string> inputs;
    std::map<std::string, std::string> outputs;
    std::chrono::steady_clock::time_point started = std::chrono::steady_clock::now();

    void note_input(const std::string& path) {
        if (!path.empty() && fs::exists(path)) inputs[path] = hash_path(path);
    }
    void note_output(const std::string& path) {
        if (!path.empty() && fs::exists(path)) outputs[path] = hash_path(path);
    }
    void write_manifest(const std::string& status) {
        fs::create_directories(config.output_dir);
        json doc;
        doc["format_version"] = 1;
        doc["command"] = command;
        doc["seed"] = config.seed;
        doc["resolved_config"] = config.resolved_yaml();
        doc["inputs"] = inputs;
        doc["outputs"] = outputs;
        doc["status"] = status;
        doc["wall_time_s"] =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        std::ofstream f(fs::path(config.output_dir) / "run_manifest.json");
        f << doc.dump(2) << "\n";
    }
};

KeypointMap resolve_keypoint_map(const RunConfig& cfg, RunContext& ctx) {
    if (cfg.data.keypoint_map.empty()) return default_keypoint_map();
    ctx.note_input(cfg.data.keypoint_map);
    return load_keypoint_map(cfg.data.keypoint_map);
}

ModelConfig resolve_model(const RunConfig& cfg, const Corpus* corpus,
                          int64_t fallback_classes = 0) {
    if (!cfg.model.has_value()) throw ConfigError("config: a 'model' section is required");
    ModelConfig model = *cfg.model;
    if (model.num_classes == 0) {
        if (corpus && corpus->manifest().labeled())
            model.num_classes = static_cast<int>(corpus->manifest().vocabulary.size());
        else if (fallback_classes > 0)
            model.num_classes = static_cast<int>(fallback_classes);
        else
            throw ConfigError("config: 'model.num_classes' cannot be derived; set it explicitly");
    }
    model.check();
    return model;
}

std::string out_path(const RunConfig& cfg, const std::string& name) {
    fs::create_directories(cfg.output_dir);
    return (fs::path(cfg.output_dir) / name).string();
}

void write_json(const std::string& path, const json& doc) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot write " + path);
    f << doc.dump(2) << "\n";
}

json metrics_to_json(const Metrics& m) {
    json doc;
    doc["top1"] = m.top1;
    json topk = json::object();
    for (const auto& [k, v] : m.topk) topk[std::to_string(k)] = v;
    doc["topk"] = std::move(topk);
    doc["loss"] = m.loss;
    doc["per_class"] = m.per_class;
    return doc;
}

// ---------------------------------------------------------------------------
// commands
// ---------------------------------------------------------------------------

void cmd_synth(RunContext& ctx) {
    const RunConfig& cfg = ctx.config;
    if (!cfg.data.synthetic.has_value())
        throw ConfigError("config: 'data.synthetic' is required for synth");
    if (cfg.data.corpus.empty())
        throw ConfigError("config: 'data.corpus' must name the destination container");
    cfg.data.synthetic->check();
    make_synthetic_corpus(*cfg.data.synthetic, cfg.data.corpus, cfg.seed);
    ctx.note_output(cfg.data.corpus);
    ctx.note_output(manifest_path_for(cfg.data.corpus));
}

void cmd_pack(RunContext& ctx) {
    const RunConfig& cfg = ctx.config;
    if (!cfg.data.ingest.has_value())
        throw ConfigError("config: 'data.ingest' is required for pack");
    if (cfg.data.corpus.empty())
        throw ConfigError("config: 'data.corpus' must name the destination container");
    const IngestConfig& ing = *cfg.data.ingest;
    if (ing.manifest.empty()) throw ConfigError("config: 'data.ingest.manifest' is required");
    ctx.note_input(ing.manifest);

    std::ifstream f(ing.manifest);
    if (!f) throw IoError("cannot open ingest manifest " + ing.manifest);
    json records;
    f >> records;
    if (!records.is_array() || records.empty())
        throw InvalidArgument("ingest manifest must be a non-empty JSON array");

    KeypointMap map = resolve_keypoint_map(cfg, ctx);
    bool labeled = records.front().contains("gloss");
    std::set<std::string> gloss_set;
    struct Pending {
        PoseSequence pose;
        SampleMeta meta;
    };
    std::vector<Pending> accepted;
    json report = json::array();
    int64_t index = 0;
    for (const auto& rec : records) {
        std::string jsonl = rec.at("jsonl");
        ctx.note_input(jsonl);
        PoseSequence pose = read_jsonl_pose(jsonl, ing.fps);
        if (pose.keypoints != map.selection.size()) pose = select_keypoints(pose, map.selection);
        auto verdict = validate_sequence(pose, ing.max_missing_fraction);
        json entry;
        entry["source"] = jsonl;
        entry["accepted"] = verdict.accepted;
        entry["missing_fraction"] = verdict.missing_fraction;
        if (!verdict.accepted) entry["reason"] = verdict.reason;
        report.push_back(entry);
        if (!verdict.accepted) continue;  // noisy clips are filtered out

        Pending p;
        p.pose = std::move(pose);
        p.meta.id = rec.value("id", "sample" + std::to_string(index));
        if (rec.contains("gloss") != labeled)
            throw InvalidArgument("ingest manifest mixes labeled and unlabeled records");
        if (labeled) {
            p.meta.gloss = rec.at("gloss");
            gloss_set.insert(p.meta.gloss);
        }
        p.meta.signer = rec.value("signer", "");
        accepted.push_back(std::move(p));
        ++index;
    }
    if (accepted.empty()) throw InvalidArgument("pack: every input clip was rejected");

    PackOptions opt;
    opt.corpus_id = ing.corpus_id;
    opt.fps = ing.fps;
    opt.keypoint_map_id = map.id;
    opt.max_missing_fraction = ing.max_missing_fraction;
    std::vector<std::string> vocab(gloss_set.begin(), gloss_set.end());
    opt.vocabulary = vocab;
    std::vector<std::pair<PoseSequence, SampleMeta>> samples;
    for (auto& p : accepted) {
        if (labeled) {
            auto it = std::lower_bound(vocab.begin(), vocab.end(), p.meta.gloss);
            p.meta.label = static_cast<int64_t>(it - vocab.begin());
        }
        samples.emplace_back(std::move(p.pose), p.meta);
    }

    // seeded split assignment by fractions (per class when labeled)
    std::map<int64_t, std::vector<std::string>> pools;
    for (const auto& [pose, meta] : samples) pools[meta.label.value_or(0)].push_back(meta.id);
    RandomSource rng(derive_seed(cfg.seed, "splits"));
    std::vector<std::string> train, val, test;
    for (auto& [cls, ids] : pools) {
        for (size_t i = ids.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(i) - 1));
            std::swap(ids[i - 1], ids[j]);
        }
        size_t n = ids.size();
        size_t n_train = static_cast<size_t>(ing.train_fraction * static_cast<double>(n));
        size_t n_val = static_cast<size_t>(ing.val_fraction * static_cast<double>(n));
        for (size_t i = 0; i < n; ++i) {
            if (i < n_train) train.push_back(ids[i]);
            else if (i < n_train + n_val) val.push_back(ids[i]);
            else test.push_back(ids[i]);
        }
    }
    opt.splits["train"] = train;
    if (!val.empty()) opt.splits["val"] = val;
    if (!test.empty()) opt.splits["test"] = test;

    pack(samples, cfg.data.corpus, opt);
    write_json(out_path(cfg, "validation_report.json"), report);
    ctx.note_output(cfg.data.corpus);
    ctx.note_output(manifest_path_for(cfg.data.corpus));
    ctx.note_output(out_path(cfg, "validation_report.json"));
}

void cmd_validate(RunContext& ctx) {
    const RunConfig& cfg = ctx.config;
    if (cfg.data.corpus.empty()) throw ConfigError("config: 'data.corpus' is required");
    ctx.note_input(cfg.data.corpus);
    auto corpus = Corpus::open(cfg.data.corpus);
    double threshold = cfg.data.ingest ? cfg.data.ingest->max_missing_fraction : 0.5;
    json report;
    report["threshold"] = threshold;
    json entries = json::array();
    int64_t rejected = 0;
    for (int64_t i = 0; i < corpus->size(); ++i) {
        const auto& rec = corpus->manifest().sample_index[static_cast<size_t>(i)];
        LabeledSample sample = corpus->get(rec.id);
        auto verdict = validate_sequence(sample.pose, threshold);
        json entry;
        entry["id"] = rec.id;
        entry["accepted"] = verdict.accepted;
        entry["missing_fraction"] = verdict.missing_fraction;
        if (!verdict.accepted) {
            entry["reason"] = verdict.reason;
            ++rejected;
        }
        entries.push_back(std::move(entry));
    }
    report["samples"] = std::move(entries);
    report["rejected"] = rejected;
    write_json(out_path(cfg, "validation_report.json"), report);
    ctx.note_output(out_path(cfg, "validation_report.json"));
}

void write_labels(const RunConfig& cfg, const Corpus& corpus, RunContext& ctx) {
    json labels = corpus.manifest().vocabulary;
    write_json(out_path(cfg, "labels.json"), labels);
    ctx.note_output(out_path(cfg, "labels.json"));
}

void cmd_train(RunContext& ctx, bool finetune) {
    RunConfig& cfg = ctx.config;
    if (cfg.data.corpus.empty()) throw ConfigError("config: 'data.corpus' is required");
    ctx.note_input(cfg.data.corpus);
    ctx.note_input(manifest_path_for(cfg.data.corpus));
    auto corpus = Corpus::open(cfg.data.corpus);
    KeypointMap map = resolve_keypoint_map(cfg, ctx);
    SkeletonGraph graph = make_skeleton_graph(map.selection.size(), map.edges);

    TrainConfig train_cfg = cfg.train.train;
    train_cfg.model = resolve_model(cfg, corpus.get());
    train_cfg.seed = cfg.seed;
    train_cfg.train_transforms = cfg.train_transforms;
    train_cfg.eval_transforms = cfg.eval_transforms;
    train_cfg.init_allow_mismatch = cfg.train.init_override;

    std::optional<ParameterSet> initial;
    if (finetune) {
        if (cfg.train.init_from.empty())
            throw ConfigError("config: 'train.init_from' is required for finetune");
        ctx.note_input(cfg.train.init_from);
        initial = load_checkpoint(cfg.train.init_from);
    } else if (!cfg.train.init_from.empty()) {
        ctx.note_input(cfg.train.init_from);
        initial = load_checkpoint(cfg.train.init_from);
    }

    std::optional<std::vector<std::string>> subset_ids;
    if (cfg.data.subset.has_value()) {
        SubsetSpec spec = *cfg.data.subset;
        if (spec.seed == 0) spec.seed = derive_seed(cfg.seed, "subset");
        subset_ids = subset_by_samples_per_class(*corpus, spec, cfg.data.train_split);
    }

    TrainResult result = train_classifier(
        train_cfg, *corpus, cfg.data.train_split, cfg.data.val_split, map.selection,
        train_cfg.model.variant == "stgcn" ? &graph : nullptr,
        initial.has_value() ? &*initial : nullptr,
        subset_ids.has_value() ? &*subset_ids : nullptr);

    save_checkpoint(result.best_params, out_path(cfg, "checkpoint.bin"));
    write_history_jsonl(result.history, out_path(cfg, "metrics.jsonl"));
    write_json(out_path(cfg, "metrics_val.json"), metrics_to_json(result.best_val));
    write_labels(cfg, *corpus, ctx);
    ctx.note_output(out_path(cfg, "checkpoint.bin"));
    ctx.note_output(out_path(cfg, "metrics.jsonl"));
    ctx.note_output(out_path(cfg, "metrics_val.json"));
}

void cmd_pretrain(RunContext& ctx) {
    RunConfig& cfg = ctx.config;
    if (cfg.data.corpus.empty()) throw ConfigError("config: 'data.corpus' is required");
    ctx.note_input(cfg.data.corpus);
    auto corpus = Corpus::open(cfg.data.corpus);
    KeypointMap map = resolve_keypoint_map(cfg, ctx);
    SkeletonGraph graph = make_skeleton_graph(map.selection.size(), map.edges);
    if (!cfg.model.has_value())
        throw ConfigError("config: a 'model' section selects the encoder for pretraining");

    const std::string& strategy = cfg.pretrain.strategy;
    PretrainResult result;
    if (strategy == "dpc") {
        DpcConfig dpc = cfg.pretrain.dpc;
        dpc.encoder = cfg.model->stgcn;
        result = dpc_pretrain(*corpus, dpc, graph, map.selection, cfg.pretrain.optimizer,
                              cfg.seed);
    } else if (strategy == "moco") {
        MocoConfig moco = cfg.pretrain.moco;
        moco.encoder = cfg.model->stgcn;
        MemoryBank bank(moco.bank_capacity);
        result = moco_pretrain(*corpus, moco, graph, map.selection, bank, cfg.pretrain.optimizer,
                               cfg.seed);
    } else if (strategy == "masked") {
        MaskedPretrainConfig masked = cfg.pretrain.masked;
        masked.encoder = cfg.model->transformer;
        masked.input_keypoints = cfg.model->input_keypoints;
        result = masked_pretrain(*corpus, masked, map.selection, cfg.pretrain.optimizer,
                                 cfg.seed);
    } else {
        throw ConfigError("config: 'pretrain.strategy' must be dpc, moco or masked (got '" +
                          strategy + "')");
    }

    save_checkpoint(result.encoder, out_path(cfg, "encoder.bin"));
    {
        std::ofstream f(out_path(cfg, "pretrain_loss.jsonl"));
        for (const auto& [step, loss] : result.loss_history)
            f << json({{"step", step}, {"loss", loss}}).dump() << "\n";
    }
    ctx.note_output(out_path(cfg, "encoder.bin"));
    ctx.note_output(out_path(cfg, "pretrain_loss.jsonl"));
}

void cmd_evaluate(RunContext& ctx) {
    RunConfig& cfg = ctx.config;
    if (cfg.data.corpus.empty()) throw ConfigError("config: 'data.corpus' is required");
    if (cfg.evaluate.checkpoint.empty())
        throw ConfigError("config: 'evaluate.checkpoint' is required");
    ctx.note_input(cfg.data.corpus);
    ctx.note_input(cfg.evaluate.checkpoint);
    auto corpus = Corpus::open(cfg.data.corpus);
    KeypointMap map = resolve_keypoint_map(cfg, ctx);
    SkeletonGraph graph = make_skeleton_graph(map.selection.size(), map.edges);
    ModelConfig model = resolve_model(cfg, corpus.get());
    ParameterSet params = load_checkpoint(cfg.evaluate.checkpoint, model.config_hash(),
                                          cfg.train.init_override);
    Metrics metrics = evaluate_split(params, model, *corpus, cfg.data.eval_split,
                                     cfg.eval_transforms, map.selection,
                                     model.variant == "stgcn" ? &graph : nullptr,
                                     cfg.evaluate.topk);
    write_json(out_path(cfg, "metrics_eval.json"), metrics_to_json(metrics));
    ctx.note_output(out_path(cfg, "metrics_eval.json"));
    std::cout << "top1 " << metrics.top1 << " loss " << metrics.loss << "\n";
}

void cmd_benchmark(RunContext& ctx) {
    RunConfig& cfg = ctx.config;
    if (cfg.data.corpus.empty()) throw ConfigError("config: 'data.corpus' is required");
    if (cfg.benchmark.checkpoint.empty())
        throw ConfigError("config: 'benchmark.checkpoint' is required");
    ctx.note_input(cfg.data.corpus);
    ctx.note_input(cfg.benchmark.checkpoint);
    auto corpus = Corpus::open(cfg.data.corpus);
    FrozenModel model = load_frozen_model(cfg, cfg.benchmark.checkpoint);
    if (model.config.num_classes == 0)
        throw ConfigError("config: 'model.num_classes' required for benchmark");
    LatencyReport report = benchmark_latency(model, *corpus, cfg.data.eval_split,
                                             cfg.benchmark.repetitions, cfg.benchmark.warmup);
    json doc;
    doc["model"] = report.model_id;
    doc["host"] = report.host;
    doc["warmup_runs"] = report.warmup_runs;
    doc["mean_ms"] = report.mean_ms;
    doc["p50_ms"] = report.p50_ms;
    doc["p95_ms"] = report.p95_ms;
    doc["latencies_ms"] = report.latencies_ms;
    write_json(out_path(cfg, "latency_report.json"), doc);
    ctx.note_output(out_path(cfg, "latency_report.json"));
    std::cout << "mean " << report.mean_ms << " ms over " << report.latencies_ms.size()
              << " runs\n";
}

volatile std::sig_atomic_t g_stop_requested = 0;
void handle_stop(int) { g_stop_requested = 1; }

void cmd_serve(RunContext& ctx) {
    RunConfig& cfg = ctx.config;
    if (cfg.serve.checkpoint.empty()) throw ConfigError("config: 'serve.checkpoint' is required");
    ctx.note_input(cfg.serve.checkpoint);
    FrozenModel model = load_frozen_model(cfg, cfg.serve.checkpoint);
    ctx.write_manifest("running");
    if (cfg.serve.stdio) {
        StreamServer server(std::move(model), cfg.serve.serve);
        server.run_stdio(std::cin, std::cout);
        return;
    }
    StreamServer server(std::move(model), cfg.serve.serve);
    server.start();
    std::cerr << "serving on " << cfg.serve.serve.host << ":" << server.port() << "\n";
    std::signal(SIGINT, handle_stop);
    std::signal(SIGTERM, handle_stop);
    while (!g_stop_requested) {
        struct timespec ts { 0, 100000000 };  // 100 ms poll for the stop flag
        nanosleep(&ts, nullptr);
    }
    server.stop();
}

}  // namespace

FrozenModel load_frozen_model(const RunConfig& cfg, const std::string& checkpoint_path) {
    if (!fs::exists(checkpoint_path)) throw IoError("checkpoint " + checkpoint_path + " not found");
    FrozenModel model;
    KeypointMap map = cfg.data.keypoint_map.empty() ? default_keypoint_map()
                                                    : load_keypoint_map(cfg.data.keypoint_map);
    model.selection = map.selection;
    model.graph = make_skeleton_graph(map.selection.size(), map.edges);
    if (!cfg.model.has_value()) throw ConfigError("config: a 'model' section is required");
    model.config = *cfg.model;
    model.normalization = cfg.eval_transforms;

    // labels: explicit file, otherwise labels.json beside the checkpoint
    std::string labels_path = cfg.serve.labels;
    if (labels_path.empty()) {
        fs::path beside = fs::path(checkpoint_path).parent_path() / "labels.json";
        if (fs::exists(beside)) labels_path = beside.string();
    }
    if (!labels_path.empty()) {
        std::ifstream f(labels_path);
        if (!f) throw IoError("cannot open labels " + labels_path);
        json labels;
        f >> labels;
        for (const auto& l : labels) model.labels.push_back(l.get<std::string>());
    }
    if (model.config.num_classes == 0 && !model.labels.empty())
        model.config.num_classes = static_cast<int>(model.labels.size());
    if (model.config.num_classes == 0)
        throw ConfigError("config: 'model.num_classes' cannot be derived (no labels file found)");
    model.config.check();
    model.params = load_checkpoint(checkpoint_path, model.config.config_hash(),
                                   cfg.train.init_override);
    return model;
}

const std::vector<std::string>& command_names() {
    static const std::vector<std::string> names = {"pack",     "validate", "synth",
                                                   "pretrain", "train",    "finetune",
                                                   "evaluate", "benchmark", "serve"};
    return names;
}

int run_command(const std::string& command, const std::string& config_path,
                const std::vector<std::string>& overrides) {
    RunContext ctx;
    ctx.command = command;
    try {
        const auto& names = command_names();
        if (std::find(names.begin(), names.end(), command) == names.end())
            throw ConfigError("unknown command '" + command + "'");
        ctx.config = load_run_config(config_path, overrides);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }

    try {
        if (command == "synth") cmd_synth(ctx);
        else if (command == "pack") cmd_pack(ctx);
        else if (command == "validate") cmd_validate(ctx);
        else if (command == "train") cmd_train(ctx, false);
        else if (command == "finetune") cmd_train(ctx, true);
        else if (command == "pretrain") cmd_pretrain(ctx);
        else if (command == "evaluate") cmd_evaluate(ctx);
        else if (command == "benchmark") cmd_benchmark(ctx);
        else if (command == "serve") cmd_serve(ctx);
        ctx.write_manifest("success");
        return 0;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        ctx.write_manifest("failed");
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        ctx.write_manifest("failed");  // partial outputs stay flagged
        return 2;
    }
}

}  // namespace slrkit
