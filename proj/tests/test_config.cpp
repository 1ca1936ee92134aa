#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "slrkit/common.hpp"
#include "slrkit/config.hpp"
#include "slrkit/hash.hpp"
#include "slrkit/runner.hpp"
#include "slrkit/synth.hpp"

#include "test_support.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <map>

using namespace slrkit;
using json = nlohmann::json;

namespace {

const char* kBaseConfig = R"(
format_version: 1
seed: 21
output_dir: OUTDIR
data:
  corpus: CORPUS
  train_split: train
  val_split: val
  eval_split: val
  synthetic:
    classes: 3
    samples_per_class: 6
    frames: 40
model:
  variant: lstm
  lstm: {layers: 1, hidden: 12}
transforms:
  train:
    - {name: center_and_scale_normalize, reference_span: 1.0}
    - {name: rotate, theta_max: 0.3}
  eval:
    - {name: center_and_scale_normalize, reference_span: 1.0}
train:
  batch_size: 6
  learning_rate: 0.01
  max_epochs: 6
evaluate:
  checkpoint: OUTDIR/checkpoint.bin
benchmark:
  checkpoint: OUTDIR/checkpoint.bin
  repetitions: 1
  warmup: 1
)";

std::string config_text(const testsupport::TempDir& dir) {
    std::string text = kBaseConfig;
    auto replace_all = [&](const std::string& from, const std::string& to) {
        size_t pos = 0;
        while ((pos = text.find(from, pos)) != std::string::npos) {
            text.replace(pos, from.size(), to);
            pos += to.size();
        }
    };
    replace_all("OUTDIR", (dir.path / "out").string());
    replace_all("CORPUS", (dir.path / "corpus.h5").string());
    return text;
}

std::string write_config(const testsupport::TempDir& dir, const std::string& text) {
    std::string path = (dir.path / "run.yaml").string();
    std::ofstream f(path);
    f << text;
    return path;
}

}  // namespace

TEST_CASE("config parses sections, defaults and pipelines") {
    testsupport::TempDir dir("cfg_parse");
    RunConfig cfg = parse_run_config(config_text(dir));
    CHECK(cfg.seed == 21);
    CHECK(cfg.data.train_split == "train");
    REQUIRE(cfg.model.has_value());
    CHECK(cfg.model->variant == "lstm");
    CHECK(cfg.model->lstm.hidden == 12);
    CHECK(cfg.train.train.batch_size == 6);
    CHECK(cfg.train.train.patience == 50);  // default
    REQUIRE(cfg.train_transforms.size() == 2);
    CHECK(cfg.train_transforms[1].name == "rotate");
    CHECK(cfg.train_transforms[1].params.at("theta_max") == doctest::Approx(0.3));
    CHECK(cfg.pretrain.dpc.window_len == 10);     // defaults present
    CHECK(cfg.pretrain.moco.temperature == 0.07);
}

TEST_CASE("unknown keys are rejected with their dotted path") {
    testsupport::TempDir dir("cfg_unknown");
    std::string text = config_text(dir);
    text += "\nextra_section: 1\n";
    CHECK_THROWS_WITH_AS(parse_run_config(text), doctest::Contains("extra_section"), ConfigError);

    std::string typo = config_text(dir);
    typo.replace(typo.find("learning_rate"), 13, "learning_rte:");
    CHECK_THROWS_WITH_AS(parse_run_config(typo), doctest::Contains("learning_rte"), ConfigError);
}

TEST_CASE("eval pipeline with a random transform is a config error") {
    testsupport::TempDir dir("cfg_evalrand");
    std::string text = config_text(dir);
    text.replace(text.find("eval:\n    - {name: center_and_scale_normalize, reference_span: 1.0}"),
                 std::string("eval:\n    - {name: center_and_scale_normalize, reference_span: 1.0}").size(),
                 "eval:\n    - {name: shear, s_max: 0.2}");
    CHECK_THROWS_AS(parse_run_config(text), ConfigError);
}

TEST_CASE("overrides rewrite values and create nested keys") {
    testsupport::TempDir dir("cfg_override");
    RunConfig cfg = parse_run_config(config_text(dir),
                                     {"train.learning_rate=0.5", "data.subset.samples_per_class=3",
                                      "model.lstm.hidden=24"});
    CHECK(cfg.train.train.learning_rate == 0.5);
    REQUIRE(cfg.data.subset.has_value());
    CHECK(cfg.data.subset->samples_per_class == 3);
    CHECK(cfg.model->lstm.hidden == 24);

    CHECK_THROWS_AS(parse_run_config(config_text(dir), {"no_equals_sign"}), ConfigError);
    // an override inventing an unknown key still fails strict validation
    CHECK_THROWS_WITH_AS(parse_run_config(config_text(dir), {"train.learning_rte=0.5"}),
                         doctest::Contains("learning_rte"), ConfigError);
}

TEST_CASE("resolved config round-trips to an equivalent RunConfig") {
    testsupport::TempDir dir("cfg_roundtrip");
    RunConfig cfg = parse_run_config(config_text(dir), {"train.learning_rate=0.25"});
    RunConfig back = parse_run_config(cfg.resolved_yaml());
    CHECK(back.seed == cfg.seed);
    CHECK(back.output_dir == cfg.output_dir);
    CHECK(back.train.train.learning_rate == 0.25);
    CHECK(back.model->variant == cfg.model->variant);
    CHECK(back.train_transforms.size() == cfg.train_transforms.size());
}

TEST_CASE("synthetic corpus is deterministic and centroid-separable") {
    testsupport::TempDir dir("synth_sep");
    SyntheticSpec spec;
    spec.classes = 5;
    spec.samples_per_class = 8;
    spec.frames = 60;
    std::string dest_a = (dir.path / "a.h5").string();
    std::string dest_b = (dir.path / "b.h5").string();
    make_synthetic_corpus(spec, dest_a, 99);
    make_synthetic_corpus(spec, dest_b, 99);
    auto ca = Corpus::open(dest_a);
    auto cb = Corpus::open(dest_b);
    REQUIRE(ca->size() == 40);
    for (int64_t i = 0; i < ca->size(); ++i)
        CHECK(ca->get(i).pose.data == cb->get(i).pose.data);  // bit-identical seeds

    // nearest-centroid on per-clip mean motion vectors validates the
    // generator: mean motion = (last - first) / (F - 1) per keypoint
    auto mean_motion = [](const PoseSequence& p) {
        std::vector<double> f(static_cast<size_t>(p.keypoints * 2));
        for (int64_t k = 0; k < p.keypoints; ++k)
            for (int64_t d = 0; d < 2; ++d)
                f[static_cast<size_t>(k * 2 + d)] =
                    (static_cast<double>(p.at(p.frames - 1, k, d)) - p.at(0, k, d)) /
                    static_cast<double>(p.frames - 1);
        return f;
    };
    std::map<int64_t, std::vector<double>> centroid;
    std::map<int64_t, int64_t> counts;
    for (const auto& id : ca->split("train")) {
        LabeledSample s = ca->get(id);
        auto f = mean_motion(s.pose);
        auto& c = centroid[s.label];
        c.resize(f.size(), 0.0);
        for (size_t i = 0; i < f.size(); ++i) c[i] += f[i];
        ++counts[s.label];
    }
    for (auto& [label, c] : centroid)
        for (auto& x : c) x /= static_cast<double>(counts[label]);

    int64_t hits = 0, total = 0;
    for (int64_t i = 0; i < ca->size(); ++i) {
        LabeledSample s = ca->get(i);
        auto f = mean_motion(s.pose);
        int64_t best = -1;
        double best_d = 1e300;
        for (const auto& [label, c] : centroid) {
            double d = 0.0;
            for (size_t j = 0; j < f.size(); ++j) d += (f[j] - c[j]) * (f[j] - c[j]);
            if (d < best_d) {
                best_d = d;
                best = label;
            }
        }
        hits += (best == s.label) ? 1 : 0;
        ++total;
    }
    CHECK(static_cast<double>(hits) / static_cast<double>(total) > 0.9);
}

TEST_CASE("synthetic spec guards degenerate settings") {
    SyntheticSpec spec;
    spec.classes = 1;
    CHECK_THROWS_AS(spec.check(), InvalidArgument);
}

TEST_CASE("run_command drives synth/train/evaluate and writes manifests") {
    testsupport::TempDir dir("runner_e2e");
    std::string cfg_path = write_config(dir, config_text(dir));
    std::string outdir = (dir.path / "out").string();

    CHECK(run_command("synth", cfg_path, {}) == 0);
    CHECK(run_command("train", cfg_path, {}) == 0);
    CHECK(std::filesystem::exists(outdir + "/checkpoint.bin"));
    CHECK(std::filesystem::exists(outdir + "/labels.json"));
    CHECK(run_command("evaluate", cfg_path, {}) == 0);
    CHECK(std::filesystem::exists(outdir + "/metrics_eval.json"));
    CHECK(run_command("benchmark", cfg_path, {}) == 0);

    std::ifstream mf(outdir + "/run_manifest.json");
    REQUIRE(mf.good());
    json manifest;
    mf >> manifest;
    CHECK(manifest["status"] == "success");
    CHECK(manifest["seed"] == 21);
    CHECK(manifest["inputs"].size() > 0);
    CHECK(manifest["outputs"].size() > 0);
    // the resolved config in the manifest re-parses to an equivalent run
    RunConfig back = parse_run_config(manifest["resolved_config"].get<std::string>());
    CHECK(back.seed == 21);

    // unknown config key -> exit 1 naming the key (checked via exception text above)
    CHECK(run_command("train", cfg_path, {"train.learning_rte=0.5"}) == 1);
    CHECK(run_command("nosuch", cfg_path, {}) == 1);
    // runtime failure -> exit 2 (checkpoint missing)
    CHECK(run_command("evaluate", cfg_path, {"evaluate.checkpoint=/nonexistent.bin"}) == 2);
}

TEST_CASE("reruns with an unchanged config reproduce identical artifact hashes") {
    testsupport::TempDir dir("runner_idem");
    std::string cfg_path = write_config(dir, config_text(dir));
    std::string outdir = (dir.path / "out").string();

    REQUIRE(run_command("synth", cfg_path, {}) == 0);
    REQUIRE(run_command("train", cfg_path, {}) == 0);
    std::string ckpt1 = sha256_file(outdir + "/checkpoint.bin");
    std::string labels1 = sha256_file(outdir + "/labels.json");
    auto metrics_without_walltime = [&]() {
        std::ifstream f(outdir + "/metrics.jsonl");
        std::string line, out;
        while (std::getline(f, line)) {
            json rec = json::parse(line);
            rec.erase("wall_time_s");  // timestamps excluded from idempotence
            out += rec.dump() + "\n";
        }
        return out;
    };
    std::string metrics1 = metrics_without_walltime();

    REQUIRE(run_command("train", cfg_path, {}) == 0);
    CHECK(sha256_file(outdir + "/checkpoint.bin") == ckpt1);
    CHECK(sha256_file(outdir + "/labels.json") == labels1);
    CHECK(metrics_without_walltime() == metrics1);
}

TEST_CASE("pack ingests JSONL clips, filters noisy ones, assigns splits") {
    testsupport::TempDir dir("runner_pack");
    // two clean clips and one noisy clip (everything invalid)
    for (int i = 0; i < 3; ++i) {
        std::ofstream f(dir.path / ("clip" + std::to_string(i) + ".jsonl"));
        for (int t = 0; t < 12; ++t) {
            json kps = json::array();
            json valid = json::array();
            for (int k = 0; k < 27; ++k) {
                kps.push_back(json::array({0.01 * k + 0.001 * t, 0.02 * k}));
                valid.push_back(i != 2);  // clip2 is all-invalid
            }
            f << json{{"t", t}, {"kps", kps}, {"valid", valid}}.dump() << "\n";
        }
    }
    json manifest = json::array();
    for (int i = 0; i < 3; ++i)
        manifest.push_back({{"jsonl", (dir.path / ("clip" + std::to_string(i) + ".jsonl")).string()},
                            {"gloss", i == 0 ? "HELLO" : "WORLD"},
                            {"id", "clip" + std::to_string(i)}});
    {
        std::ofstream f(dir.path / "ingest.json");
        f << manifest.dump();
    }
    std::string text = "format_version: 1\nseed: 3\noutput_dir: " + (dir.path / "out").string() +
                       "\ndata:\n  corpus: " + (dir.path / "packed").string() +
                       "\n  ingest:\n    manifest: " + (dir.path / "ingest.json").string() +
                       "\n    fps: 30\n    max_missing_fraction: 0.5\n    train_fraction: 1.0\n" +
                       "    val_fraction: 0.0\n";
    std::string cfg_path = write_config(dir, text);
    REQUIRE(run_command("pack", cfg_path, {}) == 0);

    auto corpus = Corpus::open((dir.path / "packed").string());
    CHECK(corpus->size() == 2);  // the noisy clip was filtered out
    CHECK(corpus->manifest().vocabulary == std::vector<std::string>{"HELLO", "WORLD"});
    CHECK(corpus->get(std::string("clip0")).gloss == "HELLO");
    CHECK(run_command("validate", cfg_path, {}) == 0);

    std::ifstream rf((dir.path / "out" / "validation_report.json"));
    json report;
    rf >> report;
    CHECK(report["rejected"] == 0);  // packed corpus holds only clean clips
}
