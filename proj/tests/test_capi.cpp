#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <slrkit.h>

#include "slrkit/corpus.hpp"
#include "slrkit/synth.hpp"

#include "test_support.hpp"

#include <cstring>
#include <fstream>
#include <string>
#include <vector>

using namespace slrkit;

namespace {

// one shared fixture: a synthetic corpus plus a trained tiny checkpoint
struct CApiFixture {
    testsupport::TempDir dir{"capi"};
    std::string corpus_path;
    std::string config_path;
    std::string checkpoint_path;

    CApiFixture() {
        corpus_path = (dir.path / "corpus.h5").string();
        SyntheticSpec spec;
        spec.classes = 3;
        spec.samples_per_class = 5;
        spec.frames = 30;
        make_synthetic_corpus(spec, corpus_path, 4);

        config_path = (dir.path / "run.yaml").string();
        std::string outdir = (dir.path / "out").string();
        std::ofstream f(config_path);
        f << "format_version: 1\n"
          << "seed: 5\n"
          << "output_dir: " << outdir << "\n"
          << "data:\n  corpus: " << corpus_path << "\n"
          << "model:\n  variant: lstm\n  lstm: {layers: 1, hidden: 8}\n"
          << "transforms:\n  eval:\n    - {name: center_and_scale_normalize, reference_span: 1.0}\n"
          << "train:\n  batch_size: 6\n  learning_rate: 0.01\n  max_epochs: 3\n";
        f.close();
        REQUIRE(slrkit_run("train", config_path.c_str(), nullptr, 0) == SLRKIT_OK);
        checkpoint_path = outdir + "/checkpoint.bin";
    }
};

CApiFixture& fixture() {
    static CApiFixture f;
    return f;
}

}  // namespace

TEST_CASE("version and error strings are always available") {
    CHECK(std::strlen(slrkit_version()) > 0);
    CHECK(slrkit_last_error() != nullptr);
}

TEST_CASE("slrkit_run maps config and runtime failures to statuses") {
    CHECK(slrkit_run(nullptr, "x.yaml", nullptr, 0) == SLRKIT_ERR_INVALID);
    CHECK(slrkit_run("train", "/nonexistent.yaml", nullptr, 0) == SLRKIT_ERR_CONFIG);
    const char* bad_override = "train.learning_rte=1";
    const char* overrides[] = {bad_override};
    CHECK(slrkit_run("train", fixture().config_path.c_str(), overrides, 1) == SLRKIT_ERR_CONFIG);
    CHECK(std::strlen(slrkit_last_error()) > 0);
}

TEST_CASE("corpus handles expose counts, ids, dims and bit-exact data") {
    CApiFixture& fx = fixture();
    slrkit_corpus* corpus = nullptr;
    REQUIRE(slrkit_corpus_open(fx.corpus_path.c_str(), &corpus) == SLRKIT_OK);
    int64_t count = 0;
    REQUIRE(slrkit_corpus_count(corpus, &count) == SLRKIT_OK);
    CHECK(count == 15);

    char id[64];
    REQUIRE(slrkit_corpus_sample_id(corpus, 0, id, sizeof(id)) == SLRKIT_OK);
    int64_t frames = 0, keypoints = 0;
    REQUIRE(slrkit_corpus_sample_dims(corpus, id, &frames, &keypoints) == SLRKIT_OK);
    CHECK(frames == 30);
    CHECK(keypoints == 27);

    std::vector<float> kps(static_cast<size_t>(frames * keypoints * 2));
    std::vector<uint8_t> valid(static_cast<size_t>(frames * keypoints));
    int64_t label = -2;
    REQUIRE(slrkit_corpus_get(corpus, id, kps.data(), valid.data(), &label) == SLRKIT_OK);

    auto reference = Corpus::open(fx.corpus_path);
    LabeledSample want = reference->get(std::string(id));
    CHECK(kps == want.pose.data);
    CHECK(valid == want.pose.valid);
    CHECK(label == want.label);

    char tiny[2];
    CHECK(slrkit_corpus_sample_id(corpus, 0, tiny, sizeof(tiny)) == SLRKIT_ERR_INVALID);
    CHECK(slrkit_corpus_get(corpus, "ghost", nullptr, nullptr, &label) == SLRKIT_ERR_NOT_FOUND);
    slrkit_corpus_close(corpus);

    slrkit_corpus* missing = nullptr;
    CHECK(slrkit_corpus_open("/nonexistent.h5", &missing) == SLRKIT_ERR_IO);
}

TEST_CASE("model handles load checkpoints and classify windows") {
    CApiFixture& fx = fixture();
    slrkit_model* model = nullptr;
    REQUIRE(slrkit_model_load(fx.config_path.c_str(), fx.checkpoint_path.c_str(), &model) ==
            SLRKIT_OK);
    int32_t classes = 0;
    REQUIRE(slrkit_model_num_classes(model, &classes) == SLRKIT_OK);
    CHECK(classes == 3);

    // classify a stored sample end to end through the flat interface
    slrkit_corpus* corpus = nullptr;
    REQUIRE(slrkit_corpus_open(fx.corpus_path.c_str(), &corpus) == SLRKIT_OK);
    char id[64];
    REQUIRE(slrkit_corpus_sample_id(corpus, 3, id, sizeof(id)) == SLRKIT_OK);
    int64_t frames = 0, keypoints = 0;
    REQUIRE(slrkit_corpus_sample_dims(corpus, id, &frames, &keypoints) == SLRKIT_OK);
    std::vector<float> kps(static_cast<size_t>(frames * keypoints * 2));
    REQUIRE(slrkit_corpus_get(corpus, id, kps.data(), nullptr, nullptr) == SLRKIT_OK);

    int32_t labels[3];
    float scores[3];
    double latency = 0.0;
    REQUIRE(slrkit_predict(model, kps.data(), nullptr, frames, keypoints, 3, labels, scores,
                           &latency) == SLRKIT_OK);
    CHECK(scores[0] >= scores[1]);
    CHECK(scores[1] >= scores[2]);
    CHECK(latency > 0.0);

    // the same call twice is deterministic
    int32_t labels2[3];
    float scores2[3];
    REQUIRE(slrkit_predict(model, kps.data(), nullptr, frames, keypoints, 3, labels2, scores2,
                           nullptr) == SLRKIT_OK);
    CHECK(std::memcmp(labels, labels2, sizeof(labels)) == 0);
    CHECK(std::memcmp(scores, scores2, sizeof(scores)) == 0);

    char gloss[32];
    REQUIRE(slrkit_model_label(model, labels[0], gloss, sizeof(gloss)) == SLRKIT_OK);
    CHECK(std::string(gloss).rfind("SIGN_", 0) == 0);

    CHECK(slrkit_predict(model, kps.data(), nullptr, frames, keypoints, 9, labels, scores,
                         nullptr) == SLRKIT_ERR_INVALID);
    slrkit_corpus_close(corpus);
    slrkit_model_free(model);

    slrkit_model* bad = nullptr;
    CHECK(slrkit_model_load(fx.config_path.c_str(), "/nonexistent.bin", &bad) == SLRKIT_ERR_IO);
}
