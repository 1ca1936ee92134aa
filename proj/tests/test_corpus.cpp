#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "slrkit/common.hpp"
#include "slrkit/corpus.hpp"

#include <filesystem>
#include <fstream>
#include <map>
#include <set>

using namespace slrkit;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("slrkit_corpus_test_" + std::to_string(::getpid()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

PoseSequence random_pose(RandomSource& rng, int64_t frames, int64_t keypoints) {
    PoseSequence p = PoseSequence::zeros(frames, keypoints);
    for (auto& x : p.data) x = static_cast<float>(rng.uniform_real(-1.0, 1.0));
    for (size_t i = 0; i < p.valid.size(); ++i)
        if (rng.uniform01() < 0.05) {
            p.valid[i] = 0;
            p.data[2 * i] = 0.0f;
            p.data[2 * i + 1] = 0.0f;
        }
    return p;
}

std::vector<std::pair<PoseSequence, SampleMeta>> make_samples(int count, uint64_t seed,
                                                              bool labeled, int64_t keypoints = 27) {
    RandomSource rng(seed);
    std::vector<std::pair<PoseSequence, SampleMeta>> out;
    for (int i = 0; i < count; ++i) {
        SampleMeta meta;
        meta.id = "clip" + std::to_string(i);
        if (labeled) {
            meta.label = i % 3;
            meta.gloss = "G" + std::to_string(i % 3);
        }
        meta.signer = "s" + std::to_string(i % 2);
        out.emplace_back(random_pose(rng, 20 + (i % 5) * 10, keypoints), meta);
    }
    return out;
}

PackOptions labeled_options() {
    PackOptions opt;
    opt.corpus_id = "test-corpus";
    opt.fps = 30.0f;
    opt.keypoint_map_id = "holistic27-v1";
    opt.vocabulary = {"G0", "G1", "G2"};
    return opt;
}

}  // namespace

TEST_CASE("pack/get round-trip is bit-exact in both container layouts") {
    TempDir tmp;
    auto samples = make_samples(12, 7, true);
    for (const std::string dest :
         {(tmp.path / "corpus.h5").string(), (tmp.path / "corpus_dir").string()}) {
        CAPTURE(dest);
        PackOptions opt = labeled_options();
        opt.splits["train"] = {"clip0", "clip1"};
        CorpusManifest manifest = pack(samples, dest, opt);
        CHECK(manifest.sample_index.size() == 12);

        auto corpus = Corpus::open(dest);
        CHECK(corpus->size() == 12);
        for (const auto& [pose, meta] : samples) {
            LabeledSample got = corpus->get(meta.id);
            CHECK(got.pose.data == pose.data);    // bitwise
            CHECK(got.pose.valid == pose.valid);
            CHECK(got.pose.fps == pose.fps);
            CHECK(got.label == *meta.label);
            CHECK(got.gloss == meta.gloss);
        }
        // repeated get is identical
        LabeledSample a = corpus->get(std::string("clip3")), b = corpus->get(std::string("clip3"));
        CHECK(a.pose.data == b.pose.data);
        // index-based access matches id-based access
        CHECK(corpus->get(int64_t(0)).pose.data == corpus->get(std::string("clip0")).pose.data);
        CHECK_THROWS_AS(corpus->get(std::string("nope")), NotFound);
        CHECK(corpus->split("train").size() == 2);
    }
}

TEST_CASE("pack rejects inconsistent keypoint counts, duplicates and empty streams") {
    TempDir tmp;
    auto samples = make_samples(3, 8, true);
    auto mixed = samples;
    RandomSource rng(1);
    SampleMeta meta75;
    meta75.id = "big";
    meta75.label = 0;
    meta75.gloss = "G0";
    mixed.emplace_back(random_pose(rng, 30, 75), meta75);
    CHECK_THROWS_WITH_AS(pack(mixed, (tmp.path / "bad.h5").string(), labeled_options()),
                         doctest::Contains("K="), InvalidArgument);

    CHECK_THROWS_AS(pack({}, (tmp.path / "empty.h5").string(), labeled_options()),
                    InvalidArgument);

    auto dup = samples;
    dup.push_back(samples.front());
    CHECK_THROWS_AS(pack(dup, (tmp.path / "dup.h5").string(), labeled_options()), InvalidArgument);
    // failed packs leave no partial container behind
    CHECK_FALSE(fs::exists(tmp.path / "bad.h5"));
}

TEST_CASE("pack validates samples against the missing-fraction threshold") {
    TempDir tmp;
    RandomSource rng(3);
    PoseSequence gappy = PoseSequence::zeros(10, 4);
    for (int64_t f = 0; f < 10; ++f) gappy.set_valid(f, 0, false);  // 25% missing
    SampleMeta meta;
    meta.id = "gappy";
    meta.label = 0;
    PackOptions opt = labeled_options();
    opt.max_missing_fraction = 0.2;
    CHECK_THROWS_AS(pack({{gappy, meta}}, (tmp.path / "gap.h5").string(), opt), InvalidArgument);
}

TEST_CASE("subset_by_samples_per_class keeps min(k, class size) per class, seeded") {
    TempDir tmp;
    auto samples = make_samples(17, 9, true);  // classes of size 6,6,5
    CorpusManifest manifest = pack(samples, (tmp.path / "c.h5").string(), labeled_options());
    auto corpus = Corpus::open((tmp.path / "c.h5").string());

    SubsetSpec spec{3, 1234};
    auto ids = subset_by_samples_per_class(*corpus, spec);
    CHECK(ids.size() == 9);
    std::map<int64_t, int> per_class;
    for (const auto& id : ids) ++per_class[*corpus->record(id).label];
    for (auto [label, count] : per_class) CHECK(count == 3);

    auto again = subset_by_samples_per_class(*corpus, spec);
    CHECK(ids == again);

    SubsetSpec big{100, 1};
    CHECK(subset_by_samples_per_class(*corpus, big).size() == 17);

    SubsetSpec other{3, 4321};
    CHECK(subset_by_samples_per_class(*corpus, other) != ids);
}

TEST_CASE("subset requires a labeled corpus") {
    TempDir tmp;
    auto samples = make_samples(4, 10, false);
    PackOptions opt;
    opt.corpus_id = "unlabeled";
    pack(samples, (tmp.path / "u.h5").string(), opt);
    auto corpus = Corpus::open((tmp.path / "u.h5").string());
    CHECK_THROWS_AS(subset_by_samples_per_class(*corpus, SubsetSpec{3, 1}), InvalidArgument);
}

TEST_CASE("sample_pretraining_clip returns contiguous in-range clips") {
    TempDir tmp;
    RandomSource gen(4);
    std::vector<std::pair<PoseSequence, SampleMeta>> samples;
    for (int i = 0; i < 6; ++i) {
        PoseSequence p = PoseSequence::zeros(140, 5);
        for (int64_t f = 0; f < 140; ++f)
            for (int64_t k = 0; k < 5; ++k) p.at(f, k, 0) = static_cast<float>(f);
        SampleMeta meta;
        meta.id = "s" + std::to_string(i);
        samples.emplace_back(std::move(p), meta);
    }
    PackOptions opt;
    opt.corpus_id = "pretrain";
    pack(samples, (tmp.path / "p.h5").string(), opt);
    auto corpus = Corpus::open((tmp.path / "p.h5").string());

    RandomSource rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        PoseSequence clip = sample_pretraining_clip(*corpus, rng, 60, 120);
        CHECK(clip.frames >= 60);
        CHECK(clip.frames <= 120);
        for (int64_t f = 1; f < clip.frames; ++f)
            CHECK(clip.at(f, 0, 0) == clip.at(f - 1, 0, 0) + 1.0f);  // contiguous source frames
    }
    CHECK_THROWS_AS(sample_pretraining_clip(*corpus, rng, 200, 300), InvalidArgument);

    // a sample exactly at min_len comes back whole when picked
    TempDir tmp2;
    std::vector<std::pair<PoseSequence, SampleMeta>> exact;
    SampleMeta meta;
    meta.id = "only";
    exact.emplace_back(PoseSequence::zeros(60, 5), meta);
    PackOptions opt2;
    opt2.corpus_id = "exact";
    pack(exact, (tmp2.path / "e.h5").string(), opt2);
    auto corpus2 = Corpus::open((tmp2.path / "e.h5").string());
    PoseSequence whole = sample_pretraining_clip(*corpus2, rng, 60, 120);
    CHECK(whole.frames == 60);
}

TEST_CASE("manifest JSON round-trips and rejects broken split references") {
    TempDir tmp;
    auto samples = make_samples(5, 11, true);
    PackOptions opt = labeled_options();
    opt.splits["train"] = {"clip0", "clip1", "clip2"};
    opt.splits["val"] = {"clip3", "clip4"};
    pack(samples, (tmp.path / "m.h5").string(), opt);
    CorpusManifest m = load_manifest(manifest_path_for((tmp.path / "m.h5").string()));
    CHECK(m.corpus_id == "test-corpus");
    CHECK(m.vocabulary.size() == 3);
    CHECK(m.splits.at("train").size() == 3);

    m.splits["bad"] = {"ghost"};
    CHECK_THROWS_AS(m.check(), InvalidArgument);
}

TEST_CASE("jsonl ingestion reads frames ordered by t with validity") {
    TempDir tmp;
    auto path = tmp.path / "clip.jsonl";
    {
        std::ofstream f(path);
        f << R"({"t": 1, "kps": [[3.0, 4.0], [5.0, 6.0]], "valid": [true, false]})" << "\n";
        f << R"({"t": 0, "kps": [[1.0, 2.0], [7.0, 8.0]]})" << "\n";
    }
    PoseSequence pose = read_jsonl_pose(path.string(), 25.0f);
    REQUIRE(pose.frames == 2);
    REQUIRE(pose.keypoints == 2);
    CHECK(pose.fps == 25.0f);
    CHECK(pose.at(0, 0, 0) == 1.0f);  // t=0 sorted first
    CHECK(pose.at(1, 0, 0) == 3.0f);
    CHECK(pose.is_valid(1, 0));
    CHECK_FALSE(pose.is_valid(1, 1));
    CHECK(pose.at(1, 1, 0) == 0.0f);  // invalid slots stored as zeros
}
