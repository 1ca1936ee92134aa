#pragma once

// Shared fixtures for the unit tests: throwaway corpora with class-distinct
// drift patterns, small enough to train in seconds.

#include "slrkit/corpus.hpp"
#include "slrkit/pose.hpp"
#include "slrkit/random.hpp"

#include <cmath>
#include <filesystem>
#include <string>
#include <unistd.h>
#include <vector>

namespace slrkit::testsupport {

struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& tag) {
        path = std::filesystem::temp_directory_path() /
               ("slrkit_" + tag + "_" + std::to_string(::getpid()));
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
};

/// A clip whose keypoints drift along a class-specific direction with a
/// class-specific wiggle; keypoint 0/1 act as fixed shoulders.
inline PoseSequence drift_clip(int64_t frames, int64_t keypoints, int64_t cls, int64_t classes,
                               RandomSource& rng, double noise = 0.01) {
    PoseSequence p = PoseSequence::zeros(frames, keypoints);
    double angle = 2.0 * M_PI * static_cast<double>(cls) / static_cast<double>(classes);
    double vx = 0.02 * std::cos(angle), vy = 0.02 * std::sin(angle);
    double freq = 1.0 + 0.5 * static_cast<double>(cls);
    for (int64_t f = 0; f < frames; ++f) {
        double t = static_cast<double>(f);
        for (int64_t k = 0; k < keypoints; ++k) {
            double base_x = -0.5 + static_cast<double>(k) / static_cast<double>(keypoints);
            double base_y = 0.1 * static_cast<double>(k % 3);
            double x, y;
            if (k == 0 || k == 1) {  // shoulders stay put for normalization
                x = (k == 0) ? -0.5 : 0.5;
                y = 0.0;
            } else {
                x = base_x + vx * t + 0.05 * std::sin(2.0 * M_PI * freq * t / frames);
                y = base_y + vy * t + 0.05 * std::cos(2.0 * M_PI * freq * t / frames);
            }
            p.at(f, k, 0) = static_cast<float>(x + noise * rng.normal());
            p.at(f, k, 1) = static_cast<float>(y + noise * rng.normal());
        }
    }
    return p;
}

struct MiniCorpus {
    TempDir dir;
    std::unique_ptr<Corpus> corpus;
    KeypointSelection selection;

    MiniCorpus(const std::string& tag, int64_t classes, int64_t per_class_train,
               int64_t per_class_val, int64_t frames, int64_t keypoints, uint64_t seed)
        : dir(tag) {
        RandomSource rng(seed);
        std::vector<std::pair<PoseSequence, SampleMeta>> samples;
        PackOptions opt;
        opt.corpus_id = tag;
        for (int64_t c = 0; c < classes; ++c) opt.vocabulary.push_back("G" + std::to_string(c));
        std::vector<std::string> train, val;
        for (int64_t c = 0; c < classes; ++c) {
            for (int64_t i = 0; i < per_class_train + per_class_val; ++i) {
                SampleMeta meta;
                meta.id = "c" + std::to_string(c) + "_s" + std::to_string(i);
                meta.label = c;
                meta.gloss = opt.vocabulary[static_cast<size_t>(c)];
                samples.emplace_back(drift_clip(frames, keypoints, c, classes, rng), meta);
                (i < per_class_train ? train : val).push_back(meta.id);
            }
        }
        opt.splits["train"] = train;
        opt.splits["val"] = val;
        std::string dest = (dir.path / "corpus.h5").string();
        pack(samples, dest, opt);
        corpus = Corpus::open(dest);
        for (int64_t k = 0; k < keypoints; ++k) selection.indices.push_back(k);
        selection.shoulder_left = 0;
        selection.shoulder_right = 1;
    }
};

/// Unlabeled clips sharing the drift statistics, for pretraining tests.
struct MiniUnlabeled {
    TempDir dir;
    std::unique_ptr<Corpus> corpus;

    MiniUnlabeled(const std::string& tag, int64_t count, int64_t min_frames, int64_t max_frames,
                  int64_t keypoints, int64_t classes, uint64_t seed)
        : dir(tag) {
        RandomSource rng(seed);
        std::vector<std::pair<PoseSequence, SampleMeta>> samples;
        for (int64_t i = 0; i < count; ++i) {
            SampleMeta meta;
            meta.id = "u" + std::to_string(i);
            int64_t frames = rng.uniform_int(min_frames, max_frames);
            int64_t cls = rng.uniform_int(0, classes - 1);
            samples.emplace_back(drift_clip(frames, keypoints, cls, classes, rng), meta);
        }
        PackOptions opt;
        opt.corpus_id = tag;
        std::string dest = (dir.path / "unlabeled.h5").string();
        pack(samples, dest, opt);
        corpus = Corpus::open(dest);
    }
};

}  // namespace slrkit::testsupport
