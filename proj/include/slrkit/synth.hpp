#pragma once

#include "slrkit/corpus.hpp"

#include <cstdint>
#include <string>

namespace slrkit {

/// Synthetic 27-keypoint signing corpus. Each class owns a distinct
/// drift direction and wiggle frequency for the moving arm; face, torso
/// and the off hand jitter below the static-motion threshold. Clips get
/// a random per-clip affine (rotation/scale/shift) plus seeded noise, so
/// classes stay linearly separable in mean-motion statistics while
/// individual clips vary.
struct SyntheticSpec {
    int64_t classes = 5;
    int64_t samples_per_class = 20;
    int64_t frames = 80;
    double noise = 2e-4;          // per-frame jitter sigma (normalized units)
    double drift = 0.3;           // total travel of the signing hand per clip
    double wiggle = 0.05;         // oscillation amplitude
    double affine_jitter = 0.1;   // per-clip rotation (rad) and scale fraction
    float fps = 30.0f;
    int64_t val_per_class = 0;    // 0 -> 30% of samples_per_class (min 1)
    int64_t test_per_class = 0;

    bool unlabeled = false;       // pretraining variant: no labels or splits
    int64_t count = 500;          // unlabeled clip count
    int64_t min_frames = 90;
    int64_t max_frames = 140;

    void check() const;
};

/// Generates and packs the corpus at `destination` (layout chosen by the
/// path as in pack()). Deterministic: the same seed reproduces the corpus
/// bit for bit.
CorpusManifest make_synthetic_corpus(const SyntheticSpec& spec, const std::string& destination,
                                     uint64_t seed);

/// One synthetic clip (27 keypoints) of the given class; exposed for
/// tests that need raw clips without packing.
PoseSequence synthetic_clip(const SyntheticSpec& spec, int64_t cls, int64_t frames,
                            RandomSource& rng);

}  // namespace slrkit
