#include "slrkit/synth.hpp"

#include "slrkit/common.hpp"

#include <cmath>

namespace slrkit {

namespace {

// base layout of the default 27-point selection, normalized image-style
// coordinates (x right, y down), shoulders spanning one unit
constexpr double kBase[27][2] = {
    {0.00, -0.55},                                    // nose
    {-0.08, -0.62}, {0.08, -0.62},                    // eyes
    {-0.18, -0.58}, {0.18, -0.58},                    // ears
    {-0.50, 0.00},  {0.50, 0.00},                     // shoulders
    {-0.62, 0.45},  {0.62, 0.45},                     // elbows
    {-0.58, 0.85},  {0.62, 0.80},                     // wrists
    {-0.58, 0.95},  {-0.52, 0.99}, {-0.63, 1.00},     // left hand
    {-0.63, 1.06},  {-0.58, 1.01}, {-0.58, 1.08},
    {-0.53, 1.00},  {-0.53, 1.06},
    {0.62, 0.90},   {0.68, 0.94},  {0.57, 0.95},      // right hand
    {0.57, 1.01},   {0.62, 0.96},  {0.62, 1.03},
    {0.67, 0.95},   {0.67, 1.01},
};

// the signing side: right elbow, right wrist, right hand cluster
constexpr int64_t kMoving[] = {8, 10, 19, 20, 21, 22, 23, 24, 25, 26};

bool is_moving(int64_t k) {
    for (int64_t m : kMoving)
        if (m == k) return true;
    return false;
}

}  // namespace

void SyntheticSpec::check() const {
    if (classes < 2) throw InvalidArgument("synthetic: classes must be >= 2");
    if (frames < 2) throw InvalidArgument("synthetic: frames must be >= 2");
    if (unlabeled) {
        if (count < 1) throw InvalidArgument("synthetic: count must be >= 1");
        if (min_frames < 2 || min_frames > max_frames)
            throw InvalidArgument("synthetic: require 2 <= min_frames <= max_frames");
    } else {
        if (samples_per_class < 1)
            throw InvalidArgument("synthetic: samples_per_class must be >= 1");
        int64_t val = val_per_class > 0
                          ? val_per_class
                          : std::max<int64_t>(1, std::llround(0.3 * samples_per_class));
        if (val + test_per_class >= samples_per_class && samples_per_class > 1)
            throw InvalidArgument("synthetic: no training samples left after the splits");
    }
    if (noise < 0.0 || drift <= 0.0 || wiggle < 0.0 || affine_jitter < 0.0)
        throw InvalidArgument("synthetic: degenerate motion parameters");
}

PoseSequence synthetic_clip(const SyntheticSpec& spec, int64_t cls, int64_t frames,
                            RandomSource& rng) {
    PoseSequence p = PoseSequence::zeros(frames, 27, spec.fps);
    double angle = 2.0 * M_PI * static_cast<double>(cls) / static_cast<double>(spec.classes);
    double dx = std::cos(angle), dy = std::sin(angle);
    double freq = 1.0 + 0.5 * static_cast<double>(cls);
    double phase = rng.uniform_real(0.0, 2.0 * M_PI);

    // per-clip affine jitter
    double rot = rng.uniform_real(-spec.affine_jitter, spec.affine_jitter);
    double scl = rng.uniform_real(1.0 - spec.affine_jitter, 1.0 + spec.affine_jitter);
    double tx = rng.uniform_real(-0.05, 0.05), ty = rng.uniform_real(-0.05, 0.05);
    double cr = std::cos(rot), sr = std::sin(rot);

    for (int64_t f = 0; f < frames; ++f) {
        double progress = static_cast<double>(f) / static_cast<double>(frames);
        double swing = std::sin(2.0 * M_PI * freq * progress + phase);
        for (int64_t k = 0; k < 27; ++k) {
            double x = kBase[k][0], y = kBase[k][1];
            if (is_moving(k)) {
                double amp = (k == 8) ? 0.5 : 1.0;  // the elbow travels half as far
                x += amp * (spec.drift * progress * dx - spec.wiggle * swing * dy);
                y += amp * (spec.drift * progress * dy + spec.wiggle * swing * dx);
            }
            double rx = scl * (cr * x - sr * y) + tx;
            double ry = scl * (sr * x + cr * y) + ty;
            p.at(f, k, 0) = static_cast<float>(rx + spec.noise * rng.normal());
            p.at(f, k, 1) = static_cast<float>(ry + spec.noise * rng.normal());
        }
    }
    return p;
}

CorpusManifest make_synthetic_corpus(const SyntheticSpec& spec, const std::string& destination,
                                     uint64_t seed) {
    spec.check();
    RandomSource rng(seed);
    std::vector<std::pair<PoseSequence, SampleMeta>> samples;
    PackOptions opt;
    opt.fps = spec.fps;
    opt.keypoint_map_id = "holistic27-v1";

    if (spec.unlabeled) {
        opt.corpus_id = "synthetic-unlabeled";
        for (int64_t i = 0; i < spec.count; ++i) {
            int64_t cls = rng.uniform_int(0, spec.classes - 1);
            int64_t frames = rng.uniform_int(spec.min_frames, spec.max_frames);
            SampleMeta meta;
            meta.id = "u" + std::to_string(i);
            samples.emplace_back(synthetic_clip(spec, cls, frames, rng), meta);
        }
    } else {
        opt.corpus_id = "synthetic-labeled";
        int64_t val = spec.val_per_class > 0
                          ? spec.val_per_class
                          : std::max<int64_t>(1, std::llround(0.3 * spec.samples_per_class));
        int64_t test = spec.test_per_class;
        std::vector<std::string> train_ids, val_ids, test_ids;
        for (int64_t c = 0; c < spec.classes; ++c)
            opt.vocabulary.push_back("SIGN_" + std::to_string(c));
        for (int64_t c = 0; c < spec.classes; ++c) {
            for (int64_t i = 0; i < spec.samples_per_class; ++i) {
                SampleMeta meta;
                meta.id = "c" + std::to_string(c) + "_i" + std::to_string(i);
                meta.label = c;
                meta.gloss = opt.vocabulary[static_cast<size_t>(c)];
                samples.emplace_back(synthetic_clip(spec, c, spec.frames, rng), meta);
                if (i < spec.samples_per_class - val - test) train_ids.push_back(meta.id);
                else if (i < spec.samples_per_class - test) val_ids.push_back(meta.id);
                else test_ids.push_back(meta.id);
            }
        }
        opt.splits["train"] = std::move(train_ids);
        opt.splits["val"] = std::move(val_ids);
        if (test > 0) opt.splits["test"] = std::move(test_ids);
    }
    return pack(samples, destination, opt);
}

}  // namespace slrkit
