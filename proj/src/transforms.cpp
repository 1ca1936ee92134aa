#include "slrkit/transforms.hpp"

#include "slrkit/common.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace slrkit {

namespace {

// Applies an affine map (x,y) -> M*(x,y) to valid keypoints only.
PoseSequence apply_linear(const PoseSequence& pose, double m00, double m01, double m10, double m11) {
    PoseSequence out = pose;
    for (int64_t f = 0; f < pose.frames; ++f) {
        for (int64_t k = 0; k < pose.keypoints; ++k) {
            if (!pose.is_valid(f, k)) continue;
            double x = pose.at(f, k, 0);
            double y = pose.at(f, k, 1);
            out.at(f, k, 0) = static_cast<float>(m00 * x + m01 * y);
            out.at(f, k, 1) = static_cast<float>(m10 * x + m11 * y);
        }
    }
    return out;
}

double get_param(const TransformStep& step, const std::string& key) {
    auto it = step.params.find(key);
    if (it == step.params.end())
        throw InvalidArgument("transform '" + step.name + "': missing parameter '" + key + "'");
    return it->second;
}

double get_param_or(const TransformStep& step, const std::string& key, double fallback) {
    auto it = step.params.find(key);
    return it == step.params.end() ? fallback : it->second;
}

}  // namespace

PoseSequence dimension_normalize(const PoseSequence& pose, double width, double height) {
    if (!(width > 0.0) || !(height > 0.0))
        throw InvalidArgument("dimension_normalize: width and height must be > 0");
    PoseSequence out = pose;
    for (int64_t f = 0; f < pose.frames; ++f) {
        for (int64_t k = 0; k < pose.keypoints; ++k) {
            if (!pose.is_valid(f, k)) continue;
            out.at(f, k, 0) = static_cast<float>(pose.at(f, k, 0) / width);
            out.at(f, k, 1) = static_cast<float>(pose.at(f, k, 1) / height);
        }
    }
    return out;
}

PoseSequence center_and_scale_normalize(const PoseSequence& pose, const KeypointSelection& sel,
                                        double reference_span) {
    if (!(reference_span > 0.0))
        throw InvalidArgument("center_and_scale_normalize: reference_span must be > 0");
    int64_t l = sel.shoulder_left, r = sel.shoulder_right;
    if (l < 0 || r < 0 || l >= pose.keypoints || r >= pose.keypoints)
        throw InvalidArgument("center_and_scale_normalize: shoulder positions out of range");
    double span_sum = 0.0, cx_sum = 0.0, cy_sum = 0.0;
    int64_t count = 0;
    for (int64_t f = 0; f < pose.frames; ++f) {
        if (!pose.is_valid(f, l) || !pose.is_valid(f, r)) continue;
        double lx = pose.at(f, l, 0), ly = pose.at(f, l, 1);
        double rx = pose.at(f, r, 0), ry = pose.at(f, r, 1);
        span_sum += std::hypot(rx - lx, ry - ly);
        cx_sum += 0.5 * (lx + rx);
        cy_sum += 0.5 * (ly + ry);
        ++count;
    }
    if (count == 0)
        throw InvalidArgument("center_and_scale_normalize: shoulders never simultaneously valid");
    double span = span_sum / count;
    if (span <= 0.0)
        throw InvalidArgument("center_and_scale_normalize: degenerate pose with zero shoulder span");
    double cx = cx_sum / count, cy = cy_sum / count;
    double s = reference_span / span;
    PoseSequence out = pose;
    for (int64_t f = 0; f < pose.frames; ++f) {
        for (int64_t k = 0; k < pose.keypoints; ++k) {
            if (!pose.is_valid(f, k)) continue;
            out.at(f, k, 0) = static_cast<float>((pose.at(f, k, 0) - cx) * s);
            out.at(f, k, 1) = static_cast<float>((pose.at(f, k, 1) - cy) * s);
        }
    }
    return out;
}

PoseSequence interpolate_missing(const PoseSequence& pose) {
    PoseSequence out = pose;
    for (int64_t k = 0; k < pose.keypoints; ++k) {
        std::vector<int64_t> valid_frames;
        for (int64_t f = 0; f < pose.frames; ++f)
            if (pose.is_valid(f, k)) valid_frames.push_back(f);
        if (valid_frames.empty())
            throw InvalidArgument("interpolate_missing: keypoint track " + std::to_string(k) +
                                  " has no valid frame");
        for (int64_t f = 0; f < pose.frames; ++f) {
            if (pose.is_valid(f, k)) continue;
            auto it = std::lower_bound(valid_frames.begin(), valid_frames.end(), f);
            if (it == valid_frames.begin()) {
                int64_t src = valid_frames.front();  // leading gap: copy first valid
                out.at(f, k, 0) = pose.at(src, k, 0);
                out.at(f, k, 1) = pose.at(src, k, 1);
            } else if (it == valid_frames.end()) {
                int64_t src = valid_frames.back();  // trailing gap: copy last valid
                out.at(f, k, 0) = pose.at(src, k, 0);
                out.at(f, k, 1) = pose.at(src, k, 1);
            } else {
                int64_t tr = *it, tl = *(it - 1);
                double w = static_cast<double>(f - tl) / static_cast<double>(tr - tl);
                for (int64_t d = 0; d < pose.dims; ++d) {
                    double a = pose.at(tl, k, d), b = pose.at(tr, k, d);
                    out.at(f, k, d) = static_cast<float>(a + (b - a) * w);
                }
            }
            out.set_valid(f, k, true);
        }
    }
    return out;
}

PoseSequence shear(const PoseSequence& pose, RandomSource& rng, double s_max) {
    if (s_max < 0.0) throw InvalidArgument("shear: s_max must be >= 0");
    double sx = rng.uniform_real(-s_max, s_max);
    return apply_linear(pose, 1.0, sx, 0.0, 1.0);
}

PoseSequence rotate(const PoseSequence& pose, RandomSource& rng, double theta_max) {
    if (theta_max < 0.0) throw InvalidArgument("rotate: theta_max must be >= 0");
    double theta = rng.uniform_real(-theta_max, theta_max);
    double c = std::cos(theta), s = std::sin(theta);
    return apply_linear(pose, c, -s, s, c);
}

PoseSequence scale(const PoseSequence& pose, RandomSource& rng, double lo, double hi) {
    if (!(lo > 0.0) || lo > hi) throw InvalidArgument("scale: require 0 < lo <= hi");
    double factor = rng.uniform_real(lo, hi);
    return apply_linear(pose, factor, 0.0, 0.0, factor);
}

PoseSequence random_shift(const PoseSequence& pose, RandomSource& rng, double shift_max_fraction) {
    if (shift_max_fraction < 0.0 || shift_max_fraction >= 1.0)
        throw InvalidArgument("random_shift: fraction must be in [0, 1)");
    int64_t max_offset = static_cast<int64_t>(std::floor(pose.frames * shift_max_fraction));
    int64_t offset = rng.uniform_int(0, max_offset);
    if (offset == 0) return pose;
    PoseSequence out = pose;
    for (int64_t f = 0; f < pose.frames; ++f) {
        int64_t dst = (f + offset) % pose.frames;
        for (int64_t k = 0; k < pose.keypoints; ++k) {
            out.at(dst, k, 0) = pose.at(f, k, 0);
            out.at(dst, k, 1) = pose.at(f, k, 1);
            out.set_valid(dst, k, pose.is_valid(f, k));
        }
    }
    return out;
}

namespace {

// round-half-even, matching the pinned subsample index rule
int64_t round_even(double x) {
    double r = std::nearbyint(x);  // default FE_TONEAREST ties-to-even
    return static_cast<int64_t>(r);
}

PoseSequence take_frames(const PoseSequence& pose, const std::vector<int64_t>& idx) {
    PoseSequence out;
    out.frames = static_cast<int64_t>(idx.size());
    out.keypoints = pose.keypoints;
    out.dims = pose.dims;
    out.fps = pose.fps;
    out.data.resize(static_cast<size_t>(out.frames * out.keypoints * out.dims));
    out.valid.resize(static_cast<size_t>(out.frames * out.keypoints));
    for (int64_t i = 0; i < out.frames; ++i) {
        int64_t f = idx[static_cast<size_t>(i)];
        for (int64_t k = 0; k < pose.keypoints; ++k) {
            out.at(i, k, 0) = pose.at(f, k, 0);
            out.at(i, k, 1) = pose.at(f, k, 1);
            out.set_valid(i, k, pose.is_valid(f, k));
        }
    }
    return out;
}

}  // namespace

PoseSequence uniform_temporal_subsample(const PoseSequence& pose, int64_t n) {
    if (n < 1) throw InvalidArgument("uniform_temporal_subsample: n must be >= 1");
    if (pose.frames <= n) return pose;
    std::vector<int64_t> idx;
    idx.reserve(static_cast<size_t>(n));
    if (n == 1) {
        idx.push_back(0);
    } else {
        for (int64_t i = 0; i < n; ++i) {
            double pos = static_cast<double>(i) * static_cast<double>(pose.frames - 1) /
                         static_cast<double>(n - 1);
            idx.push_back(round_even(pos));
        }
    }
    return take_frames(pose, idx);
}

PoseSequence random_temporal_subsample(const PoseSequence& pose, RandomSource& rng, int64_t n) {
    if (n < 1) throw InvalidArgument("random_temporal_subsample: n must be >= 1");
    if (pose.frames <= n) return pose;
    int64_t start = rng.uniform_int(0, pose.frames - n);
    std::vector<int64_t> idx(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = start + i;
    return take_frames(pose, idx);
}

bool is_normalization_step(const std::string& name) {
    static const std::set<std::string> kNorm = {"dimension_normalize", "center_and_scale_normalize",
                                                "interpolate_missing", "uniform_temporal_subsample"};
    return kNorm.count(name) > 0;
}

void check_pipeline(const std::vector<TransformStep>& pipeline, bool eval_only) {
    static const std::set<std::string> kAll = {
        "dimension_normalize", "center_and_scale_normalize", "interpolate_missing",
        "shear", "rotate", "scale", "random_shift",
        "uniform_temporal_subsample", "random_temporal_subsample"};
    for (const auto& step : pipeline) {
        if (!kAll.count(step.name))
            throw InvalidArgument("unknown transform '" + step.name + "'");
        if (eval_only && !is_normalization_step(step.name))
            throw InvalidArgument("transform '" + step.name +
                                  "' is not deterministic normalization; not allowed in an "
                                  "evaluation pipeline");
    }
}

PoseSequence compose(const std::vector<TransformStep>& pipeline, const PoseSequence& pose,
                     const KeypointSelection& sel, RandomSource& rng) {
    if (pipeline.empty()) throw InvalidArgument("compose: empty pipeline");
    PoseSequence cur = pose;
    for (const auto& step : pipeline) {
        if (step.name == "dimension_normalize") {
            cur = dimension_normalize(cur, get_param(step, "width"), get_param(step, "height"));
        } else if (step.name == "center_and_scale_normalize") {
            cur = center_and_scale_normalize(cur, sel, get_param_or(step, "reference_span", 1.0));
        } else if (step.name == "interpolate_missing") {
            cur = interpolate_missing(cur);
        } else if (step.name == "shear") {
            cur = shear(cur, rng, get_param_or(step, "s_max", 0.15));
        } else if (step.name == "rotate") {
            cur = rotate(cur, rng, get_param_or(step, "theta_max", M_PI / 3.0));
        } else if (step.name == "scale") {
            cur = scale(cur, rng, get_param_or(step, "lo", 0.8), get_param_or(step, "hi", 1.2));
        } else if (step.name == "random_shift") {
            cur = random_shift(cur, rng, get_param_or(step, "max_fraction", 0.2));
        } else if (step.name == "uniform_temporal_subsample") {
            cur = uniform_temporal_subsample(cur, static_cast<int64_t>(get_param(step, "n")));
        } else if (step.name == "random_temporal_subsample") {
            cur = random_temporal_subsample(cur, rng, static_cast<int64_t>(get_param(step, "n")));
        } else {
            throw InvalidArgument("unknown transform '" + step.name + "'");
        }
    }
    return cur;
}

}  // namespace slrkit
