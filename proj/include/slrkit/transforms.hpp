#pragma once

#include "slrkit/pose.hpp"
#include "slrkit/random.hpp"

#include <map>
#include <string>
#include <vector>

namespace slrkit {

/// Coordinate division by frame dimensions: x' = x/width, y' = y/height.
PoseSequence dimension_normalize(const PoseSequence& pose, double width, double height);

/// Centers the clip at the mean shoulder midpoint and rescales so the mean
/// shoulder span equals reference_span. Means are taken over frames where
/// both shoulders are valid and accumulated in 64-bit.
PoseSequence center_and_scale_normalize(const PoseSequence& pose, const KeypointSelection& sel,
                                        double reference_span);

/// Per-keypoint linear interpolation of invalid frames between valid
/// neighbours; leading/trailing gaps copy the nearest valid frame. Output
/// validity flags are all true.
PoseSequence interpolate_missing(const PoseSequence& pose);

/// One s_x ~ U[-s_max, s_max] per clip; (x, y) -> (x + s_x*y, y).
PoseSequence shear(const PoseSequence& pose, RandomSource& rng, double s_max);

/// One angle ~ U[-theta_max, theta_max] per clip; rotation about the origin.
PoseSequence rotate(const PoseSequence& pose, RandomSource& rng, double theta_max);

/// One factor ~ U[lo, hi] per clip multiplies every valid coordinate.
PoseSequence scale(const PoseSequence& pose, RandomSource& rng, double lo, double hi);

/// Circularly rotates the frame axis by T_offset ~ U{0..floor(F*fraction)};
/// frame i moves to position (i + T_offset) mod F, carrying validity.
PoseSequence random_shift(const PoseSequence& pose, RandomSource& rng, double shift_max_fraction);

/// Keeps indices round(i*(F-1)/(n-1)) for i = 0..n-1 (round-half-even,
/// endpoints always kept); identity when F <= n.
PoseSequence uniform_temporal_subsample(const PoseSequence& pose, int64_t n);

/// Contiguous window of length n at start ~ U{0..F-n}; identity when F <= n.
PoseSequence random_temporal_subsample(const PoseSequence& pose, RandomSource& rng, int64_t n);

/// One pipeline entry: an operation name from the set above plus its
/// parameters, as declared in the run config.
struct TransformStep {
    std::string name;
    std::map<std::string, double> params;
};

/// True for deterministic normalization-class steps permitted in
/// evaluation pipelines (no random draws).
bool is_normalization_step(const std::string& name);

/// Applies the steps in order. Random steps draw from `rng` in sequence,
/// so a fixed seed gives bitwise-identical output.
PoseSequence compose(const std::vector<TransformStep>& pipeline, const PoseSequence& pose,
                     const KeypointSelection& sel, RandomSource& rng);

/// Validates step names and parameters without applying anything.
void check_pipeline(const std::vector<TransformStep>& pipeline, bool eval_only);

}  // namespace slrkit
