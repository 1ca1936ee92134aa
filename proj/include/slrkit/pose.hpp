#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace slrkit {

/// A pose clip: F frames of K 2-D keypoints with per-slot validity flags.
/// Coordinates follow the image convention (x grows rightward, y grows
/// downward). Invalid keypoints are stored as (0,0) with valid=false,
/// never as NaN. Values are 32-bit; reductions elsewhere accumulate in
/// 64-bit.
struct PoseSequence {
    int64_t frames = 0;     // F
    int64_t keypoints = 0;  // K
    int64_t dims = 2;       // D
    std::vector<float> data;    // F*K*D, frame-major, per keypoint (x, y)
    std::vector<uint8_t> valid; // F*K
    float fps = 30.0f;

    float& at(int64_t f, int64_t k, int64_t d) { return data[(f * keypoints + k) * dims + d]; }
    float at(int64_t f, int64_t k, int64_t d) const { return data[(f * keypoints + k) * dims + d]; }
    bool is_valid(int64_t f, int64_t k) const { return valid[f * keypoints + k] != 0; }
    void set_valid(int64_t f, int64_t k, bool v) { valid[f * keypoints + k] = v ? 1 : 0; }

    static PoseSequence zeros(int64_t frames, int64_t keypoints, float fps = 30.0f);

    /// Checks the structural invariants (F>=1, K>=1, D=2, fps>0, sizes,
    /// finite coordinates on valid slots); throws InvalidArgument on
    /// violation.
    void check() const;
};

/// Selection of keypoint indices out of a full pose-estimator output,
/// with the two shoulder positions (indices into the *selected* set) used
/// by normalization.
struct KeypointSelection {
    std::vector<int64_t> indices;
    std::vector<std::string> names;
    int64_t shoulder_left = -1;
    int64_t shoulder_right = -1;

    int64_t size() const { return static_cast<int64_t>(indices.size()); }
    void check() const;
};

/// Skeleton connectivity over the selected keypoints. `edges` holds
/// unordered node pairs without self-loops; `adjacency_normalized` is the
/// symmetric normalized adjacency with self-loops folded in.
struct SkeletonGraph {
    int64_t node_count = 0;
    std::vector<std::pair<int64_t, int64_t>> edges;
    std::vector<double> adjacency_normalized;  // node_count x node_count, row-major

    double adj(int64_t i, int64_t j) const { return adjacency_normalized[i * node_count + j]; }
};

struct LabeledSample {
    PoseSequence pose;
    int64_t label = -1;
    std::string gloss;
};

struct ValidationVerdict {
    bool accepted = true;
    std::string reason;
    double missing_fraction = 0.0;
};

/// Keeps the keypoints listed in `sel`, in order. Frame count, fps and
/// per-keypoint validity are preserved. Throws on out-of-range indices,
/// naming the offending index.
PoseSequence select_keypoints(const PoseSequence& full, const KeypointSelection& sel);

/// Symmetric normalization with self-loops: entry (i,j) of the result is
/// (A+I)_ij / sqrt(d_i * d_j) where d is the degree after adding
/// self-loops. The result is written into graph.adjacency_normalized and
/// returned. Entrywise exactly symmetric.
const std::vector<double>& build_adjacency(SkeletonGraph& graph);

/// Rejects iff the fraction of (frame, keypoint) slots with valid=false
/// exceeds max_missing_fraction, or any valid coordinate is non-finite.
ValidationVerdict validate_sequence(const PoseSequence& pose, double max_missing_fraction);

/// The default 27-keypoint selection over the 75-keypoint holistic layout
/// (33 body landmarks followed by 21 left-hand and 21 right-hand points):
/// nose, eyes, ears, shoulders, elbows, wrists, plus 8 points per hand.
KeypointSelection default_keypoint_selection();

/// Anatomical default edges over default_keypoint_selection(), as local
/// indices into the selected set.
std::vector<std::pair<int64_t, int64_t>> default_skeleton_edges();

/// Builds the skeleton graph (normalized adjacency included) for a
/// selection and edge list.
SkeletonGraph make_skeleton_graph(int64_t node_count,
                                  std::vector<std::pair<int64_t, int64_t>> edges);

/// Keypoint map file (YAML, format_version 1) with fields `indices`,
/// `names`, `edges`, `shoulder_left`, `shoulder_right`.
struct KeypointMap {
    KeypointSelection selection;
    std::vector<std::pair<int64_t, int64_t>> edges;
    std::string id = "holistic27-v1";
};

KeypointMap load_keypoint_map(const std::string& path);
void save_keypoint_map(const KeypointMap& map, const std::string& path);
KeypointMap default_keypoint_map();

}  // namespace slrkit
