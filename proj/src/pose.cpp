#include "slrkit/pose.hpp"

#include "slrkit/common.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace slrkit {

PoseSequence PoseSequence::zeros(int64_t frames, int64_t keypoints, float fps) {
    PoseSequence p;
    p.frames = frames;
    p.keypoints = keypoints;
    p.dims = 2;
    p.data.assign(static_cast<size_t>(frames * keypoints * 2), 0.0f);
    p.valid.assign(static_cast<size_t>(frames * keypoints), 1);
    p.fps = fps;
    return p;
}

void PoseSequence::check() const {
    if (frames < 1) throw InvalidArgument("PoseSequence: frame count must be >= 1");
    if (keypoints < 1) throw InvalidArgument("PoseSequence: keypoint count must be >= 1");
    if (dims != 2) throw InvalidArgument("PoseSequence: D must be 2");
    if (!(fps > 0.0f)) throw InvalidArgument("PoseSequence: fps must be > 0");
    if (data.size() != static_cast<size_t>(frames * keypoints * dims))
        throw InvalidArgument("PoseSequence: data size mismatch");
    if (valid.size() != static_cast<size_t>(frames * keypoints))
        throw InvalidArgument("PoseSequence: valid size mismatch");
    for (int64_t f = 0; f < frames; ++f)
        for (int64_t k = 0; k < keypoints; ++k)
            if (is_valid(f, k))
                for (int64_t d = 0; d < dims; ++d)
                    if (!std::isfinite(at(f, k, d)))
                        throw InvalidArgument("PoseSequence: non-finite coordinate at frame " +
                                              std::to_string(f) + ", keypoint " + std::to_string(k));
}

void KeypointSelection::check() const {
    if (indices.empty()) throw InvalidArgument("KeypointSelection: empty index list");
    std::set<int64_t> seen;
    for (int64_t i : indices) {
        if (i < 0) throw InvalidArgument("KeypointSelection: negative index " + std::to_string(i));
        if (!seen.insert(i).second)
            throw InvalidArgument("KeypointSelection: duplicate index " + std::to_string(i));
    }
    if (!names.empty() && names.size() != indices.size())
        throw InvalidArgument("KeypointSelection: names length does not match indices");
    int64_t n = size();
    if (shoulder_left < 0 || shoulder_left >= n || shoulder_right < 0 || shoulder_right >= n)
        throw InvalidArgument("KeypointSelection: shoulder positions out of range");
    if (shoulder_left == shoulder_right)
        throw InvalidArgument("KeypointSelection: shoulder positions must be distinct");
}

PoseSequence select_keypoints(const PoseSequence& full, const KeypointSelection& sel) {
    sel.check();
    for (int64_t i : sel.indices)
        if (i >= full.keypoints)
            throw InvalidArgument("select_keypoints: index " + std::to_string(i) +
                                  " out of range for source with " +
                                  std::to_string(full.keypoints) + " keypoints");
    PoseSequence out;
    out.frames = full.frames;
    out.keypoints = sel.size();
    out.dims = full.dims;
    out.fps = full.fps;
    out.data.resize(static_cast<size_t>(out.frames * out.keypoints * out.dims));
    out.valid.resize(static_cast<size_t>(out.frames * out.keypoints));
    for (int64_t f = 0; f < full.frames; ++f) {
        for (int64_t k = 0; k < out.keypoints; ++k) {
            int64_t src = sel.indices[static_cast<size_t>(k)];
            out.at(f, k, 0) = full.at(f, src, 0);
            out.at(f, k, 1) = full.at(f, src, 1);
            out.set_valid(f, k, full.is_valid(f, src));
        }
    }
    return out;
}

const std::vector<double>& build_adjacency(SkeletonGraph& graph) {
    int64_t n = graph.node_count;
    if (n < 1) throw InvalidArgument("build_adjacency: node_count must be >= 1");
    std::vector<double> a(static_cast<size_t>(n * n), 0.0);
    std::set<std::pair<int64_t, int64_t>> seen;
    for (auto [u, v] : graph.edges) {
        if (u < 0 || u >= n || v < 0 || v >= n)
            throw InvalidArgument("build_adjacency: edge (" + std::to_string(u) + "," +
                                  std::to_string(v) + ") references an invalid node");
        if (u == v)
            throw InvalidArgument("build_adjacency: self-loop on node " + std::to_string(u));
        auto key = std::minmax(u, v);
        if (!seen.insert(key).second)
            throw InvalidArgument("build_adjacency: duplicate edge (" + std::to_string(u) + "," +
                                  std::to_string(v) + ")");
        a[u * n + v] = 1.0;
        a[v * n + u] = 1.0;
    }
    for (int64_t i = 0; i < n; ++i) a[i * n + i] = 1.0;  // self-loops

    std::vector<double> inv_sqrt_deg(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        double deg = 0.0;
        for (int64_t j = 0; j < n; ++j) deg += a[i * n + j];
        inv_sqrt_deg[i] = 1.0 / std::sqrt(deg);
    }
    // Entrywise a_ij * (s_i * s_j) keeps the result exactly symmetric.
    graph.adjacency_normalized.assign(static_cast<size_t>(n * n), 0.0);
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < n; ++j)
            graph.adjacency_normalized[i * n + j] = a[i * n + j] * (inv_sqrt_deg[i] * inv_sqrt_deg[j]);
    return graph.adjacency_normalized;
}

ValidationVerdict validate_sequence(const PoseSequence& pose, double max_missing_fraction) {
    if (max_missing_fraction < 0.0 || max_missing_fraction > 1.0)
        throw InvalidArgument("validate_sequence: threshold must be in [0, 1]");
    ValidationVerdict verdict;
    int64_t total = pose.frames * pose.keypoints;
    int64_t missing = 0;
    for (int64_t f = 0; f < pose.frames; ++f) {
        for (int64_t k = 0; k < pose.keypoints; ++k) {
            if (!pose.is_valid(f, k)) {
                ++missing;
                continue;
            }
            for (int64_t d = 0; d < pose.dims; ++d) {
                if (!std::isfinite(pose.at(f, k, d))) {
                    verdict.accepted = false;
                    verdict.reason = "non-finite coordinate at frame " + std::to_string(f) +
                                     ", keypoint " + std::to_string(k);
                }
            }
        }
    }
    verdict.missing_fraction = total > 0 ? static_cast<double>(missing) / static_cast<double>(total) : 0.0;
    if (!verdict.accepted) return verdict;
    if (verdict.missing_fraction > max_missing_fraction) {
        verdict.accepted = false;
        std::ostringstream os;
        os << "missing fraction " << verdict.missing_fraction << " exceeds threshold "
           << max_missing_fraction;
        verdict.reason = os.str();
    }
    return verdict;
}

KeypointSelection default_keypoint_selection() {
    KeypointSelection sel;
    // Body landmarks (holistic layout: 33 body, then 21 per hand).
    sel.indices = {0,  2,  5,  7,  8,  11, 12, 13, 14, 15, 16,
                   33, 37, 38, 41, 42, 45, 50, 53,
                   54, 58, 59, 62, 63, 66, 71, 74};
    sel.names = {"nose", "left_eye", "right_eye", "left_ear", "right_ear",
                 "left_shoulder", "right_shoulder", "left_elbow", "right_elbow",
                 "left_wrist", "right_wrist",
                 "left_hand_wrist", "left_thumb_tip", "left_index_base", "left_index_tip",
                 "left_middle_base", "left_middle_tip", "left_pinky_base", "left_pinky_tip",
                 "right_hand_wrist", "right_thumb_tip", "right_index_base", "right_index_tip",
                 "right_middle_base", "right_middle_tip", "right_pinky_base", "right_pinky_tip"};
    sel.shoulder_left = 5;
    sel.shoulder_right = 6;
    return sel;
}

std::vector<std::pair<int64_t, int64_t>> default_skeleton_edges() {
    return {
        {0, 1}, {0, 2}, {1, 3}, {2, 4},          // face chain to nose
        {5, 6},                                  // shoulders
        {5, 7}, {7, 9}, {6, 8}, {8, 10},         // arms
        {9, 11}, {10, 19},                       // body wrist to hand wrist
        {11, 12}, {11, 13}, {13, 14}, {11, 15}, {15, 16}, {11, 17}, {17, 18},  // left hand
        {19, 20}, {19, 21}, {21, 22}, {19, 23}, {23, 24}, {19, 25}, {25, 26},  // right hand
    };
}

SkeletonGraph make_skeleton_graph(int64_t node_count,
                                  std::vector<std::pair<int64_t, int64_t>> edges) {
    SkeletonGraph g;
    g.node_count = node_count;
    g.edges = std::move(edges);
    build_adjacency(g);
    return g;
}

KeypointMap default_keypoint_map() {
    KeypointMap map;
    map.selection = default_keypoint_selection();
    map.edges = default_skeleton_edges();
    return map;
}

KeypointMap load_keypoint_map(const std::string& path) {
    YAML::Node doc;
    try {
        doc = YAML::LoadFile(path);
    } catch (const std::exception& e) {
        throw IoError("keypoint map " + path + ": " + e.what());
    }
    if (!doc["format_version"] || doc["format_version"].as<int>() != 1)
        throw InvalidArgument("keypoint map " + path + ": missing or unsupported format_version");
    KeypointMap map;
    if (doc["id"]) map.id = doc["id"].as<std::string>();
    for (const auto& n : doc["indices"]) map.selection.indices.push_back(n.as<int64_t>());
    if (doc["names"])
        for (const auto& n : doc["names"]) map.selection.names.push_back(n.as<std::string>());
    map.selection.shoulder_left = doc["shoulder_left"].as<int64_t>();
    map.selection.shoulder_right = doc["shoulder_right"].as<int64_t>();
    for (const auto& e : doc["edges"]) {
        if (!e.IsSequence() || e.size() != 2)
            throw InvalidArgument("keypoint map " + path + ": edges must be [u, v] pairs");
        map.edges.emplace_back(e[0].as<int64_t>(), e[1].as<int64_t>());
    }
    map.selection.check();
    return map;
}

void save_keypoint_map(const KeypointMap& map, const std::string& path) {
    YAML::Emitter out;
    out << YAML::BeginMap;
    out << YAML::Key << "format_version" << YAML::Value << 1;
    out << YAML::Key << "id" << YAML::Value << map.id;
    out << YAML::Key << "indices" << YAML::Value << YAML::Flow << YAML::BeginSeq;
    for (int64_t i : map.selection.indices) out << i;
    out << YAML::EndSeq;
    out << YAML::Key << "names" << YAML::Value << YAML::Flow << YAML::BeginSeq;
    for (const auto& n : map.selection.names) out << n;
    out << YAML::EndSeq;
    out << YAML::Key << "shoulder_left" << YAML::Value << map.selection.shoulder_left;
    out << YAML::Key << "shoulder_right" << YAML::Value << map.selection.shoulder_right;
    out << YAML::Key << "edges" << YAML::Value << YAML::BeginSeq;
    for (auto [u, v] : map.edges) out << YAML::Flow << YAML::BeginSeq << u << v << YAML::EndSeq;
    out << YAML::EndSeq;
    out << YAML::EndMap;
    std::ofstream f(path);
    if (!f) throw IoError("cannot write keypoint map " + path);
    f << out.c_str() << "\n";
}

}  // namespace slrkit
