#pragma once

#include "slrkit/pose.hpp"
#include "slrkit/random.hpp"

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace slrkit {

struct SampleRecord {
    std::string id;
    int64_t frame_count = 0;
    std::optional<int64_t> label;
    std::string gloss;
    std::string signer;
    std::string locator;  // group name (hdf5) or file path (fallback)
};

struct CorpusManifest {
    std::string corpus_id;
    std::vector<std::string> vocabulary;  // empty for unlabeled corpora
    std::vector<SampleRecord> sample_index;
    std::map<std::string, std::vector<std::string>> splits;
    float fps = 30.0f;
    std::string keypoint_map_id;
    bool labeled() const { return !vocabulary.empty(); }
    void check() const;
};

struct SubsetSpec {
    int64_t samples_per_class = 1;
    uint64_t seed = 0;
};

/// Metadata accompanying one sample handed to pack().
struct SampleMeta {
    std::string id;
    std::optional<int64_t> label;
    std::string gloss;
    std::string signer;
};

/// A packed, randomly addressable pose corpus. Two container layouts sit
/// behind this interface: an HDF5 file (one group per sample, datasets
/// `pose` f32 F*K*D and `valid` u8 F*K, attributes fps/label/gloss/signer)
/// when the destination ends in .h5/.hdf5, and a fallback directory of one
/// binary file per sample. The manifest is a JSON document next to the
/// container either way. Readers may be shared across threads for
/// distinct samples; one writer, never concurrent with readers.
class Corpus {
  public:
    virtual ~Corpus() = default;

    const CorpusManifest& manifest() const { return manifest_; }
    int64_t size() const { return static_cast<int64_t>(manifest_.sample_index.size()); }

    LabeledSample get(const std::string& id) const;
    LabeledSample get(int64_t index) const;
    const SampleRecord& record(const std::string& id) const;

    const std::vector<std::string>& split(const std::string& name) const;

    static std::unique_ptr<Corpus> open(const std::string& path);

  protected:
    virtual PoseSequence read_pose(const SampleRecord& rec) const = 0;
    CorpusManifest manifest_;
    std::map<std::string, size_t> index_by_id_;
    void build_index();
};

struct PackOptions {
    std::string corpus_id;
    float fps = 30.0f;
    std::string keypoint_map_id;
    std::vector<std::string> vocabulary;  // empty -> unlabeled corpus
    std::map<std::string, std::vector<std::string>> splits;
    double max_missing_fraction = 1.0;  // validate_sequence threshold at pack time
};

/// Writes the container and its manifest. All samples must share K and D,
/// pass validate_sequence at the given threshold, and the stream must be
/// non-empty. On failure any partial container is removed.
CorpusManifest pack(const std::vector<std::pair<PoseSequence, SampleMeta>>& samples,
                    const std::string& destination, const PackOptions& options);

/// For each class keeps min(k, class size) sample ids drawn uniformly
/// without replacement under the spec seed. Labeled corpora only.
std::vector<std::string> subset_by_samples_per_class(const Corpus& corpus, const SubsetSpec& spec,
                                                     const std::string& from_split = "");

/// Uniformly picks an eligible sample (frame_count >= min_len), a length
/// L ~ U[min_len, min(max_len, F)] and a uniform start, and returns that
/// contiguous clip.
PoseSequence sample_pretraining_clip(const Corpus& corpus, RandomSource& rng, int64_t min_len,
                                     int64_t max_len);

/// Reads the ingestion JSON-lines format: one object per frame,
/// {"t": int, "kps": [[x, y], ...], "valid": [bool, ...]} ("valid" may be
/// omitted, defaulting to all true). Frames are ordered by "t".
PoseSequence read_jsonl_pose(const std::string& path, float fps);

CorpusManifest load_manifest(const std::string& path);
void save_manifest(const CorpusManifest& manifest, const std::string& path);

/// Path of the manifest document sitting next to a container.
std::string manifest_path_for(const std::string& container_path);

}  // namespace slrkit
