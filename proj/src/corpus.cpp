#include "slrkit/corpus.hpp"

#include "slrkit/common.hpp"

#include <hdf5.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace slrkit {

namespace {

bool is_hdf5_path(const std::string& path) {
    return path.ends_with(".h5") || path.ends_with(".hdf5");
}

constexpr uint32_t kFallbackMagic = 0x50524c53;  // "SLRP"

void write_fallback_sample(const std::string& path, const PoseSequence& pose) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write sample file " + path);
    uint32_t magic = kFallbackMagic, version = 1;
    uint64_t F = pose.frames, K = pose.keypoints, D = pose.dims;
    float fps = pose.fps;
    f.write(reinterpret_cast<const char*>(&magic), 4);
    f.write(reinterpret_cast<const char*>(&version), 4);
    f.write(reinterpret_cast<const char*>(&F), 8);
    f.write(reinterpret_cast<const char*>(&K), 8);
    f.write(reinterpret_cast<const char*>(&D), 8);
    f.write(reinterpret_cast<const char*>(&fps), 4);
    f.write(reinterpret_cast<const char*>(pose.data.data()),
            static_cast<std::streamsize>(pose.data.size() * sizeof(float)));
    f.write(reinterpret_cast<const char*>(pose.valid.data()),
            static_cast<std::streamsize>(pose.valid.size()));
    if (!f) throw IoError("short write on sample file " + path);
}

PoseSequence read_fallback_sample(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open sample file " + path);
    uint32_t magic = 0, version = 0;
    uint64_t F = 0, K = 0, D = 0;
    float fps = 0.0f;
    f.read(reinterpret_cast<char*>(&magic), 4);
    f.read(reinterpret_cast<char*>(&version), 4);
    if (magic != kFallbackMagic || version != 1)
        throw IoError("bad sample file header in " + path);
    f.read(reinterpret_cast<char*>(&F), 8);
    f.read(reinterpret_cast<char*>(&K), 8);
    f.read(reinterpret_cast<char*>(&D), 8);
    f.read(reinterpret_cast<char*>(&fps), 4);
    PoseSequence pose;
    pose.frames = static_cast<int64_t>(F);
    pose.keypoints = static_cast<int64_t>(K);
    pose.dims = static_cast<int64_t>(D);
    pose.fps = fps;
    pose.data.resize(F * K * D);
    pose.valid.resize(F * K);
    f.read(reinterpret_cast<char*>(pose.data.data()),
           static_cast<std::streamsize>(pose.data.size() * sizeof(float)));
    f.read(reinterpret_cast<char*>(pose.valid.data()),
           static_cast<std::streamsize>(pose.valid.size()));
    if (!f) throw IoError("truncated sample file " + path);
    return pose;
}

// Minimal RAII for hid_t handles.
struct H5Handle {
    hid_t id = -1;
    herr_t (*closer)(hid_t) = nullptr;
    H5Handle(hid_t id_, herr_t (*closer_)(hid_t)) : id(id_), closer(closer_) {}
    ~H5Handle() {
        if (id >= 0 && closer) closer(id);
    }
    H5Handle(const H5Handle&) = delete;
    H5Handle& operator=(const H5Handle&) = delete;
    operator hid_t() const { return id; }
};

void h5_write_string_attr(hid_t loc, const char* name, const std::string& value) {
    H5Handle space(H5Screate(H5S_SCALAR), H5Sclose);
    H5Handle type(H5Tcopy(H5T_C_S1), H5Tclose);
    H5Tset_size(type, std::max<size_t>(1, value.size()));
    H5Handle attr(H5Acreate2(loc, name, type, space, H5P_DEFAULT, H5P_DEFAULT), H5Aclose);
    if (attr < 0) throw IoError(std::string("failed to create attribute ") + name);
    H5Awrite(attr, type, value.empty() ? "" : value.data());
}

void h5_write_scalar_attr(hid_t loc, const char* name, hid_t type, const void* value) {
    H5Handle space(H5Screate(H5S_SCALAR), H5Sclose);
    H5Handle attr(H5Acreate2(loc, name, type, space, H5P_DEFAULT, H5P_DEFAULT), H5Aclose);
    if (attr < 0) throw IoError(std::string("failed to create attribute ") + name);
    H5Awrite(attr, type, value);
}

void write_hdf5_container(const std::string& path,
                          const std::vector<std::pair<PoseSequence, SampleMeta>>& samples,
                          const PackOptions& options) {
    H5Handle file(H5Fcreate(path.c_str(), H5F_ACC_TRUNC, H5P_DEFAULT, H5P_DEFAULT), H5Fclose);
    if (file < 0) throw IoError("cannot create HDF5 container " + path);
    h5_write_string_attr(file, "corpus_id", options.corpus_id);
    h5_write_string_attr(file, "keypoint_map_id", options.keypoint_map_id);
    float fps = options.fps;
    h5_write_scalar_attr(file, "fps", H5T_NATIVE_FLOAT, &fps);
    int version = 1;
    h5_write_scalar_attr(file, "format_version", H5T_NATIVE_INT, &version);

    for (const auto& [pose, meta] : samples) {
        H5Handle group(H5Gcreate2(file, meta.id.c_str(), H5P_DEFAULT, H5P_DEFAULT, H5P_DEFAULT),
                       H5Gclose);
        if (group < 0) throw IoError("cannot create group " + meta.id);
        hsize_t pose_dims[3] = {static_cast<hsize_t>(pose.frames),
                                static_cast<hsize_t>(pose.keypoints),
                                static_cast<hsize_t>(pose.dims)};
        {
            H5Handle space(H5Screate_simple(3, pose_dims, nullptr), H5Sclose);
            H5Handle dset(H5Dcreate2(group, "pose", H5T_IEEE_F32LE, space, H5P_DEFAULT, H5P_DEFAULT,
                                     H5P_DEFAULT),
                          H5Dclose);
            if (dset < 0) throw IoError("cannot create pose dataset for " + meta.id);
            H5Dwrite(dset, H5T_NATIVE_FLOAT, H5S_ALL, H5S_ALL, H5P_DEFAULT, pose.data.data());
        }
        hsize_t valid_dims[2] = {static_cast<hsize_t>(pose.frames),
                                 static_cast<hsize_t>(pose.keypoints)};
        {
            H5Handle space(H5Screate_simple(2, valid_dims, nullptr), H5Sclose);
            H5Handle dset(H5Dcreate2(group, "valid", H5T_STD_U8LE, space, H5P_DEFAULT, H5P_DEFAULT,
                                     H5P_DEFAULT),
                          H5Dclose);
            if (dset < 0) throw IoError("cannot create valid dataset for " + meta.id);
            H5Dwrite(dset, H5T_NATIVE_UCHAR, H5S_ALL, H5S_ALL, H5P_DEFAULT, pose.valid.data());
        }
        float sample_fps = pose.fps;
        h5_write_scalar_attr(group, "fps", H5T_NATIVE_FLOAT, &sample_fps);
        if (meta.label.has_value()) {
            int64_t label = *meta.label;
            h5_write_scalar_attr(group, "label", H5T_NATIVE_INT64, &label);
        }
        h5_write_string_attr(group, "gloss", meta.gloss);
        h5_write_string_attr(group, "signer", meta.signer);
    }
}

PoseSequence read_hdf5_sample(const std::string& container, const std::string& group_name) {
    H5Handle file(H5Fopen(container.c_str(), H5F_ACC_RDONLY, H5P_DEFAULT), H5Fclose);
    if (file < 0) throw IoError("cannot open HDF5 container " + container);
    H5Handle group(H5Gopen2(file, group_name.c_str(), H5P_DEFAULT), H5Gclose);
    if (group < 0) throw NotFound("sample group '" + group_name + "' not in " + container);

    PoseSequence pose;
    {
        H5Handle dset(H5Dopen2(group, "pose", H5P_DEFAULT), H5Dclose);
        if (dset < 0) throw IoError("missing pose dataset in group " + group_name);
        H5Handle space(H5Dget_space(dset), H5Sclose);
        hsize_t dims[3] = {0, 0, 0};
        if (H5Sget_simple_extent_ndims(space) != 3)
            throw IoError("pose dataset in " + group_name + " is not 3-D");
        H5Sget_simple_extent_dims(space, dims, nullptr);
        pose.frames = static_cast<int64_t>(dims[0]);
        pose.keypoints = static_cast<int64_t>(dims[1]);
        pose.dims = static_cast<int64_t>(dims[2]);
        pose.data.resize(dims[0] * dims[1] * dims[2]);
        H5Dread(dset, H5T_NATIVE_FLOAT, H5S_ALL, H5S_ALL, H5P_DEFAULT, pose.data.data());
    }
    {
        H5Handle dset(H5Dopen2(group, "valid", H5P_DEFAULT), H5Dclose);
        if (dset < 0) throw IoError("missing valid dataset in group " + group_name);
        pose.valid.resize(static_cast<size_t>(pose.frames * pose.keypoints));
        H5Dread(dset, H5T_NATIVE_UCHAR, H5S_ALL, H5S_ALL, H5P_DEFAULT, pose.valid.data());
    }
    if (H5Aexists(group, "fps") > 0) {
        H5Handle attr(H5Aopen(group, "fps", H5P_DEFAULT), H5Aclose);
        H5Aread(attr, H5T_NATIVE_FLOAT, &pose.fps);
    }
    return pose;
}

class Hdf5Corpus : public Corpus {
  public:
    explicit Hdf5Corpus(std::string path) : path_(std::move(path)) {}
    std::string path_;

  protected:
    PoseSequence read_pose(const SampleRecord& rec) const override {
        return read_hdf5_sample(path_, rec.locator);
    }
};

class DirCorpus : public Corpus {
  public:
    explicit DirCorpus(std::string dir) : dir_(std::move(dir)) {}
    std::string dir_;

  protected:
    PoseSequence read_pose(const SampleRecord& rec) const override {
        return read_fallback_sample((fs::path(dir_) / rec.locator).string());
    }
};

}  // namespace

void CorpusManifest::check() const {
    std::set<std::string> ids;
    for (const auto& rec : sample_index) {
        if (!ids.insert(rec.id).second)
            throw InvalidArgument("manifest: duplicate sample id '" + rec.id + "'");
        if (rec.frame_count < 1)
            throw InvalidArgument("manifest: sample '" + rec.id + "' has frame_count < 1");
        if (labeled() != rec.label.has_value())
            throw InvalidArgument("manifest: sample '" + rec.id +
                                  "' label presence does not match corpus vocabulary");
        if (rec.label.has_value() &&
            (*rec.label < 0 || *rec.label >= static_cast<int64_t>(vocabulary.size())))
            throw InvalidArgument("manifest: sample '" + rec.id + "' label out of range");
    }
    std::set<std::string> glosses(vocabulary.begin(), vocabulary.end());
    if (glosses.size() != vocabulary.size())
        throw InvalidArgument("manifest: duplicate gloss in vocabulary");
    for (const auto& [name, members] : splits)
        for (const auto& id : members)
            if (!ids.count(id))
                throw InvalidArgument("manifest: split '" + name + "' references unknown id '" +
                                      id + "'");
}

void Corpus::build_index() {
    manifest_.check();
    index_by_id_.clear();
    for (size_t i = 0; i < manifest_.sample_index.size(); ++i)
        index_by_id_[manifest_.sample_index[i].id] = i;
}

const SampleRecord& Corpus::record(const std::string& id) const {
    auto it = index_by_id_.find(id);
    if (it == index_by_id_.end()) throw NotFound("unknown sample id '" + id + "'");
    return manifest_.sample_index[it->second];
}

LabeledSample Corpus::get(const std::string& id) const {
    const SampleRecord& rec = record(id);
    LabeledSample sample;
    sample.pose = read_pose(rec);
    sample.label = rec.label.value_or(-1);
    sample.gloss = rec.gloss;
    return sample;
}

LabeledSample Corpus::get(int64_t index) const {
    if (index < 0 || index >= size())
        throw NotFound("sample index " + std::to_string(index) + " out of range");
    return get(manifest_.sample_index[static_cast<size_t>(index)].id);
}

const std::vector<std::string>& Corpus::split(const std::string& name) const {
    auto it = manifest_.splits.find(name);
    if (it == manifest_.splits.end()) throw NotFound("unknown split '" + name + "'");
    return it->second;
}

std::string manifest_path_for(const std::string& container_path) {
    if (is_hdf5_path(container_path)) {
        auto p = fs::path(container_path);
        return (p.parent_path() / (p.stem().string() + ".manifest.json")).string();
    }
    return (fs::path(container_path) / "manifest.json").string();
}

CorpusManifest load_manifest(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open manifest " + path);
    json doc;
    try {
        f >> doc;
    } catch (const std::exception& e) {
        throw IoError("manifest " + path + ": " + e.what());
    }
    CorpusManifest m;
    m.corpus_id = doc.value("corpus_id", "");
    m.fps = doc.value("fps", 30.0f);
    m.keypoint_map_id = doc.value("keypoint_map_id", "");
    for (const auto& g : doc.value("vocabulary", json::array())) m.vocabulary.push_back(g);
    for (const auto& s : doc.value("samples", json::array())) {
        SampleRecord rec;
        rec.id = s.at("id");
        rec.frame_count = s.at("frames");
        if (s.contains("label") && !s["label"].is_null()) rec.label = s["label"].get<int64_t>();
        rec.gloss = s.value("gloss", "");
        rec.signer = s.value("signer", "");
        rec.locator = s.value("locator", rec.id);
        m.sample_index.push_back(std::move(rec));
    }
    if (doc.contains("splits"))
        for (auto it = doc["splits"].begin(); it != doc["splits"].end(); ++it)
            m.splits[it.key()] = it.value().get<std::vector<std::string>>();
    m.check();
    return m;
}

void save_manifest(const CorpusManifest& manifest, const std::string& path) {
    json doc;
    doc["format_version"] = 1;
    doc["corpus_id"] = manifest.corpus_id;
    doc["fps"] = manifest.fps;
    doc["keypoint_map_id"] = manifest.keypoint_map_id;
    doc["vocabulary"] = manifest.vocabulary;
    json samples = json::array();
    for (const auto& rec : manifest.sample_index) {
        json s;
        s["id"] = rec.id;
        s["frames"] = rec.frame_count;
        if (rec.label.has_value()) s["label"] = *rec.label;
        if (!rec.gloss.empty()) s["gloss"] = rec.gloss;
        if (!rec.signer.empty()) s["signer"] = rec.signer;
        s["locator"] = rec.locator;
        samples.push_back(std::move(s));
    }
    doc["samples"] = std::move(samples);
    json splits = json::object();
    for (const auto& [name, members] : manifest.splits) splits[name] = members;
    doc["splits"] = std::move(splits);
    std::ofstream f(path);
    if (!f) throw IoError("cannot write manifest " + path);
    f << doc.dump(2) << "\n";
}

std::unique_ptr<Corpus> Corpus::open(const std::string& path) {
    auto manifest = load_manifest(manifest_path_for(path));
    std::unique_ptr<Corpus> corpus;
    if (is_hdf5_path(path)) {
        if (!fs::exists(path)) throw IoError("container " + path + " does not exist");
        corpus = std::make_unique<Hdf5Corpus>(path);
    } else {
        if (!fs::is_directory(path)) throw IoError("container directory " + path + " does not exist");
        corpus = std::make_unique<DirCorpus>(path);
    }
    corpus->manifest_ = std::move(manifest);
    corpus->build_index();
    return corpus;
}

CorpusManifest pack(const std::vector<std::pair<PoseSequence, SampleMeta>>& samples,
                    const std::string& destination, const PackOptions& options) {
    if (samples.empty()) throw InvalidArgument("pack: empty sample stream");
    int64_t K = samples.front().first.keypoints;
    int64_t D = samples.front().first.dims;
    std::set<std::string> ids;
    for (const auto& [pose, meta] : samples) {
        pose.check();
        if (pose.keypoints != K || pose.dims != D)
            throw InvalidArgument("pack: inconsistent K/D across samples (sample '" + meta.id +
                                  "' has K=" + std::to_string(pose.keypoints) +
                                  ", expected K=" + std::to_string(K) + ")");
        auto verdict = validate_sequence(pose, options.max_missing_fraction);
        if (!verdict.accepted)
            throw InvalidArgument("pack: sample '" + meta.id + "' rejected: " + verdict.reason);
        if (!ids.insert(meta.id).second)
            throw InvalidArgument("pack: duplicate sample id '" + meta.id + "'");
        if (!options.vocabulary.empty()) {
            if (!meta.label.has_value())
                throw InvalidArgument("pack: labeled corpus but sample '" + meta.id +
                                      "' has no label");
            if (*meta.label < 0 || *meta.label >= static_cast<int64_t>(options.vocabulary.size()))
                throw InvalidArgument("pack: sample '" + meta.id + "' label out of range");
        } else if (meta.label.has_value()) {
            throw InvalidArgument("pack: unlabeled corpus but sample '" + meta.id +
                                  "' carries a label");
        }
    }

    CorpusManifest manifest;
    manifest.corpus_id = options.corpus_id;
    manifest.fps = options.fps;
    manifest.keypoint_map_id = options.keypoint_map_id;
    manifest.vocabulary = options.vocabulary;
    manifest.splits = options.splits;
    for (const auto& [pose, meta] : samples) {
        SampleRecord rec;
        rec.id = meta.id;
        rec.frame_count = pose.frames;
        rec.label = meta.label;
        rec.gloss = meta.gloss;
        rec.signer = meta.signer;
        rec.locator = is_hdf5_path(destination) ? meta.id : ("samples/" + meta.id + ".bin");
        manifest.sample_index.push_back(std::move(rec));
    }
    manifest.check();

    try {
        if (is_hdf5_path(destination)) {
            write_hdf5_container(destination, samples, options);
        } else {
            fs::create_directories(fs::path(destination) / "samples");
            for (const auto& [pose, meta] : samples)
                write_fallback_sample((fs::path(destination) / "samples" / (meta.id + ".bin")).string(),
                                      pose);
        }
        save_manifest(manifest, manifest_path_for(destination));
    } catch (...) {
        // remove partial output so failed packs leave nothing behind
        std::error_code ec;
        fs::remove_all(destination, ec);
        fs::remove(manifest_path_for(destination), ec);
        throw;
    }
    return manifest;
}

std::vector<std::string> subset_by_samples_per_class(const Corpus& corpus, const SubsetSpec& spec,
                                                     const std::string& from_split) {
    if (spec.samples_per_class < 1)
        throw InvalidArgument("subset: samples_per_class must be >= 1");
    const auto& manifest = corpus.manifest();
    if (!manifest.labeled()) throw InvalidArgument("subset: corpus is unlabeled");

    std::vector<std::string> pool;
    if (from_split.empty()) {
        for (const auto& rec : manifest.sample_index) pool.push_back(rec.id);
    } else {
        pool = corpus.split(from_split);
    }
    std::map<int64_t, std::vector<std::string>> by_class;
    for (const auto& id : pool) by_class[*corpus.record(id).label].push_back(id);

    RandomSource rng(spec.seed);
    std::vector<std::string> out;
    for (auto& [label, ids] : by_class) {
        // seeded Fisher-Yates, then take the prefix
        for (size_t i = ids.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(i) - 1));
            std::swap(ids[i - 1], ids[j]);
        }
        size_t keep = std::min<size_t>(ids.size(), static_cast<size_t>(spec.samples_per_class));
        for (size_t i = 0; i < keep; ++i) out.push_back(ids[i]);
    }
    return out;
}

PoseSequence sample_pretraining_clip(const Corpus& corpus, RandomSource& rng, int64_t min_len,
                                     int64_t max_len) {
    if (min_len < 1 || min_len > max_len)
        throw InvalidArgument("sample_pretraining_clip: require 1 <= min_len <= max_len");
    std::vector<int64_t> eligible;
    for (int64_t i = 0; i < corpus.size(); ++i)
        if (corpus.manifest().sample_index[static_cast<size_t>(i)].frame_count >= min_len)
            eligible.push_back(i);
    if (eligible.empty())
        throw InvalidArgument("sample_pretraining_clip: no sample with frame_count >= " +
                              std::to_string(min_len));
    int64_t pick = eligible[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(eligible.size()) - 1))];
    LabeledSample sample = corpus.get(pick);
    int64_t F = sample.pose.frames;
    int64_t len = rng.uniform_int(min_len, std::min(max_len, F));
    int64_t start = rng.uniform_int(0, F - len);

    PoseSequence clip;
    clip.frames = len;
    clip.keypoints = sample.pose.keypoints;
    clip.dims = sample.pose.dims;
    clip.fps = sample.pose.fps;
    clip.data.assign(sample.pose.data.begin() + start * clip.keypoints * clip.dims,
                     sample.pose.data.begin() + (start + len) * clip.keypoints * clip.dims);
    clip.valid.assign(sample.pose.valid.begin() + start * clip.keypoints,
                      sample.pose.valid.begin() + (start + len) * clip.keypoints);
    return clip;
}

PoseSequence read_jsonl_pose(const std::string& path, float fps) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open " + path);
    struct Frame {
        int64_t t;
        std::vector<float> coords;
        std::vector<uint8_t> valid;
    };
    std::vector<Frame> frames;
    std::string line;
    int64_t lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        json obj;
        try {
            obj = json::parse(line);
        } catch (const std::exception& e) {
            throw InvalidArgument(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
        Frame frame;
        frame.t = obj.at("t");
        const auto& kps = obj.at("kps");
        for (const auto& kp : kps) {
            if (!kp.is_array() || kp.size() != 2)
                throw InvalidArgument(path + ":" + std::to_string(lineno) +
                                      ": kps entries must be [x, y]");
            frame.coords.push_back(kp[0].get<float>());
            frame.coords.push_back(kp[1].get<float>());
        }
        if (obj.contains("valid")) {
            for (const auto& v : obj["valid"]) frame.valid.push_back(v.get<bool>() ? 1 : 0);
            if (frame.valid.size() * 2 != frame.coords.size())
                throw InvalidArgument(path + ":" + std::to_string(lineno) +
                                      ": valid length does not match kps");
        } else {
            frame.valid.assign(frame.coords.size() / 2, 1);
        }
        frames.push_back(std::move(frame));
    }
    if (frames.empty()) throw InvalidArgument(path + ": no frames");
    std::sort(frames.begin(), frames.end(), [](const Frame& a, const Frame& b) { return a.t < b.t; });
    size_t K = frames.front().valid.size();
    PoseSequence pose;
    pose.frames = static_cast<int64_t>(frames.size());
    pose.keypoints = static_cast<int64_t>(K);
    pose.dims = 2;
    pose.fps = fps;
    for (const auto& frame : frames) {
        if (frame.valid.size() != K)
            throw InvalidArgument(path + ": inconsistent keypoint count across frames");
        pose.data.insert(pose.data.end(), frame.coords.begin(), frame.coords.end());
        pose.valid.insert(pose.valid.end(), frame.valid.begin(), frame.valid.end());
    }
    // invalid slots are stored as (0,0)
    for (int64_t f = 0; f < pose.frames; ++f)
        for (int64_t k = 0; k < pose.keypoints; ++k)
            if (!pose.is_valid(f, k)) {
                pose.at(f, k, 0) = 0.0f;
                pose.at(f, k, 1) = 0.0f;
            }
    return pose;
}

}  // namespace slrkit
