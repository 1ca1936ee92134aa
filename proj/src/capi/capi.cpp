#include "slrkit.h"

#include "slrkit/common.hpp"
#include "slrkit/corpus.hpp"
#include "slrkit/runner.hpp"
#include "slrkit/stream.hpp"
#include "slrkit/version.hpp"

#include <cstring>
#include <memory>
#include <string>

using namespace slrkit;

namespace {

thread_local std::string g_last_error;

slrkit_status set_error(slrkit_status code, const std::string& message) {
    g_last_error = message;
    return code;
}

slrkit_status from_exception() {
    try {
        throw;
    } catch (const ConfigError& e) {
        return set_error(SLRKIT_ERR_CONFIG, e.what());
    } catch (const NotFound& e) {
        return set_error(SLRKIT_ERR_NOT_FOUND, e.what());
    } catch (const IoError& e) {
        return set_error(SLRKIT_ERR_IO, e.what());
    } catch (const InvalidArgument& e) {
        return set_error(SLRKIT_ERR_INVALID, e.what());
    } catch (const std::exception& e) {
        return set_error(SLRKIT_ERR_RUNTIME, e.what());
    } catch (...) {
        return set_error(SLRKIT_ERR_RUNTIME, "unknown failure");
    }
}

slrkit_status copy_string(const std::string& s, char* buf, size_t buf_len) {
    if (!buf || buf_len < s.size() + 1)
        return set_error(SLRKIT_ERR_INVALID,
                         "buffer too small (need " + std::to_string(s.size() + 1) + " bytes)");
    std::memcpy(buf, s.c_str(), s.size() + 1);
    return SLRKIT_OK;
}

}  // namespace

struct slrkit_corpus {
    std::unique_ptr<Corpus> impl;
};

struct slrkit_model {
    FrozenModel impl;
};

extern "C" {

const char* slrkit_version(void) { return SLRKIT_VERSION; }

const char* slrkit_last_error(void) { return g_last_error.c_str(); }

slrkit_status slrkit_run(const char* command, const char* config_path,
                         const char* const* overrides, size_t n_overrides) {
    if (!command || !config_path) return set_error(SLRKIT_ERR_INVALID, "null argument");
    std::vector<std::string> ovs;
    for (size_t i = 0; i < n_overrides; ++i)
        if (overrides && overrides[i]) ovs.emplace_back(overrides[i]);
    int code = run_command(command, config_path, ovs);
    if (code == 0) return SLRKIT_OK;
    return code == 1 ? set_error(SLRKIT_ERR_CONFIG, "command failed with a config error")
                     : set_error(SLRKIT_ERR_RUNTIME, "command failed at runtime");
}

slrkit_status slrkit_corpus_open(const char* path, slrkit_corpus** out) {
    if (!path || !out) return set_error(SLRKIT_ERR_INVALID, "null argument");
    try {
        auto handle = std::make_unique<slrkit_corpus>();
        handle->impl = Corpus::open(path);
        *out = handle.release();
        return SLRKIT_OK;
    } catch (...) {
        return from_exception();
    }
}

void slrkit_corpus_close(slrkit_corpus* corpus) { delete corpus; }

slrkit_status slrkit_corpus_count(const slrkit_corpus* corpus, int64_t* out) {
    if (!corpus || !out) return set_error(SLRKIT_ERR_INVALID, "null argument");
    *out = corpus->impl->size();
    return SLRKIT_OK;
}

slrkit_status slrkit_corpus_sample_id(const slrkit_corpus* corpus, int64_t index, char* buf,
                                      size_t buf_len) {
    if (!corpus) return set_error(SLRKIT_ERR_INVALID, "null corpus");
    try {
        if (index < 0 || index >= corpus->impl->size())
            throw NotFound("sample index " + std::to_string(index) + " out of range");
        return copy_string(
            corpus->impl->manifest().sample_index[static_cast<size_t>(index)].id, buf, buf_len);
    } catch (...) {
        return from_exception();
    }
}

slrkit_status slrkit_corpus_sample_dims(const slrkit_corpus* corpus, const char* id,
                                        int64_t* frames, int64_t* keypoints) {
    if (!corpus || !id || !frames || !keypoints)
        return set_error(SLRKIT_ERR_INVALID, "null argument");
    try {
        LabeledSample sample = corpus->impl->get(std::string(id));
        *frames = sample.pose.frames;
        *keypoints = sample.pose.keypoints;
        return SLRKIT_OK;
    } catch (...) {
        return from_exception();
    }
}

slrkit_status slrkit_corpus_get(const slrkit_corpus* corpus, const char* id, float* kps,
                                uint8_t* valid, int64_t* label) {
    if (!corpus || !id) return set_error(SLRKIT_ERR_INVALID, "null argument");
    try {
        LabeledSample sample = corpus->impl->get(std::string(id));
        if (kps) std::memcpy(kps, sample.pose.data.data(), sample.pose.data.size() * sizeof(float));
        if (valid) std::memcpy(valid, sample.pose.valid.data(), sample.pose.valid.size());
        if (label) *label = sample.label;
        return SLRKIT_OK;
    } catch (...) {
        return from_exception();
    }
}

slrkit_status slrkit_model_load(const char* config_path, const char* checkpoint_path,
                                slrkit_model** out) {
    if (!config_path || !checkpoint_path || !out)
        return set_error(SLRKIT_ERR_INVALID, "null argument");
    try {
        RunConfig cfg = load_run_config(config_path, {});
        auto handle = std::make_unique<slrkit_model>();
        handle->impl = load_frozen_model(cfg, checkpoint_path);
        *out = handle.release();
        return SLRKIT_OK;
    } catch (...) {
        return from_exception();
    }
}

void slrkit_model_free(slrkit_model* model) { delete model; }

slrkit_status slrkit_model_num_classes(const slrkit_model* model, int32_t* out) {
    if (!model || !out) return set_error(SLRKIT_ERR_INVALID, "null argument");
    *out = model->impl.config.num_classes;
    return SLRKIT_OK;
}

slrkit_status slrkit_predict(const slrkit_model* model, const float* kps, const uint8_t* valid,
                             int64_t frames, int64_t keypoints, int32_t k, int32_t* out_labels,
                             float* out_scores, double* out_latency_ms) {
    if (!model || !kps || !out_labels || !out_scores)
        return set_error(SLRKIT_ERR_INVALID, "null argument");
    try {
        if (frames < 1 || keypoints < 1)
            throw InvalidArgument("frames and keypoints must be >= 1");
        PoseSequence window = PoseSequence::zeros(frames, keypoints);
        std::memcpy(window.data.data(), kps, window.data.size() * sizeof(float));
        if (valid) {
            std::memcpy(window.valid.data(), valid, window.valid.size());
            for (int64_t f = 0; f < frames; ++f)
                for (int64_t kp = 0; kp < keypoints; ++kp)
                    if (!window.is_valid(f, kp)) {
                        window.at(f, kp, 0) = 0.0f;
                        window.at(f, kp, 1) = 0.0f;
                    }
        }
        PredictionMessage msg = predict_window(model->impl, window, k);
        // map gloss strings back to class indices for the flat C signature
        for (int32_t i = 0; i < k; ++i) {
            const auto& [gloss, score] = msg.top_k[static_cast<size_t>(i)];
            int32_t cls = -1;
            for (size_t c = 0; c < model->impl.labels.size(); ++c)
                if (model->impl.labels[c] == gloss) cls = static_cast<int32_t>(c);
            if (cls < 0 && gloss.rfind("CLASS_", 0) == 0)
                cls = static_cast<int32_t>(std::stol(gloss.substr(6)));
            out_labels[i] = cls;
            out_scores[i] = static_cast<float>(score);
        }
        if (out_latency_ms) *out_latency_ms = msg.latency_ms;
        return SLRKIT_OK;
    } catch (...) {
        return from_exception();
    }
}

slrkit_status slrkit_model_label(const slrkit_model* model, int32_t cls, char* buf,
                                 size_t buf_len) {
    if (!model) return set_error(SLRKIT_ERR_INVALID, "null model");
    return copy_string(model->impl.label_of(cls), buf, buf_len);
}

}  // extern "C"
