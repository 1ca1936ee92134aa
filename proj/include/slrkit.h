/* slrkit C API: pose-based isolated sign language recognition toolkit.
 *
 * All functions return slrkit_status (SLRKIT_OK on success); on failure
 * slrkit_last_error() describes the problem for the calling thread.
 * Handles are opaque and must be released with the matching *_close /
 * *_free call. The library is safe for concurrent use on distinct
 * handles; a corpus handle may be shared across reader threads.
 */
#ifndef SLRKIT_H
#define SLRKIT_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#define SLRKIT_API __attribute__((visibility("default")))

typedef enum {
    SLRKIT_OK = 0,
    SLRKIT_ERR_CONFIG = 1,   /* config parse/validation failure */
    SLRKIT_ERR_RUNTIME = 2,  /* command or model failure */
    SLRKIT_ERR_INVALID = 3,  /* bad argument or contract violation */
    SLRKIT_ERR_IO = 4,       /* filesystem / container / socket */
    SLRKIT_ERR_NOT_FOUND = 5 /* unknown id, key or path */
} slrkit_status;

SLRKIT_API const char* slrkit_version(void);

/* Message for the most recent failure on this thread ("" if none). */
SLRKIT_API const char* slrkit_last_error(void);

/* Runs one toolkit command (pack, validate, synth, pretrain, train,
 * finetune, evaluate, benchmark, serve) against a YAML run config, with
 * optional key.path=value overrides. Returns SLRKIT_OK, SLRKIT_ERR_CONFIG
 * or SLRKIT_ERR_RUNTIME, mirroring the CLI exit codes. */
SLRKIT_API slrkit_status slrkit_run(const char* command, const char* config_path,
                                    const char* const* overrides, size_t n_overrides);

/* ---- corpus access ---- */

typedef struct slrkit_corpus slrkit_corpus;

SLRKIT_API slrkit_status slrkit_corpus_open(const char* path, slrkit_corpus** out);
SLRKIT_API void slrkit_corpus_close(slrkit_corpus* corpus);
SLRKIT_API slrkit_status slrkit_corpus_count(const slrkit_corpus* corpus, int64_t* out);

/* Copies the id of the sample at `index` into buf (NUL-terminated);
 * fails with SLRKIT_ERR_INVALID if buf_len is too small. */
SLRKIT_API slrkit_status slrkit_corpus_sample_id(const slrkit_corpus* corpus, int64_t index,
                                                 char* buf, size_t buf_len);

/* Shape query: frames and keypoints of a stored sample. */
SLRKIT_API slrkit_status slrkit_corpus_sample_dims(const slrkit_corpus* corpus, const char* id,
                                                   int64_t* frames, int64_t* keypoints);

/* Reads one sample. kps receives frames*keypoints*2 floats (x,y pairs),
 * valid receives frames*keypoints flags; either may be NULL to skip.
 * label receives -1 for unlabeled corpora. */
SLRKIT_API slrkit_status slrkit_corpus_get(const slrkit_corpus* corpus, const char* id,
                                           float* kps, uint8_t* valid, int64_t* label);

/* ---- frozen model inference ---- */

typedef struct slrkit_model slrkit_model;

/* Loads checkpoint + model shape + normalization from a run config (the
 * same file `slrkit serve` takes). */
SLRKIT_API slrkit_status slrkit_model_load(const char* config_path, const char* checkpoint_path,
                                           slrkit_model** out);
SLRKIT_API void slrkit_model_free(slrkit_model* model);
SLRKIT_API slrkit_status slrkit_model_num_classes(const slrkit_model* model, int32_t* out);

/* Classifies one window of pose frames. kps is frames*keypoints*2 floats,
 * valid is frames*keypoints flags (NULL = all valid). Fills the top-k
 * class indices and softmax scores (descending). latency_ms may be NULL. */
SLRKIT_API slrkit_status slrkit_predict(const slrkit_model* model, const float* kps,
                                        const uint8_t* valid, int64_t frames, int64_t keypoints,
                                        int32_t k, int32_t* out_labels, float* out_scores,
                                        double* out_latency_ms);

/* Gloss text for a class index (from the labels file next to the
 * checkpoint); copies into buf, NUL-terminated. */
SLRKIT_API slrkit_status slrkit_model_label(const slrkit_model* model, int32_t cls, char* buf,
                                            size_t buf_len);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* SLRKIT_H */
