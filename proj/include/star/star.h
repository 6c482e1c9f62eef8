/* C interface to the STAR few-shot node classification library.
 *
 * Every function returns a star_status. On failure the message is available
 * from star_last_error() on the calling thread until the next failing call.
 * Objects are opaque handles released with their *_free function; strings
 * returned through char** are released with star_string_free.
 */
#ifndef STAR_STAR_H
#define STAR_STAR_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(STAR_BUILDING_LIBRARY)
#    define STAR_API __declspec(dllexport)
#  else
#    define STAR_API __declspec(dllimport)
#  endif
#else
#  define STAR_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum star_status {
  STAR_OK = 0,
  STAR_ERR_INVALID_ARGUMENT = 1,
  STAR_ERR_IO = 2,
  STAR_ERR_PARSE = 3,
  STAR_ERR_NUMERIC = 4,
  STAR_ERR_STATE = 5,
  STAR_ERR_INTERNAL = 99
} star_status;

typedef struct star_config star_config;
typedef struct star_dataset star_dataset;
typedef struct star_model star_model;
typedef struct star_embedding star_embedding;

typedef enum star_embedding_format {
  STAR_EMBEDDING_BINARY = 0,
  STAR_EMBEDDING_TSV = 1
} star_embedding_format;

/* Column-block selection applied to an embedding before evaluation. */
typedef enum star_block_mask {
  STAR_BLOCKS_ALL = 0,
  STAR_BLOCKS_DROP_SET = 1,
  STAR_BLOCKS_DROP_INSTANCE = 2
} star_block_mask;

STAR_API const char* star_last_error(void);
STAR_API const char* star_status_string(star_status status);
STAR_API const char* star_version(void);
STAR_API void star_string_free(char* s);

/* ---- configuration ---- */
STAR_API star_status star_config_create(star_config** out);
/* Keys missing from `json` keep their defaults; unknown keys are rejected. */
STAR_API star_status star_config_from_json(const char* json, star_config** out);
/* Applies the keys present in `json_patch` on top of `cfg`. */
STAR_API star_status star_config_update(star_config* cfg, const char* json_patch);
STAR_API star_status star_config_to_json(const star_config* cfg, char** out_json);
STAR_API void star_config_free(star_config* cfg);

/* ---- datasets ---- */
STAR_API star_status star_dataset_load(const char* dir, star_dataset** out);
STAR_API star_status star_dataset_save(const star_dataset* ds, const char* dir);
/* Synthetic SBM graph. `spec_json` holds SBM fields plus an optional
 * "splits" object; without it every block is a test class. */
STAR_API star_status star_dataset_synth(const char* spec_json, star_dataset** out);
STAR_API star_status star_dataset_num_nodes(const star_dataset* ds, size_t* out);
STAR_API star_status star_dataset_num_edges(const star_dataset* ds, size_t* out);
STAR_API star_status star_dataset_feature_dim(const star_dataset* ds, size_t* out);
STAR_API void star_dataset_free(star_dataset* ds);

/* ---- pretraining ---- */
STAR_API star_status star_model_pretrain(const star_dataset* ds, const star_config* cfg,
                                         star_model** out);
/* Writes params.bin and train.json into `dir` (created if needed). */
STAR_API star_status star_model_save(const star_model* model, const char* dir);
STAR_API star_status star_model_load(const char* dir, star_model** out);
STAR_API star_status star_model_epochs(const star_model* model, size_t* out);
/* Combined training loss of epoch `epoch`. */
STAR_API star_status star_model_loss(const star_model* model, size_t epoch, double* out);
STAR_API void star_model_free(star_model* model);

/* ---- embeddings ---- */
STAR_API star_status star_embed(const star_model* model, const star_dataset* ds,
                                star_embedding** out);
STAR_API star_status star_embedding_save(const star_embedding* emb, const char* path,
                                         star_embedding_format format);
STAR_API star_status star_embedding_load(const char* path, star_embedding** out);
STAR_API star_status star_embedding_shape(const star_embedding* emb, size_t* rows, size_t* cols);
/* Copies row-major values into `buffer` of length rows * cols. */
STAR_API star_status star_embedding_copy(const star_embedding* emb, double* buffer, size_t length);
STAR_API void star_embedding_free(star_embedding* emb);

/* ---- meta-test and diagnostics ---- */
/* Episodic evaluation; the result is the metrics.json document. When
 * `out_path` is non-NULL the metrics and per-episode CSV are written there. */
STAR_API star_status star_evaluate(const star_embedding* emb, const star_dataset* ds,
                                   const star_config* cfg, star_block_mask blocks,
                                   const char* out_path, char** out_json);
/* Nearest-centroid accuracy on raw node features over the same episodes. */
STAR_API star_status star_baseline(const star_dataset* ds, const star_config* cfg,
                                   char** out_json);
STAR_API star_status star_diagnose(const star_embedding* emb, const star_dataset* ds,
                                   const star_config* cfg, size_t shift_episodes,
                                   char** out_json);

#ifdef __cplusplus
}
#endif

#endif /* STAR_STAR_H */
