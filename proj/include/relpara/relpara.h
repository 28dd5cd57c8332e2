#ifndef RELPARA_RELPARA_H
#define RELPARA_RELPARA_H

/* C interface to the relpara report generator. Every call returns an
 * rp_status; on failure rp_last_error() holds a one-line message for the
 * calling thread. Strings returned through char** are owned by the caller
 * and released with rp_string_free. */

#include <stddef.h>

#if defined(RELPARA_BUILDING_LIBRARY)
#define RP_API __attribute__((visibility("default")))
#else
#define RP_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum rp_status {
  RP_OK = 0,
  RP_ERR_INVALID_ARGUMENT = 1,
  RP_ERR_IO = 2,
  RP_ERR_FORMAT = 3,
  RP_ERR_SCHEMA_VERSION = 4,
  RP_ERR_HASH_MISMATCH = 5,
  RP_ERR_DIMENSION = 6,
  RP_ERR_DIVERGED = 7,
  RP_ERR_MISSING_ID = 8,
  RP_ERR_INTERNAL = 9
} rp_status;

typedef struct rp_dataset rp_dataset;
typedef struct rp_relations rp_relations;
typedef struct rp_model rp_model;

typedef void (*rp_epoch_callback)(const char* record_json, void* user);

RP_API const char* rp_version(void);
RP_API const char* rp_status_name(rp_status status);
RP_API const char* rp_last_error(void);
RP_API void rp_string_free(char* s);
/* Non-fatal diagnostics go to stderr unless disabled. */
RP_API void rp_set_warnings(int enabled);

/* Default option object for "synth", "prepare", "train", "limits" or "evaluate". */
RP_API rp_status rp_defaults(const char* kind, char** defaults_json);

/* Synthetic raw corpus. config_json may be NULL for defaults. */
RP_API rp_status rp_synth_write(const char* config_json, const char* out_dir, char** summary_json);
/* Prepare options after applying the raw corpus's own defaults and then options_json. */
RP_API rp_status rp_prepare_resolve(const char* raw_dir, const char* options_json, char** effective_json);
/* Raw corpus directory -> prepared dataset directory. */
RP_API rp_status rp_prepare(const char* raw_dir, const char* options_json, const char* out_dir, char** summary_json);

RP_API rp_status rp_dataset_load(const char* dir, rp_dataset** out);
RP_API void rp_dataset_free(rp_dataset* dataset);
RP_API rp_status rp_dataset_info(const rp_dataset* dataset, char** info_json);

/* Built from the training split labels. */
RP_API rp_status rp_relations_build(const rp_dataset* dataset, rp_relations** out);
RP_API rp_status rp_relations_load(const char* path, rp_relations** out);
RP_API rp_status rp_relations_save(const rp_relations* relations, const char* path);
RP_API rp_status rp_relations_size(const rp_relations* relations, size_t* m);
RP_API rp_status rp_relations_value(const rp_relations* relations, size_t i, size_t j, double* value);
RP_API rp_status rp_relations_top_pairs(const rp_relations* relations, size_t k, char** pairs_json);
RP_API void rp_relations_free(rp_relations* relations);

/* config_json keys follow the train config; log_path and callback may be NULL. */
RP_API rp_status rp_train(const rp_dataset* dataset, const rp_relations* relations, const char* config_json,
                          const char* log_path, rp_epoch_callback callback, void* user, rp_model** out);
RP_API rp_status rp_model_save(const rp_model* model, const char* path);
/* When dataset is non-NULL the checkpoint must match its artifact hashes. */
RP_API rp_status rp_model_load(const char* path, const rp_dataset* dataset, rp_model** out);
RP_API rp_status rp_model_info(const rp_model* model, char** info_json);
RP_API void rp_model_free(rp_model* model);
/* Abnormality probabilities, teacher-forced decisions and a composed report
 * for the first n samples of a split. */
RP_API rp_status rp_model_probe(const rp_model* model, const rp_dataset* dataset, const char* split, size_t n,
                                char** probe_json);

/* Writes one JSON record per sample of the split to out_path. */
RP_API rp_status rp_generate(const rp_model* model, const rp_dataset* dataset, const char* split,
                             const char* limits_json, const char* out_path, int with_attention, char** summary_json);
RP_API rp_status rp_evaluate(const char* generated_path, const rp_dataset* dataset, const char* split,
                             const char* options_json, char** result_json);

/* Summary of any artifact: raw/prepared dataset directory, relation matrix,
 * checkpoint, generated reports or evaluation record. */
RP_API rp_status rp_inspect(const char* path, char** summary_json);

#ifdef __cplusplus
}
#endif

#endif
