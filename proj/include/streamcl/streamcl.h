/*
 * streamcl C API.
 *
 * Every function returns a streamcl_status. On failure a human-readable
 * message for the calling thread is available from streamcl_last_error()
 * until the next failing call on that thread. Handles are opaque; each
 * *_create / *_open has a matching *_destroy / *_close that accepts NULL.
 */
#ifndef STREAMCL_H
#define STREAMCL_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(STREAMCL_BUILDING_LIBRARY)
#    define STREAMCL_API __declspec(dllexport)
#  else
#    define STREAMCL_API __declspec(dllimport)
#  endif
#else
#  define STREAMCL_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum streamcl_status {
  STREAMCL_OK = 0,
  STREAMCL_E_INVALID_ARGUMENT = 1,
  STREAMCL_E_IO = 2,
  STREAMCL_E_FORMAT = 3,
  STREAMCL_E_CONFIG = 4,
  STREAMCL_E_STATE = 5,
  STREAMCL_E_INTERNAL = 6
} streamcl_status;

typedef enum streamcl_method {
  STREAMCL_METHOD_CANDIDATE_NCM = 0,
  STREAMCL_METHOD_FULL_NCM = 1,
  STREAMCL_METHOD_FINETUNE = 2,
  STREAMCL_METHOD_ER = 3,
  STREAMCL_METHOD_NME_BUFFER = 4
} streamcl_method;

STREAMCL_API const char* streamcl_version(void);
STREAMCL_API const char* streamcl_last_error(void);
STREAMCL_API const char* streamcl_status_name(streamcl_status status);

/* ---- embedding files ------------------------------------------------- */

/* Writes `count` records; `vectors` is count x dim row-major. */
STREAMCL_API streamcl_status streamcl_write_embeddings(const char* path, uint32_t dim,
                                                       const int32_t* labels,
                                                       const float* vectors, size_t count);

typedef struct streamcl_reader streamcl_reader;

STREAMCL_API streamcl_status streamcl_reader_open(const char* path, streamcl_reader** out);
STREAMCL_API void streamcl_reader_close(streamcl_reader* reader);
STREAMCL_API uint32_t streamcl_reader_dim(const streamcl_reader* reader);
STREAMCL_API uint64_t streamcl_reader_count(const streamcl_reader* reader);
/* Decodes the next record into label / vector (capacity >= dim floats).
 * *has_record is 0 at end of file. */
STREAMCL_API streamcl_status streamcl_reader_next(streamcl_reader* reader, int32_t* label,
                                                  float* vector, size_t capacity,
                                                  int* has_record);

typedef struct streamcl_file_report {
  uint32_t dim;
  uint64_t num_records;
  uint32_t max_label;
  uint64_t num_train; /* filled when a manifest was checked */
  uint64_t num_test;
} streamcl_file_report;

/* Reads every record of an embedding file and checks it. With a non-NULL
 * manifest_path the manifest is loaded and cross-checked against the file
 * instead (embedding_path may then be NULL). */
STREAMCL_API streamcl_status streamcl_check_embedding_file(const char* embedding_path,
                                                           const char* manifest_path,
                                                           streamcl_file_report* report);

typedef struct streamcl_synthetic_params {
  uint32_t num_classes;
  uint32_t dim;
  uint32_t per_class_train;
  uint32_t per_class_test;
  double cluster_spread;
  double mean_scale;
  uint64_t seed;
} streamcl_synthetic_params;

/* Writes <out_dir>/<name>.ocle and <out_dir>/<name>.json and copies the
 * manifest path (NUL-terminated) into manifest_path. */
STREAMCL_API streamcl_status streamcl_generate_synthetic(const streamcl_synthetic_params* params,
                                                         const char* out_dir, const char* name,
                                                         char* manifest_path,
                                                         size_t manifest_path_capacity);

/* ---- class mean table ------------------------------------------------ */

typedef struct streamcl_mean_table streamcl_mean_table;

STREAMCL_API streamcl_status streamcl_mean_table_create(uint32_t dim, streamcl_mean_table** out);
STREAMCL_API void streamcl_mean_table_destroy(streamcl_mean_table* table);
STREAMCL_API streamcl_status streamcl_mean_table_update(streamcl_mean_table* table, int32_t label,
                                                        const float* embedding, size_t dim);
STREAMCL_API streamcl_status streamcl_mean_table_distance(const streamcl_mean_table* table,
                                                          int32_t label, const float* query,
                                                          size_t dim, double* distance);
STREAMCL_API uint64_t streamcl_mean_table_count(const streamcl_mean_table* table, int32_t label);
/* Copies the class mean (dim doubles). */
STREAMCL_API streamcl_status streamcl_mean_table_mean(const streamcl_mean_table* table,
                                                      int32_t label, double* mean, size_t dim);
STREAMCL_API streamcl_status streamcl_mean_table_save(const streamcl_mean_table* table,
                                                      const char* path);
STREAMCL_API streamcl_status streamcl_mean_table_load(const char* path, streamcl_mean_table** out);

/* ---- online learner -------------------------------------------------- */

typedef struct streamcl_learner_options {
  streamcl_method method;
  double learning_rate;        /* 0 selects 0.1 */
  int softmax_scope_task;      /* 0: softmax over all rows; 1: over the label's task */
  int use_bias;                /* nonzero: head has a bias term */
  size_t exemplar_budget;      /* must be 0 for the NCM methods */
  size_t replay_batch_size;    /* 0: same as the incoming batch */
  uint64_t init_seed;
  uint64_t buffer_seed;
} streamcl_learner_options;

/* Defaults: candidate NCM, lr 0.1, softmax over all rows, bias on, no buffer. */
STREAMCL_API void streamcl_learner_options_init(streamcl_learner_options* options);

typedef struct streamcl_learner streamcl_learner;

STREAMCL_API streamcl_status streamcl_learner_create(uint32_t dim, uint32_t step_size,
                                                     const streamcl_learner_options* options,
                                                     streamcl_learner** out);
STREAMCL_API void streamcl_learner_destroy(streamcl_learner* learner);
STREAMCL_API streamcl_status streamcl_learner_begin_task(streamcl_learner* learner,
                                                         const int32_t* classes, size_t count);
/* inputs is batch x dim row-major; loss may be NULL. */
STREAMCL_API streamcl_status streamcl_learner_train_batch(streamcl_learner* learner,
                                                          const float* inputs,
                                                          const int32_t* labels, size_t batch,
                                                          float* loss);
STREAMCL_API streamcl_status streamcl_learner_predict(const streamcl_learner* learner,
                                                      const float* query, size_t dim,
                                                      int32_t* predicted);
/* Writes {"head", "means", "buffer"?} as JSON. */
STREAMCL_API streamcl_status streamcl_learner_save(const streamcl_learner* learner,
                                                   const char* path);

/* ---- experiments ----------------------------------------------------- */

typedef struct streamcl_run_summary {
  double avg;
  double last;
  uint32_t num_steps;
  int single_pass_ok; /* 1 when every training record was read exactly once */
} streamcl_run_summary;

/* Runs the config file and writes metrics.json, metrics.csv and
 * run_manifest.json to out_dir (or the config's output_dir when out_dir is
 * NULL). summary may be NULL. */
STREAMCL_API streamcl_status streamcl_run_config_file(const char* config_path, const char* out_dir,
                                                      streamcl_run_summary* summary);

/* Runs every sweep point and writes the per-point outputs plus summary.csv.
 * parallel: -1 keeps the spec's setting, 0 forces sequential, 1 parallel. */
STREAMCL_API streamcl_status streamcl_run_sweep_file(const char* sweep_path, int parallel,
                                                     size_t* num_points);

#ifdef __cplusplus
}
#endif

#endif /* STREAMCL_H */
