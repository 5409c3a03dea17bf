#ifndef GAUG_GAUG_H
#define GAUG_GAUG_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define GAUG_API __declspec(dllexport)
#else
#define GAUG_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum gaug_status {
  GAUG_OK = 0,
  GAUG_ERR_INVALID_ARGUMENT = 1, /* null handle or pointer */
  GAUG_ERR_PARSE = 2,            /* malformed input file */
  GAUG_ERR_VALIDATION = 3,       /* config or data violates an invariant */
  GAUG_ERR_USAGE = 4,            /* operation not valid in this state */
  GAUG_ERR_IO = 5,
  GAUG_ERR_LLM = 6,
  GAUG_ERR_NUMERIC = 7,
  GAUG_ERR_INTERNAL = 8
} gaug_status;

typedef struct gaug_graph gaug_graph;
typedef struct gaug_pipeline gaug_pipeline;

/* Message of the last failed call on this thread; "" after success. */
GAUG_API const char* gaug_last_error(void);
GAUG_API const char* gaug_status_name(gaug_status status);
GAUG_API const char* gaug_version(void);

/* Strings returned through char** are owned by the caller. */
GAUG_API void gaug_string_free(char* s);

GAUG_API gaug_status gaug_graph_load(const char* nodes_path, const char* edges_path, gaug_graph** out);
/* spec_json: object with any of blocks, nodes_per_block, intra_p, inter_p,
   words_per_block, text_length, noise, train_frac, val_frac, seed. NULL
   means all defaults. */
GAUG_API gaug_status gaug_graph_synthetic(const char* spec_json, gaug_graph** out);
GAUG_API gaug_status gaug_graph_save(const gaug_graph* graph, const char* nodes_path, const char* edges_path);
GAUG_API gaug_status gaug_graph_num_nodes(const gaug_graph* graph, size_t* out);
GAUG_API gaug_status gaug_graph_num_edges(const gaug_graph* graph, size_t* out);
GAUG_API gaug_status gaug_graph_degree(const gaug_graph* graph, uint32_t node, size_t* out);
GAUG_API void gaug_graph_free(gaug_graph* graph);

/* config_path may be NULL for the built-in defaults. */
GAUG_API gaug_status gaug_pipeline_create(const char* config_path, gaug_pipeline** out);
/* Overrides a config field by dotted path; value is JSON or a bare string. */
GAUG_API gaug_status gaug_pipeline_set(gaug_pipeline* pipeline, const char* key, const char* value);
/* Resolved configuration as JSON. */
GAUG_API gaug_status gaug_pipeline_config_json(const gaug_pipeline* pipeline, char** out);
/* Checks the configuration without running anything. */
GAUG_API gaug_status gaug_pipeline_validate(gaug_pipeline* pipeline);

typedef void (*gaug_log_fn)(const char* line, void* user);
GAUG_API gaug_status gaug_pipeline_set_log(gaug_pipeline* pipeline, gaug_log_fn fn, void* user);

/* stage: synth, augment, fuse, walk, edges, pretrain, eval or all. */
GAUG_API gaug_status gaug_pipeline_run(gaug_pipeline* pipeline, const char* stage);
/* Report JSON of the last eval or all run. */
GAUG_API gaug_status gaug_pipeline_report_json(const gaug_pipeline* pipeline, char** out);
/* Uncached LLM queries of the last edges stage. */
GAUG_API gaug_status gaug_pipeline_edge_queries(const gaug_pipeline* pipeline, size_t* out);
/* Comma-separated stages skipped by the last all run. */
GAUG_API gaug_status gaug_pipeline_skipped(const gaug_pipeline* pipeline, char** out);
GAUG_API void gaug_pipeline_free(gaug_pipeline* pipeline);

#ifdef __cplusplus
}
#endif

#endif
