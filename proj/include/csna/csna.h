#ifndef CSNA_CSNA_H
#define CSNA_CSNA_H

/*
 * C interface to the csna library. Objects are opaque handles released with
 * their *_free function. Every call returns a csna_status; on failure the
 * message is available from csna_last_error() on the same thread until the
 * next call. Strings returned through char** are owned by the caller and
 * released with csna_string_free().
 *
 * Configuration travels as JSON text:
 *   model:  {"kind": "mlp"|"gcn"|"csna", "layers", "dropout",
 *            "variant": "lite"|"extended", "edge_sampling_rate",
 *            "normalization": "per-source"|"per-destination", "lambda_cal",
 *            "precision": "f64"|"f32"}
 *   hyper:  {"lr", "hidden", "tau", "weight_decay", "patience",
 *            "max_epochs", "seed"}
 *   csbm:   {"n", "C", "p", "q", "mu", "d"}
 * Missing keys take defaults; unknown keys are rejected.
 */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define CSNA_API __declspec(dllexport)
#else
#define CSNA_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum csna_status {
  CSNA_OK = 0,
  CSNA_ERR_INVALID_ARGUMENT = 1, /* null handle or pointer */
  CSNA_ERR_DIMENSION = 2,
  CSNA_ERR_INDEX = 3,
  CSNA_ERR_CONTRACT = 4,
  CSNA_ERR_PARSE = 5,
  CSNA_ERR_IO = 6,
  CSNA_ERR_NUMERIC = 7,
  CSNA_ERR_INTERNAL = 8
} csna_status;

typedef struct csna_graph csna_graph;
typedef struct csna_splits csna_splits;
typedef struct csna_checkpoint csna_checkpoint;

CSNA_API const char* csna_version(void);
CSNA_API const char* csna_last_error(void);
CSNA_API const char* csna_status_name(csna_status status);
CSNA_API void csna_string_free(char* s);

/* Graphs */
CSNA_API csna_status csna_graph_load(const char* dir, csna_graph** out);
CSNA_API csna_status csna_graph_save(const csna_graph* g, const char* dir);
/* {"name", "n", "d", "C", "undirected_edges", "edge_homophily"} */
CSNA_API csna_status csna_graph_info(const csna_graph* g, char** info_json);
CSNA_API csna_status csna_csbm_sample(const char* csbm_json, uint64_t seed, csna_graph** out);
CSNA_API void csna_graph_free(csna_graph* g);

/* Splits. ratios may be null for 60/20/20. */
CSNA_API csna_status csna_splits_generate(size_t n, const double ratios[3], size_t k, uint64_t seed,
                                          csna_splits** out);
CSNA_API csna_status csna_splits_from_json(const char* json, csna_splits** out);
CSNA_API csna_status csna_splits_to_json(const csna_splits* s, char** json);
CSNA_API csna_status csna_splits_validate(const csna_splits* s, size_t n);
CSNA_API size_t csna_splits_count(const csna_splits* s);
CSNA_API void csna_splits_free(csna_splits* s);

/* Training. report_json receives the train report; out_checkpoint (may be
 * null) the best-validation model. A run that hits a non-finite value
 * still returns CSNA_OK with "failed": true in the report. */
CSNA_API csna_status csna_train(const csna_graph* g, const csna_splits* s, size_t split_index,
                                const char* model_json, const char* hyper_json, char** report_json,
                                csna_checkpoint** out_checkpoint);
/* grid_json: {"lr": [...], "hidden": [...], "tau": [...]} or null for the
 * protocol grid of the graph's scale. options_json: {"splits", "epoch_cap",
 * "jobs"} or null for protocol options. */
CSNA_API csna_status csna_tune(const csna_graph* g, const csna_splits* s, const char* model_json,
                               const char* hyper_json, const char* grid_json, const char* options_json,
                               char** result_json);
CSNA_API csna_status csna_benchmark(const csna_graph* g, const csna_splits* s, const char* model_json,
                                    const char* hyper_json, size_t jobs, char** report_json, char** report_csv);

/* Checkpoints */
CSNA_API csna_status csna_checkpoint_load(const char* path, csna_checkpoint** out);
CSNA_API csna_status csna_checkpoint_save(const csna_checkpoint* c, const char* path);
CSNA_API csna_status csna_checkpoint_to_json(const csna_checkpoint* c, char** json);
/* Eval-mode logits as a JSON array of rows. */
CSNA_API csna_status csna_checkpoint_logits(const csna_checkpoint* c, const csna_graph* g, char** logits_json);
CSNA_API void csna_checkpoint_free(csna_checkpoint* c);

/* Diagnostics. scope: "all", "test-incident" or "held-out"; the latter two
 * need splits and split_index. */
CSNA_API csna_status csna_diagnose(const csna_checkpoint* c, const csna_graph* g, const char* scope,
                                   const csna_splits* s, size_t split_index, size_t bins, char** report_json,
                                   char** histogram_csv);

/* CSBM factor checks */
CSNA_API csna_status csna_csbm_predicted_factor(double p, double q, double w_plus, double w_minus,
                                                size_t num_classes, double* out);
CSNA_API csna_status csna_csbm_theorem(const char* csbm_json, double w_plus, double w_minus, size_t trials,
                                       uint64_t seed, size_t jobs, char** summary_json, char** rows_csv);
CSNA_API csna_status csna_csbm_sweep(const char* csbm_json, const double* multiples, size_t count, size_t trials,
                                     uint64_t seed, size_t jobs, char** summary_json, char** rows_csv);

#ifdef __cplusplus
}
#endif

#endif
