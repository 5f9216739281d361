#ifndef SNN_H
#define SNN_H

/*
 * C interface to the Siamese verification library.
 *
 * Conventions:
 *   - Every fallible call returns snn_status; SNN_OK is 0.
 *   - On failure, snn_last_error() returns a single-line message describing
 *     what went wrong. The buffer is thread-local and stays valid until the
 *     next library call on the same thread.
 *   - Objects come back through out-pointers as opaque handles owned by the
 *     caller; release them with the matching *_close / *_free function.
 *     On failure no handle is produced and out-pointers are untouched.
 *   - Strings are UTF-8, NUL-terminated. Optional path parameters accept
 *     NULL (or "") to skip writing that artifact.
 */

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum snn_status {
  SNN_OK = 0,
  SNN_ERR_INVALID_ARGUMENT = 1, /* bad parameter or malformed request */
  SNN_ERR_IO = 2,               /* file cannot be opened / read / written */
  SNN_ERR_FORMAT = 3,           /* file contents structurally invalid */
  SNN_ERR_DATA = 4,             /* semantically invalid data (ids, splits, pairs) */
  SNN_ERR_TRAINING = 5,         /* training-time failure (divergence, bad config) */
  SNN_ERR_INTERNAL = 6          /* unclassified library failure */
} snn_status;

const char* snn_status_name(snn_status status);
const char* snn_last_error(void);

/* ---- synthetic corpus --------------------------------------------------- */

typedef struct snn_synth_params {
  uint32_t n_seen;              /* species intended for training (default 12) */
  uint32_t n_unseen;            /* designated holdout species (default 6) */
  uint32_t samples_per_species; /* default 200 */
  uint32_t resolution;          /* square image side, >= 16 (default 64) */
  uint64_t seed;                /* default 0 */
  const char* out_dir;          /* receives images/ and manifest.csv */
} snn_synth_params;

void snn_synth_params_init(snn_synth_params* params);

/* Writes the corpus under params->out_dir. If manifest_path is non-NULL the
 * manifest's path is copied into it (capacity manifest_path_cap, including
 * the terminator). */
snn_status snn_synth_generate(const snn_synth_params* params, char* manifest_path,
                              size_t manifest_path_cap);

/* ---- dataset ------------------------------------------------------------ */

typedef struct snn_dataset snn_dataset;

snn_status snn_dataset_open(const char* manifest_path, snn_dataset** out);

/* Attach precomputed per-sample feature vectors (EMBV file). Every record id
 * must resolve against the manifest. Required before training or evaluating
 * a precomputed-backbone model on this dataset. */
snn_status snn_dataset_attach_embeddings(snn_dataset* dataset, const char* embv_path);

snn_status snn_dataset_stats(const snn_dataset* dataset, uint64_t* n_samples,
                             uint64_t* n_species);

void snn_dataset_close(snn_dataset* dataset);

/* ---- zero-shot split ---------------------------------------------------- */

typedef struct snn_split_params {
  uint64_t min_count;        /* species below this count are unseen (default 1000) */
  double test_frac;          /* per seen species, floor(test_frac*n) to test (default 0.2) */
  double val_frac;           /* of the remaining pool, per species (default 0.2) */
  const char* unseen_prefix; /* species-name prefix forced unseen; NULL/"" disables */
  uint64_t seed;             /* default 0 */
} snn_split_params;

void snn_split_params_init(snn_split_params* params);

typedef struct snn_split snn_split;

snn_status snn_split_make(const snn_dataset* dataset, const snn_split_params* params,
                          snn_split** out);
snn_status snn_split_save(const snn_split* split, const char* path);
snn_status snn_split_load(const char* path, snn_split** out);

typedef struct snn_split_stats {
  uint64_t n_train;
  uint64_t n_validation;
  uint64_t n_test;
  uint64_t n_seen_species;
  uint64_t n_unseen_species;
} snn_split_stats;

snn_status snn_split_get_stats(const snn_split* split, snn_split_stats* out);

void snn_split_free(snn_split* split);

/* ---- training ------------------------------------------------------------ */

typedef enum snn_backbone {
  SNN_BACKBONE_BUILTIN = 0,    /* raw images through the 3-conv stack */
  SNN_BACKBONE_PRECOMPUTED = 1 /* attached feature vectors through the head */
} snn_backbone;

typedef struct snn_train_config {
  uint32_t max_epochs;      /* default 100 */
  uint32_t patience;        /* epochs without validation improvement (default 7) */
  uint32_t batch_size;      /* default 32 */
  double learning_rate;     /* default 1e-3 */
  double margin;            /* contrastive margin (default 1.0) */
  double dropout;           /* drop probability before the head (default 0.2) */
  double pos_ratio;         /* positive share of sampled pairs (default 0.5) */
  uint64_t pairs_per_epoch; /* 0 = 4 * train size, capped at 50000 */
  uint64_t val_pairs;       /* 0 = clamp(2 * validation size, 64, 4096) */
  uint32_t input_size;      /* square input side, builtin backbone (default 64) */
  int32_t backbone;         /* snn_backbone value (default builtin) */
  int32_t normalize;        /* L2-normalize embeddings, 0/1 (default 1) */
  double eval_threshold;    /* threshold for the logged validation F1 (default 0.5) */
  uint64_t seed;            /* default 0 */
} snn_train_config;

void snn_train_config_init(snn_train_config* config);

typedef struct snn_model snn_model;

typedef struct snn_train_summary {
  uint32_t epochs_run;  /* epochs actually executed (early stop included) */
  uint32_t best_epoch;  /* 1-based epoch whose parameters were kept */
  double best_val_loss; /* validation loss at the best epoch */
  double best_val_f1;   /* validation macro F1 at the best epoch */
  double final_train_loss; /* training loss of the last executed epoch */
} snn_train_summary;

/* Train on the split's train partition, early-stopping on validation loss,
 * and return the best-epoch model. log_path (optional) receives the per-epoch
 * CSV log; summary (optional) receives the run digest. */
snn_status snn_train(const snn_dataset* dataset, const snn_split* split,
                     const snn_train_config* config, const char* log_path,
                     snn_model** out, snn_train_summary* summary);

/* ---- model --------------------------------------------------------------- */

snn_status snn_model_save(const snn_model* model, const char* path);
snn_status snn_model_load(const char* path, snn_model** out);
snn_status snn_model_info(const snn_model* model, int32_t* backbone,
                          uint32_t* input_size, int32_t* normalize);
void snn_model_free(snn_model* model);

/* ---- evaluation ----------------------------------------------------------- */

typedef struct snn_metrics {
  double threshold;
  uint64_t tp, fn, fp, tn;
  double macro_precision;
  double macro_recall;
  double macro_f1;
  double accuracy;
} snn_metrics;

/* Draw a balanced pair set from one scope of the split's test partition
 * ("seen", "unseen", or "all"), score it, and report at the threshold.
 * report_path (optional) receives the metrics CSV; pairs_path (optional)
 * receives the drawn pair list. */
snn_status snn_evaluate(const snn_model* model, const snn_dataset* dataset,
                        const snn_split* split, const char* scope, uint64_t n_pairs,
                        double threshold, uint64_t seed, const char* report_path,
                        const char* pairs_path, snn_metrics* out);

/* Score one drawn pair set across the inclusive grid "start:stop:step"
 * (e.g. "0.1:0.9:0.1"). Reports land in out (capacity out_cap); *n_out is
 * the grid size. Pass out == NULL to only write the CSV. */
snn_status snn_sweep(const snn_model* model, const snn_dataset* dataset,
                     const snn_split* split, const char* scope, uint64_t n_pairs,
                     const char* grid, uint64_t seed, const char* report_path,
                     snn_metrics* out, size_t out_cap, size_t* n_out);

/* Per-species-pair macro-F1 grid, written as CSV. Each cell scores a balanced
 * pair sample drawn from one row species and one column species, so the two
 * comma-separated lists must not share a species. Pass both as NULL to use
 * the split's unseen species, divided into two disjoint halves. */
snn_status snn_pair_matrix(const snn_model* model, const snn_dataset* dataset,
                           const snn_split* split, const char* row_species_csv,
                           const char* col_species_csv, uint64_t pairs_per_cell,
                           double threshold, uint64_t seed, const char* out_path);

/* Embed every dataset sample in inference mode and write an EMBV file. */
snn_status snn_export_embeddings(const snn_model* model, const snn_dataset* dataset,
                                 const char* out_path);

/* ---- gradient verification ------------------------------------------------ */

/* Called once per finished check; passed is 0/1. */
typedef void (*snn_gradcheck_report_fn)(const char* name, double max_rel_err,
                                        double tolerance, int passed, void* user);

/* Run the finite-difference suite (every op plus the composed pipeline, in
 * 32-bit and 64-bit modes) with `instances` seeded instances per check.
 * *all_passed is set to 1 iff every check passed. */
snn_status snn_gradcheck(int32_t instances, uint64_t seed,
                         snn_gradcheck_report_fn report, void* user,
                         int32_t* all_passed);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* SNN_H */
