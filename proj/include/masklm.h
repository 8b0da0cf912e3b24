#ifndef MASKLM_H
#define MASKLM_H

/* C interface to the masked-training engine. Every object is an opaque
 * handle created by the library and released with the matching _free call.
 * Functions return MLM_OK or an error code; mlm_last_error() holds a
 * human-readable message for the calling thread's most recent failure.
 * Pointer arguments are borrowed unless a function documents otherwise. */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define MLM_API __declspec(dllexport)
#else
#define MLM_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum mlm_status {
    MLM_OK = 0,
    MLM_EINVAL = 1,   /* bad arguments, shapes, plans, ranges */
    MLM_EIO = 2,      /* filesystem failures */
    MLM_EFORMAT = 3,  /* malformed artifact or dataset files */
    MLM_EINTERNAL = 4 /* bugs and numeric error states */
} mlm_status;

MLM_API const char* mlm_last_error(void);
MLM_API const char* mlm_version(void);

typedef struct mlm_model mlm_model;
typedef struct mlm_dataset mlm_dataset;
typedef struct mlm_report mlm_report;

/* ---- configuration ---- */

typedef struct mlm_arch {
    int64_t num_blocks;
    int64_t hidden;
    int64_t feed_forward;
    int64_t heads;
    int64_t vocab_size;
    int64_t max_len;
    int64_t num_labels;
    int64_t type_vocab;
} mlm_arch;

/* the compact encoder every desk-scale experiment here uses */
MLM_API void mlm_arch_default(mlm_arch* out);

typedef struct mlm_mask_init {
    uint64_t seed;
    float init_sparsity;  /* fraction of weights starting masked out */
    float init_halfwidth; /* spread of scores around the threshold */
    float tau;            /* binarization threshold */
} mlm_mask_init;

MLM_API void mlm_mask_init_default(mlm_mask_init* out);

#define MLM_REGIME_FINETUNE 0
#define MLM_REGIME_MASK 1

typedef struct mlm_train_config {
    int32_t regime; /* MLM_REGIME_FINETUNE or MLM_REGIME_MASK */
    float lr;
    int64_t batch_size;
    int64_t max_epochs;
    int64_t early_stop_patience;
    uint64_t seed;
    /* mask regime only */
    mlm_mask_init mask_init;
    const int64_t* mask_blocks; /* encoder block indices; borrowed */
    size_t num_mask_blocks;
    int32_t mask_pooler;
    int32_t mask_classifier;
} mlm_train_config;

MLM_API void mlm_train_config_default(mlm_train_config* out);

/* ---- models ---- */

MLM_API mlm_status mlm_model_init(const mlm_arch* arch, uint64_t seed, mlm_model** out);
MLM_API mlm_status mlm_model_clone(const mlm_model* m, mlm_model** out);
/* folds any masks into the weights: a dense, frozen copy */
MLM_API mlm_status mlm_model_materialize(const mlm_model* m, mlm_model** out);
MLM_API void mlm_model_free(mlm_model* m);
MLM_API mlm_status mlm_model_arch(const mlm_model* m, mlm_arch* out);
/* 1 when any layer carries a selection mask, 0 otherwise, -1 on null */
MLM_API int32_t mlm_model_is_masked(const mlm_model* m);
/* provenance labels carried since init/load; never NULL for a live handle */
MLM_API const char* mlm_model_regime(const mlm_model* m);
MLM_API uint64_t mlm_model_seed(const mlm_model* m);

/* dense checkpoint files; regime/note may be NULL to keep the stored ones */
MLM_API mlm_status mlm_model_save(const mlm_model* m, const char* path, const char* regime,
                                  const char* note);
MLM_API mlm_status mlm_model_load(const char* path, mlm_model** out);

/* ---- datasets ---- */

MLM_API mlm_status mlm_dataset_corpus(uint64_t seed, int64_t vocab_size, int64_t num_seq, int64_t len,
                                      mlm_dataset** out);
MLM_API mlm_status mlm_dataset_classification(uint64_t seed, int64_t vocab_size, int64_t num_labels,
                                              int64_t per_split, int64_t len, int64_t variant,
                                              mlm_dataset** out);
MLM_API mlm_status mlm_dataset_tagging(uint64_t seed, int64_t vocab_size, int64_t num_labels,
                                       int64_t per_split, int64_t len, int64_t variant,
                                       mlm_dataset** out);
MLM_API mlm_status mlm_dataset_save(const mlm_dataset* d, const char* dir);
MLM_API mlm_status mlm_dataset_load(const char* dir, mlm_dataset** out);
MLM_API void mlm_dataset_free(mlm_dataset* d);
/* "classification", "tagging" or "mlm-corpus"; NULL on null handle */
MLM_API const char* mlm_dataset_kind(const mlm_dataset* d);
MLM_API int64_t mlm_dataset_num_labels(const mlm_dataset* d);
/* token id space the dataset was generated against; -1 on null handle */
MLM_API int64_t mlm_dataset_vocab_size(const mlm_dataset* d);
/* split is "train", "dev" or "test"; -1 on error */
MLM_API int64_t mlm_dataset_split_count(const mlm_dataset* d, const char* split);

/* ---- training and evaluation ---- */

typedef struct mlm_train_result {
    double best_dev_value; /* primary dev metric at the restored epoch */
    int64_t best_epoch;
    int64_t steps;
    double wall_seconds; /* for console display; reports never include it */
} mlm_train_result;

/* masked-language-model pretraining over a corpus dataset */
MLM_API mlm_status mlm_pretrain(mlm_model* m, const mlm_dataset* corpus, const mlm_train_config* cfg,
                                mlm_train_result* result, mlm_report** report);

/* finetune or mask-train on a labeled task, per cfg->regime */
MLM_API mlm_status mlm_train(mlm_model* m, const mlm_dataset* task, const mlm_train_config* cfg,
                             mlm_train_result* result, mlm_report** report);

/* loss/metric over one split; any out pointer may be NULL */
MLM_API mlm_status mlm_evaluate(mlm_model* m, const mlm_dataset* task, const char* split,
                                int64_t batch_size, double* loss, double* metric_value,
                                mlm_report** report);

/* the standard search lattice for a regime; returns the count written */
MLM_API size_t mlm_lr_grid(int32_t regime, float* out, size_t cap);

/* trains a fresh clone of base per learning rate and keeps the best dev
 * value; the grid extends past a winning border point automatically */
MLM_API mlm_status mlm_grid_search(const mlm_model* base, const mlm_dataset* task,
                                   const mlm_train_config* cfg, const float* lrs, size_t num_lrs,
                                   float* best_lr, double* best_value, int32_t* capped,
                                   mlm_report** report);

/* ---- mask artifacts ---- */

/* writes the model's binarized masks + frozen classifier as one file */
MLM_API mlm_status mlm_mask_save(const mlm_model* m, const mlm_train_config* cfg, double dev_metric,
                                 const char* metric_name, const char* path);
/* dense backbone + mask file -> frozen task model, masks folded in */
MLM_API mlm_status mlm_mask_apply(const mlm_model* backbone, const char* mask_path, mlm_model** out);
/* per-layer density and drift from the stored initialization recipe */
MLM_API mlm_status mlm_mask_stats(const char* mask_path, mlm_report** out);
/* fraction of weights kept by exactly one of two masks, over weights either
 * run moved; both files must cover the same layers */
MLM_API mlm_status mlm_mask_dissimilarity(const char* path_a, const char* path_b, double* pooled,
                                          mlm_report** out);

/* ---- analysis ---- */

/* bit-exact storage accounting for serving many tasks from one backbone */
MLM_API mlm_status mlm_memory_report(const mlm_arch* arch, const int64_t* mask_blocks,
                                     size_t num_mask_blocks, int32_t mask_pooler,
                                     int32_t mask_classifier, const char* const* task_names,
                                     const int64_t* task_labels, size_t num_tasks, mlm_report** out);

/* mode is "labels", "logits" or "probs" */
MLM_API mlm_status mlm_ensemble_accuracy(mlm_model* const* models, size_t num_models,
                                         const mlm_dataset* task, const char* split, const char* mode,
                                         int64_t batch_size, double* accuracy);

/* evaluates evenly spaced interpolations between two dense models */
MLM_API mlm_status mlm_connect_linear(const mlm_model* a, const mlm_model* b, const char* label_a,
                                      const char* label_b, const mlm_dataset* task, const char* split,
                                      int64_t points, int64_t batch_size, mlm_report** out);

/* trains the bends of a polynomial curve between two frozen endpoints,
 * then evaluates along it; both reports are optional outs */
MLM_API mlm_status mlm_connect_bezier(const mlm_model* a, const mlm_model* b, const char* label_a,
                                      const char* label_b, const mlm_dataset* task,
                                      const mlm_train_config* cfg, int64_t bends, int64_t points,
                                      int64_t batch_size, mlm_report** train_report,
                                      mlm_report** path_report);

/* one "label\tf0..fH" line per example: the encoder's pooled position */
MLM_API mlm_status mlm_dump_embeddings(mlm_model* m, const mlm_dataset* task, const char* split,
                                       const char* path, int64_t batch_size);

/* ---- reports ---- */

MLM_API mlm_status mlm_report_new(mlm_report** out);
MLM_API mlm_status mlm_report_put(mlm_report* r, const char* key, const char* value);
MLM_API mlm_status mlm_report_put_i64(mlm_report* r, const char* key, int64_t value);
MLM_API mlm_status mlm_report_put_f64(mlm_report* r, const char* key, double value);
MLM_API mlm_status mlm_report_add_table(mlm_report* r, const char* name, const char* const* columns,
                                        size_t num_columns);
MLM_API mlm_status mlm_report_add_row(mlm_report* r, const char* table, const char* const* cells,
                                      size_t num_cells);
/* rendered text; free with mlm_string_free */
MLM_API mlm_status mlm_report_render(const mlm_report* r, char** out);
MLM_API mlm_status mlm_report_save(const mlm_report* r, const char* path);
MLM_API void mlm_report_free(mlm_report* r);
MLM_API void mlm_string_free(char* s);

/* the number formatting every report uses, for matching output elsewhere;
 * the float variant avoids widening noise on float-valued knobs */
MLM_API mlm_status mlm_format_double(double v, char* buf, size_t cap);
MLM_API mlm_status mlm_format_float(float v, char* buf, size_t cap);

#ifdef __cplusplus
}
#endif

#endif /* MASKLM_H */
