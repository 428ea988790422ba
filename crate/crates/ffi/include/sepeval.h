#ifndef SEPEVAL_H
#define SEPEVAL_H

/* Generated by cbindgen from crates/ffi/src. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum SepStatus {
  SEP_STATUS_OK = 0,
  SEP_STATUS_NULL_POINTER = 1,
  SEP_STATUS_INVALID_INPUT = 2,
  SEP_STATUS_INVALID_UTF8 = 3,
  SEP_STATUS_PARSE = 4,
  SEP_STATUS_IO = 5,
  SEP_STATUS_INTERNAL = 6,
  SEP_STATUS_PANIC = 7,
} SepStatus;

// Threshold bucket of a confidence value.
typedef enum SepCategory {
  SEP_CATEGORY_ID_BACKGROUND = 0,
  SEP_CATEGORY_OOD = 1,
  SEP_CATEGORY_ID_FOREGROUND = 2,
} SepCategory;

// Ground-truth kind for `sep_dataset_add_ground_truth`.
typedef enum SepObjectKind {
  SEP_OBJECT_KIND_FOREGROUND = 0,
  SEP_OBJECT_KIND_OOD = 1,
} SepObjectKind;

// Opaque dataset handle.
typedef struct SepDataset SepDataset;

typedef struct SepEvalOptions {
  double t_id_bg;
  double t_id_fg;
  double overlap_threshold;
  bool iop_for_ood;
  double beta;
  double tpr_target;
  // 0 uses the global thread pool.
  size_t workers;
} SepEvalOptions;

// The tracked cells of the extended confusion matrix (TN is not tracked).
typedef struct SepMatrix {
  uint64_t tp;
  uint64_t fn_;
  uint64_t fp;
  uint64_t to;
  uint64_t fn_o;
  uint64_t fo_n;
  uint64_t fo_p;
  uint64_t fp_o;
} SepMatrix;

typedef struct SepScores {
  double obs;
  double ofs;
  double s;
} SepScores;

// Threshold-independent metrics are NaN when undefined.
typedef struct SepEvalSummary {
  struct SepMatrix matrix;
  struct SepScores scores;
  double map;
  double auroc;
  double fpr_at_tpr;
} SepEvalSummary;

typedef struct SepOperatingPoint {
  double t_id_bg;
  double t_id_fg;
  struct SepScores scores;
} SepOperatingPoint;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL. The pointer
// stays valid until the next failing call on the same thread.
const char *sep_last_error(void);

// Release a string returned by this library. NULL is ignored.
void sep_string_free(char *s);

// Defaults: thresholds 0.39 / 0.42, IoU 0.5 without IoP, β = 1, TPR 0.95.
struct SepEvalOptions sep_eval_options_default(void);

enum SepStatus sep_classify(double confidence,
                            double t_id_bg,
                            double t_id_fg,
                            enum SepCategory *out);

// F-beta style combination of OBS and OFS.
enum SepStatus sep_separability(double obs, double ofs, double beta, double *out);

// Cell-wise sum of two matrices.
enum SepStatus sep_matrix_merge(const struct SepMatrix *a,
                                const struct SepMatrix *b,
                                struct SepMatrix *out);

enum SepStatus sep_matrix_scores(const struct SepMatrix *m, double beta, struct SepScores *out);

// Shannon entropy in nats of one probability vector.
enum SepStatus sep_entropy(const double *probs, size_t len, double *out);

// Entropy-margin loss over row-major `n × n_classes` probability matrices.
enum SepStatus sep_me_loss(const double *fg_probs,
                           size_t n_fg,
                           const double *ood_probs,
                           size_t n_ood,
                           size_t n_classes,
                           double margin,
                           double *out);

// New empty dataset; NULL when `n_classes` is 0.
struct SepDataset *sep_dataset_new(size_t n_classes);

// Release a dataset. NULL is ignored.
void sep_dataset_free(struct SepDataset *ds);

// Load JSON-lines ground truth and predictions from two files.
enum SepStatus sep_dataset_load_jsonl(const char *gt_path,
                                      const char *pred_path,
                                      struct SepDataset **out);

size_t sep_dataset_n_classes(const struct SepDataset *ds);

// `bbox` points to `[x1, y1, x2, y2]`; `class_id` is ignored for OOD objects.
enum SepStatus sep_dataset_add_ground_truth(struct SepDataset *ds,
                                            const char *image_id,
                                            const double *bbox,
                                            enum SepObjectKind kind,
                                            size_t class_id);

// `scores` must hold exactly `n_classes` values in `[0, 1]`.
enum SepStatus sep_dataset_add_prediction(struct SepDataset *ds,
                                          const char *image_id,
                                          const double *bbox,
                                          const double *scores,
                                          size_t n_scores);

// Evaluate at one operating point. `opts` may be NULL for the defaults.
enum SepStatus sep_dataset_evaluate(const struct SepDataset *ds,
                                    const struct SepEvalOptions *opts,
                                    struct SepEvalSummary *out);

// Full report as a JSON string; release with `sep_string_free`.
enum SepStatus sep_dataset_report_json(const struct SepDataset *ds,
                                       const struct SepEvalOptions *opts,
                                       char **out);

// Best `(t_id_bg, t_id_fg)` on a grid of spacing `step`. Matching and β
// come from `opts` (NULL for defaults); its thresholds are ignored.
enum SepStatus sep_dataset_sweep(const struct SepDataset *ds,
                                 const struct SepEvalOptions *opts,
                                 double step,
                                 struct SepOperatingPoint *out);

// Confidence histogram as CSV; release with `sep_string_free`.
enum SepStatus sep_dataset_histogram_csv(const struct SepDataset *ds,
                                         const struct SepEvalOptions *opts,
                                         char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SEPEVAL_H */
