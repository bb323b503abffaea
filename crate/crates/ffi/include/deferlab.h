#ifndef DEFERLAB_H
#define DEFERLAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DlMilpStatus {
  DL_MILP_STATUS_PROVEN_OPTIMAL = 0,
  DL_MILP_STATUS_TIME_LIMIT_INCUMBENT = 1,
  DL_MILP_STATUS_INFEASIBLE = 2,
} DlMilpStatus;

typedef enum DlStatus {
  DL_STATUS_OK = 0,
  DL_STATUS_NULL_POINTER = 1,
  DL_STATUS_INVALID_ARGUMENT = 2,
  DL_STATUS_DIMENSION_MISMATCH = 3,
  DL_STATUS_PARSE = 4,
  DL_STATUS_IO = 5,
  DL_STATUS_SOLVER = 6,
  DL_STATUS_DIVERGED = 7,
  DL_STATUS_INTERNAL = 8,
  DL_STATUS_PANIC = 9,
} DlStatus;

/**
 * Opaque dataset handle.
 */
typedef struct DlDataset DlDataset;

/**
 * Opaque handle to a halfspace pair or a trained system.
 */
typedef struct DlModel DlModel;

/**
 * Accuracy breakdown of a system on a dataset. Conditional accuracies are
 * NaN when their subset is empty.
 */
typedef struct DlReport {
  double system_accuracy;
  double coverage;
  double classifier_accuracy_nondeferred;
  double human_accuracy_deferred;
  size_t n_points;
} DlReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *dl_version(void);

/**
 * Copies the calling thread's last error message into `buf` (truncated and
 * NUL-terminated) and returns the buffer size the full message needs,
 * including the terminator. Returns 0 when there is no error.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t dl_last_error_message(char *buf, size_t len);

/**
 * Builds a dataset from row-major `features` (`n * d` values), labels and
 * human predictions (`n` each).
 *
 * # Safety
 * Array arguments must point to the stated number of elements.
 */
enum DlStatus dl_dataset_new(const double *features,
                             size_t n,
                             size_t d,
                             const size_t *labels,
                             const size_t *human,
                             size_t num_classes,
                             struct DlDataset **out);

/**
 * Reads a `x0,...,y,h` CSV file. `num_classes` of 0 infers the count.
 *
 * # Safety
 * `path` must be a NUL-terminated string.
 */
enum DlStatus dl_dataset_read_csv(const char *path, size_t num_classes, struct DlDataset **out);

/**
 * Draws a synthetic binary instance over a Gaussian mixture with
 * `components` components in `[0, 1]^d`. `train` receives the `n` training
 * points, `test` (if non-null) `test_size` held-out points, and `planted`
 * (if non-null) the planted pair.
 *
 * # Safety
 * Output pointers must be null (where optional) or valid for writes.
 */
enum DlStatus dl_synthetic_generate(size_t d,
                                    size_t n,
                                    size_t components,
                                    double p_m,
                                    double p_h0,
                                    double p_h1,
                                    uint64_t seed,
                                    size_t test_size,
                                    struct DlDataset **train,
                                    struct DlDataset **test,
                                    struct DlModel **planted);

/**
 * Number of points, or 0 for a null handle.
 *
 * # Safety
 * `ds` must be null or a live dataset handle.
 */
size_t dl_dataset_len(const struct DlDataset *ds);

/**
 * Feature dimension, or 0 for a null handle.
 *
 * # Safety
 * `ds` must be null or a live dataset handle.
 */
size_t dl_dataset_dim(const struct DlDataset *ds);

/**
 * Class count, or 0 for a null handle.
 *
 * # Safety
 * `ds` must be null or a live dataset handle.
 */
size_t dl_dataset_num_classes(const struct DlDataset *ds);

/**
 * # Safety
 * `ds` must be null or a handle not yet freed.
 */
void dl_dataset_free(struct DlDataset *ds);

/**
 * Solves the mixed-integer program on `train` with default margin and box.
 * `time_limit_s <= 0` runs to proven optimality. An infeasible program
 * returns `DL_STATUS_SOLVER` and leaves `out` untouched.
 *
 * # Safety
 * `train` must be a live handle; `out` valid for writes; `status` null or
 * valid for writes.
 */
enum DlStatus dl_milp_solve(const struct DlDataset *train,
                            double time_limit_s,
                            uint64_t seed,
                            struct DlModel **out,
                            enum DlMilpStatus *status);

/**
 * Trains `method` (`rs`, `ce`, `ova`, `moe`, `confidence`, `selective`,
 * `triage`, ...) with default settings. `epochs` of 0 keeps the default.
 *
 * # Safety
 * `train` and `val` must be live handles and `method` NUL-terminated.
 */
enum DlStatus dl_train(const struct DlDataset *train,
                       const struct DlDataset *val,
                       const char *method,
                       size_t epochs,
                       uint64_t seed,
                       struct DlModel **out);

/**
 * Loads a pair or trained system file.
 *
 * # Safety
 * `path` must be NUL-terminated and `out` valid for writes.
 */
enum DlStatus dl_model_read(const char *path, struct DlModel **out);

/**
 * Writes `model` in the format [`dl_model_read`] accepts.
 *
 * # Safety
 * `model` must be a live handle and `path` NUL-terminated.
 */
enum DlStatus dl_model_write(const struct DlModel *model, const char *path);

/**
 * Input dimension the model expects, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t dl_model_dim(const struct DlModel *model);

/**
 * Decides a single point `x` of length `d`: `*deferred` becomes 1 when the
 * point goes to the human, and `*label` holds the classifier's label.
 *
 * # Safety
 * `x` must point to `d` values; output pointers must be valid for writes.
 */
enum DlStatus dl_model_decide(const struct DlModel *model,
                              const double *x,
                              size_t d,
                              int32_t *deferred,
                              size_t *label);

/**
 * Evaluates `model` on `ds`.
 *
 * # Safety
 * Handles must be live and `out` valid for writes.
 */
enum DlStatus dl_evaluate(const struct DlModel *model,
                          const struct DlDataset *ds,
                          struct DlReport *out);

/**
 * # Safety
 * `model` must be null or a handle not yet freed.
 */
void dl_model_free(struct DlModel *model);

/**
 * Upper bound on the population system loss of a halfspace pair with
 * weight norms `k_m`, `k_r` in dimension `d` trained on `n` points.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum DlStatus dl_generalization_bound(double train_loss,
                                      double k_m,
                                      double k_r,
                                      size_t d,
                                      size_t n,
                                      double human_error_rate,
                                      double delta,
                                      double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DEFERLAB_H */
