#ifndef HFANOVA_H
#define HFANOVA_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum HfStatus {
  HF_STATUS_OK = 0,
  HF_STATUS_NULL_POINTER = 1,
  HF_STATUS_INVALID_ARGUMENT = 2,
  HF_STATUS_INVALID_DESIGN = 3,
  HF_STATUS_INVALID_HYPOTHESIS = 4,
  HF_STATUS_NUMERIC = 5,
  HF_STATUS_IO = 6,
  HF_STATUS_INGEST = 7,
  HF_STATUS_INTERNAL = 99,
} HfStatus;

typedef enum HfContrast {
  HF_CONTRAST_CENTERING = 0,
  HF_CONTRAST_DUNNETT = 1,
  HF_CONTRAST_TUKEY = 2,
} HfContrast;

/**
 * Opaque dataset handle.
 */
typedef struct HfDataset HfDataset;

/**
 * Opaque hypothesis family handle.
 */
typedef struct HfFamily HfFamily;

/**
 * Opaque mGPH result handle.
 */
typedef struct HfMctResult HfMctResult;

typedef struct HfGlobalTest {
  double statistic;
  double critical_value;
  double p_value;
  bool reject;
} HfGlobalTest;

typedef struct HfMctBlock {
  double statistic;
  double critical_value;
  double adjusted_p;
  bool reject;
} HfMctBlock;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *hf_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *hf_version(void);

/**
 * Builds a dataset of `k` groups on `m` grid points. `values` holds the
 * curves row-major, group 1's `sizes[0]` curves first.
 *
 * # Safety
 * `sizes` must point to `k` values, `grid` to `m`, `values` to
 * `m·Σ sizes`; `out` must be writable.
 */
enum HfStatus hf_dataset_new(size_t k,
                             const size_t *sizes,
                             size_t m,
                             const double *grid,
                             const double *values,
                             struct HfDataset **out);

/**
 * Reads a dataset from a CSV file (header `group,t1,...,tm`).
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum HfStatus hf_dataset_from_csv(const char *path, struct HfDataset **out);

/**
 * # Safety
 * `data` must be NULL or a handle from this library not yet freed.
 */
void hf_dataset_free(struct HfDataset *data);

/**
 * Number of groups, 0 for NULL.
 *
 * # Safety
 * `data` must be NULL or a live handle.
 */
size_t hf_dataset_num_groups(const struct HfDataset *data);

/**
 * Number of grid points, 0 for NULL.
 *
 * # Safety
 * `data` must be NULL or a live handle.
 */
size_t hf_dataset_grid_len(const struct HfDataset *data);

/**
 * Standard contrast family for `k` groups; `kind` is an `HfContrast`.
 *
 * # Safety
 * `out` must be writable.
 */
enum HfStatus hf_family_contrasts(int32_t kind, size_t k, struct HfFamily **out);

/**
 * Family of `num_blocks` blocks; block `l` has `rows[l]` rows of `k`
 * coefficients, all stored row-major one after another in `coefficients`.
 * Blocks are labeled "1", "2", ….
 *
 * # Safety
 * `rows` must point to `num_blocks` values and `coefficients` to
 * `k·Σ rows`; `out` must be writable.
 */
enum HfStatus hf_family_new(size_t num_blocks,
                            const size_t *rows,
                            size_t k,
                            const double *coefficients,
                            struct HfFamily **out);

/**
 * # Safety
 * `family` must be NULL or a live handle.
 */
void hf_family_free(struct HfFamily *family);

/**
 * Number of blocks, 0 for NULL.
 *
 * # Safety
 * `family` must be NULL or a live handle.
 */
size_t hf_family_num_blocks(const struct HfFamily *family);

/**
 * Writes the GPH statistic of every block to `out[0..len]`; `len` must
 * equal the number of blocks.
 *
 * # Safety
 * Handles must be live; `out` must point to `len` writable doubles.
 */
enum HfStatus hf_gph_statistic(const struct HfDataset *data,
                               const struct HfFamily *family,
                               double *out,
                               size_t len);

/**
 * Global parametric bootstrap GPH test; all blocks of `family` are stacked
 * into one hypothesis.
 *
 * # Safety
 * Handles must be live; `out` must be writable.
 */
enum HfStatus hf_global_test(const struct HfDataset *data,
                             const struct HfFamily *family,
                             size_t replicates,
                             double alpha,
                             uint64_t seed,
                             struct HfGlobalTest *out);

/**
 * mGPH multiple contrast test.
 *
 * # Safety
 * Handles must be live; `out` must be writable.
 */
enum HfStatus hf_mct(const struct HfDataset *data,
                     const struct HfFamily *family,
                     size_t replicates,
                     double alpha,
                     uint64_t seed,
                     struct HfMctResult **out);

/**
 * # Safety
 * `result` must be NULL or a live handle.
 */
void hf_mct_free(struct HfMctResult *result);

/**
 * # Safety
 * `result` must be NULL or a live handle.
 */
size_t hf_mct_num_blocks(const struct HfMctResult *result);

/**
 * Calibrated level β̃, NaN for NULL.
 *
 * # Safety
 * `result` must be NULL or a live handle.
 */
double hf_mct_beta_tilde(const struct HfMctResult *result);

/**
 * Whether any block was rejected; false for NULL.
 *
 * # Safety
 * `result` must be NULL or a live handle.
 */
bool hf_mct_global_reject(const struct HfMctResult *result);

/**
 * Decision for block `l`.
 *
 * # Safety
 * `result` must be a live handle; `out` must be writable.
 */
enum HfStatus hf_mct_block(const struct HfMctResult *result, size_t l, struct HfMctBlock *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HFANOVA_H */
