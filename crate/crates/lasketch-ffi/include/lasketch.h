#ifndef LASKETCH_H
#define LASKETCH_H

/* Generated from the Rust sources by cbindgen; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of a fallible call.
 */
typedef enum LskStatus {
  LSK_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  LSK_STATUS_NULL_ARGUMENT = 1,
  /**
   * A size, threshold or constant was out of range.
   */
  LSK_STATUS_INVALID_ARGUMENT = 2,
  /**
   * A row or query vector had the wrong length.
   */
  LSK_STATUS_DIMENSION_MISMATCH = 3,
  /**
   * A value was NaN or infinite.
   */
  LSK_STATUS_NON_FINITE = 4,
  /**
   * An input matrix did not have full column rank / orthonormal columns.
   */
  LSK_STATUS_RANK_DEFICIENT = 5,
  /**
   * The output buffer was too small.
   */
  LSK_STATUS_BUFFER_TOO_SMALL = 6,
} LskStatus;

typedef struct LskCountSketch LskCountSketch;

typedef struct LskFrequentDirections LskFrequentDirections;

typedef struct LskLearnedFd LskLearnedFd;

typedef struct LskLearnedMisraGries LskLearnedMisraGries;

typedef struct LskMisraGries LskMisraGries;

typedef struct LskRobustLfd LskRobustLfd;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string; never freed.
 */
const char *lsk_version(void);

/**
 * Creates a counter summary with `capacity` buckets and eviction threshold
 * `threshold` (pass `threshold == capacity` for the common configuration).
 * Returns null on invalid parameters.
 */
struct LskMisraGries *lsk_mg_new(size_t capacity, size_t threshold);

/**
 * # Safety
 * `handle` must come from [`lsk_mg_new`] and not have been freed.
 */
void lsk_mg_free(struct LskMisraGries *handle);

/**
 * # Safety
 * `handle` must be a live handle from [`lsk_mg_new`].
 */
enum LskStatus lsk_mg_update(struct LskMisraGries *handle, uint64_t item);

/**
 * Estimated frequency; zero for absent elements or a null handle.
 *
 * # Safety
 * `handle` must be a live handle from [`lsk_mg_new`] or null.
 */
uint64_t lsk_mg_estimate(const struct LskMisraGries *handle, uint64_t item);

/**
 * Memory footprint in words (two per bucket).
 *
 * # Safety
 * `handle` must be a live handle from [`lsk_mg_new`] or null.
 */
uint64_t lsk_mg_space_words(const struct LskMisraGries *handle);

/**
 * Creates a learned summary: the `ids_len` elements at `ids` are counted
 * exactly, everything else goes to an inner summary of `inner_capacity`
 * buckets. Returns null on invalid parameters or duplicate ids.
 *
 * # Safety
 * `ids` must point to `ids_len` readable `uint64_t`s.
 */
struct LskLearnedMisraGries *lsk_lmg_new(const uint64_t *ids,
                                         size_t ids_len,
                                         size_t inner_capacity);

/**
 * # Safety
 * `handle` must come from [`lsk_lmg_new`] and not have been freed.
 */
void lsk_lmg_free(struct LskLearnedMisraGries *handle);

/**
 * # Safety
 * `handle` must be a live handle from [`lsk_lmg_new`].
 */
enum LskStatus lsk_lmg_update(struct LskLearnedMisraGries *handle, uint64_t item);

/**
 * # Safety
 * `handle` must be a live handle from [`lsk_lmg_new`] or null.
 */
double lsk_lmg_estimate(const struct LskLearnedMisraGries *handle, uint64_t item);

/**
 * Creates a signed counter table with `rows × width` cells. Pass a
 * negative `truncate_c` for the plain median estimator; a non-negative
 * value floors estimates below `truncate_c·n/width` to zero.
 */
struct LskCountSketch *lsk_cs_new(size_t rows, size_t width, uint64_t seed, double truncate_c);

/**
 * # Safety
 * `handle` must come from [`lsk_cs_new`] and not have been freed.
 */
void lsk_cs_free(struct LskCountSketch *handle);

/**
 * # Safety
 * `handle` must be a live handle from [`lsk_cs_new`].
 */
enum LskStatus lsk_cs_update(struct LskCountSketch *handle, uint64_t item);

/**
 * # Safety
 * `handle` must be a live handle from [`lsk_cs_new`] or null.
 */
double lsk_cs_estimate(const struct LskCountSketch *handle, uint64_t item);

/**
 * Creates a matrix sketch with `ell` row slots, shrink threshold `tau`
 * (`1 ≤ tau ≤ ell`) and row dimension `dim`. Returns null on invalid
 * parameters.
 */
struct LskFrequentDirections *lsk_fd_new(size_t ell, size_t tau, size_t dim);

/**
 * # Safety
 * `handle` must come from [`lsk_fd_new`] and not have been freed.
 */
void lsk_fd_free(struct LskFrequentDirections *handle);

/**
 * Appends one row of length `len` (must equal the sketch dimension).
 *
 * # Safety
 * `handle` must be live; `row` must point to `len` readable doubles.
 */
enum LskStatus lsk_fd_update(struct LskFrequentDirections *handle, const double *row, size_t len);

/**
 * Direction-frequency estimate `‖Bx‖²` written to `out`.
 *
 * # Safety
 * `handle` must be live; `x` must point to `len` readable doubles; `out`
 * must be writable.
 */
enum LskStatus lsk_fd_query(const struct LskFrequentDirections *handle,
                            const double *x,
                            size_t len,
                            double *out);

/**
 * Number of (nonzero) rows the sketch currently holds.
 *
 * # Safety
 * `handle` must be a live handle from [`lsk_fd_new`] or null.
 */
size_t lsk_fd_result_rows(const struct LskFrequentDirections *handle);

/**
 * Copies the current sketch rows (row-major, `rows × dim` doubles) into
 * `out`; `out_len` is the buffer capacity in doubles.
 *
 * # Safety
 * `handle` must be live; `out` must point to `out_len` writable doubles.
 */
enum LskStatus lsk_fd_result_copy(const struct LskFrequentDirections *handle,
                                  double *out,
                                  size_t out_len);

/**
 * Creates a learned matrix sketch with `m` row slots from a row-major
 * `dim × k_h` matrix of orthonormal predicted directions (entry `(i, j)` at
 * `predictions[i*k_h + j]`). Requires `2·k_h < m`. Returns null on invalid
 * input.
 *
 * # Safety
 * `predictions` must point to `dim·k_h` readable doubles.
 */
struct LskLearnedFd *lsk_lfd_new(const double *predictions, size_t dim, size_t k_h, size_t m);

/**
 * # Safety
 * `handle` must come from [`lsk_lfd_new`] and not have been freed.
 */
void lsk_lfd_free(struct LskLearnedFd *handle);

/**
 * # Safety
 * `handle` must be live; `row` must point to `len` readable doubles.
 */
enum LskStatus lsk_lfd_update(struct LskLearnedFd *handle, const double *row, size_t len);

/**
 * # Safety
 * `handle` must be live; `x` must point to `len` readable doubles; `out`
 * must be writable.
 */
enum LskStatus lsk_lfd_query(const struct LskLearnedFd *handle,
                             const double *x,
                             size_t len,
                             double *out);

/**
 * Creates the gated robust sketch (plain + learned + residual estimator)
 * from the same prediction layout as [`lsk_lfd_new`].
 *
 * # Safety
 * `predictions` must point to `dim·k_h` readable doubles.
 */
struct LskRobustLfd *lsk_rlfd_new(const double *predictions, size_t dim, size_t k_h, size_t m);

/**
 * # Safety
 * `handle` must come from [`lsk_rlfd_new`] and not have been freed.
 */
void lsk_rlfd_free(struct LskRobustLfd *handle);

/**
 * # Safety
 * `handle` must be live; `row` must point to `len` readable doubles.
 */
enum LskStatus lsk_rlfd_update(struct LskRobustLfd *handle, const double *row, size_t len);

/**
 * Gated direction-frequency estimate for a unit vector `x`.
 *
 * # Safety
 * `handle` must be live; `x` must point to `len` readable doubles; `out`
 * must be writable.
 */
enum LskStatus lsk_rlfd_query(const struct LskRobustLfd *handle,
                              const double *x,
                              size_t len,
                              double *out);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* LASKETCH_H */
