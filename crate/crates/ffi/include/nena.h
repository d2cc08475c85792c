#ifndef NENA_H
#define NENA_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum NenaCondition {
  NENA_CONDITION_FEEDBACK = 0,
  NENA_CONDITION_NO_FEEDBACK = 1,
} NenaCondition;

typedef enum NenaNetworkKind {
  // Undirected co-occurrence within an epoch.
  NENA_NETWORK_KIND_SYMMETRIC = 0,
  // Directed from the preceding window to the current epoch.
  NENA_NETWORK_KIND_DIRECTED = 1,
} NenaNetworkKind;

typedef enum NenaNormalization {
  NENA_NORMALIZATION_EPOCH_COUNT = 0,
  NENA_NORMALIZATION_ENTRY_SUM = 1,
} NenaNormalization;

// Result code of every fallible call.
typedef enum NenaStatus {
  NENA_STATUS_OK = 0,
  NENA_STATUS_NULL_POINTER = 1,
  NENA_STATUS_INVALID_ARGUMENT = 2,
  // Bad or unreadable input data.
  NENA_STATUS_INPUT_ERROR = 3,
  // A numerical routine failed (non-convergence, degenerate statistics).
  NENA_STATUS_NUMERICAL_ERROR = 4,
  // The pipeline finished but skipped some participants.
  NENA_STATUS_PARTIAL = 5,
  NENA_STATUS_PANIC = 6,
} NenaStatus;

// Accumulated network of one unit.
typedef struct NenaNetwork NenaNetwork;

// Joint two-dimensional projection of several networks.
typedef struct NenaProjection NenaProjection;

// Summary of one sample group.
typedef struct NenaGroupSummary {
  double mean;
  double sd;
  size_t n;
} NenaGroupSummary;

// Welch two-sample t-test result. `cohens_d` is NaN when the pooled SD is zero.
typedef struct NenaTestReport {
  struct NenaGroupSummary first;
  struct NenaGroupSummary second;
  double t_statistic;
  double degrees_of_freedom;
  double p_value;
  double cohens_d;
  bool significant;
} NenaTestReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the calling thread's last error message into `buf` (NUL-terminated,
// truncated to `len` bytes) and returns the full message length excluding
// the terminator; 0 when there is no error. Pass `buf = NULL` to query the
// length.
size_t nena_last_error_message(char *buf, size_t len);

// Library version as a static NUL-terminated string.
const char *nena_version(void);

// Fraction of 1–50 Hz power in each of the five bands (delta, theta, alpha,
// beta, gamma) for one channel of one epoch, estimated with Welch's method
// (3 half-overlapping segments). Writes 5 values to `shares_out`.
enum NenaStatus nena_band_shares(const double *samples,
                                 size_t len,
                                 double sample_rate,
                                 double *shares_out);

// Builds a unit network from `n_epochs` consecutive code vectors given as a
// row-major `n_epochs × 7` byte matrix (non-zero = present; column order
// delta, theta, alpha, beta, gamma, correct, incorrect). `window` is the
// directed window length and is ignored for symmetric networks.
enum NenaStatus nena_network_build(enum NenaNetworkKind kind,
                                   const char *participant,
                                   enum NenaCondition condition,
                                   const uint8_t *codes,
                                   size_t n_epochs,
                                   size_t window,
                                   struct NenaNetwork **out);

// Raw count at row `from`, column `to` (code indices 0..7).
enum NenaStatus nena_network_weight(const struct NenaNetwork *network,
                                    size_t from,
                                    size_t to,
                                    double *weight_out);

// Number of epochs (symmetric) or windows (directed) accumulated.
enum NenaStatus nena_network_update_count(const struct NenaNetwork *network, uint64_t *count_out);

void nena_network_free(struct NenaNetwork *network);

// Jointly projects `count` networks of the same kind (at least 3). The
// networks are only read; the caller keeps ownership.
enum NenaStatus nena_projection_fit(const struct NenaNetwork *const *networks,
                                    size_t count,
                                    enum NenaNormalization normalization,
                                    struct NenaProjection **out);

// Coordinates of the `index`-th input network; writes 2 values.
enum NenaStatus nena_projection_point(const struct NenaProjection *projection,
                                      size_t index,
                                      double *xy_out);

// Fraction of variance explained by the two axes; writes 2 values.
enum NenaStatus nena_projection_variance(const struct NenaProjection *projection, double *out);

void nena_projection_free(struct NenaProjection *projection);

// Welch two-sample t-test (two-sided) of `a` against `b`.
enum NenaStatus nena_welch_t_test(const double *a,
                                  size_t n_a,
                                  const double *b,
                                  size_t n_b,
                                  double alpha,
                                  struct NenaTestReport *report_out);

// Cohen's d of `a` relative to `b` with the pooled standard deviation.
enum NenaStatus nena_cohens_d(const double *a,
                              size_t n_a,
                              const double *b,
                              size_t n_b,
                              double *d_out);

// Runs the whole pipeline on a cohort manifest (`participant,eeg,trials`),
// writing every export into `out_dir`. `config_path` may be NULL for the
// built-in defaults; `seed` overrides the configured seed. Returns
// `NENA_STATUS_PARTIAL` when participants were skipped (`keep_going`).
enum NenaStatus nena_run_pipeline(const char *cohort_path,
                                  const char *out_dir,
                                  const char *config_path,
                                  uint64_t seed,
                                  bool keep_going);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NENA_H */
