#ifndef ICAN_H
#define ICAN_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum IcanStatus {
  ICAN_STATUS_OK = 0,
  ICAN_STATUS_NULL_POINTER = 1,
  ICAN_STATUS_INVALID_ARGUMENT = 2,
  ICAN_STATUS_DATA_ERROR = 3,
  ICAN_STATUS_NUMERICAL_ERROR = 4,
  ICAN_STATUS_IO_ERROR = 5,
  ICAN_STATUS_PANIC = 6,
} IcanStatus;

typedef enum IcanDataset {
  ICAN_DATASET_SECTION3 = 0,
  ICAN_DATASET_DATASET1 = 1,
  ICAN_DATASET_DATASET2 = 2,
  ICAN_DATASET_DATASET3 = 3,
} IcanDataset;

typedef enum IcanPValueMethod {
  ICAN_P_VALUE_METHOD_GAMMA = 0,
  ICAN_P_VALUE_METHOD_PERMUTATION = 1,
} IcanPValueMethod;

typedef enum IcanDecision {
  ICAN_DECISION_X_TO_Y = 0,
  ICAN_DECISION_Y_TO_X = 1,
  ICAN_DECISION_CONFOUNDER = 2,
  ICAN_DECISION_NO_CAN_FIT = 3,
} IcanDecision;

// Opaque fit result.
typedef struct IcanFit IcanFit;

// Opaque paired sample.
typedef struct IcanSample IcanSample;

// Plain-data run configuration; start from `ican_config_default`.
typedef struct IcanConfig {
  double alpha;
  size_t max_iterations;
  size_t eval_budget;
  double ratio_low;
  double ratio_high;
  uint64_t seed;
} IcanConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the last error message of this thread into `buf` (NUL-terminated,
// truncated to `len`). Returns the full message length without the NUL.
//
// # Safety
// `buf` must be null or writable for `len` bytes.
size_t ican_last_error_message(char *buf, size_t len);

// Library version as a static NUL-terminated string.
const char *ican_version(void);

struct IcanConfig ican_config_default(void);

// Copies `n` pairs into a new sample.
//
// # Safety
// `x`, `y` must point to `n` doubles; `out` must be writable.
enum IcanStatus ican_sample_new(const double *x,
                                const double *y,
                                size_t n,
                                struct IcanSample **out);

// Draws a synthetic sample.
//
// # Safety
// `out` must be writable.
enum IcanStatus ican_sample_generate(enum IcanDataset dataset,
                                     size_t n,
                                     uint64_t seed,
                                     struct IcanSample **out);

// New sample with both axes shifted and scaled to mean 0, variance 1.
//
// # Safety
// `sample` must be a live handle; `out` must be writable.
enum IcanStatus ican_sample_normalize(const struct IcanSample *sample, struct IcanSample **out);

// # Safety
// `sample` must be a live handle; `out` must be writable.
enum IcanStatus ican_sample_len(const struct IcanSample *sample, size_t *out);

// Copies the sample into `x`, `y`, each of capacity `cap` (at least the
// sample length).
//
// # Safety
// `sample` must be a live handle; `x`, `y` writable for `cap` doubles.
enum IcanStatus ican_sample_copy(const struct IcanSample *sample, double *x, double *y, size_t cap);

// # Safety
// `sample` must be null or a handle not yet freed.
void ican_sample_free(struct IcanSample *sample);

// HSIC statistic and p-value of `x` against `y`.
//
// # Safety
// `x`, `y` must point to `n` doubles; `hsic`, `p_value` writable.
enum IcanStatus ican_hsic(const double *x,
                          const double *y,
                          size_t n,
                          enum IcanPValueMethod method,
                          size_t permutations,
                          uint64_t seed,
                          double *hsic,
                          double *p_value);

// Solves one order of the moment system: given `E((Z + c_j W)^order)` at
// `order + 1` distinct `c_j`, writes `E(Z^order)` and `E(W^order)`.
//
// # Safety
// `c`, `observed` must point to `order + 1` doubles; outputs writable.
enum IcanStatus ican_reconstruct_moments(size_t order,
                                         const double *c,
                                         const double *observed,
                                         double *z_moment,
                                         double *w_moment);

// Runs the full fit on a sample that should already be normalised.
//
// # Safety
// `sample` must be a live handle; `config` null (defaults) or valid;
// `out` writable.
enum IcanStatus ican_fit(const struct IcanSample *sample,
                         const struct IcanConfig *config,
                         struct IcanFit **out);

// # Safety
// `fit` must be a live handle; `out` writable.
enum IcanStatus ican_fit_decision(const struct IcanFit *fit, enum IcanDecision *out);

// Writes `Var(N̂x)/Var(N̂y)` and the three p-values
// `(N̂x,N̂y)`, `(N̂x,T)`, `(N̂y,T)`.
//
// # Safety
// `fit` must be a live handle; `var_ratio` writable; `p_values` writable
// for 3 doubles.
enum IcanStatus ican_fit_summary(const struct IcanFit *fit, double *var_ratio, double *p_values);

// Copies the latent assignment into `buf` of capacity `cap`; `len`
// receives the sample length even when the buffer is too small.
//
// # Safety
// `fit` must be a live handle; `buf` writable for `cap` doubles; `len`
// writable.
enum IcanStatus ican_fit_latent(const struct IcanFit *fit, double *buf, size_t cap, size_t *len);

// Copies the JSON report (NUL-terminated) into `buf` of capacity `cap`;
// `len` receives the length without the NUL even when the buffer is too
// small.
//
// # Safety
// `fit` must be a live handle; `buf` writable for `cap` bytes; `len`
// writable.
enum IcanStatus ican_fit_report_json(const struct IcanFit *fit, char *buf, size_t cap, size_t *len);

// # Safety
// `fit` must be null or a handle not yet freed.
void ican_fit_free(struct IcanFit *fit);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ICAN_H */
