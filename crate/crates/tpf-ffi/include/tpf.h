#ifndef TPF_H
#define TPF_H

/* Generated by cbindgen from tpf-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible call.
 */
typedef enum TpfStatus {
  TPF_STATUS_OK = 0,
  TPF_STATUS_NULL_ARGUMENT = 1,
  TPF_STATUS_INVALID_ARGUMENT = 2,
  TPF_STATUS_NOT_SPD = 3,
  TPF_STATUS_SINGULAR_SYSTEM = 4,
  TPF_STATUS_DIM_MISMATCH = 5,
  TPF_STATUS_NON_FINITE = 6,
  TPF_STATUS_NO_CONVERGENCE = 7,
  TPF_STATUS_IO_ERROR = 8,
  TPF_STATUS_CONFIG_ERROR = 9,
  TPF_STATUS_MISSING_ARTIFACT = 10,
  TPF_STATUS_NUMERICAL_ERROR = 11,
  TPF_STATUS_BUFFER_TOO_SMALL = 12,
  TPF_STATUS_PANIC = 13,
} TpfStatus;

/**
 * Opaque Gaussian covariance path.
 */
typedef struct TpfGaussianPath TpfGaussianPath;

/**
 * Opaque dense row-major f64 matrix.
 */
typedef struct TpfMatrix TpfMatrix;

/**
 * Opaque trained network.
 */
typedef struct TpfNet TpfNet;

/**
 * Opaque deterministic random generator.
 */
typedef struct TpfRng TpfRng;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Version string of the library (static storage).
 */
const char *tpf_version(void);

/**
 * Copy the current thread's last error message into `buf` (NUL-terminated,
 * truncated to `cap`). Returns the full message length in bytes.
 *
 * # Safety
 * `buf` must point to `cap` writable bytes (or be null to query the length).
 */
uintptr_t tpf_last_error(char *buf, uintptr_t cap);

/**
 * New deterministic generator (xoshiro256++ seeded via splitmix64).
 */
struct TpfRng *tpf_rng_new(uint64_t seed);

/**
 * # Safety
 * `rng` must be a live pointer from [`tpf_rng_new`] (or null).
 */
void tpf_rng_free(struct TpfRng *rng);

/**
 * Fill `out` with `count` i.i.d. standard normal draws.
 *
 * # Safety
 * `rng` must be live; `out` must point to `count` writable f64 values.
 */
enum TpfStatus tpf_rng_standard_normal(struct TpfRng *rng, double *out, uintptr_t count);

/**
 * New matrix copying `rows * cols` row-major values from `data`. Returns
 * null on invalid input (query [`tpf_last_error`]).
 *
 * # Safety
 * `data` must point to `rows * cols` readable f64 values.
 */
struct TpfMatrix *tpf_matrix_new(uintptr_t rows, uintptr_t cols, const double *data);

/**
 * # Safety
 * `m` must be a live matrix pointer (or null).
 */
void tpf_matrix_free(struct TpfMatrix *m);

/**
 * # Safety
 * `m` must be live.
 */
uintptr_t tpf_matrix_rows(const struct TpfMatrix *m);

/**
 * # Safety
 * `m` must be live.
 */
uintptr_t tpf_matrix_cols(const struct TpfMatrix *m);

/**
 * Copy the row-major entries into `out` (capacity `cap` values).
 *
 * # Safety
 * `m` must be live; `out` must point to `cap` writable f64 values.
 */
enum TpfStatus tpf_matrix_copy_data(const struct TpfMatrix *m, double *out, uintptr_t cap);

/**
 * Symmetric PSD square root of an SPD matrix.
 *
 * # Safety
 * `m` must be live; `out` receives a new matrix handle on success.
 */
enum TpfStatus tpf_spd_sqrt(const struct TpfMatrix *m, struct TpfMatrix **out);

/**
 * Solve U M + sqrt(M) U sqrt(M) = rhs for U.
 *
 * # Safety
 * `m` and `rhs` must be live; `out` receives a new matrix handle on success.
 */
enum TpfStatus tpf_sqrt_sylvester(const struct TpfMatrix *m,
                                  const struct TpfMatrix *rhs,
                                  struct TpfMatrix **out);

/**
 * Exact minimum-cost assignment; writes `rows` column indices into `perm`.
 *
 * # Safety
 * `cost` must be live and square; `perm` must hold `rows` usize slots.
 */
enum TpfStatus tpf_min_cost_assignment(const struct TpfMatrix *cost,
                                       uintptr_t *perm,
                                       uintptr_t cap);

/**
 * Exact Wasserstein-2 between equal-size clouds.
 *
 * # Safety
 * `a` and `b` must be live; `out` must be writable.
 */
enum TpfStatus tpf_w2_exact(const struct TpfMatrix *a, const struct TpfMatrix *b, double *out);

/**
 * Debiased entropic Wasserstein-2 estimate.
 *
 * # Safety
 * `a` and `b` must be live; `out` must be writable.
 */
enum TpfStatus tpf_w2_entropic(const struct TpfMatrix *a,
                               const struct TpfMatrix *b,
                               double epsilon,
                               uintptr_t iters,
                               double *out);

/**
 * Rotating-covariance path R(theta t) diag(d1, d2) R(theta t)^T.
 */
struct TpfGaussianPath *tpf_gaussian_rotating(double d1, double d2, double theta);

/**
 * Isotropic path (1 + sigma^2 t) I in `dim` dimensions.
 */
struct TpfGaussianPath *tpf_gaussian_isotropic(uintptr_t dim, double sigma);

/**
 * # Safety
 * `path` must be a live pointer (or null).
 */
void tpf_gaussian_free(struct TpfGaussianPath *path);

/**
 * Physics-time matrix U(t, s): writes dim*dim row-major values.
 *
 * # Safety
 * `path` must be live; `out` must hold dim*dim writable f64 values.
 */
enum TpfStatus tpf_oracle_u(const struct TpfGaussianPath *path,
                            double t,
                            double s,
                            double *out,
                            uintptr_t cap);

/**
 * Sampling-time oracle velocity at a point (trig schedule).
 *
 * # Safety
 * `path` must be live; `x` and `out` must hold `dim` values each.
 */
enum TpfStatus tpf_oracle_v(const struct TpfGaussianPath *path,
                            const double *x,
                            uintptr_t dim,
                            double t,
                            double s,
                            double *out);

/**
 * Commutator norm of (Sigma, dSigma/dt) and the symmetry flag it implies.
 *
 * # Safety
 * `path` must be live; both out-pointers must be writable.
 */
enum TpfStatus tpf_symmetry_criterion(const struct TpfGaussianPath *path,
                                      double t,
                                      double *out_commutator_norm,
                                      bool *out_symmetric);

/**
 * Load a trained network checkpoint.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` receives the handle.
 */
enum TpfStatus tpf_net_load(const char *path, struct TpfNet **out);

/**
 * # Safety
 * `net` must be a live pointer (or null).
 */
void tpf_net_free(struct TpfNet *net);

/**
 * State dimension of a loaded network.
 *
 * # Safety
 * `net` must be live.
 */
uintptr_t tpf_net_dim(const struct TpfNet *net);

/**
 * Evaluate the network at (x, t, s[, mu]); `has_mu` gates the mu argument.
 *
 * # Safety
 * `net` must be live; `x` and `out` must hold `dim` values each.
 */
enum TpfStatus tpf_net_forward(const struct TpfNet *net,
                               const double *x,
                               uintptr_t dim,
                               double t,
                               double s,
                               bool has_mu,
                               double mu,
                               double *out);

/**
 * Run the whole pipeline from a config file into an output directory.
 *
 * # Safety
 * Both arguments must be NUL-terminated strings.
 */
enum TpfStatus tpf_pipeline_run(const char *config_path, const char *out_dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TPF_H */
