/* C interface of the drmdp load-dispatch library. */

#ifndef DRMDP_H
#define DRMDP_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call. `Ok` is zero; nonzero codes align with the
// CLI exit classes, and the message behind a failure is available through
// `drmdp_last_error_message`.
typedef enum DrmdpStatus {
  DrmdpStatus_Ok = 0,
  DrmdpStatus_NullArgument = 1,
  DrmdpStatus_InvalidArgument = 2,
  DrmdpStatus_InvalidData = 3,
  DrmdpStatus_NumericalError = 4,
  DrmdpStatus_BufferTooSmall = 5,
} DrmdpStatus;

// Expected-log plug-in used by `drmdp_solve_private`.
typedef enum DrmdpMethod {
  DrmdpMethod_Taylor = 0,
  DrmdpMethod_Digamma = 1,
} DrmdpMethod;

// Opaque row-stochastic transition matrix.
typedef struct DrmdpMatrix DrmdpMatrix;

// Opaque time-varying policy.
typedef struct DrmdpPolicy DrmdpPolicy;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the last error message into `buf` (NUL-terminated, truncated to
// `cap`). Returns the full message length in bytes, excluding the NUL.
//
// # Safety
// `buf` must point to `cap` writable bytes, or be null (query mode).
size_t drmdp_last_error_message(char *buf, size_t cap);

// Parses a transition matrix from its JSON form
// (`{"n": .., "rows": [[..]], "support_mask": [[..]]}`).
//
// # Safety
// `json` must be a NUL-terminated string; `out` must be a valid pointer.
enum DrmdpStatus drmdp_matrix_from_json(const char *json, struct DrmdpMatrix **out);

// Serializes a matrix to JSON. The returned string must be released with
// `drmdp_string_free`.
//
// # Safety
// `matrix` must be a live handle; `out_json` must be a valid pointer.
enum DrmdpStatus drmdp_matrix_to_json(const struct DrmdpMatrix *matrix, char **out_json);

// Maximum-likelihood estimate from a state-index path; unvisited states get
// self-loop rows.
//
// # Safety
// `path` must point to `path_len` readable elements; `out` must be valid.
enum DrmdpStatus drmdp_matrix_estimate(const uint32_t *path,
                                       size_t path_len,
                                       uint32_t n_states,
                                       struct DrmdpMatrix **out);

// Number of states, or 0 for a null handle.
//
// # Safety
// `matrix` must be null or a live handle.
uint32_t drmdp_matrix_dim(const struct DrmdpMatrix *matrix);

// Copies row `source` (length n) into `out`.
//
// # Safety
// `out` must point to `out_len` writable doubles.
enum DrmdpStatus drmdp_matrix_row(const struct DrmdpMatrix *matrix,
                                  uint32_t source,
                                  double *out,
                                  size_t out_len);

// # Safety
// `matrix` must be null or an owned live handle; it is consumed.
void drmdp_matrix_free(struct DrmdpMatrix *matrix);

// Solves the control problem on the default dynamics. `utility` is a
// row-major horizon×n array of aggregator utilities.
//
// # Safety
// `matrix` must be live; `utility` must hold horizon×n doubles; `out` valid.
enum DrmdpStatus drmdp_solve(const struct DrmdpMatrix *matrix,
                             const double *utility,
                             uint32_t horizon,
                             double gamma,
                             struct DrmdpPolicy **out);

// Solves the privatized problem with the chosen expected-log plug-in at
// concentration `k`.
//
// # Safety
// Same contracts as `drmdp_solve`.
enum DrmdpStatus drmdp_solve_private(const struct DrmdpMatrix *matrix,
                                     const double *utility,
                                     uint32_t horizon,
                                     double gamma,
                                     double k,
                                     enum DrmdpMethod method,
                                     struct DrmdpPolicy **out);

// Number of transition steps (horizon − 1), or 0 for a null handle.
//
// # Safety
// `policy` must be null or a live handle.
uint32_t drmdp_policy_steps(const struct DrmdpPolicy *policy);

// KL penalty weight the policy was solved under.
//
// # Safety
// `policy` must be null or a live handle.
double drmdp_policy_gamma(const struct DrmdpPolicy *policy);

// Copies the n×n controlled matrix of step `t` into `out`, row-major.
//
// # Safety
// `out` must point to `out_len` writable doubles.
enum DrmdpStatus drmdp_policy_step(const struct DrmdpPolicy *policy,
                                   uint32_t t,
                                   double *out,
                                   size_t out_len);

// Serializes the policy as `{gamma, T, matrices}` JSON; release the string
// with `drmdp_string_free`.
//
// # Safety
// `policy` must be live; `out_json` must be valid.
enum DrmdpStatus drmdp_policy_to_json(const struct DrmdpPolicy *policy, char **out_json);

// # Safety
// `policy` must be null or an owned live handle; it is consumed.
void drmdp_policy_free(struct DrmdpPolicy *policy);

// One seeded draw of the Dirichlet mechanism over `probs` (length n, summing
// to one; zeros are preserved). Writes the privatized vector into `out`.
//
// # Safety
// `probs` and `out` must point to `n` readable/writable doubles.
enum DrmdpStatus drmdp_dirichlet_sample(const double *probs,
                                        size_t n,
                                        double k,
                                        uint64_t seed,
                                        double *out);

// Privacy loss of the mechanism at the given accounting inputs.
//
// # Safety
// `out` must be a valid pointer.
enum DrmdpStatus drmdp_epsilon_guarantee(double k,
                                         double h,
                                         double psi,
                                         double omega,
                                         double omega_bar,
                                         uint32_t w_size,
                                         double *out);

// Digamma function for x > 0.
//
// # Safety
// `out` must be a valid pointer.
enum DrmdpStatus drmdp_digamma(double x, double *out);

// Releases a string returned by the `*_to_json` functions.
//
// # Safety
// `s` must be null or a pointer produced by this library.
void drmdp_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DRMDP_H */
