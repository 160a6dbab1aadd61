#ifndef SIGNRR_H
#define SIGNRR_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SignrrStatus {
  SIGNRR_STATUS_OK = 0,
  SIGNRR_STATUS_NULL_POINTER = 1,
  SIGNRR_STATUS_INVALID_ARGUMENT = 2,
  SIGNRR_STATUS_DIMENSION_MISMATCH = 3,
  SIGNRR_STATUS_INDEX_OUT_OF_RANGE = 4,
  SIGNRR_STATUS_NOT_A_NUMBER = 5,
  SIGNRR_STATUS_CONFIG = 6,
  SIGNRR_STATUS_IO = 7,
  SIGNRR_STATUS_CSV = 8,
  SIGNRR_STATUS_INVALID_UTF8 = 9,
  SIGNRR_STATUS_BUFFER_TOO_SMALL = 10,
  SIGNRR_STATUS_PANIC = 11,
} SignrrStatus;

// A centralized optimizer with its iterate and epoch counter.
typedef struct SignrrOptimizer SignrrOptimizer;

// A finite-sum objective.
typedef struct SignrrProblem SignrrProblem;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Version string of the library (static, NUL-terminated).
const char *signrr_version(void);

// Bytes needed to hold the last error message, including the NUL.
size_t signrr_last_error_length(void);

// Copies the last error message of this thread into `buf`.
//
// # Safety
// `buf` must point to `len` writable bytes.
enum SignrrStatus signrr_last_error_message(char *buf, size_t len);

// Sum of `n` scaled Rosenbrock components in dimension `d`, scales drawn
// uniformly from `[0, u_max]` with `seed`.
//
// # Safety
// `out` must be a valid pointer to a handle slot.
enum SignrrStatus signrr_rosenbrock_new(size_t n,
                                        size_t d,
                                        double u_max,
                                        uint64_t seed,
                                        struct SignrrProblem **out);

// Softmax regression on a CSV file whose last column is the label.
// `num_classes = 0` infers the class count.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid handle slot.
enum SignrrStatus signrr_logistic_from_csv(const char *path,
                                           bool has_header,
                                           size_t num_classes,
                                           struct SignrrProblem **out);

// Releases a problem. Null is ignored.
//
// # Safety
// `problem` must come from a `signrr_*_new` call and not be used afterwards.
void signrr_problem_free(struct SignrrProblem *problem);

// # Safety
// `problem` must be a live handle and `out` valid.
enum SignrrStatus signrr_problem_dim(const struct SignrrProblem *problem, size_t *out);

// # Safety
// `problem` must be a live handle and `out` valid.
enum SignrrStatus signrr_problem_num_components(const struct SignrrProblem *problem, size_t *out);

// Full objective at `x` (`len` must equal the dimension).
//
// # Safety
// `x` must hold `len` doubles and `out` be valid.
enum SignrrStatus signrr_problem_value(const struct SignrrProblem *problem,
                                       const double *x,
                                       size_t len,
                                       double *out);

// Full gradient at `x` written into `grad`; both have length `len`.
//
// # Safety
// `x` and `grad` must each hold `len` doubles.
enum SignrrStatus signrr_problem_grad(const struct SignrrProblem *problem,
                                      const double *x,
                                      double *grad,
                                      size_t len);

// Creates a centralized optimizer by name (`signrr`, `signrvr`, `signrvm`,
// `sgd`, `rr`, `signsgd`, `signum`, `adam`) starting at `x0`.
//
// `gamma0` and `d0` feed a constant schedule, or `c/sqrt(t+1)`-style
// schedules when `adaptive` is set. `d0` is ignored by methods without a
// freeze threshold and `beta` by methods without momentum.
//
// # Safety
// `algorithm` must be NUL-terminated, `x0` hold `len` doubles, `out` valid.
enum SignrrStatus signrr_optimizer_new(const char *algorithm,
                                       double gamma0,
                                       double d0,
                                       double beta,
                                       bool adaptive,
                                       const double *x0,
                                       size_t len,
                                       struct SignrrOptimizer **out);

// Releases an optimizer. Null is ignored.
//
// # Safety
// `optimizer` must come from [`signrr_optimizer_new`] and not be used afterwards.
void signrr_optimizer_free(struct SignrrOptimizer *optimizer);

// Runs `epochs` further epochs on `problem` with mini-batch size `batch`.
// Shuffles and samples derive from `seed`, so equal inputs give equal runs.
// `final_grad_l1` (nullable) receives `‖∇f‖₁` at the last recorded step.
//
// # Safety
// Handles must be live; `final_grad_l1` may be null.
enum SignrrStatus signrr_optimizer_run(struct SignrrOptimizer *optimizer,
                                       const struct SignrrProblem *problem,
                                       size_t epochs,
                                       uint64_t seed,
                                       size_t batch,
                                       double *final_grad_l1);

// Copies the current iterate into `x` (length `len`).
//
// # Safety
// `x` must hold `len` doubles.
enum SignrrStatus signrr_optimizer_x(const struct SignrrOptimizer *optimizer,
                                     double *x,
                                     size_t len);

// Bytes moved by `rounds` rounds with `workers` workers in dimension `d`
// under the default cost model, for sign averaging (`majority_vote`
// false) or majority vote.
//
// # Safety
// `bytes_up` and `bytes_down` must be valid.
enum SignrrStatus signrr_comm_bytes(size_t workers,
                                    size_t d,
                                    size_t rounds,
                                    bool majority_vote,
                                    uint64_t *bytes_up,
                                    uint64_t *bytes_down);

// Runs a sweep described by a JSON object of config keys and writes its
// outputs under the config's `out_dir`. `lemma_violations` (nullable)
// receives the total number of failed inequality checks.
//
// # Safety
// `config_json` must be NUL-terminated; `lemma_violations` may be null.
enum SignrrStatus signrr_run_experiment(const char *config_json, size_t *lemma_violations);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SIGNRR_H */
