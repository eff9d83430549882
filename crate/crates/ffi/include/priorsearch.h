#ifndef PRIORSEARCH_H
#define PRIORSEARCH_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PsStatus {
  PS_STATUS_OK = 0,
  PS_STATUS_NULL_POINTER = 1,
  PS_STATUS_INVALID_ARGUMENT = 2,
  /**
   * The optimizer or root solver could not make progress.
   */
  PS_STATUS_NUMERICAL = 3,
  PS_STATUS_IO = 4,
  PS_STATUS_PARSE = 5,
  /**
   * A Rust panic was caught at the boundary.
   */
  PS_STATUS_PANIC = 6,
} PsStatus;

/**
 * Outcome of [`ps_optimize`].
 */
typedef struct PsOptimization PsOptimization;

/**
 * Schedule plus per-step multipliers, as stored in plan files.
 */
typedef struct PsPlan PsPlan;

/**
 * Discretized prior over the search set.
 */
typedef struct PsPrior PsPrior;

/**
 * Optimizer settings. Obtain defaults from [`ps_optimizer_config_default`].
 */
typedef struct PsOptimizerConfig {
  /**
   * Total steps including the final Grover step.
   */
  size_t steps;
  double tol_e;
  size_t max_outer_iterations;
  /**
   * Relative tolerance of the per-index angle solve.
   */
  double root_tol;
  size_t root_max_steps;
  /**
   * Initial multiplier for every step; `<= 0` selects `1 / (8 sqrt(N))`.
   */
  double lambda_init;
  /**
   * Per-index passes in the refinement phase; 0 disables refinement.
   */
  size_t relaxation_passes;
  double stationarity_tol;
} PsOptimizerConfig;

typedef struct PsOptimizationSummary {
  double expected_cost;
  double delta_e;
  size_t outer_iterations;
  bool converged;
  /**
   * Some index carries more than 0.1 of the prior mass.
   */
  bool concentrated_prior;
  double max_multiplier_residual;
  double max_constraint_residual;
  double max_stationarity_residual;
  /**
   * Positive when some zero angle should open.
   */
  double max_complementarity_residual;
} PsOptimizationSummary;

typedef struct PsSimulation {
  uint64_t trials;
  double mean_iterations;
  double stderr;
  double analytic_e;
} PsSimulation;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread, or null.
 *
 * The pointer stays valid until the next `ps_*` call on this thread.
 */
const char *ps_last_error(void);

/**
 * Discretizes a named family (`uniform`, `power:<n>`, `exp:<c>`,
 * `hnorm:<c>`, `custom:<path>`) over `size` indices.
 *
 * # Safety
 * `dist` must be a NUL-terminated string; `out` must be writable.
 */
enum PsStatus ps_prior_discretize(const char *dist, size_t size, struct PsPrior **out);

/**
 * Builds a prior from `len` non-negative weights; they are normalized.
 *
 * # Safety
 * `weights` must point to `len` readable doubles; `out` must be writable.
 */
enum PsStatus ps_prior_from_weights(const double *weights, size_t len, struct PsPrior **out);

/**
 * Copy of `prior` with indices shuffled by a seeded permutation.
 *
 * # Safety
 * `prior` must be a live handle; `out` must be writable.
 */
enum PsStatus ps_prior_permute(const struct PsPrior *prior, uint64_t seed, struct PsPrior **out);

/**
 * Number of indices, or 0 for a null handle.
 *
 * # Safety
 * `prior` must be null or a live handle.
 */
size_t ps_prior_len(const struct PsPrior *prior);

/**
 * Copies the probabilities into `out`, which must hold exactly `len` values.
 *
 * # Safety
 * `prior` must be a live handle; `out` must point to `len` writable doubles.
 */
enum PsStatus ps_prior_probabilities(const struct PsPrior *prior, double *out, size_t len);

/**
 * Standard deviation of the index under the prior. With `sorted`, indices
 * are first reordered by descending probability.
 *
 * # Safety
 * `prior` must be a live handle; `out` must be writable.
 */
enum PsStatus ps_prior_stddev(const struct PsPrior *prior, bool sorted, double *out);

/**
 * # Safety
 * `prior` must be null or a handle not yet freed.
 */
void ps_prior_free(struct PsPrior *prior);

struct PsOptimizerConfig ps_optimizer_config_default(void);

/**
 * Optimizes a schedule for `prior`. A null `config` uses the defaults.
 *
 * Running out of outer iterations is not an error: the result is returned
 * with `converged == false` in its summary.
 *
 * # Safety
 * `prior` must be a live handle, `config` null or readable, `out` writable.
 */
enum PsStatus ps_optimize(const struct PsPrior *prior,
                          const struct PsOptimizerConfig *config,
                          struct PsOptimization **out);

/**
 * # Safety
 * `result` must be a live handle; `out` must be writable.
 */
enum PsStatus ps_optimization_summary(const struct PsOptimization *result,
                                      struct PsOptimizationSummary *out);

/**
 * Extracts the optimized plan as a new handle.
 *
 * # Safety
 * `result` must be a live handle; `out` must be writable.
 */
enum PsStatus ps_optimization_plan(const struct PsOptimization *result, struct PsPlan **out);

/**
 * # Safety
 * `result` must be null or a handle not yet freed.
 */
void ps_optimization_free(struct PsOptimization *result);

/**
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum PsStatus ps_plan_read(const char *path, struct PsPlan **out);

/**
 * # Safety
 * `plan` must be a live handle; `path` a NUL-terminated string.
 */
enum PsStatus ps_plan_write(const struct PsPlan *plan, const char *path);

/**
 * Total steps `n` including the final Grover step, or 0 for a null handle.
 *
 * # Safety
 * `plan` must be null or a live handle.
 */
size_t ps_plan_steps(const struct PsPlan *plan);

/**
 * Search-set size `N`, or 0 for a null handle.
 *
 * # Safety
 * `plan` must be null or a live handle.
 */
size_t ps_plan_size(const struct PsPlan *plan);

/**
 * Copies the `n - 1` optimized iteration counts into `out`.
 *
 * # Safety
 * `plan` must be a live handle; `out` must point to `len` writable doubles.
 */
enum PsStatus ps_plan_iterations(const struct PsPlan *plan, double *out, size_t len);

/**
 * Copies the `n - 1` step multipliers into `out`.
 *
 * # Safety
 * `plan` must be a live handle; `out` must point to `len` writable doubles.
 */
enum PsStatus ps_plan_multipliers(const struct PsPlan *plan, double *out, size_t len);

/**
 * Iteration count of the final, unconditional Grover step.
 *
 * # Safety
 * `plan` must be a live handle; `out` must be writable.
 */
enum PsStatus ps_plan_final_iterations(const struct PsPlan *plan, double *out);

/**
 * Expected number of oracle calls of `plan` under `prior`.
 *
 * # Safety
 * `plan` and `prior` must be live handles; `out` must be writable.
 */
enum PsStatus ps_plan_expected_cost(const struct PsPlan *plan,
                                    const struct PsPrior *prior,
                                    double *out);

/**
 * Monte-Carlo estimate of the expected cost. `integer_mode` rounds
 * iteration counts to whole oracle calls.
 *
 * # Safety
 * `plan` and `prior` must be live handles; `out` must be writable.
 */
enum PsStatus ps_simulate(const struct PsPlan *plan,
                          const struct PsPrior *prior,
                          uint64_t trials,
                          uint64_t seed,
                          bool integer_mode,
                          struct PsSimulation *out);

/**
 * # Safety
 * `plan` must be null or a handle not yet freed.
 */
void ps_plan_free(struct PsPlan *plan);

/**
 * `sin²((2m+1) asin(amplitude))`: success probability after `iterations`
 * Grover iterations from the given solution amplitude.
 */
double ps_grover_success_probability(double amplitude, uint64_t iterations);

/**
 * Percent saving of `expected_cost` over plain Grover, `(π/4)√N`.
 */
double ps_improvement(double expected_cost, size_t size);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PRIORSEARCH_H */
