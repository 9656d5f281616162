#ifndef OFFEROPT_H
#define OFFEROPT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum OoStatus {
  OO_STATUS_OK = 0,
  OO_STATUS_NULL_POINTER = 1,
  OO_STATUS_INVALID_ARGUMENT = 2,
  /**
   * A required upstream stage is missing or stale.
   */
  OO_STATUS_DEPENDENCY = 3,
  OO_STATUS_SCHEMA = 4,
  OO_STATUS_TRAINING = 5,
  /**
   * The retention floor is not met; the solution is still returned.
   */
  OO_STATUS_INFEASIBLE = 6,
  OO_STATUS_FIT = 7,
  OO_STATUS_IO = 8,
  OO_STATUS_INTERNAL = 99,
} OoStatus;

/**
 * Opaque offer-assignment problem for one category.
 */
typedef struct OoProblem OoProblem;

/**
 * Opaque solved category.
 */
typedef struct OoSolution OoSolution;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null. The caller owns the
 * string and frees it with [`oo_string_free`].
 */
char *oo_last_error_message(void);

/**
 * # Safety
 * `s` must be null or come from this library.
 */
void oo_string_free(char *s);

/**
 * Library version, a static string.
 */
const char *oo_version(void);

/**
 * F1-maximizing cut-off of one consumer's predictions.
 *
 * # Safety
 * `actuals` and `probabilities` must point to `n` readable values; the out
 * pointers must be writable.
 */
enum OoStatus oo_maximize_threshold(const uint8_t *actuals,
                                    const double *probabilities,
                                    size_t n,
                                    double *cutoff_out,
                                    double *f1_out);

/**
 * Least-squares sigmoid through `(offers[i], probabilities[i])`.
 *
 * # Safety
 * Both arrays must hold `n` values; the out pointers must be writable.
 */
enum OoStatus oo_fit_sigmoid(const double *offers,
                             const double *probabilities,
                             size_t n,
                             double *a_out,
                             double *b_out,
                             double *r_squared_out);

/**
 * Offer elasticity `a * k * (1 - f_k)`.
 *
 * # Safety
 * `out` must be writable.
 */
enum OoStatus oo_elasticity(double a, double k, double f_k, double *out);

/**
 * Causal dilated convolution; `out` receives `x_len` values.
 *
 * # Safety
 * `x` holds `x_len` values, `filter` holds `filter_len`, `out` has room for
 * `x_len`.
 */
enum OoStatus oo_causal_dilated_conv(const double *x,
                                     size_t x_len,
                                     const double *filter,
                                     size_t filter_len,
                                     size_t dilation,
                                     double *out);

/**
 * New empty problem. `offer_low < offer_high` bound the new offers.
 *
 * # Safety
 * `category` must be a NUL-terminated string; `out` must be writable.
 */
enum OoStatus oo_problem_new(const char *category,
                             double retention_floor,
                             double offer_low,
                             double offer_high,
                             struct OoProblem **out);

/**
 * Appends one consumer-item pair.
 *
 * # Safety
 * `problem` must come from [`oo_problem_new`]; the ids must be
 * NUL-terminated strings.
 */
enum OoStatus oo_problem_add_item(struct OoProblem *problem,
                                  const char *consumer_id,
                                  const char *item_id,
                                  double price,
                                  double k,
                                  double f_k,
                                  double epsilon,
                                  double cutoff);

/**
 * # Safety
 * `problem` must be null or come from [`oo_problem_new`], freed once.
 */
void oo_problem_free(struct OoProblem *problem);

/**
 * Solves the problem. On [`OoStatus::Infeasible`] `out` still receives the
 * best assignment found.
 *
 * # Safety
 * `problem` must come from [`oo_problem_new`]; `out` must be writable.
 */
enum OoStatus oo_problem_solve(const struct OoProblem *problem, struct OoSolution **out);

/**
 * Number of decisions, one per added item in insertion order.
 *
 * # Safety
 * `solution` must be null or a live handle.
 */
size_t oo_solution_len(const struct OoSolution *solution);

/**
 * # Safety
 * `solution` must be null or a live handle.
 */
double oo_solution_total_revenue(const struct OoSolution *solution);

/**
 * # Safety
 * `solution` must be null or a live handle.
 */
double oo_solution_retention(const struct OoSolution *solution);

/**
 * # Safety
 * `solution` must be null or a live handle.
 */
double oo_solution_weighted_offer(const struct OoSolution *solution);

/**
 * Decision `index`: multiplier change, new offer, adjusted probability and
 * revenue. Any out pointer may be null.
 *
 * # Safety
 * `solution` must be a live handle; non-null out pointers must be writable.
 */
enum OoStatus oo_solution_decision(const struct OoSolution *solution,
                                   size_t index,
                                   double *eta_out,
                                   double *new_offer_out,
                                   double *adjusted_prob_out,
                                   double *revenue_out);

/**
 * # Safety
 * `solution` must be null or come from [`oo_problem_solve`], freed once.
 */
void oo_solution_free(struct OoSolution *solution);

/**
 * Runs one pipeline stage (`"ingest"` .. `"report"`), or all of them for
 * `"all"`, in an initialized workspace.
 *
 * # Safety
 * Both arguments must be NUL-terminated strings.
 */
enum OoStatus oo_run_stage(const char *workspace, const char *stage);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* OFFEROPT_H */
