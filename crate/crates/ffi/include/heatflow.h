#ifndef HEATFLOW_H
#define HEATFLOW_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every call.
 */
typedef enum HfStatus {
  HF_STATUS_OK = 0,
  HF_STATUS_NULL_POINTER = 1,
  HF_STATUS_INVALID_ARGUMENT = 2,
  HF_STATUS_INVALID_CONFIG = 3,
  /**
   * Singular frame, non-finite values, rejected steps and similar.
   */
  HF_STATUS_NUMERICAL = 4,
  HF_STATUS_IO = 5,
  HF_STATUS_BUFFER_TOO_SMALL = 6,
  HF_STATUS_PANIC = 7,
} HfStatus;

typedef enum HfMethod {
  HF_METHOD_AGHF = 0,
  HF_METHOD_EL_AGHF = 1,
} HfMethod;

typedef enum HfInit {
  HF_INIT_LINEAR = 0,
  HF_INIT_LINEAR_WITH_SINE_X = 1,
  HF_INIT_THETA_ONLY = 2,
} HfInit;

/**
 * A dynamical system.
 */
typedef struct HfModel HfModel;

/**
 * A solved trajectory with its rollout check.
 */
typedef struct HfSolution HfSolution;

/**
 * Solver settings. Fill with [`hf_solve_options_default`] first.
 */
typedef struct HfSolveOptions {
  enum HfMethod method;
  enum HfInit init;
  double horizon;
  size_t nt;
  double lambda;
  /**
   * Constraint penalty; values `<= 0` reuse `lambda`.
   */
  double lambda_c;
  /**
   * Heaviside sharpness shared by all box constraints.
   */
  double k_s;
  double epsilon;
  double s_max;
  double min_s;
  double wall_limit;
} HfSolveOptions;

/**
 * `min <= x[index] <= max`.
 */
typedef struct HfBox {
  size_t index;
  double min;
  double max;
} HfBox;

typedef struct HfMetrics {
  bool converged;
  double s_reached;
  double wall_time_s;
  size_t steps;
  double final_action;
  double e_t;
  double e_hat_t;
  double e_viol;
} HfMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer is
 * valid until the next failing call on the same thread.
 */
const char *hf_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *hf_version(void);

/**
 * Kinematic unicycle with unit forward speed (`n = 3`, `m = 1`).
 */
enum HfStatus hf_model_unicycle(struct HfModel **out);

/**
 * Dynamic unicycle (`n = 5`, `m = 2`).
 */
enum HfStatus hf_model_dynamic_unicycle(struct HfModel **out);

/**
 * Planar three-link diver (`n = 6`, `m = 2`). Each parameter array holds
 * three values; NULL selects unit values.
 *
 * # Safety
 * Non-null arrays must point to three readable doubles.
 */
enum HfStatus hf_model_diver3(const double *masses,
                              const double *lengths,
                              const double *inertias,
                              struct HfModel **out);

/**
 * State dimension, or 0 for NULL.
 *
 * # Safety
 * `model` must be NULL or a live handle.
 */
size_t hf_model_state_dim(const struct HfModel *model);

/**
 * Control dimension, or 0 for NULL.
 *
 * # Safety
 * `model` must be NULL or a live handle.
 */
size_t hf_model_control_dim(const struct HfModel *model);

/**
 * # Safety
 * `model` must be NULL or a handle not yet freed.
 */
void hf_model_free(struct HfModel *model);

/**
 * Writes the library defaults into `out`.
 *
 * # Safety
 * `out` must be NULL or writable.
 */
enum HfStatus hf_solve_options_default(struct HfSolveOptions *out);

/**
 * Solves a two-point problem and rolls out the extracted controls.
 *
 * `x0` and `xf` hold `n` values. `free_start`/`free_end` are optional masks
 * of `n` bytes (nonzero = free). `boxes` may be NULL when `n_boxes` is 0.
 *
 * # Safety
 * All non-null pointers must reference readable memory of the stated size;
 * `out` must be writable.
 */
enum HfStatus hf_solve(const struct HfModel *model,
                       const struct HfSolveOptions *options,
                       const double *x0,
                       const double *xf,
                       size_t n,
                       const uint8_t *free_start,
                       const uint8_t *free_end,
                       const struct HfBox *boxes,
                       size_t n_boxes,
                       struct HfSolution **out);

/**
 * # Safety
 * `sol` must be NULL or a handle not yet freed.
 */
void hf_solution_free(struct HfSolution *sol);

/**
 * Number of time nodes, or 0 for NULL.
 *
 * # Safety
 * `sol` must be NULL or a live handle.
 */
size_t hf_solution_nt(const struct HfSolution *sol);

/**
 * # Safety
 * `sol` must be a live handle and `out` writable.
 */
enum HfStatus hf_solution_metrics(const struct HfSolution *sol, struct HfMetrics *out);

/**
 * Copies the states row-major (`nt x n`) into `buf`.
 *
 * # Safety
 * `sol` must be a live handle; `buf` must hold `len` writable doubles.
 */
enum HfStatus hf_solution_states(const struct HfSolution *sol, double *buf, size_t len);

/**
 * Copies the dynamics duals row-major (`nt x (n - m)`) into `buf`.
 *
 * # Safety
 * `sol` must be a live handle; `buf` must hold `len` writable doubles.
 */
enum HfStatus hf_solution_duals(const struct HfSolution *sol, double *buf, size_t len);

/**
 * Copies the extracted controls row-major (`nt x m`) into `buf`.
 *
 * # Safety
 * `sol` must be a live handle; `buf` must hold `len` writable doubles.
 */
enum HfStatus hf_solution_controls(const struct HfSolution *sol, double *buf, size_t len);

/**
 * Runs a JSON config file like `heatflow run` and stores the process exit
 * code (0 converged, 2 not converged) in `exit_code`.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `exit_code` may be NULL.
 */
enum HfStatus hf_run_config(const char *path, int32_t *exit_code);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HEATFLOW_H */
