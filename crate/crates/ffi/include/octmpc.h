/* C interface to the oct-mpc robust model-predictive-control toolkit. */

#ifndef OCTMPC_H
#define OCTMPC_H

/* Generated by cbindgen from the oct-mpc-ffi crate; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of an interface call.  Zero is success; every other value
 * is a failure and leaves a message retrievable via `octmpc_last_error()`.
 */
typedef enum OctMpcStatus {
  /**
   * The call succeeded.
   */
  OCT_MPC_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  OCT_MPC_STATUS_NULL_ARGUMENT = 1,
  /**
   * An argument was malformed: bad UTF-8, wrong buffer length, non-finite
   * state entries, or an unknown controller name.
   */
  OCT_MPC_STATUS_INVALID_ARGUMENT = 2,
  /**
   * The scenario or artifact JSON failed to parse or validate, or the
   * artifact does not belong to the given scenario.
   */
  OCT_MPC_STATUS_CONFIG = 3,
  /**
   * The offline design problem is infeasible for the scenario.
   */
  OCT_MPC_STATUS_INFEASIBLE = 4,
  /**
   * A numerical solve failed or did not converge.
   */
  OCT_MPC_STATUS_SOLVER = 5,
  /**
   * A file could not be read or written.
   */
  OCT_MPC_STATUS_IO = 6,
  /**
   * An internal invariant was violated; the library caught a panic at
   * the boundary.
   */
  OCT_MPC_STATUS_PANIC = 7,
} OctMpcStatus;

/**
 * Opaque receding-horizon controller handle.
 *
 * Created by the `octmpc_controller_new_*` constructors, released by
 * `octmpc_controller_free()`.  Thread-safe: concurrent `octmpc_controller_step()`
 * calls on one handle are serialized internally.
 */
typedef struct OctMpcController OctMpcController;

/**
 * Outcome of one receding-horizon step.
 */
typedef struct OctMpcStepResult {
  /**
   * True when a plan exists at the queried state; false when the online
   * problem is infeasible there (the input buffer is then NaN-filled).
   */
  bool feasible;
  /**
   * Optimal objective of the plan; NaN when infeasible.
   */
  double objective;
  /**
   * Wall-clock seconds spent inside the backend solve call.
   */
  double solve_time;
} OctMpcStepResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Returns the library version as a static NUL-terminated string.
 * The pointer is valid for the lifetime of the process; do not free it.
 */
const char *octmpc_version(void);

/**
 * Returns the calling thread's most recent error message, or null if no
 * call on this thread has failed yet.  The pointer stays valid until the
 * next failing call on the same thread; do not free it.
 */
const char *octmpc_last_error(void);

/**
 * Releases a string returned through an `out` parameter of this interface.
 * Passing null is a no-op.
 *
 * # Safety
 *
 * `text` must be null or a pointer previously returned by this interface
 * and not yet freed.
 */
void octmpc_string_free(char *text);

/**
 * Runs the offline design pipeline for the scenario in `config_json` and
 * writes the resulting design artifact as JSON to `*artifact_json_out`
 * (caller-owned; release with `octmpc_string_free()`).
 *
 * This performs the full synthesis — terminal ingredients, baseline tube
 * design, tightening optimization — and can take seconds for long horizons.
 *
 * # Safety
 *
 * `config_json` must be a NUL-terminated string and `artifact_json_out` a
 * valid location to store a pointer.
 */
enum OctMpcStatus octmpc_design_json(const char *config_json, char **artifact_json_out);

/**
 * Builds the named controller ("oct", "tmpc", "fpd" or "nominal") from a
 * scenario and a design artifact, both as JSON text.  The artifact must
 * have been produced for exactly this scenario (a fingerprint is checked).
 * On success `*controller_out` receives the handle; release it with
 * `octmpc_controller_free()`.
 *
 * # Safety
 *
 * The three strings must be NUL-terminated and `controller_out` a valid
 * location to store a pointer.
 */
enum OctMpcStatus octmpc_controller_new_from_json(const char *config_json,
                                                  const char *artifact_json,
                                                  const char *controller_name,
                                                  struct OctMpcController **controller_out);

/**
 * File-path variant of `octmpc_controller_new_from_json`.  The scenario may
 * be `.json` or `.toml`; the artifact is the JSON file written by the
 * design step.
 *
 * # Safety
 *
 * The three strings must be NUL-terminated paths and `controller_out` a
 * valid location to store a pointer.
 */
enum OctMpcStatus octmpc_controller_new_from_files(const char *config_path,
                                                   const char *artifact_path,
                                                   const char *controller_name,
                                                   struct OctMpcController **controller_out);

/**
 * Releases a controller handle.  Passing null is a no-op.
 *
 * # Safety
 *
 * `controller` must be null or a pointer previously returned by a
 * constructor and not yet freed; no other thread may be using it.
 */
void octmpc_controller_free(struct OctMpcController *controller);

/**
 * State dimension of the plant, or 0 if `controller` is null.
 *
 * # Safety
 *
 * `controller` must be null or a live handle.
 */
size_t octmpc_controller_state_dim(const struct OctMpcController *controller);

/**
 * Input dimension of the plant, or 0 if `controller` is null.
 *
 * # Safety
 *
 * `controller` must be null or a live handle.
 */
size_t octmpc_controller_input_dim(const struct OctMpcController *controller);

/**
 * Prediction horizon of the controller, or 0 if `controller` is null.
 *
 * # Safety
 *
 * `controller` must be null or a live handle.
 */
size_t octmpc_controller_horizon(const struct OctMpcController *controller);

/**
 * Decision-variable count of the online problem, or 0 if `controller` is
 * null.
 *
 * # Safety
 *
 * `controller` must be null or a live handle.
 */
size_t octmpc_controller_num_variables(const struct OctMpcController *controller);

/**
 * Constraint-row count of the online problem, or 0 if `controller` is
 * null.
 *
 * # Safety
 *
 * `controller` must be null or a live handle.
 */
size_t octmpc_controller_num_constraints(const struct OctMpcController *controller);

/**
 * Solves the receding-horizon problem at the measured state and writes the
 * input to apply into `input_out`.
 *
 * `state` must hold exactly `octmpc_controller_state_dim()` entries and
 * `input_out` exactly `octmpc_controller_input_dim()`.  `result_out` may be
 * null when only the input is of interest.
 *
 * An infeasible state is not an error: the call returns `OK` with
 * `result_out->feasible == false` and `input_out` NaN-filled.  Once the
 * arguments validate, the buffers are defined on every return (NaN-filled
 * until a plan overwrites them); argument failures leave them untouched.
 *
 * # Safety
 *
 * `controller` must be a live handle and the buffers valid for the stated
 * lengths.
 */
enum OctMpcStatus octmpc_controller_step(const struct OctMpcController *controller,
                                         const double *state,
                                         size_t state_len,
                                         double *input_out,
                                         size_t input_len,
                                         struct OctMpcStepResult *result_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* OCTMPC_H */
