//! C interface to the robust-MPC toolkit.
//!
//! The surface is a thin handle-based wrapper over the core crate: a
//! scenario description and a design artifact (both JSON, the same schemas
//! the command-line driver reads and writes) produce an opaque controller
//! handle, which then answers receding-horizon queries on plain `double`
//! buffers.  The generated header lives at `include/octmpc.h`.
//!
//! # Conventions
//!
//! * Every fallible function returns an [`OctMpcStatus`]; `OK` (zero) means
//!   success.  After a failure, [`octmpc_last_error`] yields a
//!   human-readable message for the current thread.
//! * Strings crossing the boundary are NUL-terminated UTF-8.  Strings
//!   returned through `out` parameters are owned by the caller and must be
//!   released with [`octmpc_string_free`].
//! * Controller handles are created by the `octmpc_controller_new_*`
//!   constructors and released with [`octmpc_controller_free`].  A handle
//!   may be shared across threads; solves are serialized internally.
//! * No call unwinds across the boundary: internal panics are caught and
//!   reported as the `PANIC` status.

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::os::raw::c_char;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;

use nalgebra::DVector;
use oct_mpc::artifact::DesignArtifact;
use oct_mpc::config::{load_config, ScenarioConfig};
use oct_mpc::controller::Controller;
use oct_mpc::design::{design_offline, DesignOptions};
use oct_mpc::model::LinearSystem;
use oct_mpc::Error;

/// Result code of an interface call.  Zero is success; every other value
/// is a failure and leaves a message retrievable via `octmpc_last_error()`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OctMpcStatus {
    /// The call succeeded.
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// An argument was malformed: bad UTF-8, wrong buffer length, non-finite
    /// state entries, or an unknown controller name.
    InvalidArgument = 2,
    /// The scenario or artifact JSON failed to parse or validate, or the
    /// artifact does not belong to the given scenario.
    Config = 3,
    /// The offline design problem is infeasible for the scenario.
    Infeasible = 4,
    /// A numerical solve failed or did not converge.
    Solver = 5,
    /// A file could not be read or written.
    Io = 6,
    /// An internal invariant was violated; the library caught a panic at
    /// the boundary.
    Panic = 7,
}

/// Outcome of one receding-horizon step.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OctMpcStepResult {
    /// True when a plan exists at the queried state; false when the online
    /// problem is infeasible there (the input buffer is then NaN-filled).
    pub feasible: bool,
    /// Optimal objective of the plan; NaN when infeasible.
    pub objective: f64,
    /// Wall-clock seconds spent inside the backend solve call.
    pub solve_time: f64,
}

/// Opaque receding-horizon controller handle.
///
/// Created by the `octmpc_controller_new_*` constructors, released by
/// `octmpc_controller_free()`.  Thread-safe: concurrent `octmpc_controller_step()`
/// calls on one handle are serialized internally.
pub struct OctMpcController {
    system: LinearSystem,
    inner: Box<dyn Controller>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

/// Records `message` as the calling thread's last error.
fn set_last_error(message: &str) {
    let owned = CString::new(message.replace('\0', " ")).expect("NUL bytes replaced");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(owned));
}

/// Records the error and maps it onto the status code surfaced to C.
fn failed(error: Error) -> OctMpcStatus {
    set_last_error(&error.to_string());
    match error {
        Error::Dimension(_) | Error::Invalid(_) => OctMpcStatus::InvalidArgument,
        Error::Config(_) | Error::ArtifactMismatch(_) | Error::Json(_) => OctMpcStatus::Config,
        Error::Infeasible(_) => OctMpcStatus::Infeasible,
        Error::Unbounded(_) | Error::NoConvergence(_, _) | Error::Solver(_) => OctMpcStatus::Solver,
        Error::Io(_) => OctMpcStatus::Io,
    }
}

fn null_argument(name: &str) -> OctMpcStatus {
    set_last_error(&format!("{name} must not be null"));
    OctMpcStatus::NullArgument
}

fn invalid_argument(message: String) -> OctMpcStatus {
    set_last_error(&message);
    OctMpcStatus::InvalidArgument
}

/// Runs `body` with a panic guard; a caught panic becomes [`OctMpcStatus::Panic`].
fn guard(body: impl FnOnce() -> Result<(), OctMpcStatus>) -> OctMpcStatus {
    match panic::catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => OctMpcStatus::Ok,
        Ok(Err(status)) => status,
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| (*s).to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic payload".to_string());
            set_last_error(&format!("internal panic: {message}"));
            OctMpcStatus::Panic
        }
    }
}

/// Borrows a NUL-terminated UTF-8 argument, surfacing null/encoding failures.
///
/// # Safety
///
/// `ptr`, when non-null, must point to a NUL-terminated string that outlives
/// the borrow.
unsafe fn utf8_argument<'a>(ptr: *const c_char, name: &str) -> Result<&'a str, OctMpcStatus> {
    if ptr.is_null() {
        return Err(null_argument(name));
    }
    unsafe { CStr::from_ptr(ptr) }
        .to_str()
        .map_err(|_| invalid_argument(format!("{name} is not valid UTF-8")))
}

/// Moves a Rust string to the C heap convention (released by
/// `octmpc_string_free`).  JSON output never contains NUL bytes.
fn into_c_string(text: String) -> *mut c_char {
    CString::new(text).expect("JSON contains no NUL bytes").into_raw()
}

/// Runs the offline pipeline for a parsed scenario and packages the result.
fn design_artifact(config: &ScenarioConfig) -> Result<DesignArtifact, OctMpcStatus> {
    let (system, weights) = config.build().map_err(failed)?;
    let options = DesignOptions { cap_by_tmpc: config.fallback, ..DesignOptions::default() };
    let design = design_offline(&system, &weights, config.horizon, &options).map_err(failed)?;
    Ok(DesignArtifact::from_design(&config.hash(), &design))
}

/// Checks the artifact against the scenario and builds the named controller.
fn build_handle(
    config: &ScenarioConfig,
    artifact: &DesignArtifact,
    name: &str,
) -> Result<Box<OctMpcController>, OctMpcStatus> {
    artifact.check_config(&config.hash()).map_err(failed)?;
    if artifact.horizon != config.horizon {
        return Err(failed(Error::ArtifactMismatch(format!(
            "artifact horizon {} vs scenario horizon {}",
            artifact.horizon, config.horizon
        ))));
    }
    let (system, weights) = config.build().map_err(failed)?;
    let inner = artifact.build_controller(name, &system, &weights).map_err(failed)?;
    Ok(Box::new(OctMpcController { system, inner }))
}

/// Returns the library version as a static NUL-terminated string.
/// The pointer is valid for the lifetime of the process; do not free it.
#[no_mangle]
pub extern "C" fn octmpc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Returns the calling thread's most recent error message, or null if no
/// call on this thread has failed yet.  The pointer stays valid until the
/// next failing call on the same thread; do not free it.
#[no_mangle]
pub extern "C" fn octmpc_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| match &*slot.borrow() {
        Some(message) => message.as_ptr(),
        None => std::ptr::null(),
    })
}

/// Releases a string returned through an `out` parameter of this interface.
/// Passing null is a no-op.
///
/// # Safety
///
/// `text` must be null or a pointer previously returned by this interface
/// and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn octmpc_string_free(text: *mut c_char) {
    if !text.is_null() {
        drop(unsafe { CString::from_raw(text) });
    }
}

/// Runs the offline design pipeline for the scenario in `config_json` and
/// writes the resulting design artifact as JSON to `*artifact_json_out`
/// (caller-owned; release with `octmpc_string_free()`).
///
/// This performs the full synthesis — terminal ingredients, baseline tube
/// design, tightening optimization — and can take seconds for long horizons.
///
/// # Safety
///
/// `config_json` must be a NUL-terminated string and `artifact_json_out` a
/// valid location to store a pointer.
#[no_mangle]
pub unsafe extern "C" fn octmpc_design_json(
    config_json: *const c_char,
    artifact_json_out: *mut *mut c_char,
) -> OctMpcStatus {
    guard(|| {
        let text = unsafe { utf8_argument(config_json, "config_json") }?;
        if artifact_json_out.is_null() {
            return Err(null_argument("artifact_json_out"));
        }
        unsafe { artifact_json_out.write(std::ptr::null_mut()) };
        let config = ScenarioConfig::from_json(text).map_err(failed)?;
        let artifact = design_artifact(&config)?;
        let json = artifact.to_json().map_err(failed)?;
        unsafe { artifact_json_out.write(into_c_string(json)) };
        Ok(())
    })
}

/// Builds the named controller ("oct", "tmpc", "fpd" or "nominal") from a
/// scenario and a design artifact, both as JSON text.  The artifact must
/// have been produced for exactly this scenario (a fingerprint is checked).
/// On success `*controller_out` receives the handle; release it with
/// `octmpc_controller_free()`.
///
/// # Safety
///
/// The three strings must be NUL-terminated and `controller_out` a valid
/// location to store a pointer.
#[no_mangle]
pub unsafe extern "C" fn octmpc_controller_new_from_json(
    config_json: *const c_char,
    artifact_json: *const c_char,
    controller_name: *const c_char,
    controller_out: *mut *mut OctMpcController,
) -> OctMpcStatus {
    guard(|| {
        let config_text = unsafe { utf8_argument(config_json, "config_json") }?;
        let artifact_text = unsafe { utf8_argument(artifact_json, "artifact_json") }?;
        let name = unsafe { utf8_argument(controller_name, "controller_name") }?;
        if controller_out.is_null() {
            return Err(null_argument("controller_out"));
        }
        unsafe { controller_out.write(std::ptr::null_mut()) };
        let config = ScenarioConfig::from_json(config_text).map_err(failed)?;
        let artifact = DesignArtifact::from_json(artifact_text).map_err(failed)?;
        let handle = build_handle(&config, &artifact, name)?;
        unsafe { controller_out.write(Box::into_raw(handle)) };
        Ok(())
    })
}

/// File-path variant of `octmpc_controller_new_from_json`.  The scenario may
/// be `.json` or `.toml`; the artifact is the JSON file written by the
/// design step.
///
/// # Safety
///
/// The three strings must be NUL-terminated paths and `controller_out` a
/// valid location to store a pointer.
#[no_mangle]
pub unsafe extern "C" fn octmpc_controller_new_from_files(
    config_path: *const c_char,
    artifact_path: *const c_char,
    controller_name: *const c_char,
    controller_out: *mut *mut OctMpcController,
) -> OctMpcStatus {
    guard(|| {
        let config_path = unsafe { utf8_argument(config_path, "config_path") }?;
        let artifact_path = unsafe { utf8_argument(artifact_path, "artifact_path") }?;
        let name = unsafe { utf8_argument(controller_name, "controller_name") }?;
        if controller_out.is_null() {
            return Err(null_argument("controller_out"));
        }
        unsafe { controller_out.write(std::ptr::null_mut()) };
        let config = load_config(Path::new(config_path)).map_err(failed)?;
        let artifact = DesignArtifact::load(Path::new(artifact_path)).map_err(failed)?;
        let handle = build_handle(&config, &artifact, name)?;
        unsafe { controller_out.write(Box::into_raw(handle)) };
        Ok(())
    })
}

/// Releases a controller handle.  Passing null is a no-op.
///
/// # Safety
///
/// `controller` must be null or a pointer previously returned by a
/// constructor and not yet freed; no other thread may be using it.
#[no_mangle]
pub unsafe extern "C" fn octmpc_controller_free(controller: *mut OctMpcController) {
    if !controller.is_null() {
        drop(unsafe { Box::from_raw(controller) });
    }
}

/// State dimension of the plant, or 0 if `controller` is null.
///
/// # Safety
///
/// `controller` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn octmpc_controller_state_dim(
    controller: *const OctMpcController,
) -> usize {
    unsafe { controller.as_ref() }.map_or(0, |c| c.system.n_x())
}

/// Input dimension of the plant, or 0 if `controller` is null.
///
/// # Safety
///
/// `controller` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn octmpc_controller_input_dim(
    controller: *const OctMpcController,
) -> usize {
    unsafe { controller.as_ref() }.map_or(0, |c| c.system.n_u())
}

/// Prediction horizon of the controller, or 0 if `controller` is null.
///
/// # Safety
///
/// `controller` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn octmpc_controller_horizon(controller: *const OctMpcController) -> usize {
    unsafe { controller.as_ref() }.map_or(0, |c| c.inner.horizon())
}

/// Decision-variable count of the online problem, or 0 if `controller` is
/// null.
///
/// # Safety
///
/// `controller` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn octmpc_controller_num_variables(
    controller: *const OctMpcController,
) -> usize {
    unsafe { controller.as_ref() }.map_or(0, |c| c.inner.num_variables())
}

/// Constraint-row count of the online problem, or 0 if `controller` is
/// null.
///
/// # Safety
///
/// `controller` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn octmpc_controller_num_constraints(
    controller: *const OctMpcController,
) -> usize {
    unsafe { controller.as_ref() }.map_or(0, |c| c.inner.num_constraints())
}

/// Solves the receding-horizon problem at the measured state and writes the
/// input to apply into `input_out`.
///
/// `state` must hold exactly `octmpc_controller_state_dim()` entries and
/// `input_out` exactly `octmpc_controller_input_dim()`.  `result_out` may be
/// null when only the input is of interest.
///
/// An infeasible state is not an error: the call returns `OK` with
/// `result_out->feasible == false` and `input_out` NaN-filled.  Once the
/// arguments validate, the buffers are defined on every return (NaN-filled
/// until a plan overwrites them); argument failures leave them untouched.
///
/// # Safety
///
/// `controller` must be a live handle and the buffers valid for the stated
/// lengths.
#[no_mangle]
pub unsafe extern "C" fn octmpc_controller_step(
    controller: *const OctMpcController,
    state: *const f64,
    state_len: usize,
    input_out: *mut f64,
    input_len: usize,
    result_out: *mut OctMpcStepResult,
) -> OctMpcStatus {
    guard(|| {
        let Some(ctrl) = (unsafe { controller.as_ref() }) else {
            return Err(null_argument("controller"));
        };
        if state.is_null() {
            return Err(null_argument("state"));
        }
        if input_out.is_null() {
            return Err(null_argument("input_out"));
        }
        let (n_x, n_u) = (ctrl.system.n_x(), ctrl.system.n_u());
        if state_len != n_x {
            return Err(invalid_argument(format!(
                "state_len is {state_len} but the state dimension is {n_x}"
            )));
        }
        if input_len != n_u {
            return Err(invalid_argument(format!(
                "input_len is {input_len} but the input dimension is {n_u}"
            )));
        }
        // Defined outputs on every path: NaN input and an infeasible result
        // until a plan overwrites them.
        let input = unsafe { std::slice::from_raw_parts_mut(input_out, input_len) };
        input.fill(f64::NAN);
        if !result_out.is_null() {
            unsafe {
                result_out.write(OctMpcStepResult {
                    feasible: false,
                    objective: f64::NAN,
                    solve_time: 0.0,
                });
            }
        }
        let x = DVector::from_column_slice(unsafe { std::slice::from_raw_parts(state, state_len) });
        let decision = ctrl.inner.step(&x).map_err(failed)?;
        if !result_out.is_null() {
            unsafe { (*result_out).solve_time = decision.solve_time };
        }
        if let Some(plan) = &decision.plan {
            input.copy_from_slice(plan.inputs[0].as_slice());
            if !result_out.is_null() {
                unsafe {
                    (*result_out).feasible = true;
                    (*result_out).objective = plan.objective;
                }
            }
        }
        Ok(())
    })
}
