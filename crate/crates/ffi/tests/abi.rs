//! Exercises the C interface end to end through the exported functions:
//! design from JSON, controller construction (strings and files), stepping
//! on raw buffers, and the null/encoding/mismatch failure paths.

use std::ffi::{CStr, CString};
use std::os::raw::c_char;
use std::ptr;
use std::sync::OnceLock;

use octmpc::{
    octmpc_controller_free, octmpc_controller_horizon, octmpc_controller_input_dim,
    octmpc_controller_new_from_files, octmpc_controller_new_from_json,
    octmpc_controller_num_constraints, octmpc_controller_num_variables,
    octmpc_controller_state_dim, octmpc_controller_step, octmpc_design_json, octmpc_last_error,
    octmpc_string_free, octmpc_version, OctMpcController, OctMpcStatus, OctMpcStepResult,
};

const SCALAR_CONFIG: &str = include_str!("../../../configs/scalar.json");
const SYSTEM1_CONFIG: &str = include_str!("../../../configs/system1.json");

/// The scalar design artifact, computed once and shared by the tests.
fn scalar_artifact() -> &'static str {
    static ARTIFACT: OnceLock<String> = OnceLock::new();
    ARTIFACT.get_or_init(|| {
        let config = CString::new(SCALAR_CONFIG).expect("config has no NUL bytes");
        let mut out: *mut c_char = ptr::null_mut();
        let status = unsafe { octmpc_design_json(config.as_ptr(), &mut out) };
        assert_eq!(status, OctMpcStatus::Ok, "scalar design succeeds");
        assert!(!out.is_null(), "success fills the out parameter");
        let text = unsafe { CStr::from_ptr(out) }.to_str().expect("artifact is UTF-8").to_string();
        unsafe { octmpc_string_free(out) };
        text
    })
}

/// Builds a controller for the scalar scenario through the string entry point.
fn scalar_controller(name: &str) -> *mut OctMpcController {
    let config = CString::new(SCALAR_CONFIG).expect("config has no NUL bytes");
    let artifact = CString::new(scalar_artifact()).expect("artifact has no NUL bytes");
    let name = CString::new(name).expect("name has no NUL bytes");
    let mut handle: *mut OctMpcController = ptr::null_mut();
    let status = unsafe {
        octmpc_controller_new_from_json(
            config.as_ptr(),
            artifact.as_ptr(),
            name.as_ptr(),
            &mut handle,
        )
    };
    assert_eq!(status, OctMpcStatus::Ok, "controller construction succeeds");
    assert!(!handle.is_null(), "success fills the handle");
    handle
}

/// Steps a handle on plain buffers and returns everything it wrote.
fn step(handle: *mut OctMpcController, state: &[f64]) -> (OctMpcStatus, Vec<f64>, OctMpcStepResult) {
    let n_u = unsafe { octmpc_controller_input_dim(handle) };
    let mut input = vec![0.0f64; n_u];
    let mut result =
        OctMpcStepResult { feasible: true, objective: -1.0, solve_time: -1.0 };
    let status = unsafe {
        octmpc_controller_step(
            handle,
            state.as_ptr(),
            state.len(),
            input.as_mut_ptr(),
            input.len(),
            &mut result,
        )
    };
    (status, input, result)
}

fn last_error_text() -> String {
    let ptr = octmpc_last_error();
    assert!(!ptr.is_null(), "a failing call records a message");
    unsafe { CStr::from_ptr(ptr) }.to_str().expect("error text is UTF-8").to_string()
}

#[test]
fn version_is_a_static_string() {
    let ptr = octmpc_version();
    assert!(!ptr.is_null());
    let version = unsafe { CStr::from_ptr(ptr) }.to_str().expect("version is UTF-8");
    assert_eq!(version, env!("CARGO_PKG_VERSION"));
}

#[test]
fn design_and_step_roundtrip() {
    // The artifact produced over the boundary is the same schema the core
    // crate reads back.
    let parsed = oct_mpc::artifact::DesignArtifact::from_json(scalar_artifact())
        .expect("artifact round-trips through the core schema");
    assert_eq!(parsed.horizon, 3);

    let handle = scalar_controller("oct");
    assert_eq!(unsafe { octmpc_controller_state_dim(handle) }, 1);
    assert_eq!(unsafe { octmpc_controller_input_dim(handle) }, 1);
    assert_eq!(unsafe { octmpc_controller_horizon(handle) }, 3);
    assert!(unsafe { octmpc_controller_num_variables(handle) } > 0);
    assert!(unsafe { octmpc_controller_num_constraints(handle) } > 0);

    // At the origin the optimal plan is to do nothing.
    let (status, input, result) = step(handle, &[0.0]);
    assert_eq!(status, OctMpcStatus::Ok);
    assert!(result.feasible);
    assert!(input[0].abs() <= 1e-6, "origin input is zero, got {}", input[0]);
    assert!(result.objective.abs() <= 1e-6, "origin cost is zero, got {}", result.objective);
    assert!(result.solve_time > 0.0);

    // Far outside the state bound |x| <= 5 there is no plan; that is an
    // infeasibility report, not an error.
    let (status, input, result) = step(handle, &[100.0]);
    assert_eq!(status, OctMpcStatus::Ok);
    assert!(!result.feasible);
    assert!(input[0].is_nan());
    assert!(result.objective.is_nan());

    unsafe { octmpc_controller_free(handle) };
    // Null frees are no-ops.
    unsafe { octmpc_controller_free(ptr::null_mut()) };
    unsafe { octmpc_string_free(ptr::null_mut()) };
}

#[test]
fn every_controller_name_constructs() {
    for name in ["oct", "tmpc", "fpd", "nominal"] {
        let handle = scalar_controller(name);
        let (status, _, result) = step(handle, &[0.25]);
        assert_eq!(status, OctMpcStatus::Ok, "{name} steps from a feasible state");
        assert!(result.feasible, "{name} is feasible at x = 0.25");
        unsafe { octmpc_controller_free(handle) };
    }
}

#[test]
fn dimension_and_null_checks() {
    let handle = scalar_controller("oct");

    let state = [0.0f64, 0.0];
    let mut input = [0.0f64];
    let mut result = OctMpcStepResult { feasible: false, objective: 0.0, solve_time: 0.0 };
    let status = unsafe {
        octmpc_controller_step(handle, state.as_ptr(), 2, input.as_mut_ptr(), 1, &mut result)
    };
    assert_eq!(status, OctMpcStatus::InvalidArgument);
    assert!(last_error_text().contains("state_len"));

    let status = unsafe {
        octmpc_controller_step(handle, state.as_ptr(), 1, input.as_mut_ptr(), 0, &mut result)
    };
    assert_eq!(status, OctMpcStatus::InvalidArgument);
    assert!(last_error_text().contains("input_len"));

    let status = unsafe {
        octmpc_controller_step(handle, ptr::null(), 1, input.as_mut_ptr(), 1, &mut result)
    };
    assert_eq!(status, OctMpcStatus::NullArgument);

    let status = unsafe {
        octmpc_controller_step(handle, state.as_ptr(), 1, ptr::null_mut(), 1, &mut result)
    };
    assert_eq!(status, OctMpcStatus::NullArgument);

    let status = unsafe {
        octmpc_controller_step(
            ptr::null(),
            state.as_ptr(),
            1,
            input.as_mut_ptr(),
            1,
            &mut result,
        )
    };
    assert_eq!(status, OctMpcStatus::NullArgument);

    // The result pointer is optional: a step without one still works.
    let status = unsafe {
        octmpc_controller_step(handle, state.as_ptr(), 1, input.as_mut_ptr(), 1, ptr::null_mut())
    };
    assert_eq!(status, OctMpcStatus::Ok);

    // Getters degrade to zero on null handles.
    assert_eq!(unsafe { octmpc_controller_state_dim(ptr::null()) }, 0);
    assert_eq!(unsafe { octmpc_controller_input_dim(ptr::null()) }, 0);
    assert_eq!(unsafe { octmpc_controller_horizon(ptr::null()) }, 0);
    assert_eq!(unsafe { octmpc_controller_num_variables(ptr::null()) }, 0);
    assert_eq!(unsafe { octmpc_controller_num_constraints(ptr::null()) }, 0);

    let config = CString::new(SCALAR_CONFIG).unwrap();
    let artifact = CString::new(scalar_artifact()).unwrap();
    let name = CString::new("oct").unwrap();
    let status = unsafe {
        octmpc_controller_new_from_json(
            config.as_ptr(),
            artifact.as_ptr(),
            name.as_ptr(),
            ptr::null_mut(),
        )
    };
    assert_eq!(status, OctMpcStatus::NullArgument);

    unsafe { octmpc_controller_free(handle) };
}

#[test]
fn config_and_artifact_errors() {
    // Malformed scenario JSON.
    let bad = CString::new("{ this is not json").unwrap();
    let mut out: *mut c_char = ptr::null_mut();
    let status = unsafe { octmpc_design_json(bad.as_ptr(), &mut out) };
    assert_eq!(status, OctMpcStatus::Config);
    assert!(out.is_null(), "failure leaves the out parameter null");
    assert!(!last_error_text().is_empty());

    // Null arguments on the design entry point.
    let status = unsafe { octmpc_design_json(ptr::null(), &mut out) };
    assert_eq!(status, OctMpcStatus::NullArgument);
    let good = CString::new(SCALAR_CONFIG).unwrap();
    let status = unsafe { octmpc_design_json(good.as_ptr(), ptr::null_mut()) };
    assert_eq!(status, OctMpcStatus::NullArgument);

    // Non-UTF-8 input is rejected, not misread.
    let latin1 = CString::new(vec![0xFFu8, 0x28]).unwrap();
    let status = unsafe { octmpc_design_json(latin1.as_ptr(), &mut out) };
    assert_eq!(status, OctMpcStatus::InvalidArgument);
    assert!(last_error_text().contains("UTF-8"));

    // An artifact only pairs with the scenario it was designed for.
    let other = CString::new(SYSTEM1_CONFIG).unwrap();
    let artifact = CString::new(scalar_artifact()).unwrap();
    let name = CString::new("oct").unwrap();
    let mut handle: *mut OctMpcController = ptr::null_mut();
    let status = unsafe {
        octmpc_controller_new_from_json(
            other.as_ptr(),
            artifact.as_ptr(),
            name.as_ptr(),
            &mut handle,
        )
    };
    assert_eq!(status, OctMpcStatus::Config);
    assert!(handle.is_null());

    // Unknown controller name.
    let scalar = CString::new(SCALAR_CONFIG).unwrap();
    let bogus = CString::new("bogus").unwrap();
    let status = unsafe {
        octmpc_controller_new_from_json(
            scalar.as_ptr(),
            artifact.as_ptr(),
            bogus.as_ptr(),
            &mut handle,
        )
    };
    assert_eq!(status, OctMpcStatus::InvalidArgument);

    // Malformed artifact JSON.
    let empty = CString::new("{}").unwrap();
    let status = unsafe {
        octmpc_controller_new_from_json(
            scalar.as_ptr(),
            empty.as_ptr(),
            name.as_ptr(),
            &mut handle,
        )
    };
    assert_eq!(status, OctMpcStatus::Config);
}

#[test]
fn file_based_construction_roundtrip() {
    let dir = tempfile::tempdir().expect("temp dir");
    let config_path = dir.path().join("scalar.json");
    let artifact_path = dir.path().join("scalar.design.json");
    std::fs::write(&config_path, SCALAR_CONFIG).expect("write config");
    std::fs::write(&artifact_path, scalar_artifact()).expect("write artifact");

    let config = CString::new(config_path.to_str().unwrap()).unwrap();
    let artifact = CString::new(artifact_path.to_str().unwrap()).unwrap();
    let name = CString::new("tmpc").unwrap();
    let mut handle: *mut OctMpcController = ptr::null_mut();
    let status = unsafe {
        octmpc_controller_new_from_files(
            config.as_ptr(),
            artifact.as_ptr(),
            name.as_ptr(),
            &mut handle,
        )
    };
    assert_eq!(status, OctMpcStatus::Ok);
    let (status, _, result) = step(handle, &[1.0]);
    assert_eq!(status, OctMpcStatus::Ok);
    assert!(result.feasible);
    unsafe { octmpc_controller_free(handle) };

    // A missing artifact file surfaces as an I/O failure.
    let missing = CString::new(dir.path().join("absent.json").to_str().unwrap()).unwrap();
    let status = unsafe {
        octmpc_controller_new_from_files(
            config.as_ptr(),
            missing.as_ptr(),
            name.as_ptr(),
            &mut handle,
        )
    };
    assert_eq!(status, OctMpcStatus::Io);
    assert!(handle.is_null());
}
