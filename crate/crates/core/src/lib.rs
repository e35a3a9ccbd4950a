//! Robust model-predictive control for linear systems with additive,
//! bounded disturbances.
//!
//! The toolkit separates controller synthesis into an offline and an online
//! phase.  Offline, a disturbance-feedback policy with a Toeplitz block
//! structure is optimized so that the constraint tightenings it induces are
//! as small as possible; the result is packaged into a design artifact
//! together with terminal ingredients and dual certificates.  Online, a
//! standard quadratic program over the nominal trajectory is solved at every
//! step, so the per-step cost is that of nominal MPC.
//!
//! Two baselines are provided for comparison: tube MPC with a fixed
//! stabilizing gain (`tmpc`) and full online disturbance-feedback
//! optimization (`fpd`), together with simulation, region-of-attraction and
//! benchmarking drivers.
//!
//! Modules are layered bottom-up:
//!
//! * [`conic`] — a uniform interface over LP/QP/SOCP solves,
//! * [`polytope`] — H-representation polytope arithmetic and invariant sets,
//! * [`model`] — system, constraint and cost data,
//! * [`prediction`] — stacked prediction operators and feedback structure,
//! * [`design`] — offline gain/tightening synthesis and terminal ingredients,
//! * [`controller`] — online controllers (optimized, tube, nominal, full
//!   disturbance feedback),
//! * [`sim`] — closed-loop simulation, region-of-attraction estimation,
//!   cost and timing benchmarks,
//! * [`config`] / [`artifact`] — serialized scenario and design-output
//!   schemas shared by the command-line driver.

pub mod artifact;
pub mod config;
pub mod conic;
pub mod controller;
pub mod design;
mod error;
pub mod model;
pub mod polytope;
pub mod prediction;
pub mod sim;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
