//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by the offline design pipeline, the online controllers
/// and the supporting geometry/solver layers.
///
/// Variants are grouped by the way callers are expected to react: input
/// shape problems ([`Error::Dimension`], [`Error::Invalid`],
/// [`Error::Config`]) are programming or configuration mistakes;
/// [`Error::Infeasible`] and [`Error::Unbounded`] are well-posed
/// mathematical outcomes that a caller may handle; the remaining variants
/// report numerical breakdown or I/O failure.
#[derive(Debug, Error)]
pub enum Error {
    /// Operands have inconsistent shapes.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// Structurally or numerically invalid input (non-finite entries,
    /// asymmetric weight matrices, zero constraint normals, ...).
    #[error("invalid input: {0}")]
    Invalid(String),

    /// Scenario configuration could not be parsed or failed validation.
    #[error("configuration error: {0}")]
    Config(String),

    /// A feasibility problem (support LP, invariant-set step, design
    /// program, online QP probe) has an empty feasible set.
    #[error("infeasible: {0}")]
    Infeasible(String),

    /// A support direction is unbounded over the given set.
    #[error("unbounded: {0}")]
    Unbounded(String),

    /// An iteration failed to converge within its limit.
    #[error("no convergence: {0} (after {iterations} iterations)", iterations = .1)]
    NoConvergence(String, usize),

    /// The underlying conic solver broke down; the message carries its
    /// diagnostics.
    #[error("solver failure: {0}")]
    Solver(String),

    /// A design artifact does not match the scenario configuration it is
    /// used with.
    #[error("artifact mismatch: {0}")]
    ArtifactMismatch(String),

    /// File I/O failure.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// JSON (de)serialization failure.
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
