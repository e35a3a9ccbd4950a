//! System, constraint and cost data for the controlled plant.
//!
//! The plant is the discrete-time linear system
//!
//! ```text
//! x⁺ = A x + B u + B_w w,      w ∈ W (compact polytope),
//! ```
//!
//! subject to mixed state–input constraints `F x + G u ≤ b` at every stage.
//! [`LinearSystem`] bundles these together with the disturbance set;
//! [`CostWeights`] holds the stage cost pair `(Q, R)`.  A forward-Euler
//! helper converts continuous-time matrices at a fixed sampling time.
//!
//! Serialization uses nested row-major arrays and is bit-exact on
//! round-trip: JSON numbers are written with shortest-round-trip
//! formatting, and deserialization re-runs the same constructor
//! validation, so `parse(serialize(s))` reproduces every matrix entry
//! exactly.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::polytope::PolytopeH;
use crate::{Error, Result};

/// Converts a matrix to nested row-major arrays.
pub(crate) fn mat_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|r| m.row(r).iter().copied().collect())
        .collect()
}

/// Builds a matrix from nested row-major arrays.
pub(crate) fn mat_from_rows(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    if rows.is_empty() {
        return Err(Error::Invalid(format!("{what}: empty matrix")));
    }
    let cols = rows[0].len();
    if cols == 0 || rows.iter().any(|r| r.len() != cols) {
        return Err(Error::Invalid(format!("{what}: ragged or zero-width matrix")));
    }
    Ok(DMatrix::from_row_iterator(
        rows.len(),
        cols,
        rows.iter().flatten().copied(),
    ))
}

/// Discrete-time linear system with additive bounded disturbance and
/// per-stage mixed constraints.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    /// State transition matrix `A` (`n_x × n_x`).
    pub a: DMatrix<f64>,
    /// Input matrix `B` (`n_x × n_u`).
    pub b: DMatrix<f64>,
    /// Disturbance input matrix `B_w` (`n_x × n_w`).
    pub b_w: DMatrix<f64>,
    /// Stage constraint state coefficients `F` (`n_c × n_x`).
    pub f: DMatrix<f64>,
    /// Stage constraint input coefficients `G` (`n_c × n_u`).
    pub g: DMatrix<f64>,
    /// Stage constraint right-hand side `b` (`n_c`).
    pub b_rhs: DVector<f64>,
    /// Disturbance polytope `W ⊂ ℝ^{n_w}`.
    pub w: PolytopeH,
}

/// Outcome of [`LinearSystem::validate`]: hard violations and advisory
/// warnings, each as a human-readable message.
#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    /// Conditions the design pipeline cannot work without.
    pub violations: Vec<String>,
    /// Conditions worth flagging that are not outright errors.
    pub warnings: Vec<String>,
}

impl ValidationReport {
    /// True when no hard violation was found.
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl LinearSystem {
    /// Builds a system after checking that all matrix dimensions are
    /// mutually consistent and all entries finite.
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        b_w: DMatrix<f64>,
        f: DMatrix<f64>,
        g: DMatrix<f64>,
        b_rhs: DVector<f64>,
        w: PolytopeH,
    ) -> Result<Self> {
        let n_x = a.nrows();
        if a.ncols() != n_x {
            return Err(Error::Dimension(format!(
                "A must be square, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if b.nrows() != n_x {
            return Err(Error::Dimension(format!(
                "B has {} rows, expected {n_x}",
                b.nrows()
            )));
        }
        if b_w.nrows() != n_x {
            return Err(Error::Dimension(format!(
                "B_w has {} rows, expected {n_x}",
                b_w.nrows()
            )));
        }
        if b_w.ncols() != w.dim() {
            return Err(Error::Dimension(format!(
                "B_w has {} columns but W has dimension {}",
                b_w.ncols(),
                w.dim()
            )));
        }
        if f.ncols() != n_x {
            return Err(Error::Dimension(format!(
                "F has {} columns, expected {n_x}",
                f.ncols()
            )));
        }
        if g.nrows() != f.nrows() || g.ncols() != b.ncols() {
            return Err(Error::Dimension(format!(
                "G is {}x{}, expected {}x{}",
                g.nrows(),
                g.ncols(),
                f.nrows(),
                b.ncols()
            )));
        }
        if b_rhs.len() != f.nrows() {
            return Err(Error::Dimension(format!(
                "constraint rhs has length {}, expected {}",
                b_rhs.len(),
                f.nrows()
            )));
        }
        let finite = a.iter().all(|v| v.is_finite())
            && b.iter().all(|v| v.is_finite())
            && b_w.iter().all(|v| v.is_finite())
            && f.iter().all(|v| v.is_finite())
            && g.iter().all(|v| v.is_finite())
            && b_rhs.iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::Invalid("system matrices contain non-finite entries".into()));
        }
        Ok(LinearSystem { a, b, b_w, f, g, b_rhs, w })
    }

    /// Builds a system with independent box constraints `|x_i| ≤ x_max_i`,
    /// `|u_j| ≤ u_max_j`.  Constraint rows are ordered: state upper, state
    /// lower, input upper, input lower.
    pub fn with_box_constraints(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        b_w: DMatrix<f64>,
        state_bounds: &[f64],
        input_bounds: &[f64],
        w: PolytopeH,
    ) -> Result<Self> {
        let n_x = a.nrows();
        let n_u = b.ncols();
        if state_bounds.len() != n_x || input_bounds.len() != n_u {
            return Err(Error::Dimension(format!(
                "expected {n_x} state bounds and {n_u} input bounds, got {} and {}",
                state_bounds.len(),
                input_bounds.len()
            )));
        }
        let n_c = 2 * n_x + 2 * n_u;
        let mut f = DMatrix::zeros(n_c, n_x);
        let mut g = DMatrix::zeros(n_c, n_u);
        let mut rhs = DVector::zeros(n_c);
        for i in 0..n_x {
            f[(i, i)] = 1.0;
            rhs[i] = state_bounds[i];
            f[(n_x + i, i)] = -1.0;
            rhs[n_x + i] = state_bounds[i];
        }
        for j in 0..n_u {
            g[(2 * n_x + j, j)] = 1.0;
            rhs[2 * n_x + j] = input_bounds[j];
            g[(2 * n_x + n_u + j, j)] = -1.0;
            rhs[2 * n_x + n_u + j] = input_bounds[j];
        }
        LinearSystem::new(a, b, b_w, f, g, rhs, w)
    }

    /// State dimension.
    pub fn n_x(&self) -> usize {
        self.a.nrows()
    }

    /// Input dimension.
    pub fn n_u(&self) -> usize {
        self.b.ncols()
    }

    /// Disturbance dimension.
    pub fn n_w(&self) -> usize {
        self.b_w.ncols()
    }

    /// Number of stage constraint rows.
    pub fn n_c(&self) -> usize {
        self.f.nrows()
    }

    /// Semantic checks beyond dimensions: the disturbance set must be
    /// bounded and contain the origin, and the origin should be strictly
    /// feasible for the stage constraints (a warning if it merely is
    /// feasible on the boundary or not at all).
    pub fn validate(&self) -> Result<ValidationReport> {
        let mut report = ValidationReport::default();
        if !self.w.is_bounded()? {
            report.violations.push("disturbance set W is unbounded".into());
        }
        let zero_w = DVector::zeros(self.n_w());
        if !self.w.contains(&zero_w, 1e-9) {
            report
                .violations
                .push("disturbance set W does not contain the origin".into());
        }
        let min_slack = self.b_rhs.min();
        if min_slack <= 0.0 {
            report.warnings.push(format!(
                "origin is not strictly feasible for the stage constraints (min b = {min_slack:.3e})"
            ));
        }
        Ok(report)
    }
}

#[derive(Serialize, Deserialize)]
struct LinearSystemJson {
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    b_mat: Vec<Vec<f64>>,
    #[serde(rename = "Bw")]
    b_w: Vec<Vec<f64>>,
    #[serde(rename = "F")]
    f: Vec<Vec<f64>>,
    #[serde(rename = "G")]
    g: Vec<Vec<f64>>,
    b: Vec<f64>,
    #[serde(rename = "W")]
    w: PolytopeH,
}

impl Serialize for LinearSystem {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        LinearSystemJson {
            a: mat_to_rows(&self.a),
            b_mat: mat_to_rows(&self.b),
            b_w: mat_to_rows(&self.b_w),
            f: mat_to_rows(&self.f),
            g: mat_to_rows(&self.g),
            b: self.b_rhs.iter().copied().collect(),
            w: self.w.clone(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for LinearSystem {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = LinearSystemJson::deserialize(deserializer)?;
        let build = || -> Result<LinearSystem> {
            LinearSystem::new(
                mat_from_rows(&raw.a, "A")?,
                mat_from_rows(&raw.b_mat, "B")?,
                mat_from_rows(&raw.b_w, "Bw")?,
                mat_from_rows(&raw.f, "F")?,
                mat_from_rows(&raw.g, "G")?,
                DVector::from_vec(raw.b.clone()),
                raw.w.clone(),
            )
        };
        build().map_err(serde::de::Error::custom)
    }
}

/// Stage cost weights `(Q, R)` for `Σ xᵀQx + uᵀRu`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostWeights {
    /// State weight, symmetric positive semidefinite.
    pub q: DMatrix<f64>,
    /// Input weight, symmetric positive definite.
    pub r: DMatrix<f64>,
}

impl CostWeights {
    /// Validates symmetry (to `1e-10`) and definiteness: `Q ⪰ 0`, `R ≻ 0`.
    pub fn new(q: DMatrix<f64>, r: DMatrix<f64>) -> Result<Self> {
        check_symmetric(&q, "Q")?;
        check_symmetric(&r, "R")?;
        let q_min = min_eigenvalue(&q);
        if q_min < -1e-10 * (1.0 + q.abs().max()) {
            return Err(Error::Invalid(format!(
                "Q is not positive semidefinite (min eigenvalue {q_min:.3e})"
            )));
        }
        let r_min = min_eigenvalue(&r);
        if r_min <= 1e-12 * (1.0 + r.abs().max()) {
            return Err(Error::Invalid(format!(
                "R is not positive definite (min eigenvalue {r_min:.3e})"
            )));
        }
        Ok(CostWeights { q, r })
    }

    /// Identity weights of the given sizes.
    pub fn identity(n_x: usize, n_u: usize) -> Self {
        CostWeights {
            q: DMatrix::identity(n_x, n_x),
            r: DMatrix::identity(n_u, n_u),
        }
    }
}

fn check_symmetric(m: &DMatrix<f64>, name: &str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::Dimension(format!(
            "{name} must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if !m.iter().all(|v| v.is_finite()) {
        return Err(Error::Invalid(format!("{name} contains non-finite entries")));
    }
    let asym = (m - m.transpose()).abs().max();
    if asym > 1e-10 {
        return Err(Error::Invalid(format!(
            "{name} is asymmetric (max deviation {asym:.3e})"
        )));
    }
    Ok(())
}

fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    ((m + m.transpose()) * 0.5)
        .symmetric_eigenvalues()
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// Forward-Euler discretization `A = I + Δt·A_c`, `B = Δt·B_c`,
/// `B_w = Δt·B_wc`.
///
/// # Errors
///
/// [`Error::Invalid`] for a non-positive sampling time,
/// [`Error::Dimension`] for inconsistent shapes.
pub fn forward_euler_discretize(
    a_c: &DMatrix<f64>,
    b_c: &DMatrix<f64>,
    b_wc: &DMatrix<f64>,
    dt: f64,
) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::Invalid(format!("sampling time must be positive, got {dt}")));
    }
    let n = a_c.nrows();
    if a_c.ncols() != n || b_c.nrows() != n || b_wc.nrows() != n {
        return Err(Error::Dimension(
            "continuous-time matrices have inconsistent row counts".into(),
        ));
    }
    let a = DMatrix::identity(n, n) + a_c * dt;
    let b = b_c * dt;
    let b_w = b_wc * dt;
    Ok((a, b, b_w))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    pub(crate) fn double_integrator_like() -> LinearSystem {
        // Forward-Euler discretization of a lightly damped oscillator with
        // input gain 20 and unit disturbance gain at Δt = 0.1.
        let a_c = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, -0.1]);
        let b_c = DMatrix::from_row_slice(2, 1, &[0.0, 20.0]);
        let b_wc = DMatrix::identity(2, 2);
        let (a, b, b_w) = forward_euler_discretize(&a_c, &b_c, &b_wc, 0.1).unwrap();
        let w = PolytopeH::from_box(&[-2.0, -5.0], &[2.0, 5.0]).unwrap();
        LinearSystem::with_box_constraints(a, b, b_w, &[25.0, 25.0], &[1.0], w).unwrap()
    }

    #[test]
    fn forward_euler_matches_hand_computation() {
        let sys = double_integrator_like();
        let a_expected = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, -0.1, 0.99]);
        let b_expected = DMatrix::from_row_slice(2, 1, &[0.0, 2.0]);
        assert_abs_diff_eq!(sys.a, a_expected, epsilon = 1e-15);
        assert_abs_diff_eq!(sys.b, b_expected, epsilon = 1e-15);
        assert_abs_diff_eq!(sys.b_w, DMatrix::identity(2, 2) * 0.1, epsilon = 1e-15);
        assert_eq!((sys.n_x(), sys.n_u(), sys.n_w(), sys.n_c()), (2, 1, 2, 6));
    }

    #[test]
    fn euler_identity_dynamics_stay_identity() {
        let zero = DMatrix::zeros(1, 1);
        let (a, b, _) = forward_euler_discretize(&zero, &zero, &zero, 0.5).unwrap();
        assert_abs_diff_eq!(a[(0, 0)], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(b[(0, 0)], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn nonpositive_sampling_time_is_rejected() {
        let zero = DMatrix::zeros(1, 1);
        assert!(forward_euler_discretize(&zero, &zero, &zero, 0.0).is_err());
        assert!(forward_euler_discretize(&zero, &zero, &zero, -0.1).is_err());
    }

    #[test]
    fn validation_passes_for_well_posed_system() {
        let report = double_integrator_like().validate().unwrap();
        assert!(report.is_ok());
        assert!(report.warnings.is_empty());
    }

    #[test]
    fn validation_flags_unbounded_disturbance_set() {
        let mut sys = double_integrator_like();
        // Half-space: w₁ ≤ 1 only.
        sys.w = PolytopeH::new(
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            DVector::from_vec(vec![1.0]),
        )
        .unwrap();
        let report = sys.validate().unwrap();
        assert!(!report.is_ok());
    }

    #[test]
    fn validation_flags_origin_outside_disturbance_set() {
        let mut sys = double_integrator_like();
        sys.w = PolytopeH::from_box(&[1.0, 1.0], &[2.0, 2.0]).unwrap();
        let report = sys.validate().unwrap();
        assert!(!report.is_ok());
    }

    #[test]
    fn validation_warns_on_boundary_origin() {
        let mut sys = double_integrator_like();
        sys.b_rhs[0] = 0.0;
        let report = sys.validate().unwrap();
        assert!(report.is_ok());
        assert_eq!(report.warnings.len(), 1);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let w = PolytopeH::from_symmetric_bounds(&[1.0]).unwrap();
        let r = LinearSystem::new(
            DMatrix::identity(2, 2) * 0.5,
            DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]), // W is 1-D
            DMatrix::identity(2, 2),
            DMatrix::zeros(2, 1),
            DVector::from_vec(vec![1.0, 1.0]),
            w,
        );
        assert!(matches!(r, Err(Error::Dimension(_))));
    }

    #[test]
    fn serialization_round_trips_bit_exactly() {
        let sys = double_integrator_like();
        let json = serde_json::to_string(&sys).unwrap();
        let back: LinearSystem = serde_json::from_str(&json).unwrap();
        assert_eq!(sys, back);
        // Spot-check a non-representable-in-decimal entry survives exactly.
        assert_eq!(sys.a[(1, 1)].to_bits(), back.a[(1, 1)].to_bits());
    }

    #[test]
    fn cost_weights_validate_definiteness() {
        assert!(CostWeights::new(DMatrix::identity(2, 2), DMatrix::identity(1, 1)).is_ok());
        // R merely PSD is rejected.
        assert!(CostWeights::new(DMatrix::identity(2, 2), DMatrix::zeros(1, 1)).is_err());
        // Q indefinite is rejected.
        let q = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -0.1]);
        assert!(CostWeights::new(q, DMatrix::identity(1, 1)).is_err());
        // Asymmetry is rejected.
        let q = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        assert!(CostWeights::new(q, DMatrix::identity(1, 1)).is_err());
    }
}
