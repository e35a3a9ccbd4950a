//! Convex polytopes in halfspace representation and the set computations
//! built on them.
//!
//! A [`PolytopeH`] is `{x : D x ≤ d}` with rows normalized to unit
//! Euclidean norm at construction, so row-wise tolerances are comparable
//! across sets.  All set queries reduce to linear programs solved through
//! [`crate::conic`]:
//!
//! * support function values and strong-duality certificates
//!   ([`PolytopeH::support`], [`PolytopeH::support_with_certificate`]),
//! * boundedness and emptiness probes,
//! * maximal admissible invariant sets under a stable linear map with an
//!   optional additive disturbance image ([`max_admissible_invariant_set`]).
//!
//! For low dimensions a brute-force vertex enumeration
//! ([`PolytopeH::vertices`]) doubles as an independent oracle: support
//! values computed by LP can be cross-checked against the maximum over
//! vertices.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::conic::{self, ConicProblem, SolveStatus, SolverSettings};
use crate::{Error, Result};

/// Absolute tolerance used for geometric comparisons on unit-norm rows
/// (redundancy, vertex feasibility, deduplication).
const GEOM_TOL: f64 = 1e-9;

/// A polytope `{x : D x ≤ d}` with unit-norm facet normals.
#[derive(Debug, Clone, PartialEq)]
pub struct PolytopeH {
    normals: DMatrix<f64>,
    offsets: DVector<f64>,
}

/// Strong-duality certificate for a support value: a nonnegative row
/// combination of the facets reproducing the direction and the value.
#[derive(Debug, Clone)]
pub struct SupportCertificate {
    /// The support value `max { dirᵀx : x ∈ P }`.
    pub value: f64,
    /// Multipliers `z ≥ 0` with `Dᵀ z = dir` and `dᵀ z = value`.
    pub multiplier: DVector<f64>,
}

#[derive(Serialize, Deserialize)]
struct PolytopeJson {
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
}

impl PolytopeH {
    /// Builds a polytope from facet normals `D` (rows) and offsets `d`,
    /// scaling every row to unit Euclidean norm.
    ///
    /// Rows whose norm is already within `1e-15` of one are left untouched
    /// so that construction is idempotent and serialization round-trips
    /// bit-exactly.
    ///
    /// # Errors
    ///
    /// [`Error::Dimension`] when row counts disagree, [`Error::Invalid`]
    /// for non-finite entries or a (near-)zero normal row.
    pub fn new(normals: DMatrix<f64>, offsets: DVector<f64>) -> Result<Self> {
        if normals.nrows() != offsets.len() {
            return Err(Error::Dimension(format!(
                "{} normal rows but {} offsets",
                normals.nrows(),
                offsets.len()
            )));
        }
        if normals.ncols() == 0 || normals.nrows() == 0 {
            return Err(Error::Invalid("polytope needs at least one row and one column".into()));
        }
        if !normals.iter().all(|v| v.is_finite()) || !offsets.iter().all(|v| v.is_finite()) {
            return Err(Error::Invalid("polytope data contains non-finite entries".into()));
        }
        let mut normals = normals;
        let mut offsets = offsets;
        for r in 0..normals.nrows() {
            let norm = normals.row(r).norm();
            if norm < 1e-12 {
                return Err(Error::Invalid(format!("facet row {r} has (near-)zero normal")));
            }
            if (norm - 1.0).abs() > 1e-15 {
                let inv = 1.0 / norm;
                for c in 0..normals.ncols() {
                    normals[(r, c)] *= inv;
                }
                offsets[r] *= inv;
            }
        }
        Ok(PolytopeH { normals, offsets })
    }

    /// Axis-aligned box `lower[i] ≤ x[i] ≤ upper[i]`, with all upper-bound
    /// rows first: `D = [I; -I]`, `d = [upper; -lower]`.
    pub fn from_box(lower: &[f64], upper: &[f64]) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::Dimension(format!(
                "box bounds have lengths {} and {}",
                lower.len(),
                upper.len()
            )));
        }
        if lower.iter().zip(upper).any(|(l, u)| l > u) {
            return Err(Error::Invalid("box has lower bound above upper bound".into()));
        }
        let n = lower.len();
        let mut normals = DMatrix::zeros(2 * n, n);
        let mut offsets = DVector::zeros(2 * n);
        for i in 0..n {
            normals[(i, i)] = 1.0;
            offsets[i] = upper[i];
            normals[(n + i, i)] = -1.0;
            offsets[n + i] = -lower[i];
        }
        PolytopeH::new(normals, offsets)
    }

    /// Symmetric box `|x[i]| ≤ bound[i]`.
    pub fn from_symmetric_bounds(bounds: &[f64]) -> Result<Self> {
        let lower: Vec<f64> = bounds.iter().map(|b| -b).collect();
        PolytopeH::from_box(&lower, bounds)
    }

    /// Ambient dimension.
    pub fn dim(&self) -> usize {
        self.normals.ncols()
    }

    /// Number of facet rows.
    pub fn num_rows(&self) -> usize {
        self.normals.nrows()
    }

    /// Facet normal matrix `D` (unit-norm rows).
    pub fn normals(&self) -> &DMatrix<f64> {
        &self.normals
    }

    /// Facet offsets `d`.
    pub fn offsets(&self) -> &DVector<f64> {
        &self.offsets
    }

    /// Membership test `D x ≤ d + tol` (tolerance per row; rows are
    /// unit-norm so `tol` is a Euclidean distance scale).
    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        let slack = &self.normals * x - &self.offsets;
        slack.iter().all(|&s| s <= tol)
    }

    /// Support value `max { dirᵀ x : D x ≤ d }` by linear programming.
    ///
    /// # Errors
    ///
    /// [`Error::Unbounded`] when the set is unbounded along `dir`,
    /// [`Error::Infeasible`] when the set is empty, [`Error::Solver`] on a
    /// numerical breakdown.
    pub fn support(&self, dir: &DVector<f64>) -> Result<f64> {
        self.support_with_certificate(dir).map(|c| c.value)
    }

    /// Support value together with its strong-duality certificate.
    ///
    /// The returned multiplier is verified against `Dᵀ z = dir`,
    /// `dᵀ z = value`, `z ≥ 0` to `1e-8` (scaled); a certificate that fails
    /// verification is reported as [`Error::Solver`].
    pub fn support_with_certificate(&self, dir: &DVector<f64>) -> Result<SupportCertificate> {
        let sol = self.support_solution(dir)?;
        let value = dir.dot(&sol.primal);
        let z = sol.dual_ineq;
        self.check_certificate(dir, value, &z)?;
        Ok(SupportCertificate { value, multiplier: z })
    }

    /// Support values for a batch of directions (one LP each, solved
    /// through the batch path).
    pub fn support_batch(&self, dirs: &[DVector<f64>]) -> Result<Vec<f64>> {
        let problems: Vec<ConicProblem> = dirs.iter().map(|d| self.support_problem(d)).collect();
        let sols = conic::solve_lp_batch(&problems, &SolverSettings::default());
        dirs.iter()
            .zip(sols)
            .map(|(dir, sol)| {
                let sol = sol?;
                self.interpret_support_status(&sol, dir)?;
                Ok(dir.dot(&sol.primal))
            })
            .collect()
    }

    fn support_problem(&self, dir: &DVector<f64>) -> ConicProblem {
        ConicProblem::lp(-dir.clone(), self.normals.clone(), self.offsets.clone())
    }

    fn support_solution(&self, dir: &DVector<f64>) -> Result<crate::conic::ConicSolution> {
        if dir.len() != self.dim() {
            return Err(Error::Dimension(format!(
                "direction has length {}, polytope dimension is {}",
                dir.len(),
                self.dim()
            )));
        }
        let sol = conic::solve(&self.support_problem(dir), &SolverSettings::default())?;
        self.interpret_support_status(&sol, dir)?;
        Ok(sol)
    }

    fn interpret_support_status(
        &self,
        sol: &crate::conic::ConicSolution,
        dir: &DVector<f64>,
    ) -> Result<()> {
        match sol.status {
            SolveStatus::Optimal => Ok(()),
            SolveStatus::Unbounded => Err(Error::Unbounded(format!(
                "support direction {:?} is unbounded over the polytope",
                dir.as_slice()
            ))),
            SolveStatus::Infeasible => {
                Err(Error::Infeasible("support of an empty polytope".into()))
            }
            SolveStatus::NumericalFailure => Err(Error::Solver(format!(
                "support LP failed numerically ({})",
                sol.diagnostics.raw_status
            ))),
        }
    }

    fn check_certificate(&self, dir: &DVector<f64>, value: f64, z: &DVector<f64>) -> Result<()> {
        let tol = 1e-8;
        if z.iter().any(|&v| v < -1e-9) {
            return Err(Error::Solver("support certificate has negative multipliers".into()));
        }
        let recon = self.normals.transpose() * z;
        let dir_err = (recon - dir).abs().max() / (1.0 + dir.abs().max());
        let val_err = (self.offsets.dot(z) - value).abs() / (1.0 + value.abs());
        if dir_err > tol || val_err > tol {
            return Err(Error::Solver(format!(
                "support certificate fails verification (direction error {dir_err:.3e}, value error {val_err:.3e})"
            )));
        }
        Ok(())
    }

    /// True when the polytope is bounded (finite support along every
    /// positive and negative coordinate axis).
    pub fn is_bounded(&self) -> Result<bool> {
        for i in 0..self.dim() {
            for sign in [1.0, -1.0] {
                let mut dir = DVector::zeros(self.dim());
                dir[i] = sign;
                match self.support(&dir) {
                    Ok(_) => {}
                    Err(Error::Unbounded(_)) => return Ok(false),
                    Err(e) => return Err(e),
                }
            }
        }
        Ok(true)
    }

    /// True when the feasible set is empty.
    pub fn is_empty(&self) -> Result<bool> {
        let p = ConicProblem::lp(
            DVector::zeros(self.dim()),
            self.normals.clone(),
            self.offsets.clone(),
        );
        let sol = conic::solve(&p, &SolverSettings::default())?;
        match sol.status {
            SolveStatus::Infeasible => Ok(true),
            SolveStatus::Optimal => Ok(false),
            _ => Err(Error::Solver(format!(
                "emptiness probe failed ({})",
                sol.diagnostics.raw_status
            ))),
        }
    }

    /// Enumerates the vertices of a bounded polytope of dimension at most
    /// six by solving every `dim × dim` facet subsystem and keeping the
    /// feasible, deduplicated solutions.
    ///
    /// This is intentionally brute force — it exists as an independent
    /// cross-check for the LP-based queries, not as a scalable algorithm.
    ///
    /// # Errors
    ///
    /// [`Error::Invalid`] above dimension six or when the facet-subset
    /// count exceeds two million; [`Error::Unbounded`] /
    /// [`Error::Infeasible`] for unbounded or empty sets.
    pub fn vertices(&self) -> Result<Vec<DVector<f64>>> {
        let n = self.dim();
        let m = self.num_rows();
        if n > 6 {
            return Err(Error::Invalid(format!(
                "vertex enumeration is limited to dimension ≤ 6 (got {n})"
            )));
        }
        if !self.is_bounded()? {
            return Err(Error::Unbounded("vertex enumeration needs a bounded polytope".into()));
        }
        let combos = binomial(m, n);
        if combos > 2_000_000 {
            return Err(Error::Invalid(format!(
                "vertex enumeration would visit {combos} facet subsets"
            )));
        }

        let mut vertices: Vec<DVector<f64>> = Vec::new();
        let mut idx: Vec<usize> = (0..n).collect();
        loop {
            let mut sub = DMatrix::zeros(n, n);
            let mut rhs = DVector::zeros(n);
            for (k, &r) in idx.iter().enumerate() {
                sub.row_mut(k).copy_from(&self.normals.row(r));
                rhs[k] = self.offsets[r];
            }
            if let Some(x) = sub.clone().lu().solve(&rhs) {
                // Discard ill-conditioned intersections that merely look
                // solvable: the residual must actually vanish.
                let residual = (&sub * &x - &rhs).abs().max();
                if residual <= GEOM_TOL && self.contains(&x, GEOM_TOL) {
                    let duplicate = vertices.iter().any(|v| (v - &x).norm() <= 10.0 * GEOM_TOL);
                    if !duplicate {
                        vertices.push(x);
                    }
                }
            }
            if !next_combination(&mut idx, m, n) {
                break;
            }
        }
        if vertices.is_empty() {
            return Err(Error::Infeasible("polytope has no vertices (empty interior)".into()));
        }
        Ok(vertices)
    }

    /// Support value computed as the maximum of `dirᵀv` over enumerated
    /// vertices — the independent oracle counterpart of [`Self::support`].
    pub fn support_via_vertices(&self, dir: &DVector<f64>) -> Result<f64> {
        let vs = self.vertices()?;
        Ok(vs
            .iter()
            .map(|v| dir.dot(v))
            .fold(f64::NEG_INFINITY, f64::max))
    }

    /// Serializes into the `{"A": [[...]], "b": [...]}` schema.
    pub fn to_json_value(&self) -> serde_json::Value {
        let a: Vec<Vec<f64>> = (0..self.num_rows())
            .map(|r| self.normals.row(r).iter().copied().collect())
            .collect();
        let b: Vec<f64> = self.offsets.iter().copied().collect();
        serde_json::json!({ "A": a, "b": b })
    }
}

impl Serialize for PolytopeH {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let a: Vec<Vec<f64>> = (0..self.num_rows())
            .map(|r| self.normals.row(r).iter().copied().collect())
            .collect();
        let b: Vec<f64> = self.offsets.iter().copied().collect();
        PolytopeJson { a, b }.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for PolytopeH {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = PolytopeJson::deserialize(deserializer)?;
        let rows = raw.a.len();
        let cols = raw.a.first().map_or(0, Vec::len);
        if raw.a.iter().any(|r| r.len() != cols) {
            return Err(serde::de::Error::custom("ragged facet matrix"));
        }
        let normals = DMatrix::from_row_iterator(rows, cols, raw.a.iter().flatten().copied());
        let offsets = DVector::from_vec(raw.b);
        PolytopeH::new(normals, offsets).map_err(serde::de::Error::custom)
    }
}

/// The set `{ M w : w ∈ W }` entering invariant-set computations as an
/// additive disturbance, or the degenerate zero set.
///
/// Support values are evaluated without forming the image explicitly:
/// `sup { dirᵀ M w } = sup { (Mᵀ dir)ᵀ w }`.
#[derive(Debug, Clone)]
pub enum ImageSet {
    /// The singleton `{0}`.
    Zero,
    /// `{ matrix · w : w ∈ set }`.
    Mapped {
        /// The linear map applied to the generator set.
        matrix: DMatrix<f64>,
        /// The generator polytope `W`.
        set: PolytopeH,
    },
}

impl ImageSet {
    /// The singleton `{0}`.
    pub fn zero() -> Self {
        ImageSet::Zero
    }

    /// The image `{ matrix · w : w ∈ set }`.
    ///
    /// # Errors
    ///
    /// [`Error::Dimension`] when the map's domain does not match the set.
    pub fn mapped(matrix: DMatrix<f64>, set: PolytopeH) -> Result<Self> {
        if matrix.ncols() != set.dim() {
            return Err(Error::Dimension(format!(
                "image map has {} columns but the set has dimension {}",
                matrix.ncols(),
                set.dim()
            )));
        }
        Ok(ImageSet::Mapped { matrix, set })
    }

    /// Support value of the image along `dir`.
    pub fn support(&self, dir: &DVector<f64>) -> Result<f64> {
        match self {
            ImageSet::Zero => Ok(0.0),
            ImageSet::Mapped { matrix, set } => set.support(&(matrix.transpose() * dir)),
        }
    }
}

/// Computes the maximal admissible (robustly) invariant set of
/// `x⁺ = A_cl x + δ`, `δ ∈ image`, inside the constraint polytope.
///
/// The standard fixed-point iteration is used: level `j` adds the rows
/// `H A_cl^j x ≤ h − Σ_{m<j} sup_image((H A_cl^m)ᵀ row)`, and the iteration
/// stops when an entire level is redundant with respect to the accumulated
/// set (mutual containment of successive iterates, tested per facet by LP).
/// Redundant rows are pruned from the result.
///
/// # Errors
///
/// [`Error::Invalid`] when `A_cl` is not Schur stable or the constraint set
/// is unbounded, [`Error::Infeasible`] when the admissible set is empty,
/// [`Error::NoConvergence`] when no fixed point is reached within
/// `max_iter` levels (default cap 200).
pub fn max_admissible_invariant_set(
    a_cl: &DMatrix<f64>,
    constraint: &PolytopeH,
    image: &ImageSet,
    max_iter: usize,
) -> Result<PolytopeH> {
    let n = constraint.dim();
    if a_cl.nrows() != n || a_cl.ncols() != n {
        return Err(Error::Dimension(format!(
            "closed-loop matrix is {}x{}, constraint dimension is {n}",
            a_cl.nrows(),
            a_cl.ncols()
        )));
    }
    let rho = spectral_radius(a_cl);
    if !(rho < 1.0 - 1e-12) {
        return Err(Error::Invalid(format!(
            "closed-loop matrix is not Schur stable (spectral radius {rho:.6})"
        )));
    }
    if !constraint.is_bounded()? {
        return Err(Error::Invalid("invariant-set constraint polytope must be bounded".into()));
    }

    let h_mat = constraint.normals();
    let h_off = constraint.offsets();
    let m = constraint.num_rows();

    // Working row soup Ω_j (kept raw; only the pruned result is rebuilt as
    // a PolytopeH).
    let mut rows: Vec<DVector<f64>> = Vec::new();
    let mut offs: Vec<f64> = Vec::new();
    for r in 0..m {
        rows.push(h_mat.row(r).transpose());
        offs.push(h_off[r]);
    }

    let mut cur = h_mat.clone(); // H A_cl^j
    let mut cum = DVector::<f64>::zeros(m); // Σ_{m<j} sup_image((H A_cl^m)ᵀ row)
    let mut converged = false;
    for _level in 1..=max_iter {
        for r in 0..m {
            cum[r] += image.support(&cur.row(r).transpose())?;
        }
        cur *= a_cl;
        let mut level_redundant = true;
        for r in 0..m {
            let normal = cur.row(r).transpose();
            let offset = h_off[r] - cum[r];
            if !row_redundant(&rows, &offs, &normal, offset)? {
                level_redundant = false;
                rows.push(normal);
                offs.push(offset);
            }
        }
        if rows_empty(&rows, &offs)? {
            return Err(Error::Infeasible("maximal admissible invariant set is empty".into()));
        }
        if level_redundant {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence(
            format!("invariant-set iteration still adding facets ({} rows)", rows.len()),
            max_iter,
        ));
    }

    // Prune rows that are redundant with respect to the rest.
    let mut keep: Vec<bool> = vec![true; rows.len()];
    for i in 0..rows.len() {
        keep[i] = false;
        let sub_rows: Vec<DVector<f64>> = rows
            .iter()
            .zip(&keep)
            .filter(|(_, &k)| k)
            .map(|(r, _)| r.clone())
            .collect();
        let sub_offs: Vec<f64> = offs
            .iter()
            .zip(&keep)
            .filter(|(_, &k)| k)
            .map(|(o, _)| *o)
            .collect();
        match row_redundant(&sub_rows, &sub_offs, &rows[i], offs[i]) {
            Ok(true) => {} // stays removed
            _ => keep[i] = true,
        }
    }
    let kept: Vec<usize> = (0..rows.len()).filter(|&i| keep[i]).collect();
    let mut normals = DMatrix::zeros(kept.len(), n);
    let mut offsets = DVector::zeros(kept.len());
    for (out, &i) in kept.iter().enumerate() {
        normals.row_mut(out).copy_from(&rows[i].transpose());
        offsets[out] = offs[i];
    }
    PolytopeH::new(normals, offsets)
}

/// True when `normalᵀ x ≤ offset` is implied by the given rows (support of
/// `normal` over the rows is at most `offset` plus tolerance).
fn row_redundant(
    rows: &[DVector<f64>],
    offs: &[f64],
    normal: &DVector<f64>,
    offset: f64,
) -> Result<bool> {
    if rows.is_empty() {
        return Ok(false);
    }
    let n = normal.len();
    let mut mat = DMatrix::zeros(rows.len(), n);
    for (r, row) in rows.iter().enumerate() {
        mat.row_mut(r).copy_from(&row.transpose());
    }
    let p = ConicProblem::lp(-normal.clone(), mat, DVector::from_vec(offs.to_vec()));
    let sol = conic::solve(&p, &SolverSettings::default())?;
    match sol.status {
        SolveStatus::Optimal => Ok(normal.dot(&sol.primal) <= offset + GEOM_TOL),
        // An unbounded direction is certainly not dominated; treat
        // numerical failure conservatively the same way.
        SolveStatus::Unbounded | SolveStatus::NumericalFailure => Ok(false),
        SolveStatus::Infeasible => Ok(true),
    }
}

fn rows_empty(rows: &[DVector<f64>], offs: &[f64]) -> Result<bool> {
    let n = rows[0].len();
    let mut mat = DMatrix::zeros(rows.len(), n);
    for (r, row) in rows.iter().enumerate() {
        mat.row_mut(r).copy_from(&row.transpose());
    }
    let p = ConicProblem::lp(DVector::zeros(n), mat, DVector::from_vec(offs.to_vec()));
    let sol = conic::solve(&p, &SolverSettings::default())?;
    Ok(sol.status == SolveStatus::Infeasible)
}

/// Spectral radius via complex eigenvalues.
pub(crate) fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    a.complex_eigenvalues()
        .iter()
        .map(|l| l.norm())
        .fold(0.0, f64::max)
}

fn binomial(m: usize, n: usize) -> u64 {
    if n > m {
        return 0;
    }
    let mut acc: u64 = 1;
    for k in 0..n.min(m - n) {
        acc = acc.saturating_mul((m - k) as u64) / (k as u64 + 1);
    }
    acc
}

/// Advances `idx` to the next lexicographic `n`-combination of `0..m`;
/// returns `false` after the last one.
fn next_combination(idx: &mut [usize], m: usize, n: usize) -> bool {
    let mut i = n;
    while i > 0 {
        i -= 1;
        if idx[i] < m - n + i {
            idx[i] += 1;
            for j in i + 1..n {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn unit_box(n: usize) -> PolytopeH {
        PolytopeH::from_symmetric_bounds(&vec![1.0; n]).unwrap()
    }

    #[test]
    fn box_vertices_are_the_corners() {
        let b = unit_box(2);
        let mut vs = b.vertices().unwrap();
        assert_eq!(vs.len(), 4);
        vs.sort_by(|a, b| (a[0], a[1]).partial_cmp(&(b[0], b[1])).unwrap());
        let expected = [[-1.0, -1.0], [-1.0, 1.0], [1.0, -1.0], [1.0, 1.0]];
        for (v, e) in vs.iter().zip(expected) {
            assert_abs_diff_eq!(v[0], e[0], epsilon = 1e-9);
            assert_abs_diff_eq!(v[1], e[1], epsilon = 1e-9);
        }
    }

    #[test]
    fn support_agrees_with_vertex_oracle() {
        let sets = [
            unit_box(2),
            PolytopeH::from_box(&[-2.0, -5.0], &[2.0, 5.0]).unwrap(),
            // Simplex x ≥ 0, y ≥ 0, x + y ≤ 1.
            PolytopeH::new(
                DMatrix::from_row_slice(3, 2, &[-1.0, 0.0, 0.0, -1.0, 1.0, 1.0]),
                DVector::from_vec(vec![0.0, 0.0, 1.0]),
            )
            .unwrap(),
        ];
        let dirs = [
            DVector::from_vec(vec![1.0, 1.0]),
            DVector::from_vec(vec![0.3, -0.4]),
            DVector::from_vec(vec![-0.9, 0.1]),
            DVector::from_vec(vec![0.0, -1.0]),
        ];
        for set in &sets {
            for dir in &dirs {
                let lp = set.support(dir).unwrap();
                let oracle = set.support_via_vertices(dir).unwrap();
                assert_abs_diff_eq!(lp, oracle, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn disturbance_box_support_value() {
        let w = PolytopeH::from_box(&[-2.0, -5.0], &[2.0, 5.0]).unwrap();
        let dir = DVector::from_vec(vec![0.3, -0.4]);
        assert_abs_diff_eq!(w.support(&dir).unwrap(), 2.6, epsilon = 1e-8);
    }

    #[test]
    fn support_certificate_reconstructs_direction_and_value() {
        let w = PolytopeH::from_box(&[-2.0, -5.0], &[2.0, 5.0]).unwrap();
        let dir = DVector::from_vec(vec![1.0, 1.0]);
        let cert = w.support_with_certificate(&dir).unwrap();
        assert_abs_diff_eq!(cert.value, 7.0, epsilon = 1e-7);
        // Active rows are x₁ ≤ 2 (row 0) and x₂ ≤ 5 (row 1), weight one each.
        assert_abs_diff_eq!(cert.multiplier[0], 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(cert.multiplier[1], 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(cert.multiplier[2], 0.0, epsilon = 1e-6);
        assert_abs_diff_eq!(cert.multiplier[3], 0.0, epsilon = 1e-6);
    }

    #[test]
    fn interval_certificate_matches_hand_duals() {
        let p = PolytopeH::from_box(&[-1.0], &[1.0]).unwrap();
        let cert = p.support_with_certificate(&DVector::from_vec(vec![1.0])).unwrap();
        assert_abs_diff_eq!(cert.value, 1.0, epsilon = 1e-8);
        assert_abs_diff_eq!(cert.multiplier[0], 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(cert.multiplier[1], 0.0, epsilon = 1e-6);
    }

    #[test]
    fn zero_direction_has_zero_support() {
        let b = unit_box(3);
        let zero = DVector::<f64>::zeros(3);
        assert_abs_diff_eq!(b.support(&zero).unwrap(), 0.0, epsilon = 1e-8);
    }

    #[test]
    fn unbounded_direction_is_an_error() {
        // Half-space x ≤ 1 is unbounded below.
        let p = PolytopeH::new(
            DMatrix::from_row_slice(1, 1, &[1.0]),
            DVector::from_vec(vec![1.0]),
        )
        .unwrap();
        assert!(matches!(
            p.support(&DVector::from_vec(vec![-1.0])),
            Err(Error::Unbounded(_))
        ));
        assert!(!p.is_bounded().unwrap());
        assert!(matches!(p.vertices(), Err(Error::Unbounded(_))));
    }

    #[test]
    fn empty_set_is_detected() {
        // x ≤ -1 and x ≥ 0.
        let p = PolytopeH::new(
            DMatrix::from_row_slice(2, 1, &[1.0, -1.0]),
            DVector::from_vec(vec![-1.0, 0.0]),
        )
        .unwrap();
        assert!(p.is_empty().unwrap());
        assert!(matches!(
            p.support(&DVector::from_vec(vec![1.0])),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn redundant_rows_do_not_disturb_vertices() {
        // Unit box with a slack extra facet x₁ ≤ 3.
        let p = PolytopeH::new(
            DMatrix::from_row_slice(5, 2, &[1.0, 0.0, -1.0, 0.0, 0.0, 1.0, 0.0, -1.0, 1.0, 0.0]),
            DVector::from_vec(vec![1.0, 1.0, 1.0, 1.0, 3.0]),
        )
        .unwrap();
        assert_eq!(p.vertices().unwrap().len(), 4);
    }

    #[test]
    fn rows_are_normalized_and_serialization_round_trips_bitwise() {
        let p = PolytopeH::new(
            DMatrix::from_row_slice(2, 2, &[3.0, 4.0, -1.0, 2.0]),
            DVector::from_vec(vec![10.0, 4.0]),
        )
        .unwrap();
        for r in 0..p.num_rows() {
            assert_abs_diff_eq!(p.normals().row(r).norm(), 1.0, epsilon = 1e-14);
        }
        // Row 0 scaled by 1/5.
        assert_abs_diff_eq!(p.normals()[(0, 0)], 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(p.offsets()[0], 2.0, epsilon = 1e-15);

        let json = serde_json::to_string(&p).unwrap();
        let q: PolytopeH = serde_json::from_str(&json).unwrap();
        assert_eq!(p.normals(), q.normals());
        assert_eq!(p.offsets(), q.offsets());
    }

    #[test]
    fn zero_normal_row_is_rejected() {
        let r = PolytopeH::new(
            DMatrix::from_row_slice(1, 2, &[0.0, 0.0]),
            DVector::from_vec(vec![1.0]),
        );
        assert!(matches!(r, Err(Error::Invalid(_))));
    }

    #[test]
    fn moas_deadbeat_is_the_constraint_set() {
        let x = unit_box(2);
        let omega = max_admissible_invariant_set(
            &DMatrix::zeros(2, 2),
            &x,
            &ImageSet::zero(),
            200,
        )
        .unwrap();
        // Same set: mutual containment via support values on the facets.
        for r in 0..x.num_rows() {
            let dir = x.normals().row(r).transpose();
            assert_abs_diff_eq!(omega.support(&dir).unwrap(), x.offsets()[r], epsilon = 1e-7);
        }
        assert_eq!(omega.num_rows(), 4);
    }

    #[test]
    fn moas_scalar_contraction_without_disturbance() {
        let x = PolytopeH::from_symmetric_bounds(&[1.0]).unwrap();
        let a = DMatrix::from_row_slice(1, 1, &[0.5]);
        let omega = max_admissible_invariant_set(&a, &x, &ImageSet::zero(), 200).unwrap();
        assert_abs_diff_eq!(omega.support(&DVector::from_vec(vec![1.0])).unwrap(), 1.0, epsilon = 1e-8);
        assert_abs_diff_eq!(omega.support(&DVector::from_vec(vec![-1.0])).unwrap(), 1.0, epsilon = 1e-8);
    }

    #[test]
    fn moas_scalar_small_disturbance_keeps_full_box() {
        // x⁺ = 0.5 x + δ, |δ| ≤ 0.25, |x| ≤ 1: one step ahead 0.5·1 + 0.25
        // = 0.75 ≤ 1, so the constraint box itself is invariant.
        let x = PolytopeH::from_symmetric_bounds(&[1.0]).unwrap();
        let a = DMatrix::from_row_slice(1, 1, &[0.5]);
        let w = PolytopeH::from_symmetric_bounds(&[0.25]).unwrap();
        let image = ImageSet::mapped(DMatrix::identity(1, 1), w).unwrap();
        let omega = max_admissible_invariant_set(&a, &x, &image, 200).unwrap();
        assert_abs_diff_eq!(omega.support(&DVector::from_vec(vec![1.0])).unwrap(), 1.0, epsilon = 1e-8);
        assert_eq!(omega.num_rows(), 2);
    }

    #[test]
    fn moas_scalar_large_disturbance_is_empty() {
        // With |δ| ≤ 0.6 the one-step worst case from the boundary is
        // 0.5·1 + 0.6 = 1.1 > 1; chasing the recursion the admissible set
        // collapses to nothing and the iteration must report emptiness.
        let x = PolytopeH::from_symmetric_bounds(&[1.0]).unwrap();
        let a = DMatrix::from_row_slice(1, 1, &[0.5]);
        let w = PolytopeH::from_symmetric_bounds(&[0.6]).unwrap();
        let image = ImageSet::mapped(DMatrix::identity(1, 1), w).unwrap();
        let r = max_admissible_invariant_set(&a, &x, &image, 200);
        assert!(matches!(r, Err(Error::Infeasible(_))), "got {r:?}");
    }

    #[test]
    fn moas_rotation_is_invariant_and_admissible() {
        // Contractive rotation: every returned vertex must stay inside the
        // set after one step and satisfy the constraints.
        let th = 0.7f64;
        let a = DMatrix::from_row_slice(2, 2, &[th.cos(), -th.sin(), th.sin(), th.cos()]) * 0.8;
        let x = PolytopeH::from_box(&[-1.0, -2.0], &[3.0, 2.0]).unwrap();
        let w = PolytopeH::from_symmetric_bounds(&[0.05, 0.05]).unwrap();
        let image = ImageSet::mapped(DMatrix::identity(2, 2), w).unwrap();
        let omega = max_admissible_invariant_set(&a, &x, &image, 200).unwrap();
        for v in omega.vertices().unwrap() {
            assert!(x.contains(&v, 1e-7));
            // Robust invariance on the disturbance-box corners.
            for dx in [-0.05, 0.05] {
                for dy in [-0.05, 0.05] {
                    let next = &a * &v + DVector::from_vec(vec![dx, dy]);
                    assert!(omega.contains(&next, 1e-7));
                }
            }
        }
        // Fixed point: one more iteration level changes nothing (checked by
        // running the computation again on its own output).
        let again = max_admissible_invariant_set(&a, &omega, &image, 200).unwrap();
        for r in 0..omega.num_rows() {
            let dir = omega.normals().row(r).transpose();
            assert_abs_diff_eq!(
                again.support(&dir).unwrap(),
                omega.support(&dir).unwrap(),
                epsilon = 1e-7
            );
        }
    }

    #[test]
    fn moas_rejects_unstable_dynamics() {
        let x = unit_box(1);
        let a = DMatrix::from_row_slice(1, 1, &[1.0]);
        assert!(matches!(
            max_admissible_invariant_set(&a, &x, &ImageSet::zero(), 200),
            Err(Error::Invalid(_))
        ));
    }
}
