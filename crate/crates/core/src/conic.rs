//! Uniform interface over the LP / QP / SOCP solves used by the toolkit.
//!
//! Every optimization in the crate — support-function LPs, online MPC
//! quadratic programs and the offline tightening SOCP — is phrased as one
//! [`ConicProblem`]:
//!
//! ```text
//! minimize    0.5 xᵀ H x + cᵀ x
//! subject to  A_eq x  =  b_eq
//!             A_in x  ≤  b_in
//!             x[i] ≥ 0              for i in `nonneg`
//!             (x[j0], x[j1], ...)   in a second-order cone per block
//! ```
//!
//! where a second-order-cone block `[j0, j1, ..., jk]` constrains
//! `x[j0] ≥ ‖(x[j1], ..., x[jk])‖₂`.
//!
//! Problems are handed to the Clarabel interior-point solver.  Solver
//! outcomes are normalized to the four-valued [`SolveStatus`]; reported
//! optima are re-verified against the problem data (primal residuals and
//! duality gap) and silently inaccurate solves are downgraded to
//! [`SolveStatus::NumericalFailure`].  Inequality duals are returned with
//! the sign convention `z ≥ 0`, `H x + c + A_eqᵀ y + A_inᵀ z = 0`, which is
//! what the support-function certificates in [`crate::polytope`] consume.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::{Error, Result};

/// Normalized outcome of a conic solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    /// Optimum found and certified within tolerance.
    Optimal,
    /// The constraints admit no feasible point.
    Infeasible,
    /// The objective is unbounded below over the feasible set.
    Unbounded,
    /// The solver stopped without a trustworthy certificate (iteration or
    /// time limit, loss of accuracy, or a failed post-solve check).
    NumericalFailure,
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Unbounded => "unbounded",
            SolveStatus::NumericalFailure => "numerical-failure",
        };
        f.write_str(s)
    }
}

/// Solver tolerances and limits.
///
/// All tolerances are absolute unless stated otherwise; the post-solve
/// verification in [`solve`] uses `feasibility_tol` scaled by `1 + ‖rhs‖∞`
/// per constraint group and accepts a duality gap of
/// `gap_tol · max(1, |objective|)`.
#[derive(Debug, Clone)]
pub struct SolverSettings {
    /// Primal/dual feasibility tolerance (default `1e-8`).
    pub feasibility_tol: f64,
    /// Duality-gap tolerance (default `1e-8`).
    pub gap_tol: f64,
    /// Interior-point iteration limit (default 200).
    pub max_iter: u32,
    /// Optional wall-clock limit in seconds.
    pub time_limit: Option<f64>,
    /// Print solver progress to stdout.
    pub verbose: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            feasibility_tol: 1e-8,
            gap_tol: 1e-8,
            max_iter: 200,
            time_limit: None,
            verbose: false,
        }
    }
}

impl SolverSettings {
    /// Tightened settings for solves whose results feed difference tests
    /// with `1e-6`-level tolerances (cost-decrease checks, tightening
    /// recursion checks).
    pub fn high_accuracy() -> Self {
        SolverSettings {
            feasibility_tol: 1e-9,
            gap_tol: 1e-10,
            max_iter: 500,
            ..SolverSettings::default()
        }
    }
}

/// One LP / QP / SOCP instance.  See the module docs for the canonical form.
///
/// Empty constraint groups are represented by `0 × n` matrices / length-0
/// vectors.  The quadratic term `H` must be symmetric positive semidefinite;
/// the objective is `0.5 xᵀ H x + cᵀ x`.
#[derive(Debug, Clone)]
pub struct ConicProblem {
    /// Number of decision variables `n`.
    pub num_vars: usize,
    /// Linear cost `c` (length `n`).
    pub linear_cost: DVector<f64>,
    /// Optional symmetric PSD quadratic cost `H` (`n × n`).
    pub quadratic_cost: Option<DMatrix<f64>>,
    /// Equality constraint matrix `A_eq` (`m_eq × n`).
    pub eq_matrix: DMatrix<f64>,
    /// Equality right-hand side `b_eq`.
    pub eq_rhs: DVector<f64>,
    /// Inequality constraint matrix `A_in` (`m_in × n`, rows `aᵀx ≤ b`).
    pub ineq_matrix: DMatrix<f64>,
    /// Inequality right-hand side `b_in`.
    pub ineq_rhs: DVector<f64>,
    /// Indices of variables constrained to be nonnegative.
    pub nonneg: Vec<usize>,
    /// Second-order-cone blocks; each block lists variable indices with the
    /// first entry bounding the Euclidean norm of the rest.
    pub soc_blocks: Vec<Vec<usize>>,
}

impl ConicProblem {
    /// A problem with only a linear cost and no constraints; callers then
    /// fill in the constraint groups they need.
    pub fn new(linear_cost: DVector<f64>) -> Self {
        let n = linear_cost.len();
        ConicProblem {
            num_vars: n,
            linear_cost,
            quadratic_cost: None,
            eq_matrix: DMatrix::zeros(0, n),
            eq_rhs: DVector::zeros(0),
            ineq_matrix: DMatrix::zeros(0, n),
            ineq_rhs: DVector::zeros(0),
            nonneg: Vec::new(),
            soc_blocks: Vec::new(),
        }
    }

    /// A pure inequality-constrained LP `min cᵀx  s.t.  A x ≤ b`.
    pub fn lp(cost: DVector<f64>, ineq_matrix: DMatrix<f64>, ineq_rhs: DVector<f64>) -> Self {
        let mut p = ConicProblem::new(cost);
        p.ineq_matrix = ineq_matrix;
        p.ineq_rhs = ineq_rhs;
        p
    }

    /// True when the problem has no quadratic cost and no cone constraints,
    /// i.e. is a plain LP.
    pub fn is_lp(&self) -> bool {
        self.quadratic_cost.is_none() && self.soc_blocks.is_empty()
    }

    /// Checks dimensional consistency, symmetry/PSD-ness of the quadratic
    /// cost (to `1e-10`; the PSD factorization is skipped above 512
    /// variables), finiteness of all data, index ranges and pairwise
    /// disjointness of the cone blocks.
    pub fn validate(&self) -> Result<()> {
        let n = self.num_vars;
        if self.linear_cost.len() != n {
            return Err(Error::Dimension(format!(
                "linear cost has length {}, expected {}",
                self.linear_cost.len(),
                n
            )));
        }
        if self.eq_matrix.ncols() != n || self.eq_matrix.nrows() != self.eq_rhs.len() {
            return Err(Error::Dimension(format!(
                "equality block is {}x{} with rhs length {}, expected {} columns and matching rhs",
                self.eq_matrix.nrows(),
                self.eq_matrix.ncols(),
                self.eq_rhs.len(),
                n
            )));
        }
        if self.ineq_matrix.ncols() != n || self.ineq_matrix.nrows() != self.ineq_rhs.len() {
            return Err(Error::Dimension(format!(
                "inequality block is {}x{} with rhs length {}, expected {} columns and matching rhs",
                self.ineq_matrix.nrows(),
                self.ineq_matrix.ncols(),
                self.ineq_rhs.len(),
                n
            )));
        }
        let all_finite = self.linear_cost.iter().all(|v| v.is_finite())
            && self.eq_matrix.iter().all(|v| v.is_finite())
            && self.eq_rhs.iter().all(|v| v.is_finite())
            && self.ineq_matrix.iter().all(|v| v.is_finite())
            && self.ineq_rhs.iter().all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::Invalid("problem data contains non-finite entries".into()));
        }
        if let Some(h) = &self.quadratic_cost {
            if h.nrows() != n || h.ncols() != n {
                return Err(Error::Dimension(format!(
                    "quadratic cost is {}x{}, expected {n}x{n}",
                    h.nrows(),
                    h.ncols()
                )));
            }
            if !h.iter().all(|v| v.is_finite()) {
                return Err(Error::Invalid("quadratic cost contains non-finite entries".into()));
            }
            // Entrywise symmetry scan, allocation-free: this runs on every
            // solve and the cost matrix can be large.
            let mut asym = 0.0f64;
            for c in 0..n {
                for r in 0..c {
                    asym = asym.max((h[(r, c)] - h[(c, r)]).abs());
                }
            }
            if asym > 1e-10 {
                return Err(Error::Invalid(format!(
                    "quadratic cost is asymmetric (max deviation {asym:.3e})"
                )));
            }
            // PSD via Cholesky with a small diagonal shift, so a spectrum
            // touching zero from rounding still passes.  The O(n³)
            // factorization is skipped above 512 variables — validation
            // runs on every solve and large quadratic costs there are
            // built programmatically; the solver still reports numerical
            // failure on an indefinite cost.
            if n <= 512 {
                let scale = 1.0 + h.abs().max();
                let shifted =
                    (h + h.transpose()) * 0.5 + DMatrix::identity(n, n) * (1e-10 * scale);
                if nalgebra::Cholesky::new(shifted).is_none() {
                    return Err(Error::Invalid(
                        "quadratic cost is not positive semidefinite".into(),
                    ));
                }
            }
        }
        for &i in &self.nonneg {
            if i >= n {
                return Err(Error::Dimension(format!(
                    "nonnegative index {i} out of range (n = {n})"
                )));
            }
        }
        let mut seen = vec![false; n];
        for block in &self.soc_blocks {
            if block.len() < 2 {
                return Err(Error::Invalid(
                    "second-order-cone block needs at least two variables".into(),
                ));
            }
            for &i in block {
                if i >= n {
                    return Err(Error::Dimension(format!(
                        "cone index {i} out of range (n = {n})"
                    )));
                }
                if seen[i] {
                    return Err(Error::Invalid(format!(
                        "variable {i} appears in more than one cone block"
                    )));
                }
                seen[i] = true;
            }
        }
        Ok(())
    }
}

/// Solver-side figures of merit attached to a [`ConicSolution`].
#[derive(Debug, Clone)]
pub struct SolveDiagnostics {
    /// Raw status string reported by the backend.
    pub raw_status: String,
    /// Interior-point iterations used.
    pub iterations: u32,
    /// Wall-clock solve time in seconds.
    pub solve_time: f64,
    /// Absolute duality gap at termination.
    pub gap_abs: f64,
    /// Worst post-solve constraint violation measured on the original data.
    pub max_violation: f64,
}

/// Result of [`solve`].
///
/// `primal`, `dual_eq`, `dual_ineq` and `objective` are meaningful only when
/// `status` is [`SolveStatus::Optimal`]; they carry the solver's last
/// iterate otherwise.
#[derive(Debug, Clone)]
pub struct ConicSolution {
    /// Normalized solve outcome.
    pub status: SolveStatus,
    /// Primal optimizer `x`.
    pub primal: DVector<f64>,
    /// Multipliers for the equality rows.
    pub dual_eq: DVector<f64>,
    /// Multipliers for the inequality rows (nonnegative at an optimum).
    pub dual_ineq: DVector<f64>,
    /// Objective value `0.5 xᵀHx + cᵀx`.
    pub objective: f64,
    /// Backend diagnostics.
    pub diagnostics: SolveDiagnostics,
}

/// Builds a compressed-sparse-column matrix from (row, col, value) triplets,
/// summing duplicates and dropping exact zeros.
pub(crate) fn csc_from_triplets(
    nrows: usize,
    ncols: usize,
    triplets: &[(usize, usize, f64)],
) -> CscMatrix<f64> {
    let mut entries: Vec<(usize, usize, f64)> = triplets
        .iter()
        .copied()
        .filter(|&(_, _, v)| v != 0.0)
        .collect();
    entries.sort_by_key(|&(r, c, _)| (c, r));
    let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(entries.len());
    for (r, c, v) in entries {
        debug_assert!(r < nrows && c < ncols);
        match merged.last_mut() {
            Some(last) if last.0 == r && last.1 == c => last.2 += v,
            _ => merged.push((r, c, v)),
        }
    }
    let mut colptr = vec![0usize; ncols + 1];
    let mut rowval: Vec<usize> = Vec::with_capacity(merged.len());
    let mut nzval: Vec<f64> = Vec::with_capacity(merged.len());
    for &(r, c, v) in &merged {
        rowval.push(r);
        nzval.push(v);
        colptr[c + 1] += 1;
    }
    for c in 0..ncols {
        colptr[c + 1] += colptr[c];
    }
    CscMatrix::new(nrows, ncols, colptr, rowval, nzval)
}

/// Converts a dense matrix to CSC, dropping exact zeros.
pub(crate) fn csc_from_dense(m: &DMatrix<f64>) -> CscMatrix<f64> {
    let mut colptr = vec![0usize; m.ncols() + 1];
    let mut rowval = Vec::new();
    let mut nzval = Vec::new();
    for c in 0..m.ncols() {
        for r in 0..m.nrows() {
            let v = m[(r, c)];
            if v != 0.0 {
                rowval.push(r);
                nzval.push(v);
            }
        }
        colptr[c + 1] = rowval.len();
    }
    CscMatrix::new(m.nrows(), m.ncols(), colptr, rowval, nzval)
}

fn clarabel_settings(settings: &SolverSettings) -> clarabel::solver::DefaultSettings<f64> {
    let mut builder = DefaultSettingsBuilder::default();
    builder
        .verbose(settings.verbose)
        .max_iter(settings.max_iter)
        .tol_feas(settings.feasibility_tol)
        .tol_gap_abs(settings.gap_tol)
        .tol_gap_rel(settings.gap_tol);
    if let Some(limit) = settings.time_limit {
        builder.time_limit(limit);
    }
    builder.build().expect("static solver settings are valid")
}

/// Problem data converted to the backend's `A x + s = b`, `s ∈ K` form.
struct Assembled {
    p: CscMatrix<f64>,
    a: CscMatrix<f64>,
    q: Vec<f64>,
    rhs: Vec<f64>,
    cones: Vec<SupportedConeT<f64>>,
}

/// Converts a validated problem to backend form.  Constraint rows are
/// stacked in the fixed order: equalities (zero cone), inequalities +
/// variable bounds (nonnegative cone), then one second-order cone per
/// block.  The equality right-hand side therefore occupies the leading
/// `m_eq` entries of `rhs`, which is what the in-place updates in
/// [`PreparedProblem`] rely on.
fn assemble(problem: &ConicProblem) -> Assembled {
    let n = problem.num_vars;
    let m_eq = problem.eq_matrix.nrows();
    let m_in = problem.ineq_matrix.nrows();
    let m_nn = problem.nonneg.len();
    let m_soc: usize = problem.soc_blocks.iter().map(Vec::len).sum();
    let m = m_eq + m_in + m_nn + m_soc;

    let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
    let mut rhs = vec![0.0; m];
    for r in 0..m_eq {
        for c in 0..n {
            let v = problem.eq_matrix[(r, c)];
            if v != 0.0 {
                triplets.push((r, c, v));
            }
        }
        rhs[r] = problem.eq_rhs[r];
    }
    for r in 0..m_in {
        for c in 0..n {
            let v = problem.ineq_matrix[(r, c)];
            if v != 0.0 {
                triplets.push((m_eq + r, c, v));
            }
        }
        rhs[m_eq + r] = problem.ineq_rhs[r];
    }
    for (k, &i) in problem.nonneg.iter().enumerate() {
        triplets.push((m_eq + m_in + k, i, -1.0));
    }
    let mut row = m_eq + m_in + m_nn;
    for block in &problem.soc_blocks {
        for &i in block {
            triplets.push((row, i, -1.0));
            row += 1;
        }
    }
    let a = csc_from_triplets(m, n, &triplets);
    let p = match &problem.quadratic_cost {
        Some(h) => csc_from_dense(h),
        None => CscMatrix::zeros((n, n)),
    };
    let mut cones: Vec<SupportedConeT<f64>> = Vec::new();
    if m_eq > 0 {
        cones.push(SupportedConeT::ZeroConeT(m_eq));
    }
    if m_in + m_nn > 0 {
        cones.push(SupportedConeT::NonnegativeConeT(m_in + m_nn));
    }
    for block in &problem.soc_blocks {
        cones.push(SupportedConeT::SecondOrderConeT(block.len()));
    }
    let q: Vec<f64> = problem.linear_cost.iter().copied().collect();
    Assembled { p, a, q, rhs, cones }
}

/// Maps a finished backend solve to a [`ConicSolution`], re-verifying the
/// reported optimum against the original (unscaled) problem data.
fn extract_solution(
    problem: &ConicProblem,
    solver: &DefaultSolver<f64>,
    settings: &SolverSettings,
    solve_time: f64,
) -> ConicSolution {
    let m_eq = problem.eq_matrix.nrows();
    let m_in = problem.ineq_matrix.nrows();

    let raw_status = solver.solution.status;
    let primal = DVector::from_column_slice(&solver.solution.x);
    let dual_eq = DVector::from_iterator(m_eq, solver.solution.z[..m_eq].iter().copied());
    let dual_ineq =
        DVector::from_iterator(m_in, solver.solution.z[m_eq..m_eq + m_in].iter().copied());
    let objective = {
        let lin = problem.linear_cost.dot(&primal);
        match &problem.quadratic_cost {
            Some(h) => 0.5 * (h * &primal).dot(&primal) + lin,
            None => lin,
        }
    };

    // Clarabel's `Almost*` statuses certify the same outcome as their exact
    // counterparts, only at reduced accuracy.  Reduced-accuracy certificates
    // of infeasibility/unboundedness are accepted as such; a reduced-accuracy
    // optimum is accepted only if the iterate passes the residual check below.
    let mut status = match raw_status {
        SolverStatus::Solved | SolverStatus::AlmostSolved => SolveStatus::Optimal,
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
            SolveStatus::Infeasible
        }
        SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => SolveStatus::Unbounded,
        _ => SolveStatus::NumericalFailure,
    };

    // Trust but verify: measure constraint violations of the returned
    // iterate on the original (unscaled) data and downgrade solves that do
    // not meet the requested tolerance.
    let mut max_violation = 0.0f64;
    if status == SolveStatus::Optimal {
        if m_eq > 0 {
            let r = &problem.eq_matrix * &primal - &problem.eq_rhs;
            let scale = 1.0 + problem.eq_rhs.abs().max();
            max_violation = max_violation.max(r.abs().max() / scale);
        }
        if m_in > 0 {
            let r = &problem.ineq_matrix * &primal - &problem.ineq_rhs;
            let scale = 1.0 + problem.ineq_rhs.abs().max();
            max_violation = max_violation.max(r.max().max(0.0) / scale);
        }
        for &i in &problem.nonneg {
            max_violation = max_violation.max(-primal[i]);
        }
        for block in &problem.soc_blocks {
            let head = primal[block[0]];
            let tail: f64 = block[1..].iter().map(|&i| primal[i] * primal[i]).sum();
            max_violation = max_violation.max((tail.sqrt() - head) / (1.0 + head.abs()));
        }
        let gap_ok = solver.info.gap_abs <= settings.gap_tol * 10.0 * (1.0 + objective.abs())
            || solver.info.gap_rel <= settings.gap_tol * 10.0;
        if max_violation > settings.feasibility_tol * 10.0 || !gap_ok {
            status = SolveStatus::NumericalFailure;
        }
    }

    ConicSolution {
        status,
        primal,
        dual_eq,
        dual_ineq,
        objective,
        diagnostics: SolveDiagnostics {
            raw_status: format!("{raw_status:?}"),
            iterations: solver.info.iterations,
            solve_time,
            gap_abs: solver.info.gap_abs,
            max_violation,
        },
    }
}

/// Solves a conic problem and post-verifies the reported optimum.
///
/// Outcomes map as: solved → [`SolveStatus::Optimal`] (after residual
/// re-verification on the original data), primal infeasible →
/// [`SolveStatus::Infeasible`], dual infeasible → [`SolveStatus::Unbounded`],
/// anything else (iteration/time limit, reduced accuracy, internal error) →
/// [`SolveStatus::NumericalFailure`].
///
/// # Errors
///
/// Returns a structured error for dimension mismatches or invalid data;
/// solver-side failures are reported through the status, not as errors.
pub fn solve(problem: &ConicProblem, settings: &SolverSettings) -> Result<ConicSolution> {
    problem.validate()?;
    let asm = assemble(problem);
    let mut solver = DefaultSolver::new(
        &asm.p,
        &asm.q,
        &asm.a,
        &asm.rhs,
        &asm.cones,
        clarabel_settings(settings),
    );
    solver.solve();
    let solve_time = solver.info.solve_time;
    Ok(extract_solution(problem, &solver, settings, solve_time))
}

/// A conic problem converted to backend form once, for families of solves
/// that differ only in right-hand-side values.
///
/// Receding-horizon controllers re-solve one fixed program hundreds of
/// times per run with only the initial-state equality rows changing.
/// Rebuilding the sparse matrices and the solver workspace on every call
/// can dominate the actual interior-point work, so this type performs the
/// conversion, workspace allocation and symbolic analysis a single time;
/// [`PreparedProblem::solve`] pushes updated right-hand sides into the
/// existing workspace and re-solves from a fresh interior starting point.
///
/// The backend's presolve is disabled to permit in-place data updates.
/// Presolve only ever removes rows with infinite right-hand sides, which
/// validation rejects anyway, so solutions match [`solve`] on identical
/// data.
pub struct PreparedProblem {
    problem: ConicProblem,
    settings: SolverSettings,
    solver: DefaultSolver<f64>,
    rhs: Vec<f64>,
}

impl PreparedProblem {
    /// Validates the problem and allocates the backend workspace.
    ///
    /// # Errors
    ///
    /// Propagates validation failures; see [`ConicProblem::validate`].
    pub fn new(problem: ConicProblem, settings: SolverSettings) -> Result<Self> {
        problem.validate()?;
        let asm = assemble(&problem);
        let mut config = clarabel_settings(&settings);
        config.presolve_enable = false;
        let solver = DefaultSolver::new(&asm.p, &asm.q, &asm.a, &asm.rhs, &asm.cones, config);
        Ok(PreparedProblem { problem, settings, solver, rhs: asm.rhs })
    }

    /// The underlying problem with its current right-hand sides.
    pub fn problem(&self) -> &ConicProblem {
        &self.problem
    }

    /// Overwrites the equality right-hand-side entries
    /// `offset .. offset + values.len()`.
    ///
    /// # Errors
    ///
    /// Rejects out-of-range updates and non-finite values.
    pub fn set_eq_rhs(&mut self, offset: usize, values: &DVector<f64>) -> Result<()> {
        let m_eq = self.problem.eq_rhs.len();
        if offset + values.len() > m_eq {
            return Err(Error::Dimension(format!(
                "rhs update of length {} at offset {offset} exceeds {m_eq} equality rows",
                values.len()
            )));
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::Invalid("rhs update contains non-finite entries".into()));
        }
        // Equality rows occupy the leading entries of the stacked
        // right-hand side, so problem and backend indices coincide.
        for (k, v) in values.iter().enumerate() {
            self.problem.eq_rhs[offset + k] = *v;
            self.rhs[offset + k] = *v;
        }
        Ok(())
    }

    /// Re-solves with the current right-hand sides.
    ///
    /// The reported solve time is the wall-clock duration of the backend
    /// call alone; the one-time setup cost paid in [`PreparedProblem::new`]
    /// is excluded.
    ///
    /// # Errors
    ///
    /// Returns [`Error::Solver`] if the backend rejects the in-place data
    /// update; solver-side failures are reported through the status.
    pub fn solve(&mut self) -> Result<ConicSolution> {
        self.solver
            .update_b(&self.rhs)
            .map_err(|e| Error::Solver(format!("right-hand-side update rejected: {e}")))?;
        let start = std::time::Instant::now();
        self.solver.solve();
        let solve_time = start.elapsed().as_secs_f64();
        Ok(extract_solution(&self.problem, &self.solver, &self.settings, solve_time))
    }
}

/// Solves a batch of LPs, in parallel when a thread pool is available.
///
/// Results are returned in input order.  A failure in one problem (invalid
/// data or a bad solve status) does not abort the rest of the batch.
///
/// # Errors
///
/// Each entry carries its own result; problems with a quadratic cost or
/// cone constraints are rejected with [`Error::Invalid`].
pub fn solve_lp_batch(
    problems: &[ConicProblem],
    settings: &SolverSettings,
) -> Vec<Result<ConicSolution>> {
    problems
        .par_iter()
        .map(|p| {
            if !p.is_lp() {
                return Err(Error::Invalid(
                    "solve_lp_batch expects pure LPs (no quadratic cost, no cones)".into(),
                ));
            }
            solve(p, settings)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn settings() -> SolverSettings {
        SolverSettings::default()
    }

    #[test]
    fn scalar_lp_reaches_bound_with_unit_multiplier() {
        // minimize x subject to x ≥ 3, i.e. -x ≤ -3.
        let p = ConicProblem::lp(
            DVector::from_vec(vec![1.0]),
            DMatrix::from_row_slice(1, 1, &[-1.0]),
            DVector::from_vec(vec![-3.0]),
        );
        let s = solve(&p, &settings()).unwrap();
        assert_eq!(s.status, SolveStatus::Optimal);
        assert_abs_diff_eq!(s.primal[0], 3.0, epsilon = 1e-7);
        assert_abs_diff_eq!(s.objective, 3.0, epsilon = 1e-7);
        // Stationarity 1 - z = 0 pins the multiplier at one.
        assert_abs_diff_eq!(s.dual_ineq[0], 1.0, epsilon = 1e-7);
    }

    #[test]
    fn scalar_qp_minimizes_on_boundary() {
        // minimize x² subject to x ≥ 3; objective convention 0.5 xᵀHx with
        // H = 2 gives x².
        let mut p = ConicProblem::new(DVector::zeros(1));
        p.quadratic_cost = Some(DMatrix::from_row_slice(1, 1, &[2.0]));
        p.ineq_matrix = DMatrix::from_row_slice(1, 1, &[-1.0]);
        p.ineq_rhs = DVector::from_vec(vec![-3.0]);
        let s = solve(&p, &settings()).unwrap();
        assert_eq!(s.status, SolveStatus::Optimal);
        assert_abs_diff_eq!(s.primal[0], 3.0, epsilon = 1e-7);
        assert_abs_diff_eq!(s.objective, 9.0, epsilon = 1e-6);
    }

    #[test]
    fn norm_cone_projection_hits_sqrt_two() {
        // minimize t subject to t ≥ ‖(x₁, x₂)‖₂, x₁ = x₂ = 1.
        let mut p = ConicProblem::new(DVector::from_vec(vec![1.0, 0.0, 0.0]));
        p.eq_matrix = DMatrix::from_row_slice(2, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        p.eq_rhs = DVector::from_vec(vec![1.0, 1.0]);
        p.soc_blocks = vec![vec![0, 1, 2]];
        let s = solve(&p, &settings()).unwrap();
        assert_eq!(s.status, SolveStatus::Optimal);
        assert_abs_diff_eq!(s.primal[0], 2.0_f64.sqrt(), epsilon = 1e-6);
    }

    #[test]
    fn infeasible_and_unbounded_are_distinguished() {
        // x ≤ -1 and x ≥ 0 cannot hold together.
        let mut p = ConicProblem::lp(
            DVector::from_vec(vec![1.0]),
            DMatrix::from_row_slice(1, 1, &[1.0]),
            DVector::from_vec(vec![-1.0]),
        );
        p.nonneg = vec![0];
        let s = solve(&p, &settings()).unwrap();
        assert_eq!(s.status, SolveStatus::Infeasible);

        // minimize x with only x ≤ 1 is unbounded below.
        let p = ConicProblem::lp(
            DVector::from_vec(vec![1.0]),
            DMatrix::from_row_slice(1, 1, &[1.0]),
            DVector::from_vec(vec![1.0]),
        );
        let s = solve(&p, &settings()).unwrap();
        assert_eq!(s.status, SolveStatus::Unbounded);
    }

    #[test]
    fn dimension_mismatch_is_a_structured_error() {
        let p = ConicProblem::lp(
            DVector::from_vec(vec![1.0, 2.0]),
            DMatrix::from_row_slice(1, 1, &[1.0]),
            DVector::from_vec(vec![1.0]),
        );
        assert!(matches!(solve(&p, &settings()), Err(Error::Dimension(_))));
    }

    #[test]
    fn asymmetric_quadratic_cost_is_rejected() {
        let mut p = ConicProblem::new(DVector::zeros(2));
        p.quadratic_cost = Some(DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]));
        assert!(matches!(solve(&p, &settings()), Err(Error::Invalid(_))));
    }

    #[test]
    fn overlapping_cone_blocks_are_rejected() {
        let mut p = ConicProblem::new(DVector::zeros(3));
        p.soc_blocks = vec![vec![0, 1], vec![1, 2]];
        assert!(matches!(solve(&p, &settings()), Err(Error::Invalid(_))));
    }

    #[test]
    fn batch_solves_preserve_order_and_isolate_failures() {
        let mk = |bound: f64| {
            ConicProblem::lp(
                DVector::from_vec(vec![1.0]),
                DMatrix::from_row_slice(1, 1, &[-1.0]),
                DVector::from_vec(vec![-bound]),
            )
        };
        let mut bad = mk(0.0);
        bad.quadratic_cost = Some(DMatrix::from_row_slice(1, 1, &[2.0]));
        let results = solve_lp_batch(&[mk(1.0), bad, mk(2.0)], &settings());
        assert_eq!(results.len(), 3);
        assert_abs_diff_eq!(results[0].as_ref().unwrap().objective, 1.0, epsilon = 1e-7);
        assert!(results[1].is_err());
        assert_abs_diff_eq!(results[2].as_ref().unwrap().objective, 2.0, epsilon = 1e-7);
    }

    #[test]
    fn equality_duals_satisfy_stationarity() {
        // minimize 0.5 x² - x subject to x = 3: optimum x = 3 with
        // stationarity x - 1 + y = 0 giving y = -2.
        let mut p = ConicProblem::new(DVector::from_vec(vec![-1.0]));
        p.quadratic_cost = Some(DMatrix::from_row_slice(1, 1, &[1.0]));
        p.eq_matrix = DMatrix::from_row_slice(1, 1, &[1.0]);
        p.eq_rhs = DVector::from_vec(vec![3.0]);
        let s = solve(&p, &settings()).unwrap();
        assert_eq!(s.status, SolveStatus::Optimal);
        assert_abs_diff_eq!(s.primal[0], 3.0, epsilon = 1e-7);
        assert_abs_diff_eq!(s.dual_eq[0], -2.0, epsilon = 1e-6);
    }
}
