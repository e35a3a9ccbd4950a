//! Offline controller synthesis: terminal ingredients, constraint
//! tightenings and the optimized disturbance-feedback policy.
//!
//! The pipeline runs once per scenario and produces everything the online
//! controllers consume:
//!
//! 1. terminal gain `K_f` (unconstrained LQR) and terminal weight `P`
//!    (discrete Lyapunov equation for the closed loop),
//! 2. the fixed-gain tube baseline: policy `M_m = K_f (A+BK_f)^{m-1}` and
//!    its tightening vector,
//! 3. the terminal set `X_T`: maximal admissible invariant set of
//!    `A + B K_f` under the tail-tightened constraints
//!    `(F + G K_f) x ≤ b − t_N` against the decayed disturbance image
//!    `(A+BK_f)^N B_w W`,
//! 4. the optimized policy: a second-order cone program over the Toeplitz
//!    blocks `M_1 … M_N` minimizing `‖t‖₂` subject to dual-certified
//!    tightening definitions and the horizon hand-off conditions, with an
//!    optional per-stage cap `t ≤ t_tube` (on by default) that makes the
//!    tube policy a feasible point and the optimum never worse.
//!
//! Tightenings are computed two ways on purpose: the canonical route
//! solves one support LP per constraint row over the stacked disturbance
//! sequence and keeps the dual certificates; the incremental route sums
//! per-stage one-step supports `max_w (F Φ_m + G M_{m+1}) B_w w`.  The two
//! must agree, and the optimizer's reported tightening is always
//! re-canonicalized through the LP route before it is trusted.

use nalgebra::{DMatrix, DVector};

use crate::conic::{self, ConicProblem, SolveStatus, SolverSettings};
use crate::model::{CostWeights, LinearSystem};
use crate::polytope::{max_admissible_invariant_set, ImageSet, PolytopeH};
use crate::prediction::DisturbanceFeedback;
use crate::{Error, Result};

/// `a^k` by repeated multiplication.
pub(crate) fn mat_pow(a: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let mut acc = DMatrix::identity(a.nrows(), a.ncols());
    for _ in 0..k {
        acc = &acc * a;
    }
    acc
}

/// Solves the discrete-time LQR problem by Riccati value iteration.
///
/// Returns the terminal gain `K_f = -(R + BᵀPB)⁻¹ BᵀPA` together with the
/// Riccati fixed point `P`; iteration stops when the scaled update norm
/// drops below `1e-9`.
///
/// # Errors
///
/// [`Error::NoConvergence`] after 10 000 iterations (e.g. when `(A, B)` is
/// not stabilizable), [`Error::Invalid`] when an iterate loses positive
/// definiteness of `R + BᵀPB`.
pub fn lqr_terminal_gain(
    system: &LinearSystem,
    weights: &CostWeights,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let a = &system.a;
    let b = &system.b;
    let q = &weights.q;
    let r = &weights.r;
    if q.nrows() != system.n_x() || r.nrows() != system.n_u() {
        return Err(Error::Dimension(format!(
            "weights are {}x{} and {}x{}, system is n_x={}, n_u={}",
            q.nrows(),
            q.ncols(),
            r.nrows(),
            r.ncols(),
            system.n_x(),
            system.n_u()
        )));
    }
    let max_iter = 10_000;
    let mut p = q.clone();
    for _ in 0..max_iter {
        let btp = b.transpose() * &p;
        let s = r + &btp * b;
        let chol = nalgebra::Cholesky::new(s).ok_or_else(|| {
            Error::Invalid("R + BᵀPB lost positive definiteness during Riccati iteration".into())
        })?;
        let btpa = &btp * a;
        let gain_term = chol.solve(&btpa); // (R+BᵀPB)⁻¹ BᵀPA
        let mut p_next = q + a.transpose() * &p * a - btpa.transpose() * &gain_term;
        p_next = (&p_next + p_next.transpose()) * 0.5;
        let step = (&p_next - &p).abs().max();
        let scale = 1.0 + p_next.abs().max();
        p = p_next;
        if step <= 1e-9 * scale {
            let btp = b.transpose() * &p;
            let s = r + &btp * b;
            let chol = nalgebra::Cholesky::new(s).ok_or_else(|| {
                Error::Invalid("R + BᵀPB is not positive definite at the fixed point".into())
            })?;
            let k_f = -chol.solve(&(&btp * a));
            return Ok((k_f, p));
        }
    }
    Err(Error::NoConvergence(
        "Riccati value iteration did not reach a fixed point; is (A, B) stabilizable?".into(),
        max_iter,
    ))
}

/// Solves the discrete Lyapunov equation
/// `(A+BK)ᵀ P (A+BK) − P + Q + KᵀRK = 0` by doubling.
///
/// # Errors
///
/// [`Error::Invalid`] when `A + BK` is not Schur stable;
/// [`Error::NoConvergence`] when the residual check `≤ 1e-6` (scaled) fails
/// after the summation converged.
pub fn terminal_cost(
    system: &LinearSystem,
    weights: &CostWeights,
    k_f: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let a_cl = &system.a + &system.b * k_f;
    let rho = crate::polytope::spectral_radius(&a_cl);
    if !(rho < 1.0 - 1e-12) {
        return Err(Error::Invalid(format!(
            "A + BK is not Schur stable (spectral radius {rho:.6})"
        )));
    }
    let s = &weights.q + k_f.transpose() * &weights.r * k_f;
    let mut p = s.clone();
    let mut m = a_cl.clone();
    for _ in 0..200 {
        if m.abs().max() < 1e-150 {
            break;
        }
        p = &p + m.transpose() * &p * &m;
        m = &m * &m;
        if m.abs().max().powi(2) * p.abs().max() < 1e-18 {
            p = &p + m.transpose() * &p * &m;
            break;
        }
    }
    let residual = (a_cl.transpose() * &p * &a_cl - &p + &s).abs().max();
    let scale = 1.0 + p.abs().max();
    if residual > 1e-6 * scale {
        return Err(Error::NoConvergence(
            format!("Lyapunov residual {residual:.3e} exceeds tolerance"),
            200,
        ));
    }
    Ok(p)
}

/// Per-stage constraint tightenings `t_0 = 0, t_1, …, t_{N-1}` with the
/// dual certificates that produced them.
///
/// Invariants validated at construction: `t_0 = 0`, entrywise
/// monotonicity `t_i ≤ t_{i+1}`, nonnegativity, and `b − t_i ≥ 0`
/// (all to LP tolerance `1e-7`).
#[derive(Debug, Clone)]
pub struct TighteningVector {
    stages: Vec<DVector<f64>>,
    dual: DMatrix<f64>,
}

impl TighteningVector {
    /// Builds and validates a tightening vector against the stage
    /// constraint offsets `b`.
    pub fn new(stages: Vec<DVector<f64>>, dual: DMatrix<f64>, b: &DVector<f64>) -> Result<Self> {
        if stages.is_empty() {
            return Err(Error::Invalid("tightening vector needs at least one stage".into()));
        }
        let n_c = b.len();
        let tol = 1e-7;
        for (i, t) in stages.iter().enumerate() {
            if t.len() != n_c {
                return Err(Error::Dimension(format!(
                    "stage {i} tightening has {} rows, expected {n_c}",
                    t.len()
                )));
            }
            if !t.iter().all(|v| v.is_finite()) {
                return Err(Error::Invalid(format!("stage {i} tightening is not finite")));
            }
            if t.min() < -tol {
                return Err(Error::Invalid(format!(
                    "stage {i} tightening is negative ({:.3e})",
                    t.min()
                )));
            }
            if (b - t).min() < -tol {
                return Err(Error::Invalid(format!(
                    "stage {i} tightening exceeds the constraint offsets"
                )));
            }
        }
        if stages[0].abs().max() > tol {
            return Err(Error::Invalid("stage 0 tightening must be zero".into()));
        }
        for i in 1..stages.len() {
            if (&stages[i] - &stages[i - 1]).min() < -tol {
                return Err(Error::Invalid(format!(
                    "tightening is not monotone between stages {} and {i}",
                    i - 1
                )));
            }
        }
        Ok(TighteningVector { stages, dual })
    }

    /// Number of stages `N` (indices `0 … N-1`).
    pub fn horizon(&self) -> usize {
        self.stages.len()
    }

    /// Tightening at stage `i`.
    pub fn stage(&self, i: usize) -> &DVector<f64> {
        &self.stages[i]
    }

    /// All stages in order.
    pub fn stages(&self) -> &[DVector<f64>] {
        &self.stages
    }

    /// Tightening at the last covered stage `N-1`.
    pub fn last(&self) -> &DVector<f64> {
        self.stages.last().expect("non-empty by construction")
    }

    /// Dual certificate matrix: one column per (stage, row) pair, each
    /// column a multiplier over the stacked disturbance-set facets.
    pub fn dual(&self) -> &DMatrix<f64> {
        &self.dual
    }

    /// All stages stacked into one vector of length `N·n_c`.
    pub fn stacked(&self) -> DVector<f64> {
        let n_c = self.stages[0].len();
        let mut out = DVector::zeros(self.horizon() * n_c);
        for (i, t) in self.stages.iter().enumerate() {
            out.rows_mut(i * n_c, n_c).copy_from(t);
        }
        out
    }

    /// Euclidean norm of the stacked vector.
    pub fn norm2(&self) -> f64 {
        self.stacked().norm()
    }
}

/// Canonical tightening computation: one support LP with certificate per
/// constraint row over the stacked disturbance sequence
/// `(w_0, …, w_{N-2}) ∈ W^{N-1}`.
///
/// Stage `i` row `j` maximizes the row of
/// `Σ_{l<i} (F Φ_{i-1-l} + G M_{i-l}) B_w w_l`; stage 0 is structurally
/// zero.
pub fn tightening_for_policy(
    system: &LinearSystem,
    fb: &DisturbanceFeedback,
) -> Result<TighteningVector> {
    let n = fb.horizon();
    let n_c = system.n_c();
    let n_w = system.n_w();
    let n_d = system.w.num_rows();
    if fb.n_u() != system.n_u() || fb.n_x() != system.n_x() {
        return Err(Error::Dimension("policy blocks do not match the system".into()));
    }

    // Stacked disturbance polytope W^{N-1}; rows stay unit-norm.
    let mut dd = DMatrix::zeros((n - 1) * n_d, (n - 1) * n_w);
    let mut dd_off = DVector::zeros((n - 1) * n_d);
    for l in 0..n - 1 {
        dd.view_mut((l * n_d, l * n_w), (n_d, n_w))
            .copy_from(system.w.normals());
        dd_off.rows_mut(l * n_d, n_d).copy_from(system.w.offsets());
    }
    let stacked = PolytopeH::new(dd, dd_off)?;

    let phis = fb.response_blocks(system);
    let mut stages = vec![DVector::zeros(n_c)];
    let mut dual = DMatrix::zeros((n - 1) * n_d, n * n_c);
    for i in 1..n {
        let mut coef = DMatrix::zeros(n_c, (n - 1) * n_w);
        for l in 0..i {
            let blk = (&system.f * &phis[i - 1 - l] + &system.g * fb.block(i - l)) * &system.b_w;
            coef.view_mut((0, l * n_w), (n_c, n_w)).copy_from(&blk);
        }
        let mut t_i = DVector::zeros(n_c);
        for j in 0..n_c {
            let dir = coef.row(j).transpose();
            if dir.norm() < 1e-14 {
                continue; // support of the zero direction is zero
            }
            let cert = stacked.support_with_certificate(&dir)?;
            t_i[j] = cert.value;
            dual.column_mut(i * n_c + j).copy_from(&cert.multiplier);
        }
        stages.push(t_i);
    }
    TighteningVector::new(stages, dual, &system.b_rhs)
}

/// Per-stage tightening increments `Δ_m[j] = max_w (F Φ_m + G M_{m+1}) B_w w`
/// for `m = 0 … N-1`, with `M_N` standing in for `M_{m+1}` at the last
/// index.  The recursion `t_{i+1} = t_i + Δ_i` reproduces the canonical
/// tightening and extends it one step past the horizon.
pub fn tightening_increments(
    system: &LinearSystem,
    fb: &DisturbanceFeedback,
) -> Result<Vec<DVector<f64>>> {
    let n = fb.horizon();
    let n_c = system.n_c();
    let phis = fb.response_blocks(system);
    let mut incs = Vec::with_capacity(n);
    for m in 0..n {
        let m_next = if m + 1 < n { fb.block(m + 1) } else { fb.terminal() };
        let rows = (&system.f * &phis[m] + &system.g * m_next) * &system.b_w;
        let mut inc = DVector::zeros(n_c);
        for j in 0..n_c {
            let dir = rows.row(j).transpose();
            if dir.norm() >= 1e-14 {
                inc[j] = system.w.support(&dir)?;
            }
        }
        incs.push(inc);
    }
    Ok(incs)
}

/// The fixed-gain tube design: policy, canonical tightening and the
/// one-past-horizon tail `t_N` used by the terminal-set construction.
#[derive(Debug, Clone)]
pub struct TubeDesign {
    /// The induced disturbance-feedback policy `M_m = K (A+BK)^{m-1}`.
    pub policy: DisturbanceFeedback,
    /// Canonical tightenings `t_0 … t_{N-1}`.
    pub tightening: TighteningVector,
    /// Tail tightening `t_N = t_{N-1} + Δ_{N-1}`.
    pub t_horizon: DVector<f64>,
}

/// Builds the tube baseline for gain `k` over horizon `n`.
pub fn tmpc_design(system: &LinearSystem, k: &DMatrix<f64>, n: usize) -> Result<TubeDesign> {
    let policy = DisturbanceFeedback::tmpc(k, system, n)?;
    let tightening = tightening_for_policy(system, &policy)?;
    let incs = tightening_increments(system, &policy)?;
    let t_horizon = tightening.last() + &incs[n - 1];
    Ok(TubeDesign {
        policy,
        tightening,
        t_horizon,
    })
}

/// Support constants of a terminal set: `c_F[j] = max_{x∈X_T} (F+GK)_j x`
/// and `c_Y[r] = max_{x∈X_T} (Y(A+BK))_r x`, each certificate-checked.
pub fn terminal_support_constants(
    x_t: &PolytopeH,
    system: &LinearSystem,
    k_f: &DMatrix<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let fk = &system.f + &system.g * k_f;
    let ya = x_t.normals() * (&system.a + &system.b * k_f);
    let mut c_f = DVector::zeros(fk.nrows());
    for j in 0..fk.nrows() {
        let dir = fk.row(j).transpose();
        if dir.norm() >= 1e-14 {
            c_f[j] = x_t.support_with_certificate(&dir)?.value;
        }
    }
    let mut c_y = DVector::zeros(ya.nrows());
    for r in 0..ya.nrows() {
        let dir = ya.row(r).transpose();
        if dir.norm() >= 1e-14 {
            c_y[r] = x_t.support_with_certificate(&dir)?.value;
        }
    }
    Ok((c_f, c_y))
}

/// Builds the terminal set `X_T`: the maximal admissible invariant set of
/// `x⁺ = (A+BK) x + δ` inside `(F+GK) x ≤ b − t_tail`, where
/// `δ ∈ (A+BK)^N B_w W` is the disturbance contribution that survives to
/// the end of the horizon under the tube policy.
///
/// # Errors
///
/// [`Error::Infeasible`] when the tail tightening consumes some constraint
/// entirely (`b − t_tail ≤ 0`) or the invariant set is empty.
pub fn design_terminal_set(
    system: &LinearSystem,
    k_f: &DMatrix<f64>,
    t_tail: &DVector<f64>,
    horizon: usize,
    moas_max_iter: usize,
) -> Result<PolytopeH> {
    let offsets = &system.b_rhs - t_tail;
    if offsets.min() <= 0.0 {
        return Err(Error::Infeasible(format!(
            "tail tightening leaves no terminal margin (min b - t_N = {:.3e}); \
             shorten the horizon or shrink the disturbance set",
            offsets.min()
        )));
    }
    let a_cl = &system.a + &system.b * k_f;
    let constraint = PolytopeH::new(&system.f + &system.g * k_f, offsets)?;
    let image = ImageSet::mapped(mat_pow(&a_cl, horizon) * &system.b_w, system.w.clone())?;
    max_admissible_invariant_set(&a_cl, &constraint, &image, moas_max_iter)
}

/// Builds the terminal set for the online disturbance-feedback baseline:
/// the maximal admissible robust invariant set of `x⁺ = (A+BK) x + B_w w`
/// inside the untightened constraints `(F+GK) x ≤ b`.
pub fn fpd_terminal_set(
    system: &LinearSystem,
    k_f: &DMatrix<f64>,
    moas_max_iter: usize,
) -> Result<PolytopeH> {
    let a_cl = &system.a + &system.b * k_f;
    let constraint = PolytopeH::new(&system.f + &system.g * k_f, system.b_rhs.clone())?;
    let image = ImageSet::mapped(system.b_w.clone(), system.w.clone())?;
    max_admissible_invariant_set(&a_cl, &constraint, &image, moas_max_iter)
}

/// Knobs for [`optimize_tightening`] / [`design_offline`].
#[derive(Debug, Clone)]
pub struct DesignOptions {
    /// Add the per-stage cap `t ≤ t_tube`, making the tube policy feasible
    /// and the optimum never worse than the baseline (default on).
    pub cap_by_tmpc: bool,
    /// Optional positive per-row weights for a weighted norm `‖diag(ω) t‖₂`
    /// over the stacked stage-`1 … N-1` tightening entries.
    pub norm_weights: Option<DVector<f64>>,
    /// Conic solver settings for the design program.
    pub settings: SolverSettings,
    /// Terminal-set contraction retries when the program is infeasible.
    pub max_retries: usize,
    /// Iteration cap for invariant-set computations.
    pub moas_max_iter: usize,
}

impl Default for DesignOptions {
    fn default() -> Self {
        DesignOptions {
            cap_by_tmpc: true,
            norm_weights: None,
            settings: SolverSettings::default(),
            max_retries: 5,
            moas_max_iter: 200,
        }
    }
}

/// Solver-side statistics of the offline design program.
#[derive(Debug, Clone)]
pub struct DesignStats {
    /// Interior-point iterations of the successful solve.
    pub iterations: u32,
    /// Wall-clock seconds spent in the cone program (all attempts).
    pub solve_time: f64,
    /// Reported cone-program objective (the epigraph value).
    pub socp_objective: f64,
    /// `‖t‖₂` of the re-canonicalized tightening.
    pub objective: f64,
    /// Terminal-set contractions that were needed (0 in the normal case).
    pub retries: usize,
    /// Whether the tube cap was active in the program.
    pub capped: bool,
}

/// Result of [`optimize_tightening`].
#[derive(Debug, Clone)]
pub struct OptimizedDesign {
    /// Optimized feedback policy `M_1 … M_{N-1}, M_N`.
    pub policy: DisturbanceFeedback,
    /// Re-canonicalized tightening with dual certificates.
    pub tightening: TighteningVector,
    /// Tail tightening `t_N` under the optimized policy.
    pub t_horizon: DVector<f64>,
    /// Terminal set actually used (contracted only if retries fired).
    pub terminal: PolytopeH,
    /// Terminal support constants over [`Self::terminal`].
    pub c_f: DVector<f64>,
    /// Terminal support constants for the one-step-ahead normals.
    pub c_y: DVector<f64>,
    /// Hand-off multipliers for the stage constraints at the horizon edge.
    pub lambda1: DMatrix<f64>,
    /// Hand-off multipliers for the terminal-set membership.
    pub lambda2: DMatrix<f64>,
    /// Solve statistics.
    pub stats: DesignStats,
}

/// Optimizes the Toeplitz feedback blocks to minimize the Euclidean norm
/// of the stacked tightening, subject to
///
/// * dual-feasibility equalities defining each `t_i` row as an upper bound
///   on its worst-case disturbance sum,
/// * the horizon hand-off conditions (shifted-plan feasibility):
///   `Λ₁ D = (F Φ_{N-1} + G M_N) B_w`, `Λ₁ d + c_F ≤ b − t_{N-1}` and
///   `Λ₂ D = Y Ψ B_w`, `Λ₂ d + c_Y ≤ z`,
/// * `t ≤ b`, optionally `t ≤ t_tube`.
///
/// On success the tightening is re-derived by exact support LPs (the cone
/// program only certifies upper bounds), and all invariants are re-checked
/// on the canonical values.
///
/// When the program is infeasible the terminal set is contracted by 10%
/// and the attempt repeated, at most `max_retries` times.
pub fn optimize_tightening(
    system: &LinearSystem,
    n: usize,
    x_t: &PolytopeH,
    k_f: &DMatrix<f64>,
    tube: &TubeDesign,
    options: &DesignOptions,
) -> Result<OptimizedDesign> {
    if n < 2 {
        return Err(Error::Invalid(format!("horizon must be at least 2, got {n}")));
    }
    if tube.policy.horizon() != n {
        return Err(Error::Dimension("tube design horizon mismatch".into()));
    }
    let mut terminal = x_t.clone();
    let mut total_time = 0.0;
    for retry in 0..=options.max_retries {
        let (c_f, c_y) = terminal_support_constants(&terminal, system, k_f)?;
        let attempt = solve_design_program(system, n, &terminal, &c_f, &c_y, tube, options)?;
        total_time += attempt.solve_time;
        match attempt.outcome {
            DesignOutcome::Solved {
                policy,
                lambda1,
                lambda2,
                socp_objective,
                iterations,
            } => {
                let tightening = tightening_for_policy(system, &policy)?;
                let incs = tightening_increments(system, &policy)?;
                let t_horizon = tightening.last() + &incs[n - 1];
                verify_design(
                    system, n, &terminal, &c_f, &c_y, &policy, &tightening, &lambda1, &lambda2,
                    tube, options,
                )?;
                let stats = DesignStats {
                    iterations,
                    solve_time: total_time,
                    socp_objective,
                    objective: tightening.norm2(),
                    retries: retry,
                    capped: options.cap_by_tmpc,
                };
                return Ok(OptimizedDesign {
                    policy,
                    tightening,
                    t_horizon,
                    terminal,
                    c_f,
                    c_y,
                    lambda1,
                    lambda2,
                    stats,
                });
            }
            DesignOutcome::Infeasible => {
                // Contract the terminal set and retry.
                terminal = PolytopeH::new(terminal.normals().clone(), terminal.offsets() * 0.9)?;
            }
            DesignOutcome::Failed(msg) => {
                return Err(Error::Solver(format!("design program failed: {msg}")));
            }
        }
    }
    Err(Error::Infeasible(format!(
        "design program infeasible after {} terminal-set contractions",
        options.max_retries
    )))
}

enum DesignOutcome {
    Solved {
        policy: DisturbanceFeedback,
        lambda1: DMatrix<f64>,
        lambda2: DMatrix<f64>,
        socp_objective: f64,
        iterations: u32,
    },
    Infeasible,
    Failed(String),
}

struct DesignAttempt {
    outcome: DesignOutcome,
    solve_time: f64,
}

#[allow(clippy::too_many_arguments)]
fn solve_design_program(
    system: &LinearSystem,
    n: usize,
    x_t: &PolytopeH,
    c_f: &DVector<f64>,
    c_y: &DVector<f64>,
    tube: &TubeDesign,
    options: &DesignOptions,
) -> Result<DesignAttempt> {
    let n_x = system.n_x();
    let n_u = system.n_u();
    let n_c = system.n_c();
    let n_w = system.n_w();
    let n_d = system.w.num_rows();
    let n_t = x_t.num_rows();
    let d_w = system.w.normals();
    let d_off = system.w.offsets();
    let y_mat = x_t.normals();
    let z_off = x_t.offsets();

    // Variable layout: [Γ | t (stages 1..N-1) | M_1..M_{N-1}, M_N | Z | Λ₁ | Λ₂ | aux].
    let t_count = (n - 1) * n_c;
    let m_entries = n_u * n_x;
    let z_len = (n - 1) * n_d;
    let t_base = 1;
    let m_base = t_base + t_count;
    let z_base = m_base + n * m_entries;
    let l1_base = z_base + t_count * z_len;
    let l2_base = l1_base + n_c * n_d;
    let aux_base = l2_base + n_t * n_d;
    let aux_count = if options.norm_weights.is_some() { t_count } else { 0 };
    let num_vars = aux_base + aux_count;

    let idx_t = |i: usize, j: usize| t_base + (i - 1) * n_c + j;
    let idx_m = |s: usize, p: usize, q: usize| m_base + (s - 1) * m_entries + p * n_x + q;
    let idx_z = |i: usize, j: usize, l: usize, r: usize| {
        z_base + ((i - 1) * n_c + j) * z_len + l * n_d + r
    };
    let idx_l1 = |j: usize, r: usize| l1_base + j * n_d + r;
    let idx_l2 = |rt: usize, r: usize| l2_base + rt * n_d + r;

    if let Some(wts) = &options.norm_weights {
        if wts.len() != t_count || wts.min() <= 0.0 {
            return Err(Error::Invalid(format!(
                "norm weights must be {t_count} positive entries"
            )));
        }
    }

    // Precomputed products for the linearized error responses.
    let mut fab = Vec::with_capacity(n); // F A^s B
    let mut faw = Vec::with_capacity(n); // F A^s B_w
    let mut yab = Vec::with_capacity(n + 1); // Y A^s B
    let mut yaw = Vec::with_capacity(n + 1); // Y A^s B_w
    {
        let mut a_pow = DMatrix::identity(n_x, n_x);
        for s in 0..=n {
            if s < n {
                fab.push(&system.f * &a_pow * &system.b);
                faw.push(&system.f * &a_pow * &system.b_w);
            }
            yab.push(y_mat * &a_pow * &system.b);
            yaw.push(y_mat * &a_pow * &system.b_w);
            a_pow = &a_pow * &system.a;
        }
    }

    let eq_18b = t_count * (n - 1) * n_w;
    let eq_18c = t_count;
    let eq_l1 = n_c * n_w;
    let eq_l2 = n_t * n_w;
    let eq_aux = aux_count;
    let num_eq = eq_18b + eq_18c + eq_l1 + eq_l2 + eq_aux;

    let mut eq = DMatrix::zeros(num_eq, num_vars);
    let mut eq_rhs = DVector::zeros(num_eq);
    let mut row = 0;

    // Worst-case definition per stage row and disturbance coordinate:
    // Σ_r Z[i,j][l,r] D[r,c] − (coefficients of the error response) = const.
    for i in 1..n {
        for j in 0..n_c {
            for l in 0..n - 1 {
                for c in 0..n_w {
                    for r in 0..n_d {
                        eq[(row, idx_z(i, j, l, r))] = d_w[(r, c)];
                    }
                    if l < i {
                        let m = i - 1 - l;
                        for s in 1..=m {
                            for p in 0..n_u {
                                let coeff_f = fab[m - s][(j, p)];
                                for q in 0..n_x {
                                    eq[(row, idx_m(s, p, q))] -= coeff_f * system.b_w[(q, c)];
                                }
                            }
                        }
                        for p in 0..n_u {
                            let coeff_g = system.g[(j, p)];
                            for q in 0..n_x {
                                eq[(row, idx_m(m + 1, p, q))] -= coeff_g * system.b_w[(q, c)];
                            }
                        }
                        eq_rhs[row] = faw[m][(j, c)];
                    }
                    row += 1;
                }
            }
        }
    }
    // t equals the certified bound: t[i,j] − Σ_{l,r} d[r] Z[i,j][l,r] = 0.
    for i in 1..n {
        for j in 0..n_c {
            eq[(row, idx_t(i, j))] = 1.0;
            for l in 0..n - 1 {
                for r in 0..n_d {
                    eq[(row, idx_z(i, j, l, r))] = -d_off[r];
                }
            }
            row += 1;
        }
    }
    // Hand-off equalities: Λ₁ D = (F Φ_{N-1} + G M_N) B_w.
    for j in 0..n_c {
        for c in 0..n_w {
            for r in 0..n_d {
                eq[(row, idx_l1(j, r))] = d_w[(r, c)];
            }
            for s in 1..n {
                for p in 0..n_u {
                    let coeff_f = fab[n - 1 - s][(j, p)];
                    for q in 0..n_x {
                        eq[(row, idx_m(s, p, q))] -= coeff_f * system.b_w[(q, c)];
                    }
                }
            }
            for p in 0..n_u {
                let coeff_g = system.g[(j, p)];
                for q in 0..n_x {
                    eq[(row, idx_m(n, p, q))] -= coeff_g * system.b_w[(q, c)];
                }
            }
            eq_rhs[row] = faw[n - 1][(j, c)];
            row += 1;
        }
    }
    // Λ₂ D = Y Ψ B_w with Ψ = A^N + Σ_{s=1..N} A^{N-s} B M_s.
    for rt in 0..n_t {
        for c in 0..n_w {
            for r in 0..n_d {
                eq[(row, idx_l2(rt, r))] = d_w[(r, c)];
            }
            for s in 1..=n {
                for p in 0..n_u {
                    let coeff_y = yab[n - s][(rt, p)];
                    for q in 0..n_x {
                        eq[(row, idx_m(s, p, q))] -= coeff_y * system.b_w[(q, c)];
                    }
                }
            }
            eq_rhs[row] = yaw[n][(rt, c)];
            row += 1;
        }
    }
    // Weighted-norm auxiliaries: aux = ω ∘ t.
    if let Some(wts) = &options.norm_weights {
        for k in 0..t_count {
            eq[(row, aux_base + k)] = 1.0;
            eq[(row, t_base + k)] = -wts[k];
            row += 1;
        }
    }
    debug_assert_eq!(row, num_eq);

    // Inequalities.
    let cap_rows = if options.cap_by_tmpc { t_count } else { 0 };
    let num_in = n_c + n_t + t_count + cap_rows;
    let mut inq = DMatrix::zeros(num_in, num_vars);
    let mut inq_rhs = DVector::zeros(num_in);
    let mut row = 0;
    // Λ₁ d + t_{N-1} ≤ b − c_F.
    for j in 0..n_c {
        for r in 0..n_d {
            inq[(row, idx_l1(j, r))] = d_off[r];
        }
        inq[(row, idx_t(n - 1, j))] = 1.0;
        inq_rhs[row] = system.b_rhs[j] - c_f[j];
        row += 1;
    }
    // Λ₂ d ≤ z − c_Y.
    for rt in 0..n_t {
        for r in 0..n_d {
            inq[(row, idx_l2(rt, r))] = d_off[r];
        }
        inq_rhs[row] = z_off[rt] - c_y[rt];
        row += 1;
    }
    // t ≤ b (stage constraints must keep a nonnegative right-hand side).
    for i in 1..n {
        for j in 0..n_c {
            inq[(row, idx_t(i, j))] = 1.0;
            inq_rhs[row] = system.b_rhs[j];
            row += 1;
        }
    }
    // Tube cap t ≤ t_tube.
    if options.cap_by_tmpc {
        for i in 1..n {
            for j in 0..n_c {
                inq[(row, idx_t(i, j))] = 1.0;
                inq_rhs[row] = tube.tightening.stage(i)[j];
                row += 1;
            }
        }
    }
    debug_assert_eq!(row, num_in);

    let mut problem = ConicProblem::new(DVector::zeros(num_vars));
    problem.linear_cost[0] = 1.0; // minimize Γ
    problem.eq_matrix = eq;
    problem.eq_rhs = eq_rhs;
    problem.ineq_matrix = inq;
    problem.ineq_rhs = inq_rhs;
    let mut nonneg: Vec<usize> = (t_base..t_base + t_count).collect();
    nonneg.extend(z_base..z_base + t_count * z_len);
    nonneg.extend(l1_base..l1_base + n_c * n_d);
    nonneg.extend(l2_base..l2_base + n_t * n_d);
    problem.nonneg = nonneg;
    let cone_members = if options.norm_weights.is_some() {
        (aux_base..aux_base + aux_count).collect::<Vec<_>>()
    } else {
        (t_base..t_base + t_count).collect::<Vec<_>>()
    };
    let mut soc = vec![0];
    soc.extend(cone_members);
    problem.soc_blocks = vec![soc];

    let sol = conic::solve(&problem, &options.settings)?;
    let outcome = match sol.status {
        SolveStatus::Optimal => {
            let blocks: Vec<DMatrix<f64>> = (1..n)
                .map(|s| {
                    DMatrix::from_fn(n_u, n_x, |p, q| sol.primal[idx_m(s, p, q)])
                })
                .collect();
            let term = DMatrix::from_fn(n_u, n_x, |p, q| sol.primal[idx_m(n, p, q)]);
            let policy = DisturbanceFeedback::new(blocks, term)?;
            let lambda1 = DMatrix::from_fn(n_c, n_d, |j, r| sol.primal[idx_l1(j, r)]);
            let lambda2 = DMatrix::from_fn(n_t, n_d, |rt, r| sol.primal[idx_l2(rt, r)]);
            DesignOutcome::Solved {
                policy,
                lambda1,
                lambda2,
                socp_objective: sol.objective,
                iterations: sol.diagnostics.iterations,
            }
        }
        SolveStatus::Infeasible => DesignOutcome::Infeasible,
        SolveStatus::Unbounded => {
            DesignOutcome::Failed("design program reported unbounded (data error)".into())
        }
        SolveStatus::NumericalFailure => {
            DesignOutcome::Failed(format!("numerical failure ({})", sol.diagnostics.raw_status))
        }
    };
    Ok(DesignAttempt {
        outcome,
        solve_time: sol.diagnostics.solve_time,
    })
}

/// Defensive re-verification of a solved design on canonical values.
#[allow(clippy::too_many_arguments)]
fn verify_design(
    system: &LinearSystem,
    n: usize,
    x_t: &PolytopeH,
    c_f: &DVector<f64>,
    c_y: &DVector<f64>,
    policy: &DisturbanceFeedback,
    tightening: &TighteningVector,
    lambda1: &DMatrix<f64>,
    lambda2: &DMatrix<f64>,
    tube: &TubeDesign,
    options: &DesignOptions,
) -> Result<()> {
    let tol = 1e-6;
    let d_w = system.w.normals();
    let d_off = system.w.offsets();

    // Λ equalities against the solved policy.
    let phis = policy.response_blocks(system);
    let lhs1 = lambda1 * d_w;
    let rhs1 = (&system.f * &phis[n - 1] + &system.g * policy.terminal()) * &system.b_w;
    if (lhs1 - rhs1).abs().max() > tol {
        return Err(Error::Solver("hand-off multiplier Λ₁ fails its equality".into()));
    }
    let lhs2 = lambda2 * d_w;
    let rhs2 = x_t.normals() * policy.terminal_response(system) * &system.b_w;
    if (lhs2 - rhs2).abs().max() > tol {
        return Err(Error::Solver("hand-off multiplier Λ₂ fails its equality".into()));
    }
    // Λ inequalities at the canonical tightening.
    let slack1 = &system.b_rhs - c_f - lambda1 * d_off - tightening.last();
    if slack1.min() < -tol {
        return Err(Error::Solver(format!(
            "hand-off stage condition violated by {:.3e}",
            -slack1.min()
        )));
    }
    let slack2 = x_t.offsets() - c_y - lambda2 * d_off;
    if slack2.min() < -tol {
        return Err(Error::Solver(format!(
            "hand-off terminal condition violated by {:.3e}",
            -slack2.min()
        )));
    }
    // Cap on canonical values.
    if options.cap_by_tmpc {
        for i in 0..n {
            let gap = (tightening.stage(i) - tube.tightening.stage(i)).max();
            if gap > tol {
                return Err(Error::Solver(format!(
                    "canonical tightening exceeds the tube cap at stage {i} by {gap:.3e}"
                )));
            }
        }
    }
    Ok(())
}

/// Everything the offline phase produces for one scenario and horizon.
#[derive(Debug, Clone)]
pub struct DesignOutput {
    /// Horizon `N`.
    pub horizon: usize,
    /// Terminal LQR gain.
    pub k_f: DMatrix<f64>,
    /// Terminal cost matrix.
    pub p: DMatrix<f64>,
    /// Fixed-gain tube baseline design.
    pub tmpc: TubeDesign,
    /// Optimized design (policy, tightening, terminal set, hand-off
    /// certificates).
    pub oct: OptimizedDesign,
    /// Terminal set for the online disturbance-feedback baseline.
    pub fpd_terminal: PolytopeH,
}

/// Runs the full offline pipeline.  See the module docs for the stages.
pub fn design_offline(
    system: &LinearSystem,
    weights: &CostWeights,
    n: usize,
    options: &DesignOptions,
) -> Result<DesignOutput> {
    let report = system.validate()?;
    if !report.is_ok() {
        return Err(Error::Invalid(report.violations.join("; ")));
    }
    let (k_f, _) = lqr_terminal_gain(system, weights)?;
    let p = terminal_cost(system, weights, &k_f)?;
    let tmpc = tmpc_design(system, &k_f, n)?;
    let x_t = design_terminal_set(system, &k_f, &tmpc.t_horizon, n, options.moas_max_iter)?;
    let oct = optimize_tightening(system, n, &x_t, &k_f, &tmpc, options)?;
    let fpd_terminal = fpd_terminal_set(system, &k_f, options.moas_max_iter)?;
    Ok(DesignOutput {
        horizon: n,
        k_f,
        p,
        tmpc,
        oct,
        fpd_terminal,
    })
}
