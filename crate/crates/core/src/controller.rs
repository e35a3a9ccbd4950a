//! Online receding-horizon controllers.
//!
//! Three controller families share one quadratic-program shape:
//!
//! * [`TightenedMpc`] — nominal prediction with per-stage tightened
//!   constraints `F x̂_i + G û_i ≤ b − t_i` and a terminal set; this covers
//!   the optimized-tightening controller, the fixed-gain tube baseline
//!   (same program, different `t`) and plain nominal MPC (`t = 0`).
//! * [`FpdMpc`] — the online disturbance-affine feedback baseline: the
//!   per-entry lower-triangular gains are decision variables, every
//!   robustified constraint carries nonnegative dual multipliers over the
//!   stacked disturbance polytope, and the cost is the same nominal
//!   quadratic.
//!
//! States are kept as explicit variables with equality dynamics rather
//! than condensed out: the sparse KKT systems solve faster at these sizes
//! and variable/constraint counts are then directly comparable across
//! controllers.
//!
//! Infeasibility is data here, not an error: region-of-attraction
//! estimation counts infeasible points, so [`Controller::step`] returns an
//! explicit infeasible decision and reserves `Err` for actual solver
//! breakdowns.

use std::sync::Mutex;

use nalgebra::{DMatrix, DVector};

use crate::conic::{self, ConicProblem, PreparedProblem, SolveStatus, SolverSettings};
use crate::model::{CostWeights, LinearSystem};
use crate::polytope::PolytopeH;
use crate::prediction::DisturbanceFeedback;
use crate::{Error, Result};

/// Planned nominal trajectory returned by a feasible solve.
#[derive(Debug, Clone)]
pub struct Plan {
    /// Predicted states `x̂_0 … x̂_N` (the first equals the measurement).
    pub states: Vec<DVector<f64>>,
    /// Planned inputs `û_0 … û_{N-1}`.
    pub inputs: Vec<DVector<f64>>,
    /// Optimal objective `Σ x̂ᵢᵀQx̂ᵢ + ûᵢᵀRûᵢ + x̂_NᵀPx̂_N`.
    pub objective: f64,
}

/// Outcome of one receding-horizon step.
#[derive(Debug, Clone)]
pub struct ControlDecision {
    /// Solver status; `Optimal` means a plan is available.
    pub status: SolveStatus,
    /// The optimal plan, absent when the problem is infeasible.
    pub plan: Option<Plan>,
    /// Wall-clock seconds spent inside the backend solve call (template
    /// setup and data updates excluded, for like-for-like controller
    /// timing).
    pub solve_time: f64,
}

impl ControlDecision {
    /// True when a plan was found.
    pub fn is_feasible(&self) -> bool {
        matches!(self.status, SolveStatus::Optimal)
    }

    /// The input to apply (first planned input), when feasible.
    pub fn input(&self) -> Option<&DVector<f64>> {
        self.plan.as_ref().map(|p| &p.inputs[0])
    }
}

/// Common interface over all controller families.
///
/// Implementations are immutable after construction; `step` may be called
/// concurrently (solves on one instance are internally serialized).
pub trait Controller: Send + Sync {
    /// Short identifier used in reports ("oct", "tmpc", "fpd", "nominal").
    fn name(&self) -> &str;
    /// Prediction horizon `N`.
    fn horizon(&self) -> usize;
    /// Decision-variable count of the underlying program.
    fn num_variables(&self) -> usize;
    /// Total constraint rows (equalities plus inequalities).
    fn num_constraints(&self) -> usize;
    /// Solves the receding-horizon problem at the measured state.
    ///
    /// # Errors
    ///
    /// [`Error::Solver`] on numerical failure; infeasibility is reported
    /// through the decision status, never as an error.
    fn step(&self, x: &DVector<f64>) -> Result<ControlDecision>;
}

/// Builds the shared quadratic cost `Σ x̂ᵀQx̂ + ûᵀRû + x̂_NᵀPx̂_N` over the
/// kept-state layout, as the `½xᵀHx` convention's `H` (hence the factor 2).
fn stage_cost_matrix(
    weights: &CostWeights,
    p: &DMatrix<f64>,
    n: usize,
    n_x: usize,
    n_u: usize,
    num_vars: usize,
) -> DMatrix<f64> {
    let mut h = DMatrix::zeros(num_vars, num_vars);
    for i in 0..n {
        h.view_mut((i * n_x, i * n_x), (n_x, n_x))
            .copy_from(&(2.0 * &weights.q));
    }
    h.view_mut((n * n_x, n * n_x), (n_x, n_x)).copy_from(&(2.0 * p));
    let u0 = (n + 1) * n_x;
    for i in 0..n {
        h.view_mut((u0 + i * n_u, u0 + i * n_u), (n_u, n_u))
            .copy_from(&(2.0 * &weights.r));
    }
    h
}

fn check_terminal_weight(p: &DMatrix<f64>, n_x: usize) -> Result<()> {
    if p.nrows() != n_x || p.ncols() != n_x {
        return Err(Error::Dimension(format!(
            "terminal weight is {}x{}, expected {n_x}x{n_x}",
            p.nrows(),
            p.ncols()
        )));
    }
    let scale = 1.0 + p.abs().max();
    if (p - p.transpose()).abs().max() > 1e-10 * scale {
        return Err(Error::Invalid("terminal weight is not symmetric".into()));
    }
    let shifted = p + DMatrix::identity(n_x, n_x) * (1e-10 * scale);
    if nalgebra::Cholesky::new(shifted).is_none() {
        return Err(Error::Invalid("terminal weight is not positive semidefinite".into()));
    }
    Ok(())
}

fn decision_from_solution(
    sol: conic::ConicSolution,
    n: usize,
    n_x: usize,
    n_u: usize,
    system: &LinearSystem,
) -> Result<ControlDecision> {
    match sol.status {
        SolveStatus::Optimal => {
            let states: Vec<DVector<f64>> = (0..=n)
                .map(|i| DVector::from_iterator(n_x, (0..n_x).map(|r| sol.primal[i * n_x + r])))
                .collect();
            let u0 = (n + 1) * n_x;
            let inputs: Vec<DVector<f64>> = (0..n)
                .map(|i| {
                    DVector::from_iterator(n_u, (0..n_u).map(|r| sol.primal[u0 + i * n_u + r]))
                })
                .collect();
            // The applied input must satisfy the untightened stage rows at
            // the measured state; anything else is a solver breakdown.
            let row0 = &system.f * &states[0] + &system.g * &inputs[0] - &system.b_rhs;
            if row0.max() > 1e-6 {
                return Err(Error::Solver(format!(
                    "applied input violates the stage constraint by {:.3e}",
                    row0.max()
                )));
            }
            Ok(ControlDecision {
                status: SolveStatus::Optimal,
                plan: Some(Plan {
                    states,
                    inputs,
                    objective: sol.objective,
                }),
                solve_time: sol.diagnostics.solve_time,
            })
        }
        SolveStatus::Infeasible => Ok(ControlDecision {
            status: SolveStatus::Infeasible,
            plan: None,
            solve_time: sol.diagnostics.solve_time,
        }),
        SolveStatus::Unbounded => Err(Error::Solver(
            "receding-horizon program reported unbounded (cost is positive definite; data error)"
                .into(),
        )),
        SolveStatus::NumericalFailure => Err(Error::Solver(format!(
            "receding-horizon solve failed numerically ({})",
            sol.diagnostics.raw_status
        ))),
    }
}

/// Nominal-prediction MPC over tightened constraints.
///
/// The same program serves three controllers: optimized tightenings,
/// tube-baseline tightenings, or all-zero tightenings (nominal MPC).
/// Variables are `[x̂_0 … x̂_N, û_0 … û_{N-1}]`; equalities pin `x̂_0` to
/// the measurement and encode the dynamics; inequalities are the
/// per-stage tightened rows plus the terminal set.
pub struct TightenedMpc {
    name: String,
    system: LinearSystem,
    horizon: usize,
    template: Mutex<PreparedProblem>,
    num_variables: usize,
    num_constraints: usize,
}

impl TightenedMpc {
    /// Builds the controller template.
    ///
    /// `tightenings` must hold one `n_c`-vector per stage `0 … N-1`
    /// (stage 0 is conventionally zero); `terminal` is the polytope the
    /// final predicted state must enter; `terminal_weight` is the
    /// positive-semidefinite cost on `x̂_N`.
    pub fn new(
        name: &str,
        system: &LinearSystem,
        weights: &CostWeights,
        tightenings: &[DVector<f64>],
        terminal: &PolytopeH,
        terminal_weight: &DMatrix<f64>,
    ) -> Result<Self> {
        let n = tightenings.len();
        if n < 2 {
            return Err(Error::Invalid(format!("horizon must be at least 2, got {n}")));
        }
        let n_x = system.n_x();
        let n_u = system.n_u();
        let n_c = system.n_c();
        if terminal.dim() != n_x {
            return Err(Error::Dimension(format!(
                "terminal set lives in dimension {}, expected {n_x}",
                terminal.dim()
            )));
        }
        check_terminal_weight(terminal_weight, n_x)?;
        for (i, t) in tightenings.iter().enumerate() {
            if t.len() != n_c {
                return Err(Error::Dimension(format!(
                    "stage {i} tightening has {} rows, expected {n_c}",
                    t.len()
                )));
            }
        }
        let n_t = terminal.num_rows();
        let num_vars = (n + 1) * n_x + n * n_u;
        let u0 = (n + 1) * n_x;

        let mut problem = ConicProblem::new(DVector::zeros(num_vars));
        problem.quadratic_cost = Some(stage_cost_matrix(weights, terminal_weight, n, n_x, n_u, num_vars));

        // Equalities: x̂_0 = x (rhs patched per step), then the dynamics.
        let num_eq = (n + 1) * n_x;
        let mut eq = DMatrix::zeros(num_eq, num_vars);
        for r in 0..n_x {
            eq[(r, r)] = 1.0;
        }
        for i in 0..n {
            let row0 = (i + 1) * n_x;
            for r in 0..n_x {
                eq[(row0 + r, (i + 1) * n_x + r)] = 1.0;
            }
            eq.view_mut((row0, i * n_x), (n_x, n_x)).copy_from(&(-&system.a));
            eq.view_mut((row0, u0 + i * n_u), (n_x, n_u)).copy_from(&(-&system.b));
        }
        problem.eq_matrix = eq;
        problem.eq_rhs = DVector::zeros(num_eq);

        // Inequalities: tightened stage rows and the terminal set.
        let num_in = n * n_c + n_t;
        let mut inq = DMatrix::zeros(num_in, num_vars);
        let mut inq_rhs = DVector::zeros(num_in);
        for i in 0..n {
            inq.view_mut((i * n_c, i * n_x), (n_c, n_x)).copy_from(&system.f);
            inq.view_mut((i * n_c, u0 + i * n_u), (n_c, n_u)).copy_from(&system.g);
            inq_rhs
                .rows_mut(i * n_c, n_c)
                .copy_from(&(&system.b_rhs - &tightenings[i]));
        }
        inq.view_mut((n * n_c, n * n_x), (n_t, n_x)).copy_from(terminal.normals());
        inq_rhs.rows_mut(n * n_c, n_t).copy_from(terminal.offsets());
        problem.ineq_matrix = inq;
        problem.ineq_rhs = inq_rhs;
        let prepared = PreparedProblem::new(problem, SolverSettings::default())?;

        Ok(TightenedMpc {
            name: name.to_string(),
            system: system.clone(),
            horizon: n,
            template: Mutex::new(prepared),
            num_variables: num_vars,
            num_constraints: num_eq + num_in,
        })
    }
}

impl Controller for TightenedMpc {
    fn name(&self) -> &str {
        &self.name
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn num_variables(&self) -> usize {
        self.num_variables
    }

    fn num_constraints(&self) -> usize {
        self.num_constraints
    }

    fn step(&self, x: &DVector<f64>) -> Result<ControlDecision> {
        let n_x = self.system.n_x();
        if x.len() != n_x {
            return Err(Error::Dimension(format!(
                "state has length {}, expected {n_x}",
                x.len()
            )));
        }
        let sol = {
            let mut prepared = self.template.lock().expect("controller lock poisoned");
            prepared.set_eq_rhs(0, x)?;
            prepared.solve()?
        };
        decision_from_solution(sol, self.horizon, n_x, self.system.n_u(), &self.system)
    }
}

/// Online disturbance-affine feedback MPC.
///
/// Decision variables: nominal trajectory `[x̂, û]`, per-entry strictly
/// lower-triangular gains `M_{i,l}` (`1 ≤ i ≤ N-1`, `l < i`, no Toeplitz
/// tying — this block grows as Θ(N²)), and one nonnegative multiplier
/// vector over the stacked disturbance polytope `W^N` per robustified
/// constraint row.  Each stage/terminal row is enforced for every
/// disturbance sequence through the usual strong-duality equalities; the
/// objective is the nominal quadratic cost.
pub struct FpdMpc {
    system: LinearSystem,
    horizon: usize,
    template: Mutex<PreparedProblem>,
    num_variables: usize,
    num_constraints: usize,
}

impl FpdMpc {
    /// Builds the controller template.  `terminal` is the robust invariant
    /// terminal polytope for the terminal controller; `terminal_weight`
    /// the cost on `x̂_N`.
    pub fn new(
        system: &LinearSystem,
        weights: &CostWeights,
        horizon: usize,
        terminal: &PolytopeH,
        terminal_weight: &DMatrix<f64>,
    ) -> Result<Self> {
        let n = horizon;
        if n < 2 {
            return Err(Error::Invalid(format!("horizon must be at least 2, got {n}")));
        }
        let n_x = system.n_x();
        let n_u = system.n_u();
        let n_c = system.n_c();
        let n_w = system.n_w();
        let n_d = system.w.num_rows();
        let n_t = terminal.num_rows();
        if terminal.dim() != n_x {
            return Err(Error::Dimension(format!(
                "terminal set lives in dimension {}, expected {n_x}",
                terminal.dim()
            )));
        }
        check_terminal_weight(terminal_weight, n_x)?;
        let d_w = system.w.normals();
        let d_off = system.w.offsets();
        let y_mat = terminal.normals();

        // Variable layout: [x̂ | û | gains | stage duals | terminal duals].
        let u_base = (n + 1) * n_x;
        let gain_base = u_base + n * n_u;
        let gain_block = n_u * n_x;
        let num_gain_blocks = n * (n - 1) / 2;
        let dual_len = n * n_d; // one multiplier per stacked facet of W^N
        let sd_base = gain_base + num_gain_blocks * gain_block;
        let td_base = sd_base + (n - 1) * n_c * dual_len;
        let num_vars = td_base + n_t * dual_len;

        // Gains for stage i occupy the prefix `0+1+…+(i-1)` block slots.
        let idx_gain = |i: usize, l: usize, p: usize, q: usize| {
            gain_base + (i * (i - 1) / 2 + l) * gain_block + p * n_x + q
        };
        let idx_sd = |i: usize, j: usize, l: usize, r: usize| {
            sd_base + ((i - 1) * n_c + j) * dual_len + l * n_d + r
        };
        let idx_td =
            |rt: usize, l: usize, r: usize| td_base + rt * dual_len + l * n_d + r;

        // Products used by the duality equalities.
        let mut fab = Vec::with_capacity(n); // F A^s B
        let mut faw = Vec::with_capacity(n); // F A^s B_w
        let mut yab = Vec::with_capacity(n); // Y A^s B
        let mut yaw = Vec::with_capacity(n); // Y A^s B_w
        {
            let mut a_pow = DMatrix::identity(n_x, n_x);
            for _ in 0..n {
                fab.push(&system.f * &a_pow * &system.b);
                faw.push(&system.f * &a_pow * &system.b_w);
                yab.push(y_mat * &a_pow * &system.b);
                yaw.push(y_mat * &a_pow * &system.b_w);
                a_pow = &a_pow * &system.a;
            }
        }

        let mut problem = ConicProblem::new(DVector::zeros(num_vars));
        problem.quadratic_cost = Some(stage_cost_matrix(weights, terminal_weight, n, n_x, n_u, num_vars));

        // Equalities: measurement pin, dynamics, then one duality row per
        // robustified constraint row and stacked disturbance coordinate.
        let num_eq = (n + 1) * n_x + ((n - 1) * n_c + n_t) * n * n_w;
        let mut eq = DMatrix::zeros(num_eq, num_vars);
        let mut eq_rhs = DVector::zeros(num_eq);
        for r in 0..n_x {
            eq[(r, r)] = 1.0;
        }
        for i in 0..n {
            let row0 = (i + 1) * n_x;
            for r in 0..n_x {
                eq[(row0 + r, (i + 1) * n_x + r)] = 1.0;
            }
            eq.view_mut((row0, i * n_x), (n_x, n_x)).copy_from(&(-&system.a));
            eq.view_mut((row0, u_base + i * n_u), (n_x, n_u))
                .copy_from(&(-&system.b));
        }
        let mut row = (n + 1) * n_x;
        // Stage rows i = 1..N-1: the error response of w_l in constraint
        // row j is F A^{i-1-l} B_w plus gain-dependent corrections.
        for i in 1..n {
            for j in 0..n_c {
                for l in 0..n {
                    for c in 0..n_w {
                        for r in 0..n_d {
                            eq[(row, idx_sd(i, j, l, r))] = d_w[(r, c)];
                        }
                        if l < i {
                            for s in l + 1..i {
                                for p in 0..n_u {
                                    let coeff = fab[i - 1 - s][(j, p)];
                                    for q in 0..n_x {
                                        eq[(row, idx_gain(s, l, p, q))] -=
                                            coeff * system.b_w[(q, c)];
                                    }
                                }
                            }
                            for p in 0..n_u {
                                let coeff = system.g[(j, p)];
                                for q in 0..n_x {
                                    eq[(row, idx_gain(i, l, p, q))] -= coeff * system.b_w[(q, c)];
                                }
                            }
                            eq_rhs[row] = faw[i - 1 - l][(j, c)];
                        }
                        row += 1;
                    }
                }
            }
        }
        // Terminal rows: the response of w_l in Y x_N is Y A^{N-1-l} B_w
        // plus corrections from every gain acting after stage l.
        for rt in 0..n_t {
            for l in 0..n {
                for c in 0..n_w {
                    for r in 0..n_d {
                        eq[(row, idx_td(rt, l, r))] = d_w[(r, c)];
                    }
                    for s in l + 1..n {
                        for p in 0..n_u {
                            let coeff = yab[n - 1 - s][(rt, p)];
                            for q in 0..n_x {
                                eq[(row, idx_gain(s, l, p, q))] -= coeff * system.b_w[(q, c)];
                            }
                        }
                    }
                    eq_rhs[row] = yaw[n - 1 - l][(rt, c)];
                    row += 1;
                }
            }
        }
        debug_assert_eq!(row, num_eq);
        problem.eq_matrix = eq;
        problem.eq_rhs = eq_rhs;

        // Inequalities: nominal stage rows plus the certified worst case.
        let num_in = n * n_c + n_t;
        let mut inq = DMatrix::zeros(num_in, num_vars);
        let mut inq_rhs = DVector::zeros(num_in);
        for i in 0..n {
            inq.view_mut((i * n_c, i * n_x), (n_c, n_x)).copy_from(&system.f);
            inq.view_mut((i * n_c, u_base + i * n_u), (n_c, n_u))
                .copy_from(&system.g);
            inq_rhs.rows_mut(i * n_c, n_c).copy_from(&system.b_rhs);
            if i >= 1 {
                for j in 0..n_c {
                    for l in 0..n {
                        for r in 0..n_d {
                            inq[(i * n_c + j, idx_sd(i, j, l, r))] = d_off[r];
                        }
                    }
                }
            }
        }
        inq.view_mut((n * n_c, n * n_x), (n_t, n_x)).copy_from(y_mat);
        inq_rhs.rows_mut(n * n_c, n_t).copy_from(terminal.offsets());
        for rt in 0..n_t {
            for l in 0..n {
                for r in 0..n_d {
                    inq[(n * n_c + rt, idx_td(rt, l, r))] = d_off[r];
                }
            }
        }
        problem.ineq_matrix = inq;
        problem.ineq_rhs = inq_rhs;
        problem.nonneg = (sd_base..num_vars).collect();
        let prepared = PreparedProblem::new(problem, SolverSettings::default())?;

        Ok(FpdMpc {
            system: system.clone(),
            horizon: n,
            template: Mutex::new(prepared),
            num_variables: num_vars,
            num_constraints: num_eq + num_in,
        })
    }
}

impl Controller for FpdMpc {
    fn name(&self) -> &str {
        "fpd"
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn num_variables(&self) -> usize {
        self.num_variables
    }

    fn num_constraints(&self) -> usize {
        self.num_constraints
    }

    fn step(&self, x: &DVector<f64>) -> Result<ControlDecision> {
        let n_x = self.system.n_x();
        if x.len() != n_x {
            return Err(Error::Dimension(format!(
                "state has length {}, expected {n_x}",
                x.len()
            )));
        }
        let sol = {
            let mut prepared = self.template.lock().expect("controller lock poisoned");
            prepared.set_eq_rhs(0, x)?;
            prepared.solve()?
        };
        decision_from_solution(sol, self.horizon, n_x, self.system.n_u(), &self.system)
    }
}

/// Constructs the one-step-shifted candidate plan after disturbance `w`
/// acts on the first applied input.
///
/// Given the optimal plan at `x_k`, the next measured state is
/// `x̂_1 + B_w w`.  The candidate keeps the remaining planned inputs,
/// corrects each by the policy block matching the disturbance's age
/// (`û'_i = û_{i+1} + M_{i+1} B_w w`), and appends the terminal
/// controller (`û'_{N-1} = K_f x̂_N + M_N B_w w`); states follow the
/// nominal dynamics from `x̂'_0 = x̂_1 + B_w w`.
pub fn shift_candidate(
    plan: &Plan,
    policy: &DisturbanceFeedback,
    k_f: &DMatrix<f64>,
    system: &LinearSystem,
    w: &DVector<f64>,
) -> Result<(Vec<DVector<f64>>, Vec<DVector<f64>>)> {
    let n = policy.horizon();
    if plan.inputs.len() != n || plan.states.len() != n + 1 {
        return Err(Error::Dimension(format!(
            "plan has {} inputs for a horizon-{n} policy",
            plan.inputs.len()
        )));
    }
    if w.len() != system.n_w() {
        return Err(Error::Dimension(format!(
            "disturbance has length {}, expected {}",
            w.len(),
            system.n_w()
        )));
    }
    let delta = &system.b_w * w;
    let mut inputs = Vec::with_capacity(n);
    for i in 0..n - 1 {
        inputs.push(&plan.inputs[i + 1] + policy.block(i + 1) * &delta);
    }
    inputs.push(k_f * &plan.states[n] + policy.terminal() * &delta);
    let mut states = Vec::with_capacity(n + 1);
    states.push(&plan.states[1] + &delta);
    for input in &inputs {
        let last = states.last().expect("seeded above");
        states.push(&system.a * last + &system.b * input);
    }
    Ok((states, inputs))
}

/// Largest violation of the tightened stage rows and the terminal set by
/// a candidate plan (negative values mean strict satisfaction).
pub fn plan_violation(
    system: &LinearSystem,
    tightenings: &[DVector<f64>],
    terminal: &PolytopeH,
    states: &[DVector<f64>],
    inputs: &[DVector<f64>],
) -> f64 {
    let n = inputs.len();
    let mut worst = f64::NEG_INFINITY;
    for i in 0..n {
        let rows = &system.f * &states[i] + &system.g * &inputs[i] - &system.b_rhs
            + &tightenings[i];
        worst = worst.max(rows.max());
    }
    let term = terminal.normals() * &states[n] - terminal.offsets();
    worst.max(term.max())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{design_offline, DesignOptions, DesignOutput};
    use approx::assert_abs_diff_eq;

    fn scalar_system(bound_w: f64) -> LinearSystem {
        let w = PolytopeH::from_symmetric_bounds(&[bound_w]).unwrap();
        LinearSystem::with_box_constraints(
            DMatrix::from_row_slice(1, 1, &[1.0]),
            DMatrix::from_row_slice(1, 1, &[1.0]),
            DMatrix::identity(1, 1),
            &[5.0],
            &[1.0],
            w,
        )
        .unwrap()
    }

    fn scalar_design(bound_w: f64, n: usize) -> (LinearSystem, CostWeights, DesignOutput) {
        let sys = scalar_system(bound_w);
        let weights = CostWeights::identity(1, 1);
        let out = design_offline(&sys, &weights, n, &DesignOptions::default()).unwrap();
        (sys, weights, out)
    }

    fn oct_from(sys: &LinearSystem, weights: &CostWeights, out: &DesignOutput) -> TightenedMpc {
        TightenedMpc::new(
            "oct",
            sys,
            weights,
            out.oct.tightening.stages(),
            &out.oct.terminal,
            &out.p,
        )
        .unwrap()
    }

    #[test]
    fn origin_is_a_fixed_point() {
        let (sys, weights, out) = scalar_design(1.0, 3);
        let ctrl = oct_from(&sys, &weights, &out);
        let d = ctrl.step(&DVector::zeros(1)).unwrap();
        assert!(d.is_feasible());
        assert_abs_diff_eq!(d.input().unwrap()[0], 0.0, epsilon = 1e-7);
        assert_abs_diff_eq!(d.plan.unwrap().objective, 0.0, epsilon = 1e-7);
    }

    #[test]
    fn unconstrained_region_recovers_the_lqr_gain() {
        // With terminal weight P solving the Riccati equation, the
        // finite-horizon program is the infinite-horizon regulator
        // wherever no constraint is active: û_0 = K_f x exactly.
        let (sys, weights, out) = scalar_design(1.0, 3);
        let ctrl = oct_from(&sys, &weights, &out);
        let x = DVector::from_vec(vec![0.05]);
        let d = ctrl.step(&x).unwrap();
        let expected = (&out.k_f * &x)[0];
        assert_abs_diff_eq!(d.input().unwrap()[0], expected, epsilon = 1e-6);
    }

    #[test]
    fn scalar_feasibility_boundary_matches_hand_formula() {
        // Integrator reachability: x_0 is feasible iff the inputs can walk
        // the state into the terminal interval, i.e.
        // x_0 ≤ max(X_T) + Σ_i (1 − t_i on the input row).
        let (sys, weights, out) = scalar_design(1.0, 3);
        let ctrl = oct_from(&sys, &weights, &out);
        let x_t_hi = out.oct.terminal.support(&DVector::from_vec(vec![1.0])).unwrap();
        let budget: f64 = (0..3).map(|i| 1.0 - out.oct.tightening.stage(i)[2]).sum();
        let bound = x_t_hi + budget;
        let inside = ctrl.step(&DVector::from_vec(vec![bound - 0.01])).unwrap();
        assert!(inside.is_feasible(), "x = {:.4} should be feasible", bound - 0.01);
        let outside = ctrl.step(&DVector::from_vec(vec![bound + 0.01])).unwrap();
        assert!(!outside.is_feasible(), "x = {:.4} should be infeasible", bound + 0.01);
        assert!(outside.plan.is_none());
    }

    #[test]
    fn problem_sizes_match_across_fixed_tightening_controllers() {
        let (sys, weights, out) = scalar_design(1.0, 3);
        let oct = oct_from(&sys, &weights, &out);
        let tmpc = TightenedMpc::new(
            "tmpc",
            &sys,
            &weights,
            out.tmpc.tightening.stages(),
            &out.oct.terminal,
            &out.p,
        )
        .unwrap();
        let zeros = vec![DVector::zeros(sys.n_c()); 3];
        let nominal =
            TightenedMpc::new("nominal", &sys, &weights, &zeros, &out.oct.terminal, &out.p)
                .unwrap();
        assert_eq!(oct.num_variables(), tmpc.num_variables());
        assert_eq!(oct.num_variables(), nominal.num_variables());
        assert_eq!(oct.num_constraints(), tmpc.num_constraints());
        assert_eq!(oct.num_constraints(), nominal.num_constraints());
        let fpd = FpdMpc::new(&sys, &weights, 3, &out.fpd_terminal, &out.p).unwrap();
        assert!(fpd.num_variables() > oct.num_variables());
        // Strictly-lower-triangular gain block: n_u·n_x·N(N-1)/2 entries.
        let gain_entries = 1 * 1 * 3 * 2 / 2;
        let dual_entries = (2 * sys.n_c() + out.fpd_terminal.num_rows()) * 3 * 2;
        assert_eq!(
            fpd.num_variables(),
            oct.num_variables() + gain_entries + dual_entries
        );
    }

    #[test]
    fn all_controllers_coincide_without_disturbance() {
        let (sys, weights, out) = scalar_design(0.0, 3);
        let x = DVector::from_vec(vec![2.0]);
        let oct = oct_from(&sys, &weights, &out);
        let tmpc = TightenedMpc::new(
            "tmpc",
            &sys,
            &weights,
            out.tmpc.tightening.stages(),
            &out.oct.terminal,
            &out.p,
        )
        .unwrap();
        let zeros = vec![DVector::zeros(sys.n_c()); 3];
        let nominal =
            TightenedMpc::new("nominal", &sys, &weights, &zeros, &out.oct.terminal, &out.p)
                .unwrap();
        let fpd = FpdMpc::new(&sys, &weights, 3, &out.fpd_terminal, &out.p).unwrap();
        let u_oct = oct.step(&x).unwrap().input().unwrap()[0];
        let u_tmpc = tmpc.step(&x).unwrap().input().unwrap()[0];
        let u_nom = nominal.step(&x).unwrap().input().unwrap()[0];
        let u_fpd = fpd.step(&x).unwrap().input().unwrap()[0];
        assert_abs_diff_eq!(u_oct, u_tmpc, epsilon = 1e-6);
        assert_abs_diff_eq!(u_oct, u_nom, epsilon = 1e-6);
        assert_abs_diff_eq!(u_oct, u_fpd, epsilon = 1e-6);
    }

    #[test]
    fn fpd_feasibility_boundary_matches_hand_geometry() {
        // Scalar integrator, |u| ≤ 1, |w| ≤ 1: however the online gains
        // split the burden, one unit of reach is lost per unit of
        // disturbance absorbed, and the terminal interval [-c, c] needs
        // c(1 - a_cl) ≥ w_max, i.e. c = 1/(1 - 0.382) = φ.  Total reach
        // plus terminal margin is then constant: the region is [-φ, φ].
        let (sys, weights, out) = scalar_design(1.0, 3);
        let fpd = FpdMpc::new(&sys, &weights, 3, &out.fpd_terminal, &out.p).unwrap();
        let phi = (1.0 + 5.0_f64.sqrt()) / 2.0;
        for sign in [-1.0, 1.0] {
            let inside = fpd.step(&DVector::from_vec(vec![sign * (phi - 0.02)])).unwrap();
            assert!(inside.is_feasible(), "x = {:.4} should be feasible", sign * (phi - 0.02));
            let outside = fpd.step(&DVector::from_vec(vec![sign * (phi + 0.02)])).unwrap();
            assert!(!outside.is_feasible(), "x = {:.4} should be infeasible", sign * (phi + 0.02));
        }
    }

    #[test]
    fn shifted_candidate_stays_feasible_on_the_scalar_example() {
        let (sys, weights, out) = scalar_design(1.0, 3);
        let ctrl = oct_from(&sys, &weights, &out);
        let x = DVector::from_vec(vec![1.2]);
        let plan = ctrl.step(&x).unwrap().plan.unwrap();
        for w in [-1.0, 1.0] {
            let (states, inputs) = shift_candidate(
                &plan,
                &out.oct.policy,
                &out.k_f,
                &sys,
                &DVector::from_vec(vec![w]),
            )
            .unwrap();
            let violation = plan_violation(
                &sys,
                out.oct.tightening.stages(),
                &out.oct.terminal,
                &states,
                &inputs,
            );
            assert!(violation <= 1e-6, "w = {w}: violation {violation:.3e}");
        }
    }

    #[test]
    fn shifted_candidate_matches_response_closed_form() {
        // Propagated candidate states must equal x̂_{i+1} + Φ_i B_w w and
        // the appended terminal state (A+BK_f) x̂_N + Ψ B_w w.
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, -0.1, 0.99]);
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 2.0]);
        let b_w = DMatrix::identity(2, 2) * 0.1;
        let w_set = PolytopeH::from_box(&[-2.0, -5.0], &[2.0, 5.0]).unwrap();
        let sys =
            LinearSystem::with_box_constraints(a, b, b_w, &[25.0, 25.0], &[1.0], w_set).unwrap();
        let weights = CostWeights::identity(2, 1);
        let out = design_offline(&sys, &weights, 4, &DesignOptions::default()).unwrap();
        let ctrl = TightenedMpc::new(
            "oct",
            &sys,
            &weights,
            out.oct.tightening.stages(),
            &out.oct.terminal,
            &out.p,
        )
        .unwrap();
        let x = DVector::from_vec(vec![3.0, -1.0]);
        let plan = ctrl.step(&x).unwrap().plan.unwrap();
        let w = DVector::from_vec(vec![2.0, -5.0]);
        let (states, _) = shift_candidate(&plan, &out.oct.policy, &out.k_f, &sys, &w).unwrap();
        let delta = &sys.b_w * &w;
        let phis = out.oct.policy.response_blocks(&sys);
        for i in 0..4 {
            let expected = &plan.states[i + 1] + &phis[i] * &delta;
            assert_abs_diff_eq!(states[i], expected, epsilon = 1e-8);
        }
        let a_cl = &sys.a + &sys.b * &out.k_f;
        let expected_last =
            &a_cl * &plan.states[4] + out.oct.policy.terminal_response(&sys) * &delta;
        assert_abs_diff_eq!(states[4], expected_last, epsilon = 1e-8);
    }

    #[test]
    fn rejects_bad_dimensions() {
        let (sys, weights, out) = scalar_design(1.0, 3);
        let ctrl = oct_from(&sys, &weights, &out);
        assert!(ctrl.step(&DVector::zeros(2)).is_err());
        let bad_terminal = PolytopeH::from_symmetric_bounds(&[1.0, 1.0]).unwrap();
        assert!(TightenedMpc::new(
            "oct",
            &sys,
            &weights,
            out.oct.tightening.stages(),
            &bad_terminal,
            &out.p
        )
        .is_err());
    }
}
