//! Closed-loop simulation and evaluation harness.
//!
//! Everything the experiments need: seeded Monte-Carlo and adversarial
//! closed-loop runs ([`simulate`]), region-of-attraction grid sweeps
//! ([`estimate_roa`]), closed-loop cost comparison under common random
//! numbers ([`compare_costs`]), solve-time statistics ([`timing_report`])
//! and the CSV writers for all of them.
//!
//! Determinism is load-bearing: every random quantity derives from an
//! explicit seed, per-point/per-run seeds are computed independently of
//! execution order, and grid sweeps are pure per point — so the worker
//! count never changes any result.

use std::io::Write as _;
use std::path::Path;

use nalgebra::DVector;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use crate::conic::SolveStatus;
use crate::controller::Controller;
use crate::model::{CostWeights, LinearSystem};
use crate::{Error, Result};

/// How disturbances are generated during a closed-loop run.
#[derive(Debug, Clone)]
pub enum DisturbanceSource {
    /// `w ≡ 0` (nominal runs, convergence checks).
    Zero,
    /// Independent uniform draws over the disturbance set, seeded.  Exact
    /// for box-shaped sets; general polytopes are sampled by rejection
    /// from the vertex bounding box.
    SeededUniform { seed: u64 },
    /// A fixed sequence, used as given — deliberately unvalidated against
    /// the disturbance set so out-of-model stress runs are expressible.
    Explicit(Vec<DVector<f64>>),
    /// Cycles deterministically through the disturbance-set vertices:
    /// worst-case satisfaction is the guarantee actually under test.
    VertexAdversarial,
}

/// Iterator-like sampler realizing a [`DisturbanceSource`] for one run.
enum Sampler<'a> {
    Zero(usize),
    Uniform {
        rng: ChaCha20Rng,
        lower: DVector<f64>,
        upper: DVector<f64>,
        set: &'a crate::polytope::PolytopeH,
    },
    Explicit { seq: &'a [DVector<f64>], next: usize },
    Vertices { list: Vec<DVector<f64>>, next: usize },
}

impl<'a> Sampler<'a> {
    fn new(source: &'a DisturbanceSource, system: &'a LinearSystem, steps: usize) -> Result<Self> {
        match source {
            DisturbanceSource::Zero => Ok(Sampler::Zero(system.n_w())),
            DisturbanceSource::SeededUniform { seed } => {
                let verts = system.w.vertices()?;
                let n_w = system.n_w();
                let mut lower = DVector::from_element(n_w, f64::INFINITY);
                let mut upper = DVector::from_element(n_w, f64::NEG_INFINITY);
                for v in &verts {
                    for i in 0..n_w {
                        lower[i] = lower[i].min(v[i]);
                        upper[i] = upper[i].max(v[i]);
                    }
                }
                Ok(Sampler::Uniform {
                    rng: ChaCha20Rng::seed_from_u64(*seed),
                    lower,
                    upper,
                    set: &system.w,
                })
            }
            DisturbanceSource::Explicit(seq) => {
                if seq.len() < steps {
                    return Err(Error::Invalid(format!(
                        "explicit disturbance sequence has {} entries, run needs {steps}",
                        seq.len()
                    )));
                }
                Ok(Sampler::Explicit { seq, next: 0 })
            }
            DisturbanceSource::VertexAdversarial => {
                let list = system.w.vertices()?;
                if list.is_empty() {
                    return Err(Error::Invalid("disturbance set has no vertices".into()));
                }
                Ok(Sampler::Vertices { list, next: 0 })
            }
        }
    }

    fn next(&mut self) -> Result<DVector<f64>> {
        match self {
            Sampler::Zero(n_w) => Ok(DVector::zeros(*n_w)),
            Sampler::Uniform { rng, lower, upper, set } => {
                for _ in 0..10_000 {
                    let w = DVector::from_iterator(
                        lower.len(),
                        lower
                            .iter()
                            .zip(upper.iter())
                            .map(|(&lo, &hi)| lo + rng.gen::<f64>() * (hi - lo)),
                    );
                    if set.contains(&w, 1e-9) {
                        return Ok(w);
                    }
                }
                Err(Error::Invalid(
                    "rejection sampling failed; disturbance set is too thin for uniform draws"
                        .into(),
                ))
            }
            Sampler::Explicit { seq, next } => {
                let w = seq[*next].clone();
                *next += 1;
                Ok(w)
            }
            Sampler::Vertices { list, next } => {
                let w = list[*next].clone();
                *next = (*next + 1) % list.len();
                Ok(w)
            }
        }
    }
}

/// One closed-loop run: `K+1` states, `K` of everything else.
#[derive(Debug, Clone)]
pub struct ClosedLoopTrace {
    /// Visited states `x_0 … x_K`.
    pub states: Vec<DVector<f64>>,
    /// Applied inputs `u_0 … u_{K-1}`.
    pub inputs: Vec<DVector<f64>>,
    /// Realized disturbances `w_0 … w_{K-1}`.
    pub disturbances: Vec<DVector<f64>>,
    /// Stage costs `x_kᵀQx_k + u_kᵀRu_k`.
    pub stage_costs: Vec<f64>,
    /// Optimal objective of each receding-horizon solve.
    pub objectives: Vec<f64>,
    /// Per-step solver time in seconds.
    pub solve_times: Vec<f64>,
    /// Per-step solver status (all `Optimal` in a completed run).
    pub statuses: Vec<SolveStatus>,
}

impl ClosedLoopTrace {
    /// Number of applied steps `K`.
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    /// True when no step was applied.
    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// Accumulated stage cost.
    pub fn total_cost(&self) -> f64 {
        self.stage_costs.iter().sum()
    }

    /// Checks the trace invariants: consistent lengths, dynamics replayed
    /// to `1e-10`, and every visited `(x_k, u_k)` inside the constraints
    /// to `1e-6`.
    pub fn validate(&self, system: &LinearSystem) -> Result<()> {
        let k = self.inputs.len();
        if self.states.len() != k + 1
            || self.disturbances.len() != k
            || self.stage_costs.len() != k
            || self.objectives.len() != k
            || self.solve_times.len() != k
            || self.statuses.len() != k
        {
            return Err(Error::Invalid("trace field lengths are inconsistent".into()));
        }
        for i in 0..k {
            let predicted = &system.a * &self.states[i]
                + &system.b * &self.inputs[i]
                + &system.b_w * &self.disturbances[i];
            let gap = (&self.states[i + 1] - predicted).abs().max();
            if gap > 1e-10 {
                return Err(Error::Invalid(format!(
                    "dynamics mismatch at step {i} (gap {gap:.3e})"
                )));
            }
            let rows = &system.f * &self.states[i] + &system.g * &self.inputs[i] - &system.b_rhs;
            if rows.max() > 1e-6 {
                return Err(Error::Invalid(format!(
                    "constraint violation {:.3e} at step {i}",
                    rows.max()
                )));
            }
        }
        Ok(())
    }
}

/// A closed-loop run that could not be completed.
#[derive(Debug)]
pub enum RunError {
    /// The controller reported infeasibility mid-run — this falsifies the
    /// recursive-feasibility guarantee and must be loud.  Carries the
    /// trace up to the failing step; `state` is where the solve failed.
    Infeasible {
        /// Step index at which the solve was infeasible.
        step: usize,
        /// The state the controller could not handle.
        state: DVector<f64>,
        /// Completed steps before the failure (validates on its own).
        partial: ClosedLoopTrace,
    },
    /// Solver breakdown or invalid data.
    Failed(Error),
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Infeasible { step, .. } => {
                write!(f, "controller infeasible at closed-loop step {step}")
            }
            RunError::Failed(e) => write!(f, "closed-loop run failed: {e}"),
        }
    }
}

impl std::error::Error for RunError {}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        RunError::Failed(e)
    }
}

/// Runs `steps` closed-loop steps of `controller` on `system` from `x0`.
///
/// Each step solves the receding-horizon problem, applies the first
/// input, draws a disturbance from `source` and propagates the dynamics.
/// The returned trace satisfies [`ClosedLoopTrace::validate`]; identical
/// arguments (including seeds) give bit-identical traces.
pub fn simulate(
    controller: &dyn Controller,
    system: &LinearSystem,
    weights: &CostWeights,
    x0: &DVector<f64>,
    steps: usize,
    source: &DisturbanceSource,
) -> std::result::Result<ClosedLoopTrace, RunError> {
    let mut sampler = Sampler::new(source, system, steps)?;
    let mut trace = ClosedLoopTrace {
        states: Vec::with_capacity(steps + 1),
        inputs: Vec::with_capacity(steps),
        disturbances: Vec::with_capacity(steps),
        stage_costs: Vec::with_capacity(steps),
        objectives: Vec::with_capacity(steps),
        solve_times: Vec::with_capacity(steps),
        statuses: Vec::with_capacity(steps),
    };
    trace.states.push(x0.clone());
    for step in 0..steps {
        let x = trace.states[step].clone();
        let decision = controller.step(&x)?;
        if !decision.is_feasible() {
            return Err(RunError::Infeasible { step, state: x, partial: trace });
        }
        let plan = decision.plan.expect("feasible decision carries a plan");
        let u = plan.inputs[0].clone();
        let w = sampler.next()?;
        let next = &system.a * &x + &system.b * &u + &system.b_w * &w;
        trace.stage_costs.push((x.transpose() * &weights.q * &x
            + u.transpose() * &weights.r * &u)[(0, 0)]);
        trace.objectives.push(plan.objective);
        trace.solve_times.push(decision.solve_time);
        trace.statuses.push(decision.status);
        trace.inputs.push(u);
        trace.disturbances.push(w);
        trace.states.push(next);
    }
    trace.validate(system)?;
    Ok(trace)
}

/// Axis-aligned evaluation grid, optionally over a coordinate subspace
/// (remaining coordinates are held at zero).
#[derive(Debug, Clone)]
pub struct GridSpec {
    /// Ambient state dimension.
    pub dim: usize,
    /// Coordinates that vary (strictly increasing).
    pub axes: Vec<usize>,
    /// Per-axis lower bounds.
    pub lower: Vec<f64>,
    /// Per-axis upper bounds.
    pub upper: Vec<f64>,
    /// Per-axis point counts (endpoints included when ≥ 2).
    pub counts: Vec<usize>,
}

impl GridSpec {
    /// Full-dimensional grid over a box.
    pub fn over_box(lower: &[f64], upper: &[f64], counts: &[usize]) -> Result<Self> {
        GridSpec::over_subspace(
            lower.len(),
            &(0..lower.len()).collect::<Vec<_>>(),
            lower,
            upper,
            counts,
        )
    }

    /// Grid over selected coordinates with the rest pinned to zero.
    pub fn over_subspace(
        dim: usize,
        axes: &[usize],
        lower: &[f64],
        upper: &[f64],
        counts: &[usize],
    ) -> Result<Self> {
        if axes.len() != lower.len() || axes.len() != upper.len() || axes.len() != counts.len() {
            return Err(Error::Dimension("grid spec fields have mismatched lengths".into()));
        }
        if axes.windows(2).any(|p| p[1] <= p[0]) || axes.iter().any(|&a| a >= dim) {
            return Err(Error::Invalid("grid axes must be strictly increasing and in range".into()));
        }
        for i in 0..axes.len() {
            if counts[i] == 0 || !(lower[i] <= upper[i]) {
                return Err(Error::Invalid(format!(
                    "grid axis {i} has empty range or zero count"
                )));
            }
        }
        Ok(GridSpec {
            dim,
            axes: axes.to_vec(),
            lower: lower.to_vec(),
            upper: upper.to_vec(),
            counts: counts.to_vec(),
        })
    }

    /// Total number of grid points.
    pub fn num_points(&self) -> usize {
        self.counts.iter().product()
    }

    /// Materializes the points, last axis fastest.
    pub fn points(&self) -> Vec<DVector<f64>> {
        let total = self.num_points();
        let mut out = Vec::with_capacity(total);
        for flat in 0..total {
            let mut x = DVector::zeros(self.dim);
            let mut rem = flat;
            for ax in (0..self.axes.len()).rev() {
                let idx = rem % self.counts[ax];
                rem /= self.counts[ax];
                let value = if self.counts[ax] == 1 {
                    0.5 * (self.lower[ax] + self.upper[ax])
                } else {
                    self.lower[ax]
                        + idx as f64 * (self.upper[ax] - self.lower[ax])
                            / (self.counts[ax] - 1) as f64
                };
                x[self.axes[ax]] = value;
            }
            out.push(x);
        }
        out
    }
}

/// Feasibility sweep result over a grid of candidate initial states.
#[derive(Debug, Clone)]
pub struct RoaReport {
    /// The swept grid.
    pub grid: GridSpec,
    /// Materialized grid points (same order as the flag rows).
    pub points: Vec<DVector<f64>>,
    /// Controller names, in the order passed to [`estimate_roa`].
    pub names: Vec<String>,
    /// `feasible[c][p]`: controller `c` solved point `p`.
    pub feasible: Vec<Vec<bool>>,
    /// `solve_times[c][p]` in seconds (NaN where the solve errored).
    pub solve_times: Vec<Vec<f64>>,
    /// Solver breakdowns per controller (counted as infeasible points).
    pub failures: Vec<usize>,
    /// Nesting violations per consecutive controller pair: point indices
    /// feasible for controller `c` but not `c+1`.  The caller passes
    /// controllers in expected-subset order for this to be meaningful.
    pub nesting_violations: Vec<Vec<usize>>,
}

impl RoaReport {
    /// Feasible-point count per controller.
    pub fn counts(&self) -> Vec<usize> {
        self.feasible
            .iter()
            .map(|f| f.iter().filter(|&&b| b).count())
            .collect()
    }

    /// Counts as a percentage of the named reference controller's count
    /// (the convention used in the experiment reports).
    pub fn percentages_of(&self, reference: &str) -> Option<Vec<f64>> {
        let r = self.names.iter().position(|n| n == reference)?;
        let counts = self.counts();
        let base = counts[r];
        if base == 0 {
            return None;
        }
        Some(counts.iter().map(|&c| 100.0 * c as f64 / base as f64).collect())
    }

    /// Point indices feasible for every listed controller.
    pub fn mutually_feasible(&self) -> Vec<usize> {
        (0..self.points.len())
            .filter(|&p| self.feasible.iter().all(|f| f[p]))
            .collect()
    }
}

/// Solves one feasibility problem per grid point per controller.
///
/// Points are processed in parallel; per-point work is deterministic, so
/// worker count never affects the report.  Solver breakdowns are recorded
/// as infeasible and counted in `failures` rather than aborting the sweep.
pub fn estimate_roa(controllers: &[&dyn Controller], grid: &GridSpec) -> Result<RoaReport> {
    if controllers.is_empty() {
        return Err(Error::Invalid("at least one controller is required".into()));
    }
    let points = grid.points();
    let rows: Vec<Vec<(bool, f64, bool)>> = points
        .par_iter()
        .map(|x| {
            controllers
                .iter()
                .map(|c| match c.step(x) {
                    Ok(d) => (d.is_feasible(), d.solve_time, false),
                    Err(_) => (false, f64::NAN, true),
                })
                .collect()
        })
        .collect();
    let nc = controllers.len();
    let mut feasible = vec![vec![false; points.len()]; nc];
    let mut solve_times = vec![vec![f64::NAN; points.len()]; nc];
    let mut failures = vec![0usize; nc];
    for (p, row) in rows.iter().enumerate() {
        for (c, &(feas, time, failed)) in row.iter().enumerate() {
            feasible[c][p] = feas;
            solve_times[c][p] = time;
            failures[c] += failed as usize;
        }
    }
    let nesting_violations = (0..nc.saturating_sub(1))
        .map(|c| {
            (0..points.len())
                .filter(|&p| feasible[c][p] && !feasible[c + 1][p])
                .collect()
        })
        .collect();
    Ok(RoaReport {
        grid: grid.clone(),
        points,
        names: controllers.iter().map(|c| c.name().to_string()).collect(),
        feasible,
        solve_times,
        failures,
        nesting_violations,
    })
}

/// Deterministic per-(point, run) seed, independent of execution order.
fn run_seed(base: u64, point: usize, run: usize) -> u64 {
    // SplitMix64 over a combined index keeps seeds well separated.
    let mut z = base
        .wrapping_add((point as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add((run as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Closed-loop cost comparison between two controllers.
#[derive(Debug, Clone)]
pub struct CostComparison {
    /// Points where both controllers were feasible and all runs completed.
    pub points: Vec<DVector<f64>>,
    /// Per-point ratio mean-cost(A) / mean-cost(B).
    pub ratios: Vec<f64>,
    /// Per-point averaged accumulated cost of controller A.
    pub mean_costs_a: Vec<f64>,
    /// Per-point averaged accumulated cost of controller B.
    pub mean_costs_b: Vec<f64>,
    /// Points feasible for A only (the "red dot" set when A = OCT).
    pub only_a: Vec<DVector<f64>>,
    /// Points feasible for B only.
    pub only_b: Vec<DVector<f64>>,
    /// Points feasible for neither controller.
    pub infeasible_points: usize,
    /// Points dropped because a run went infeasible mid-way.
    pub failed_points: usize,
    /// Monte-Carlo runs per point.
    pub runs: usize,
    /// Closed-loop steps per run.
    pub steps: usize,
}

/// Averages accumulated closed-loop cost over `runs` seeded realizations
/// per start point, with identical disturbance sequences for both
/// controllers (common random numbers), and reports per-point ratios.
///
/// Points feasible for only one controller are listed separately; points
/// where a run goes infeasible mid-way are dropped from the ratio map and
/// counted (the recursive-feasibility tests make that loud elsewhere).
pub fn compare_costs(
    a: &dyn Controller,
    b: &dyn Controller,
    system: &LinearSystem,
    weights: &CostWeights,
    starts: &[DVector<f64>],
    runs: usize,
    steps: usize,
    seed: u64,
) -> Result<CostComparison> {
    if runs == 0 || steps == 0 {
        return Err(Error::Invalid("runs and steps must be positive".into()));
    }
    enum PointOutcome {
        Both { mean_a: f64, mean_b: f64 },
        OnlyA,
        OnlyB,
        Neither,
        MidRunFailure,
    }
    let outcomes: Vec<PointOutcome> = starts
        .par_iter()
        .enumerate()
        .map(|(p, x0)| -> Result<PointOutcome> {
            let feas_a = a.step(x0)?.is_feasible();
            let feas_b = b.step(x0)?.is_feasible();
            match (feas_a, feas_b) {
                (true, true) => {}
                (true, false) => return Ok(PointOutcome::OnlyA),
                (false, true) => return Ok(PointOutcome::OnlyB),
                (false, false) => return Ok(PointOutcome::Neither),
            }
            let mut total_a = 0.0;
            let mut total_b = 0.0;
            for run in 0..runs {
                let source = DisturbanceSource::SeededUniform { seed: run_seed(seed, p, run) };
                let ta = simulate(a, system, weights, x0, steps, &source);
                let tb = simulate(b, system, weights, x0, steps, &source);
                match (ta, tb) {
                    (Ok(ta), Ok(tb)) => {
                        total_a += ta.total_cost();
                        total_b += tb.total_cost();
                    }
                    (Err(RunError::Failed(e)), _) | (_, Err(RunError::Failed(e))) => {
                        return Err(e)
                    }
                    _ => return Ok(PointOutcome::MidRunFailure),
                }
            }
            Ok(PointOutcome::Both {
                mean_a: total_a / runs as f64,
                mean_b: total_b / runs as f64,
            })
        })
        .collect::<Result<_>>()?;
    let mut cmp = CostComparison {
        points: Vec::new(),
        ratios: Vec::new(),
        mean_costs_a: Vec::new(),
        mean_costs_b: Vec::new(),
        only_a: Vec::new(),
        only_b: Vec::new(),
        infeasible_points: 0,
        failed_points: 0,
        runs,
        steps,
    };
    for (x0, outcome) in starts.iter().zip(outcomes) {
        match outcome {
            PointOutcome::Both { mean_a, mean_b } => {
                cmp.points.push(x0.clone());
                cmp.ratios.push(mean_a / mean_b);
                cmp.mean_costs_a.push(mean_a);
                cmp.mean_costs_b.push(mean_b);
            }
            PointOutcome::OnlyA => cmp.only_a.push(x0.clone()),
            PointOutcome::OnlyB => cmp.only_b.push(x0.clone()),
            PointOutcome::Neither => cmp.infeasible_points += 1,
            PointOutcome::MidRunFailure => cmp.failed_points += 1,
        }
    }
    Ok(cmp)
}

/// Solve-time statistics for one controller over its feasible points.
#[derive(Debug, Clone)]
pub struct TimingStats {
    /// Controller name.
    pub name: String,
    /// Number of timed feasible solves.
    pub samples: usize,
    /// Mean solve time in seconds.
    pub mean: f64,
    /// Median solve time in seconds.
    pub median: f64,
    /// 95th-percentile solve time in seconds.
    pub p95: f64,
    /// Decision-variable count of the online program.
    pub num_variables: usize,
    /// Constraint-row count of the online program.
    pub num_constraints: usize,
}

/// Summarizes the solve times collected by [`estimate_roa`], per
/// controller over its own feasible points, alongside problem sizes.
/// Requires at least 30 feasible points each for meaningful averages.
pub fn timing_report(
    controllers: &[&dyn Controller],
    roa: &RoaReport,
) -> Result<Vec<TimingStats>> {
    if controllers.len() != roa.names.len() {
        return Err(Error::Dimension(
            "controller list does not match the sweep report".into(),
        ));
    }
    let mut out = Vec::with_capacity(controllers.len());
    for (c, ctrl) in controllers.iter().enumerate() {
        if ctrl.name() != roa.names[c] {
            return Err(Error::Invalid(format!(
                "controller order mismatch: {} vs {}",
                ctrl.name(),
                roa.names[c]
            )));
        }
        let mut times: Vec<f64> = (0..roa.points.len())
            .filter(|&p| roa.feasible[c][p])
            .map(|p| roa.solve_times[c][p])
            .collect();
        if times.len() < 30 {
            return Err(Error::Invalid(format!(
                "only {} feasible points for {}; need at least 30 for timing statistics",
                times.len(),
                ctrl.name()
            )));
        }
        times.sort_by(|a, b| a.partial_cmp(b).expect("solver times are finite"));
        let mean = times.iter().sum::<f64>() / times.len() as f64;
        let pick = |q: f64| times[((times.len() - 1) as f64 * q).round() as usize];
        out.push(TimingStats {
            name: ctrl.name().to_string(),
            samples: times.len(),
            mean,
            median: pick(0.5),
            p95: pick(0.95),
            num_variables: ctrl.num_variables(),
            num_constraints: ctrl.num_constraints(),
        });
    }
    Ok(out)
}

fn io_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

/// Writes `roa.csv`: point coordinates, then one feasibility flag and one
/// solve-time column per controller.
pub fn write_roa_csv(path: &Path, report: &RoaReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(io_err)?;
    let mut header: Vec<String> = (0..report.grid.dim).map(|i| format!("x{i}")).collect();
    for name in &report.names {
        header.push(format!("feasible_{name}"));
    }
    for name in &report.names {
        header.push(format!("solve_time_{name}"));
    }
    w.write_record(&header).map_err(io_err)?;
    for (p, x) in report.points.iter().enumerate() {
        let mut row: Vec<String> = x.iter().map(|v| format!("{v:.10e}")).collect();
        for c in 0..report.names.len() {
            row.push(if report.feasible[c][p] { "1" } else { "0" }.to_string());
        }
        for c in 0..report.names.len() {
            row.push(format!("{:.6e}", report.solve_times[c][p]));
        }
        w.write_record(&row).map_err(io_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `costs.csv`: mutually feasible points with per-point averaged
/// costs and their ratio, then the one-sided points with empty cost cells.
pub fn write_costs_csv(path: &Path, cmp: &CostComparison, dim: usize) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(io_err)?;
    let mut header: Vec<String> = (0..dim).map(|i| format!("x{i}")).collect();
    header.extend(
        ["mean_cost_a", "mean_cost_b", "ratio", "runs", "feasible_for"]
            .iter()
            .map(|s| s.to_string()),
    );
    w.write_record(&header).map_err(io_err)?;
    for (p, x) in cmp.points.iter().enumerate() {
        let mut row: Vec<String> = x.iter().map(|v| format!("{v:.10e}")).collect();
        row.push(format!("{:.10e}", cmp.mean_costs_a[p]));
        row.push(format!("{:.10e}", cmp.mean_costs_b[p]));
        row.push(format!("{:.10e}", cmp.ratios[p]));
        row.push(cmp.runs.to_string());
        row.push("both".to_string());
        w.write_record(&row).map_err(io_err)?;
    }
    for (list, tag) in [(&cmp.only_a, "a_only"), (&cmp.only_b, "b_only")] {
        for x in list.iter() {
            let mut row: Vec<String> = x.iter().map(|v| format!("{v:.10e}")).collect();
            row.extend(["", "", ""].iter().map(|s| s.to_string()));
            row.push(cmp.runs.to_string());
            row.push(tag.to_string());
            w.write_record(&row).map_err(io_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes `timing.csv` from [`timing_report`] output.
pub fn write_timing_csv(path: &Path, stats: &[TimingStats]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(io_err)?;
    w.write_record([
        "controller",
        "samples",
        "mean_s",
        "median_s",
        "p95_s",
        "variables",
        "constraints",
    ])
    .map_err(io_err)?;
    for s in stats {
        w.write_record(&[
            s.name.clone(),
            s.samples.to_string(),
            format!("{:.6e}", s.mean),
            format!("{:.6e}", s.median),
            format!("{:.6e}", s.p95),
            s.num_variables.to_string(),
            s.num_constraints.to_string(),
        ])
        .map_err(io_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes one closed-loop trace as CSV; the final row carries the
/// terminal state with the per-step columns left empty.
pub fn write_trace_csv(path: &Path, trace: &ClosedLoopTrace) -> Result<()> {
    let n_x = trace.states[0].len();
    let n_u = trace.inputs.first().map_or(0, |u| u.len());
    let n_w = trace.disturbances.first().map_or(0, |w| w.len());
    let mut w = csv::Writer::from_path(path).map_err(io_err)?;
    let mut header = vec!["step".to_string()];
    header.extend((0..n_x).map(|i| format!("x{i}")));
    header.extend((0..n_u).map(|i| format!("u{i}")));
    header.extend((0..n_w).map(|i| format!("w{i}")));
    header.extend(
        ["stage_cost", "objective", "solve_time_s", "status"]
            .iter()
            .map(|s| s.to_string()),
    );
    w.write_record(&header).map_err(io_err)?;
    for k in 0..trace.states.len() {
        let mut row = vec![k.to_string()];
        row.extend(trace.states[k].iter().map(|v| format!("{v:.10e}")));
        if k < trace.inputs.len() {
            row.extend(trace.inputs[k].iter().map(|v| format!("{v:.10e}")));
            row.extend(trace.disturbances[k].iter().map(|v| format!("{v:.10e}")));
            row.push(format!("{:.10e}", trace.stage_costs[k]));
            row.push(format!("{:.10e}", trace.objectives[k]));
            row.push(format!("{:.6e}", trace.solve_times[k]));
            row.push(format!("{:?}", trace.statuses[k]));
        } else {
            row.extend(std::iter::repeat_n(String::new(), n_u + n_w + 4));
        }
        w.write_record(&row).map_err(io_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a JSON summary with provenance fields; `details` carries the
/// command-specific payload.
pub fn write_summary_json(
    path: &Path,
    config_hash: &str,
    git_revision: &str,
    details: &serde_json::Value,
) -> Result<()> {
    let doc = serde_json::json!({
        "schema_version": 1,
        "config_hash": config_hash,
        "git_revision": git_revision,
        "details": details,
    });
    let mut f = std::fs::File::create(path)?;
    f.write_all(serde_json::to_string_pretty(&doc)?.as_bytes())?;
    f.write_all(b"\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controller::TightenedMpc;
    use crate::design::{design_offline, DesignOptions, DesignOutput};
    use crate::polytope::PolytopeH;
    use nalgebra::DMatrix;

    fn scalar_setup(bound_w: f64, n: usize) -> (LinearSystem, CostWeights, DesignOutput) {
        let w = PolytopeH::from_symmetric_bounds(&[bound_w]).unwrap();
        let sys = LinearSystem::with_box_constraints(
            DMatrix::from_row_slice(1, 1, &[1.0]),
            DMatrix::from_row_slice(1, 1, &[1.0]),
            DMatrix::identity(1, 1),
            &[5.0],
            &[1.0],
            w,
        )
        .unwrap();
        let weights = CostWeights::identity(1, 1);
        let out = design_offline(&sys, &weights, n, &DesignOptions::default()).unwrap();
        (sys, weights, out)
    }

    fn oct_ctrl(sys: &LinearSystem, weights: &CostWeights, out: &DesignOutput) -> TightenedMpc {
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
    fn origin_stays_at_origin_without_disturbance() {
        let (sys, weights, out) = scalar_setup(1.0, 3);
        let ctrl = oct_ctrl(&sys, &weights, &out);
        let trace = simulate(
            &ctrl,
            &sys,
            &weights,
            &DVector::zeros(1),
            10,
            &DisturbanceSource::Zero,
        )
        .unwrap();
        assert!(trace.states.iter().all(|x| x.abs().max() < 1e-7));
        assert!(trace.total_cost() < 1e-10);
    }

    #[test]
    fn optimal_cost_decreases_without_disturbance() {
        // The shifted plan certifies J*(x_{k+1}) ≤ J*(x_k) − stage cost
        // when w = 0; both the chain and plain monotonicity must hold.
        let (sys, weights, out) = scalar_setup(1.0, 3);
        let ctrl = oct_ctrl(&sys, &weights, &out);
        let trace = simulate(
            &ctrl,
            &sys,
            &weights,
            &DVector::from_vec(vec![1.2]),
            25,
            &DisturbanceSource::Zero,
        )
        .unwrap();
        for k in 0..trace.len() - 1 {
            assert!(
                trace.objectives[k + 1] <= trace.objectives[k] - trace.stage_costs[k] + 1e-6,
                "cost chain broken at step {k}: {} vs {} - {}",
                trace.objectives[k + 1],
                trace.objectives[k],
                trace.stage_costs[k]
            );
        }
        assert!(trace.states.last().unwrap().abs().max() < 1e-4);
    }

    #[test]
    fn seeded_runs_are_bit_identical() {
        let (sys, weights, out) = scalar_setup(1.0, 3);
        let ctrl = oct_ctrl(&sys, &weights, &out);
        let source = DisturbanceSource::SeededUniform { seed: 42 };
        let x0 = DVector::from_vec(vec![0.5]);
        let t1 = simulate(&ctrl, &sys, &weights, &x0, 15, &source).unwrap();
        let t2 = simulate(&ctrl, &sys, &weights, &x0, 15, &source).unwrap();
        assert_eq!(t1.disturbances, t2.disturbances);
        assert_eq!(t1.states, t2.states);
        assert_eq!(t1.inputs, t2.inputs);
    }

    #[test]
    fn uniform_samples_cover_the_box_and_stay_inside() {
        let (sys, _, _) = scalar_setup(1.0, 3);
        let source = DisturbanceSource::SeededUniform { seed: 7 };
        let mut sampler = Sampler::new(&source, &sys, 0).unwrap();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for _ in 0..200 {
            let w = sampler.next().unwrap();
            assert!(w[0].abs() <= 1.0 + 1e-12);
            lo = lo.min(w[0]);
            hi = hi.max(w[0]);
        }
        assert!(lo < -0.8 && hi > 0.8, "draws did not spread: [{lo:.2}, {hi:.2}]");
    }

    #[test]
    fn vertex_adversarial_cycles_through_vertices() {
        let (sys, weights, out) = scalar_setup(1.0, 3);
        let ctrl = oct_ctrl(&sys, &weights, &out);
        let trace = simulate(
            &ctrl,
            &sys,
            &weights,
            &DVector::zeros(1),
            6,
            &DisturbanceSource::VertexAdversarial,
        )
        .unwrap();
        let verts = sys.w.vertices().unwrap();
        for (k, w) in trace.disturbances.iter().enumerate() {
            assert_eq!(w, &verts[k % verts.len()]);
        }
    }

    #[test]
    fn explicit_sequence_must_cover_the_run() {
        let (sys, weights, out) = scalar_setup(1.0, 3);
        let ctrl = oct_ctrl(&sys, &weights, &out);
        let short = DisturbanceSource::Explicit(vec![DVector::zeros(1); 3]);
        let err = simulate(&ctrl, &sys, &weights, &DVector::zeros(1), 5, &short);
        assert!(matches!(err, Err(RunError::Failed(Error::Invalid(_)))));
    }

    #[test]
    fn midrun_infeasibility_carries_the_partial_trace() {
        // An out-of-model shove (w = 3 with |w| ≤ 1 designed) lands the
        // state outside the feasible region at step 1.
        let (sys, weights, out) = scalar_setup(1.0, 3);
        let ctrl = oct_ctrl(&sys, &weights, &out);
        let shove = DisturbanceSource::Explicit(vec![DVector::from_vec(vec![3.0]); 5]);
        let err = simulate(&ctrl, &sys, &weights, &DVector::from_vec(vec![1.0]), 5, &shove);
        match err {
            Err(RunError::Infeasible { step, state, partial }) => {
                assert_eq!(step, 1);
                assert!(state[0] > 1.7, "state {} should be outside the region", state[0]);
                assert_eq!(partial.len(), 1);
                assert_eq!(partial.states.len(), 2);
                partial.validate(&sys).unwrap();
            }
            other => panic!("expected mid-run infeasibility, got {other:?}"),
        }
    }

    #[test]
    fn trace_validation_rejects_corruption() {
        let (sys, weights, out) = scalar_setup(1.0, 3);
        let ctrl = oct_ctrl(&sys, &weights, &out);
        let trace = simulate(
            &ctrl,
            &sys,
            &weights,
            &DVector::from_vec(vec![0.5]),
            4,
            &DisturbanceSource::Zero,
        )
        .unwrap();
        let mut broken = trace.clone();
        broken.states[2][0] += 1e-6;
        assert!(broken.validate(&sys).is_err());
        let mut violating = trace;
        violating.inputs[1][0] = 2.0;
        violating.states[2][0] = violating.states[1][0] + 2.0;
        assert!(violating.validate(&sys).is_err());
    }

    #[test]
    fn grid_points_cover_subspaces_and_endpoints() {
        let grid = GridSpec::over_subspace(3, &[0, 2], &[-1.0, 0.0], &[1.0, 4.0], &[3, 2]).unwrap();
        let pts = grid.points();
        assert_eq!(pts.len(), 6);
        assert_eq!(pts[0], DVector::from_vec(vec![-1.0, 0.0, 0.0]));
        assert_eq!(pts[1], DVector::from_vec(vec![-1.0, 0.0, 4.0]));
        assert_eq!(pts[5], DVector::from_vec(vec![1.0, 0.0, 4.0]));
        assert!(pts.iter().all(|p| p[1] == 0.0));
    }

    #[test]
    fn roa_sweep_counts_and_nesting() {
        let (sys, weights, out) = scalar_setup(1.0, 3);
        let oct = oct_ctrl(&sys, &weights, &out);
        let tmpc = TightenedMpc::new(
            "tmpc",
            &sys,
            &weights,
            out.tmpc.tightening.stages(),
            &out.oct.terminal,
            &out.p,
        )
        .unwrap();
        let grid = GridSpec::over_box(&[-3.0], &[3.0], &[25]).unwrap();
        let report = estimate_roa(&[&tmpc, &oct], &grid).unwrap();
        let counts = report.counts();
        assert!(counts[1] >= counts[0], "oct should cover tmpc: {counts:?}");
        assert!(counts[1] > 0 && counts[1] < 25);
        assert!(report.nesting_violations[0].is_empty());
        assert_eq!(report.failures, vec![0, 0]);
        let pct = report.percentages_of("oct").unwrap();
        assert!((pct[1] - 100.0).abs() < 1e-12);
        // Inside the terminal set everything is feasible; far outside the
        // state bounds nothing is.
        let inside = estimate_roa(
            &[&tmpc, &oct],
            &GridSpec::over_box(&[-0.05], &[0.05], &[3]).unwrap(),
        )
        .unwrap();
        assert_eq!(inside.counts(), vec![3, 3]);
        let outside = estimate_roa(
            &[&tmpc, &oct],
            &GridSpec::over_box(&[6.0], &[8.0], &[3]).unwrap(),
        )
        .unwrap();
        assert_eq!(outside.counts(), vec![0, 0]);
    }

    #[test]
    fn identical_controllers_have_unit_cost_ratio() {
        let (sys, weights, out) = scalar_setup(1.0, 3);
        let ctrl = oct_ctrl(&sys, &weights, &out);
        let starts = vec![DVector::from_vec(vec![0.4]), DVector::from_vec(vec![-0.8])];
        let cmp =
            compare_costs(&ctrl, &ctrl, &sys, &weights, &starts, 3, 10, 123).unwrap();
        assert_eq!(cmp.points.len(), 2);
        for r in &cmp.ratios {
            assert!((r - 1.0).abs() < 1e-12, "ratio {r} should be exactly 1");
        }
        assert!(cmp.only_a.is_empty() && cmp.only_b.is_empty());
    }

    #[test]
    fn timing_report_requires_enough_samples() {
        let (sys, weights, out) = scalar_setup(1.0, 3);
        let oct = oct_ctrl(&sys, &weights, &out);
        let grid = GridSpec::over_box(&[-1.5], &[1.5], &[40]).unwrap();
        let report = estimate_roa(&[&oct], &grid).unwrap();
        let stats = timing_report(&[&oct], &report).unwrap();
        assert_eq!(stats.len(), 1);
        assert!(stats[0].samples >= 30);
        assert!(stats[0].mean > 0.0 && stats[0].median > 0.0);
        assert!(stats[0].p95 >= stats[0].median);
        let sparse = estimate_roa(&[&oct], &GridSpec::over_box(&[-1.0], &[1.0], &[5]).unwrap())
            .unwrap();
        assert!(timing_report(&[&oct], &sparse).is_err());
    }

    #[test]
    fn csv_writers_round_trip_headers() {
        let (sys, weights, out) = scalar_setup(1.0, 3);
        let ctrl = oct_ctrl(&sys, &weights, &out);
        let dir = std::env::temp_dir().join("oct_mpc_sim_test");
        std::fs::create_dir_all(&dir).unwrap();
        let grid = GridSpec::over_box(&[-1.0], &[1.0], &[5]).unwrap();
        let report = estimate_roa(&[&ctrl], &grid).unwrap();
        let roa_path = dir.join("roa.csv");
        write_roa_csv(&roa_path, &report).unwrap();
        let text = std::fs::read_to_string(&roa_path).unwrap();
        assert!(text.starts_with("x0,feasible_oct,solve_time_oct"));
        assert_eq!(text.lines().count(), 6);
        let trace = simulate(
            &ctrl,
            &sys,
            &weights,
            &DVector::from_vec(vec![0.5]),
            3,
            &DisturbanceSource::Zero,
        )
        .unwrap();
        let trace_path = dir.join("trace.csv");
        write_trace_csv(&trace_path, &trace).unwrap();
        let text = std::fs::read_to_string(&trace_path).unwrap();
        assert!(text.starts_with("step,x0,u0,w0,stage_cost,objective,solve_time_s,status"));
        assert_eq!(text.lines().count(), 5);
        std::fs::remove_dir_all(&dir).ok();
    }
}
