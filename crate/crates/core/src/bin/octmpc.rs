//! Command-line front end.
//!
//! Four subcommands mirror the offline/online split: `design` writes the
//! design artifact for a scenario config; `simulate`, `roa` and `bench`
//! consume the config plus that artifact and write CSV/JSON reports.
//!
//! Exit codes are a stable contract: 0 success, 2 configuration or
//! artifact-mismatch problems, 3 infeasibility (offline design or
//! mid-run), 4 property violation (feasible-set nesting), 5 solver or
//! internal failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use oct_mpc::artifact::DesignArtifact;
use oct_mpc::config::{load_config, ScenarioConfig};
use oct_mpc::controller::Controller;
use oct_mpc::design::{design_offline, DesignOptions};
use oct_mpc::model::{CostWeights, LinearSystem};
use oct_mpc::sim::{
    compare_costs, estimate_roa, simulate, timing_report, write_costs_csv, write_roa_csv,
    write_summary_json, write_timing_csv, write_trace_csv, DisturbanceSource, GridSpec,
    RoaReport, RunError,
};
use oct_mpc::Error;

#[derive(Parser)]
#[command(name = "octmpc", version, about = "Robust MPC design and evaluation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the offline design and write the design artifact.
    Design(CommonArgs),
    /// Closed-loop Monte-Carlo runs; writes one trace CSV per run.
    Simulate(CommonArgs),
    /// Feasibility sweep over the evaluation grid; writes roa.csv.
    Roa(CommonArgs),
    /// Solve-time statistics and closed-loop cost comparison.
    Bench(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Scenario config (.json or .toml).
    #[arg(long)]
    config: PathBuf,
    /// Design artifact path (output of `design`, input elsewhere);
    /// defaults to `<out>/<name>.design.json`.
    #[arg(long)]
    artifact: Option<PathBuf>,
    /// Output directory; defaults to the config's `output_dir`, then `.`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for grid sweeps (default: all cores).  Results are
    /// independent of this setting.
    #[arg(long)]
    jobs: Option<usize>,
    /// Overrides the config's Monte-Carlo seed.
    #[arg(long)]
    seed: Option<u64>,
    /// `ci` caps grids at 20 points per axis and runs at 10 for quick
    /// checks; `full` uses the config as written.
    #[arg(long, value_enum, default_value_t = Profile::Full)]
    profile: Profile,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Profile {
    Ci,
    Full,
}

/// Error already mapped to a process exit code.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Failure { code: code.into(), message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Config(_) | Error::ArtifactMismatch(_) | Error::Io(_) | Error::Json(_) => 2,
            Error::Infeasible(_) => 3,
            _ => 5,
        };
        Failure::new(code, e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Design(args) => cmd_design(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Roa(args) => cmd_roa(args),
        Command::Bench(args) => cmd_bench(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

/// Loaded scenario plus everything derived from it.
struct Context {
    config: ScenarioConfig,
    config_hash: String,
    system: LinearSystem,
    weights: CostWeights,
    out_dir: PathBuf,
    seed: u64,
    runs: usize,
    profile: Profile,
}

impl Context {
    fn load(args: &CommonArgs) -> Result<Self, Failure> {
        if let Some(jobs) = args.jobs {
            // Ignore failure: the global pool can only be set once.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
        }
        let config = load_config(&args.config)?;
        let config_hash = config.hash();
        let (system, weights) = config.build()?;
        let out_dir = args
            .out
            .clone()
            .or_else(|| config.output_dir.as_ref().map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("."));
        std::fs::create_dir_all(&out_dir).map_err(Error::from)?;
        let seed = args.seed.unwrap_or(config.monte_carlo.seed);
        let runs = match args.profile {
            Profile::Ci => config.monte_carlo.runs.min(10),
            Profile::Full => config.monte_carlo.runs,
        };
        Ok(Context {
            config,
            config_hash,
            system,
            weights,
            out_dir,
            seed,
            runs,
            profile: args.profile,
        })
    }

    fn artifact_path(&self, args: &CommonArgs) -> PathBuf {
        args.artifact
            .clone()
            .unwrap_or_else(|| self.out_dir.join(format!("{}.design.json", self.config.name)))
    }

    fn load_artifact(&self, args: &CommonArgs) -> Result<DesignArtifact, Failure> {
        let path = self.artifact_path(args);
        let artifact = DesignArtifact::load(&path).map_err(|e| {
            Failure::new(2, format!("cannot load artifact {}: {e}", path.display()))
        })?;
        artifact.check_config(&self.config_hash)?;
        if artifact.horizon != self.config.horizon {
            return Err(Error::ArtifactMismatch(format!(
                "artifact horizon {} vs config horizon {}",
                artifact.horizon, self.config.horizon
            ))
            .into());
        }
        Ok(artifact)
    }

    fn build_controllers(
        &self,
        artifact: &DesignArtifact,
    ) -> Result<Vec<Box<dyn Controller>>, Failure> {
        self.config
            .controllers
            .iter()
            .map(|name| {
                artifact
                    .build_controller(name, &self.system, &self.weights)
                    .map_err(Failure::from)
            })
            .collect()
    }

    fn capped(&self, mut grid: GridSpec) -> GridSpec {
        if self.profile == Profile::Ci {
            for c in grid.counts.iter_mut() {
                *c = (*c).min(20);
            }
        }
        grid
    }

    fn git_revision(&self) -> String {
        std::process::Command::new("git")
            .args(["rev-parse", "--short", "HEAD"])
            .output()
            .ok()
            .filter(|o| o.status.success())
            .map(|o| String::from_utf8_lossy(&o.stdout).trim().to_string())
            .unwrap_or_else(|| "unknown".to_string())
    }
}

fn cmd_design(args: &CommonArgs) -> Result<(), Failure> {
    let ctx = Context::load(args)?;
    let options = DesignOptions { cap_by_tmpc: ctx.config.fallback, ..DesignOptions::default() };
    let design = design_offline(&ctx.system, &ctx.weights, ctx.config.horizon, &options)?;
    let artifact = DesignArtifact::from_design(&ctx.config_hash, &design);
    let path = ctx.artifact_path(args);
    artifact.save(&path)?;
    println!("design complete: {} (N = {})", ctx.config.name, ctx.config.horizon);
    println!("  tightening norm (optimized) = {:.6}", artifact.stats.objective);
    println!("  tightening norm (tube)      = {:.6}", artifact.stats.tmpc_objective);
    println!(
        "  solver status: optimal in {} iterations, {:.3} s, {} retries, cap {}",
        artifact.stats.iterations,
        artifact.stats.solve_time,
        artifact.stats.retries,
        if artifact.stats.capped { "on" } else { "off" }
    );
    println!(
        "  terminal set: {} rows; baseline terminal: {} rows",
        artifact.terminal.num_rows(),
        artifact.fpd_terminal.num_rows()
    );
    println!("  artifact: {}", path.display());
    Ok(())
}

fn cmd_simulate(args: &CommonArgs) -> Result<(), Failure> {
    let ctx = Context::load(args)?;
    let artifact = ctx.load_artifact(args)?;
    let controllers = ctx.build_controllers(&artifact)?;
    // Start states: mutually feasible points of the cost grid, cycled
    // across runs so several basins are exercised.
    let cost_grid = ctx.capped(ctx.config.cost_grid_spec(&ctx.system)?);
    let refs: Vec<&dyn Controller> = controllers.iter().map(|c| c.as_ref()).collect();
    let probe = estimate_roa(&refs, &cost_grid)?;
    let feasible = probe.mutually_feasible();
    if feasible.is_empty() {
        return Err(Failure::new(3, "no mutually feasible start point on the cost grid"));
    }
    let steps = ctx.config.monte_carlo.steps;
    let mut violations = 0usize;
    let mut summaries = Vec::new();
    for ctrl in &controllers {
        let mut total_costs = Vec::with_capacity(ctx.runs);
        for run in 0..ctx.runs {
            let point = feasible[run % feasible.len()];
            let x0 = &probe.points[point];
            let source = DisturbanceSource::SeededUniform {
                seed: ctx.seed.wrapping_add((point as u64) << 32).wrapping_add(run as u64),
            };
            let trace_path = ctx
                .out_dir
                .join(format!("trace_{}_{run:03}.csv", ctrl.name()));
            match simulate(ctrl.as_ref(), &ctx.system, &ctx.weights, x0, steps, &source) {
                Ok(trace) => {
                    if trace.validate(&ctx.system).is_err() {
                        violations += 1;
                    }
                    total_costs.push(trace.total_cost());
                    write_trace_csv(&trace_path, &trace)?;
                }
                Err(RunError::Infeasible { step, state, partial }) => {
                    write_trace_csv(&trace_path, &partial)?;
                    return Err(Failure::new(
                        3,
                        format!(
                            "{} infeasible at step {step} (state {:?}); partial trace {}",
                            ctrl.name(),
                            state.as_slice(),
                            trace_path.display()
                        ),
                    ));
                }
                Err(RunError::Failed(e)) => return Err(e.into()),
            }
        }
        let mean_cost = total_costs.iter().sum::<f64>() / total_costs.len() as f64;
        println!(
            "{}: {} runs x {} steps, mean closed-loop cost {:.4}",
            ctrl.name(),
            ctx.runs,
            steps,
            mean_cost
        );
        summaries.push(serde_json::json!({
            "controller": ctrl.name(),
            "runs": ctx.runs,
            "steps": steps,
            "mean_total_cost": mean_cost,
        }));
    }
    let details = serde_json::json!({
        "command": "simulate",
        "violations": violations,
        "controllers": summaries,
    });
    write_summary_json(
        &ctx.out_dir.join("simulate_summary.json"),
        &ctx.config_hash,
        &ctx.git_revision(),
        &details,
    )?;
    if violations > 0 {
        return Err(Failure::new(4, format!("{violations} trace(s) violated constraints")));
    }
    Ok(())
}

/// Indices feasible for `a` but not `b`, by controller name.
fn nesting_breaks(report: &RoaReport, a: &str, b: &str) -> Option<Vec<usize>> {
    let ia = report.names.iter().position(|n| n == a)?;
    let ib = report.names.iter().position(|n| n == b)?;
    Some(
        (0..report.points.len())
            .filter(|&p| report.feasible[ia][p] && !report.feasible[ib][p])
            .collect(),
    )
}

fn cmd_roa(args: &CommonArgs) -> Result<(), Failure> {
    let ctx = Context::load(args)?;
    let artifact = ctx.load_artifact(args)?;
    let controllers = ctx.build_controllers(&artifact)?;
    let refs: Vec<&dyn Controller> = controllers.iter().map(|c| c.as_ref()).collect();
    let grid = ctx.capped(ctx.config.grid_spec(&ctx.system)?);
    let report = estimate_roa(&refs, &grid)?;
    write_roa_csv(&ctx.out_dir.join("roa.csv"), &report)?;
    let counts = report.counts();
    for (name, count) in report.names.iter().zip(&counts) {
        println!("{name}: {count} / {} feasible", report.points.len());
    }
    if let Some(pct) = report.percentages_of("fpd") {
        for (name, p) in report.names.iter().zip(&pct) {
            println!("{name}: {p:.1}% of the fpd region");
        }
    }
    // With the fallback cap active, every tube-feasible point must be
    // feasible for the optimized controller.
    let breaks = if ctx.config.fallback {
        nesting_breaks(&report, "tmpc", "oct").unwrap_or_default()
    } else {
        Vec::new()
    };
    let details = serde_json::json!({
        "command": "roa",
        "grid_points": report.points.len(),
        "counts": report.names.iter().zip(&counts)
            .map(|(n, c)| serde_json::json!({"controller": n, "feasible": c}))
            .collect::<Vec<_>>(),
        "solver_failures": report.failures,
        "nesting_violations": breaks.len(),
    });
    write_summary_json(
        &ctx.out_dir.join("roa_summary.json"),
        &ctx.config_hash,
        &ctx.git_revision(),
        &details,
    )?;
    if !breaks.is_empty() {
        return Err(Failure::new(
            4,
            format!(
                "nesting violated: {} point(s) feasible for tmpc but not oct (first index {})",
                breaks.len(),
                breaks[0]
            ),
        ));
    }
    Ok(())
}

fn cmd_bench(args: &CommonArgs) -> Result<(), Failure> {
    let ctx = Context::load(args)?;
    let artifact = ctx.load_artifact(args)?;
    let controllers = ctx.build_controllers(&artifact)?;
    let refs: Vec<&dyn Controller> = controllers.iter().map(|c| c.as_ref()).collect();
    let grid = ctx.capped(ctx.config.grid_spec(&ctx.system)?);
    let report = estimate_roa(&refs, &grid)?;
    let stats = timing_report(&refs, &report)?;
    write_timing_csv(&ctx.out_dir.join("timing.csv"), &stats)?;
    for s in &stats {
        println!(
            "{}: mean {:.3} ms, median {:.3} ms, p95 {:.3} ms over {} solves ({} vars, {} rows)",
            s.name,
            1e3 * s.mean,
            1e3 * s.median,
            1e3 * s.p95,
            s.samples,
            s.num_variables,
            s.num_constraints
        );
    }
    // Cost comparison: tube baseline vs optimized when both are present,
    // otherwise the first two configured controllers.
    let pair = {
        let find = |n: &str| ctx.config.controllers.iter().position(|c| c == n);
        match (find("tmpc"), find("oct")) {
            (Some(a), Some(b)) => Some((a, b)),
            _ if ctx.config.controllers.len() >= 2 => Some((0, 1)),
            _ => None,
        }
    };
    let mut cost_details = serde_json::Value::Null;
    if let Some((ia, ib)) = pair {
        let starts = ctx.capped(ctx.config.cost_grid_spec(&ctx.system)?).points();
        let cmp = compare_costs(
            refs[ia],
            refs[ib],
            &ctx.system,
            &ctx.weights,
            &starts,
            ctx.runs,
            ctx.config.monte_carlo.steps,
            ctx.seed,
        )?;
        write_costs_csv(&ctx.out_dir.join("costs.csv"), &cmp, ctx.system.n_x())?;
        if !cmp.ratios.is_empty() {
            let mean_ratio = cmp.ratios.iter().sum::<f64>() / cmp.ratios.len() as f64;
            let spread = cmp
                .ratios
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| {
                    (lo.min(r), hi.max(r))
                });
            println!(
                "cost ratio {}/{}: mean {:.4} over {} points (range [{:.4}, {:.4}])",
                refs[ia].name(),
                refs[ib].name(),
                mean_ratio,
                cmp.ratios.len(),
                spread.0,
                spread.1
            );
            cost_details = serde_json::json!({
                "a": refs[ia].name(),
                "b": refs[ib].name(),
                "points": cmp.ratios.len(),
                "mean_ratio": mean_ratio,
                "min_ratio": spread.0,
                "max_ratio": spread.1,
                "a_only_points": cmp.only_a.len(),
                "b_only_points": cmp.only_b.len(),
            });
        }
    }
    let details = serde_json::json!({
        "command": "bench",
        "timing": stats.iter().map(|s| serde_json::json!({
            "controller": s.name,
            "mean_s": s.mean,
            "median_s": s.median,
            "p95_s": s.p95,
            "samples": s.samples,
            "variables": s.num_variables,
            "constraints": s.num_constraints,
        })).collect::<Vec<_>>(),
        "costs": cost_details,
    });
    write_summary_json(
        &ctx.out_dir.join("bench_summary.json"),
        &ctx.config_hash,
        &ctx.git_revision(),
        &details,
    )?;
    Ok(())
}
