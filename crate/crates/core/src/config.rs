//! Scenario configuration: the file format binding a system definition,
//! horizon, weights and experiment parameters into one reproducible run.
//!
//! Configs load from JSON or TOML (chosen by file extension) into the
//! same [`ScenarioConfig`]; [`ScenarioConfig::build`] turns one into the
//! domain [`LinearSystem`] and [`CostWeights`].  Every derived output is
//! stamped with [`ScenarioConfig::hash`] — a SHA-256 over the canonical
//! JSON form — so design artifacts can refuse to run against a config
//! they were not produced from.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::model::{
    forward_euler_discretize, mat_from_rows, CostWeights, LinearSystem,
};
use crate::polytope::PolytopeH;
use crate::sim::GridSpec;
use crate::{Error, Result};

/// Controllers a config may request.
pub const KNOWN_CONTROLLERS: [&str; 4] = ["tmpc", "oct", "fpd", "nominal"];

fn default_controllers() -> Vec<String> {
    vec!["tmpc".into(), "oct".into(), "fpd".into()]
}

fn default_true() -> bool {
    true
}

fn default_runs() -> usize {
    50
}

fn default_steps() -> usize {
    60
}

/// One experiment scenario; see the bundled configs for worked examples.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Schema version; only `1` is supported.
    pub version: u32,
    /// Human-readable scenario name (used in output file names).
    pub name: String,
    /// Free-form provenance notes.
    #[serde(default)]
    pub notes: String,
    /// Plant, constraints and disturbance set.
    pub system: SystemConfig,
    /// Prediction horizon `N ≥ 2`.
    pub horizon: usize,
    /// Stage cost weights; identity when omitted.
    #[serde(default)]
    pub weights: WeightsConfig,
    /// Controllers to design/evaluate, in report order.
    #[serde(default = "default_controllers")]
    pub controllers: Vec<String>,
    /// Cap the optimized tightening by the tube baseline row-by-row, which
    /// guarantees the baseline's feasible set is contained in the
    /// optimized controller's.  On by default.
    #[serde(default = "default_true")]
    pub fallback: bool,
    /// Feasibility-sweep grid; defaults to the state box at 50 points per
    /// axis when omitted (2-D systems).
    #[serde(default)]
    pub grid: Option<GridConfig>,
    /// Monte-Carlo settings for closed-loop runs.
    #[serde(default)]
    pub monte_carlo: MonteCarloConfig,
    /// Start-point grid for the closed-loop cost comparison; defaults to
    /// a coarse version of `grid`.
    #[serde(default)]
    pub cost_grid: Option<GridConfig>,
    /// Output directory; defaults to the current directory.
    #[serde(default)]
    pub output_dir: Option<String>,
}

/// Plant definition.  When `sampling_time` is present the matrices are
/// continuous-time and are forward-Euler discretized; otherwise they are
/// taken as the discrete-time update directly.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    /// Sampling time for continuous-time matrices; absent means discrete.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampling_time: Option<f64>,
    /// State matrix (continuous- or discrete-time per `sampling_time`).
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    /// Input matrix.
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    /// Disturbance input matrix.
    #[serde(rename = "Bw")]
    pub b_w: Vec<Vec<f64>>,
    /// State/input constraints.
    pub constraints: ConstraintsConfig,
    /// Bounded disturbance set `W`.
    pub disturbance: DisturbanceConfig,
}

/// Constraint specification: symmetric box bounds or explicit rows.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ConstraintsConfig {
    /// `|x_i| ≤ state_bounds[i]`, `|u_j| ≤ input_bounds[j]`.
    Box {
        /// Per-coordinate symmetric state bounds.
        state_bounds: Vec<f64>,
        /// Per-coordinate symmetric input bounds.
        input_bounds: Vec<f64>,
    },
    /// Explicit rows `F x + G u ≤ b`.
    Explicit {
        /// State coefficients.
        #[serde(rename = "F")]
        f: Vec<Vec<f64>>,
        /// Input coefficients.
        #[serde(rename = "G")]
        g: Vec<Vec<f64>>,
        /// Right-hand side.
        b: Vec<f64>,
    },
}

/// Disturbance-set specification.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DisturbanceConfig {
    /// `|w_i| ≤ bounds[i]` (a bound of 0 pins that coordinate).
    SymmetricBox {
        /// Per-coordinate symmetric bounds.
        bounds: Vec<f64>,
    },
    /// General box `lower[i] ≤ w_i ≤ upper[i]`.
    Box {
        /// Lower bounds.
        lower: Vec<f64>,
        /// Upper bounds.
        upper: Vec<f64>,
    },
    /// Explicit halfspaces `D w ≤ d`.
    Explicit {
        /// Row normals.
        #[serde(rename = "D")]
        d_rows: Vec<Vec<f64>>,
        /// Offsets.
        d: Vec<f64>,
    },
}

/// Stage-cost weights; identity when a matrix is omitted.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsConfig {
    /// State weight `Q` (positive semidefinite).
    #[serde(rename = "Q", default, skip_serializing_if = "Option::is_none")]
    pub q: Option<Vec<Vec<f64>>>,
    /// Input weight `R` (positive definite).
    #[serde(rename = "R", default, skip_serializing_if = "Option::is_none")]
    pub r: Option<Vec<Vec<f64>>>,
}

/// Evaluation grid, optionally restricted to listed state coordinates
/// (others held at zero).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// Varying coordinates; all when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axes: Option<Vec<usize>>,
    /// Per-axis lower bounds.
    pub lower: Vec<f64>,
    /// Per-axis upper bounds.
    pub upper: Vec<f64>,
    /// Per-axis point counts.
    pub counts: Vec<usize>,
}

impl GridConfig {
    /// Converts to a [`GridSpec`] in ambient dimension `dim`.
    pub fn to_spec(&self, dim: usize) -> Result<GridSpec> {
        let axes: Vec<usize> = match &self.axes {
            Some(a) => a.clone(),
            None => (0..dim).collect(),
        };
        GridSpec::over_subspace(dim, &axes, &self.lower, &self.upper, &self.counts)
    }
}

/// Monte-Carlo settings for closed-loop evaluation.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloConfig {
    /// Disturbance realizations per start point.
    #[serde(default = "default_runs")]
    pub runs: usize,
    /// Closed-loop steps per run.
    #[serde(default = "default_steps")]
    pub steps: usize,
    /// Base seed; per-point/per-run seeds derive deterministically.
    #[serde(default)]
    pub seed: u64,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        MonteCarloConfig { runs: default_runs(), steps: default_steps(), seed: 0 }
    }
}

/// Loads a config from JSON (`.json`) or TOML (`.toml`) and validates it.
pub fn load_config(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    let config: ScenarioConfig = match ext {
        "json" => serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?,
        "toml" => toml::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?,
        other => {
            return Err(Error::Config(format!(
                "unsupported config extension {other:?} (use .json or .toml)"
            )))
        }
    };
    config.validate()?;
    Ok(config)
}

impl ScenarioConfig {
    /// Parses and validates a config from JSON text (the file-free
    /// counterpart of [`load_config`], used by embedding callers).
    pub fn from_json(text: &str) -> Result<Self> {
        let config: ScenarioConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("scenario JSON: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    /// Schema-level validation (version, horizon, controller names).
    /// Dimension consistency is checked by [`ScenarioConfig::build`].
    pub fn validate(&self) -> Result<()> {
        if self.version != 1 {
            return Err(Error::Config(format!(
                "unsupported config version {}; this build supports 1",
                self.version
            )));
        }
        if self.name.is_empty() {
            return Err(Error::Config("scenario name must be nonempty".into()));
        }
        if self.horizon < 2 {
            return Err(Error::Config(format!(
                "horizon must be at least 2, got {}",
                self.horizon
            )));
        }
        if self.controllers.is_empty() {
            return Err(Error::Config("controller list must be nonempty".into()));
        }
        for c in &self.controllers {
            if !KNOWN_CONTROLLERS.contains(&c.as_str()) {
                return Err(Error::Config(format!(
                    "unknown controller {c:?}; known: {KNOWN_CONTROLLERS:?}"
                )));
            }
        }
        if self.monte_carlo.runs == 0 || self.monte_carlo.steps == 0 {
            return Err(Error::Config("monte_carlo runs and steps must be positive".into()));
        }
        Ok(())
    }

    /// Assembles the domain system and weights.
    pub fn build(&self) -> Result<(LinearSystem, CostWeights)> {
        let sc = &self.system;
        let mut a = mat_from_rows(&sc.a, "A")?;
        let mut b = mat_from_rows(&sc.b, "B")?;
        let mut b_w = mat_from_rows(&sc.b_w, "Bw")?;
        if let Some(dt) = sc.sampling_time {
            let (ad, bd, bwd) = forward_euler_discretize(&a, &b, &b_w, dt)?;
            a = ad;
            b = bd;
            b_w = bwd;
        }
        let w = match &sc.disturbance {
            DisturbanceConfig::SymmetricBox { bounds } => {
                PolytopeH::from_symmetric_bounds(bounds)?
            }
            DisturbanceConfig::Box { lower, upper } => PolytopeH::from_box(lower, upper)?,
            DisturbanceConfig::Explicit { d_rows, d } => {
                PolytopeH::new(mat_from_rows(d_rows, "D")?, DVector::from_vec(d.clone()))?
            }
        };
        let system = match &sc.constraints {
            ConstraintsConfig::Box { state_bounds, input_bounds } => {
                LinearSystem::with_box_constraints(a, b, b_w, state_bounds, input_bounds, w)?
            }
            ConstraintsConfig::Explicit { f, g, b: rhs } => LinearSystem::new(
                a,
                b,
                b_w,
                mat_from_rows(f, "F")?,
                mat_from_rows(g, "G")?,
                DVector::from_vec(rhs.clone()),
                w,
            )?,
        };
        let n_x = system.n_x();
        let n_u = system.n_u();
        let q = match &self.weights.q {
            Some(rows) => mat_from_rows(rows, "Q")?,
            None => DMatrix::identity(n_x, n_x),
        };
        let r = match &self.weights.r {
            Some(rows) => mat_from_rows(rows, "R")?,
            None => DMatrix::identity(n_u, n_u),
        };
        let weights = CostWeights::new(q, r)?;
        if weights.q.nrows() != n_x || weights.r.nrows() != n_u {
            return Err(Error::Config(format!(
                "weights sized {}x{} do not match the {n_x}-state, {n_u}-input system",
                weights.q.nrows(),
                weights.r.nrows()
            )));
        }
        Ok((system, weights))
    }

    /// Grid spec for feasibility sweeps: the configured grid, or 50
    /// points per axis over the symmetric state box inferred from the
    /// constraint rows.
    pub fn grid_spec(&self, system: &LinearSystem) -> Result<GridSpec> {
        match &self.grid {
            Some(g) => g.to_spec(system.n_x()),
            None => default_state_grid(system, 50),
        }
    }

    /// Grid spec for the cost comparison: the configured one, or 10
    /// points per axis over the same box.
    pub fn cost_grid_spec(&self, system: &LinearSystem) -> Result<GridSpec> {
        match &self.cost_grid {
            Some(g) => g.to_spec(system.n_x()),
            None => default_state_grid(system, 10),
        }
    }

    /// SHA-256 of the canonical JSON form, hex-encoded.
    ///
    /// The hash covers the parsed config, so a JSON and a TOML file
    /// describing the same scenario hash identically.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        let mut out = String::with_capacity(64);
        for byte in digest {
            out.push_str(&format!("{byte:02x}"));
        }
        out
    }
}

/// Uniform grid over the state box implied by the constraints: per state
/// coordinate, the largest `c` with `|x_i| ≤ c` feasible for some input.
fn default_state_grid(system: &LinearSystem, per_axis: usize) -> Result<GridSpec> {
    let n_x = system.n_x();
    let mut lower = Vec::with_capacity(n_x);
    let mut upper = Vec::with_capacity(n_x);
    // Pure-state rows only: rows touching inputs do not delimit the
    // sweepable state region, and input-only rows have zero F-normals.
    let rows: Vec<usize> = (0..system.n_c())
        .filter(|&i| {
            system.f.row(i).amax() > 1e-12 && system.g.row(i).amax() <= 1e-12
        })
        .collect();
    if rows.is_empty() {
        return Err(Error::Config(
            "no pure-state constraint rows to infer a sweep grid from; set `grid` explicitly"
                .into(),
        ));
    }
    let f_rows = DMatrix::from_fn(rows.len(), n_x, |r, c| system.f[(rows[r], c)]);
    let b_rows = DVector::from_iterator(rows.len(), rows.iter().map(|&i| system.b_rhs[i]));
    let state_box = crate::polytope::PolytopeH::new(f_rows, b_rows)?;
    // Vertex enumeration gives exact box corners in low dimension; fall
    // back to support LPs (accurate to solver tolerance) above its cap.
    if let Ok(verts) = state_box.vertices() {
        for i in 0..n_x {
            let lo = verts.iter().map(|v| v[i]).fold(f64::INFINITY, f64::min);
            let hi = verts.iter().map(|v| v[i]).fold(f64::NEG_INFINITY, f64::max);
            lower.push(lo);
            upper.push(hi);
        }
    } else {
        for i in 0..n_x {
            let mut dir = DVector::zeros(n_x);
            dir[i] = 1.0;
            let hi = state_box.support(&dir)?;
            dir[i] = -1.0;
            let lo = -state_box.support(&dir)?;
            lower.push(lo);
            upper.push(hi);
        }
    }
    GridSpec::over_box(&lower, &upper, &vec![per_axis; n_x])
}
