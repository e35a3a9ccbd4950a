//! Design artifacts: the JSON hand-off from the offline design to the
//! online controllers.
//!
//! An artifact captures everything the online side needs — feedback
//! blocks, tightening vectors for both the optimized and tube designs,
//! terminal data and solver statistics — stamped with the hash of the
//! config it was designed for.  [`DesignArtifact::check_config`] refuses
//! a mismatched config, so a stale artifact can never silently drive the
//! wrong plant.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::controller::{Controller, FpdMpc, TightenedMpc};
use crate::design::DesignOutput;
use crate::model::{mat_from_rows, mat_to_rows, CostWeights, LinearSystem};
use crate::polytope::PolytopeH;
use crate::prediction::DisturbanceFeedback;
use crate::{Error, Result};

/// Supported artifact schema version.
pub const ARTIFACT_VERSION: u32 = 1;

/// Solver statistics recorded at design time.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArtifactStats {
    /// Interior-point iterations of the accepted design solve.
    pub iterations: u32,
    /// Total design solve time in seconds (all attempts).
    pub solve_time: f64,
    /// Objective of the design program (weighted epigraph value).
    pub socp_objective: f64,
    /// Canonical tightening norm ‖t‖₂ of the optimized design.
    pub objective: f64,
    /// Tightening norm of the tube baseline, for side-by-side reporting.
    pub tmpc_objective: f64,
    /// Terminal-offset contraction retries consumed.
    pub retries: u32,
    /// Whether the row-by-row baseline cap was active.
    pub capped: bool,
}

/// Everything the online controllers need from the offline design.
#[derive(Debug, Clone)]
pub struct DesignArtifact {
    /// Hash of the config this design belongs to.
    pub config_hash: String,
    /// Prediction horizon `N`.
    pub horizon: usize,
    /// Terminal feedback gain `K_f`.
    pub k_f: DMatrix<f64>,
    /// Terminal cost matrix `P`.
    pub p: DMatrix<f64>,
    /// Optimized disturbance-feedback policy (blocks `M_1 … M_{N-1}`, `M_N`).
    pub feedback: DisturbanceFeedback,
    /// Optimized per-stage tightenings `t_0 … t_{N-1}`.
    pub tightenings: Vec<DVector<f64>>,
    /// Optimized tightening one stage past the horizon (`t_N`).
    pub tightening_tail: DVector<f64>,
    /// Tube-baseline tightenings `t_0 … t_{N-1}`.
    pub tmpc_tightenings: Vec<DVector<f64>>,
    /// Tube-baseline tail `t_N`.
    pub tmpc_tail: DVector<f64>,
    /// Terminal set `{x : Yx ≤ z}` shared by the fixed-tightening
    /// controllers.
    pub terminal: PolytopeH,
    /// Support constants of `(F + GK_f)x` over the terminal set.
    pub c_f: DVector<f64>,
    /// Support constants of `Y(A + BK_f)x` over the terminal set.
    pub c_y: DVector<f64>,
    /// Terminal set of the online disturbance-feedback baseline.
    pub fpd_terminal: PolytopeH,
    /// Design-time solver statistics.
    pub stats: ArtifactStats,
}

#[derive(Serialize, Deserialize)]
struct FeedbackJson {
    blocks: Vec<Vec<Vec<f64>>>,
    terminal: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct ArtifactJson {
    schema_version: u32,
    config_hash: String,
    horizon: usize,
    #[serde(rename = "K_f")]
    k_f: Vec<Vec<f64>>,
    #[serde(rename = "P")]
    p: Vec<Vec<f64>>,
    feedback: FeedbackJson,
    tightenings: Vec<Vec<f64>>,
    tightening_tail: Vec<f64>,
    tmpc_tightenings: Vec<Vec<f64>>,
    tmpc_tail: Vec<f64>,
    terminal: PolytopeH,
    c_f: Vec<f64>,
    c_y: Vec<f64>,
    fpd_terminal: PolytopeH,
    stats: ArtifactStats,
}

impl DesignArtifact {
    /// Packages a finished offline design under the given config hash.
    pub fn from_design(config_hash: &str, design: &DesignOutput) -> Self {
        DesignArtifact {
            config_hash: config_hash.to_string(),
            horizon: design.horizon,
            k_f: design.k_f.clone(),
            p: design.p.clone(),
            feedback: design.oct.policy.clone(),
            tightenings: design.oct.tightening.stages().to_vec(),
            tightening_tail: design.oct.t_horizon.clone(),
            tmpc_tightenings: design.tmpc.tightening.stages().to_vec(),
            tmpc_tail: design.tmpc.t_horizon.clone(),
            terminal: design.oct.terminal.clone(),
            c_f: design.oct.c_f.clone(),
            c_y: design.oct.c_y.clone(),
            fpd_terminal: design.fpd_terminal.clone(),
            stats: ArtifactStats {
                iterations: design.oct.stats.iterations,
                solve_time: design.oct.stats.solve_time,
                socp_objective: design.oct.stats.socp_objective,
                objective: design.oct.stats.objective,
                tmpc_objective: design.tmpc.tightening.norm2(),
                retries: design.oct.stats.retries as u32,
                capped: design.oct.stats.capped,
            },
        }
    }

    /// Internal consistency: matching horizons and row counts across all
    /// stored pieces.
    pub fn validate(&self) -> Result<()> {
        let n = self.horizon;
        if self.feedback.horizon() != n {
            return Err(Error::Invalid(format!(
                "feedback policy horizon {} does not match artifact horizon {n}",
                self.feedback.horizon()
            )));
        }
        if self.tightenings.len() != n || self.tmpc_tightenings.len() != n {
            return Err(Error::Invalid(format!(
                "expected {n} tightening stages, got {} optimized and {} baseline",
                self.tightenings.len(),
                self.tmpc_tightenings.len()
            )));
        }
        let n_c = self.tightenings[0].len();
        for t in self.tightenings.iter().chain(self.tmpc_tightenings.iter()) {
            if t.len() != n_c {
                return Err(Error::Invalid("tightening stages have mixed row counts".into()));
            }
        }
        if self.tightening_tail.len() != n_c || self.tmpc_tail.len() != n_c {
            return Err(Error::Invalid("tail tightenings have wrong row counts".into()));
        }
        let n_t = self.terminal.num_rows();
        if self.c_y.len() != n_t || self.c_f.len() != n_c {
            return Err(Error::Invalid(
                "terminal support constants do not match their row counts".into(),
            ));
        }
        if self.fpd_terminal.dim() != self.terminal.dim() {
            return Err(Error::Invalid("terminal sets live in different dimensions".into()));
        }
        let n_x = self.k_f.ncols();
        if self.p.nrows() != n_x || self.p.ncols() != n_x || self.terminal.dim() != n_x {
            return Err(Error::Invalid(
                "gain, cost and terminal-set dimensions are inconsistent".into(),
            ));
        }
        Ok(())
    }

    /// Fails with [`Error::ArtifactMismatch`] unless the artifact was
    /// designed for the config with this hash.
    pub fn check_config(&self, config_hash: &str) -> Result<()> {
        if self.config_hash != config_hash {
            return Err(Error::ArtifactMismatch(format!(
                "artifact was designed for config {}, current config hashes to {config_hash}",
                self.config_hash
            )));
        }
        Ok(())
    }

    /// Renders the artifact as pretty-printed JSON (trailing newline
    /// included, for clean files and pipes).
    pub fn to_json(&self) -> Result<String> {
        let doc = ArtifactJson {
            schema_version: ARTIFACT_VERSION,
            config_hash: self.config_hash.clone(),
            horizon: self.horizon,
            k_f: mat_to_rows(&self.k_f),
            p: mat_to_rows(&self.p),
            feedback: FeedbackJson {
                blocks: (1..self.horizon)
                    .map(|m| mat_to_rows(self.feedback.block(m)))
                    .collect(),
                terminal: mat_to_rows(self.feedback.terminal()),
            },
            tightenings: self.tightenings.iter().map(|t| t.iter().copied().collect()).collect(),
            tightening_tail: self.tightening_tail.iter().copied().collect(),
            tmpc_tightenings: self
                .tmpc_tightenings
                .iter()
                .map(|t| t.iter().copied().collect())
                .collect(),
            tmpc_tail: self.tmpc_tail.iter().copied().collect(),
            terminal: self.terminal.clone(),
            c_f: self.c_f.iter().copied().collect(),
            c_y: self.c_y.iter().copied().collect(),
            fpd_terminal: self.fpd_terminal.clone(),
            stats: self.stats.clone(),
        };
        let mut text = serde_json::to_string_pretty(&doc)?;
        text.push('\n');
        Ok(text)
    }

    /// Writes the artifact as pretty-printed JSON.
    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    /// Parses and validates an artifact from JSON text.
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ArtifactJson = serde_json::from_str(text)?;
        if doc.schema_version != ARTIFACT_VERSION {
            return Err(Error::Invalid(format!(
                "unsupported artifact schema version {}; this build supports {ARTIFACT_VERSION}",
                doc.schema_version
            )));
        }
        let blocks = doc
            .feedback
            .blocks
            .iter()
            .map(|b| mat_from_rows(b, "feedback block"))
            .collect::<Result<Vec<_>>>()?;
        let terminal_block = mat_from_rows(&doc.feedback.terminal, "terminal feedback block")?;
        let artifact = DesignArtifact {
            config_hash: doc.config_hash,
            horizon: doc.horizon,
            k_f: mat_from_rows(&doc.k_f, "K_f")?,
            p: mat_from_rows(&doc.p, "P")?,
            feedback: DisturbanceFeedback::new(blocks, terminal_block)?,
            tightenings: doc.tightenings.into_iter().map(DVector::from_vec).collect(),
            tightening_tail: DVector::from_vec(doc.tightening_tail),
            tmpc_tightenings: doc.tmpc_tightenings.into_iter().map(DVector::from_vec).collect(),
            tmpc_tail: DVector::from_vec(doc.tmpc_tail),
            terminal: doc.terminal,
            c_f: DVector::from_vec(doc.c_f),
            c_y: DVector::from_vec(doc.c_y),
            fpd_terminal: doc.fpd_terminal,
            stats: doc.stats,
        };
        artifact.validate()?;
        Ok(artifact)
    }

    /// Reads and validates an artifact file.
    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Instantiates one controller by name from the artifact.
    ///
    /// Names: `"oct"` (optimized tightenings), `"tmpc"` (tube baseline),
    /// `"nominal"` (zero tightenings), `"fpd"` (online disturbance
    /// feedback).
    pub fn build_controller(
        &self,
        name: &str,
        system: &LinearSystem,
        weights: &CostWeights,
    ) -> Result<Box<dyn Controller>> {
        match name {
            "oct" => Ok(Box::new(TightenedMpc::new(
                "oct",
                system,
                weights,
                &self.tightenings,
                &self.terminal,
                &self.p,
            )?)),
            "tmpc" => Ok(Box::new(TightenedMpc::new(
                "tmpc",
                system,
                weights,
                &self.tmpc_tightenings,
                &self.terminal,
                &self.p,
            )?)),
            "nominal" => {
                let zeros = vec![DVector::zeros(system.n_c()); self.horizon];
                Ok(Box::new(TightenedMpc::new(
                    "nominal",
                    system,
                    weights,
                    &zeros,
                    &self.terminal,
                    &self.p,
                )?))
            }
            "fpd" => Ok(Box::new(FpdMpc::new(
                system,
                weights,
                self.horizon,
                &self.fpd_terminal,
                &self.p,
            )?)),
            other => Err(Error::Invalid(format!("unknown controller name {other:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{design_offline, DesignOptions};
    use approx::assert_abs_diff_eq;

    fn scalar_artifact() -> (LinearSystem, CostWeights, DesignArtifact) {
        let w = PolytopeH::from_symmetric_bounds(&[1.0]).unwrap();
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
        let out = design_offline(&sys, &weights, 3, &DesignOptions::default()).unwrap();
        let artifact = DesignArtifact::from_design("abc123", &out);
        (sys, weights, artifact)
    }

    #[test]
    fn save_load_round_trips_bit_exactly() {
        let (_, _, artifact) = scalar_artifact();
        let dir = std::env::temp_dir().join("oct_mpc_artifact_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("design.json");
        artifact.save(&path).unwrap();
        let back = DesignArtifact::load(&path).unwrap();
        assert_eq!(back.config_hash, "abc123");
        assert_eq!(back.horizon, 3);
        assert_eq!(back.k_f[(0, 0)].to_bits(), artifact.k_f[(0, 0)].to_bits());
        assert_eq!(back.tightenings, artifact.tightenings);
        assert_eq!(back.tmpc_tail, artifact.tmpc_tail);
        assert_eq!(back.terminal, artifact.terminal);
        assert_eq!(
            back.feedback.block(1)[(0, 0)].to_bits(),
            artifact.feedback.block(1)[(0, 0)].to_bits()
        );
        assert_abs_diff_eq!(back.stats.objective, artifact.stats.objective);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn config_hash_mismatch_is_refused() {
        let (_, _, artifact) = scalar_artifact();
        artifact.check_config("abc123").unwrap();
        let err = artifact.check_config("other");
        assert!(matches!(err, Err(Error::ArtifactMismatch(_))));
    }

    #[test]
    fn builds_all_known_controllers() {
        let (sys, weights, artifact) = scalar_artifact();
        for name in ["oct", "tmpc", "nominal", "fpd"] {
            let ctrl = artifact.build_controller(name, &sys, &weights).unwrap();
            assert_eq!(ctrl.name(), name);
            assert_eq!(ctrl.horizon(), 3);
            let d = ctrl.step(&DVector::zeros(1)).unwrap();
            assert!(d.is_feasible(), "{name} infeasible at the origin");
        }
        assert!(artifact.build_controller("lqr", &sys, &weights).is_err());
    }

    #[test]
    fn artifact_controllers_match_design_controllers() {
        // Round-tripping through JSON must not change online behavior.
        let (sys, weights, artifact) = scalar_artifact();
        let dir = std::env::temp_dir().join("oct_mpc_artifact_equiv_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("design.json");
        artifact.save(&path).unwrap();
        let loaded = DesignArtifact::load(&path).unwrap();
        let a = artifact.build_controller("oct", &sys, &weights).unwrap();
        let b = loaded.build_controller("oct", &sys, &weights).unwrap();
        let x = DVector::from_vec(vec![1.1]);
        let ua = a.step(&x).unwrap().input().unwrap()[0];
        let ub = b.step(&x).unwrap().input().unwrap()[0];
        assert_eq!(ua.to_bits(), ub.to_bits());
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn validation_catches_truncated_artifacts() {
        let (_, _, mut artifact) = scalar_artifact();
        artifact.tightenings.pop();
        assert!(artifact.validate().is_err());
    }
}
