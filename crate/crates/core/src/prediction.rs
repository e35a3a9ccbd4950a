//! Stacked prediction operators and the structured disturbance-feedback
//! policy.
//!
//! Over a horizon `N`, the predicted states `x̂ = (x̂_1, …, x̂_N)` respond to
//! the initial state, the nominal inputs `v = (v_0, …, v_{N-1})` and the
//! disturbance injections `δ_l = B_w w_l`:
//!
//! ```text
//! x̂ = C_xx x_0 + C_xu v + C_xw δ,        δ = (δ_0, …, δ_{N-2}),
//! ```
//!
//! with block entries `C_xx[i] = A^i`, `C_xu[i,j] = A^{i-1-j} B` (`j < i`)
//! and `C_xw[i,l] = A^{i-1-l}` (`l < i`).
//!
//! Inputs react to past injections through a block-Toeplitz policy
//! `u_i = v_i + Σ_{l<i} M_{i-l} δ_l` held in [`DisturbanceFeedback`]: one
//! `n_u × n_x` block per lag `1 … N-1` plus a terminal block `M_N` used by
//! the horizon hand-off analysis.  The induced state-error responses
//!
//! ```text
//! Φ_0 = I,    Φ_m = A Φ_{m-1} + B M_m,    Ψ = A Φ_{N-1} + B M_N,
//! ```
//!
//! give the closed error dynamics `e_i = Σ_{l<i} Φ_{i-1-l} δ_l`.  Choosing
//! `M_m = K (A+BK)^{m-1}` reproduces a fixed-gain tube policy exactly
//! (`Φ_m = (A+BK)^m`), which is both a baseline and a feasibility anchor
//! for the optimized design.

use nalgebra::DMatrix;

use crate::model::LinearSystem;
use crate::{Error, Result};

/// Stacked prediction operators for a fixed horizon.
#[derive(Debug, Clone)]
pub struct PredictionMatrices {
    /// Horizon `N ≥ 2`.
    pub horizon: usize,
    /// Free response `C_xx` (`N·n_x × n_x`), block `i` equals `A^i`.
    pub c_xx: DMatrix<f64>,
    /// Input response `C_xu` (`N·n_x × N·n_u`), strictly block lower
    /// triangular with `C_xu[i,j] = A^{i-1-j} B`.
    pub c_xu: DMatrix<f64>,
    /// Injection response `C_xw` (`N·n_x × (N-1)·n_x`) with
    /// `C_xw[i,l] = A^{i-1-l}`.
    pub c_xw: DMatrix<f64>,
    /// Stage constraint state block `I_N ⊗ F`.
    pub f_stack: DMatrix<f64>,
    /// Stage constraint input block `I_N ⊗ G`.
    pub g_stack: DMatrix<f64>,
    /// Stacked constraint offsets `1_N ⊗ b`.
    pub b_stack: nalgebra::DVector<f64>,
}

/// Builds the stacked prediction operators for horizon `n`.
///
/// # Errors
///
/// [`Error::Invalid`] for a horizon below two.
pub fn build_prediction(system: &LinearSystem, n: usize) -> Result<PredictionMatrices> {
    if n < 2 {
        return Err(Error::Invalid(format!("horizon must be at least 2, got {n}")));
    }
    let n_x = system.n_x();
    let n_u = system.n_u();
    let n_c = system.n_c();

    // Powers of A by repeated multiplication; A^0 .. A^N.
    let mut powers = Vec::with_capacity(n + 1);
    powers.push(DMatrix::identity(n_x, n_x));
    for i in 1..=n {
        powers.push(&powers[i - 1] * &system.a);
    }

    let mut c_xx = DMatrix::zeros(n * n_x, n_x);
    let mut c_xu = DMatrix::zeros(n * n_x, n * n_u);
    let mut c_xw = DMatrix::zeros(n * n_x, (n - 1) * n_x);
    for i in 1..=n {
        let row = (i - 1) * n_x;
        c_xx.view_mut((row, 0), (n_x, n_x)).copy_from(&powers[i]);
        for j in 0..i {
            let blk = &powers[i - 1 - j] * &system.b;
            c_xu.view_mut((row, j * n_u), (n_x, n_u)).copy_from(&blk);
        }
        for l in 0..i.min(n - 1) {
            c_xw.view_mut((row, l * n_x), (n_x, n_x))
                .copy_from(&powers[i - 1 - l]);
        }
    }

    let mut f_stack = DMatrix::zeros(n * n_c, n * n_x);
    let mut g_stack = DMatrix::zeros(n * n_c, n * n_u);
    let mut b_stack = nalgebra::DVector::zeros(n * n_c);
    for i in 0..n {
        f_stack
            .view_mut((i * n_c, i * n_x), (n_c, n_x))
            .copy_from(&system.f);
        g_stack
            .view_mut((i * n_c, i * n_u), (n_c, n_u))
            .copy_from(&system.g);
        b_stack.rows_mut(i * n_c, n_c).copy_from(&system.b_rhs);
    }

    Ok(PredictionMatrices {
        horizon: n,
        c_xx,
        c_xu,
        c_xw,
        f_stack,
        g_stack,
        b_stack,
    })
}

/// Block-Toeplitz disturbance-feedback policy: lag blocks `M_1 … M_{N-1}`
/// plus the terminal block `M_N`.
#[derive(Debug, Clone, PartialEq)]
pub struct DisturbanceFeedback {
    blocks: Vec<DMatrix<f64>>,
    terminal: DMatrix<f64>,
}

impl DisturbanceFeedback {
    /// Builds a policy from lag blocks `M_1 … M_{N-1}` (in order) and the
    /// terminal block `M_N`; all must be `n_u × n_x` with identical shapes.
    pub fn new(blocks: Vec<DMatrix<f64>>, terminal: DMatrix<f64>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::Invalid("policy needs at least one lag block".into()));
        }
        let shape = blocks[0].shape();
        if shape.0 == 0 || shape.1 == 0 {
            return Err(Error::Invalid("policy blocks cannot be empty".into()));
        }
        if blocks.iter().any(|b| b.shape() != shape) || terminal.shape() != shape {
            return Err(Error::Dimension("policy blocks have mixed shapes".into()));
        }
        Ok(DisturbanceFeedback { blocks, terminal })
    }

    /// The all-zero policy for the given sizes.
    pub fn zero(n_u: usize, n_x: usize, horizon: usize) -> Result<Self> {
        if horizon < 2 {
            return Err(Error::Invalid(format!("horizon must be at least 2, got {horizon}")));
        }
        DisturbanceFeedback::new(
            vec![DMatrix::zeros(n_u, n_x); horizon - 1],
            DMatrix::zeros(n_u, n_x),
        )
    }

    /// The fixed-gain tube policy `M_m = K (A+BK)^{m-1}`,
    /// `M_N = K (A+BK)^{N-1}`, equivalent to applying `u = v + K e`.
    pub fn tmpc(k: &DMatrix<f64>, system: &LinearSystem, horizon: usize) -> Result<Self> {
        if horizon < 2 {
            return Err(Error::Invalid(format!("horizon must be at least 2, got {horizon}")));
        }
        if k.nrows() != system.n_u() || k.ncols() != system.n_x() {
            return Err(Error::Dimension(format!(
                "gain is {}x{}, expected {}x{}",
                k.nrows(),
                k.ncols(),
                system.n_u(),
                system.n_x()
            )));
        }
        let a_cl = &system.a + &system.b * k;
        let mut blocks = Vec::with_capacity(horizon - 1);
        let mut cur = k.clone(); // K (A+BK)^{m-1}
        for _ in 1..horizon {
            blocks.push(cur.clone());
            cur *= &a_cl;
        }
        let terminal = cur; // K (A+BK)^{N-1}
        DisturbanceFeedback::new(blocks, terminal)
    }

    /// Horizon `N` (one more than the number of lag blocks).
    pub fn horizon(&self) -> usize {
        self.blocks.len() + 1
    }

    /// Input dimension of the blocks.
    pub fn n_u(&self) -> usize {
        self.blocks[0].nrows()
    }

    /// State dimension of the blocks.
    pub fn n_x(&self) -> usize {
        self.blocks[0].ncols()
    }

    /// Lag block `M_m` for `m ∈ 1 … N-1`.
    pub fn block(&self, m: usize) -> &DMatrix<f64> {
        &self.blocks[m - 1]
    }

    /// Terminal block `M_N`.
    pub fn terminal(&self) -> &DMatrix<f64> {
        &self.terminal
    }

    /// Full strictly-block-lower Toeplitz expansion (`N·n_u × N·n_x`):
    /// block `(i, l) = M_{i-l}` for `l < i`.  The last block column is
    /// structurally zero.
    pub fn expand_full(&self) -> DMatrix<f64> {
        let n = self.horizon();
        let (n_u, n_x) = (self.n_u(), self.n_x());
        let mut m = DMatrix::zeros(n * n_u, n * n_x);
        for i in 0..n {
            for l in 0..i {
                m.view_mut((i * n_u, l * n_x), (n_u, n_x))
                    .copy_from(self.block(i - l));
            }
        }
        m
    }

    /// Expansion against the `N-1` injection blocks actually present
    /// (`N·n_u × (N-1)·n_x`): the full expansion with its zero last block
    /// column removed.
    pub fn expand_trimmed(&self) -> DMatrix<f64> {
        let n = self.horizon();
        let n_x = self.n_x();
        let full = self.expand_full();
        full.columns(0, (n - 1) * n_x).into_owned()
    }

    /// Reads a policy back from its full expansion, verifying the
    /// strictly-lower block-Toeplitz structure to `1e-12`.
    ///
    /// The terminal block is not part of the expansion and must be given.
    pub fn from_expanded(
        expanded: &DMatrix<f64>,
        n_u: usize,
        n_x: usize,
        terminal: DMatrix<f64>,
    ) -> Result<Self> {
        if n_u == 0 || n_x == 0 || expanded.nrows() % n_u != 0 || expanded.ncols() % n_x != 0 {
            return Err(Error::Dimension("expansion is not a clean block grid".into()));
        }
        let n = expanded.nrows() / n_u;
        if expanded.ncols() / n_x != n || n < 2 {
            return Err(Error::Dimension(format!(
                "expansion has {} block rows and {} block columns",
                n,
                expanded.ncols() / n_x
            )));
        }
        let blocks: Vec<DMatrix<f64>> = (1..n)
            .map(|m| expanded.view((m * n_u, 0), (n_u, n_x)).into_owned())
            .collect();
        let fb = DisturbanceFeedback::new(blocks, terminal)?;
        let err = (&fb.expand_full() - expanded).abs().max();
        if err > 1e-12 {
            return Err(Error::Invalid(format!(
                "matrix is not strictly-lower block Toeplitz (max deviation {err:.3e})"
            )));
        }
        Ok(fb)
    }

    /// State-error response blocks `Φ_0 … Φ_{N-1}` under this policy:
    /// `Φ_0 = I`, `Φ_m = A Φ_{m-1} + B M_m`.
    pub fn response_blocks(&self, system: &LinearSystem) -> Vec<DMatrix<f64>> {
        let n_x = system.n_x();
        let mut phis = Vec::with_capacity(self.horizon());
        phis.push(DMatrix::identity(n_x, n_x));
        for m in 1..self.horizon() {
            let phi = &system.a * &phis[m - 1] + &system.b * self.block(m);
            phis.push(phi);
        }
        phis
    }

    /// Terminal hand-off response `Ψ = A Φ_{N-1} + B M_N`.
    pub fn terminal_response(&self, system: &LinearSystem) -> DMatrix<f64> {
        let phis = self.response_blocks(system);
        &system.a * &phis[self.horizon() - 1] + &system.b * &self.terminal
    }
}

/// Direct expansion of a fixed tube gain: block `(i, l) = K (A+BK)^{i-1-l}`
/// for `l < i` — the policy a gain `K` acting on the state error induces.
pub fn expand_tmpc_gain(k: &DMatrix<f64>, system: &LinearSystem, horizon: usize) -> Result<DMatrix<f64>> {
    Ok(DisturbanceFeedback::tmpc(k, system, horizon)?.expand_full())
}

/// Error propagation map `(N·n_x) × ((N-1)·n_w)`: block `(i, l)` equals
/// `Φ_{i-1-l} B_w` for `l < i`, so that the stacked state error is the map
/// applied to `(w_0, …, w_{N-2})`.
pub fn error_propagation_map(system: &LinearSystem, fb: &DisturbanceFeedback) -> DMatrix<f64> {
    let n = fb.horizon();
    let (n_x, n_w) = (system.n_x(), system.n_w());
    let phis = fb.response_blocks(system);
    let mut map = DMatrix::zeros(n * n_x, (n - 1) * n_w);
    for i in 1..=n {
        for l in 0..(i.min(n - 1)) {
            let blk = &phis[i - 1 - l] * &system.b_w;
            map.view_mut(((i - 1) * n_x, l * n_w), (n_x, n_w))
                .copy_from(&blk);
        }
    }
    map
}
