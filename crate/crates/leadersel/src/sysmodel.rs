//! The switched error-system model and every matrix derived from it.
//!
//! For topology `p` with Laplacian `L_p`, leader matrix `D` and gain `K_p`,
//! the closed-loop mode matrix is
//!
//! ```text
//! A_p = I_N ⊗ A - L_p ⊗ I_n - D ⊗ K_p
//! ```
//!
//! The selection metric works on the shifted open-loop matrix
//! `Â_p = I_N ⊗ A - L_p ⊗ I_n + ½(l_p/τ_p_min - η_p) I`, and the dwell-time
//! certificate on the two auxiliary shifts of the mode matrix.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::graph::{laplacian, Digraph};
use crate::linalg::{kron, Mat};
use crate::{Error, Result};

/// Per-topology scalars of the certification conditions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeParams {
    /// Lyapunov discretization count `l_p`.
    pub l: u32,
    /// Jump factor `mu_p`; in (0,1) for unstable modes, > 1 for stable ones.
    pub mu: f64,
    /// Divergence (> 0) or decay (< 0) rate `eta_p`.
    pub eta: f64,
}

/// The full parameter set `Q` plus the shared small constant and the beta
/// setting used before gains are known.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremParams {
    pub modes: Vec<ModeParams>,
    pub phi: f64,
    pub beta_setting: f64,
}

impl TheoremParams {
    /// Validates signs and the dwell-rate lower bound against `tddt`.
    ///
    /// A mode with `eta > 0` is treated as unstable and must satisfy
    /// `eta > l / tau_min` and `mu` in (0,1); a mode with `eta < 0` is
    /// treated as stable and must have `mu > 1`.
    pub fn validate(&self, tddt: &TddtSpec) -> Result<()> {
        if self.modes.len() != tddt.windows.len() {
            return Err(Error::Configuration(format!(
                "params cover {} modes but tddt covers {}",
                self.modes.len(),
                tddt.windows.len()
            )));
        }
        if !(self.phi > 0.0) {
            return Err(Error::Configuration("phi must be positive".into()));
        }
        if !(self.beta_setting > 0.0 && self.beta_setting <= 1.0) {
            return Err(Error::Configuration("beta_setting must lie in (0, 1]".into()));
        }
        for (p, m) in self.modes.iter().enumerate() {
            if m.l == 0 {
                return Err(Error::Configuration(format!("mode {}: l must be >= 1", p + 1)));
            }
            if m.eta == 0.0 {
                return Err(Error::Configuration(format!("mode {}: eta must be nonzero", p + 1)));
            }
            let tau_min = tddt.windows[p].0;
            if m.eta > 0.0 {
                if m.eta <= m.l as f64 / tau_min {
                    return Err(Error::Configuration(format!(
                        "mode {}: eta = {} must exceed l/tau_min = {}",
                        p + 1,
                        m.eta,
                        m.l as f64 / tau_min
                    )));
                }
                if !(m.mu > 0.0 && m.mu < 1.0) {
                    return Err(Error::Configuration(format!(
                        "mode {}: unstable mode needs mu in (0,1), got {}",
                        p + 1,
                        m.mu
                    )));
                }
            } else if !(m.mu > 1.0) {
                return Err(Error::Configuration(format!(
                    "mode {}: stable mode needs mu > 1, got {}",
                    p + 1,
                    m.mu
                )));
            }
        }
        Ok(())
    }
}

/// Requested dwell windows, one `[tau_min, tau_max]` pair per topology.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TddtSpec {
    pub windows: Vec<(f64, f64)>,
}

impl TddtSpec {
    pub fn new(windows: Vec<(f64, f64)>) -> Result<Self> {
        for (p, &(lo, hi)) in windows.iter().enumerate() {
            if !(lo > 0.0 && lo <= hi) {
                return Err(Error::Configuration(format!(
                    "mode {}: dwell window [{}, {}] must satisfy 0 < tau_min <= tau_max",
                    p + 1,
                    lo,
                    hi
                )));
            }
        }
        Ok(Self { windows })
    }

    pub fn tau_min(&self, p: usize) -> f64 {
        self.windows[p].0
    }

    pub fn tau_max(&self, p: usize) -> f64 {
        self.windows[p].1
    }
}

/// Feedback gain for one mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Gain {
    /// `K_p = kappa I_n`; keeps the `D ⊗ K_p` structure exactly.
    Scalar(f64),
    /// Unstructured feedback on the stacked state; applied as `B̂ K̂` with
    /// `B̂ = D ⊗ I_n`. Stored row-major `Nn x Nn`.
    Full(Vec<Vec<f64>>),
}

/// Immutable description of the switched network.
#[derive(Debug, Clone)]
pub struct SwitchedModel {
    a: Mat,
    topologies: Vec<Digraph>,
    laplacians: Vec<Mat>,
    pub tddt: TddtSpec,
    pub params: TheoremParams,
    pub leaders: BTreeSet<usize>,
    pub gains: Option<Vec<Gain>>,
}

impl SwitchedModel {
    pub fn new(
        a: Mat,
        topologies: Vec<Digraph>,
        tddt: TddtSpec,
        params: TheoremParams,
    ) -> Result<Self> {
        if a.nrows() != a.ncols() || a.nrows() == 0 {
            return Err(Error::Dimension("agent matrix A must be square and nonempty".into()));
        }
        let first = topologies
            .first()
            .ok_or_else(|| Error::Configuration("at least one topology required".into()))?;
        let n_agents = first.n_agents();
        for g in &topologies {
            if g.n_agents() != n_agents {
                return Err(Error::Dimension("topologies must share the agent count".into()));
            }
        }
        if tddt.windows.len() != topologies.len() {
            return Err(Error::Configuration(format!(
                "{} dwell windows for {} topologies",
                tddt.windows.len(),
                topologies.len()
            )));
        }
        params.validate(&tddt)?;
        let laplacians = topologies.iter().map(laplacian).collect();
        Ok(Self {
            a,
            topologies,
            laplacians,
            tddt,
            params,
            leaders: BTreeSet::new(),
            gains: None,
        })
    }

    pub fn agent_matrix(&self) -> &Mat {
        &self.a
    }

    pub fn topologies(&self) -> &[Digraph] {
        &self.topologies
    }

    pub fn laplacian(&self, p: usize) -> &Mat {
        &self.laplacians[p]
    }

    /// Number of agents N.
    pub fn n_agents(&self) -> usize {
        self.topologies[0].n_agents()
    }

    /// Per-agent state dimension n.
    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    /// Stacked dimension N·n.
    pub fn total_dim(&self) -> usize {
        self.n_agents() * self.state_dim()
    }

    pub fn n_modes(&self) -> usize {
        self.topologies.len()
    }

    /// Copy with a different leader set.
    pub fn with_leaders(&self, leaders: BTreeSet<usize>) -> Self {
        let mut m = self.clone();
        m.leaders = leaders;
        m
    }

    /// Copy with per-mode gains installed.
    pub fn with_gains(&self, gains: Vec<Gain>) -> Self {
        let mut m = self.clone();
        m.gains = Some(gains);
        m
    }

    /// Copy with different certification parameters.
    pub fn with_params(&self, params: TheoremParams) -> Self {
        let mut m = self.clone();
        m.params = params;
        m
    }

    /// Leader configuration matrix `D = diag(d_1..d_N)`.
    pub fn leader_matrix(&self) -> Mat {
        let n = self.n_agents();
        let mut d = Mat::zeros(n, n);
        for &i in &self.leaders {
            d[(i - 1, i - 1)] = 1.0;
        }
        d
    }

    /// `B̂ = D ⊗ I_n` compacted to the leader columns only; the column space
    /// is unchanged and the cost is lower. Columns are ordered by leader
    /// index then state coordinate.
    pub fn input_matrix_compact(&self, leaders: &BTreeSet<usize>) -> Mat {
        let n = self.state_dim();
        let total = self.total_dim();
        let mut b = Mat::zeros(total, leaders.len() * n);
        for (k, &i) in leaders.iter().enumerate() {
            for c in 0..n {
                b[((i - 1) * n + c, k * n + c)] = 1.0;
            }
        }
        b
    }

    /// Open-loop stacked matrix `I_N ⊗ A - L_p ⊗ I_n`.
    pub fn open_loop(&self, p: usize) -> Mat {
        let n = self.state_dim();
        let big_n = self.n_agents();
        kron(&Mat::identity(big_n, big_n), &self.a) - kron(&self.laplacians[p], &Mat::identity(n, n))
    }

    /// Closed-loop mode matrix `A_p = I ⊗ A - L_p ⊗ I - D ⊗ K_p`.
    pub fn mode_matrix(&self, p: usize) -> Result<Mat> {
        let gains = self
            .gains
            .as_ref()
            .ok_or_else(|| Error::Configuration(format!("no gains installed for mode {}", p + 1)))?;
        let gain = gains
            .get(p)
            .ok_or_else(|| Error::Configuration(format!("missing gain for mode {}", p + 1)))?;
        Ok(self.open_loop(p) - self.feedback_term(gain)?)
    }

    /// The feedback contribution `D ⊗ K_p` (scalar gains) or `B̂ K̂`.
    pub fn feedback_term(&self, gain: &Gain) -> Result<Mat> {
        let n = self.state_dim();
        let total = self.total_dim();
        let d = self.leader_matrix();
        match gain {
            Gain::Scalar(kappa) => Ok(kron(&d, &Mat::identity(n, n)) * *kappa),
            Gain::Full(rows) => {
                if rows.len() != total || rows.iter().any(|r| r.len() != total) {
                    return Err(Error::Dimension(format!(
                        "full gain must be {}x{}",
                        total, total
                    )));
                }
                let khat = Mat::from_fn(total, total, |r, c| rows[r][c]);
                Ok(kron(&d, &Mat::identity(n, n)) * khat)
            }
        }
    }

    /// Per-mode scalar shift `½(l_p/τ_p_min - η_p)` used by the metric and
    /// the second auxiliary matrix.
    pub fn half_shift(&self, p: usize) -> f64 {
        let m = &self.params.modes[p];
        0.5 * (m.l as f64 / self.tddt.tau_min(p) - m.eta)
    }

    /// Shifted open-loop matrix `Â_p`; no feedback term.
    pub fn shifted_open_loop(&self, p: usize) -> Mat {
        let total = self.total_dim();
        self.open_loop(p) + Mat::identity(total, total) * self.half_shift(p)
    }
}

/// First auxiliary shift `A_p^(1) = A_p - ½(l_p/τ_p_min + η_p) I`.
pub fn shift_1(mode: &Mat, params: &ModeParams, tau_min: f64) -> Mat {
    let n = mode.nrows();
    mode - Mat::identity(n, n) * (0.5 * (params.l as f64 / tau_min + params.eta))
}

/// Second auxiliary shift `A_p^(2) = A_p + ½(l_p/τ_p_min - η_p) I`.
pub fn shift_2(mode: &Mat, params: &ModeParams, tau_min: f64) -> Mat {
    let n = mode.nrows();
    mode + Mat::identity(n, n) * (0.5 * (params.l as f64 / tau_min - params.eta))
}
