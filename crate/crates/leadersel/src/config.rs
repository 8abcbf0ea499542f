//! Network configuration file: parsing, validation, model construction.

use serde::{Deserialize, Serialize};

use crate::graph::Digraph;
use crate::linalg::Mat;
use crate::sysmodel::{ModeParams, SwitchedModel, TddtSpec, TheoremParams};
use crate::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TddtEntry {
    pub tau_min: f64,
    pub tau_max: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamsConfig {
    /// Per-topology discretization counts.
    pub l: Vec<u32>,
    /// Per-topology jump factors.
    pub mu: Vec<f64>,
    /// Per-topology rates.
    pub eta: Vec<f64>,
    /// Shared small constant; defaults to `1e-3 · min_p(l_p / tau_p_min)`.
    #[serde(default)]
    pub phi: Option<f64>,
    #[serde(default = "default_beta_setting")]
    pub beta_setting: f64,
}

fn default_beta_setting() -> f64 {
    0.5
}

fn default_horizon() -> f64 {
    30.0
}

fn default_sample_dt() -> f64 {
    0.01
}

fn default_trials() -> usize {
    100
}

fn default_z_max() -> usize {
    3
}

fn default_eps0_range() -> f64 {
    100.0
}

fn default_stable_eta() -> f64 {
    -1.0
}

fn default_stable_mu() -> f64 {
    2.0
}

/// The single structured input file consumed by every command.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetworkConfig {
    /// Agent dynamics matrix, row-major.
    pub a: Vec<Vec<f64>>,
    /// One edge list per topology; each edge is `[j, i]`, 1-based.
    pub topologies: Vec<Vec<[usize; 2]>>,
    pub tddt: Vec<TddtEntry>,
    pub params: ParamsConfig,
    /// Leader budget.
    pub k: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_z_max")]
    pub z_max: usize,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_sample_dt")]
    pub sample_dt: f64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    /// Scalar trial gains for the comparison experiment, one per topology;
    /// synthesized when absent.
    #[serde(default)]
    pub trial_gains: Option<Vec<f64>>,
    /// Dwell increments for the sweep experiment; defaults to 0.0..=2.4
    /// in steps of 0.2.
    #[serde(default)]
    pub dwell_increments: Option<Vec<f64>>,
    /// Rate given to modes forced stable in the modes-table experiment.
    #[serde(default = "default_stable_eta")]
    pub stable_eta: f64,
    /// Jump factor given to modes forced stable.
    #[serde(default = "default_stable_mu")]
    pub stable_mu: f64,
    /// Restrict trajectory output to follower columns.
    #[serde(default)]
    pub followers_only: bool,
    /// Append the raw stacked state to each trajectory row.
    #[serde(default)]
    pub include_state: bool,
    /// Initial error states are drawn uniformly from `(-range, range)`.
    #[serde(default = "default_eps0_range")]
    pub eps0_range: f64,
}

impl NetworkConfig {
    /// Parses a config from JSON text; syntax and type errors carry the
    /// line/column they occurred at.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: NetworkConfig = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("line {}, column {}: {}", e.line(), e.column(), e)))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialization cannot fail")
    }

    /// Field-level validation against the model preconditions.
    pub fn validate(&self) -> Result<()> {
        let n = self.a.len();
        if n == 0 || self.a.iter().any(|row| row.len() != n) {
            return Err(Error::Config("field 'a': matrix must be square and nonempty".into()));
        }
        let m = self.topologies.len();
        if m == 0 {
            return Err(Error::Config("field 'topologies': at least one topology required".into()));
        }
        if self.tddt.len() != m {
            return Err(Error::Config(format!(
                "field 'tddt': {} entries for {} topologies",
                self.tddt.len(),
                m
            )));
        }
        for (label, len) in [
            ("params.l", self.params.l.len()),
            ("params.mu", self.params.mu.len()),
            ("params.eta", self.params.eta.len()),
        ] {
            if len != m {
                return Err(Error::Config(format!(
                    "field '{}': {} entries for {} topologies",
                    label, len, m
                )));
            }
        }
        if self.k == 0 {
            return Err(Error::Config("field 'k': the leader budget must be positive".into()));
        }
        if let Some(tg) = &self.trial_gains {
            if tg.len() != m {
                return Err(Error::Config(format!(
                    "field 'trial_gains': {} entries for {} topologies",
                    tg.len(),
                    m
                )));
            }
        }
        // Delegate the numeric invariants to the model constructor.
        self.build_model()?;
        Ok(())
    }

    /// Default shared small constant.
    pub fn default_phi(&self) -> f64 {
        let min_rate = self
            .params
            .l
            .iter()
            .zip(self.tddt.iter())
            .map(|(&l, w)| l as f64 / w.tau_min)
            .fold(f64::MAX, f64::min);
        1e-3 * min_rate
    }

    pub fn n_agents(&self) -> Result<usize> {
        self.topologies
            .iter()
            .flat_map(|edges| edges.iter().flat_map(|e| e.iter().copied()))
            .max()
            .ok_or_else(|| Error::Config("topologies carry no edges; agent count unknown".into()))
    }

    /// Builds the immutable model (without leaders or gains).
    pub fn build_model(&self) -> Result<SwitchedModel> {
        let n_agents = self.n_agents()?;
        let graphs: Vec<Digraph> = self
            .topologies
            .iter()
            .enumerate()
            .map(|(idx, edges)| {
                let pairs: Vec<(usize, usize)> = edges.iter().map(|e| (e[0], e[1])).collect();
                Digraph::new(n_agents, &pairs).map_err(|e| {
                    Error::Config(format!("field 'topologies[{}]': {}", idx, e))
                })
            })
            .collect::<Result<_>>()?;
        let a = Mat::from_fn(self.a.len(), self.a.len(), |r, c| self.a[r][c]);
        let tddt = TddtSpec::new(self.tddt.iter().map(|w| (w.tau_min, w.tau_max)).collect())
            .map_err(|e| Error::Config(format!("field 'tddt': {}", e)))?;
        let phi = self.params.phi.unwrap_or_else(|| self.default_phi());
        let params = TheoremParams {
            modes: (0..self.topologies.len())
                .map(|p| ModeParams {
                    l: self.params.l[p],
                    mu: self.params.mu[p],
                    eta: self.params.eta[p],
                })
                .collect(),
            phi,
            beta_setting: self.params.beta_setting,
        };
        SwitchedModel::new(a, graphs, tddt, params)
            .map_err(|e| Error::Config(format!("model construction: {}", e)))
    }

    /// The sweep schedule, defaulting to 0.0..=2.4 step 0.2.
    pub fn sweep_increments(&self) -> Vec<f64> {
        self.dwell_increments
            .clone()
            .unwrap_or_else(|| (0..=12).map(|i| i as f64 * 0.2).collect())
    }
}
