//! Experiment harnesses behind the CLI subcommands: selection, simulation,
//! method comparison, the dwell-time sweep and the stable-mode table.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::certify::TauWindow;
use crate::config::NetworkConfig;
use crate::report::{CertificateReport, RunReport};
use crate::select::{
    algorithm1, algorithm2, default_proposals, fmax_greedy, random_select, SelectionStatus,
};
use crate::simulate::{self, SwitchingLaw};
use crate::spectral::SpectralCache;
use crate::sysmodel::{Gain, ModeParams, SwitchedModel, TheoremParams};
use crate::{Error, Result};

/// Which selection algorithm a command should run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    One,
    Two,
}

/// Runs leader selection end to end and packages the report.
pub fn run_select(cfg: &NetworkConfig, algorithm: Algorithm) -> Result<RunReport> {
    let model = cfg.build_model()?;
    let proposals = default_proposals(&model.params, cfg.z_max.max(1));
    let outcome = match algorithm {
        Algorithm::One => algorithm1(&model, cfg.k, cfg.z_max.max(1), &proposals)?,
        Algorithm::Two => algorithm2(&model, cfg.k, cfg.z_max.max(1), &proposals)?,
    };
    Ok(RunReport {
        selection: outcome.report,
        certificate: outcome.certificate.as_ref().map(CertificateReport::from),
    })
}

/// Trajectory table written as `trajectory.csv`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl TrajectoryTable {
    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            let line: Vec<String> = row.iter().map(|v| format!("{:.10}", v)).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }
}

/// Rebuilds the certified model from a selection report and propagates one
/// seeded admissible signal.
pub fn run_simulate(cfg: &NetworkConfig, report: &RunReport) -> Result<TrajectoryTable> {
    if report.selection.status != SelectionStatus::Certified {
        return Err(Error::Configuration(
            "simulation needs a certified selection report".into(),
        ));
    }
    let cert = report
        .certificate
        .as_ref()
        .ok_or_else(|| Error::Configuration("report carries no certificate".into()))?;
    if !cert.verdict.passed() {
        return Err(Error::Configuration("certificate verdict is not a pass".into()));
    }
    let model = cfg.build_model()?;
    let leaders: BTreeSet<usize> = report.selection.leaders.iter().copied().collect();
    let gains: Vec<Gain> = cert.modes.iter().map(|m| m.gain.clone()).collect();
    let model = model
        .with_params(report.selection.params_used.clone())
        .with_leaders(leaders.clone())
        .with_gains(gains);

    let signal = simulate::gen_signal(&cert.tau_windows, cfg.horizon, cfg.seed, SwitchingLaw::Aperiodic)?;
    let eps0 = simulate::random_initial_state(model.total_dim(), cfg.eps0_range, cfg.seed, 0);
    let traj = simulate::propagate(&model, &signal, &eps0, cfg.sample_dt)?;
    let norms = simulate::error_norms(&traj, model.state_dim());

    let agents: Vec<usize> = (1..=model.n_agents())
        .filter(|i| !cfg.followers_only || !leaders.contains(i))
        .collect();
    let mut header = vec!["time".to_string(), "topology".to_string()];
    header.extend(agents.iter().map(|i| format!("agent_{}_norm", i)));
    if cfg.include_state {
        header.extend((0..model.total_dim()).map(|j| format!("state_{}", j)));
    }
    let mut rows = Vec::with_capacity(traj.times.len());
    for (idx, &t) in traj.times.iter().enumerate() {
        let mut row = vec![t, traj.active_topology[idx] as f64];
        for &i in &agents {
            row.push(norms[idx][i - 1]);
        }
        if cfg.include_state {
            row.extend(traj.states[idx].iter().copied());
        }
        rows.push(row);
    }
    Ok(TrajectoryTable { header, rows })
}

/// One row of the method-comparison table: metric values after reaching a
/// given leader count.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompareRow {
    pub n_leaders: usize,
    pub f_greedy: f64,
    pub f_fmax: f64,
    pub f_random_mean: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompareTable {
    pub rows: Vec<CompareRow>,
}

impl CompareTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n_leaders,f_gamma_submodular,f_maximum,f_random_mean\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{:.10},{:.10},{:.10}\n",
                r.n_leaders, r.f_greedy, r.f_fmax, r.f_random_mean
            ));
        }
        out
    }
}

fn extend_to(trace: &[f64], len: usize) -> Vec<f64> {
    let mut v = trace.to_vec();
    let last = *v.last().expect("nonempty trace");
    while v.len() < len {
        v.push(last);
    }
    v
}

/// Default scalar trial gains: the minimal scalar gain stabilizing each
/// shifted mode from the full leader set, with a unit floor.
fn default_trial_gains(model: &SwitchedModel) -> Result<Vec<Gain>> {
    let all: BTreeSet<usize> = (1..=model.n_agents()).collect();
    let mut gains = Vec::with_capacity(model.n_modes());
    for p in 0..model.n_modes() {
        let (gain, _, _) =
            crate::certify::synthesize_gain(model, &all, p, model.half_shift(p) + 0.5)?;
        let kappa = match gain {
            Gain::Scalar(k) => k.max(1.0),
            Gain::Full(_) => 1.0,
        };
        gains.push(Gain::Scalar(kappa));
    }
    Ok(gains)
}

/// Compares greedy selection on the distance metric, greedy selection on the
/// rightmost-eigenvalue index, and seeded random selection. All three are
/// reported in terms of the distance metric per leader count.
pub fn run_compare(cfg: &NetworkConfig) -> Result<CompareTable> {
    let model = cfg.build_model()?;
    let proposals = default_proposals(&model.params, 1);
    let greedy = algorithm1(&model, model.n_agents(), 1, &proposals)?;
    let greedy_trace = greedy.report.f_trace.clone();

    let trial_gains: Vec<Gain> = match &cfg.trial_gains {
        Some(list) => list.iter().map(|&k| Gain::Scalar(k)).collect(),
        None => default_trial_gains(&model)?,
    };
    let fmax = fmax_greedy(&model, model.n_agents(), &trial_gains)?;
    // Evaluate the distance metric along the fmax-selected prefixes.
    let cache = SpectralCache::new(&model)?;
    let mut fmax_f_trace = Vec::with_capacity(fmax.report.leaders.len());
    let s0_len = greedy.report.leaders.len() - (greedy.report.f_trace.len() - 1);
    let mut prefix: BTreeSet<usize> = BTreeSet::new();
    let mut boundary = Vec::new();
    for (idx, &v) in fmax.report.leaders.iter().enumerate() {
        prefix.insert(v);
        if idx + 1 >= s0_len {
            boundary.push(cache.metric(&model, &prefix)?);
        }
    }
    fmax_f_trace.extend(boundary);

    let random_trace = random_select(&model, model.n_agents(), cfg.trials.max(1), cfg.seed)?;

    let len = greedy_trace.len().max(fmax_f_trace.len()).max(random_trace.len());
    let g = extend_to(&greedy_trace, len);
    let fm = extend_to(&fmax_f_trace, len);
    let rd = extend_to(&random_trace, len);
    let rows = (0..len)
        .map(|i| CompareRow {
            n_leaders: s0_len + i,
            f_greedy: g[i],
            f_fmax: fm[i],
            f_random_mean: rd[i],
        })
        .collect();
    Ok(CompareTable { rows })
}

/// One row of the dwell-sweep table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub increment: f64,
    pub n_leaders: usize,
    pub certified: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    pub warnings: Vec<String>,
}

impl SweepTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("tddt_increment,n_leaders,certified\n");
        for r in &self.rows {
            out.push_str(&format!("{:.2},{},{}\n", r.increment, r.n_leaders, r.certified));
        }
        out
    }
}

/// Shifts both window ends by the increment and rescales each rate so the
/// dwell condition stays tight: `η_p = min(η_p, (-log μ_p - ε)/(τ_p_max + δ))`.
/// At zero increment this reproduces the base configuration exactly.
pub fn sweep_params(cfg: &NetworkConfig, delta: f64) -> (TheoremParams, Vec<(f64, f64)>) {
    const EPS: f64 = 1e-3;
    let windows: Vec<(f64, f64)> = cfg
        .tddt
        .iter()
        .map(|w| (w.tau_min + delta, w.tau_max + delta))
        .collect();
    let modes = (0..cfg.topologies.len())
        .map(|p| {
            let mu = cfg.params.mu[p];
            let rule = (-mu.ln() - EPS) / windows[p].1;
            let eta = cfg.params.eta[p].min(rule);
            ModeParams { l: cfg.params.l[p], mu, eta }
        })
        .collect();
    let phi = cfg.params.phi.unwrap_or_else(|| cfg.default_phi());
    (TheoremParams { modes, phi, beta_setting: cfg.params.beta_setting }, windows)
}

/// Re-runs selection across the dwell increments, recording how many leaders
/// each widened window demands. A non-monotone leader count is reported as a
/// warning, not an error.
pub fn run_sweep(cfg: &NetworkConfig) -> Result<SweepTable> {
    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    for &delta in &cfg.sweep_increments() {
        let (params, windows) = sweep_params(cfg, delta);
        let mut point_cfg = cfg.clone();
        point_cfg.tddt = windows
            .iter()
            .map(|&(lo, hi)| crate::config::TddtEntry { tau_min: lo, tau_max: hi })
            .collect();
        point_cfg.params.eta = params.modes.iter().map(|m| m.eta).collect();
        point_cfg.params.phi = Some(params.phi);
        let model = point_cfg.build_model()?;
        let proposals = default_proposals(&model.params, cfg.z_max.max(1));
        match algorithm1(&model, model.n_agents(), cfg.z_max.max(1), &proposals) {
            Ok(outcome) => {
                rows.push(SweepRow {
                    increment: delta,
                    n_leaders: outcome.report.leaders.len(),
                    certified: outcome.report.status == SelectionStatus::Certified,
                });
            }
            Err(Error::DegenerateInstance(_)) => {
                rows.push(SweepRow { increment: delta, n_leaders: 0, certified: false });
            }
            Err(e) => return Err(e),
        }
    }
    for w in rows.windows(2) {
        if w[1].n_leaders < w[0].n_leaders {
            warnings.push(format!(
                "leader count dropped from {} to {} between increments {:.2} and {:.2}",
                w[0].n_leaders, w[1].n_leaders, w[0].increment, w[1].increment
            ));
        }
    }
    Ok(SweepTable { rows, warnings })
}

/// One row of the stable-mode table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModesRow {
    pub n_stable: usize,
    pub leaders: Vec<usize>,
    pub status: SelectionStatus,
    pub tau_windows: Vec<TauWindow>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModesTable {
    pub rows: Vec<ModesRow>,
}

impl ModesTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n_stable_modes,leaders,status,tau_windows\n");
        for r in &self.rows {
            let leaders: Vec<String> = r.leaders.iter().map(|l| l.to_string()).collect();
            let windows: Vec<String> = r
                .tau_windows
                .iter()
                .map(|w| match w {
                    TauWindow::Bounded { tau_min, tau_max } => {
                        format!("[{:.3};{:.3}]", tau_min, tau_max)
                    }
                    TauWindow::Unbounded { tau_min } => format!("[{:.3};inf)", tau_min),
                    TauWindow::Empty => "empty".to_string(),
                })
                .collect();
            let status = match r.status {
                SelectionStatus::Certified => "certified",
                SelectionStatus::UncertifiedBudget => "uncertified_budget",
                SelectionStatus::NoneForTddt => "none_for_tddt",
            };
            out.push_str(&format!(
                "{},{},{},{}\n",
                r.n_stable,
                leaders.join(" "),
                status,
                windows.join(" ")
            ));
        }
        out
    }
}

/// Re-certifies with the first `0..=m` modes forced stable (negative rate,
/// jump factor above one) and reports the resulting leader sets and windows.
pub fn run_modes_table(cfg: &NetworkConfig) -> Result<ModesTable> {
    let m = cfg.topologies.len();
    let mut rows = Vec::new();
    for n_stable in 0..=m {
        let mut point_cfg = cfg.clone();
        for p in 0..n_stable {
            point_cfg.params.eta[p] = cfg.stable_eta;
            point_cfg.params.mu[p] = cfg.stable_mu;
        }
        let model = point_cfg.build_model()?;
        let proposals = default_proposals(&model.params, cfg.z_max.max(1));
        match algorithm1(&model, model.n_agents(), cfg.z_max.max(1), &proposals) {
            Ok(outcome) => {
                let windows = outcome
                    .certificate
                    .as_ref()
                    .map(|c| c.tau_windows.clone())
                    .unwrap_or_default();
                rows.push(ModesRow {
                    n_stable,
                    leaders: {
                        let mut l = outcome.report.leaders.clone();
                        l.sort_unstable();
                        l
                    },
                    status: outcome.report.status,
                    tau_windows: windows,
                });
            }
            Err(Error::DegenerateInstance(msg)) => {
                return Err(Error::DegenerateInstance(format!(
                    "modes-table point with {} stable modes: {}",
                    n_stable, msg
                )))
            }
            Err(e) => return Err(e),
        }
    }
    Ok(ModesTable { rows })
}
