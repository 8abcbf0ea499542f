//! Gain synthesis and the full dwell-time certification pipeline.
//!
//! Certification runs per leader set: synthesize per-mode gains, check the
//! eigenvalue margins, verify the normality measure β against its setting,
//! construct a family of Lyapunov matrices per mode, check the discretized
//! matrix inequalities, find the minimal jump factors μ between modes, and
//! derive the certified dwell windows. Every stage failure is recorded in
//! the certificate rather than thrown.
//!
//! Mode families ramp geometrically upward across the discretization index:
//! `P_{p,i} = c_p γ_p^i P_base` with `γ_p > 1` chosen so the ramp term of the
//! inequalities is absorbed exactly. The ramp is what makes the cross-mode
//! jump condition satisfiable with μ well below one — the steeper the ramp,
//! the smaller the feasible μ. The endpoint solutions `P_x`, `P_x'` of the
//! two fixed Lyapunov equations are still computed and box-checked as
//! existence evidence for the eigenvalue-margin conditions.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::linalg::{self, Mat};
use crate::spectral::{self, beta_of, UNSTABLE_RE_TOL};
use crate::sysmodel::{shift_1, shift_2, Gain, SwitchedModel};
use crate::{Error, Result};

/// Strict matrix inequalities pass when the symmetrized left-hand side has
/// largest eigenvalue at most this value.
pub const LMI_MARGIN_TOL: f64 = -1e-9;

/// Stabilization margin demanded from synthesized gains.
pub const SYNTH_MARGIN: f64 = 1e-6;

/// Gain-depth escalation schedule: extra stabilization depth added to the
/// per-mode shift target until the jump condition becomes feasible. The
/// grid is dense at shallow depths because the β floor and the follower
/// spectra cap how deep scalar gains can reach.
pub const DEPTH_SCHEDULE: [f64; 15] = [
    0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0, 2.5, 3.0, 4.0, 5.0, 6.0, 8.0,
];

/// How a mode is treated by the certificate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModeClass {
    Stable,
    Unstable,
}

/// Family of Lyapunov matrices `P_{p,0} .. P_{p,l_p}` for one mode.
#[derive(Debug, Clone)]
pub struct PFamily {
    pub matrices: Vec<Mat>,
    /// Geometric ramp ratio between consecutive members (1 for constant
    /// stable-mode families).
    pub gamma: f64,
    /// Effective decay budget `η̃` consumed by the base Lyapunov equation.
    pub eta_tilde: f64,
    /// Existence evidence from the fixed Lyapunov equations, when computed.
    pub evidence: Option<TheoremEvidence>,
}

/// Box and bound checks on the endpoint solutions of the two fixed
/// Lyapunov equations.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TheoremEvidence {
    pub px_lambda_max: f64,
    pub px_lambda_min: f64,
    /// Proof bound on `λ_max(P_x)`; available when the computed β is positive.
    pub px_bound: Option<f64>,
    pub pxp_lambda_max: f64,
    pub pxp_lambda_min: f64,
    pub px_residual: f64,
    pub pxp_residual: f64,
}

/// Per-mode certification record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModeRecord {
    /// 1-based topology index.
    pub mode: usize,
    pub mode_class: ModeClass,
    /// Margin of the first eigenvalue condition (unstable route only).
    pub margin_6: Option<f64>,
    /// Margin of the second eigenvalue condition; for stable-routed modes
    /// this is `Re λ_r(A_p) - η_p/2`.
    pub margin_7: f64,
    pub beta_computed: Option<f64>,
    pub lambda_r_closed: f64,
    pub lambda_r_shifted_open: f64,
    pub gain: Gain,
    /// False when the unstructured fallback was required, which breaks the
    /// shared-gain Kronecker structure.
    pub gain_structured: bool,
    /// Largest eigenvalues of the symmetrized discretized inequalities; all
    /// must be below `LMI_MARGIN_TOL`.
    pub p_family_residuals: Vec<f64>,
}

/// Certified dwell window for one topology.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TauWindow {
    /// Unstable mode: `[tau_min, tau_max]`.
    Bounded { tau_min: f64, tau_max: f64 },
    /// Stable mode: `[tau_min, ∞)`.
    Unbounded { tau_min: f64 },
    /// The certified upper end fell below the requested lower end.
    Empty,
}

impl TauWindow {
    /// Whether the window contains the requested `[lo, hi]` range.
    pub fn contains(&self, lo: f64, hi: f64) -> bool {
        match *self {
            TauWindow::Bounded { tau_min, tau_max } => tau_min <= lo && hi <= tau_max,
            TauWindow::Unbounded { tau_min } => tau_min <= lo,
            TauWindow::Empty => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "result", content = "condition")]
pub enum Verdict {
    #[serde(rename = "pass")]
    Pass,
    #[serde(rename = "fail")]
    Fail(String),
}

impl Verdict {
    pub fn passed(&self) -> bool {
        matches!(self, Verdict::Pass)
    }
}

/// Outcome of the full certification pipeline for one leader set.
#[derive(Debug, Clone)]
pub struct Certificate {
    pub modes: Vec<ModeRecord>,
    /// `mu_required[q][p]`: minimal feasible jump factor when switching from
    /// mode `p` into mode `q`; `None` on the diagonal.
    pub mu_required: Vec<Vec<Option<f64>>>,
    /// Per-mode requirement: max over source modes.
    pub mu_mode: Vec<f64>,
    pub tau_windows: Vec<TauWindow>,
    pub beta_setting_final: f64,
    pub beta_history: Vec<f64>,
    /// Gain depth (extra stabilization) at which the pipeline settled.
    pub depth_used: f64,
    pub verdict: Verdict,
    /// Families kept for independent rechecking.
    pub families: Vec<PFamily>,
}

/// Synthesizes a gain for mode `p` so that `A_p + shift_target I` is stable
/// with margin. Scalar gains `κ I_n` are searched first by doubling then
/// bisection; when no scalar gain up to `2^16` works, an unstructured
/// feedback is built on the controllable subspace and flagged.
///
/// Returns the gain, the achieved `Re λ_r(A_p + shift_target I)`, and
/// whether the shared-gain structure was preserved.
pub fn synthesize_gain(
    model: &SwitchedModel,
    s: &BTreeSet<usize>,
    p: usize,
    shift_target: f64,
) -> Result<(Gain, f64, bool)> {
    let probe = model.with_leaders(s.clone());
    let total = probe.total_dim();
    let open = probe.open_loop(p);
    let shifted = |kappa: f64| -> Result<f64> {
        let fb = probe.feedback_term(&Gain::Scalar(kappa))?;
        let m = &open - fb + Mat::identity(total, total) * shift_target;
        linalg::max_re_eig(&m)
    };

    let at_zero = shifted(0.0)?;
    if at_zero < -SYNTH_MARGIN {
        return Ok((Gain::Scalar(0.0), at_zero, true));
    }
    if !s.is_empty() {
        // doubling phase
        let mut lo = 0.0;
        let mut hi = 1e-3;
        let mut hi_val = shifted(hi)?;
        while hi_val >= -SYNTH_MARGIN && hi < 65536.0 {
            lo = hi;
            hi *= 2.0;
            hi_val = shifted(hi)?;
        }
        if hi_val < -SYNTH_MARGIN {
            // bisection to the minimal feasible scalar gain
            for _ in 0..80 {
                if hi - lo <= 1e-6 * hi.max(1.0) {
                    break;
                }
                let mid = 0.5 * (lo + hi);
                if shifted(mid)? < -SYNTH_MARGIN {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            let achieved = shifted(hi)?;
            return Ok((Gain::Scalar(hi), achieved, true));
        }
    }

    // Unstructured fallback. Existence requires every eigenvector of the
    // shifted matrix with nonnegative real part to lie in the controllable
    // span of the leader set.
    let target = &open + Mat::identity(total, total) * shift_target;
    let pairs = linalg::eig(&target)?;
    let span = spectral::controllable_span(&probe, &target, s)?;
    for pair in pairs.iter().filter(|pr| pr.value.re >= UNSTABLE_RE_TOL) {
        if spectral::dist2(&pair.vector, &span) > 1e-8 {
            return Err(Error::SynthesisImpossible {
                mode: p + 1,
                eigenvalue: format!("{:.6}{:+.6}i", pair.value.re, pair.value.im),
            });
        }
    }
    if s.is_empty() {
        return Err(Error::SynthesisImpossible {
            mode: p + 1,
            eigenvalue: format!("{:.6}", at_zero),
        });
    }
    let bhat = probe.input_matrix_compact(s);
    // Project on the controllable subspace and place poles there by the
    // anti-stable Lyapunov construction.
    let v = &span.basis;
    let mc = v.transpose() * &target * v;
    let bc = v.transpose() * &bhat;
    let evals = linalg::eigenvalues(&mc)?;
    // Anti-stability of mc + αI needs α above the deepest stable eigenvalue;
    // keep α gentle beyond that, since the construction places every closed
    // pole at depth α and aggressive placement produces wildly non-normal
    // gains.
    let min_re = evals.iter().map(|l| l.re).fold(f64::MAX, f64::min);
    let alpha = 1.05 * (-min_re).max(0.0) + 0.5;
    let anti = &mc + Mat::identity(mc.nrows(), mc.nrows()) * alpha;
    // (Mc + αI) X + X (Mc + αI)ᵀ = 2 Bc Bcᵀ, solved as a Lyapunov equation
    // in the transposed variable: antiᵀ is the coefficient, -2BcBcᵀ the load.
    let q = &bc * bc.transpose() * 2.0;
    let x = linalg::lyapunov_solve(&anti.transpose(), &(-q))?;
    let xinv = x
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("fallback synthesis: Gramian-like matrix singular".into()))?;
    let kc = bc.transpose() * xinv;
    // Expand to the full stacked gain: rows live on leader coordinates.
    let k_compact = kc * v.transpose();
    let n = probe.state_dim();
    let mut k_full = Mat::zeros(total, total);
    for (kk, &leader) in s.iter().enumerate() {
        for c in 0..n {
            let compact_row = kk * n + c;
            let full_row = (leader - 1) * n + c;
            for col in 0..total {
                k_full[(full_row, col)] = k_compact[(compact_row, col)];
            }
        }
    }
    let gain = Gain::Full((0..total).map(|r| (0..total).map(|c| k_full[(r, c)]).collect()).collect());
    let fb = probe.feedback_term(&gain)?;
    let achieved = linalg::max_re_eig(&(&target - fb))?;
    if achieved >= -SYNTH_MARGIN {
        return Err(Error::SynthesisImpossible {
            mode: p + 1,
            eigenvalue: format!("residual margin {:.3e}", achieved),
        });
    }
    Ok((gain, achieved, false))
}

/// Eigenvalue margins of one mode under installed gains.
///
/// `margin_6` is `Re λ_r(A_p^(1)) + (l_p+φ)/(2 β_setting τ_p_min)`,
/// `margin_7` is `Re λ_r(A_p^(2))`, and `beta` comes from the normality
/// formula on `A_p^(1)`.
pub fn check_margins(
    model: &SwitchedModel,
    p: usize,
    beta_setting: f64,
) -> Result<(f64, f64, f64)> {
    let mode = model.mode_matrix(p)?;
    let params = &model.params.modes[p];
    let tau_min = model.tddt.tau_min(p);
    let a1 = shift_1(&mode, params, tau_min);
    let a2 = shift_2(&mode, params, tau_min);
    let re1 = linalg::max_re_eig(&a1)?;
    let margin_6 =
        re1 + (params.l as f64 + model.params.phi) / (2.0 * beta_setting * tau_min);
    let margin_7 = linalg::max_re_eig(&a2)?;
    let beta = beta_of(&a1)?;
    Ok((margin_6, margin_7, beta))
}

/// The verification loop for the β setting: accept when the computed value
/// reaches the setting or exceeds 0.5, otherwise lower the setting in 0.1
/// steps down to the 0.1 floor.
pub fn beta_verification_loop(beta_computed: f64, beta_setting: f64) -> (Option<f64>, Vec<f64>) {
    let mut setting = beta_setting;
    let mut history = vec![setting];
    loop {
        if beta_computed > 0.5 || beta_computed >= setting {
            return (Some(setting), history);
        }
        if setting <= 0.1 + 1e-12 {
            return (None, history);
        }
        setting = ((setting - 0.1) * 10.0).round() / 10.0;
        history.push(setting);
    }
}

/// Solves `Mᵀ P + P M + Q = 0`; see [`linalg::lyapunov_solve`].
pub fn lyapunov_solve(m: &Mat, q: &Mat) -> Result<Mat> {
    linalg::lyapunov_solve(m, q)
}

fn box_check(p: &Mat, label: &str) -> Result<(f64, f64)> {
    let vals = linalg::sym_eigenvalues(p)?;
    let lo = vals[0];
    let hi = *vals.last().unwrap();
    if lo <= 1e-10 {
        return Err(Error::Numerical(format!("{}: not positive definite (λ_min = {:.3e})", label, lo)));
    }
    if hi >= 1.0 - 1e-10 {
        return Err(Error::Numerical(format!("{}: exceeds the identity box (λ_max = {:.6})", label, hi)));
    }
    Ok((lo, hi))
}

/// Builds the Lyapunov family for mode `p` of a gained model.
///
/// Unstable route: geometric ramp `P_i = c γ^i P_base` with
/// `γ = 1 + (η - η̃) τ_min / l` and `P_base` solving the Lyapunov equation of
/// `A_p - (η̃/2) I`; the fixed endpoint solutions are verified as evidence.
/// Stable route: constant family from `A_p - (η/2) I`.
pub fn construct_p_family(model: &SwitchedModel, p: usize, class: ModeClass) -> Result<PFamily> {
    let mode = model.mode_matrix(p)?;
    let params = &model.params.modes[p];
    let tau_min = model.tddt.tau_min(p);
    let l = params.l as usize;
    let total = mode.nrows();
    let lambda_r = linalg::max_re_eig(&mode)?;

    match class {
        ModeClass::Stable => {
            if !(params.eta < 0.0) {
                return Err(Error::Configuration(format!(
                    "mode {}: stable route requires eta < 0",
                    p + 1
                )));
            }
            if lambda_r >= params.eta / 2.0 {
                return Err(Error::Numerical(format!(
                    "mode {}: Re λ_r = {:.4} not below η/2 = {:.4}",
                    p + 1,
                    lambda_r,
                    params.eta / 2.0
                )));
            }
            // Scaled-identity members pair cleanly across modes in the jump
            // condition; they are admissible whenever the symmetric part
            // already decays at rate η/2.
            let sym_max = linalg::sym_lambda_max(&(&mode + mode.transpose()))? / 2.0;
            let pm = if 2.0 * sym_max < params.eta {
                Mat::identity(total, total) * 0.99
            } else {
                let m = &mode - Mat::identity(total, total) * (params.eta / 2.0);
                let base = linalg::lyapunov_solve(&m, &Mat::identity(total, total))?;
                let hi = linalg::sym_lambda_max(&base)?;
                base * (0.99 / hi)
            };
            box_check(&pm, &format!("mode {} stable family", p + 1))?;
            Ok(PFamily {
                matrices: vec![pm; l + 1],
                gamma: 1.0,
                eta_tilde: params.eta,
                evidence: None,
            })
        }
        ModeClass::Unstable => {
            // Existence evidence: the two fixed Lyapunov solutions.
            let a1 = shift_1(&mode, params, tau_min);
            let a2 = shift_2(&mode, params, tau_min);
            let phi = model.params.phi;
            let q_x = Mat::identity(total, total) * ((params.l as f64 + phi) / tau_min);
            let px = linalg::lyapunov_solve(&a1, &q_x)?;
            let q_xp = Mat::identity(total, total) * phi;
            let pxp = linalg::lyapunov_solve(&a2, &q_xp)?;
            let (px_lo, px_hi) = box_check(&px, &format!("mode {} P_x", p + 1))?;
            let (pxp_lo, pxp_hi) = box_check(&pxp, &format!("mode {} P_x'", p + 1))?;
            let re1 = linalg::max_re_eig(&a1)?;
            let beta1 = beta_of(&a1)?;
            let px_bound = if beta1 > 0.0 {
                let bound = ((params.l as f64 + phi) / tau_min) / (-2.0 * beta1 * re1);
                if px_hi > bound + 1e-8 {
                    return Err(Error::Numerical(format!(
                        "mode {}: λ_max(P_x) = {:.6} violates the proof bound {:.6}",
                        p + 1,
                        px_hi,
                        bound
                    )));
                }
                Some(bound)
            } else {
                None
            };
            let px_res = (a1.transpose() * &px + &px * &a1 + &q_x).norm();
            let pxp_res = (a2.transpose() * &pxp + &pxp * &a2 + &q_xp).norm();
            let evidence = TheoremEvidence {
                px_lambda_max: px_hi,
                px_lambda_min: px_lo,
                px_bound,
                pxp_lambda_max: pxp_hi,
                pxp_lambda_min: pxp_lo,
                px_residual: px_res,
                pxp_residual: pxp_res,
            };

            // Operative geometric family. Scaled-identity members are
            // preferred: the jump condition between identity families
            // reduces to the pure ramp ratio, with no shape mismatch. They
            // are admissible when the closed loop is dissipative relative to
            // η; otherwise fall back to the mode's own Lyapunov shape, whose
            // ramp tolerates l(γ-1)/τ up to η - η̃ + 1/λ_max(P).
            if 2.0 * lambda_r >= params.eta {
                return Err(Error::Numerical(format!(
                    "mode {}: 2 Re λ_r = {:.4} not below η = {:.4}",
                    p + 1,
                    2.0 * lambda_r,
                    params.eta
                )));
            }
            let sym_max = linalg::sym_lambda_max(&(&mode + mode.transpose()))? / 2.0;
            let (base, ramp_rate, eta_tilde) = if params.eta - 2.0 * sym_max > 0.05 {
                let b = 0.95 * (params.eta - 2.0 * sym_max);
                (Mat::identity(total, total), b, 2.0 * sym_max)
            } else {
                let eta_tilde = 2.0 * lambda_r + 0.05 * (params.eta - 2.0 * lambda_r);
                let m = &mode - Mat::identity(total, total) * (eta_tilde / 2.0);
                let base = linalg::lyapunov_solve(&m, &Mat::identity(total, total))?;
                let base_hi = linalg::sym_lambda_max(&base)?;
                let b = 0.9 * (params.eta - eta_tilde + 1.0 / base_hi);
                (base, b, eta_tilde)
            };
            let gamma = 1.0 + ramp_rate * tau_min / params.l as f64;
            let base_hi = linalg::sym_lambda_max(&base)?;
            let scale = 0.99 / (gamma.powi(l as i32) * base_hi);
            let mut matrices = Vec::with_capacity(l + 1);
            for i in 0..=l {
                let pi = &base * (scale * gamma.powi(i as i32));
                box_check(&pi, &format!("mode {} P_{{p,{}}}", p + 1, i))?;
                matrices.push(pi);
            }
            Ok(PFamily { matrices, gamma, eta_tilde, evidence: Some(evidence) })
        }
    }
}

/// Largest eigenvalues of the symmetrized discretized inequalities for one
/// mode; every returned value must be below [`LMI_MARGIN_TOL`] to pass.
///
/// Unstable route: both inequality shapes for each interval `i < l`.
/// Stable route: the single decay inequality for each family member.
pub fn check_discretized_lmis(
    a_p: &Mat,
    l: u32,
    eta: f64,
    tau_min: f64,
    family: &PFamily,
    class: ModeClass,
) -> Result<Vec<f64>> {
    let l = l as usize;
    if family.matrices.len() != l + 1 {
        return Err(Error::Dimension(format!(
            "family has {} members for l = {}",
            family.matrices.len(),
            l
        )));
    }
    let mut margins = Vec::new();
    match class {
        ModeClass::Unstable => {
            for i in 0..l {
                let pi = &family.matrices[i];
                let pi1 = &family.matrices[i + 1];
                let ramp = (pi1 - pi) * (l as f64 / tau_min);
                let lhs_i = a_p.transpose() * pi + pi * a_p + &ramp - pi * eta;
                margins.push(linalg::sym_lambda_max(&lhs_i)?);
                let lhs_i1 = a_p.transpose() * pi1 + pi1 * a_p + &ramp - pi1 * eta;
                margins.push(linalg::sym_lambda_max(&lhs_i1)?);
            }
        }
        ModeClass::Stable => {
            for pi in &family.matrices {
                let lhs = a_p.transpose() * pi + pi * a_p - pi * eta;
                margins.push(linalg::sym_lambda_max(&lhs)?);
            }
        }
    }
    Ok(margins)
}

/// Minimal feasible jump factors between all ordered mode pairs.
///
/// `mu[q][p]` is the largest generalized eigenvalue of
/// `(P_{q,0}, P_{p,l_p})`: the smallest μ with `P_{q,0} ⪯ μ P_{p,l_p}`.
pub fn mu_feasibility(families: &[PFamily]) -> Result<(Vec<Vec<Option<f64>>>, Vec<f64>)> {
    let m = families.len();
    let mut table = vec![vec![None; m]; m];
    let mut per_mode = vec![0.0f64; m];
    for q in 0..m {
        for p in 0..m {
            if p == q {
                continue;
            }
            let p_q0 = &families[q].matrices[0];
            let p_pl = families[p].matrices.last().expect("nonempty family");
            let mu = linalg::gen_eig_max(p_q0, p_pl)?;
            table[q][p] = Some(mu);
            per_mode[q] = per_mode[q].max(mu);
        }
    }
    Ok((table, per_mode))
}

/// Certified dwell window per mode from the given jump factor and rate.
///
/// Unstable modes get `[tau_min, (-log μ)/η - slack]`; stable modes get
/// `[max(tau_min, -log μ / η + slack), ∞)`.
pub fn tddt_window(
    mu: f64,
    eta: f64,
    tau_min_requested: f64,
) -> Result<TauWindow> {
    if eta == 0.0 {
        return Err(Error::Domain("tddt_window: eta must be nonzero".into()));
    }
    const SLACK: f64 = 1e-9;
    if eta > 0.0 {
        let tau_max = -mu.ln() / eta - SLACK;
        if tau_max < tau_min_requested {
            Ok(TauWindow::Empty)
        } else {
            Ok(TauWindow::Bounded { tau_min: tau_min_requested, tau_max })
        }
    } else {
        let lower = (-mu.ln() / eta + SLACK).max(tau_min_requested);
        Ok(TauWindow::Unbounded { tau_min: lower })
    }
}

/// Actual spectral class of each mode under installed gains: stable when
/// `Re λ_r(A_p) < -1e-9`.
pub fn classify_modes(model: &SwitchedModel) -> Result<Vec<ModeClass>> {
    (0..model.n_modes())
        .map(|p| {
            let re = linalg::max_re_eig(&model.mode_matrix(p)?)?;
            Ok(if re < -1e-9 { ModeClass::Stable } else { ModeClass::Unstable })
        })
        .collect()
}

/// Route chosen by the parameter signs: `eta > 0` follows the unstable-mode
/// machinery, `eta < 0` the stable-mode corollary.
pub fn routes(model: &SwitchedModel) -> Vec<ModeClass> {
    model
        .params
        .modes
        .iter()
        .map(|m| if m.eta > 0.0 { ModeClass::Unstable } else { ModeClass::Stable })
        .collect()
}

struct Attempt {
    records: Vec<ModeRecord>,
    families: Vec<PFamily>,
    beta_final: f64,
    beta_history: Vec<f64>,
    failure: Option<String>,
    mu_required: Vec<Vec<Option<f64>>>,
    mu_mode: Vec<f64>,
    tau_windows: Vec<TauWindow>,
}

/// Runs the full pipeline for leader set `s` at the model's parameters.
///
/// Gains escalate through [`DEPTH_SCHEDULE`] until the certificate passes;
/// the first passing attempt (or the deepest failing one) is returned.
pub fn full_certificate(model: &SwitchedModel, s: &BTreeSet<usize>) -> Result<Certificate> {
    // Primary attempt: per-mode gain plans chosen for the steepest healthy
    // ramps (the jump condition feeds on them). If that fails, walk the
    // uniform schedule; whatever the deepest attempt still reports is the
    // genuine obstruction.
    let best = best_plans(model, s)?;
    let primary = certificate_with_plans(model, s, &best)?;
    if primary.verdict.passed() {
        return Ok(primary);
    }
    for &depth in DEPTH_SCHEDULE.iter() {
        let plans = vec![GainPlan { depth, boost: 1.0 }; model.n_modes()];
        let cert = certificate_with_plans(model, s, &plans)?;
        if cert.verdict.passed() {
            return Ok(cert);
        }
    }
    // Nothing passed: the primary attempt used the healthiest gains, so its
    // failure names the real obstruction.
    Ok(primary)
}

/// How to realize the gain of one mode: extra stabilization depth on the
/// eigenvalue target, plus a scalar multiple applied beyond the minimal
/// stabilizing gain. The boost sharpens the symmetric part (which the jump
/// factors feed on) once the rightmost eigenvalue saturates at the follower
/// spectrum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainPlan {
    pub depth: f64,
    pub boost: f64,
}

const BOOSTS: [f64; 5] = [1.0, 2.0, 4.0, 8.0, 16.0];

/// For each mode, a gain plan maximizing the dissipativity budget
/// `η - 2 λ_max(sym A_p)` over the depth schedule and boost grid, subject to
/// the mode staying healthy (structured gain, margins, β). Falls back to
/// depth zero, no boost.
pub fn best_plans(model: &SwitchedModel, s: &BTreeSet<usize>) -> Result<Vec<GainPlan>> {
    let route = routes(model);
    let mut plans = vec![GainPlan { depth: 0.0, boost: 1.0 }; model.n_modes()];
    for p in 0..model.n_modes() {
        let base_shift = match route[p] {
            ModeClass::Unstable => model.half_shift(p),
            ModeClass::Stable => -model.params.modes[p].eta / 2.0,
        };
        let mut best_score = f64::NEG_INFINITY;
        let mut had_healthy = false;
        for &depth in DEPTH_SCHEDULE.iter() {
            let (gain, _, structured) = match synthesize_gain(model, s, p, base_shift + depth) {
                Ok(v) => v,
                Err(Error::SynthesisImpossible { .. }) => break,
                Err(e) => return Err(e),
            };
            if !structured {
                break;
            }
            let kappa = match gain {
                Gain::Scalar(k) => k,
                Gain::Full(_) => unreachable!("structured gains are scalar"),
            };
            let mut any_healthy = false;
            for &boost in BOOSTS.iter() {
                let candidate = Gain::Scalar(kappa * boost);
                let gained = model
                    .with_leaders(s.clone())
                    .with_gains(fill_gain(model.n_modes(), p, candidate));
                // the boosted gain must still meet the depth target
                let shifted = gained.mode_matrix(p)?
                    + Mat::identity(model.total_dim(), model.total_dim())
                        * (base_shift + depth);
                if linalg::max_re_eig(&shifted)? >= -SYNTH_MARGIN {
                    continue;
                }
                if !mode_depth_healthy(&gained, p, route[p]).unwrap_or(false) {
                    continue;
                }
                any_healthy = true;
                let sym_max =
                    linalg::sym_lambda_max(&(gained.mode_matrix(p)? + gained.mode_matrix(p)?.transpose()))?
                        / 2.0;
                let score = model.params.modes[p].eta - 2.0 * sym_max;
                if score > best_score {
                    best_score = score;
                    plans[p] = GainPlan { depth, boost };
                }
            }
            if !any_healthy && had_healthy {
                break;
            }
            had_healthy = had_healthy || any_healthy;
        }
    }
    Ok(plans)
}

fn fill_gain(n_modes: usize, p: usize, gain: Gain) -> Vec<Gain> {
    let mut gains = vec![Gain::Scalar(0.0); n_modes];
    gains[p] = gain;
    gains
}

/// Mode-local health at a candidate gain: the second margin holds, and on
/// the unstable route the computed β admits a setting at which the first
/// margin also holds.
fn mode_depth_healthy(gained: &SwitchedModel, p: usize, route: ModeClass) -> Result<bool> {
    match route {
        ModeClass::Stable => {
            let lam = linalg::max_re_eig(&gained.mode_matrix(p)?)?;
            Ok(lam - gained.params.modes[p].eta / 2.0 < 0.0)
        }
        ModeClass::Unstable => {
            let (_, m7, beta) = match check_margins(gained, p, gained.params.beta_setting) {
                Ok(v) => v,
                Err(Error::Singular(_)) => return Ok(false),
                Err(e) => return Err(e),
            };
            if m7 >= 0.0 || beta < 0.12 {
                return Ok(false);
            }
            // the β loop can only settle on grid points <= min(β, 0.5)
            let setting = (beta.min(0.5) * 10.0).floor() / 10.0;
            if setting < 0.1 {
                return Ok(false);
            }
            let (m6, _, _) = check_margins(gained, p, setting)?;
            Ok(m6 < 0.0)
        }
    }
}

/// Single-depth certification with one shared depth for every mode.
pub fn certificate_at_depth(
    model: &SwitchedModel,
    s: &BTreeSet<usize>,
    depth: f64,
) -> Result<Certificate> {
    let plans = vec![GainPlan { depth, boost: 1.0 }; model.n_modes()];
    certificate_with_plans(model, s, &plans)
}

/// Certification with an explicit per-mode gain depth vector, minimal gains.
pub fn certificate_at_depths(
    model: &SwitchedModel,
    s: &BTreeSet<usize>,
    depths: &[f64],
) -> Result<Certificate> {
    let plans: Vec<GainPlan> =
        depths.iter().map(|&depth| GainPlan { depth, boost: 1.0 }).collect();
    certificate_with_plans(model, s, &plans)
}

/// Certification with explicit per-mode gain plans.
pub fn certificate_with_plans(
    model: &SwitchedModel,
    s: &BTreeSet<usize>,
    plans: &[GainPlan],
) -> Result<Certificate> {
    let attempt = certify_at_depth(model, s, plans)?;
    let verdict = match attempt.failure {
        None => Verdict::Pass,
        Some(cond) => Verdict::Fail(cond),
    };
    Ok(Certificate {
        modes: attempt.records,
        mu_required: attempt.mu_required,
        mu_mode: attempt.mu_mode,
        tau_windows: attempt.tau_windows,
        beta_setting_final: attempt.beta_final,
        beta_history: attempt.beta_history,
        depth_used: plans.iter().map(|pl| pl.depth).fold(0.0, f64::max),
        verdict,
        families: attempt.families,
    })
}

fn certify_at_depth(
    model: &SwitchedModel,
    s: &BTreeSet<usize>,
    plans: &[GainPlan],
) -> Result<Attempt> {
    let m = model.n_modes();
    let route = routes(model);
    let mut failure: Option<String> = None;

    // Stage 1: gains.
    let mut gains = Vec::with_capacity(m);
    let mut structured = vec![true; m];
    for p in 0..m {
        let base_shift = match route[p] {
            ModeClass::Unstable => model.half_shift(p),
            ModeClass::Stable => -model.params.modes[p].eta / 2.0,
        };
        match synthesize_gain(model, s, p, base_shift + plans[p].depth) {
            Ok((gain, _achieved, is_structured)) => {
                structured[p] = is_structured;
                let gain = match (&gain, plans[p].boost) {
                    (Gain::Scalar(k), boost) if boost > 1.0 && *k > 0.0 => {
                        // keep the boost only when it still meets the target
                        let candidate = Gain::Scalar(k * boost);
                        let probe = model
                            .with_leaders(s.clone())
                            .with_gains(fill_gain(m, p, candidate.clone()));
                        let total = model.total_dim();
                        let shifted = probe.mode_matrix(p)?
                            + Mat::identity(total, total) * (base_shift + plans[p].depth);
                        if linalg::max_re_eig(&shifted)? < -SYNTH_MARGIN {
                            candidate
                        } else {
                            gain
                        }
                    }
                    _ => gain,
                };
                gains.push(gain);
            }
            Err(Error::SynthesisImpossible { mode, eigenvalue }) => {
                if failure.is_none() {
                    failure = Some(format!("synthesis mode {} ({})", mode, eigenvalue));
                }
                gains.push(Gain::Scalar(0.0));
            }
            Err(e) => return Err(e),
        }
    }
    let gained = model.with_leaders(s.clone()).with_gains(gains.clone());

    // Stage 2: margins and β.
    let mut margin6 = vec![None; m];
    let mut margin7 = vec![0.0; m];
    let mut betas = vec![None; m];
    let mut lambda_closed = vec![0.0; m];
    let mut beta_min: Option<f64> = None;
    for p in 0..m {
        let mode = gained.mode_matrix(p)?;
        lambda_closed[p] = linalg::max_re_eig(&mode)?;
        match route[p] {
            ModeClass::Unstable => {
                match check_margins(&gained, p, gained.params.beta_setting) {
                    Ok((m6, m7, beta)) => {
                        margin6[p] = Some(m6);
                        margin7[p] = m7;
                        betas[p] = Some(beta);
                        beta_min = Some(beta_min.map_or(beta, |b: f64| b.min(beta)));
                    }
                    Err(Error::Singular(msg)) => {
                        if failure.is_none() {
                            failure = Some(format!("beta mode {} ({})", p + 1, msg));
                        }
                    }
                    Err(e) => return Err(e),
                }
            }
            ModeClass::Stable => {
                margin7[p] = lambda_closed[p] - gained.params.modes[p].eta / 2.0;
            }
        }
    }

    // β verification against the setting (only when unstable modes exist).
    let (beta_final, beta_history) = match beta_min {
        Some(bmin) => {
            let (accepted, history) = beta_verification_loop(bmin, gained.params.beta_setting);
            match accepted {
                Some(setting) => (setting, history),
                None => {
                    if failure.is_none() {
                        failure = Some(format!(
                            "beta verification (computed {:.4} below floor 0.1)",
                            bmin
                        ));
                    }
                    (0.1, history)
                }
            }
        }
        None => (gained.params.beta_setting, vec![gained.params.beta_setting]),
    };

    // Re-evaluate margin 6 at the accepted setting and test signs.
    for p in 0..m {
        match route[p] {
            ModeClass::Unstable => {
                if betas[p].is_some() {
                    let (m6, m7, _) = check_margins(&gained, p, beta_final)?;
                    margin6[p] = Some(m6);
                    margin7[p] = m7;
                    if failure.is_none() && m6 >= 0.0 {
                        failure = Some(format!("(6) mode {}", p + 1));
                    }
                    if failure.is_none() && m7 >= 0.0 {
                        failure = Some(format!("(7) mode {}", p + 1));
                    }
                }
            }
            ModeClass::Stable => {
                if failure.is_none() && margin7[p] >= 0.0 {
                    failure = Some(format!("(18-margin) mode {}", p + 1));
                }
            }
        }
    }

    // Stage 3: families.
    let mut families = Vec::with_capacity(m);
    for p in 0..m {
        match construct_p_family(&gained, p, route[p]) {
            Ok(f) => families.push(f),
            Err(e) => {
                if failure.is_none() {
                    failure = Some(format!("P-family mode {} ({})", p + 1, e));
                }
                // placeholder keeps indices aligned; excluded from pass
                families.push(PFamily {
                    matrices: vec![
                        Mat::identity(gained.total_dim(), gained.total_dim()) * 0.5;
                        gained.params.modes[p].l as usize + 1
                    ],
                    gamma: 1.0,
                    eta_tilde: 0.0,
                    evidence: None,
                });
            }
        }
    }

    // Stage 4: discretized inequalities.
    let mut residuals = vec![Vec::new(); m];
    for p in 0..m {
        let a_p = gained.mode_matrix(p)?;
        let margins = check_discretized_lmis(
            &a_p,
            gained.params.modes[p].l,
            gained.params.modes[p].eta,
            gained.tddt.tau_min(p),
            &families[p],
            route[p],
        )?;
        if failure.is_none() {
            if let Some((i, &worst)) = margins
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            {
                if worst >= LMI_MARGIN_TOL {
                    let cond = match route[p] {
                        ModeClass::Unstable => if i % 2 == 0 { "(10)" } else { "(11)" },
                        ModeClass::Stable => "(18)",
                    };
                    failure = Some(format!("{} mode {} index {}", cond, p + 1, i / 2));
                }
            }
        }
        residuals[p] = margins;
    }

    // Stage 5: jump factors.
    let (mu_required, mu_mode) = if m > 1 {
        mu_feasibility(&families)?
    } else {
        (vec![vec![None]], vec![0.0])
    };
    for q in 0..m {
        if failure.is_none() && m > 1 && mu_mode[q] > gained.params.modes[q].mu + 1e-9 {
            failure = Some(format!(
                "(16) mode {} needs mu >= {:.4}, given {:.4}",
                q + 1,
                mu_mode[q],
                gained.params.modes[q].mu
            ));
        }
    }

    // Stage 6: windows from the given jump factors.
    let mut tau_windows = Vec::with_capacity(m);
    for p in 0..m {
        let w = tddt_window(
            gained.params.modes[p].mu,
            gained.params.modes[p].eta,
            gained.tddt.tau_min(p),
        )?;
        let (lo, hi) = gained.tddt.windows[p];
        if failure.is_none() && !w.contains(lo, hi) {
            failure = Some(format!("(17) mode {}", p + 1));
        }
        tau_windows.push(w);
    }

    let records = (0..m)
        .map(|p| ModeRecord {
            mode: p + 1,
            mode_class: route[p],
            margin_6: margin6[p],
            margin_7: margin7[p],
            beta_computed: betas[p],
            lambda_r_closed: lambda_closed[p],
            lambda_r_shifted_open: linalg::max_re_eig(&gained.shifted_open_loop(p))
                .unwrap_or(f64::NAN),
            gain: gains[p].clone(),
            gain_structured: structured[p],
            p_family_residuals: residuals[p].clone(),
        })
        .collect();

    Ok(Attempt {
        records,
        families,
        beta_final,
        beta_history,
        failure,
        mu_required,
        mu_mode,
        tau_windows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Digraph;
    use crate::sysmodel::{ModeParams, TddtSpec, TheoremParams};
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn one_mode_model(a: Mat, graph: Digraph, l: u32, mu: f64, eta: f64, tau: (f64, f64)) -> SwitchedModel {
        SwitchedModel::new(
            a,
            vec![graph],
            TddtSpec::new(vec![tau]).unwrap(),
            TheoremParams {
                modes: vec![ModeParams { l, mu, eta }],
                phi: 1e-3,
                beta_setting: 0.5,
            },
        )
        .unwrap()
    }

    #[test]
    fn scalar_gain_matches_closed_form_for_single_agent() {
        // Single agent, A = a > 0, S = {1}: A_p(κ) + shift = a - κ + shift, so
        // the minimal κ is a + shift.
        let a = 0.8;
        let shift = 0.3;
        let model = one_mode_model(
            Mat::from_element(1, 1, a),
            Digraph::new(1, &[]).unwrap(),
            2,
            0.05,
            3.0,
            (1.0, 1.2),
        );
        let s: BTreeSet<usize> = [1].into_iter().collect();
        let (gain, achieved, structured) = synthesize_gain(&model, &s, 0, shift).unwrap();
        assert!(structured);
        match gain {
            Gain::Scalar(kappa) => {
                assert!((kappa - (a + shift)).abs() < 1e-4, "kappa = {}", kappa);
                assert!(achieved < -SYNTH_MARGIN);
            }
            _ => panic!("expected a scalar gain"),
        }
    }

    #[test]
    fn hurwitz_mode_needs_no_gain() {
        let model = one_mode_model(
            Mat::from_element(1, 1, -2.0),
            Digraph::new(1, &[]).unwrap(),
            2,
            0.05,
            3.0,
            (1.0, 1.2),
        );
        let s: BTreeSet<usize> = [1].into_iter().collect();
        let (gain, _, structured) = synthesize_gain(&model, &s, 0, 0.5).unwrap();
        assert!(structured);
        assert_eq!(gain, Gain::Scalar(0.0));
    }

    #[test]
    fn synthesis_impossible_without_coverage() {
        // Agent 2 is unreachable from the leader in an edgeless graph.
        let model = one_mode_model(
            Mat::from_element(1, 1, 0.5),
            Digraph::new(2, &[]).unwrap(),
            2,
            0.05,
            3.0,
            (1.0, 1.2),
        );
        let s: BTreeSet<usize> = [1].into_iter().collect();
        let err = synthesize_gain(&model, &s, 0, 0.1).unwrap_err();
        assert!(matches!(err, Error::SynthesisImpossible { mode: 1, .. }));
    }

    #[test]
    fn margins_flip_sign_exactly_at_threshold() {
        // A_p = -c I: Re λ_r(A1) = -c - (l/τ + η)/2, so margin 6 crosses zero
        // when c = (l+φ)/(2βτ) - (l/τ + η)/2.
        let l = 2u32;
        let eta = 3.0;
        let tau = 1.0;
        let phi = 1e-3;
        let beta = 0.5;
        let threshold = (l as f64 + phi) / (2.0 * beta * tau) - 0.5 * (l as f64 / tau + eta);
        for (c, expect_neg) in [(threshold + 0.05, true), (threshold - 0.05, false)] {
            let model = one_mode_model(
                Mat::from_element(1, 1, -c),
                Digraph::new(1, &[]).unwrap(),
                l,
                0.05,
                eta,
                (tau, 1.2),
            )
            .with_gains(vec![Gain::Scalar(0.0)]);
            let (m6, _, beta_c) = check_margins(&model, 0, beta).unwrap();
            assert_eq!(m6 < 0.0, expect_neg, "c = {}, margin = {}", c, m6);
            assert_relative_eq!(beta_c, 1.0, epsilon = 1e-9); // symmetric mode
        }
    }

    #[test]
    fn proposition_two_implication_with_beta_one() {
        // With β set to 1 and φ < l, margin 7 < 0 implies margin 6 < 0.
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..20 {
            let c = rng.gen_range(0.2..3.0);
            let eta = rng.gen_range(2.2..4.0);
            let model = one_mode_model(
                Mat::from_element(1, 1, -c),
                Digraph::new(1, &[]).unwrap(),
                2,
                0.05,
                eta,
                (1.0, 1.3),
            )
            .with_gains(vec![Gain::Scalar(0.0)]);
            let (m6, m7, _) = check_margins(&model, 0, 1.0).unwrap();
            if m7 < 0.0 {
                assert!(m6 < 0.0, "margin 7 = {} but margin 6 = {}", m7, m6);
            }
        }
    }

    #[test]
    fn beta_loop_acceptance_paths() {
        // computed high: accept immediately at the original setting
        let (accepted, history) = beta_verification_loop(1.0, 0.5);
        assert_eq!(accepted, Some(0.5));
        assert_eq!(history, vec![0.5]);

        // computed 0.55 > 0.5: accept without reduction
        let (accepted, _) = beta_verification_loop(0.55, 0.5);
        assert_eq!(accepted, Some(0.5));

        // computed 0.45 < setting 0.5: one reduction to 0.4
        let (accepted, history) = beta_verification_loop(0.45, 0.5);
        assert_eq!(accepted, Some(0.4));
        assert_eq!(history, vec![0.5, 0.4]);

        // hopeless: floor reached
        let (accepted, history) = beta_verification_loop(0.01, 0.3);
        assert_eq!(accepted, None);
        assert_eq!(*history.last().unwrap(), 0.1);
    }

    fn certified_single_mode_model() -> (SwitchedModel, BTreeSet<usize>) {
        // Two agents, edge 1 -> 2, leader {1}; mildly unstable dynamics.
        let model = one_mode_model(
            Mat::from_element(1, 1, 0.2),
            Digraph::new(2, &[(1, 2)]).unwrap(),
            2,
            0.05,
            2.6,
            (1.0, 1.1),
        );
        let s: BTreeSet<usize> = [1].into_iter().collect();
        (model, s)
    }

    #[test]
    fn family_construction_is_valid_and_lmis_hold() {
        let (model, s) = certified_single_mode_model();
        let (gain, _, _) = synthesize_gain(&model, &s, 0, model.half_shift(0) + 0.5).unwrap();
        let gained = model.with_leaders(s).with_gains(vec![gain]);
        let fam = construct_p_family(&gained, 0, ModeClass::Unstable).unwrap();
        assert_eq!(fam.matrices.len(), 3);
        assert!(fam.gamma > 1.0);
        for p in &fam.matrices {
            let vals = linalg::sym_eigenvalues(p).unwrap();
            assert!(vals[0] > 1e-10 && *vals.last().unwrap() < 1.0 - 1e-10);
        }
        let ev = fam.evidence.as_ref().unwrap();
        assert!(ev.px_lambda_max < 1.0, "λ_max(P_x) = {}", ev.px_lambda_max);
        if let Some(bound) = ev.px_bound {
            assert!(ev.px_lambda_max <= bound + 1e-8);
        }
        assert!(ev.px_residual < 1e-8 * 10.0);
        let a_p = gained.mode_matrix(0).unwrap();
        let margins =
            check_discretized_lmis(&a_p, 2, 2.6, 1.0, &fam, ModeClass::Unstable).unwrap();
        for m in &margins {
            assert!(*m < LMI_MARGIN_TOL, "LMI margin {}", m);
        }
    }

    #[test]
    fn evidence_endpoints_for_l_equal_one() {
        // With l = 1, the theorem's constructive family is just the two fixed
        // Lyapunov solutions; verify both are computed and inside the box.
        let model = one_mode_model(
            Mat::from_element(1, 1, 0.1),
            Digraph::new(2, &[(1, 2)]).unwrap(),
            1,
            0.2,
            1.8,
            (1.0, 1.05),
        );
        let s: BTreeSet<usize> = [1].into_iter().collect();
        let (gain, _, _) = synthesize_gain(&model, &s, 0, model.half_shift(0) + 0.5).unwrap();
        let gained = model.with_leaders(s).with_gains(vec![gain]);
        let fam = construct_p_family(&gained, 0, ModeClass::Unstable).unwrap();
        assert_eq!(fam.matrices.len(), 2);
        let ev = fam.evidence.unwrap();
        assert!(ev.px_lambda_max < 1.0 && ev.px_lambda_min > 0.0);
        assert!(ev.pxp_lambda_max < 1.0 && ev.pxp_lambda_min > 0.0);
    }

    #[test]
    fn lyapunov_linearity_gives_proportional_endpoints() {
        // Same matrix, scaled right-hand sides: solutions are proportional
        // with the same ratio (τ = 1 makes it (l+φ)/φ).
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let h = Mat::from_fn(4, 4, |_, _| rng.gen_range(-1.0..1.0));
        let m = &h - Mat::identity(4, 4) * (linalg::max_re_eig(&h).unwrap() + 1.0);
        let l = 2.0;
        let phi = 1e-3;
        let p_big = linalg::lyapunov_solve(&m, &(Mat::identity(4, 4) * (l + phi))).unwrap();
        let p_small = linalg::lyapunov_solve(&m, &(Mat::identity(4, 4) * phi)).unwrap();
        let ratio = (l + phi) / phi;
        assert!((p_big - p_small * ratio).norm() < 1e-8);
    }

    #[test]
    fn scalar_lmi_margin_closed_form() {
        // A_p = -c I with a constant family P = ½ I: margin is -c - η/2.
        let c = 1.5;
        let eta = 0.8;
        let a_p = Mat::identity(3, 3) * -c;
        let fam = PFamily {
            matrices: vec![Mat::identity(3, 3) * 0.5; 3],
            gamma: 1.0,
            eta_tilde: 0.0,
            evidence: None,
        };
        let margins = check_discretized_lmis(&a_p, 2, eta, 1.0, &fam, ModeClass::Unstable).unwrap();
        for m in margins {
            assert_relative_eq!(m, -c - eta / 2.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn perturbed_family_fails_the_lmis() {
        let (model, s) = certified_single_mode_model();
        let (gain, _, _) = synthesize_gain(&model, &s, 0, model.half_shift(0) + 0.5).unwrap();
        let gained = model.with_leaders(s).with_gains(vec![gain]);
        let mut fam = construct_p_family(&gained, 0, ModeClass::Unstable).unwrap();
        // Blow up the last member: the ramp term turns strongly positive.
        let last = fam.matrices.len() - 1;
        fam.matrices[last] = &fam.matrices[last] * 50.0;
        let a_p = gained.mode_matrix(0).unwrap();
        let margins =
            check_discretized_lmis(&a_p, 2, 2.6, 1.0, &fam, ModeClass::Unstable).unwrap();
        assert!(margins.iter().any(|&m| m > 0.0), "margins {:?}", margins);
    }

    #[test]
    fn mu_for_equal_and_scaled_families() {
        let base = PFamily {
            matrices: vec![Mat::identity(3, 3) * 0.5; 3],
            gamma: 1.0,
            eta_tilde: 0.0,
            evidence: None,
        };
        let (table, per_mode) = mu_feasibility(&[base.clone(), base.clone()]).unwrap();
        assert_relative_eq!(table[0][1].unwrap(), 1.0, epsilon = 1e-10);
        assert_relative_eq!(per_mode[1], 1.0, epsilon = 1e-10);

        // P_{q,0} = ½ P_{p,l}: minimal μ = ½.
        let half = PFamily {
            matrices: vec![Mat::identity(3, 3) * 0.25; 3],
            gamma: 1.0,
            eta_tilde: 0.0,
            evidence: None,
        };
        let (table, _) = mu_feasibility(&[base, half]).unwrap();
        assert_relative_eq!(table[1][0].unwrap(), 0.5, epsilon = 1e-10);
    }

    #[test]
    fn mu_matches_grid_bisection_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        for _ in 0..5 {
            let h1 = Mat::from_fn(3, 3, |_, _| rng.gen_range(-1.0..1.0));
            let h2 = Mat::from_fn(3, 3, |_, _| rng.gen_range(-1.0..1.0));
            let p_q0 = &h1 * h1.transpose() * 0.05 + Mat::identity(3, 3) * 0.01;
            let p_pl = &h2 * h2.transpose() * 0.05 + Mat::identity(3, 3) * 0.01;
            let fam_q = PFamily {
                matrices: vec![p_q0.clone(), p_q0.clone()],
                gamma: 1.0,
                eta_tilde: 0.0,
                evidence: None,
            };
            let fam_p = PFamily {
                matrices: vec![p_pl.clone(), p_pl.clone()],
                gamma: 1.0,
                eta_tilde: 0.0,
                evidence: None,
            };
            let (table, _) = mu_feasibility(&[fam_p, fam_q]).unwrap();
            let mu = table[1][0].unwrap();
            // grid search refined by bisection
            let feasible =
                |m: f64| linalg::sym_lambda_max(&(&p_q0 - &p_pl * m)).unwrap() <= 1e-12;
            let mut lo = 0.0;
            let mut hi = 1.0;
            while !feasible(hi) {
                hi *= 2.0;
            }
            while hi - lo > 1e-6 {
                let mid = 0.5 * (lo + hi);
                if feasible(mid) {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            assert!((mu - hi).abs() < 1e-5, "mu {} vs oracle {}", mu, hi);
        }
    }

    #[test]
    fn window_closed_forms() {
        // μ = e^{-2}, η = 2 → τ_max = 1 - slack
        match tddt_window((-2.0f64).exp(), 2.0, 0.3).unwrap() {
            TauWindow::Bounded { tau_max, .. } => {
                assert!((tau_max - 1.0).abs() < 1e-8);
            }
            w => panic!("unexpected window {:?}", w),
        }
        // μ >= 1 on an unstable mode: empty window
        assert_eq!(tddt_window(1.2, 2.0, 0.3).unwrap(), TauWindow::Empty);
        // stable mode: lower bound -log μ / η
        match tddt_window(3.0, -1.0, 0.1).unwrap() {
            TauWindow::Unbounded { tau_min } => {
                assert!((tau_min - 3.0f64.ln()).abs() < 1e-6);
            }
            w => panic!("unexpected window {:?}", w),
        }
    }

    #[test]
    fn windows_match_reference_parameter_sets() {
        let cases = [
            (0.03, 2.0, 1.74, -(0.03f64.ln()) / 2.0),
            (0.02, 4.2, 0.92, -(0.02f64.ln()) / 4.2),
            (0.04, 2.8, 1.13, -(0.04f64.ln()) / 2.8),
        ];
        for (mu, eta, published_hi, expected) in cases {
            match tddt_window(mu, eta, 0.5).unwrap() {
                TauWindow::Bounded { tau_max, .. } => {
                    assert!((tau_max - expected).abs() < 1e-6);
                    assert!(tau_max >= published_hi, "{} < {}", tau_max, published_hi);
                }
                w => panic!("unexpected window {:?}", w),
            }
        }
    }

    #[test]
    fn window_condition_17_exact_sign() {
        for (mu, eta) in [(0.03, 2.0), (0.3, 1.1), (0.07, 3.3)] {
            if let TauWindow::Bounded { tau_max, .. } = tddt_window(mu, eta, 0.01).unwrap() {
                let lhs: f64 = (mu as f64).ln() + eta * tau_max;
                assert!(lhs < 0.0, "log μ + η τ_max = {}", lhs);
            } else {
                panic!("expected bounded window");
            }
        }
    }

    #[test]
    fn classification_matches_eigenvalue_signs() {
        let g = Digraph::new(1, &[]).unwrap();
        let model = SwitchedModel::new(
            Mat::from_element(1, 1, 0.5),
            vec![g.clone(), g],
            TddtSpec::new(vec![(1.0, 1.2), (1.0, 1.2)]).unwrap(),
            TheoremParams {
                modes: vec![
                    ModeParams { l: 2, mu: 0.05, eta: 3.0 },
                    ModeParams { l: 2, mu: 2.0, eta: -1.5 },
                ],
                phi: 1e-3,
                beta_setting: 0.5,
            },
        )
        .unwrap()
        .with_leaders([1].into_iter().collect())
        .with_gains(vec![Gain::Scalar(0.0), Gain::Scalar(1.5)]);
        let classes = classify_modes(&model).unwrap();
        assert_eq!(classes[0], ModeClass::Unstable); // a = 0.5, no gain
        assert_eq!(classes[1], ModeClass::Stable); // a - 1.5 = -1.0
        assert_eq!(routes(&model), vec![ModeClass::Unstable, ModeClass::Stable]);
    }

    #[test]
    fn full_certificate_passes_on_a_small_unstable_instance() {
        let (model, s) = certified_single_mode_model();
        let cert = full_certificate(&model, &s).unwrap();
        assert!(cert.verdict.passed(), "verdict {:?}", cert.verdict);
        assert_eq!(cert.modes.len(), 1);
        assert!(cert.modes[0].gain_structured);
        // recheck: margins recorded are negative, windows contain the request
        assert!(cert.modes[0].margin_6.unwrap() < 0.0);
        assert!(cert.modes[0].margin_7 < 0.0);
        assert!(cert.tau_windows[0].contains(1.0, 1.1));
        for r in &cert.modes[0].p_family_residuals {
            assert!(*r < LMI_MARGIN_TOL);
        }
    }

    #[test]
    fn full_certificate_stable_route_via_corollary() {
        // One stable-routed mode: η < 0, μ > 1; heavy gain drives the mode
        // below η/2.
        let model = one_mode_model(
            Mat::from_element(1, 1, -0.2),
            Digraph::new(2, &[(1, 2)]).unwrap(),
            2,
            1.5,
            -0.6,
            (1.2, 2.0),
        );
        let s: BTreeSet<usize> = [1].into_iter().collect();
        let cert = full_certificate(&model, &s).unwrap();
        assert!(cert.verdict.passed(), "verdict {:?}", cert.verdict);
        assert_eq!(cert.modes[0].mode_class, ModeClass::Stable);
        match cert.tau_windows[0] {
            TauWindow::Unbounded { tau_min } => assert!(tau_min <= 1.2),
            w => panic!("unexpected window {:?}", w),
        }
    }

    #[test]
    fn requested_window_beyond_certificate_fails_condition_17() {
        // μ = 0.5, η = 2.6 certifies τ_max ≈ 0.2666; requesting 1.1 fails.
        let model = one_mode_model(
            Mat::from_element(1, 1, 0.2),
            Digraph::new(2, &[(1, 2)]).unwrap(),
            2,
            0.5,
            2.6,
            (0.9, 1.1),
        );
        let s: BTreeSet<usize> = [1].into_iter().collect();
        let cert = full_certificate(&model, &s).unwrap();
        match &cert.verdict {
            Verdict::Fail(cond) => assert!(cond.contains("(17)"), "condition {}", cond),
            Verdict::Pass => panic!("expected failure"),
        }
    }

    #[test]
    fn certificate_failure_is_recorded_not_thrown() {
        // Leaderless unstable instance: synthesis impossible, recorded.
        let model = one_mode_model(
            Mat::from_element(1, 1, 0.4),
            Digraph::new(2, &[]).unwrap(),
            2,
            0.05,
            2.6,
            (1.0, 1.1),
        );
        let s: BTreeSet<usize> = BTreeSet::new();
        let cert = full_certificate(&model, &s).unwrap();
        match &cert.verdict {
            Verdict::Fail(cond) => assert!(cond.contains("synthesis"), "condition {}", cond),
            Verdict::Pass => panic!("expected failure"),
        }
    }
}
