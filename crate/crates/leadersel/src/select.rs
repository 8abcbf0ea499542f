//! Greedy leader-selection procedures and their optimality certificates.
//!
//! Both algorithms grow the leader set from the mandatory initial set (the
//! agents unreachable in the union graph) by adding the agent with the
//! largest marginal decrease of the metric. The first algorithm drives the
//! metric to zero and then certifies; the second tests the full certificate
//! at every intermediate set, which can stop earlier at the price of more
//! certification calls.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::certify::{full_certificate, Certificate};
use crate::graph::initial_leader_set;
use crate::spectral::{self, SpectralCache};
use crate::sysmodel::{Gain, SwitchedModel, TheoremParams};
use crate::{Error, Result};

/// Loop guard: the metric counts as zero below this.
pub const F_ZERO_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionStatus {
    Certified,
    UncertifiedBudget,
    NoneForTddt,
}

/// Outcome of a selection run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionReport {
    /// Chosen agents, selection order preserved (initial set first).
    pub leaders: Vec<usize>,
    /// Metric value after each addition, starting from the initial set.
    pub f_trace: Vec<f64>,
    /// Submodularity-ratio lower bound used for the optimality ratio.
    pub gamma_delta: f64,
    /// Whether `gamma_delta` came from the sparse principal-submatrix bound.
    pub gamma_delta_is_sparse: bool,
    /// Optimality ratio; absent when its preconditions fail.
    pub gamma_0: Option<f64>,
    pub k_used: usize,
    pub params_used: TheoremParams,
    pub status: SelectionStatus,
    /// Size accounting of the second algorithm: `|S̃| - |S_0| + 1`.
    pub xi: Option<usize>,
    /// Metric at the true empty set.
    pub f_empty_true: f64,
    /// Metric at the initial mandatory set (equals `f_trace[0]`).
    pub f_initial: f64,
    /// Modes whose shifted open-loop eigenvector matrix is ill-conditioned.
    pub ill_conditioned_modes: Vec<usize>,
}

/// Report plus the certificate of the final attempt.
#[derive(Debug, Clone)]
pub struct SelectionOutcome {
    pub report: SelectionReport,
    pub certificate: Option<Certificate>,
}

/// Marginal metric decrease for every agent outside `s`.
pub fn marginal_gains(model: &SwitchedModel, s: &BTreeSet<usize>) -> Result<BTreeMap<usize, f64>> {
    let cache = SpectralCache::new(model)?;
    marginal_gains_cached(model, &cache, s)
}

fn marginal_gains_cached(
    model: &SwitchedModel,
    cache: &SpectralCache,
    s: &BTreeSet<usize>,
) -> Result<BTreeMap<usize, f64>> {
    let f_s = cache.metric(model, s)?;
    let candidates: Vec<usize> = (1..=model.n_agents()).filter(|v| !s.contains(v)).collect();
    let gains: Vec<(usize, Result<f64>)> = candidates
        .par_iter()
        .map(|&v| {
            let mut sv = s.clone();
            sv.insert(v);
            (v, cache.metric(model, &sv).map(|f_sv| f_s - f_sv))
        })
        .collect();
    let mut out = BTreeMap::new();
    for (v, g) in gains {
        out.insert(v, g?);
    }
    Ok(out)
}

/// Greedy chain from the initial set until the metric vanishes or the agent
/// pool is exhausted. Ties break on the lowest agent index.
fn greedy_chain(
    model: &SwitchedModel,
    cache: &SpectralCache,
    s0: &BTreeSet<usize>,
) -> Result<(Vec<usize>, Vec<f64>, BTreeSet<usize>)> {
    let mut s = s0.clone();
    let mut order: Vec<usize> = s0.iter().copied().collect();
    let mut f = cache.metric(model, &s)?;
    let mut trace = vec![f];
    while f > F_ZERO_TOL && s.len() < model.n_agents() {
        let gains = marginal_gains_cached(model, cache, &s)?;
        let (&best, _) = gains
            .iter()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap().then(b.0.cmp(a.0)))
            .expect("candidates remain while |S| < N");
        s.insert(best);
        order.push(best);
        f = cache.metric(model, &s)?;
        trace.push(f);
    }
    Ok((order, trace, s))
}

/// Lower bound `k_min` on the leader budget: the number of mandatory
/// initial leaders, or 1 when every agent is reachable.
pub fn k_min(model: &SwitchedModel) -> Result<usize> {
    let s0 = initial_leader_set(model.topologies())?;
    Ok(if s0.is_empty() { 1 } else { s0.len() })
}

/// Optimality certificate: the ratio `γ_0 = log(f_empty/f_penultimate)/γ_Δ`
/// and whether `exp(-(k_min/k) γ_Δ) f_empty >= f_penultimate` holds.
pub fn optimality_certificate(
    f_empty: f64,
    f_penultimate: f64,
    gamma_delta: f64,
    k_min: usize,
    k: usize,
) -> Result<(f64, bool)> {
    if !(f_empty > f_penultimate && f_penultimate > 0.0) {
        return Err(Error::Domain(format!(
            "optimality certificate needs f_empty > f_penultimate > 0, got {} and {}",
            f_empty, f_penultimate
        )));
    }
    if !(gamma_delta > 0.0) {
        return Err(Error::Domain("gamma_delta must be positive".into()));
    }
    if k == 0 {
        return Err(Error::Domain("budget k must be positive".into()));
    }
    let gamma_0 = (f_empty / f_penultimate).ln() / gamma_delta;
    let bound_holds =
        (-(k_min as f64 / k as f64) * gamma_delta).exp() * f_empty >= f_penultimate - 1e-12;
    Ok((gamma_0, bound_holds))
}

/// The bound `γ_Δ = min_p λ_min(C̄_p, 2|S|)`, falling back to the global
/// bound when the sparse enumeration is infeasible. Returns the value, a
/// sparse flag, and nothing when even the Gram matrix is out of reach.
fn gamma_delta_bound(model: &SwitchedModel, s_len: usize) -> (f64, bool) {
    let mut best_sparse: Option<f64> = None;
    let mut best_global: Option<f64> = None;
    for p in 0..model.n_modes() {
        match spectral::submod_ratio_lower_bounds(model, p, 2 * s_len) {
            Ok((global, sparse)) => {
                best_global = Some(best_global.map_or(global, |b: f64| b.min(global)));
                if let Some(sp) = sparse {
                    best_sparse = Some(best_sparse.map_or(sp, |b: f64| b.min(sp)));
                } else {
                    best_sparse = None;
                }
            }
            Err(_) => return (0.0, false),
        }
    }
    match (best_sparse, best_global) {
        (Some(sp), _) => (sp, true),
        (None, Some(gl)) => (gl, false),
        (None, None) => (0.0, false),
    }
}

fn remark6_precondition(cache: &SpectralCache) -> bool {
    cache.modes.iter().any(|m| !m.unstable.is_empty())
}

fn assemble_report(
    model: &SwitchedModel,
    cache: &SpectralCache,
    order: Vec<usize>,
    trace: Vec<f64>,
    k: usize,
    params: TheoremParams,
    status: SelectionStatus,
    xi: Option<usize>,
    s0_len: usize,
) -> Result<SelectionReport> {
    let f_empty_true = cache.metric(model, &BTreeSet::new())?;
    let f_initial = trace[0];
    let (gamma_delta, sparse) = gamma_delta_bound(model, order.len().max(1));
    // The certificate formula uses the value the greedy loop started from.
    let f_empty_for_bound = f_initial;
    let kmin = if s0_len > 0 { s0_len } else { 1 };
    let gamma_0 = if trace.len() >= 2 {
        let f_pen = trace[trace.len() - 2];
        optimality_certificate(f_empty_for_bound, f_pen, gamma_delta, kmin, k)
            .ok()
            .map(|(g, _)| g)
    } else {
        None
    };
    Ok(SelectionReport {
        leaders: order,
        f_trace: trace,
        gamma_delta,
        gamma_delta_is_sparse: sparse,
        gamma_0,
        k_used: k,
        params_used: params,
        status,
        xi,
        f_empty_true,
        f_initial,
        ill_conditioned_modes: cache.ill_conditioned_modes(),
    })
}

/// Greedy selection to `f = 0`, then certification; retries the parameter
/// proposals in order (restarting the greedy pass, since the metric depends
/// on the parameters) until one certifies or the schedule is exhausted.
pub fn algorithm1(
    model: &SwitchedModel,
    k: usize,
    z_max: usize,
    proposals: &[TheoremParams],
) -> Result<SelectionOutcome> {
    if proposals.is_empty() {
        return Err(Error::Configuration("algorithm1 needs at least one parameter proposal".into()));
    }
    let s0 = initial_leader_set(model.topologies())?;
    let mut last: Option<(SelectionReport, Certificate)> = None;
    for (z, params) in proposals.iter().enumerate() {
        if z >= z_max {
            break;
        }
        params.validate(&model.tddt)?;
        let attempt_model = model.with_params(params.clone());
        let cache = SpectralCache::new(&attempt_model)?;
        if z == 0 && !remark6_precondition(&cache) {
            return Err(Error::DegenerateInstance(
                "every shifted mode is already stable; an empty leader set trivially zeroes the metric"
                    .into(),
            ));
        }
        let (order, trace, s) = greedy_chain(&attempt_model, &cache, &s0)?;
        let final_f = *trace.last().unwrap();
        if final_f > F_ZERO_TOL || s.len() > k {
            let report = assemble_report(
                &attempt_model,
                &cache,
                order,
                trace,
                k,
                params.clone(),
                SelectionStatus::NoneForTddt,
                None,
                s0.len(),
            )?;
            let cert = full_certificate(&attempt_model, &s)?;
            last = Some((report, cert));
            continue;
        }
        let cert = full_certificate(&attempt_model, &s)?;
        if cert.verdict.passed() {
            let report = assemble_report(
                &attempt_model,
                &cache,
                order,
                trace,
                k,
                params.clone(),
                SelectionStatus::Certified,
                None,
                s0.len(),
            )?;
            return Ok(SelectionOutcome { report, certificate: Some(cert) });
        }
        let report = assemble_report(
            &attempt_model,
            &cache,
            order,
            trace,
            k,
            params.clone(),
            SelectionStatus::NoneForTddt,
            None,
            s0.len(),
        )?;
        last = Some((report, cert));
    }
    let (report, cert) = last.expect("at least one proposal attempted");
    Ok(SelectionOutcome { report, certificate: Some(cert) })
}

/// Certificate-first greedy: tests the full certificate at every set size,
/// retrying the proposals at each size, and only grows the set when every
/// proposal fails. Exposes `ξ = |S̃| - |S_0| + 1`.
pub fn algorithm2(
    model: &SwitchedModel,
    k: usize,
    z_max: usize,
    proposals: &[TheoremParams],
) -> Result<SelectionOutcome> {
    if proposals.is_empty() {
        return Err(Error::Configuration("algorithm2 needs at least one parameter proposal".into()));
    }
    let s0 = initial_leader_set(model.topologies())?;
    let nominal = model.with_params(proposals[0].clone());
    let cache = SpectralCache::new(&nominal)?;
    if !remark6_precondition(&cache) {
        return Err(Error::DegenerateInstance(
            "every shifted mode is already stable; an empty leader set trivially zeroes the metric"
                .into(),
        ));
    }
    let mut s = s0.clone();
    let mut order: Vec<usize> = s0.iter().copied().collect();
    let mut trace = vec![cache.metric(&nominal, &s)?];
    let mut last_cert: Option<(Certificate, TheoremParams)> = None;
    loop {
        for (z, params) in proposals.iter().enumerate() {
            if z >= z_max {
                break;
            }
            params.validate(&model.tddt)?;
            let attempt_model = model.with_params(params.clone());
            let cert = full_certificate(&attempt_model, &s)?;
            let passed = cert.verdict.passed();
            last_cert = Some((cert, params.clone()));
            if passed {
                let xi = s.len() - s0.len() + 1;
                let report = assemble_report(
                    &attempt_model,
                    &cache,
                    order,
                    trace,
                    k,
                    params.clone(),
                    SelectionStatus::Certified,
                    Some(xi),
                    s0.len(),
                )?;
                let (cert, _) = last_cert.unwrap();
                return Ok(SelectionOutcome { report, certificate: Some(cert) });
            }
        }
        let f_now = *trace.last().unwrap();
        if f_now <= F_ZERO_TOL || s.len() >= model.n_agents() || s.len() >= k {
            // Nothing left to gain from more leaders (or no budget): the
            // obstruction is the dwell-time parameter set.
            let status = if f_now <= F_ZERO_TOL {
                SelectionStatus::NoneForTddt
            } else {
                SelectionStatus::UncertifiedBudget
            };
            let xi = s.len() - s0.len() + 1;
            let report = assemble_report(
                &nominal,
                &cache,
                order,
                trace,
                k,
                proposals[0].clone(),
                status,
                Some(xi),
                s0.len(),
            )?;
            return Ok(SelectionOutcome {
                report,
                certificate: last_cert.map(|(c, _)| c),
            });
        }
        let gains = marginal_gains_cached(&nominal, &cache, &s)?;
        let (&best, _) = gains
            .iter()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap().then(b.0.cmp(a.0)))
            .expect("candidates remain");
        s.insert(best);
        order.push(best);
        trace.push(cache.metric(&nominal, &s)?);
    }
}

/// Mean metric trace of uniformly random selection, averaged over `trials`.
/// Each trial grows the set from the initial leaders until the metric
/// vanishes or the budget is reached; shorter trials carry their final value
/// forward so the mean is defined per step.
pub fn random_select(model: &SwitchedModel, k: usize, trials: usize, seed: u64) -> Result<Vec<f64>> {
    if trials == 0 {
        return Err(Error::Configuration("random_select needs at least one trial".into()));
    }
    let s0 = initial_leader_set(model.topologies())?;
    let cache = SpectralCache::new(model)?;
    let traces: Vec<Result<Vec<f64>>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            use rand::Rng;
            let mut rng = crate::rng::trial_stream(seed, "random-select", t as u64);
            let mut s = s0.clone();
            let mut f = cache.metric(model, &s)?;
            let mut trace = vec![f];
            while f > F_ZERO_TOL && s.len() < k.min(model.n_agents()) {
                let pool: Vec<usize> =
                    (1..=model.n_agents()).filter(|v| !s.contains(v)).collect();
                let pick = pool[rng.gen_range(0..pool.len())];
                s.insert(pick);
                f = cache.metric(model, &s)?;
                trace.push(f);
            }
            Ok(trace)
        })
        .collect();
    let mut collected = Vec::with_capacity(trials);
    for t in traces {
        collected.push(t?);
    }
    let max_len = collected.iter().map(|t| t.len()).max().unwrap();
    let mut mean = vec![0.0; max_len];
    for trace in &collected {
        for (i, slot) in mean.iter_mut().enumerate() {
            let v = if i < trace.len() { trace[i] } else { *trace.last().unwrap() };
            *slot += v;
        }
    }
    for v in &mut mean {
        *v /= trials as f64;
    }
    Ok(mean)
}

/// Greedy selection on decrements of the rightmost-eigenvalue index instead
/// of the distance metric; terminates when every shifted closed-loop mode is
/// stable or the budget is exhausted, then certifies.
pub fn fmax_greedy(
    model: &SwitchedModel,
    k: usize,
    trial_gains: &[Gain],
) -> Result<SelectionOutcome> {
    if trial_gains.len() != model.n_modes() {
        return Err(Error::Configuration(format!(
            "fmax_greedy needs {} trial gains, got {}",
            model.n_modes(),
            trial_gains.len()
        )));
    }
    let trial_model = model.with_gains(trial_gains.to_vec());
    let s0 = initial_leader_set(model.topologies())?;
    let mut s = s0.clone();
    let mut order: Vec<usize> = s0.iter().copied().collect();
    let target_met = |s: &BTreeSet<usize>| -> Result<bool> {
        Ok(spectral::fmax_per_mode(&trial_model, s)?.iter().all(|&v| v < 0.0))
    };
    let mut trace = vec![spectral::metric_fmax(&trial_model, &s)?];
    let mut met = target_met(&s)?;
    while !met && s.len() < k.min(model.n_agents()) {
        let current = *trace.last().unwrap();
        let candidates: Vec<usize> = (1..=model.n_agents()).filter(|v| !s.contains(v)).collect();
        let scored: Vec<(usize, Result<f64>)> = candidates
            .par_iter()
            .map(|&v| {
                let mut sv = s.clone();
                sv.insert(v);
                (v, spectral::metric_fmax(&trial_model, &sv).map(|f| current - f))
            })
            .collect();
        let mut best = None;
        for (v, g) in scored {
            let g = g?;
            best = match best {
                None => Some((v, g)),
                Some((bv, bg)) => {
                    if g > bg || (g == bg && v < bv) {
                        Some((v, g))
                    } else {
                        Some((bv, bg))
                    }
                }
            };
        }
        let (pick, _) = best.expect("candidates remain");
        s.insert(pick);
        order.push(pick);
        trace.push(spectral::metric_fmax(&trial_model, &s)?);
        met = target_met(&s)?;
    }
    let cache = SpectralCache::new(model)?;
    let (status, certificate) = if !met {
        (SelectionStatus::UncertifiedBudget, None)
    } else {
        let cert = full_certificate(model, &s)?;
        let status = if cert.verdict.passed() {
            SelectionStatus::Certified
        } else {
            SelectionStatus::NoneForTddt
        };
        (status, Some(cert))
    };
    let report = assemble_report(
        model,
        &cache,
        order,
        trace,
        k,
        model.params.clone(),
        status,
        None,
        s0.len(),
    )?;
    Ok(SelectionOutcome { report, certificate })
}

/// Default retry schedule: scale every positive rate up by 1.2 per step,
/// keeping the dwell-rate lower bound valid (it only moves away from the
/// bound); stable-mode rates are scaled the same way.
pub fn default_proposals(base: &TheoremParams, count: usize) -> Vec<TheoremParams> {
    (0..count)
        .map(|z| {
            let factor = 1.2f64.powi(z as i32);
            TheoremParams {
                modes: base
                    .modes
                    .iter()
                    .map(|m| crate::sysmodel::ModeParams { l: m.l, mu: m.mu, eta: m.eta * factor })
                    .collect(),
                phi: base.phi,
                beta_setting: base.beta_setting,
            }
        })
        .collect()
}
