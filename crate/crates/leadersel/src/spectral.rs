//! Eigen-structure analysis and the leader-selection metric.
//!
//! The metric sums, over every topology and every eigenvector of the shifted
//! open-loop matrix whose eigenvalue has nonnegative real part, the squared
//! distance to the controllable subspace generated by the leader set. A zero
//! value certifies that stabilizing gains exist for every mode.

use std::collections::BTreeSet;

use num_complex::Complex64;

use crate::linalg::{self, CVec, EigenPair, Mat};
use crate::sysmodel::{shift_2, SwitchedModel};
use crate::{Error, Result};

/// Eigenvalues with real part at or above this threshold count as unstable;
/// slightly negative to avoid dropping marginal modes to roundoff.
pub const UNSTABLE_RE_TOL: f64 = -1e-9;

/// Default relative tolerance for rank decisions.
pub const RANK_REL_TOL: f64 = 1e-8;

/// Orthonormal basis of a column space together with the rank decision.
#[derive(Debug, Clone)]
pub struct SpanBasis {
    pub basis: Mat,
    pub rank: usize,
    pub tolerance_used: f64,
}

/// Full spectrum with unit right eigenvectors, sorted by descending real
/// part. Element 0 realizes the rightmost eigenvalue.
pub fn eig(m: &Mat) -> Result<Vec<EigenPair>> {
    linalg::eig(m)
}

/// Controllability matrix `[B, ÂB, ..., Â^(d-1)B]` where `d` is the state
/// dimension of `ahat`.
pub fn ctrb(ahat: &Mat, bhat: &Mat) -> Result<Mat> {
    let d = ahat.nrows();
    if ahat.ncols() != d || bhat.nrows() != d {
        return Err(Error::Dimension(format!(
            "ctrb: ahat is {}x{}, bhat has {} rows",
            ahat.nrows(),
            ahat.ncols(),
            bhat.nrows()
        )));
    }
    let q = bhat.ncols();
    let mut out = Mat::zeros(d, d * q);
    let mut cur = bhat.clone();
    for k in 0..d {
        out.view_mut((0, k * q), (d, q)).copy_from(&cur);
        if k + 1 < d {
            cur = ahat * cur;
        }
    }
    Ok(out)
}

/// Orthonormal basis of the column space of `m`; rank counts singular values
/// above `rel_tol` times the largest one. An all-zero matrix yields an empty
/// basis rather than an error.
pub fn span_basis(m: &Mat, rel_tol: f64) -> Result<SpanBasis> {
    let (basis, rank) = linalg::column_space_basis(m, rel_tol)?;
    Ok(SpanBasis { basis, rank, tolerance_used: rel_tol })
}

/// Squared distance from a unit vector to the (complexified) span.
///
/// Returns `||v - Π Πᴴ v||²` clamped to [0, 1]; the empty span gives 1.
pub fn dist2(v: &CVec, span: &SpanBasis) -> f64 {
    if span.rank == 0 {
        return v.norm_squared().clamp(0.0, 1.0);
    }
    let b = span.basis.map(|x| Complex64::new(x, 0.0));
    let coeffs = b.adjoint() * v;
    let residual = v - b * coeffs;
    residual.norm_squared().clamp(0.0, 1.0)
}

/// Per-mode spectral data reused across candidate leader sets.
#[derive(Debug, Clone)]
pub struct ModeSpectrum {
    /// Shifted open-loop matrix of the mode.
    pub ahat: Mat,
    /// Eigenpairs with `Re(λ) >= UNSTABLE_RE_TOL`.
    pub unstable: Vec<EigenPair>,
    /// Condition number of the full eigenvector matrix; large values signal
    /// a defective or near-defective mode.
    pub eigenbasis_condition: f64,
}

/// Precomputed spectra of every shifted open-loop mode.
#[derive(Debug, Clone)]
pub struct SpectralCache {
    pub modes: Vec<ModeSpectrum>,
}

impl SpectralCache {
    pub fn new(model: &SwitchedModel) -> Result<Self> {
        let mut modes = Vec::with_capacity(model.n_modes());
        for p in 0..model.n_modes() {
            let ahat = model.shifted_open_loop(p);
            let pairs = linalg::eig(&ahat)?;
            let total = model.total_dim();
            let cond = {
                let mut cm = nalgebra::DMatrix::<Complex64>::zeros(total, total);
                for (k, pair) in pairs.iter().enumerate() {
                    cm.set_column(k, &pair.vector);
                }
                let sv = cm.singular_values();
                let smax = sv.iter().cloned().fold(0.0, f64::max);
                let smin = sv.iter().cloned().fold(f64::MAX, f64::min);
                if smin > 0.0 {
                    smax / smin
                } else {
                    f64::INFINITY
                }
            };
            let unstable = pairs
                .into_iter()
                .filter(|pr| pr.value.re >= UNSTABLE_RE_TOL)
                .collect();
            modes.push(ModeSpectrum { ahat, unstable, eigenbasis_condition: cond });
        }
        Ok(Self { modes })
    }

    /// Metric contribution of mode `p` for leader set `s`.
    pub fn metric_for_mode(
        &self,
        model: &SwitchedModel,
        p: usize,
        s: &BTreeSet<usize>,
    ) -> Result<f64> {
        let mode = &self.modes[p];
        if mode.unstable.is_empty() {
            return Ok(0.0);
        }
        let span = controllable_span(model, &mode.ahat, s)?;
        Ok(mode.unstable.iter().map(|pr| dist2(&pr.vector, &span)).sum())
    }

    /// Full metric for leader set `s`.
    pub fn metric(&self, model: &SwitchedModel, s: &BTreeSet<usize>) -> Result<f64> {
        let mut total = 0.0;
        for p in 0..self.modes.len() {
            total += self.metric_for_mode(model, p, s)?;
        }
        Ok(total)
    }

    /// Modes whose eigenvector matrix is ill-conditioned.
    pub fn ill_conditioned_modes(&self) -> Vec<usize> {
        self.modes
            .iter()
            .enumerate()
            .filter(|(_, m)| m.eigenbasis_condition > 1e8)
            .map(|(p, _)| p)
            .collect()
    }
}

/// Span of the controllability matrix of `(ahat, B̂_S)`. Columns of the
/// controllability matrix are rescaled to unit norm first; that leaves the
/// span unchanged and keeps the rank decision well conditioned.
pub fn controllable_span(
    model: &SwitchedModel,
    ahat: &Mat,
    s: &BTreeSet<usize>,
) -> Result<SpanBasis> {
    if s.is_empty() {
        return Ok(SpanBasis {
            basis: Mat::zeros(model.total_dim(), 0),
            rank: 0,
            tolerance_used: RANK_REL_TOL,
        });
    }
    let bhat = model.input_matrix_compact(s);
    let mut c = ctrb(ahat, &bhat)?;
    for j in 0..c.ncols() {
        let norm = c.column(j).norm();
        if norm > 0.0 {
            let scaled = c.column(j) / norm;
            c.set_column(j, &scaled);
        }
    }
    span_basis(&c, RANK_REL_TOL)
}

/// The leader-selection metric `f(S)`: total squared distance of every
/// unstable shifted-mode eigenvector to the controllable span of `S`.
pub fn metric_f(model: &SwitchedModel, s: &BTreeSet<usize>) -> Result<f64> {
    let cache = SpectralCache::new(model)?;
    cache.metric(model, s)
}

/// Rightmost real part of `A_p^(2)` for each mode, built from the closed
/// loop with leader set `s` and the model's installed gains.
pub fn fmax_per_mode(model: &SwitchedModel, s: &BTreeSet<usize>) -> Result<Vec<f64>> {
    if model.gains.is_none() {
        return Err(Error::Configuration(
            "metric_fmax needs per-mode gains (trial gains) installed".into(),
        ));
    }
    let probe = model.with_leaders(s.clone());
    let mut out = Vec::with_capacity(model.n_modes());
    for p in 0..model.n_modes() {
        let mode = probe.mode_matrix(p)?;
        let a2 = shift_2(&mode, &probe.params.modes[p], probe.tddt.tau_min(p));
        out.push(linalg::max_re_eig(&a2)?);
    }
    Ok(out)
}

/// The comparison metric: sum over modes of the rightmost real part of
/// `A_p^(2)`.
pub fn metric_fmax(model: &SwitchedModel, s: &BTreeSet<usize>) -> Result<f64> {
    Ok(fmax_per_mode(model, s)?.into_iter().sum())
}

/// Guard for the normalized controllability Gram matrix: `Nn` at most this.
pub const C_BAR_DIM_GUARD: usize = 40;

/// Normalized Gram matrix of the full controllability dictionary of a mode.
#[derive(Debug, Clone)]
pub struct CBar {
    /// `(Nn)² x (Nn)²`, symmetric PSD, unit diagonal on non-flagged indices.
    pub matrix: Mat,
    /// False for identically-zero dictionary columns, which are excluded
    /// from every principal-submatrix computation.
    pub nonzero: Vec<bool>,
}

/// Builds `C̄_p` from `C_{Ω,p} = ctrb(Â_p, I)` by scaling each column to
/// unit norm (zero columns are left in place and flagged).
pub fn c_bar(model: &SwitchedModel, p: usize) -> Result<CBar> {
    let total = model.total_dim();
    if total > C_BAR_DIM_GUARD {
        return Err(Error::Capability(format!(
            "c_bar supports Nn <= {}, got {}; only the global lambda_min bound is available",
            C_BAR_DIM_GUARD, total
        )));
    }
    let ahat = model.shifted_open_loop(p);
    let c = ctrb(&ahat, &Mat::identity(total, total))?;
    let ncols = c.ncols();
    let mut scaled = c.clone();
    let max_norm = (0..ncols).map(|j| c.column(j).norm()).fold(0.0, f64::max).max(1.0);
    let mut nonzero = vec![true; ncols];
    for j in 0..ncols {
        let norm = c.column(j).norm();
        if norm <= 1e-12 * max_norm {
            nonzero[j] = false;
        } else {
            let col = c.column(j) / norm;
            scaled.set_column(j, &col);
        }
    }
    let gram = scaled.transpose() * &scaled;
    Ok(CBar { matrix: gram, nonzero })
}

fn combinations(n: usize, k: usize) -> Option<u64> {
    if k > n {
        return Some(0);
    }
    let mut acc: u64 = 1;
    for i in 0..k {
        acc = acc.checked_mul((n - i) as u64)?;
        acc /= (i + 1) as u64;
    }
    Some(acc)
}

fn for_each_subset(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    if k == 0 || k > n {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        // next combination in lexicographic order
        let mut i = k;
        let mut found = false;
        while i > 0 {
            i -= 1;
            if idx[i] != i + n - k {
                found = true;
                break;
            }
        }
        if !found {
            return;
        }
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Lower bounds on the submodularity ratio derived from `cbar`.
///
/// The global bound is the smallest eigenvalue of the Gram matrix restricted
/// to non-flagged indices. The sparse bound minimizes the smallest eigenvalue
/// over all principal submatrices of size `s` (clamped to the available
/// index count); it is omitted when the subset count exceeds 10^6.
pub fn cbar_lower_bounds(cbar: &CBar, s: usize) -> Result<(f64, Option<f64>)> {
    let live: Vec<usize> = (0..cbar.nonzero.len()).filter(|&j| cbar.nonzero[j]).collect();
    if live.is_empty() {
        return Err(Error::Domain("c_bar has no nonzero columns".into()));
    }
    let full = principal_submatrix(&cbar.matrix, &live);
    let global = linalg::sym_lambda_min(&full)?.max(0.0);

    let s_eff = s.min(live.len());
    if s_eff == 0 {
        return Ok((global, None));
    }
    let count = combinations(live.len(), s_eff);
    let sparse = match count {
        Some(c) if c <= 1_000_000 => {
            let mut best = f64::MAX;
            let mut err = None;
            for_each_subset(live.len(), s_eff, |idx| {
                if err.is_some() {
                    return;
                }
                let chosen: Vec<usize> = idx.iter().map(|&i| live[i]).collect();
                let sub = principal_submatrix(&cbar.matrix, &chosen);
                match linalg::sym_lambda_min(&sub) {
                    Ok(v) => best = best.min(v),
                    Err(e) => err = Some(e),
                }
            });
            if let Some(e) = err {
                return Err(e);
            }
            Some(best.max(0.0))
        }
        _ => None,
    };
    Ok((global, sparse))
}

/// Bounds for mode `p` of `model` at principal-submatrix size `s`.
pub fn submod_ratio_lower_bounds(
    model: &SwitchedModel,
    p: usize,
    s: usize,
) -> Result<(f64, Option<f64>)> {
    cbar_lower_bounds(&c_bar(model, p)?, s)
}

fn principal_submatrix(m: &Mat, idx: &[usize]) -> Mat {
    Mat::from_fn(idx.len(), idx.len(), |r, c| m[(idx[r], idx[c])])
}

/// Exact submodularity ratio of the decrement `g(X) = f(∅) - f(X)` by
/// exhaustive enumeration of `W ⊆ U`, `S` disjoint from `W`, `|S| <= k`.
///
/// Denominators with `|g(W∪S) - g(W)| <= 1e-12` are skipped; if nothing
/// remains the ratio is undefined and an error is returned.
pub fn exact_submodularity_ratio(
    f_oracle: &mut dyn FnMut(&BTreeSet<usize>) -> Result<f64>,
    ground: &BTreeSet<usize>,
    u: &BTreeSet<usize>,
    k: usize,
) -> Result<f64> {
    let elements: Vec<usize> = ground.iter().copied().collect();
    let n = elements.len();
    if n > 10 {
        return Err(Error::Capability(format!(
            "exact_submodularity_ratio enumerates all subsets; ground set of {} is too large",
            n
        )));
    }
    if !u.iter().all(|e| ground.contains(e)) {
        return Err(Error::Domain("U must be a subset of the ground set".into()));
    }
    let f_empty = f_oracle(&BTreeSet::new())?;
    let mut cache: std::collections::HashMap<u64, f64> = std::collections::HashMap::new();
    let set_of = |mask: u64| -> BTreeSet<usize> {
        (0..n).filter(|i| mask & (1 << i) != 0).map(|i| elements[i]).collect()
    };
    let mut g = |mask: u64,
                 oracle: &mut dyn FnMut(&BTreeSet<usize>) -> Result<f64>|
     -> Result<f64> {
        if let Some(&v) = cache.get(&mask) {
            return Ok(v);
        }
        let v = f_empty - oracle(&set_of(mask))?;
        cache.insert(mask, v);
        Ok(v)
    };
    let mask_of = |set: &BTreeSet<usize>| -> u64 {
        let mut m = 0u64;
        for e in set {
            let pos = elements.iter().position(|x| x == e).unwrap();
            m |= 1 << pos;
        }
        m
    };

    let u_mask = mask_of(u);
    let mut best: Option<f64> = None;
    // Enumerate W ⊆ U via submask iteration.
    let mut w_mask = u_mask;
    loop {
        let g_w = g(w_mask, f_oracle)?;
        let free: Vec<usize> = (0..n).filter(|i| w_mask & (1 << i) == 0).collect();
        let nf = free.len();
        for s_bits in 1u64..(1u64 << nf) {
            if (s_bits.count_ones() as usize) > k {
                continue;
            }
            let mut s_mask = 0u64;
            for (bit, &pos) in free.iter().enumerate() {
                if s_bits & (1 << bit) != 0 {
                    s_mask |= 1 << pos;
                }
            }
            let den = g(w_mask | s_mask, f_oracle)? - g_w;
            if den.abs() <= 1e-12 {
                continue;
            }
            let mut num = 0.0;
            for &pos in &free {
                if s_mask & (1 << pos) != 0 {
                    num += g(w_mask | (1 << pos), f_oracle)? - g_w;
                }
            }
            let ratio = num / den;
            best = Some(best.map_or(ratio, |b: f64| b.min(ratio)));
        }
        if w_mask == 0 {
            break;
        }
        w_mask = (w_mask - 1) & u_mask;
    }
    best.ok_or_else(|| Error::Domain("submodularity ratio undefined: no admissible pair".into()))
}

/// Normality measure `β = λ_max(Mᵀ + M) / (2 Re λ_r(M))`; lies in (0, 1]
/// exactly when `Mᵀ + M` is negative definite.
pub fn beta_of(m: &Mat) -> Result<f64> {
    let re_r = linalg::max_re_eig(m)?;
    if re_r.abs() <= 1e-12 {
        return Err(Error::Singular(format!(
            "beta undefined: rightmost eigenvalue has real part {:.3e}",
            re_r
        )));
    }
    let num = linalg::sym_lambda_max(&(m.transpose() + m))?;
    Ok(num / (2.0 * re_r))
}
