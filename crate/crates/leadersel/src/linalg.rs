//! Dense linear-algebra kernels shared by the pipeline.
//!
//! Everything is built on real Schur decompositions: the quasi-triangular
//! form is rotated into a complex triangular one, which then serves the
//! eigensolver (triangular back-substitution for eigenvectors) and the
//! Lyapunov solver (complex Bartels–Stewart). The matrix exponential uses
//! scaling-and-squaring with a degree-13 Padé approximant.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type Vec64 = DVector<f64>;
pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

/// One eigenvalue with its unit right eigenvector.
#[derive(Debug, Clone)]
pub struct EigenPair {
    pub value: Complex64,
    pub vector: CVec,
}

/// Complex Schur decomposition `m = u t uᴴ` with `t` upper triangular and
/// `u` unitary, derived from the real Schur form by rotating each 2x2
/// diagonal block.
pub fn complex_schur(m: &Mat) -> Result<(CMat, CMat)> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(Error::Dimension(format!(
            "complex_schur expects a square matrix, got {}x{}",
            n,
            m.ncols()
        )));
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical("non-finite entries in Schur input".into()));
    }
    if n == 0 {
        return Ok((CMat::zeros(0, 0), CMat::zeros(0, 0)));
    }
    // The Francis iteration can stall on structured inputs, notably when
    // eigenvalues repeat with high multiplicity (block-triangular stacked
    // systems do exactly that). Retry under a random orthogonal similarity,
    // then with a tiny relative perturbation that splits the clusters; the
    // perturbation sits orders of magnitude below every tolerance used on
    // spectra downstream.
    let mut q: Mat = Mat::identity(n, n);
    let mut t_real: Mat = Mat::zeros(n, n);
    let mut converged = false;
    let mut basis_change: Option<Mat> = None;
    let scale = m.norm().max(1e-300);
    for attempt in 0..7 {
        use rand::Rng;
        let mut rng = crate::rng::stream(0xD15C0 + attempt as u64, "schur-retry");
        let perturbation = match attempt {
            0 | 1 => 0.0,
            2 | 3 => 1e-13,
            _ => 1e-11,
        };
        let mut work = m.clone();
        if perturbation > 0.0 {
            for x in work.iter_mut() {
                *x += scale * perturbation * rng.gen_range(-1.0..1.0);
            }
        }
        let chg = if attempt == 0 {
            None
        } else {
            let g = Mat::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
            let o = g.qr().q();
            work = o.transpose() * work * &o;
            Some(o)
        };
        if let Some(schur) = nalgebra::linalg::Schur::try_new(work, 1e-14, 200_000) {
            let (qq, tt) = schur.unpack();
            q = qq;
            t_real = tt;
            basis_change = chg;
            converged = true;
            break;
        }
    }
    if !converged {
        #[cfg(debug_assertions)]
        {
            if std::env::var("LEADERSEL_DUMP_SCHUR_FAIL").is_ok() {
                let mut s = String::new();
                for r in 0..n {
                    for c in 0..n {
                        s.push_str(&format!("{:.17e} ", m[(r, c)]));
                    }
                    s.push('\n');
                }
                let _ = std::fs::write("/tmp/schur_fail.txt", s);
            }
        }
        return Err(Error::Numerical(format!(
            "real Schur iteration failed to converge (n = {}, ||m|| = {:.3e})",
            n,
            m.norm()
        )));
    }
    if let Some(o) = basis_change {
        q = o * q;
    }

    let mut t = t_real.map(|x| Complex64::new(x, 0.0));
    let mut u = q.map(|x| Complex64::new(x, 0.0));

    // Rotate every 2x2 diagonal block into triangular form.
    let mut i = 0;
    while i + 1 < n {
        if t_real[(i + 1, i)].abs() <= f64::EPSILON * t_real.norm() {
            t[(i + 1, i)] = Complex64::new(0.0, 0.0);
            i += 1;
            continue;
        }
        let a = t[(i, i)];
        let b = t[(i, i + 1)];
        let c = t[(i + 1, i)];
        let d = t[(i + 1, i + 1)];
        // Eigenvalue of the block with the larger magnitude root for stability.
        let tr = a + d;
        let disc = ((a - d) * (a - d) + 4.0 * b * c).sqrt();
        let l1 = (tr + disc) * 0.5;
        let l2 = (tr - disc) * 0.5;
        let lambda = if (l1 - a).norm() > (l2 - a).norm() { l1 } else { l2 };
        // Eigenvector of [[a, b], [c, d]] for lambda.
        let (v0, v1) = if b.norm() >= c.norm() {
            (b, lambda - a)
        } else {
            (lambda - d, c)
        };
        let nv = (v0.norm_sqr() + v1.norm_sqr()).sqrt();
        let (v0, v1) = (v0 / nv, v1 / nv);
        // Unitary g = [v, w] with w orthogonal to v.
        let w0 = -v1.conj();
        let w1 = v0.conj();

        // t <- diag(I, gᴴ, I) * t * diag(I, g, I), u <- u * diag(I, g, I)
        for col in 0..n {
            let x = t[(i, col)];
            let y = t[(i + 1, col)];
            t[(i, col)] = v0.conj() * x + v1.conj() * y;
            t[(i + 1, col)] = w0.conj() * x + w1.conj() * y;
        }
        for row in 0..n {
            let x = t[(row, i)];
            let y = t[(row, i + 1)];
            t[(row, i)] = x * v0 + y * v1;
            t[(row, i + 1)] = x * w0 + y * w1;
            let x = u[(row, i)];
            let y = u[(row, i + 1)];
            u[(row, i)] = x * v0 + y * v1;
            u[(row, i + 1)] = x * w0 + y * w1;
        }
        t[(i + 1, i)] = Complex64::new(0.0, 0.0);
        i += 2;
    }
    // Zero the strictly lower triangle against roundoff.
    for r in 0..n {
        for c in 0..r {
            t[(r, c)] = Complex64::new(0.0, 0.0);
        }
    }
    Ok((u, t))
}

/// Full spectrum with right eigenvectors, sorted by descending real part,
/// ties broken by descending imaginary part. Element 0 therefore realizes
/// the eigenvalue with the largest real part.
pub fn eig(m: &Mat) -> Result<Vec<EigenPair>> {
    let n = m.nrows();
    let (u, t) = complex_schur(m)?;
    let t_norm = t.norm().max(f64::MIN_POSITIVE);
    let mut pairs = Vec::with_capacity(n);
    for k in 0..n {
        let lambda = t[(k, k)];
        // Back-substitute (t - lambda I) y = 0 on the leading k x k block.
        let mut y = CVec::zeros(n);
        y[k] = Complex64::new(1.0, 0.0);
        for r in (0..k).rev() {
            let mut s = Complex64::new(0.0, 0.0);
            for c in (r + 1)..=k {
                s += t[(r, c)] * y[c];
            }
            let mut den = t[(r, r)] - lambda;
            let floor = f64::EPSILON * t_norm;
            if den.norm() < floor {
                // Perturb tiny pivots the way triangular eigenvector solvers do.
                den = Complex64::new(floor, 0.0);
            }
            y[r] = -s / den;
        }
        let mut v = &u * y;
        let nv = v.norm();
        if nv > 0.0 {
            v /= Complex64::new(nv, 0.0);
        }
        // Fix the phase so results are reproducible: largest entry real positive.
        let mut best = 0;
        for i in 0..n {
            if v[i].norm() > v[best].norm() {
                best = i;
            }
        }
        if v[best].norm() > 0.0 {
            let phase = v[best] / Complex64::new(v[best].norm(), 0.0);
            v /= phase;
        }
        pairs.push(EigenPair { value: lambda, vector: v });
    }
    pairs.sort_by(|a, b| {
        b.value
            .re
            .partial_cmp(&a.value.re)
            .unwrap()
            .then(b.value.im.partial_cmp(&a.value.im).unwrap())
    });
    Ok(pairs)
}

/// Eigenvalues only (same ordering as [`eig`]).
pub fn eigenvalues(m: &Mat) -> Result<Vec<Complex64>> {
    let (_, t) = complex_schur(m)?;
    let mut vals: Vec<Complex64> = (0..t.nrows()).map(|k| t[(k, k)]).collect();
    vals.sort_by(|a, b| b.re.partial_cmp(&a.re).unwrap().then(b.im.partial_cmp(&a.im).unwrap()));
    Ok(vals)
}

/// Largest real part over the spectrum of `m`.
pub fn max_re_eig(m: &Mat) -> Result<f64> {
    Ok(eigenvalues(m)?
        .first()
        .map(|l| l.re)
        .unwrap_or(f64::NEG_INFINITY))
}

/// Solves `mᵀ p + p m + q = 0` for symmetric `q` by complex Bartels–Stewart.
///
/// Fails with a spectral-clash error when `m` and `-m` share an eigenvalue.
pub fn lyapunov_solve(m: &Mat, q: &Mat) -> Result<Mat> {
    let n = m.nrows();
    if m.ncols() != n || q.nrows() != n || q.ncols() != n {
        return Err(Error::Dimension(format!(
            "lyapunov_solve: m is {}x{}, q is {}x{}",
            m.nrows(),
            m.ncols(),
            q.nrows(),
            q.ncols()
        )));
    }
    let (u, t) = complex_schur(m)?;
    // mᵀ p + p m = -q  with  m = u t uᴴ  becomes tᴴ y + y t = -uᴴ q u (y = uᴴ p u
    // after conjugating the first factor; see below).
    //
    // Writing p = conj(u) y uᴴ gives mᵀ p = conj(u) tᵀ... it is simpler to work
    // with y = uᵀ p u and q̃ = uᵀ q conj(u):  tᵀ y + y t = -q̃, tᵀ lower triangular.
    let uc = u.map(|z| z.conj());
    let qc = q.map(|x| Complex64::new(x, 0.0));
    let qt = u.transpose() * &qc * &u;
    let t_norm = t.norm();
    let mut y = CMat::zeros(n, n);
    for col in 0..n {
        // (tᵀ + t[col,col] I) y[:,col] = -qt[:,col] - sum_{k<col} t[k,col] y[:,k]
        let mut rhs = CVec::zeros(n);
        for r in 0..n {
            rhs[r] = -qt[(r, col)];
        }
        for k in 0..col {
            let coef = t[(k, col)];
            for r in 0..n {
                rhs[r] -= coef * y[(r, k)];
            }
        }
        // Forward substitution: row r depends on rows < r through tᵀ (lower tri).
        for r in 0..n {
            let mut s = rhs[r];
            for k in 0..r {
                s -= t[(k, r)] * y[(k, col)];
            }
            let den = t[(r, r)] + t[(col, col)];
            if den.norm() <= 1e-13 * t_norm.max(1.0) {
                return Err(Error::SpectralClash(format!(
                    "lyapunov_solve: eigenvalues {} and {} sum to ~0",
                    t[(r, r)],
                    t[(col, col)]
                )));
            }
            y[(r, col)] = s / den;
        }
    }
    let p = &uc * y * u.adjoint();
    let max_im = p.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
    let scale = p.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1.0);
    if max_im > 1e-7 * scale {
        return Err(Error::Numerical(format!(
            "lyapunov_solve produced a non-real solution (max imag {:.3e})",
            max_im
        )));
    }
    let mut pr = p.map(|z| z.re);
    // Symmetrize against roundoff.
    pr = (&pr + pr.transpose()) * 0.5;
    Ok(pr)
}

/// Orthonormal basis of the column space of `m`.
///
/// Rank counts singular values above `rel_tol * sigma_max`. An all-zero input
/// yields rank 0 with an empty basis.
pub fn column_space_basis(m: &Mat, rel_tol: f64) -> Result<(Mat, usize)> {
    let (nr, nc) = (m.nrows(), m.ncols());
    if nr == 0 || nc == 0 {
        return Err(Error::Dimension("column_space_basis on empty matrix".into()));
    }
    let svd = nalgebra::linalg::SVD::try_new(m.clone(), true, false, 1e-14, 200_000)
        .ok_or_else(|| Error::Numerical("svd failed to converge".into()))?;
    let u = svd.u.expect("svd requested u");
    let sv = svd.singular_values;
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return Ok((Mat::zeros(nr, 0), 0));
    }
    let tol = rel_tol * smax;
    let mut cols: Vec<usize> = (0..sv.len()).filter(|&i| sv[i] > tol).collect();
    cols.sort_by(|&a, &b| sv[b].partial_cmp(&sv[a]).unwrap());
    let rank = cols.len();
    let mut basis = Mat::zeros(nr, rank);
    for (j, &i) in cols.iter().enumerate() {
        basis.set_column(j, &u.column(i));
    }
    Ok((basis, rank))
}

/// Numerical rank of `m` with relative tolerance `rel_tol`.
pub fn rank(m: &Mat, rel_tol: f64) -> Result<usize> {
    Ok(column_space_basis(m, rel_tol)?.1)
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn sym_eigenvalues(m: &Mat) -> Result<Vec<f64>> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = nalgebra::linalg::SymmetricEigen::try_new(sym, 1e-14, 200_000)
        .ok_or_else(|| Error::Numerical("symmetric eigensolver failed".into()))?;
    let mut vals: Vec<f64> = eig.eigenvalues.iter().cloned().collect();
    vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(vals)
}

pub fn sym_lambda_max(m: &Mat) -> Result<f64> {
    Ok(*sym_eigenvalues(m)?.last().expect("nonempty spectrum"))
}

pub fn sym_lambda_min(m: &Mat) -> Result<f64> {
    Ok(*sym_eigenvalues(m)?.first().expect("nonempty spectrum"))
}

/// Largest generalized eigenvalue of `(a, b)` with `b` positive definite:
/// the smallest `mu` with `a - mu b` negative semidefinite.
pub fn gen_eig_max(a: &Mat, b: &Mat) -> Result<f64> {
    let chol = nalgebra::linalg::Cholesky::new(b.clone())
        .ok_or_else(|| Error::Domain("gen_eig_max: right matrix is not positive definite".into()))?;
    let l = chol.l();
    let linv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("gen_eig_max: Cholesky factor not invertible".into()))?;
    let w = &linv * a * linv.transpose();
    sym_lambda_max(&w)
}

/// Matrix exponential `exp(m t)` by scaling-and-squaring with the [13/13]
/// Padé approximant.
pub fn expm(m: &Mat, t: f64) -> Result<Mat> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::Dimension("expm expects a square matrix".into()));
    }
    let a = m * t;
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical("expm: non-finite entries".into()));
    }
    let norm = one_norm(&a);
    const THETA_13: f64 = 5.371920351148152;
    let s = if norm > THETA_13 {
        (norm / THETA_13).log2().ceil() as i32
    } else {
        0
    };
    if s > 200 {
        return Err(Error::Numerical(format!(
            "expm: ||m t|| = {:.3e} requires {} squarings; scale the problem down",
            norm, s
        )));
    }
    let a = a / 2f64.powi(s);

    // Padé [13/13] coefficients.
    const B: [f64; 14] = [
        64764752532480000.0,
        32382376266240000.0,
        7771770303897600.0,
        1187353796428800.0,
        129060195264000.0,
        10559470521600.0,
        670442572800.0,
        33522128640.0,
        1323241920.0,
        40840800.0,
        960960.0,
        16380.0,
        182.0,
        1.0,
    ];
    let id = Mat::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a2 * &a4;
    let u_inner = &a6 * (B[13] * &a6 + B[11] * &a4 + B[9] * &a2)
        + B[7] * &a6
        + B[5] * &a4
        + B[3] * &a2
        + B[1] * &id;
    let u = &a * u_inner;
    let v = &a6 * (B[12] * &a6 + B[10] * &a4 + B[8] * &a2)
        + B[6] * &a6
        + B[4] * &a4
        + B[2] * &a2
        + B[0] * &id;
    let num = &v + &u;
    let den = &v - &u;
    let mut r = den
        .lu()
        .solve(&num)
        .ok_or_else(|| Error::Numerical("expm: Padé denominator singular".into()))?;
    for _ in 0..s {
        r = &r * &r;
    }
    Ok(r)
}

fn one_norm(m: &Mat) -> f64 {
    (0..m.ncols())
        .map(|j| m.column(j).iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &Mat, b: &Mat) -> Mat {
    let (ar, ac) = (a.nrows(), a.ncols());
    let (br, bc) = (b.nrows(), b.ncols());
    let mut out = Mat::zeros(ar * br, ac * bc);
    for i in 0..ar {
        for j in 0..ac {
            let aij = a[(i, j)];
            if aij == 0.0 {
                continue;
            }
            for k in 0..br {
                for l in 0..bc {
                    out[(i * br + k, j * bc + l)] = aij * b[(k, l)];
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(n: usize, rng: &mut ChaCha8Rng) -> Mat {
        Mat::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn schur_reconstructs_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in [1, 2, 3, 5, 8, 12] {
            let m = random_matrix(n, &mut rng);
            let (u, t) = complex_schur(&m).unwrap();
            let rec = &u * &t * u.adjoint();
            let err = (rec.map(|z| z.re) - &m).norm() + rec.map(|z| z.im).norm();
            assert!(err < 1e-10 * m.norm().max(1.0), "n={} err={}", n, err);
            // unitary
            let uerr = (u.adjoint() * &u - CMat::identity(n, n)).norm();
            assert!(uerr < 1e-10);
            // triangular
            for r in 0..n {
                for c in 0..r {
                    assert_eq!(t[(r, c)], Complex64::new(0.0, 0.0));
                }
            }
        }
    }

    #[test]
    fn eig_residuals_are_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for n in [2, 4, 8] {
            let m = random_matrix(n, &mut rng);
            let mc = m.map(|x| Complex64::new(x, 0.0));
            for pair in eig(&m).unwrap() {
                let res = (&mc * &pair.vector - &pair.vector * pair.value).norm();
                assert!(res <= 1e-8 * m.norm(), "residual {} too large", res);
                assert_relative_eq!(pair.vector.norm(), 1.0, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn eig_of_diagonal_sorted_descending() {
        let m = Mat::from_diagonal(&Vec64::from_vec(vec![1.0, 3.0, 2.0]));
        let pairs = eig(&m).unwrap();
        let vals: Vec<f64> = pairs.iter().map(|p| p.value.re).collect();
        assert_relative_eq!(vals[0], 3.0, epsilon = 1e-12);
        assert_relative_eq!(vals[1], 2.0, epsilon = 1e-12);
        assert_relative_eq!(vals[2], 1.0, epsilon = 1e-12);
        // unit coordinate eigenvectors
        for p in &pairs {
            let mut mags: Vec<f64> = p.vector.iter().map(|z| z.norm()).collect();
            mags.sort_by(|a, b| b.partial_cmp(a).unwrap());
            assert_relative_eq!(mags[0], 1.0, epsilon = 1e-12);
            assert!(mags[1] < 1e-12);
        }
    }

    #[test]
    fn eig_handles_complex_pairs() {
        // Rotation-like block has eigenvalues 1 ± 2i.
        let m = Mat::from_row_slice(2, 2, &[1.0, 2.0, -2.0, 1.0]);
        let vals = eigenvalues(&m).unwrap();
        assert_relative_eq!(vals[0].re, 1.0, epsilon = 1e-12);
        assert_relative_eq!(vals[0].im, 2.0, epsilon = 1e-12);
        assert_relative_eq!(vals[1].im, -2.0, epsilon = 1e-12);
    }

    #[test]
    fn eig_defective_matrix_residual() {
        // Jordan block: defective, still expects small residuals per returned pair.
        let m = Mat::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 2.0]);
        let mc = m.map(|x| Complex64::new(x, 0.0));
        for pair in eig(&m).unwrap() {
            let res = (&mc * &pair.vector - &pair.vector * pair.value).norm();
            assert!(res <= 1e-7 * m.norm());
        }
    }

    #[test]
    fn lyapunov_scalar_balance() {
        // m = -1/2 I, q = I  =>  p = I
        let m = Mat::identity(3, 3) * -0.5;
        let q = Mat::identity(3, 3);
        let p = lyapunov_solve(&m, &q).unwrap();
        assert!((p - Mat::identity(3, 3)).norm() < 1e-12);
    }

    #[test]
    fn lyapunov_diagonal_closed_form() {
        let m = Mat::from_diagonal(&Vec64::from_vec(vec![-1.0, -2.0]));
        let q = Mat::identity(2, 2);
        let p = lyapunov_solve(&m, &q).unwrap();
        assert_relative_eq!(p[(0, 0)], 0.5, epsilon = 1e-12);
        assert_relative_eq!(p[(1, 1)], 0.25, epsilon = 1e-12);
        assert!(p[(0, 1)].abs() < 1e-12);
    }

    #[test]
    fn lyapunov_residual_random_hurwitz() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let n = 6;
            let mut m = random_matrix(n, &mut rng);
            // Shift to Hurwitz.
            let shift = max_re_eig(&m).unwrap() + 0.5;
            m -= Mat::identity(n, n) * shift;
            let half = random_matrix(n, &mut rng);
            let q = &half * half.transpose() + Mat::identity(n, n) * 0.1;
            let p = lyapunov_solve(&m, &q).unwrap();
            let residual = (m.transpose() * &p + &p * &m + &q).norm();
            let bound = 1e-8 * (m.norm() * p.norm() + q.norm());
            assert!(residual <= bound, "residual {} vs {}", residual, bound);
            assert!((&p - p.transpose()).norm() < 1e-12 * p.norm());
        }
    }

    #[test]
    fn lyapunov_spectral_clash_detected() {
        // m has eigenvalues ±1, so the solvability condition fails.
        let m = Mat::from_diagonal(&Vec64::from_vec(vec![1.0, -1.0]));
        let q = Mat::identity(2, 2);
        assert!(matches!(
            lyapunov_solve(&m, &q),
            Err(Error::SpectralClash(_))
        ));
    }

    #[test]
    fn basis_of_identity_and_rank_one() {
        let (b, r) = column_space_basis(&Mat::identity(4, 4), 1e-8).unwrap();
        assert_eq!(r, 4);
        assert!((b.transpose() * &b - Mat::identity(4, 4)).norm() < 1e-10);

        let u = Vec64::from_vec(vec![1.0, 2.0, -1.0]);
        let v = Vec64::from_vec(vec![0.5, 1.0]);
        let outer = &u * v.transpose();
        let (b1, r1) = column_space_basis(&outer, 1e-8).unwrap();
        assert_eq!(r1, 1);
        // Projector equality with the normalized generator.
        let un = &u / u.norm();
        let proj = &b1 * b1.transpose();
        let proj2 = &un * un.transpose();
        assert!((proj - proj2).norm() < 1e-10);
    }

    #[test]
    fn basis_of_zero_matrix_is_empty() {
        let (b, r) = column_space_basis(&Mat::zeros(3, 2), 1e-8).unwrap();
        assert_eq!(r, 0);
        assert_eq!(b.ncols(), 0);
    }

    #[test]
    fn constructed_rank_three() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let f = Mat::from_fn(6, 3, |_, _| rng.gen_range(-1.0..1.0));
        let g = Mat::from_fn(3, 10, |_, _| rng.gen_range(-1.0..1.0));
        let m = f * g;
        assert_eq!(rank(&m, 1e-8).unwrap(), 3);
    }

    #[test]
    fn gen_eig_max_matches_grid_bisection() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..8 {
            let n = 4;
            let ha = random_matrix(n, &mut rng);
            let hb = random_matrix(n, &mut rng);
            let a = &ha * ha.transpose() + Mat::identity(n, n) * 0.05;
            let b = &hb * hb.transpose() + Mat::identity(n, n) * 0.05;
            let mu = gen_eig_max(&a, &b).unwrap();
            // Bisection on "a - mu b <= 0".
            let feasible = |m: f64| sym_lambda_max(&(&a - &b * m)).unwrap() <= 1e-12;
            let mut lo = 0.0;
            let mut hi = 1.0;
            while !feasible(hi) {
                hi *= 2.0;
            }
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if feasible(mid) {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            assert!((mu - hi).abs() <= 1e-6 * hi.max(1.0), "mu={} grid={}", mu, hi);
        }
    }

    #[test]
    fn expm_zero_and_diagonal() {
        let z = Mat::zeros(3, 3);
        assert!((expm(&z, 1.0).unwrap() - Mat::identity(3, 3)).norm() < 1e-14);

        let d = Mat::from_diagonal(&Vec64::from_vec(vec![0.3, -1.2]));
        let e = expm(&d, 2.0).unwrap();
        assert_relative_eq!(e[(0, 0)], (0.6f64).exp(), epsilon = 1e-12);
        assert_relative_eq!(e[(1, 1)], (-2.4f64).exp(), epsilon = 1e-12);
        assert!(e[(0, 1)].abs() < 1e-14);
    }

    /// Taylor-series oracle: scale so the norm is small, sum 60 terms, square back.
    fn expm_series(m: &Mat, t: f64) -> Mat {
        let n = m.nrows();
        let a = m * t;
        let norm = one_norm(&a);
        let s = if norm > 0.25 { (norm / 0.25).log2().ceil() as i32 } else { 0 };
        let a = a / 2f64.powi(s);
        let mut term = Mat::identity(n, n);
        let mut sum = Mat::identity(n, n);
        for k in 1..=60 {
            term = &term * &a / k as f64;
            sum += &term;
        }
        for _ in 0..s {
            sum = &sum * &sum;
        }
        sum
    }

    #[test]
    fn expm_matches_series_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..10 {
            let m = random_matrix(6, &mut rng);
            let e = expm(&m, 0.7).unwrap();
            let o = expm_series(&m, 0.7);
            let rel = (&e - &o).norm() / o.norm();
            assert!(rel <= 1e-10, "relative error {}", rel);
        }
    }

    #[test]
    fn expm_inverse_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let m = random_matrix(5, &mut rng);
        let a = expm(&m, 0.9).unwrap();
        let b = expm(&(-&m), 0.9).unwrap();
        assert!((a * b - Mat::identity(5, 5)).norm() < 1e-8);
    }

    #[test]
    fn kron_identity_structure() {
        let a = Mat::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let b = Mat::identity(2, 2);
        let k = kron(&a, &b);
        assert_eq!(k.nrows(), 4);
        assert_relative_eq!(k[(0, 0)], 1.0);
        assert_relative_eq!(k[(0, 2)], 2.0);
        assert_relative_eq!(k[(3, 1)], 3.0);
        assert_relative_eq!(k[(2, 2)], 4.0);
        assert_relative_eq!(k[(1, 0)], 0.0);
    }
}
