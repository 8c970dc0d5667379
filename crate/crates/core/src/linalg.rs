//! Matrix-computation contracts the rest of the crate depends on.
//!
//! nalgebra supplies the small dense kernels (SVD, QR, LU). faer supplies the
//! kernels where size matters: the nonsymmetric eigendecomposition behind
//! [`solve_pencil`], Cholesky for Gram matrices, and blocked QR/SVD for tall
//! matrices. faer is pinned to sequential execution so results do not depend
//! on thread count; parallelism happens one level up, across trials.

use crate::error::{Error, Result};
use faer::linalg::solvers::Solve;
use nalgebra::{DMatrix, DVector};
use std::sync::Once;

static FAER_SEQ: Once = Once::new();

fn faer_seq() {
    FAER_SEQ.call_once(|| faer::set_global_parallelism(faer::Par::Seq));
}

fn to_faer(m: &DMatrix<f64>) -> faer::MatRef<'_, f64> {
    faer::MatRef::from_column_major_slice(m.as_slice(), m.nrows(), m.ncols())
}

/// Thin SVD `M = U diag(S) V^T` with singular values sorted descending.
///
/// Backed by faer: nalgebra's Golub-Kahan implementation returns invalid
/// factors on some matrices with clustered tiny singular values, which the
/// recovery pipeline hits constantly (its unfoldings are numerically rank
/// deficient by construction).
pub struct SvdResult {
    pub u: DMatrix<f64>,
    pub singular_values: DVector<f64>,
    pub v: DMatrix<f64>,
}

pub fn svd(m: &DMatrix<f64>) -> Result<SvdResult> {
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("svd input".into()));
    }
    faer_seq();
    let dec = to_faer(m).thin_svd().map_err(|_| Error::NonConvergence {
        iters: 0,
        context: "svd".into(),
    })?;
    let k = m.nrows().min(m.ncols());
    let uf = dec.U();
    let vf = dec.V();
    let sf = dec.S();
    Ok(SvdResult {
        u: DMatrix::from_fn(m.nrows(), k, |i, j| uf[(i, j)]),
        singular_values: DVector::from_fn(k, |i, _| sf[i]),
        v: DMatrix::from_fn(m.ncols(), k, |i, j| vf[(i, j)]),
    })
}

/// Singular values only, descending.
pub fn singular_values(m: &DMatrix<f64>) -> Result<DVector<f64>> {
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("svd input".into()));
    }
    faer_seq();
    let sv = to_faer(m)
        .singular_values()
        .map_err(|_| Error::NonConvergence {
            iters: 0,
            context: "singular values".into(),
        })?;
    Ok(DVector::from_vec(sv))
}

/// Sign of the first entry whose magnitude is non-negligible; +1 for the zero
/// vector. Used to pin the sign ambiguity of orthonormal columns.
pub fn first_nonzero_sign(v: &DVector<f64>) -> f64 {
    let scale = v.amax();
    if scale == 0.0 {
        return 1.0;
    }
    for &x in v.iter() {
        if x.abs() > 1e-14 * scale {
            return x.signum();
        }
    }
    1.0
}

/// Flips column signs in place so each column's first nonzero entry is positive.
pub fn fix_column_signs(m: &mut DMatrix<f64>) {
    for j in 0..m.ncols() {
        let s = first_nonzero_sign(&m.column(j).clone_owned());
        if s < 0.0 {
            m.column_mut(j).neg_mut();
        }
    }
}

/// Orthonormal basis of the column span, via QR. Columns are sign-fixed.
pub fn orthonormalize(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (rows, cols) = m.shape();
    if cols > rows {
        return Err(Error::RankTooLarge {
            rank: cols,
            limit: rows,
            context: "orthonormalize needs r <= m",
        });
    }
    let sv = singular_values(m)?;
    if sv[0] == 0.0 || sv[cols - 1] <= 1e-12 * sv[0] {
        return Err(Error::RankDeficient(format!(
            "column rank below {cols} (sigma ratio {:.3e})",
            if sv[0] == 0.0 { 0.0 } else { sv[cols - 1] / sv[0] }
        )));
    }
    let qr = m.clone().qr();
    let mut q = qr.q();
    fix_column_signs(&mut q);
    Ok(q)
}

/// Moore-Penrose pseudoinverse with relative rank cutoff `rcond = 1e-12`.
pub fn pseudoinverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let dec = svd(m)?;
    let smax = dec.singular_values.max();
    let cutoff = 1e-12 * smax;
    let k = dec.singular_values.len();
    let mut sinv = DMatrix::zeros(k, k);
    for i in 0..k {
        let s = dec.singular_values[i];
        if s > cutoff {
            sinv[(i, i)] = 1.0 / s;
        }
    }
    Ok(&dec.v * sinv * dec.u.transpose())
}

/// Orthonormal basis of the hyperplane orthogonal to a unit vector.
///
/// Built from the Householder reflector that maps `v` to `e1`: the reflector's
/// columns 2..n are orthonormal and orthogonal to `v`, and the construction is
/// deterministic, which keeps assembled Terracini matrices reproducible.
pub fn householder_complement(v: &DVector<f64>) -> DMatrix<f64> {
    let n = v.len();
    assert!(n >= 1, "empty vector has no complement");
    let mut w = v.clone();
    w[0] -= 1.0;
    let wn = w.norm();
    if wn <= 1e-8 {
        // v is (numerically) e1 itself; the reflector degenerates to I.
        let mut comp = DMatrix::zeros(n, n - 1);
        for j in 0..n - 1 {
            comp[(j + 1, j)] = 1.0;
        }
        return comp;
    }
    w /= wn;
    // H = I - 2 w w^T, complement = H[:, 1..]
    let mut comp = DMatrix::zeros(n, n - 1);
    for j in 1..n {
        for i in 0..n {
            let id = if i == j { 1.0 } else { 0.0 };
            comp[(i, j - 1)] = id - 2.0 * w[i] * w[j];
        }
    }
    comp
}

/// Eigendecomposition of the pencil `(S1, S2)`, realized as the spectrum of
/// `S1 * S2^{-1}`.
#[derive(Debug, Clone)]
pub struct PencilEig {
    /// Real eigenvalues, sorted descending.
    pub eigenvalues: Vec<f64>,
    /// Unit-norm eigenvector columns, ordered like `eigenvalues`.
    pub eigenvectors: DMatrix<f64>,
    /// Set when the eigenvalue separation is below `tol * spectral_radius`.
    pub ill_conditioned: bool,
}

impl PencilEig {
    /// Smallest pairwise eigenvalue gap; infinite for a 1x1 pencil.
    pub fn min_separation(&self) -> f64 {
        let n = self.eigenvalues.len();
        if n < 2 {
            return f64::INFINITY;
        }
        let mut sep = f64::INFINITY;
        for i in 0..n {
            for j in i + 1..n {
                sep = sep.min((self.eigenvalues[i] - self.eigenvalues[j]).abs());
            }
        }
        sep
    }
}

/// Solves the matrix pencil `S1 x = lambda S2 x` by eigendecomposing
/// `S1 * S2^{-1}`.
///
/// Eigenvalues with imaginary parts at most `tol * spectral_radius` are
/// truncated to real; larger imaginary parts reject the projection with
/// [`Error::ComplexEigenvalues`] so the caller can redraw it.
pub fn solve_pencil(s1: &DMatrix<f64>, s2: &DMatrix<f64>, tol: f64) -> Result<PencilEig> {
    faer_seq();
    let r = s1.nrows();
    if s1.shape() != (r, r) || s2.shape() != (r, r) {
        return Err(Error::DimensionMismatch(format!(
            "pencil needs square matrices of equal size, got {:?} and {:?}",
            s1.shape(),
            s2.shape()
        )));
    }
    let sv = singular_values(s2)?;
    let ratio = if sv[0] == 0.0 { 0.0 } else { sv[r - 1] / sv[0] };
    if sv[0] == 0.0 || ratio <= tol {
        return Err(Error::SingularPencil { ratio });
    }

    // m = S1 * S2^{-1}, via S2^T x = S1^T.
    let lu = s2.transpose().lu();
    let mt = lu
        .solve(&s1.transpose())
        .ok_or(Error::SingularPencil { ratio })?;
    let m = mt.transpose();

    let eig = to_faer(&m)
        .eigen()
        .map_err(|_| Error::NonConvergence { iters: 0, context: "pencil eigendecomposition".into() })?;
    let vals = eig.S();
    let vecs = eig.U();

    let rho = (0..r)
        .map(|i| vals[i].norm())
        .fold(0.0_f64, f64::max)
        .max(f64::MIN_POSITIVE);
    let max_imag = (0..r).map(|i| vals[i].im.abs()).fold(0.0_f64, f64::max);
    if max_imag > tol * rho {
        return Err(Error::ComplexEigenvalues { ratio: max_imag / rho });
    }

    // Realify: rotate each eigenvector by the phase of its largest component,
    // then drop the residual imaginary parts.
    let mut pairs: Vec<(f64, DVector<f64>)> = (0..r)
        .map(|j| {
            let lambda = vals[j].re;
            let col = vecs.col(j);
            let mut lead = 0usize;
            let mut best = -1.0;
            for i in 0..r {
                let a = col[i].norm();
                if a > best {
                    best = a;
                    lead = i;
                }
            }
            let phase = col[lead] / faer::c64::new(best.max(f64::MIN_POSITIVE), 0.0);
            let mut v = DVector::zeros(r);
            for i in 0..r {
                v[i] = (col[i] * phase.conj()).re;
            }
            let n = v.norm();
            if n > 0.0 {
                v /= n;
            }
            if first_nonzero_sign(&v) < 0.0 {
                v.neg_mut();
            }
            (lambda, v)
        })
        .collect();
    pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());

    let eigenvalues: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let eigenvectors = DMatrix::from_columns(&pairs.iter().map(|p| p.1.clone()).collect::<Vec<_>>());

    let mut sep = f64::INFINITY;
    for i in 0..r {
        for j in i + 1..r {
            sep = sep.min((eigenvalues[i] - eigenvalues[j]).abs());
        }
    }
    let ill_conditioned = r > 1 && sep < tol * rho;

    Ok(PencilEig {
        eigenvalues,
        eigenvectors,
        ill_conditioned,
    })
}

/// Largest and smallest singular value of a possibly large matrix, certified
/// to roughly `1e-13 * sigma_max`: faer QR first, then the SVD of R.
pub fn sigma_extrema_tall(m: &DMatrix<f64>) -> Result<(f64, f64)> {
    faer_seq();
    let (rows, cols) = m.shape();
    if rows < cols {
        let t = m.transpose();
        return sigma_extrema_tall(&t);
    }
    if rows.saturating_mul(cols * cols) <= 40_000_000 {
        let sv = singular_values(m)?;
        return Ok((sv[0], sv[cols - 1]));
    }
    let qr = to_faer(m).qr();
    let r_f = qr.R();
    let mut r_na = DMatrix::zeros(cols, cols);
    for j in 0..cols {
        for i in 0..=j.min(cols - 1) {
            r_na[(i, j)] = r_f[(i, j)];
        }
    }
    let sv = singular_values(&r_na)?;
    Ok((sv[0], sv[cols - 1]))
}

/// Smallest eigenvalue of a symmetric positive semidefinite matrix.
///
/// Cholesky plus Lanczos on the inverse, falling back to a values-only dense
/// symmetric eigensolve when the factorization fails or the iteration does
/// not certify quickly (clustered extremal eigenvalues stall shift-and-invert
/// iterations, and a bounded failed attempt plus the dense solve is cheaper
/// than a long successful one). Accuracy is limited by the `eps * ||G||`
/// floor intrinsic to forming G.
pub fn lambda_min_spd(g: &DMatrix<f64>) -> f64 {
    faer_seq();
    let n = g.nrows();
    assert_eq!(n, g.ncols(), "lambda_min_spd needs a square matrix");
    if n == 0 {
        return 0.0;
    }
    // the dense values-only solve is affordable and has predictable cost up
    // to mid sizes; shift-and-invert Lanczos only pays off above that
    if n <= 700 {
        return faer_lambda_min_eigen(g);
    }
    let (max_iter, tol) = (240, 1e-10);
    let scale = g.diagonal().amax().max(f64::MIN_POSITIVE);
    match to_faer(g).llt(faer::Side::Lower) {
        Ok(llt) => {
            inverse_lanczos(g, &llt, max_iter, tol).unwrap_or_else(|| faer_lambda_min_eigen(g))
        }
        Err(_) => {
            // numerically on the PSD boundary: shift, refactor, un-shift
            let tau = 1e-12 * scale;
            let mut gs = g.clone();
            for i in 0..n {
                gs[(i, i)] += tau;
            }
            match to_faer(&gs).llt(faer::Side::Lower) {
                Ok(llt) => inverse_lanczos(&gs, &llt, max_iter, tol)
                    .map(|l| (l - tau).max(0.0))
                    .unwrap_or_else(|| faer_lambda_min_eigen(g).max(0.0)),
                Err(_) => faer_lambda_min_eigen(g).max(0.0),
            }
        }
    }
}

fn faer_lambda_min_eigen(g: &DMatrix<f64>) -> f64 {
    match to_faer(g).self_adjoint_eigenvalues(faer::Side::Lower) {
        Ok(vals) => vals.into_iter().fold(f64::INFINITY, f64::min),
        Err(_) => 0.0,
    }
}

/// Lanczos iteration on G^{-1} with full reorthogonalization; returns
/// 1 / theta_max, i.e. lambda_min(G). Stops only when the Ritz residual bound
/// beta_k * |bottom component| certifies the extremal Ritz value; returns
/// `None` when certification is not reached within the iteration budget.
fn inverse_lanczos(
    g: &DMatrix<f64>,
    llt: &faer::linalg::solvers::Llt<f64>,
    max_iter: usize,
    tol: f64,
) -> Option<f64> {
    let n = g.nrows();
    let max_iter = max_iter.min(n);
    // deterministic start: fixed-seed pseudo-random avoids accidental
    // orthogonality to the extremal eigenvector
    let mut rng = crate::seeds::rng_from_seed(0x1AC2_05D1);
    let mut v = crate::seeds::gaussian_vector(n, &mut rng);
    v /= v.norm();

    let mut basis: Vec<DVector<f64>> = vec![v.clone()];
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut next_check = 8usize;

    for k in 0..max_iter {
        let rhs = faer::MatRef::from_column_major_slice(basis[k].as_slice(), n, 1);
        let w_f = llt.solve(rhs);
        let mut w = DVector::from_fn(n, |i, _| w_f[(i, 0)]);
        let alpha = basis[k].dot(&w);
        alphas.push(alpha);
        w -= alpha * &basis[k];
        if k > 0 {
            w -= betas[k - 1] * &basis[k - 1];
        }
        // full reorthogonalization
        for b in &basis {
            let c = b.dot(&w);
            w -= c * b;
        }
        let beta = w.norm();

        let exhausted = beta <= 1e-300 || k + 1 == max_iter;
        if exhausted || k + 1 == next_check {
            let theta = tridiag_theta_max(&alphas, &betas);
            if theta > 0.0 {
                if beta <= 1e-300 {
                    // invariant subspace found; theta is exact
                    return Some(1.0 / theta);
                }
                // classic Lanczos residual bound for the extremal Ritz pair
                let bottom = tridiag_top_eigvec_bottom(&alphas, &betas, theta);
                if beta * bottom <= tol * theta {
                    return Some(1.0 / theta);
                }
            } else if beta <= 1e-300 {
                return None;
            }
            next_check = (next_check * 3) / 2 + 4;
        }
        if exhausted {
            break;
        }
        betas.push(beta);
        basis.push(w / beta);
    }
    None
}

/// |last entry| of the unit eigenvector of the tridiagonal (alphas, betas)
/// belonging to its largest eigenvalue `theta`; one inverse-iteration step
/// with a dense LU solve (the tridiagonal is at most a few hundred wide).
fn tridiag_top_eigvec_bottom(alphas: &[f64], betas: &[f64], theta: f64) -> f64 {
    let k = alphas.len();
    if k == 1 {
        return 1.0;
    }
    let shift = theta.abs() * 1e-13 + 1e-300;
    let mut t = DMatrix::zeros(k, k);
    for i in 0..k {
        t[(i, i)] = alphas[i] - theta - shift;
        if i + 1 < k {
            t[(i, i + 1)] = betas[i];
            t[(i + 1, i)] = betas[i];
        }
    }
    let mut rhs = DVector::zeros(k);
    rhs[k - 1] = 1.0;
    match t.lu().solve(&rhs) {
        Some(y) => {
            let norm = y.norm();
            if norm > 0.0 && norm.is_finite() {
                (y[k - 1] / norm).abs()
            } else {
                1.0
            }
        }
        None => 1.0,
    }
}

/// Largest eigenvalue of the symmetric tridiagonal (alphas, betas) via
/// bisection on the Sturm sequence.
fn tridiag_theta_max(alphas: &[f64], betas: &[f64]) -> f64 {
    let k = alphas.len();
    if k == 0 {
        return 0.0;
    }
    // Gershgorin upper/lower bounds
    let mut hi = f64::NEG_INFINITY;
    let mut lo = f64::INFINITY;
    for i in 0..k {
        let left = if i > 0 { betas[i - 1].abs() } else { 0.0 };
        let right = if i < k - 1 { betas[i].abs() } else { 0.0 };
        hi = hi.max(alphas[i] + left + right);
        lo = lo.min(alphas[i] - left - right);
    }
    if !(hi.is_finite() && lo.is_finite()) {
        return 0.0;
    }
    // count of eigenvalues < x
    let count_below = |x: f64| -> usize {
        let mut count = 0;
        let mut d = 1.0_f64;
        let mut dprev = 1.0_f64;
        // Sturm recurrence on characteristic polynomials, with rescaling
        for i in 0..k {
            let b2 = if i > 0 { betas[i - 1] * betas[i - 1] } else { 0.0 };
            let next = (alphas[i] - x) * d - b2 * dprev;
            dprev = d;
            d = next;
            if d < 0.0 && dprev >= 0.0 || d >= 0.0 && dprev < 0.0 {
                count += 1;
            }
            let m = d.abs().max(dprev.abs());
            if m > 1e200 || (m < 1e-200 && m > 0.0) {
                d /= m;
                dprev /= m;
            }
        }
        count
    };
    let mut lo = lo - 1e-12;
    let mut hi = hi + 1e-12;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if count_below(mid) >= k {
            hi = mid;
        } else {
            lo = mid;
        }
        if (hi - lo) <= 1e-15 * hi.abs().max(1.0) {
            break;
        }
    }
    0.5 * (lo + hi)
}
