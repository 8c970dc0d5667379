//! Alternating-least-squares refinement of a CPD.
//!
//! Cyclic normal-equation updates of the three factor matrices against the
//! unfoldings of the target tensor. The residual is evaluated densely after
//! every full cycle, so the monotone-descent contract is checked on the real
//! quantity rather than a cheap surrogate.

use crate::error::Result;
use crate::linalg;
use crate::tensor::{flatten, khatri_rao, reconstruct, Cpd, Tensor3};
use crate::UNIT_ROUNDOFF;
use nalgebra::DMatrix;

#[derive(Debug, Clone)]
pub struct AlsConfig {
    pub max_iters: usize,
    /// Stop when `residual <= residual_tol * ||t||_F`.
    pub residual_tol: f64,
    /// Stop when a full cycle decreases the residual by less than this
    /// relative amount.
    pub stagnation_tol: f64,
}

impl Default for AlsConfig {
    fn default() -> Self {
        Self {
            max_iters: 500,
            residual_tol: 2.0 * 10f64.sqrt() * UNIT_ROUNDOFF,
            stagnation_tol: 1e-14,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AlsResult {
    pub cpd: Cpd,
    pub iters: usize,
    /// `||t - reconstruct||_F` at exit (absolute, not relative).
    pub final_residual: f64,
    /// Set when a Khatri-Rao Gram matrix was numerically singular and the
    /// update fell back to a pseudoinverse solve.
    pub gram_singular: bool,
}

fn residual(t: &Tensor3, a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>) -> f64 {
    let cpd = Cpd::from_factors(a, b, c);
    match cpd {
        Ok(cpd) => reconstruct(&cpd).sub(t).map(|d| d.norm()).unwrap_or(f64::INFINITY),
        Err(_) => f64::INFINITY,
    }
}

/// One normal-equations update of the mode-`mode` factor.
/// Returns the new factor and whether the Gram matrix was singular.
fn update_factor(
    unfolding: &DMatrix<f64>,
    f1: &DMatrix<f64>,
    f2: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, bool)> {
    let gram = (f1.transpose() * f1).component_mul(&(f2.transpose() * f2));
    let kr = khatri_rao(f1, f2)?;
    let rhs = unfolding * kr; // n_k x r
    match nalgebra::Cholesky::new(gram.clone()) {
        Some(chol) => {
            let sol = chol.solve(&rhs.transpose());
            Ok((sol.transpose(), false))
        }
        None => {
            let pinv = linalg::pseudoinverse(&gram)?;
            Ok((rhs * pinv.transpose(), true))
        }
    }
}

/// Rebalance: unit-norm a- and b-columns, magnitude on c. Keeps the Gram
/// matrices well scaled across iterations without changing the model.
fn rebalance(a: &mut DMatrix<f64>, b: &mut DMatrix<f64>, c: &mut DMatrix<f64>) {
    for j in 0..a.ncols() {
        let na = a.column(j).norm();
        let nb = b.column(j).norm();
        if na > 0.0 {
            let mut col = a.column_mut(j);
            col /= na;
        }
        if nb > 0.0 {
            let mut col = b.column_mut(j);
            col /= nb;
        }
        let mut col = c.column_mut(j);
        col *= na * nb;
    }
}

/// Refines `init` against `t` by cyclic least squares until the residual
/// target, stagnation, or the iteration cap.
pub fn als_refine(t: &Tensor3, init: &Cpd, cfg: &AlsConfig) -> Result<AlsResult> {
    let tnorm = t.norm();
    let target = cfg.residual_tol * tnorm;
    let t1 = flatten(t, 1)?;
    let t2 = flatten(t, 2)?;
    let t3 = flatten(t, 3)?;

    let mut a = init.factor_a();
    let mut b = init.factor_b();
    let mut c = init.factor_c();
    let mut gram_singular = false;

    let mut prev = residual(t, &a, &b, &c);
    if prev <= target {
        return Ok(AlsResult {
            cpd: init.clone(),
            iters: 0,
            final_residual: prev,
            gram_singular: false,
        });
    }

    let mut iters = 0;
    let mut best = (a.clone(), b.clone(), c.clone(), prev);
    for k in 0..cfg.max_iters {
        iters = k + 1;
        let (na, s1) = update_factor(&t1, &b, &c)?;
        a = na;
        let (nb, s2) = update_factor(&t2, &a, &c)?;
        b = nb;
        let (nc, s3) = update_factor(&t3, &a, &b)?;
        c = nc;
        gram_singular |= s1 | s2 | s3;
        rebalance(&mut a, &mut b, &mut c);

        let res = residual(t, &a, &b, &c);
        if !res.is_finite() {
            // fall back to the best iterate seen
            let (ba, bb, bc, br) = best;
            return Ok(AlsResult {
                cpd: Cpd::from_factors(&ba, &bb, &bc)?,
                iters,
                final_residual: br,
                gram_singular: true,
            });
        }
        if res < best.3 {
            best = (a.clone(), b.clone(), c.clone(), res);
        }
        if res <= target {
            prev = res;
            break;
        }
        if prev - res <= cfg.stagnation_tol * prev {
            prev = res;
            break;
        }
        prev = res;
    }

    Ok(AlsResult {
        cpd: Cpd::from_factors(&a, &b, &c)?,
        iters,
        final_residual: prev,
        gram_singular,
    })
}
