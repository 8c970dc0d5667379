//! Construction of orthogonally decomposable tensors that defeat a fixed
//! projection, perturbed instances around them, and the instability sweep.
//!
//! For an orthonormal `Q` in R^{n3 x 2}, the odeco tensor built here has all
//! three factor matrices orthonormal (so its own condition number is 1), yet
//! its third-mode projection by `Q^T` collapses every c-factor onto the same
//! direction, making the projected decomposition infinitely ill-conditioned.
//! Decompositions recovered through that projection lose accuracy at a rate
//! proportional to the inverse distance from the odeco point, which the sweep
//! measures.

use crate::conditioning;
use crate::error::{Error, Result};
use crate::linalg;
use crate::metrics;
use crate::par::par_map;
use crate::pba::{self, PbaConfig, ProjectionStrategy};
use crate::refine::{als_refine, AlsConfig};
use crate::seeds::{self, Prng};
use crate::tensor::{best_rank1, reconstruct, Cpd, Rank1Term, Tensor3};
use nalgebra::DMatrix;

/// Instance description: dimensions, rank, seed, and the projection this
/// instance is adversarial for.
#[derive(Debug, Clone)]
pub struct OdecoSpec {
    pub dims: (usize, usize, usize),
    pub rank: usize,
    pub seed: u64,
    pub q: DMatrix<f64>,
}

impl OdecoSpec {
    /// Validates the shape constraints `n1 >= n2 >= n3 > r+1 >= 2`.
    pub fn new(dims: (usize, usize, usize), rank: usize, seed: u64, q: DMatrix<f64>) -> Result<Self> {
        let (n1, n2, n3) = dims;
        if !(n1 >= n2 && n2 >= n3) {
            return Err(Error::InvalidArgument(format!(
                "dims must be non-increasing, got {dims:?}"
            )));
        }
        // The instability theorem is stated for n3 > r+1, but the reference
        // experiment runs at n3 = r+1 (89 x 29 x 11 at rank 10), where the
        // construction still collapses all but the last projected c-factor.
        if rank < 1 || n3 < rank + 1 {
            return Err(Error::InvalidArgument(format!(
                "need n3 >= r+1 >= 2, got n3 = {n3}, r = {rank}"
            )));
        }
        if q.shape() != (n3, 2) {
            return Err(Error::DimensionMismatch(format!(
                "projection is {:?}, expected ({n3}, 2)",
                q.shape()
            )));
        }
        let dev = (q.transpose() * &q - DMatrix::identity(2, 2)).norm();
        if dev > 1e-10 {
            return Err(Error::InvalidArgument(format!(
                "projection not orthonormal (deviation {dev:.3e})"
            )));
        }
        Ok(Self { dims, rank, seed, q })
    }

    /// Derives the projection itself from the seed as well.
    pub fn from_seed(dims: (usize, usize, usize), rank: usize, seed: u64) -> Result<Self> {
        let mut rng = seeds::rng_from_seed(seeds::mix_seed(seed, 0));
        let q = linalg::orthonormalize(&seeds::gaussian_matrix(dims.2, 2, &mut rng))?;
        Self::new(dims, rank, seed, q)
    }
}

/// One record of the instability sweep.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub k: u32,
    /// Largest term-wise distance from the odeco decomposition.
    pub epsilon_k: f64,
    pub pba_forward_error: f64,
    /// NaN when refinement was not requested.
    pub refined_forward_error: f64,
    pub omega: f64,
}

/// Builds the odeco tensor adversarial for `spec.q`:
/// `A'`, `B'` are Q-factors of seeded Gaussian matrices, and
/// `C' = [Q_perp Q] (I_{n3 x r} - (2/n3) 1 1^T) diag(1, -1, ..., -1)`,
/// which is orthonormal and satisfies `Q^T c_1' = (2/n3)[-1, -1]^T`,
/// `Q^T c_i' = (2/n3)[1, 1]^T` for i >= 2.
pub fn make_bad_odeco(spec: &OdecoSpec) -> Result<Cpd> {
    let (n1, n2, n3) = spec.dims;
    let r = spec.rank;
    let mut rng = seeds::rng_from_seed(seeds::mix_seed(spec.seed, 1));

    let a = linalg::orthonormalize(&seeds::gaussian_matrix(n1, r, &mut rng))?;
    let b = linalg::orthonormalize(&seeds::gaussian_matrix(n2, r, &mut rng))?;

    // deterministic orthonormal completion of Q
    let mut seed_mat = DMatrix::zeros(n3, n3);
    seed_mat.view_mut((0, 0), (n3, 2)).copy_from(&spec.q);
    seed_mat
        .view_mut((0, 2), (n3, n3 - 2))
        .copy_from(&seeds::gaussian_matrix(n3, n3 - 2, &mut rng));
    let full = seed_mat.qr().q();
    let q_perp = full.columns(2, n3 - 2).clone_owned();
    let mut u = DMatrix::zeros(n3, n3);
    u.view_mut((0, 0), (n3, n3 - 2)).copy_from(&q_perp);
    u.view_mut((0, n3 - 2), (n3, 2)).copy_from(&spec.q);

    // M = I_{n3 x r} - (2/n3) * ones
    let mut m = DMatrix::zeros(n3, r);
    for i in 0..r {
        m[(i, i)] = 1.0;
    }
    m.add_scalar_mut(-2.0 / n3 as f64);
    let mut c = &u * m;
    for i in 1..r {
        let mut col = c.column_mut(i);
        col.neg_mut();
    }

    let gram_dev = (c.transpose() * &c - DMatrix::identity(r, r)).norm();
    if gram_dev > 1e-12 {
        return Err(Error::InvalidArgument(format!(
            "odeco c-factor lost orthonormality ({gram_dev:.3e})"
        )));
    }
    Cpd::from_factors(&a, &b, &c)
}

/// The third-mode projection of a decomposition: terms `a_i ⊗ b_i ⊗ (Q^T c_i)`.
pub fn project_cpd(cpd: &Cpd, q: &DMatrix<f64>) -> Result<Cpd> {
    let terms = cpd
        .terms()
        .iter()
        .map(|t| Rank1Term::new(t.a.clone(), t.b.clone(), q.transpose() * &t.c))
        .collect::<Result<Vec<_>>>()?;
    Cpd::new(terms)
}

/// Perturbs each term by a normalized Gaussian tensor of size `2^-k` and
/// re-extracts its rank-1 approximation. Returns the perturbed decomposition
/// and `epsilon_k`, the largest term-wise distance to the original.
pub fn perturb_decomposition(odeco: &Cpd, k: u32, rng: &mut Prng) -> Result<(Cpd, f64)> {
    perturb_decomposition_with(odeco, k, rng, 500, 1e-14)
}

pub fn perturb_decomposition_with(
    odeco: &Cpd,
    k: u32,
    rng: &mut Prng,
    rank1_max_iters: usize,
    rank1_tol: f64,
) -> Result<(Cpd, f64)> {
    let dims = odeco.dims();
    let n = dims.0 * dims.1 * dims.2;
    let scale = 2f64.powi(-(k as i32));
    let mut terms = Vec::with_capacity(odeco.rank());
    let mut epsilon_k = 0.0_f64;
    for (i, term) in odeco.terms().iter().enumerate() {
        let dense = term.dense();
        let mut noise = vec![0.0; n];
        for x in noise.iter_mut() {
            *x = seeds::gaussian_scalar(rng);
        }
        let noise = Tensor3::new(dims, noise)?;
        let noise = noise.scale(scale / noise.norm());
        let perturbed = dense.add(&noise)?;
        let approx = best_rank1(&perturbed, rank1_max_iters, rank1_tol)?;
        if !approx.converged {
            return Err(Error::NonConvergence {
                iters: approx.iters,
                context: format!("rank-1 extraction at k = {k}, term {i}"),
            });
        }
        let eps = approx.term.dense().sub(&dense)?.norm();
        epsilon_k = epsilon_k.max(eps);
        terms.push(approx.term);
    }
    Ok((Cpd::new(terms)?, epsilon_k))
}

/// Full instability sweep: for each k in `k_range`, perturb at scale `2^-k`,
/// decompose through the fixed adversarial projection, optionally refine, and
/// score forward errors and the excess factor against the perturbed truth.
///
/// The pencil tolerance is opened up to 1e-5 so that roundoff-degenerate
/// eigenvalue clusters pass through as (inaccurate) real eigenpairs instead
/// of aborting the fixed-projection run; redraws are disabled because a
/// redrawn projection would no longer be the one the instance targets.
pub fn adversarial_sweep(
    spec: &OdecoSpec,
    k_range: (u32, u32),
    refine: bool,
) -> Result<Vec<SweepRow>> {
    let (kmin, kmax) = k_range;
    if kmin < 1 || kmax < kmin {
        return Err(Error::InvalidArgument(format!(
            "bad k range [{kmin}, {kmax}]"
        )));
    }
    let odeco = make_bad_odeco(spec)?;
    let ks: Vec<u32> = (kmin..=kmax).collect();
    let rows = par_map(ks.len(), |idx| -> Result<SweepRow> {
        let k = ks[idx];
        let mut rng = seeds::rng_from_seed(seeds::mix_seed(spec.seed, 1000 + k as u64));
        let (reference, epsilon_k) = perturb_decomposition(&odeco, k, &mut rng)?;
        let t = reconstruct(&reference);

        let cfg = PbaConfig {
            rank: spec.rank,
            projection_strategy: ProjectionStrategy::Fixed(spec.q.clone()),
            max_projection_retries: 0,
            pencil_tol: 1e-5,
            seed: seeds::mix_seed(spec.seed, 2000 + k as u64),
        };
        let report = pba::pba_decompose(&t, &cfg)?;
        let pba_fwd = metrics::forward_error_auto(&reference, &report.cpd)?.forward_error;

        let refined_fwd = if refine {
            let als_cfg = AlsConfig {
                max_iters: 2000,
                ..AlsConfig::default()
            };
            let mut best = als_refine(&t, &report.cpd, &als_cfg)?;
            if best.final_residual > 1e-12 * t.norm() {
                // deep in the sweep the adversarial-projection output can sit
                // outside the least-squares basin; restart from the adaptive
                // projection, which is how the reference refined solver
                // initializes itself
                let fallback_cfg = PbaConfig {
                    rank: spec.rank,
                    projection_strategy: ProjectionStrategy::HosvdLeadingTwo,
                    max_projection_retries: 5,
                    pencil_tol: 1e-10,
                    seed: seeds::mix_seed(spec.seed, 3000 + k as u64),
                };
                if let Ok(second) = pba::pba_decompose(&t, &fallback_cfg) {
                    let cand = als_refine(&t, &second.cpd, &als_cfg)?;
                    if cand.final_residual < best.final_residual {
                        best = cand;
                    }
                }
            }
            metrics::forward_error_auto(&reference, &best.cpd)?.forward_error
        } else {
            f64::NAN
        };

        let kappa_ref = conditioning::kappa(&reference, conditioning::DEFAULT_INF_THRESHOLD)?;
        let backward = metrics::representation_backward_norm_default(&t)?;
        let omega = metrics::excess_factor_value(pba_fwd, kappa_ref, backward)?;

        Ok(SweepRow {
            k,
            epsilon_k,
            pba_forward_error: pba_fwd,
            refined_forward_error: refined_fwd,
            omega,
        })
    });
    rows.into_iter().collect()
}

/// Least-squares power-law fit on log-log axes: returns `(coefficient,
/// exponent)` of `y = coefficient * x^exponent`.
pub fn fit_powerlaw(points: &[(f64, f64)]) -> Result<(f64, f64)> {
    if points.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "power-law fit needs at least 2 points, got {}",
            points.len()
        )));
    }
    if points.iter().any(|&(x, y)| !(x > 0.0 && y > 0.0)) {
        return Err(Error::InvalidArgument(
            "power-law fit needs strictly positive data".into(),
        ));
    }
    let n = points.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(x, y) in points {
        let lx = x.ln();
        let ly = y.ln();
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    let denom = n * sxx - sx * sx;
    if denom.abs() <= 1e-300 {
        return Err(Error::InvalidArgument(
            "power-law fit is degenerate: all x equal".into(),
        ));
    }
    let slope = (n * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / n;
    Ok((intercept.exp(), slope))
}
