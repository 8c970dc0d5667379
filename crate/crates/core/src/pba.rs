//! The pencil-based decomposition pipeline.
//!
//! Project the input tensor onto an `n1 x n2 x 2` tensor with an orthonormal
//! `Q` (S1), compress it by a sequentially truncated orthogonal Tucker
//! decomposition, eigendecompose the resulting 2-slice matrix pencil to get
//! the first factor matrix (S2), then recover the remaining factors from one
//! least-squares solve against the mode-1 unfolding followed by per-column
//! rank-1 splits (S3, S4).

use crate::error::{Error, Result};
use crate::linalg;
use crate::seeds::{self, Prng};
use crate::tensor::{flatten, multilinear_multiply, reconstruct, Cpd, Rank1Term, Tensor3};
use nalgebra::{DMatrix, DVector};

/// How the projection matrix `Q` is chosen.
#[derive(Debug, Clone)]
pub enum ProjectionStrategy {
    /// Q-factor of a seeded standard-Gaussian `n3 x 2` matrix.
    RandomOrthonormal,
    /// Two leading left singular vectors of the mode-3 unfolding.
    HosvdLeadingTwo,
    /// Caller-supplied orthonormal `n3 x 2` matrix.
    Fixed(DMatrix<f64>),
}

#[derive(Debug, Clone)]
pub struct PbaConfig {
    pub rank: usize,
    pub projection_strategy: ProjectionStrategy,
    pub max_projection_retries: usize,
    pub pencil_tol: f64,
    pub seed: u64,
}

impl PbaConfig {
    pub fn new(rank: usize, seed: u64) -> Self {
        Self {
            rank,
            projection_strategy: ProjectionStrategy::RandomOrthonormal,
            max_projection_retries: 5,
            pencil_tol: 1e-10,
            seed,
        }
    }
}

/// Outcome of one decomposition run.
#[derive(Debug, Clone)]
pub struct PbaReport {
    pub cpd: Cpd,
    pub projection_used: DMatrix<f64>,
    pub retries_used: usize,
    /// `||t - reconstruct(cpd)||_F / ||t||_F`.
    pub backward_residual: f64,
    /// Smallest pairwise gap of the pencil eigenvalues.
    pub pencil_separation: f64,
}

/// Draws the `n3 x 2` orthonormal projection per the strategy.
pub fn choose_projection(
    t: &Tensor3,
    strategy: &ProjectionStrategy,
    rng: &mut Prng,
) -> Result<DMatrix<f64>> {
    let n3 = t.dims().2;
    if n3 < 2 {
        return Err(Error::InvalidArgument(format!(
            "projection needs n3 >= 2, got {n3}"
        )));
    }
    match strategy {
        ProjectionStrategy::RandomOrthonormal => {
            let g = seeds::gaussian_matrix(n3, 2, rng);
            linalg::orthonormalize(&g)
        }
        ProjectionStrategy::HosvdLeadingTwo => {
            let f3 = flatten(t, 3)?;
            let dec = linalg::svd(&f3)?;
            let mut q = DMatrix::zeros(n3, 2);
            q.set_column(0, &dec.u.column(0).clone_owned());
            q.set_column(1, &dec.u.column(1).clone_owned());
            linalg::fix_column_signs(&mut q);
            Ok(q)
        }
        ProjectionStrategy::Fixed(q) => {
            if q.shape() != (n3, 2) {
                return Err(Error::DimensionMismatch(format!(
                    "fixed projection is {:?}, expected ({n3}, 2)",
                    q.shape()
                )));
            }
            let dev = (q.transpose() * q - DMatrix::identity(2, 2)).norm();
            if dev > 1e-10 {
                return Err(Error::InvalidArgument(format!(
                    "fixed projection is not orthonormal (deviation {dev:.3e})"
                )));
            }
            Ok(q.clone())
        }
    }
}

/// Sequentially truncated orthogonal Tucker compression of an `n1 x n2 x 2`
/// tensor to an `r x r x 2` core, mode 1 first.
pub fn st_hosvd_compress(
    b: &Tensor3,
    r: usize,
) -> Result<(DMatrix<f64>, DMatrix<f64>, Tensor3)> {
    let (n1, n2, n3) = b.dims();
    if n3 != 2 {
        return Err(Error::DimensionMismatch(format!(
            "compression expects an n1 x n2 x 2 tensor, got {:?}",
            b.dims()
        )));
    }
    if r > n1.min(n2) {
        return Err(Error::RankTooLarge {
            rank: r,
            limit: n1.min(n2),
            context: "st_hosvd_compress",
        });
    }
    let f1 = flatten(b, 1)?;
    let dec1 = linalg::svd(&f1)?;
    let ratio1 = dec1.singular_values[r - 1] / dec1.singular_values[0].max(f64::MIN_POSITIVE);
    if !(ratio1 > 1e-8) {
        return Err(Error::DegenerateCompression {
            mode: 1,
            rank: r,
            ratio: ratio1,
        });
    }
    let mut q1 = dec1.u.columns(0, r).clone_owned();
    linalg::fix_column_signs(&mut q1);

    let partial = multilinear_multiply(
        &q1.transpose(),
        &DMatrix::identity(n2, n2),
        &DMatrix::identity(2, 2),
        b,
    )?;
    let f2 = flatten(&partial, 2)?;
    let dec2 = linalg::svd(&f2)?;
    let ratio2 = dec2.singular_values[r - 1] / dec2.singular_values[0].max(f64::MIN_POSITIVE);
    if !(ratio2 > 1e-8) {
        return Err(Error::DegenerateCompression {
            mode: 2,
            rank: r,
            ratio: ratio2,
        });
    }
    let mut q2 = dec2.u.columns(0, r).clone_owned();
    linalg::fix_column_signs(&mut q2);

    let core = multilinear_multiply(
        &DMatrix::identity(r, r),
        &q2.transpose(),
        &DMatrix::identity(2, 2),
        &partial,
    )?;
    Ok((q1, q2, core))
}

/// Splits a vectorized `n2 x n3` matrix into its leading rank-1 factors:
/// `b` unit norm with first nonzero entry positive, magnitude on `c`.
pub fn split_rank1_column(w: &DVector<f64>, n2: usize, n3: usize) -> Result<(DVector<f64>, DVector<f64>)> {
    if w.len() != n2 * n3 {
        return Err(Error::DimensionMismatch(format!(
            "column length {} vs {n2} x {n3}",
            w.len()
        )));
    }
    if w.norm() == 0.0 {
        return Err(Error::ZeroInput("rank-1 split of a zero column".into()));
    }
    let mut m = DMatrix::zeros(n2, n3);
    for i2 in 0..n2 {
        for i3 in 0..n3 {
            m[(i2, i3)] = w[i2 * n3 + i3];
        }
    }
    let dec = linalg::svd(&m)?;
    let sigma = dec.singular_values[0];
    let mut b = dec.u.column(0).clone_owned();
    let mut c = dec.v.column(0).clone_owned() * sigma;
    if linalg::first_nonzero_sign(&b) < 0.0 {
        b.neg_mut();
        c.neg_mut();
    }
    Ok((b, c))
}

fn pencil_slices(core: &Tensor3) -> (DMatrix<f64>, DMatrix<f64>) {
    let (r, _, _) = core.dims();
    let mut s1 = DMatrix::zeros(r, r);
    let mut s2 = DMatrix::zeros(r, r);
    for x in 0..r {
        for y in 0..r {
            s1[(x, y)] = core.get(x, y, 0);
            s2[(x, y)] = core.get(x, y, 1);
        }
    }
    (s1, s2)
}

/// Runs the full pencil-based decomposition.
///
/// On a rejected pencil (complex eigenvalues or singular second slice) the
/// projection is redrawn at random, up to `max_projection_retries` times.
pub fn pba_decompose(t: &Tensor3, cfg: &PbaConfig) -> Result<PbaReport> {
    let (n1, n2, n3) = t.dims();
    let r = cfg.rank;
    if r == 0 {
        return Err(Error::InvalidArgument("rank must be at least 1".into()));
    }
    if r > n2 {
        return Err(Error::RankTooLarge {
            rank: r,
            limit: n2,
            context: "pba needs r <= n2",
        });
    }
    if n2 > n1 {
        return Err(Error::InvalidArgument(format!(
            "pba expects n1 >= n2, got {n1} < {n2}"
        )));
    }
    if n3 < 2 {
        return Err(Error::InvalidArgument("pba needs n3 >= 2".into()));
    }

    let mut rng = seeds::rng_from_seed(cfg.seed);
    let mut q = choose_projection(t, &cfg.projection_strategy, &mut rng)?;
    let tnorm = t.norm();
    let mut attempt = 0usize;

    loop {
        match decompose_with_projection(t, r, &q, cfg.pencil_tol) {
            Ok((cpd, separation)) => {
                let backward_residual =
                    reconstruct(&cpd).sub(t)?.norm() / tnorm.max(f64::MIN_POSITIVE);
                return Ok(PbaReport {
                    cpd,
                    projection_used: q,
                    retries_used: attempt,
                    backward_residual,
                    pencil_separation: separation,
                });
            }
            Err(e @ (Error::ComplexEigenvalues { .. } | Error::SingularPencil { .. })) => {
                if attempt >= cfg.max_projection_retries {
                    return Err(Error::RetriesExhausted {
                        attempts: attempt + 1,
                        last: Box::new(e),
                    });
                }
                attempt += 1;
                q = choose_projection(t, &ProjectionStrategy::RandomOrthonormal, &mut rng)?;
            }
            Err(e) => return Err(e),
        }
    }
}

fn decompose_with_projection(
    t: &Tensor3,
    r: usize,
    q: &DMatrix<f64>,
    pencil_tol: f64,
) -> Result<(Cpd, f64)> {
    let (n1, n2, n3) = t.dims();

    // S1: contract the third mode
    let b = multilinear_multiply(
        &DMatrix::identity(n1, n1),
        &DMatrix::identity(n2, n2),
        &q.transpose(),
        t,
    )?;

    // compression and the pencil
    let (q1, _q2, core) = st_hosvd_compress(&b, r)?;
    let (s1, s2) = pencil_slices(&core);
    let pencil = linalg::solve_pencil(&s1, &s2, pencil_tol)?;
    let separation = pencil.min_separation();

    // S2: first factor matrix, unit columns, canonical signs
    let mut a = &q1 * &pencil.eigenvectors;
    for j in 0..r {
        let n = a.column(j).norm();
        if n > 0.0 {
            let mut col = a.column_mut(j);
            col /= n;
        }
    }
    linalg::fix_column_signs(&mut a);

    // S3: remaining factors from one least-squares solve per column
    let f1 = flatten(t, 1)?;
    let w = (linalg::pseudoinverse(&a)? * f1).transpose(); // (n2*n3) x r
    let mut terms = Vec::with_capacity(r);
    for i in 0..r {
        let (bi, ci) = split_rank1_column(&w.column(i).clone_owned(), n2, n3)?;
        terms.push(Rank1Term::new(a.column(i).clone_owned(), bi, ci)?);
    }
    Ok((Cpd::new(terms)?, separation))
}
