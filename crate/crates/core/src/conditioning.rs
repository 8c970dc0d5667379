//! Condition number of the tensor rank decomposition problem.
//!
//! The condition number of a CPD `{A_1, ..., A_r}` is the reciprocal of the
//! smallest singular value of the Terracini matrix `[U_1 ... U_r]`, where
//! `U_i` holds an orthonormal basis of the tangent space to the rank-1
//! manifold at `A_i`. This module builds those bases deterministically,
//! computes the condition number by two interchangeable routes (dense SVD of
//! the assembled matrix, or its analytic Gram matrix plus a Cholesky-Lanczos
//! smallest-eigenvalue solve), and provides the identifiability diagnostics
//! (Kruskal ranks, general linear position) and the limiting tail law for
//! condition numbers of random decompositions.

use crate::error::{Error, Result};
use crate::linalg;
use crate::tensor::{Cpd, Rank1Term};
use nalgebra::{DMatrix, DVector};

/// Combinatorial budget for exhaustive subset enumeration.
const SUBSET_BUDGET: u128 = 1_000_000;

/// Orthonormal tangent-space basis data for one rank-1 term, built from the
/// unit-normalized factors. The basis is
/// `[ I ⊗ b ⊗ c | a ⊗ Q2 ⊗ c | a ⊗ b ⊗ Q3 ]`
/// with `Q2`, `Q3` deterministic orthonormal complements of `b` and `c`.
#[derive(Debug, Clone)]
pub struct TangentBasis {
    pub a: DVector<f64>,
    pub b: DVector<f64>,
    pub c: DVector<f64>,
    pub q2: DMatrix<f64>,
    pub q3: DMatrix<f64>,
}

impl TangentBasis {
    pub fn new(term: &Rank1Term) -> Result<Self> {
        let (na, nb, nc) = (term.a.norm(), term.b.norm(), term.c.norm());
        if na == 0.0 || nb == 0.0 || nc == 0.0 {
            return Err(Error::ZeroInput("tangent basis of a zero factor".into()));
        }
        let a = &term.a / na;
        let b = &term.b / nb;
        let c = &term.c / nc;
        let q2 = linalg::householder_complement(&b);
        let q3 = linalg::householder_complement(&c);
        Ok(Self { a, b, c, q2, q3 })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.a.len(), self.b.len(), self.c.len())
    }

    /// Number of basis columns: `n1 + n2 + n3 - 2`.
    pub fn ncols(&self) -> usize {
        let (n1, n2, n3) = self.dims();
        n1 + n2 + n3 - 2
    }

    /// Dense basis matrix of shape `(n1*n2*n3) x (n1+n2+n3-2)`.
    pub fn matrix(&self) -> DMatrix<f64> {
        let (n1, n2, n3) = self.dims();
        let rows = n1 * n2 * n3;
        let mut u = DMatrix::zeros(rows, self.ncols());
        // block 1: e_k ⊗ b ⊗ c
        for k in 0..n1 {
            for i2 in 0..n2 {
                for i3 in 0..n3 {
                    u[((k * n2 + i2) * n3 + i3, k)] = self.b[i2] * self.c[i3];
                }
            }
        }
        // block 2: a ⊗ q2_m ⊗ c
        for m in 0..n2 - 1 {
            let col = n1 + m;
            for i1 in 0..n1 {
                for i2 in 0..n2 {
                    let aq = self.a[i1] * self.q2[(i2, m)];
                    for i3 in 0..n3 {
                        u[((i1 * n2 + i2) * n3 + i3, col)] = aq * self.c[i3];
                    }
                }
            }
        }
        // block 3: a ⊗ b ⊗ q3_m
        for m in 0..n3 - 1 {
            let col = n1 + n2 - 1 + m;
            for i1 in 0..n1 {
                for i2 in 0..n2 {
                    let ab = self.a[i1] * self.b[i2];
                    for i3 in 0..n3 {
                        u[((i1 * n2 + i2) * n3 + i3, col)] = ab * self.q3[(i3, m)];
                    }
                }
            }
        }
        u
    }
}

/// Orthonormal tangent basis of the rank-1 manifold at `term`, as a dense
/// matrix. Scale-invariant: the factors are normalized first.
pub fn tangent_basis(term: &Rank1Term) -> Result<DMatrix<f64>> {
    Ok(TangentBasis::new(term)?.matrix())
}

/// The block matrix `[U_1 ... U_r]` whose smallest singular value inverts to
/// the condition number.
#[derive(Debug, Clone)]
pub struct TerraciniMatrix {
    bases: Vec<TangentBasis>,
}

impl TerraciniMatrix {
    pub fn new(cpd: &Cpd) -> Result<Self> {
        let bases = cpd
            .terms()
            .iter()
            .map(TangentBasis::new)
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { bases })
    }

    pub fn bases(&self) -> &[TangentBasis] {
        &self.bases
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.bases[0].dims()
    }

    pub fn nrows(&self) -> usize {
        let (n1, n2, n3) = self.dims();
        n1 * n2 * n3
    }

    pub fn ncols(&self) -> usize {
        self.bases.iter().map(|b| b.ncols()).sum()
    }

    /// Dense concatenation `[U_1 ... U_r]`.
    pub fn assembled(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.nrows(), self.ncols());
        let mut at = 0;
        for b in &self.bases {
            let m = b.matrix();
            out.view_mut((0, at), (self.nrows(), m.ncols())).copy_from(&m);
            at += m.ncols();
        }
        out
    }

    /// Gram matrix `T^T T` assembled analytically from factor inner products,
    /// never touching the `n1*n2*n3`-dimensional ambient space.
    pub fn gram(&self) -> DMatrix<f64> {
        let r = self.bases.len();
        let bw = self.bases[0].ncols();
        let k = r * bw;
        let mut g = DMatrix::zeros(k, k);
        for i in 0..r {
            g.view_mut((i * bw, i * bw), (bw, bw))
                .copy_from(&DMatrix::identity(bw, bw));
            for j in i + 1..r {
                let block = gram_block(&self.bases[i], &self.bases[j]);
                g.view_mut((i * bw, j * bw), (bw, bw)).copy_from(&block);
                g.view_mut((j * bw, i * bw), (bw, bw))
                    .copy_from(&block.transpose());
            }
        }
        g
    }

    /// Smallest singular value, routed by size: dense SVD when affordable,
    /// otherwise the analytic Gram and a smallest-eigenvalue solve.
    pub fn sigma_min(&self) -> f64 {
        let n = self.nrows();
        let k = self.ncols();
        if k > n {
            return 0.0;
        }
        if n.saturating_mul(k * k) <= 40_000_000 {
            let sv = linalg::singular_values(&self.assembled()).expect("finite tangent bases");
            sv[k - 1]
        } else {
            linalg::lambda_min_spd(&self.gram()).max(0.0).sqrt()
        }
    }

    /// (sigma_max, sigma_min) certified by an orthogonal factorization of the
    /// assembled matrix; resolves sigma_min down to ~1e-13 * sigma_max, unlike
    /// the squared Gram route.
    pub fn sigma_extrema_certified(&self) -> Result<(f64, f64)> {
        let m = self.assembled();
        if self.ncols() > self.nrows() {
            let (smax, _) = linalg::sigma_extrema_tall(&m)?;
            return Ok((smax, 0.0));
        }
        linalg::sigma_extrema_tall(&m)
    }
}

/// Cross-Gram block `U_i^T U_j` from factor inner products.
fn gram_block(ui: &TangentBasis, uj: &TangentBasis) -> DMatrix<f64> {
    let (n1, n2, n3) = ui.dims();
    let bw = ui.ncols();
    let ca = ui.a.dot(&uj.a);
    let cb = ui.b.dot(&uj.b);
    let cc = ui.c.dot(&uj.c);
    let q2i_bj = ui.q2.transpose() * &uj.b; // (n2-1)
    let q2j_bi = uj.q2.transpose() * &ui.b; // (n2-1)
    let q3i_cj = ui.q3.transpose() * &uj.c; // (n3-1)
    let q3j_ci = uj.q3.transpose() * &ui.c; // (n3-1)

    let mut g = DMatrix::zeros(bw, bw);
    // (1,1): cb*cc*I
    for kk in 0..n1 {
        g[(kk, kk)] = cb * cc;
    }
    // (1,2): cc * a_j (Q2_j^T b_i)^T
    for kk in 0..n1 {
        for m in 0..n2 - 1 {
            g[(kk, n1 + m)] = cc * uj.a[kk] * q2j_bi[m];
        }
    }
    // (1,3): cb * a_j (Q3_j^T c_i)^T
    for kk in 0..n1 {
        for m in 0..n3 - 1 {
            g[(kk, n1 + n2 - 1 + m)] = cb * uj.a[kk] * q3j_ci[m];
        }
    }
    // (2,1): cc * (Q2_i^T b_j) a_i^T
    for m in 0..n2 - 1 {
        for l in 0..n1 {
            g[(n1 + m, l)] = cc * q2i_bj[m] * ui.a[l];
        }
    }
    // (2,2): ca*cc * Q2_i^T Q2_j
    let q22 = ui.q2.transpose() * &uj.q2;
    for m in 0..n2 - 1 {
        for s in 0..n2 - 1 {
            g[(n1 + m, n1 + s)] = ca * cc * q22[(m, s)];
        }
    }
    // (2,3): ca * (Q2_i^T b_j)(Q3_j^T c_i)^T
    for m in 0..n2 - 1 {
        for s in 0..n3 - 1 {
            g[(n1 + m, n1 + n2 - 1 + s)] = ca * q2i_bj[m] * q3j_ci[s];
        }
    }
    // (3,1): cb * (Q3_i^T c_j) a_i^T
    for m in 0..n3 - 1 {
        for l in 0..n1 {
            g[(n1 + n2 - 1 + m, l)] = cb * q3i_cj[m] * ui.a[l];
        }
    }
    // (3,2): ca * (Q3_i^T c_j)(Q2_j^T b_i)^T
    for m in 0..n3 - 1 {
        for s in 0..n2 - 1 {
            g[(n1 + n2 - 1 + m, n1 + s)] = ca * q3i_cj[m] * q2j_bi[s];
        }
    }
    // (3,3): ca*cb * Q3_i^T Q3_j
    let q33 = ui.q3.transpose() * &uj.q3;
    for m in 0..n3 - 1 {
        for s in 0..n3 - 1 {
            g[(n1 + n2 - 1 + m, n1 + n2 - 1 + s)] = ca * cb * q33[(m, s)];
        }
    }
    g
}

/// Default threshold above which the condition number is reported infinite.
pub const DEFAULT_INF_THRESHOLD: f64 = 1e12;

/// Condition number plus identifiability diagnostics.
#[derive(Debug, Clone)]
pub struct ConditionReport {
    /// 1 / sigma_min, or +inf past the threshold.
    pub kappa: f64,
    pub sigma_min: f64,
    pub pair_lower_bound: f64,
    pub kruskal_ranks: (usize, usize, usize),
    pub kruskal_identifiable: bool,
    pub sglp_ok: bool,
    pub entry_nonzero_ok: bool,
}

/// Condition number of the decomposition, with diagnostics. `inf_threshold`
/// is the sentinel cutoff past which kappa is reported as +inf.
pub fn condition_number(cpd: &Cpd, inf_threshold: f64) -> Result<ConditionReport> {
    let sigma_min = TerraciniMatrix::new(cpd)?.sigma_min();
    let kappa = if sigma_min > 0.0 { 1.0 / sigma_min } else { f64::INFINITY };
    let kappa = if kappa > inf_threshold { f64::INFINITY } else { kappa };

    let plb = pair_lower_bound(cpd);
    let tol = 1e-10;
    let k_a = kruskal_rank(&cpd.factor_a(), tol)?;
    let k_b = kruskal_rank(&cpd.factor_b(), tol)?;
    let k_c = kruskal_rank(&cpd.factor_c(), tol)?;
    let r = cpd.rank();
    // a single nonzero rank-1 term is trivially identifiable; the k > 1
    // requirement of the criterion only makes sense from rank 2 on
    let kruskal_identifiable =
        r == 1 || (k_a > 1 && k_b > 1 && k_c > 1 && 2 * r <= k_a + k_b + k_c - 2);
    let sglp_ok = sglp(cpd, tol)?;
    let entry_nonzero_ok = cpd.terms().iter().all(|t| t.a[0] * t.b[0] * t.c[0] != 0.0);

    Ok(ConditionReport {
        kappa,
        sigma_min,
        pair_lower_bound: plb,
        kruskal_ranks: (k_a, k_b, k_c),
        kruskal_identifiable,
        sglp_ok,
        entry_nonzero_ok,
    })
}

/// Condition number only; skips the combinatorial diagnostics. This is what
/// the Monte Carlo loops call.
pub fn kappa(cpd: &Cpd, inf_threshold: f64) -> Result<f64> {
    let sigma_min = TerraciniMatrix::new(cpd)?.sigma_min();
    let k = if sigma_min > 0.0 { 1.0 / sigma_min } else { f64::INFINITY };
    Ok(if k > inf_threshold { f64::INFINITY } else { k })
}

/// Pairwise lower bound on the condition number:
/// `max_{i != j} 1 / sqrt(1 - |<c_i, c_j>|)` over unit-normalized c-factors.
/// Returns 1 for a single term (vacuous) and +inf for parallel c-factors.
pub fn pair_lower_bound(cpd: &Cpd) -> f64 {
    let r = cpd.rank();
    if r < 2 {
        return 1.0;
    }
    let hats: Vec<DVector<f64>> = cpd.terms().iter().map(|t| &t.c / t.c.norm()).collect();
    let mut best = 1.0_f64;
    for i in 0..r {
        for j in i + 1..r {
            let inner = hats[i].dot(&hats[j]).abs().min(1.0);
            if inner >= 1.0 - 1e-14 {
                return f64::INFINITY;
            }
            best = best.max(1.0 / (1.0 - inner).sqrt());
        }
    }
    best
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut out: u128 = 1;
    for i in 0..k {
        out = out * (n - i) as u128 / (i + 1) as u128;
    }
    out
}

/// Visits every k-subset of 0..n in lexicographic order; stops early when the
/// callback returns false. Returns whether all visited subsets passed.
fn for_each_subset(n: usize, k: usize, mut f: impl FnMut(&[usize]) -> bool) -> bool {
    if k == 0 || k > n {
        return true;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        if !f(&idx) {
            return false;
        }
        // advance to the next combination
        let mut i = k;
        while i > 0 {
            i -= 1;
            if idx[i] != i + n - k {
                idx[i] += 1;
                for j in i + 1..k {
                    idx[j] = idx[j - 1] + 1;
                }
                break;
            }
            if i == 0 {
                return true;
            }
        }
    }
}

/// Kruskal rank: the largest k such that every k columns of `m` are linearly
/// independent, decided by smallest singular values at relative tolerance
/// `tol`. Exhaustive over subsets, guarded by the combinatorial budget.
pub fn kruskal_rank(m: &DMatrix<f64>, tol: f64) -> Result<usize> {
    let (n, r) = m.shape();
    let kmax = n.min(r);
    let smax = linalg::singular_values(m)?[0];
    if smax == 0.0 {
        return Ok(0);
    }
    let mut spent: u128 = 0;
    for k in 1..=kmax {
        let count = binomial(r, k);
        spent += count;
        if spent > SUBSET_BUDGET {
            return Err(Error::CombinatorialBudgetExceeded {
                required: spent,
                budget: SUBSET_BUDGET,
            });
        }
        let all_independent = for_each_subset(r, k, |cols| {
            let sub = m.select_columns(cols.iter());
            match linalg::singular_values(&sub) {
                Ok(sv) => sv[k - 1] > tol * smax,
                Err(_) => false,
            }
        });
        if !all_independent {
            return Ok(k - 1);
        }
    }
    Ok(kmax)
}

/// General linear position: every subset of `min(r, n)` vectors is linearly
/// independent.
fn glp(vectors: &[DVector<f64>], tol: f64, spent: &mut u128) -> Result<bool> {
    let r = vectors.len();
    let n = vectors[0].len();
    let k = r.min(n);
    let m = DMatrix::from_columns(vectors);
    let smax = linalg::singular_values(&m)?[0];
    if smax == 0.0 {
        return Ok(false);
    }
    *spent += binomial(r, k);
    if *spent > SUBSET_BUDGET {
        return Err(Error::CombinatorialBudgetExceeded {
            required: *spent,
            budget: SUBSET_BUDGET,
        });
    }
    Ok(for_each_subset(r, k, |cols| {
        let sub = m.select_columns(cols.iter());
        match linalg::singular_values(&sub) {
            Ok(sv) => sv[k - 1] > tol * smax,
            Err(_) => false,
        }
    }))
}

fn kron_vec(x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(x.len() * y.len());
    for i in 0..x.len() {
        for j in 0..y.len() {
            out[i * y.len() + j] = x[i] * y[j];
        }
    }
    out
}

/// Super general linear position: GLP for every partial Khatri-Rao family of
/// the factor columns.
fn sglp(cpd: &Cpd, tol: f64) -> Result<bool> {
    let terms = cpd.terms();
    let mut spent: u128 = 0;
    let fam_a: Vec<_> = terms.iter().map(|t| t.a.clone()).collect();
    let fam_b: Vec<_> = terms.iter().map(|t| t.b.clone()).collect();
    let fam_c: Vec<_> = terms.iter().map(|t| t.c.clone()).collect();
    let fam_ab: Vec<_> = terms.iter().map(|t| kron_vec(&t.a, &t.b)).collect();
    let fam_ac: Vec<_> = terms.iter().map(|t| kron_vec(&t.a, &t.c)).collect();
    let fam_bc: Vec<_> = terms.iter().map(|t| kron_vec(&t.b, &t.c)).collect();
    let fam_abc: Vec<_> = terms
        .iter()
        .map(|t| kron_vec(&kron_vec(&t.a, &t.b), &t.c))
        .collect();
    for fam in [&fam_a, &fam_b, &fam_c, &fam_ab, &fam_ac, &fam_bc, &fam_abc] {
        if !glp(fam, tol, &mut spent)? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Checkable subset of the niceness conditions for a decomposition. The
/// smooth-point condition is not decided here.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RNiceFlags {
    pub sglp_ok: bool,
    pub kruskal_identifiable: bool,
    pub entry_nonzero_ok: bool,
    pub kappa_finite: bool,
}

pub fn check_r_nice(cpd: &Cpd) -> Result<RNiceFlags> {
    let report = condition_number(cpd, DEFAULT_INF_THRESHOLD)?;
    Ok(RNiceFlags {
        sglp_ok: report.sglp_ok,
        kruskal_identifiable: report.kruskal_identifiable,
        entry_nonzero_ok: report.entry_nonzero_ok,
        kappa_finite: report.kappa.is_finite(),
    })
}

/// Gamma function (Lanczos approximation, g = 7, 9 coefficients); relative
/// error around 1e-15 on the positive axis.
pub fn gamma_fn(x: f64) -> f64 {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_59,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        std::f64::consts::PI / ((std::f64::consts::PI * x).sin() * gamma_fn(1.0 - x))
    } else {
        let x = x - 1.0;
        let mut acc = COEF[0];
        for (i, c) in COEF.iter().enumerate().skip(1) {
            acc += c / (x + i as f64);
        }
        let t = x + G + 0.5;
        (2.0 * std::f64::consts::PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * acc
    }
}

/// Limiting complementary cdf of the condition number of random rank-r
/// decompositions as r grows: the probability that kappa exceeds
/// `alpha * r^{2/(m3-1)}` tends to `1 - exp(-K alpha^{1-m3})` with
/// `K = 2^{(m3-5)/2} / sqrt(pi) * Gamma(m3/2) / Gamma((m3+1)/2)`.
pub fn limiting_ccdf(m3: usize, alpha: f64) -> Result<f64> {
    if m3 < 2 {
        return Err(Error::InvalidArgument(format!("m3 = {m3} must be >= 2")));
    }
    if !(alpha > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "alpha = {alpha} must be > 0"
        )));
    }
    let m = m3 as f64;
    let k = 2f64.powf((m - 5.0) / 2.0) / std::f64::consts::PI.sqrt() * gamma_fn(m / 2.0)
        / gamma_fn((m + 1.0) / 2.0);
    Ok(1.0 - (-k * alpha.powf(1.0 - m)).exp())
}
