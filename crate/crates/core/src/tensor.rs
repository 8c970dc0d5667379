//! Dense order-3 tensors, rank-1 terms, and canonical polyadic decompositions.
//!
//! Layout: entry `(i1, i2, i3)` of an `n1 x n2 x n3` tensor is stored at
//! `(i1 * n2 + i2) * n3 + i3`, i.e. the third index is fastest. All unfolding
//! and Khatri-Rao orderings below are fixed against this layout so that
//! `flatten(t, 1) = A (B ⊙ C)^T` holds in exact index arithmetic for a CPD
//! with factor matrices `A, B, C`.

use crate::error::{Error, Result};
use crate::linalg;
use nalgebra::{DMatrix, DVector};

/// Dense real tensor of order 3.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    dims: (usize, usize, usize),
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn new(dims: (usize, usize, usize), data: Vec<f64>) -> Result<Self> {
        let (n1, n2, n3) = dims;
        if n1 == 0 || n2 == 0 || n3 == 0 {
            return Err(Error::InvalidArgument("tensor dimensions must be positive".into()));
        }
        if data.len() != n1 * n2 * n3 {
            return Err(Error::DimensionMismatch(format!(
                "data length {} does not match {}x{}x{}",
                data.len(),
                n1,
                n2,
                n3
            )));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("tensor entry".into()));
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: (usize, usize, usize)) -> Self {
        Self {
            dims,
            data: vec![0.0; dims.0 * dims.1 * dims.2],
        }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn index(&self, i1: usize, i2: usize, i3: usize) -> usize {
        (i1 * self.dims.1 + i2) * self.dims.2 + i3
    }

    #[inline]
    pub fn get(&self, i1: usize, i2: usize, i3: usize) -> f64 {
        self.data[(i1 * self.dims.1 + i2) * self.dims.2 + i3]
    }

    #[inline]
    pub fn set(&mut self, i1: usize, i2: usize, i3: usize, v: f64) {
        let idx = self.index(i1, i2, i3);
        self.data[idx] = v;
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn add(&self, other: &Tensor3) -> Result<Tensor3> {
        self.check_same_dims(other)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        Ok(Tensor3 { dims: self.dims, data })
    }

    pub fn sub(&self, other: &Tensor3) -> Result<Tensor3> {
        self.check_same_dims(other)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Ok(Tensor3 { dims: self.dims, data })
    }

    pub fn scale(&self, s: f64) -> Tensor3 {
        Tensor3 {
            dims: self.dims,
            data: self.data.iter().map(|x| s * x).collect(),
        }
    }

    /// The whole tensor as one vector in layout order.
    pub fn as_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.data)
    }

    fn check_same_dims(&self, other: &Tensor3) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::DimensionMismatch(format!(
                "{:?} vs {:?}",
                self.dims, other.dims
            )));
        }
        Ok(())
    }
}

/// A rank-1 tensor `a ⊗ b ⊗ c` in factored form.
#[derive(Debug, Clone)]
pub struct Rank1Term {
    pub a: DVector<f64>,
    pub b: DVector<f64>,
    pub c: DVector<f64>,
}

impl Rank1Term {
    pub fn new(a: DVector<f64>, b: DVector<f64>, c: DVector<f64>) -> Result<Self> {
        for (v, name) in [(&a, "a"), (&b, "b"), (&c, "c")] {
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!("factor {name}")));
            }
            if v.norm() == 0.0 {
                return Err(Error::ZeroInput(format!("factor {name} of a rank-1 term")));
            }
        }
        Ok(Self { a, b, c })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.a.len(), self.b.len(), self.c.len())
    }

    pub fn norm(&self) -> f64 {
        self.a.norm() * self.b.norm() * self.c.norm()
    }

    pub fn dense(&self) -> Tensor3 {
        let (n1, n2, n3) = self.dims();
        let mut t = Tensor3::zeros((n1, n2, n3));
        for i1 in 0..n1 {
            for i2 in 0..n2 {
                let ab = self.a[i1] * self.b[i2];
                for i3 in 0..n3 {
                    t.data[(i1 * n2 + i2) * n3 + i3] = ab * self.c[i3];
                }
            }
        }
        t
    }

    /// The term as a vector of length `n1*n2*n3` in layout order.
    pub fn vectorized(&self) -> DVector<f64> {
        self.dense().as_vector()
    }
}

/// Inner product of two rank-1 tensors without forming them densely:
/// `<a_s, a_t> * <b_s, b_t> * <c_s, c_t>`.
pub fn rank1_inner(s: &Rank1Term, t: &Rank1Term) -> Result<f64> {
    if s.dims() != t.dims() {
        return Err(Error::DimensionMismatch(format!(
            "{:?} vs {:?}",
            s.dims(),
            t.dims()
        )));
    }
    Ok(s.a.dot(&t.a) * s.b.dot(&t.b) * s.c.dot(&t.c))
}

/// An ordered list of rank-1 terms; a decomposition of their sum.
#[derive(Debug, Clone)]
pub struct Cpd {
    terms: Vec<Rank1Term>,
}

impl Cpd {
    pub fn new(terms: Vec<Rank1Term>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::InvalidArgument("a CPD needs at least one term".into()));
        }
        let dims = terms[0].dims();
        for (i, t) in terms.iter().enumerate() {
            if t.dims() != dims {
                return Err(Error::DimensionMismatch(format!(
                    "term {i} has dims {:?}, expected {:?}",
                    t.dims(),
                    dims
                )));
            }
        }
        Ok(Self { terms })
    }

    /// Builds a CPD from factor matrices whose i-th columns form term i.
    pub fn from_factors(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<Self> {
        let r = a.ncols();
        if b.ncols() != r || c.ncols() != r {
            return Err(Error::DimensionMismatch(format!(
                "factor column counts differ: {} {} {}",
                a.ncols(),
                b.ncols(),
                c.ncols()
            )));
        }
        let terms = (0..r)
            .map(|i| {
                Rank1Term::new(
                    a.column(i).clone_owned(),
                    b.column(i).clone_owned(),
                    c.column(i).clone_owned(),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Cpd::new(terms)
    }

    pub fn rank(&self) -> usize {
        self.terms.len()
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.terms[0].dims()
    }

    pub fn terms(&self) -> &[Rank1Term] {
        &self.terms
    }

    pub fn into_terms(self) -> Vec<Rank1Term> {
        self.terms
    }

    /// Factor matrix A (n1 x r); column i is term i's first factor.
    pub fn factor_a(&self) -> DMatrix<f64> {
        DMatrix::from_columns(&self.terms.iter().map(|t| t.a.clone()).collect::<Vec<_>>())
    }

    pub fn factor_b(&self) -> DMatrix<f64> {
        DMatrix::from_columns(&self.terms.iter().map(|t| t.b.clone()).collect::<Vec<_>>())
    }

    pub fn factor_c(&self) -> DMatrix<f64> {
        DMatrix::from_columns(&self.terms.iter().map(|t| t.c.clone()).collect::<Vec<_>>())
    }

    /// Canonical normalization: a- and b-columns unit norm with the first
    /// nonzero entry positive, all magnitude and leftover sign on c.
    /// Leaves the reconstructed tensor unchanged.
    pub fn canonical(&self) -> Cpd {
        let terms = self
            .terms
            .iter()
            .map(|t| {
                let na = t.a.norm();
                let nb = t.b.norm();
                let mut a = &t.a / na;
                let mut b = &t.b / nb;
                let mut c = &t.c * (na * nb);
                if linalg::first_nonzero_sign(&a) < 0.0 {
                    a.neg_mut();
                    c.neg_mut();
                }
                if linalg::first_nonzero_sign(&b) < 0.0 {
                    b.neg_mut();
                    c.neg_mut();
                }
                Rank1Term { a, b, c }
            })
            .collect();
        Cpd { terms }
    }
}

/// Sums the rank-1 terms into a dense tensor.
pub fn reconstruct(cpd: &Cpd) -> Tensor3 {
    let (n1, n2, n3) = cpd.dims();
    let mut t = Tensor3::zeros((n1, n2, n3));
    for term in cpd.terms() {
        for i1 in 0..n1 {
            for i2 in 0..n2 {
                let ab = term.a[i1] * term.b[i2];
                let base = (i1 * n2 + i2) * n3;
                for i3 in 0..n3 {
                    t.data[base + i3] += ab * term.c[i3];
                }
            }
        }
    }
    t
}

/// Mode-k unfolding. Column orderings match the Khatri-Rao convention:
/// `flatten(t,1) = A (B ⊙ C)^T`, `flatten(t,2) = B (A ⊙ C)^T`,
/// `flatten(t,3) = C (A ⊙ B)^T`.
pub fn flatten(t: &Tensor3, mode: usize) -> Result<DMatrix<f64>> {
    let (n1, n2, n3) = t.dims();
    match mode {
        1 => {
            let mut m = DMatrix::zeros(n1, n2 * n3);
            for i1 in 0..n1 {
                for i2 in 0..n2 {
                    for i3 in 0..n3 {
                        m[(i1, i2 * n3 + i3)] = t.get(i1, i2, i3);
                    }
                }
            }
            Ok(m)
        }
        2 => {
            let mut m = DMatrix::zeros(n2, n1 * n3);
            for i1 in 0..n1 {
                for i2 in 0..n2 {
                    for i3 in 0..n3 {
                        m[(i2, i1 * n3 + i3)] = t.get(i1, i2, i3);
                    }
                }
            }
            Ok(m)
        }
        3 => {
            let mut m = DMatrix::zeros(n3, n1 * n2);
            for i1 in 0..n1 {
                for i2 in 0..n2 {
                    for i3 in 0..n3 {
                        m[(i3, i1 * n2 + i2)] = t.get(i1, i2, i3);
                    }
                }
            }
            Ok(m)
        }
        _ => Err(Error::InvalidMode(mode)),
    }
}

/// Folds a mode-k unfolding back into a tensor (inverse of [`flatten`]).
pub fn fold(m: &DMatrix<f64>, mode: usize, dims: (usize, usize, usize)) -> Result<Tensor3> {
    let (n1, n2, n3) = dims;
    let expected = match mode {
        1 => (n1, n2 * n3),
        2 => (n2, n1 * n3),
        3 => (n3, n1 * n2),
        _ => return Err(Error::InvalidMode(mode)),
    };
    if m.shape() != expected {
        return Err(Error::DimensionMismatch(format!(
            "fold mode {mode}: matrix is {:?}, expected {:?}",
            m.shape(),
            expected
        )));
    }
    let mut t = Tensor3::zeros(dims);
    for i1 in 0..n1 {
        for i2 in 0..n2 {
            for i3 in 0..n3 {
                let v = match mode {
                    1 => m[(i1, i2 * n3 + i3)],
                    2 => m[(i2, i1 * n3 + i3)],
                    _ => m[(i3, i1 * n2 + i2)],
                };
                t.set(i1, i2, i3, v);
            }
        }
    }
    Ok(t)
}

/// Khatri-Rao product: column i is `m_i ⊗ n_i` with the second factor fastest,
/// consistent with the tensor layout.
pub fn khatri_rao(m: &DMatrix<f64>, n: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if m.ncols() != n.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "column counts {} vs {}",
            m.ncols(),
            n.ncols()
        )));
    }
    let (mr, r) = m.shape();
    let nr = n.nrows();
    let mut out = DMatrix::zeros(mr * nr, r);
    for j in 0..r {
        for i in 0..mr {
            let mij = m[(i, j)];
            for k in 0..nr {
                out[(i * nr + k, j)] = mij * n[(k, j)];
            }
        }
    }
    Ok(out)
}

/// Multilinear multiplication `(M1, M2, M3) · t`, applied one mode at a time.
pub fn multilinear_multiply(
    m1: &DMatrix<f64>,
    m2: &DMatrix<f64>,
    m3: &DMatrix<f64>,
    t: &Tensor3,
) -> Result<Tensor3> {
    let (n1, n2, n3) = t.dims();
    if m1.ncols() != n1 || m2.ncols() != n2 || m3.ncols() != n3 {
        return Err(Error::DimensionMismatch(format!(
            "multilinear multiply: inner dims ({}, {}, {}) vs tensor {:?}",
            m1.ncols(),
            m2.ncols(),
            m3.ncols(),
            t.dims()
        )));
    }
    // mode 1
    let t1 = fold(&(m1 * flatten(t, 1)?), 1, (m1.nrows(), n2, n3))?;
    // mode 2
    let t2 = fold(&(m2 * flatten(&t1, 2)?), 2, (m1.nrows(), m2.nrows(), n3))?;
    // mode 3
    fold(
        &(m3 * flatten(&t2, 3)?),
        3,
        (m1.nrows(), m2.nrows(), m3.nrows()),
    )
}

/// Result of the rank-1 approximation iteration.
#[derive(Debug, Clone)]
pub struct Rank1Approx {
    pub term: Rank1Term,
    pub iters: usize,
    pub converged: bool,
}

/// Best rank-1 approximation by higher-order power iteration, initialized
/// from the leading left singular vectors of the three unfoldings.
pub fn best_rank1(t: &Tensor3, max_iters: usize, tol: f64) -> Result<Rank1Approx> {
    let (n1, n2, n3) = t.dims();
    let tnorm = t.norm();
    if tnorm == 0.0 {
        return Err(Error::ZeroInput("best_rank1 of the zero tensor".into()));
    }
    let lead = |mode: usize| -> Result<DVector<f64>> {
        let f = flatten(t, mode)?;
        let dec = linalg::svd(&f)?;
        Ok(dec.u.column(0).clone_owned())
    };
    let mut a = lead(1)?;
    let mut b = lead(2)?;
    let mut c = lead(3)?;

    // contraction helpers: project two modes, leave one free
    let contract1 = |b: &DVector<f64>, c: &DVector<f64>| -> DVector<f64> {
        let mut out = DVector::zeros(n1);
        for i1 in 0..n1 {
            let mut s = 0.0;
            for i2 in 0..n2 {
                let base = (i1 * n2 + i2) * n3;
                let bb = b[i2];
                for i3 in 0..n3 {
                    s += t.data[base + i3] * bb * c[i3];
                }
            }
            out[i1] = s;
        }
        out
    };
    let contract2 = |a: &DVector<f64>, c: &DVector<f64>| -> DVector<f64> {
        let mut out = DVector::zeros(n2);
        for i1 in 0..n1 {
            let aa = a[i1];
            for i2 in 0..n2 {
                let base = (i1 * n2 + i2) * n3;
                let mut s = 0.0;
                for i3 in 0..n3 {
                    s += t.data[base + i3] * c[i3];
                }
                out[i2] += aa * s;
            }
        }
        out
    };
    let contract3 = |a: &DVector<f64>, b: &DVector<f64>| -> DVector<f64> {
        let mut out = DVector::zeros(n3);
        for i1 in 0..n1 {
            let aa = a[i1];
            for i2 in 0..n2 {
                let base = (i1 * n2 + i2) * n3;
                let ab = aa * b[i2];
                for i3 in 0..n3 {
                    out[i3] += t.data[base + i3] * ab;
                }
            }
        }
        out
    };

    let mut sigma_prev = f64::NEG_INFINITY;
    let mut converged = false;
    let mut iters = 0;
    for k in 0..max_iters.max(1) {
        iters = k + 1;
        let an = contract1(&b, &c);
        let ann = an.norm();
        if ann > 0.0 {
            a = an / ann;
        }
        let bn = contract2(&a, &c);
        let bnn = bn.norm();
        if bnn > 0.0 {
            b = bn / bnn;
        }
        let cn = contract3(&a, &b);
        let sigma = cn.norm();
        if sigma > 0.0 {
            c = cn / sigma;
        }
        if (sigma - sigma_prev).abs() <= tol * sigma.max(f64::MIN_POSITIVE) {
            converged = true;
            // the c-update already maximizes sigma for the current (a, b)
            let term = Rank1Term::new(a.clone(), b.clone(), &c * sigma)?;
            return Ok(Rank1Approx { term, iters, converged });
        }
        sigma_prev = sigma;
    }
    let sigma = contract3(&a, &b).norm();
    let term = Rank1Term::new(a, b, c * sigma)?;
    Ok(Rank1Approx { term, iters, converged })
}
