//! Forward error under permutation matching, and the excess factor.
//!
//! The forward error between two decompositions is the Frobenius distance of
//! their vectorized rank-1 terms, minimized over the pairing of terms:
//! `min_pi || M - M' P_pi ||_F` with `M = A ⊙ B ⊙ C`. Exhaustive matching is
//! exact but limited to r <= 8; the least-squares heuristic solves
//! `min_X ||M - M' X||_F` and projects `X` onto permutations by row-wise
//! argmax, repaired greedily if the projection is not a bijection.

use crate::error::{Error, Result};
use crate::linalg;
use crate::tensor::Cpd;
use crate::UNIT_ROUNDOFF;
use nalgebra::{DMatrix, DVector};

pub const BRUTE_FORCE_MAX_RANK: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchMethod {
    HeuristicLsq,
    BruteForce,
}

#[derive(Debug, Clone)]
pub struct MatchResult {
    /// `permutation[i]` is the computed-term index matched to reference term i.
    pub permutation: Vec<usize>,
    pub forward_error: f64,
    pub method: MatchMethod,
}

fn vectorized_terms(cpd: &Cpd) -> DMatrix<f64> {
    let cols: Vec<DVector<f64>> = cpd.terms().iter().map(|t| t.vectorized()).collect();
    DMatrix::from_columns(&cols)
}

fn error_for_permutation(m: &DMatrix<f64>, mp: &DMatrix<f64>, perm: &[usize]) -> f64 {
    let mut acc = 0.0;
    for (i, &j) in perm.iter().enumerate() {
        acc += (m.column(i) - mp.column(j)).norm_squared();
    }
    acc.sqrt()
}

fn brute_force_match(m: &DMatrix<f64>, mp: &DMatrix<f64>) -> (Vec<usize>, f64) {
    let r = m.ncols();
    // pairwise squared distances, then exhaustive assignment
    let mut d = vec![vec![0.0; r]; r];
    for i in 0..r {
        for j in 0..r {
            d[i][j] = (m.column(i) - mp.column(j)).norm_squared();
        }
    }
    let mut best = f64::INFINITY;
    let mut best_perm = (0..r).collect::<Vec<_>>();
    let mut perm = vec![usize::MAX; r];
    let mut used = vec![false; r];
    fn rec(
        i: usize,
        r: usize,
        acc: f64,
        d: &[Vec<f64>],
        perm: &mut [usize],
        used: &mut [bool],
        best: &mut f64,
        best_perm: &mut Vec<usize>,
    ) {
        if acc >= *best {
            return;
        }
        if i == r {
            *best = acc;
            best_perm.copy_from_slice(perm);
            return;
        }
        for j in 0..r {
            if !used[j] {
                used[j] = true;
                perm[i] = j;
                rec(i + 1, r, acc + d[i][j], d, perm, used, best, best_perm);
                used[j] = false;
            }
        }
    }
    rec(0, r, 0.0, &d, &mut perm, &mut used, &mut best, &mut best_perm);
    (best_perm, best.sqrt())
}

fn heuristic_match(m: &DMatrix<f64>, mp: &DMatrix<f64>) -> Result<(Vec<usize>, f64)> {
    let r = m.ncols();
    // X solves min ||M - M' X||_F; row i of X says which reference columns
    // computed term i contributes to
    let x = linalg::pseudoinverse(mp)? * m;
    // project: largest |entry| per row -> computed i matched to reference j
    let mut ref_of_computed = vec![usize::MAX; r];
    let mut claimed = vec![false; r];
    let mut bijective = true;
    for i in 0..r {
        let mut bestj = 0;
        let mut bestv = f64::NEG_INFINITY;
        for j in 0..r {
            let v = x[(i, j)].abs();
            if v > bestv {
                bestv = v;
                bestj = j;
            }
        }
        ref_of_computed[i] = bestj;
        if claimed[bestj] {
            bijective = false;
        }
        claimed[bestj] = true;
    }
    let perm = if bijective {
        // invert: reference j -> computed i
        let mut p = vec![usize::MAX; r];
        for (i, &j) in ref_of_computed.iter().enumerate() {
            p[j] = i;
        }
        p
    } else {
        // greedy repair on |X|: assign (computed, reference) pairs by
        // descending magnitude until a bijection is formed
        let mut entries: Vec<(f64, usize, usize)> = Vec::with_capacity(r * r);
        for i in 0..r {
            for j in 0..r {
                entries.push((x[(i, j)].abs(), i, j));
            }
        }
        entries.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal));
        let mut p = vec![usize::MAX; r];
        let mut used_i = vec![false; r];
        let mut assigned = 0;
        for (_, i, j) in entries {
            if !used_i[i] && p[j] == usize::MAX {
                p[j] = i;
                used_i[i] = true;
                assigned += 1;
                if assigned == r {
                    break;
                }
            }
        }
        p
    };
    let err = error_for_permutation(m, mp, &perm);
    Ok((perm, err))
}

/// Permutation-matched forward error between two decompositions of equal
/// rank and dimensions.
pub fn forward_error(reference: &Cpd, computed: &Cpd, method: MatchMethod) -> Result<MatchResult> {
    if reference.rank() != computed.rank() {
        return Err(Error::DimensionMismatch(format!(
            "rank {} vs {}",
            reference.rank(),
            computed.rank()
        )));
    }
    if reference.dims() != computed.dims() {
        return Err(Error::DimensionMismatch(format!(
            "dims {:?} vs {:?}",
            reference.dims(),
            computed.dims()
        )));
    }
    let r = reference.rank();
    let m = vectorized_terms(reference);
    let mp = vectorized_terms(computed);
    match method {
        MatchMethod::BruteForce => {
            if r > BRUTE_FORCE_MAX_RANK {
                return Err(Error::RankTooLarge {
                    rank: r,
                    limit: BRUTE_FORCE_MAX_RANK,
                    context: "brute-force permutation matching",
                });
            }
            let (permutation, forward_error) = brute_force_match(&m, &mp);
            Ok(MatchResult {
                permutation,
                forward_error,
                method,
            })
        }
        MatchMethod::HeuristicLsq => {
            let (permutation, forward_error) = heuristic_match(&m, &mp)?;
            Ok(MatchResult {
                permutation,
                forward_error,
                method,
            })
        }
    }
}

/// Forward error with the method picked by rank: exhaustive when affordable.
pub fn forward_error_auto(reference: &Cpd, computed: &Cpd) -> Result<MatchResult> {
    let method = if reference.rank() <= BRUTE_FORCE_MAX_RANK {
        MatchMethod::BruteForce
    } else {
        MatchMethod::HeuristicLsq
    };
    forward_error(reference, computed, method)
}

/// Excess factor: forward error divided by what a condition-number-times-
/// backward-error analysis predicts for an ideal solver.
pub fn excess_factor(
    reference: &Cpd,
    computed: &Cpd,
    kappa: f64,
    backward_norm: f64,
) -> Result<f64> {
    let fe = forward_error_auto(reference, computed)?.forward_error;
    excess_factor_value(fe, kappa, backward_norm)
}

/// Excess factor from an already-computed forward error.
pub fn excess_factor_value(forward_error: f64, kappa: f64, backward_norm: f64) -> Result<f64> {
    if !kappa.is_finite() || kappa <= 0.0 {
        return Err(Error::InfiniteKappa(format!(
            "excess factor needs finite positive kappa, got {kappa}"
        )));
    }
    if backward_norm <= 0.0 {
        return Err(Error::ZeroInput("excess factor backward norm".into()));
    }
    Ok(forward_error / (kappa * backward_norm))
}

/// Backward-error scale of merely storing the tensor in floating point:
/// `unit_roundoff * ||t||_F`. This is the upper-bound model; reported excess
/// factors are therefore lower bounds.
pub fn representation_backward_norm(t: &crate::tensor::Tensor3, unit_roundoff: f64) -> Result<f64> {
    let n = t.norm();
    if n == 0.0 {
        return Err(Error::ZeroInput("backward norm of the zero tensor".into()));
    }
    Ok(unit_roundoff * n)
}

pub fn representation_backward_norm_default(t: &crate::tensor::Tensor3) -> Result<f64> {
    representation_backward_norm(t, UNIT_ROUNDOFF)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeds::{gaussian_matrix, rng_from_seed};
    use crate::tensor::{Cpd, Rank1Term};

    fn random_cpd(dims: (usize, usize, usize), r: usize, seed: u64) -> Cpd {
        let mut rng = rng_from_seed(seed);
        Cpd::from_factors(
            &gaussian_matrix(dims.0, r, &mut rng),
            &gaussian_matrix(dims.1, r, &mut rng),
            &gaussian_matrix(dims.2, r, &mut rng),
        )
        .unwrap()
    }

    fn perturbed(cpd: &Cpd, eps: f64, seed: u64) -> Cpd {
        let mut rng = rng_from_seed(seed);
        Cpd::new(
            cpd.terms()
                .iter()
                .map(|t| {
                    Rank1Term::new(
                        &t.a + eps * crate::seeds::gaussian_vector(t.a.len(), &mut rng),
                        &t.b + eps * crate::seeds::gaussian_vector(t.b.len(), &mut rng),
                        &t.c + eps * crate::seeds::gaussian_vector(t.c.len(), &mut rng),
                    )
                    .unwrap()
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn reversed_terms_match_exactly() {
        let cpd = random_cpd((4, 3, 2), 3, 90);
        let mut terms = cpd.terms().to_vec();
        terms.reverse();
        let rev = Cpd::new(terms).unwrap();
        for method in [MatchMethod::BruteForce, MatchMethod::HeuristicLsq] {
            let res = forward_error(&cpd, &rev, method).unwrap();
            assert!(res.forward_error <= 1e-12, "{method:?}");
            assert_eq!(res.permutation, vec![2, 1, 0]);
        }
    }

    #[test]
    fn scale_rebalancing_is_invisible() {
        // (2a, b, c/2) is the same rank-1 tensor
        let cpd = random_cpd((4, 3, 2), 2, 91);
        let rescaled = Cpd::new(
            cpd.terms()
                .iter()
                .map(|t| Rank1Term::new(2.0 * &t.a, t.b.clone(), &t.c / 2.0).unwrap())
                .collect(),
        )
        .unwrap();
        let res = forward_error_auto(&cpd, &rescaled).unwrap();
        assert!(res.forward_error <= 1e-12 * reconstructed_scale(&cpd));
    }

    fn reconstructed_scale(cpd: &Cpd) -> f64 {
        cpd.terms().iter().map(|t| t.norm()).sum()
    }

    #[test]
    fn heuristic_agrees_with_brute_force_on_near_matches() {
        let mut agree = 0;
        let trials = 1000;
        for seed in 0..trials {
            let r = 2 + (seed % 5) as usize; // r in 2..=6
            let cpd = random_cpd((5, 4, 3), r, 2000 + seed);
            let noisy = perturbed(&cpd, 1e-6, 3000 + seed);
            let bf = forward_error(&cpd, &noisy, MatchMethod::BruteForce).unwrap();
            let h = forward_error(&cpd, &noisy, MatchMethod::HeuristicLsq).unwrap();
            if bf.permutation == h.permutation
                && (bf.forward_error - h.forward_error).abs() <= 1e-12
            {
                agree += 1;
            }
        }
        assert_eq!(agree, trials, "heuristic disagreed on {} cases", trials - agree);
    }

    #[test]
    fn forward_error_is_symmetric_pseudometric() {
        for seed in 0..20 {
            let a = random_cpd((4, 4, 3), 3, 500 + seed);
            let b = perturbed(&a, 1e-3, 600 + seed);
            let ab = forward_error_auto(&a, &b).unwrap().forward_error;
            let ba = forward_error_auto(&b, &a).unwrap().forward_error;
            assert!((ab - ba).abs() <= 1e-12 * ab.max(1e-300));
            assert!(ab >= 0.0);
        }
    }

    #[test]
    fn brute_force_rank_limit() {
        let cpd = random_cpd((10, 9, 2), 9, 92);
        assert!(matches!(
            forward_error(&cpd, &cpd, MatchMethod::BruteForce),
            Err(Error::RankTooLarge { .. })
        ));
        // heuristic still fine
        let res = forward_error(&cpd, &cpd, MatchMethod::HeuristicLsq).unwrap();
        assert!(res.forward_error <= 1e-12);
    }

    #[test]
    fn rank_mismatch_rejected() {
        let a = random_cpd((4, 3, 2), 2, 93);
        let b = random_cpd((4, 3, 2), 3, 94);
        assert!(forward_error_auto(&a, &b).is_err());
    }

    #[test]
    fn excess_factor_basics() {
        let a = random_cpd((4, 3, 2), 2, 95);
        assert!(excess_factor(&a, &a, 1.0, 1e-16).unwrap() <= 1e-9);
        // forward_error == kappa * backward -> omega == 1
        let b = perturbed(&a, 1e-4, 96);
        let fe = forward_error_auto(&a, &b).unwrap().forward_error;
        let omega = excess_factor(&a, &b, 2.0, fe / 2.0).unwrap();
        assert!((omega - 1.0).abs() <= 1e-12);
        assert!(excess_factor(&a, &b, f64::INFINITY, 1.0).is_err());
        assert!(excess_factor(&a, &b, 1.0, 0.0).is_err());
    }

    #[test]
    fn representation_backward_norm_scales() {
        let t = crate::tensor::reconstruct(&random_cpd((3, 3, 3), 2, 97));
        let n = t.norm();
        let b = representation_backward_norm_default(&t).unwrap();
        assert!((b - UNIT_ROUNDOFF * n).abs() <= 1e-30);
        let b10 = representation_backward_norm_default(&t.scale(10.0)).unwrap();
        assert!((b10 - 10.0 * b).abs() <= 1e-12 * b10);
        // unit-norm input gives exactly the unit roundoff
        let unit = t.scale(1.0 / n);
        let bu = representation_backward_norm_default(&unit).unwrap();
        assert!((bu - UNIT_ROUNDOFF).abs() <= 1e-20);
        assert!(representation_backward_norm_default(&crate::tensor::Tensor3::zeros((2, 2, 2)))
            .is_err());
    }
}
