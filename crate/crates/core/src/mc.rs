//! Monte Carlo distribution experiments: condition numbers of random
//! decompositions, and forward errors / excess factors of the pencil-based
//! solvers on random instances.
//!
//! Trials derive independent seeds from the master seed, run in an
//! order-preserving parallel map, and aggregate by sorting, so a series is
//! byte-identical for any thread count.

use crate::conditioning;
use crate::error::{Error, Result};
use crate::metrics;
use crate::par::par_map;
use crate::pba::{pba_decompose, PbaConfig, ProjectionStrategy};
use crate::refine::{als_refine, AlsConfig};
use crate::seeds::{self, Prng};
use crate::tensor::{reconstruct, Cpd};

/// Factor-matrix sampling scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sampling {
    /// All factor entries i.i.d. standard normal.
    GaussianAll,
    /// A and B replaced by orthonormalizations of Gaussian draws; C Gaussian.
    OrthonormalAbGaussianC,
}

#[derive(Debug, Clone)]
pub struct McConfig {
    pub dims: (usize, usize, usize),
    pub rank: usize,
    pub trials: usize,
    pub sampling: Sampling,
    pub master_seed: u64,
    /// Abscissas of the limiting-law bound, in units of the threshold scaling
    /// `alpha * r^{2/(n3-1)}`.
    pub alpha_grid: Vec<f64>,
}

/// Empirical complementary cdf with the limiting-law bound attached.
#[derive(Debug, Clone)]
pub struct CcdfSeries {
    /// Finite samples, ascending.
    pub samples: Vec<f64>,
    /// Samples recorded as +inf; they count as exceeding every threshold.
    pub infinite_count: usize,
    pub trials: usize,
    /// `(alpha, x, bound)` rows: threshold `x = alpha * r^{2/(m3-1)}` and the
    /// limiting probability that the condition number exceeds it.
    pub bound_points: Vec<(f64, f64, f64)>,
}

impl CcdfSeries {
    fn from_samples(mut finite: Vec<f64>, infinite_count: usize, trials: usize) -> Self {
        finite.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Self {
            samples: finite,
            infinite_count,
            trials,
            bound_points: Vec::new(),
        }
    }

    /// P[X > x] over all recorded samples.
    pub fn ccdf(&self, x: f64) -> f64 {
        if self.trials == 0 {
            return 0.0;
        }
        let above = self.samples.partition_point(|&v| v <= x);
        let count = self.samples.len() - above + self.infinite_count;
        count as f64 / self.trials as f64
    }
}

/// Draws one random decomposition.
pub fn sample_cpd(
    dims: (usize, usize, usize),
    rank: usize,
    sampling: Sampling,
    rng: &mut Prng,
) -> Result<Cpd> {
    let (n1, n2, n3) = dims;
    let a = seeds::gaussian_matrix(n1, rank, rng);
    let b = seeds::gaussian_matrix(n2, rank, rng);
    let c = seeds::gaussian_matrix(n3, rank, rng);
    match sampling {
        Sampling::GaussianAll => Cpd::from_factors(&a, &b, &c),
        Sampling::OrthonormalAbGaussianC => {
            if rank > n1.min(n2) {
                return Err(Error::RankTooLarge {
                    rank,
                    limit: n1.min(n2),
                    context: "orthonormal sampling needs r <= min(n1, n2)",
                });
            }
            let qa = crate::linalg::orthonormalize(&a)?;
            let qb = crate::linalg::orthonormalize(&b)?;
            Cpd::from_factors(&qa, &qb, &c)
        }
    }
}

/// Condition-number ccdf experiment. Infinite condition numbers are retained
/// and count toward every exceedance probability.
pub fn run_kappa_ccdf(cfg: &McConfig) -> Result<CcdfSeries> {
    if cfg.trials == 0 {
        return Err(Error::InvalidArgument("trials must be >= 1".into()));
    }
    let kappas = par_map(cfg.trials, |i| -> Result<f64> {
        let mut rng = seeds::rng_from_seed(seeds::mix_seed(cfg.master_seed, i as u64));
        let cpd = sample_cpd(cfg.dims, cfg.rank, cfg.sampling, &mut rng)?;
        conditioning::kappa(&cpd, conditioning::DEFAULT_INF_THRESHOLD)
    });
    let mut finite = Vec::with_capacity(cfg.trials);
    let mut infinite = 0usize;
    for k in kappas {
        let k = k?;
        if k.is_finite() {
            finite.push(k);
        } else {
            infinite += 1;
        }
    }
    let mut series = CcdfSeries::from_samples(finite, infinite, cfg.trials);
    series.bound_points = bound_points(cfg)?;
    Ok(series)
}

fn bound_points(cfg: &McConfig) -> Result<Vec<(f64, f64, f64)>> {
    let n3 = cfg.dims.2;
    let scale = (cfg.rank as f64).powf(2.0 / (n3 as f64 - 1.0));
    cfg.alpha_grid
        .iter()
        .map(|&alpha| {
            let bound = conditioning::limiting_ccdf(n3, alpha)?;
            Ok((alpha, alpha * scale, bound))
        })
        .collect()
}

/// Which solver the forward-error experiment drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FwdSolver {
    /// Pencil pipeline with a random projection.
    PbaRandom,
    /// Pencil pipeline with the leading-singular-vector projection.
    PbaHosvd,
    /// The adaptive pencil pipeline followed by least-squares refinement.
    PbaPlusAls,
}

/// Paired forward-error and excess-factor distributions.
#[derive(Debug, Clone)]
pub struct ForwardErrorSeries {
    pub errors: CcdfSeries,
    pub omegas: CcdfSeries,
    /// Trials where the solver failed; excluded from both series.
    pub solver_failures: usize,
    /// Trials where omega was undefined (infinite reference kappa); their
    /// error sample is kept, the omega sample is dropped.
    pub omega_censored: usize,
}

/// Forward-error / excess-factor ccdf experiment.
pub fn run_forward_error_ccdf(cfg: &McConfig, solver: FwdSolver) -> Result<ForwardErrorSeries> {
    if cfg.trials == 0 {
        return Err(Error::InvalidArgument("trials must be >= 1".into()));
    }
    #[derive(Clone)]
    enum Outcome {
        Ok { error: f64, omega: Option<f64> },
        SolverFailed,
    }
    let outcomes = par_map(cfg.trials, |i| -> Result<Outcome> {
        let mut rng = seeds::rng_from_seed(seeds::mix_seed(cfg.master_seed, i as u64));
        let reference = sample_cpd(cfg.dims, cfg.rank, cfg.sampling, &mut rng)?;
        let t = reconstruct(&reference);
        let strategy = match solver {
            FwdSolver::PbaRandom => ProjectionStrategy::RandomOrthonormal,
            FwdSolver::PbaHosvd | FwdSolver::PbaPlusAls => ProjectionStrategy::HosvdLeadingTwo,
        };
        let pba_cfg = PbaConfig {
            rank: cfg.rank,
            projection_strategy: strategy,
            max_projection_retries: 5,
            pencil_tol: 1e-10,
            seed: seeds::mix_seed(cfg.master_seed, (i as u64) ^ 0x5EED_F00D),
        };
        let computed = match pba_decompose(&t, &pba_cfg) {
            Ok(report) => {
                if solver == FwdSolver::PbaPlusAls {
                    match als_refine(&t, &report.cpd, &AlsConfig::default()) {
                        Ok(res) => res.cpd,
                        Err(_) => return Ok(Outcome::SolverFailed),
                    }
                } else {
                    report.cpd
                }
            }
            Err(_) => return Ok(Outcome::SolverFailed),
        };
        let error = metrics::forward_error_auto(&reference, &computed)?.forward_error;
        let kappa = conditioning::kappa(&reference, conditioning::DEFAULT_INF_THRESHOLD)?;
        let omega = if kappa.is_finite() {
            let backward = metrics::representation_backward_norm_default(&t)?;
            Some(metrics::excess_factor_value(error, kappa, backward)?)
        } else {
            None
        };
        Ok(Outcome::Ok { error, omega })
    });

    let mut errors = Vec::new();
    let mut omegas = Vec::new();
    let mut solver_failures = 0usize;
    let mut omega_censored = 0usize;
    for o in outcomes {
        match o? {
            Outcome::Ok { error, omega } => {
                errors.push(error);
                match omega {
                    Some(w) => omegas.push(w),
                    None => omega_censored += 1,
                }
            }
            Outcome::SolverFailed => solver_failures += 1,
        }
    }
    Ok(ForwardErrorSeries {
        errors: CcdfSeries::from_samples(errors, 0, cfg.trials),
        omegas: CcdfSeries::from_samples(omegas, 0, cfg.trials),
        solver_failures,
        omega_censored,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeds::rng_from_seed;
    use nalgebra::DMatrix;

    #[test]
    fn sample_cpd_replays() {
        let a = sample_cpd((4, 3, 2), 2, Sampling::GaussianAll, &mut rng_from_seed(7)).unwrap();
        let b = sample_cpd((4, 3, 2), 2, Sampling::GaussianAll, &mut rng_from_seed(7)).unwrap();
        for (x, y) in a.terms().iter().zip(b.terms()) {
            assert_eq!(x.a, y.a);
            assert_eq!(x.b, y.b);
            assert_eq!(x.c, y.c);
        }
    }

    #[test]
    fn orthonormal_sampling_has_orthonormal_ab() {
        let cpd = sample_cpd(
            (6, 5, 3),
            4,
            Sampling::OrthonormalAbGaussianC,
            &mut rng_from_seed(8),
        )
        .unwrap();
        for f in [cpd.factor_a(), cpd.factor_b()] {
            let r = f.ncols();
            assert!((f.transpose() * &f - DMatrix::identity(r, r)).norm() <= 1e-12);
        }
        assert!(sample_cpd(
            (3, 3, 2),
            4,
            Sampling::OrthonormalAbGaussianC,
            &mut rng_from_seed(9)
        )
        .is_err());
    }

    #[test]
    fn gaussian_15_15_2_kappa_computable() {
        let cpd = sample_cpd((15, 15, 2), 15, Sampling::GaussianAll, &mut rng_from_seed(10))
            .unwrap();
        let k = conditioning::kappa(&cpd, conditioning::DEFAULT_INF_THRESHOLD).unwrap();
        assert!(k >= 1.0);
    }

    #[test]
    fn ccdf_shape_and_degenerate_single_trial() {
        let cfg = McConfig {
            dims: (5, 4, 3),
            rank: 2,
            trials: 1,
            sampling: Sampling::GaussianAll,
            master_seed: 11,
            alpha_grid: vec![2.0],
        };
        let series = run_kappa_ccdf(&cfg).unwrap();
        assert_eq!(series.trials, 1);
        let v = series.samples.first().copied().unwrap_or(f64::INFINITY);
        assert!(series.ccdf(v - 1.0) >= 1.0 - 1e-12);
        assert!(series.ccdf(v + 1.0) == 0.0 || v == f64::INFINITY);
    }

    #[test]
    fn ccdf_is_monotone_nonincreasing() {
        let cfg = McConfig {
            dims: (6, 5, 4),
            rank: 3,
            trials: 50,
            sampling: Sampling::GaussianAll,
            master_seed: 12,
            alpha_grid: vec![],
        };
        let series = run_kappa_ccdf(&cfg).unwrap();
        let mut prev = f64::INFINITY;
        for x in [1.0, 2.0, 5.0, 10.0, 100.0, 1e4] {
            let v = series.ccdf(x);
            assert!(v <= prev + 1e-15);
            assert!((0.0..=1.0).contains(&v));
            prev = v;
        }
    }

    #[test]
    fn kappa_ccdf_deterministic_across_runs() {
        let cfg = McConfig {
            dims: (6, 5, 4),
            rank: 3,
            trials: 40,
            sampling: Sampling::OrthonormalAbGaussianC,
            master_seed: 13,
            alpha_grid: vec![2.0, 4.0],
        };
        let s1 = run_kappa_ccdf(&cfg).unwrap();
        let s2 = run_kappa_ccdf(&cfg).unwrap();
        assert_eq!(s1.samples, s2.samples);
        assert_eq!(s1.infinite_count, s2.infinite_count);
        assert_eq!(s1.bound_points, s2.bound_points);
    }

    #[test]
    fn forward_error_smoke() {
        let cfg = McConfig {
            dims: (8, 6, 4),
            rank: 4,
            trials: 30,
            sampling: Sampling::GaussianAll,
            master_seed: 14,
            alpha_grid: vec![],
        };
        for solver in [FwdSolver::PbaRandom, FwdSolver::PbaHosvd, FwdSolver::PbaPlusAls] {
            let out = run_forward_error_ccdf(&cfg, solver).unwrap();
            let used = out.errors.samples.len() + out.solver_failures;
            assert_eq!(used, cfg.trials, "{solver:?}");
            assert!(out.errors.samples.iter().all(|x| x.is_finite()));
            assert!(
                out.solver_failures <= cfg.trials / 3,
                "{solver:?}: {} failures",
                out.solver_failures
            );
        }
    }

    #[test]
    fn refined_solver_beats_plain_pba_in_the_tail() {
        let cfg = McConfig {
            dims: (8, 6, 4),
            rank: 4,
            trials: 40,
            sampling: Sampling::GaussianAll,
            master_seed: 15,
            alpha_grid: vec![],
        };
        let plain = run_forward_error_ccdf(&cfg, FwdSolver::PbaHosvd).unwrap();
        let refined = run_forward_error_ccdf(&cfg, FwdSolver::PbaPlusAls).unwrap();
        let med = |s: &CcdfSeries| s.samples[s.samples.len() / 2];
        assert!(
            med(&refined.errors) <= med(&plain.errors) * 1.01,
            "refined median {:.3e} vs plain {:.3e}",
            med(&refined.errors),
            med(&plain.errors)
        );
    }
}
