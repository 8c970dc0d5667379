//! Pencil-based algorithms (PBAs) for third-order tensor rank decomposition,
//! the condition number of the decomposition problem, and the experiment
//! harnesses that expose the numerical instability of PBAs.
//!
//! The crate is organized around a dense [`Tensor3`](tensor::Tensor3) type and
//! its canonical polyadic decomposition [`Cpd`](tensor::Cpd). On top of those:
//!
//! * [`pba`] runs the projection / compression / generalized-eigendecomposition
//!   pipeline that recovers a CPD from a low-rank tensor,
//! * [`conditioning`] computes the condition number of a decomposition from the
//!   smallest singular value of its Terracini matrix,
//! * [`adversarial`] constructs the orthogonally decomposable tensors on which
//!   the pipeline loses accuracy, and sweeps perturbation sizes,
//! * [`mc`] estimates condition-number and forward-error distributions by
//!   Monte Carlo,
//! * [`refine`] polishes any CPD by alternating least squares,
//! * [`metrics`] scores recovered decompositions (permutation-matched forward
//!   error, excess factor),
//! * [`properties`] runs standalone numerical checks of the inequalities the
//!   rest of the crate relies on.
//!
//! Everything is deterministic given a seed: random instances derive per-trial
//! generators via [`seeds::mix_seed`], and parallel maps preserve ordering.

pub mod adversarial;
pub mod conditioning;
pub mod error;
pub mod io;
pub mod linalg;
pub mod mc;
pub mod metrics;
pub mod par;
pub mod pba;
pub mod properties;
pub mod refine;
pub mod seeds;
pub mod tensor;

pub use error::Error;
pub use tensor::{Cpd, Rank1Term, Tensor3};

/// Unit roundoff of IEEE double precision, the backward-error scale used by
/// the excess-factor metric.
pub const UNIT_ROUNDOFF: f64 = 1.11e-16;
