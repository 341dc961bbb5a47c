//! Maximum-entropy distributions of order statistics with prescribed
//! one-dimensional marginals, and maximum-entropy symmetric copulas with a
//! prescribed multidiagonal.
//!
//! The crate is organised bottom-up:
//!
//! * [`marginals`]: one-dimensional CDFs, marginal vectors, the open sets on
//!   which consecutive marginals differ, and the `J` functional.
//! * [`hazard`]: integrated hazards between consecutive marginals, shared by
//!   the copula and joint layers, including their inversion for sampling.
//! * [`multidiag`]: multidiagonals (vectors of CDFs on `[0, 1]`), either
//!   given directly or induced by a marginal vector.
//! * [`copula`]: the maximum-entropy copula density `c_δ`, the copula of
//!   the maximum-entropy order statistics `c_F`, and the symmetrization maps.
//! * [`joint`]: the maximum-entropy joint density `f_F`, its entropy, exact
//!   sampling and degeneracy classification.
//! * [`verify`]: independent quadrature and Monte-Carlo cross-checks.

// `!(a < b)` is used deliberately so that NaN falls on the rejecting side.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod copula;
pub mod hazard;
pub mod joint;
pub mod marginals;
pub mod multidiag;
pub mod quadrature;
pub mod verify;

mod special;

pub use copula::{CopulaKernel, Unsymmetrized};
pub use joint::{Degeneracy, MaxEntModel};
pub use marginals::{IntervalSet, MarginalCdf, MarginalVector, OrderReport};
pub use multidiag::{Multidiagonal, MultidiagonalReport};
pub use verify::{Budget, VerificationReport};

/// Errors raised by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid marginal: {0}")]
    InvalidMarginal(String),
    #[error("marginal vector is empty")]
    EmptyVector,
    #[error("stochastic order violated at index {index}: F_{{i-1}}(t) < F_i(t) at t = {witness}")]
    StochasticOrder { index: usize, witness: f64 },
    #[error("t = {t} lies outside the open set Psi_{index}")]
    OutOfPsi { index: usize, t: f64 },
    #[error("multidiagonal is not the multidiagonal of an absolutely continuous copula")]
    NotAbsolutelyContinuous,
    #[error("marginal vector is not in F_d^0 (a marginal lacks a density or Sigma^F has positive measure)")]
    NotInF0,
    #[error("degenerate model: {0}")]
    Degenerate(Degeneracy),
    #[error("root bracketing failed while inverting an integrated hazard (index {index}, start {start})")]
    RootBracketFailure { index: usize, start: f64 },
    #[error("tensor quadrature supports at most 3 dimensions, got {0}")]
    DimensionTooLarge(usize),
    #[error("empty sample")]
    EmptySample,
    #[error("point has dimension {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("malformed input: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
