//! Dense matrix/vector kernels used by every other module.
//!
//! Everything here is plain `f64`, row-major, and deterministic. The routines
//! are written for desk-scale problems (n up to a few thousand), not for
//! LAPACK-grade throughput.

mod factor;
mod jacobi;
mod matrix;
mod random;

pub use factor::{CholeskyFactor, TriangularSide};
pub use jacobi::{svd, sym_eig, Svd, SymEig};
pub use matrix::{Matrix, Transpose, Vector};
pub use random::random_orthogonal;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix is not positive definite (after jitter up to {max_jitter:e})")]
    NotPositiveDefinite { max_jitter: f64 },
    #[error("zero diagonal entry at index {0} in triangular solve")]
    ZeroDiagonal(usize),
    #[error("matrix is not symmetric (relative asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("iteration did not converge after {0} sweeps")]
    NoConvergence(usize),
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),
}
