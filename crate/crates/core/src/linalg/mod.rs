//! Dense numerical kernels for the estimators.
//!
//! Everything here is generic over [`Real`] (binary32 / binary64) and takes an
//! explicit [`FlopCounter`] so callers can attribute operation counts to the
//! phase they are timing. Kernels are pure functions of their inputs; nothing
//! is cached or shared between calls.
//!
//! Tolerances used by the tests scale as `c·ε·‖·‖`: `c = 4` for elementwise
//! comparisons and `c = 8·dim` for norms.

mod cholesky;
mod cond;
mod flops;
mod givens;
mod gram;
mod householder;
mod matrix;
mod scalar;
mod triangular;

pub use cholesky::{cholesky_upper, spd_inverse};
pub use cond::{cond_spectral, SpectralCondition};
pub use flops::FlopCounter;
pub use givens::{apply_givens_rows, givens_from_pair, GivensRotation};
pub(crate) use givens::rotate_slices;
pub use gram::{gram_accumulate_upper, gram_upper};
pub use householder::{householder_qr, householder_qr_stacked, QrOutput};
pub use matrix::{cast_vec, dot, norm, DenseMatrix};
pub use scalar::{Precision, Real};
pub use triangular::{invert_upper, solve_upper, solve_upper_transposed};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LinalgError {
    #[error("index {index} out of range (bound {bound})")]
    IndexOutOfRange { index: usize, bound: usize },
    #[error("matrix is not positive definite: pivot {pivot} is {value:e}")]
    NotPositiveDefinite { pivot: usize, value: f64 },
    #[error("triangular matrix is singular at diagonal {index}")]
    SingularTriangular { index: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}
