//! Square-root information, preconditioned and covariance-form estimators.

mod estimator;
mod kf;
mod pcsrif;
mod precond;
mod srif;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::linalg::{DenseMatrix, LinalgError};

pub use estimator::{
    Estimator, EstimatorOptions, FallbackPolicy, FilterEvent, FilterEventKind, UpdateDiagnostics, UpdateReport,
};
pub use kf::{kf_augment, kf_marginalize_indices, kf_reparameterize, kf_update};
pub use pcsrif::{if_update_oracle, pcsrif_update, pcsrif_update_detailed, PcSrifFlops};
pub use precond::{apply_preconditioner_inverse, build_preconditioner, sparsity_set, Preconditioner};
pub use srif::{
    marginalize_oracle_householder, recover_dx1, srif_augment, srif_marginalize, srif_marginalize_indices,
    srif_reparameterize, srif_update_partitioned,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FilterError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("innovation covariance is not positive definite")]
    InnovationNotPositiveDefinite,
}

impl FilterError {
    /// Pivot of a failed Cholesky factorization, if that is what this is.
    pub fn not_positive_definite(&self) -> Option<(usize, f64)> {
        match self {
            FilterError::Linalg(LinalgError::NotPositiveDefinite { pivot, value }) => Some((*pivot, *value)),
            _ => None,
        }
    }
}

/// New states `δξ = Φ·δx + w`, `w ~ N(0, Q)`, appended to the current ones.
///
/// `new_positions` are the (ascending) indices of the new states in the
/// augmented ordering; old states keep their relative order. `sqrt_info` is
/// an upper-triangular `A` with `AᵀA = Q⁻¹`.
#[derive(Debug, Clone, PartialEq)]
pub struct Augmentation {
    pub new_positions: Vec<usize>,
    pub phi: DenseMatrix<f64>,
    pub sqrt_info: DenseMatrix<f64>,
    pub noise_cov: DenseMatrix<f64>,
}

impl Augmentation {
    pub fn dim(&self) -> usize {
        self.new_positions.len()
    }

    pub fn validate(&self, n_old: usize) -> Result<(), FilterError> {
        let k = self.dim();
        let bad = |msg: String| Err(FilterError::DimensionMismatch(msg));
        if self.phi.shape() != (k, n_old) {
            return bad(format!("phi is {:?}, expected ({k}, {n_old})", self.phi.shape()));
        }
        if self.sqrt_info.shape() != (k, k) || !self.sqrt_info.is_upper_triangular() {
            return bad(format!("sqrt_info must be {k}x{k} upper triangular"));
        }
        if self.noise_cov.shape() != (k, k) {
            return bad(format!("noise_cov is {:?}, expected ({k}, {k})", self.noise_cov.shape()));
        }
        if self.new_positions.windows(2).any(|w| w[0] >= w[1]) {
            return bad("new positions must be strictly ascending".into());
        }
        if self.new_positions.last().is_some_and(|&p| p >= n_old + k) {
            return bad("new position outside the augmented state".into());
        }
        Ok(())
    }
}

/// Correction and posterior factor of one update.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateResult<T> {
    pub delta_x: Vec<T>,
    pub r_post: DenseMatrix<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EstimatorKind {
    Kf,
    Srif,
    PcSrif,
    IfOracle,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 4] = [Self::Kf, Self::Srif, Self::PcSrif, Self::IfOracle];

    pub fn name(self) -> &'static str {
        match self {
            Self::Kf => "kf",
            Self::Srif => "srif",
            Self::PcSrif => "pcsrif",
            Self::IfOracle => "if-oracle",
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimatorKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown estimator `{s}` (expected kf, srif, pcsrif or if-oracle)"))
    }
}
