//! VINS state vector, its error-state layout and manifold operations.
//!
//! Orientation errors are global-frame axis-angle perturbations applied on
//! the left (`q ← Exp(δθ) ⊗ q`). Quaternions are written to files in
//! `(x, y, z, w)` order.

mod layout;
pub mod so3;
mod vector;

pub use layout::{build_layout, Block, BlockId, ErrorStateLayout, N1};
pub use vector::{CameraCalibration, InverseDepthFeature, Pose, VinsStateVector};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StateError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("unknown state block {0}")]
    UnknownBlock(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("layout does not match the state vector")]
    LayoutMismatch,
}
