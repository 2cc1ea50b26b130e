use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::Float;

/// Floating-point precision the estimator kernels run at.
///
/// Implemented for `f32` (binary32) and `f64` (binary64). Every dense kernel
/// in [`crate::linalg`] is generic over this trait, so the same code path runs
/// at both precisions and a binary64 run is the reference for its binary32
/// counterpart.
pub trait Real:
    Float
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Short name used in reports (`binary32` / `binary64`).
    const NAME: &'static str;

    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;

    fn from_usize(v: usize) -> Self {
        Self::from_f64(v as f64)
    }
}

impl Real for f32 {
    const NAME: &'static str = "binary32";

    #[inline]
    fn from_f64(v: f64) -> Self {
        v as f32
    }

    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    const NAME: &'static str = "binary64";

    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }

    #[inline]
    fn to_f64(self) -> f64 {
        self
    }
}

/// Runtime precision selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    Binary32,
    Binary64,
}

impl Precision {
    pub fn name(self) -> &'static str {
        match self {
            Precision::Binary32 => f32::NAME,
            Precision::Binary64 => f64::NAME,
        }
    }

    pub fn epsilon(self) -> f64 {
        match self {
            Precision::Binary32 => f32::EPSILON as f64,
            Precision::Binary64 => f64::EPSILON,
        }
    }
}

impl std::str::FromStr for Precision {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "binary32" | "f32" | "float32" => Ok(Precision::Binary32),
            "binary64" | "f64" | "float64" => Ok(Precision::Binary64),
            other => Err(format!("unknown precision `{other}` (expected binary32 or binary64)")),
        }
    }
}

impl Display for Precision {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}
