//! Conditioning instrumentation, trajectory metrics and FLOP accounting.

mod conditioning;
mod metrics;

pub use conditioning::{column_normalized, record_conditioning, ConditioningRecord};
pub use metrics::{align_yaw_translation, compute_ate, compute_rte, StampedPose, TrajectoryMetrics, MetricsError};

use crate::linalg::FlopCounter;

/// Estimator FLOPs by phase.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PhaseFlops {
    pub propagation: FlopCounter,
    pub marginalization: FlopCounter,
    pub update: FlopCounter,
}

impl PhaseFlops {
    pub fn total(&self) -> FlopCounter {
        self.propagation + self.marginalization + self.update
    }

    /// `(phase name, counter)` rows in report order.
    pub fn rows(&self) -> [(&'static str, FlopCounter); 4] {
        [
            ("Propagation", self.propagation),
            ("Marginalization", self.marginalization),
            ("Update", self.update),
            ("Estimator Total", self.total()),
        ]
    }
}
