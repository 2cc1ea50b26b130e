use crate::filters::{apply_preconditioner_inverse, build_preconditioner, UpdateDiagnostics};
use crate::linalg::{cond_spectral, DenseMatrix, FlopCounter};

/// Condition numbers around one update, all at binary64.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditioningRecord {
    pub t: f64,
    pub step: usize,
    pub n2: usize,
    /// κ²(R22⊕)
    pub kappa2_r22_post: f64,
    /// κ²(R22⊕ D⁻¹), `D² = diag(R22⊕ᵀ R22⊕)`
    pub kappa2_r22_post_scaled: f64,
    /// κ²(R22⊕ M⁻¹), `M` built from the prior `R22`
    pub kappa2_r22_post_precond: f64,
    /// κ²(R22 M⁻¹)
    pub kappa2_r22_precond: f64,
    /// Extreme singular values of the scaled covariance `D P22 D`.
    pub sigma_max_p: f64,
    pub sigma_min_p: f64,
}

/// `A D⁻¹` with `D` the column norms of `A`; zero columns are left alone.
pub fn column_normalized(a: &DenseMatrix<f64>) -> DenseMatrix<f64> {
    let norms: Vec<f64> = (0..a.cols())
        .map(|j| {
            let n = a.column(j).iter().map(|v| v * v).sum::<f64>().sqrt();
            if n > 0.0 {
                n
            } else {
                1.0
            }
        })
        .collect();
    DenseMatrix::from_fn(a.rows(), a.cols(), |i, j| a[(i, j)] / norms[j])
}

/// Builds the record from the factors of one update. When the update did not
/// use a preconditioner, one is built from the prior `R22` for reporting.
pub fn record_conditioning(
    t: f64,
    step: usize,
    diag: &UpdateDiagnostics,
    pose_offsets_x2: &[usize],
) -> ConditioningRecord {
    let mut scratch = FlopCounter::new();
    let m = match &diag.preconditioner {
        Some(m) => m.clone(),
        None => build_preconditioner(&diag.r22_prior, pose_offsets_x2, &mut scratch),
    };
    let post = cond_spectral(&diag.r22_post);
    let scaled = cond_spectral(&column_normalized(&diag.r22_post));
    let post_pc = cond_spectral(&apply_preconditioner_inverse(&m, &diag.r22_post, &mut scratch));
    let prior_pc = cond_spectral(&apply_preconditioner_inverse(&m, &diag.r22_prior, &mut scratch));
    ConditioningRecord {
        t,
        step,
        n2: diag.r22_post.rows(),
        kappa2_r22_post: post.kappa_squared(),
        kappa2_r22_post_scaled: scaled.kappa_squared(),
        kappa2_r22_post_precond: post_pc.kappa_squared(),
        kappa2_r22_precond: prior_pc.kappa_squared(),
        sigma_max_p: 1.0 / (scaled.sigma_min * scaled.sigma_min),
        sigma_min_p: 1.0 / (scaled.sigma_max * scaled.sigma_max),
    }
}
