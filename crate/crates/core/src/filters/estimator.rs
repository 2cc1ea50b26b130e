use super::kf::{kf_augment, kf_marginalize_indices, kf_reparameterize, kf_update};
use super::pcsrif::{if_update_oracle, pcsrif_update};
use super::precond::Preconditioner;
use super::srif::{srif_augment, srif_marginalize_indices, srif_reparameterize, srif_update_partitioned};
use super::{Augmentation, EstimatorKind, FilterError, UpdateResult};
use crate::linalg::{
    cholesky_upper, gram_upper, invert_upper, norm, spd_inverse, DenseMatrix, FlopCounter, Real,
};
use crate::models::LinearizedMeasurement;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FallbackPolicy {
    #[default]
    Abort,
    Qr,
}

impl std::str::FromStr for FallbackPolicy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "abort" | "none" => Ok(Self::Abort),
            "qr" => Ok(Self::Qr),
            _ => Err(format!("unknown fallback policy `{s}` (expected abort or qr)")),
        }
    }
}

impl FallbackPolicy {
    pub fn name(self) -> &'static str {
        match self {
            Self::Abort => "abort",
            Self::Qr => "qr",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorOptions {
    pub kind: EstimatorKind,
    pub fallback: FallbackPolicy,
    /// Compare every square-root update against a binary64 QR solve.
    pub shadow_check: bool,
    /// Relative solution error that counts as an instability event.
    pub shadow_tolerance: f64,
    /// Check `R⊕ᵀR⊕ = RᵀR + HᵀH` at binary64 after every update.
    pub verify_identity: bool,
}

impl EstimatorOptions {
    pub fn new(kind: EstimatorKind) -> Self {
        Self {
            kind,
            fallback: FallbackPolicy::Abort,
            shadow_check: kind == EstimatorKind::IfOracle,
            shadow_tolerance: 1e-2,
            verify_identity: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FilterEventKind {
    NotPositiveDefinite,
    FallbackQr,
    SolutionError,
    DegeneratePreconditioner,
}

impl FilterEventKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::NotPositiveDefinite => "NotPositiveDefinite",
            Self::FallbackQr => "FallbackQr",
            Self::SolutionError => "SolutionError",
            Self::DegeneratePreconditioner => "DegeneratePreconditioner",
        }
    }

    /// Whether this event marks a numerically failed update.
    pub fn is_instability(self) -> bool {
        matches!(self, Self::NotPositiveDefinite | Self::SolutionError)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterEvent {
    pub kind: FilterEventKind,
    pub value: f64,
    pub detail: String,
}

/// Factors around one update, at binary64.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateDiagnostics {
    pub r22_prior: DenseMatrix<f64>,
    pub r22_post: DenseMatrix<f64>,
    /// The preconditioner the update used, when it used one.
    pub preconditioner: Option<Preconditioner<f64>>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct UpdateReport {
    pub delta_x: Vec<f64>,
    pub events: Vec<FilterEvent>,
    pub diagnostics: Option<UpdateDiagnostics>,
    /// Relative error of `R⊕ᵀR⊕` against `RᵀR + HᵀH`.
    pub identity_error: Option<f64>,
    /// Relative error of the correction against a binary64 QR solve.
    pub solution_error: Option<f64>,
    pub upper_triangular: bool,
}

#[derive(Debug, Clone, PartialEq)]
enum Repr<T> {
    SqrtInfo(DenseMatrix<T>),
    Covariance(DenseMatrix<T>),
}

/// One filter instance at working precision `T`.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimator<T> {
    pub options: EstimatorOptions,
    repr: Repr<T>,
}

fn relative_frobenius(a: &DenseMatrix<f64>, b: &DenseMatrix<f64>) -> f64 {
    let d = a.sub(b).frobenius_norm();
    let s = b.frobenius_norm();
    if s > 0.0 {
        d / s
    } else {
        d
    }
}

impl<T: Real> Estimator<T> {
    /// Starts from a Gaussian prior with covariance `prior_cov`.
    pub fn new(options: EstimatorOptions, prior_cov: &DenseMatrix<f64>) -> Result<Self, FilterError> {
        let mut scratch = FlopCounter::new();
        let repr = match options.kind {
            EstimatorKind::Kf => Repr::Covariance(prior_cov.cast()),
            _ => {
                let info = spd_inverse(prior_cov, &mut scratch)?;
                Repr::SqrtInfo(cholesky_upper(&info, &mut scratch)?.cast())
            }
        };
        Ok(Self { options, repr })
    }

    /// Starts from a square-root information factor (square-root kinds) or
    /// from the covariance it implies (KF).
    pub fn from_sqrt_info(options: EstimatorOptions, r: &DenseMatrix<f64>) -> Result<Self, FilterError> {
        let repr = match options.kind {
            EstimatorKind::Kf => {
                let mut scratch = FlopCounter::new();
                let rinv = invert_upper(r, &mut scratch)?;
                Repr::Covariance(rinv.matmul_transposed(&rinv, &mut scratch).cast())
            }
            _ => Repr::SqrtInfo(r.cast()),
        };
        Ok(Self { options, repr })
    }

    pub fn kind(&self) -> EstimatorKind {
        self.options.kind
    }

    pub fn dim(&self) -> usize {
        match &self.repr {
            Repr::SqrtInfo(r) => r.rows(),
            Repr::Covariance(p) => p.rows(),
        }
    }

    /// The square-root information factor, for square-root estimators.
    pub fn sqrt_info(&self) -> Option<DenseMatrix<f64>> {
        match &self.repr {
            Repr::SqrtInfo(r) => Some(r.cast()),
            Repr::Covariance(_) => None,
        }
    }

    pub fn sqrt_info_raw(&self) -> Option<&DenseMatrix<T>> {
        match &self.repr {
            Repr::SqrtInfo(r) => Some(r),
            Repr::Covariance(_) => None,
        }
    }

    /// Full covariance at binary64.
    pub fn covariance(&self) -> Result<DenseMatrix<f64>, FilterError> {
        let mut scratch = FlopCounter::new();
        match &self.repr {
            Repr::Covariance(p) => Ok(p.cast()),
            Repr::SqrtInfo(r) => {
                let rinv = invert_upper(&r.cast::<f64>(), &mut scratch)?;
                let mut p = rinv.matmul_transposed(&rinv, &mut scratch);
                p.mirror_upper();
                Ok(p)
            }
        }
    }

    pub fn augment(&mut self, aug: &Augmentation, flops: &mut FlopCounter) -> Result<(), FilterError> {
        self.repr = match &self.repr {
            Repr::SqrtInfo(r) => Repr::SqrtInfo(srif_augment(r, aug, flops)?),
            Repr::Covariance(p) => Repr::Covariance(kf_augment(p, aug, flops)?),
        };
        Ok(())
    }

    /// Removes the listed states (ascending indices).
    pub fn marginalize(&mut self, indices: &[usize], flops: &mut FlopCounter) -> Result<(), FilterError> {
        if indices.is_empty() {
            return Ok(());
        }
        self.repr = match &self.repr {
            Repr::SqrtInfo(r) => Repr::SqrtInfo(srif_marginalize_indices(r, indices, flops)?),
            Repr::Covariance(p) => Repr::Covariance(kf_marginalize_indices(p, indices)?),
        };
        Ok(())
    }

    pub fn reparameterize(
        &mut self,
        offset: usize,
        rows: &DenseMatrix<f64>,
        flops: &mut FlopCounter,
    ) -> Result<(), FilterError> {
        self.repr = match &self.repr {
            Repr::SqrtInfo(r) => Repr::SqrtInfo(srif_reparameterize(r, offset, rows, flops)?),
            Repr::Covariance(p) => Repr::Covariance(kf_reparameterize(p, offset, rows, flops)?),
        };
        Ok(())
    }

    /// Applies a whitened measurement. `pose_offsets_x2` are the pose block
    /// offsets inside `x2` (used by the preconditioner).
    pub fn update(
        &mut self,
        meas: &LinearizedMeasurement<f64>,
        pose_offsets_x2: &[usize],
        want_diagnostics: bool,
        flops: &mut FlopCounter,
    ) -> Result<UpdateReport, FilterError> {
        let meas_t: LinearizedMeasurement<T> = meas.cast();
        let mut report = UpdateReport::default();
        let r = match &self.repr {
            Repr::Covariance(p) => {
                let (dx, p_post) = kf_update(p, &meas_t, flops)?;
                report.delta_x = dx.iter().map(|&v| Real::to_f64(v)).collect();
                report.upper_triangular = true;
                self.repr = Repr::Covariance(p_post);
                return Ok(report);
            }
            Repr::SqrtInfo(r) => r,
        };
        let n1 = meas.n1;
        let n2 = r.rows() - n1;

        let mut preconditioner = None;
        let attempt: Result<UpdateResult<T>, FilterError> = match self.options.kind {
            EstimatorKind::Srif | EstimatorKind::Kf => srif_update_partitioned(r, &meas_t, flops),
            EstimatorKind::PcSrif => pcsrif_update(r, &meas_t, pose_offsets_x2, flops).map(|(res, m)| {
                if !m.degenerate.is_empty() {
                    report.events.push(FilterEvent {
                        kind: FilterEventKind::DegeneratePreconditioner,
                        value: m.degenerate.len() as f64,
                        detail: format!("pinned indices {:?}", m.degenerate),
                    });
                }
                preconditioner = Some(m.cast::<f64>());
                res
            }),
            EstimatorKind::IfOracle => if_update_oracle(r, &meas_t, flops),
        };
        let result = match attempt {
            Ok(res) => res,
            Err(e) => {
                let Some((pivot, value)) = e.not_positive_definite() else {
                    return Err(e);
                };
                report.events.push(FilterEvent {
                    kind: FilterEventKind::NotPositiveDefinite,
                    value,
                    detail: format!("pivot {pivot}"),
                });
                if self.options.fallback == FallbackPolicy::Abort {
                    return Err(e);
                }
                report.events.push(FilterEvent {
                    kind: FilterEventKind::FallbackQr,
                    value: 0.0,
                    detail: "step solved by QR".into(),
                });
                preconditioner = None;
                srif_update_partitioned(r, &meas_t, flops)?
            }
        };

        let dx: Vec<f64> = result.delta_x.iter().map(|&v| Real::to_f64(v)).collect();
        let need_f64 = self.options.shadow_check || self.options.verify_identity;
        if need_f64 {
            let mut scratch = FlopCounter::new();
            let r64: DenseMatrix<f64> = r.cast();
            if self.options.shadow_check {
                let shadow = srif_update_partitioned(&r64, meas, &mut scratch)?;
                let diff: Vec<f64> = dx.iter().zip(&shadow.delta_x).map(|(a, b)| a - b).collect();
                let scale = norm(&shadow.delta_x);
                let err = if scale > 0.0 { norm(&diff) / scale } else { norm(&diff) };
                report.solution_error = Some(err);
                if !(err < self.options.shadow_tolerance) {
                    report.events.push(FilterEvent {
                        kind: FilterEventKind::SolutionError,
                        value: err,
                        detail: "relative error against binary64 QR".into(),
                    });
                }
            }
            if self.options.verify_identity {
                let post: DenseMatrix<f64> = result.r_post.cast();
                let lhs = gram_upper(&post, &mut scratch);
                let h = meas.full_jacobian();
                let rhs = gram_upper(&r64, &mut scratch).add(&h.transpose_matmul(&h, &mut scratch));
                report.identity_error = Some(relative_frobenius(&lhs, &rhs));
            }
        }
        report.upper_triangular = result.r_post.is_upper_triangular();
        if want_diagnostics {
            report.diagnostics = Some(UpdateDiagnostics {
                r22_prior: r.submatrix(n1, n1, n2, n2).cast(),
                r22_post: result.r_post.submatrix(n1, n1, n2, n2).cast(),
                preconditioner,
            });
        }
        report.delta_x = dx;
        self.repr = Repr::SqrtInfo(result.r_post);
        Ok(report)
    }
}
