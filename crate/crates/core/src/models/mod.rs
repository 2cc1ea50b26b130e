//! Linearized process and measurement models.
//!
//! Everything here is evaluated at binary64. The filters cast the whitened
//! Jacobians to their working precision.

mod camera;
mod imu;
mod msckf;

pub use camera::{
    feature_to_global, inverse_depth_params, project_feature, project_global_point, project_point,
    reanchor_feature, Matrix2x4, Matrix2x6, Matrix3x6, PointJacobians, ProjectionJacobians,
    ReanchorJacobians, MIN_DEPTH, TSYNC_STEP,
};
pub use imu::{
    imu_transition, integrate_step, sqrt_information, ImuNoise, ImuSample, ImuState, Matrix15,
    TransitionBlock, GRAVITY,
};
pub use msckf::{msckf_nullspace_project, triangulate, Observation};

use nalgebra::{Dim, Matrix, RawStorage, Vector2};

use crate::linalg::{DenseMatrix, Real};
use crate::state::{BlockId, ErrorStateLayout, InverseDepthFeature, StateError, VinsStateVector};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("point is behind the camera (depth {depth:.4} m)")]
    BehindCamera { depth: f64 },
    #[error("feature Jacobian is rank deficient ({rows} rows)")]
    RankDeficientFeature { rows: usize },
    #[error("non-positive depth after reanchoring ({depth:.4} m)")]
    NonPositiveDepth { depth: f64 },
    #[error("pose {0} is not in the window")]
    MissingPose(u64),
    #[error("triangulation failed: {0}")]
    TriangulationFailed(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("measurement Jacobian touches the leading {0} columns")]
    LeadingColumnsNonZero(usize),
    #[error(transparent)]
    State(#[from] StateError),
}

/// Whitened measurement `r ≈ H δx + n`, `n ~ N(0, I)`, with `H = [0 H2]`.
///
/// Only `H2` (the columns from `n1` on) is stored.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearizedMeasurement<T> {
    pub residual: Vec<T>,
    pub h2: DenseMatrix<T>,
    pub n1: usize,
}

impl<T: Real> LinearizedMeasurement<T> {
    pub fn rows(&self) -> usize {
        self.residual.len()
    }

    pub fn n(&self) -> usize {
        self.n1 + self.h2.cols()
    }

    pub fn empty(n1: usize, n2: usize) -> Self {
        Self {
            residual: Vec::new(),
            h2: DenseMatrix::zeros(0, n2),
            n1,
        }
    }

    pub fn cast<U: Real>(&self) -> LinearizedMeasurement<U> {
        LinearizedMeasurement {
            residual: self.residual.iter().map(|&v| U::from_f64(v.to_f64())).collect(),
            h2: self.h2.cast(),
            n1: self.n1,
        }
    }

    /// `H` with the zero leading block materialized.
    pub fn full_jacobian(&self) -> DenseMatrix<T> {
        let mut h = DenseMatrix::zeros(self.rows(), self.n());
        h.set_block(0, self.n1, &self.h2);
        h
    }
}

/// Scales `r` and `H` by `1/σ` and splits off the leading `n1` columns, which
/// must be exactly zero.
pub fn whiten(
    r: &[f64],
    h: &DenseMatrix<f64>,
    sigma_px: f64,
    n1: usize,
) -> Result<LinearizedMeasurement<f64>, ModelError> {
    if !(sigma_px > 0.0) {
        return Err(ModelError::InvalidInput(format!("pixel sigma must be positive, got {sigma_px}")));
    }
    if h.rows() != r.len() || h.cols() < n1 {
        return Err(ModelError::InvalidInput(format!(
            "residual length {} vs Jacobian {:?}",
            r.len(),
            h.shape()
        )));
    }
    for i in 0..h.rows() {
        if h.row(i)[..n1].iter().any(|&v| v != 0.0) {
            return Err(ModelError::LeadingColumnsNonZero(n1));
        }
    }
    let s = 1.0 / sigma_px;
    let n2 = h.cols() - n1;
    Ok(LinearizedMeasurement {
        residual: r.iter().map(|&v| v * s).collect(),
        h2: h.submatrix(0, n1, h.rows(), n2).scale(s),
        n1,
    })
}

/// Stacks measurements sharing one layout.
pub fn stack_measurements(parts: &[LinearizedMeasurement<f64>], n1: usize, n2: usize) -> LinearizedMeasurement<f64> {
    let rows: usize = parts.iter().map(|p| p.rows()).sum();
    let mut h2 = DenseMatrix::zeros(rows, n2);
    let mut residual = Vec::with_capacity(rows);
    let mut at = 0;
    for p in parts {
        assert_eq!(p.h2.cols(), n2, "stacked measurement width mismatch");
        h2.set_block(at, 0, &p.h2);
        residual.extend_from_slice(&p.residual);
        at += p.rows();
    }
    LinearizedMeasurement { residual, h2, n1 }
}

pub(crate) fn add_block<R: Dim, C: Dim, S: RawStorage<f64, R, C>>(
    h: &mut DenseMatrix<f64>,
    row: usize,
    col: usize,
    m: &Matrix<f64, R, C, S>,
) {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            h[(row + i, col + j)] += m[(i, j)];
        }
    }
}

fn pose_offset(layout: &ErrorStateLayout, id: u64) -> Result<usize, ModelError> {
    Ok(layout.offset(BlockId::Pose(id))?)
}

/// Residual and full-width Jacobian rows (unwhitened) of inverse-depth
/// feature `feature` over `obs`. When `feature_col` is `None` the feature
/// columns are returned separately in the second matrix (`rows × 3`).
pub fn inverse_depth_rows(
    state: &VinsStateVector,
    layout: &ErrorStateLayout,
    feature: &InverseDepthFeature,
    obs: &[Observation],
    feature_col: Option<usize>,
) -> Result<(Vec<f64>, DenseMatrix<f64>, DenseMatrix<f64>), ModelError> {
    let m = 2 * obs.len();
    let n = layout.n();
    let mut h = DenseMatrix::zeros(m, n);
    let mut hf = DenseMatrix::zeros(m, 3);
    let mut r = Vec::with_capacity(m);
    let ts = layout.offset(BlockId::TimeSync)?;
    let io = layout.offset(BlockId::Intrinsics)?;
    let eo = layout.offset(BlockId::Extrinsics)?;
    let ao = pose_offset(layout, feature.anchor_id)?;
    for (k, o) in obs.iter().enumerate() {
        let (pix, j) = project_feature(state, feature, o.pose_id)?;
        let row = 2 * k;
        let res: Vector2<f64> = o.pixel - pix;
        r.extend_from_slice(res.as_slice());
        add_block(&mut h, row, ao, &j.anchor);
        add_block(&mut h, row, pose_offset(layout, o.pose_id)?, &j.observer);
        add_block(&mut h, row, io, &j.intrinsics);
        add_block(&mut h, row, eo, &j.extrinsics);
        add_block(&mut h, row, ts, &j.t_sync);
        match feature_col {
            Some(c) => add_block(&mut h, row, c, &j.feature),
            None => add_block(&mut hf, row, 0, &j.feature),
        }
    }
    Ok((r, h, hf))
}

/// MSCKF rows for a track: triangulate, linearize w.r.t. the global point and
/// the state, then eliminate the point. Unwhitened.
pub fn msckf_rows(
    state: &VinsStateVector,
    layout: &ErrorStateLayout,
    obs: &[Observation],
) -> Result<(Vec<f64>, DenseMatrix<f64>), ModelError> {
    let point = triangulate(state, obs)?;
    let m = 2 * obs.len();
    let mut h = DenseMatrix::zeros(m, layout.n());
    let mut hf = DenseMatrix::zeros(m, 3);
    let mut r = Vec::with_capacity(m);
    let ts = layout.offset(BlockId::TimeSync)?;
    let io = layout.offset(BlockId::Intrinsics)?;
    let eo = layout.offset(BlockId::Extrinsics)?;
    for (k, o) in obs.iter().enumerate() {
        let pose = state.pose(o.pose_id).ok_or(ModelError::MissingPose(o.pose_id))?;
        let (pix, j) = project_global_point(&point, pose, &state.calib, state.t_sync)?;
        let row = 2 * k;
        let res: Vector2<f64> = o.pixel - pix;
        r.extend_from_slice(res.as_slice());
        add_block(&mut hf, row, 0, &j.point);
        add_block(&mut h, row, pose_offset(layout, o.pose_id)?, &j.observer);
        add_block(&mut h, row, io, &j.intrinsics);
        add_block(&mut h, row, eo, &j.extrinsics);
        add_block(&mut h, row, ts, &j.t_sync);
    }
    let (hx, r2) = msckf_nullspace_project(&hf, &h, &r)?;
    Ok((r2, hx))
}
