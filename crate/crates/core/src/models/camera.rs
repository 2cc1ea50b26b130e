use nalgebra::{Matrix2x3, Matrix3, SMatrix, UnitQuaternion, Vector2, Vector3};

use super::ModelError;
use crate::state::so3::skew;
use crate::state::{CameraCalibration, InverseDepthFeature, Pose, VinsStateVector};

pub type Matrix2x6 = SMatrix<f64, 2, 6>;
pub type Matrix2x4 = SMatrix<f64, 2, 4>;
pub type Matrix3x6 = SMatrix<f64, 3, 6>;

/// Points closer than this along the optical axis are rejected.
pub const MIN_DEPTH: f64 = 0.05;

/// Step for the central difference that gives the time-offset column.
pub const TSYNC_STEP: f64 = 1e-4;

/// Jacobians of a pixel w.r.t. the blocks it depends on. Pose and extrinsic
/// blocks are ordered position then orientation.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionJacobians {
    pub anchor: Matrix2x6,
    pub observer: Matrix2x6,
    pub feature: Matrix2x3<f64>,
    pub intrinsics: Matrix2x4,
    pub extrinsics: Matrix2x6,
    pub t_sync: Vector2<f64>,
}

/// Jacobians of a pixel for a feature given directly as a global point.
#[derive(Debug, Clone, PartialEq)]
pub struct PointJacobians {
    pub point: Matrix2x3<f64>,
    pub observer: Matrix2x6,
    pub intrinsics: Matrix2x4,
    pub extrinsics: Matrix2x6,
    pub t_sync: Vector2<f64>,
}

/// Partial derivatives of the camera-frame point `z = R_icᵀ (R_oᵀ (P − p_o) − p_ic)`.
struct Chain {
    z: Vector3<f64>,
    dz_dpoint: Matrix3<f64>,
    dz_dpo: Matrix3<f64>,
    dz_dthetao: Matrix3<f64>,
    dz_dpic: Matrix3<f64>,
    dz_dthetac: Matrix3<f64>,
}

fn rot(q: &UnitQuaternion<f64>) -> Matrix3<f64> {
    q.to_rotation_matrix().into_inner()
}

fn chain(point: &Vector3<f64>, p_o: &Vector3<f64>, q_o: &UnitQuaternion<f64>, calib: &CameraCalibration) -> Chain {
    let r_o = rot(q_o);
    let r_ic = rot(&calib.q_ic);
    let d = point - p_o;
    let q = r_o.transpose() * d - calib.p_ic;
    let c = r_ic.transpose() * r_o.transpose();
    Chain {
        z: r_ic.transpose() * q,
        dz_dpoint: c,
        dz_dpo: -c,
        dz_dthetao: c * skew(&d),
        dz_dpic: -r_ic.transpose(),
        dz_dthetac: r_ic.transpose() * skew(&q),
    }
}

fn pinhole(z: &Vector3<f64>, calib: &CameraCalibration) -> Result<(Vector2<f64>, Matrix2x3<f64>, Matrix2x4), ModelError> {
    if !(z.z > MIN_DEPTH) {
        return Err(ModelError::BehindCamera { depth: z.z });
    }
    let k = &calib.intrinsics;
    let (fx, fy) = (k[0], k[1]);
    let (x, y) = (z.x / z.z, z.y / z.z);
    let pix = Vector2::new(fx * x + k[2], fy * y + k[3]);
    let iz = 1.0 / z.z;
    let j = Matrix2x3::new(fx * iz, 0.0, -fx * x * iz, 0.0, fy * iz, -fy * y * iz);
    let jk = Matrix2x4::new(x, 0.0, 1.0, 0.0, 0.0, y, 0.0, 1.0);
    Ok((pix, j, jk))
}

/// Global position of an inverse-depth feature, with the anchor unshifted.
pub fn feature_to_global(feature: &InverseDepthFeature, anchor: &Pose, calib: &CameraCalibration) -> Vector3<f64> {
    anchor.p + anchor.q * (calib.p_ic + calib.q_ic * feature.point_in_anchor())
}

/// Pixel of global point `point` seen from `observer`, whose pose is shifted
/// by `t_sync` along its hint velocity and rate.
pub fn project_point(
    point: &Vector3<f64>,
    observer: &Pose,
    calib: &CameraCalibration,
    t_sync: f64,
) -> Result<Vector2<f64>, ModelError> {
    let (p_o, q_o) = observer.shifted(t_sync);
    let ch = chain(point, &p_o, &q_o, calib);
    Ok(pinhole(&ch.z, calib)?.0)
}

fn tsync_column(point: &Vector3<f64>, observer: &Pose, calib: &CameraCalibration, t_sync: f64) -> Result<Vector2<f64>, ModelError> {
    let plus = project_point(point, observer, calib, t_sync + TSYNC_STEP)?;
    let minus = project_point(point, observer, calib, t_sync - TSYNC_STEP)?;
    Ok((plus - minus) / (2.0 * TSYNC_STEP))
}

fn stack6(a: Matrix2x3<f64>, b: Matrix2x3<f64>) -> Matrix2x6 {
    let mut m = Matrix2x6::zeros();
    m.fixed_view_mut::<2, 3>(0, 0).copy_from(&a);
    m.fixed_view_mut::<2, 3>(0, 3).copy_from(&b);
    m
}

/// Pixel and Jacobians for a global point.
pub fn project_global_point(
    point: &Vector3<f64>,
    observer: &Pose,
    calib: &CameraCalibration,
    t_sync: f64,
) -> Result<(Vector2<f64>, PointJacobians), ModelError> {
    let (p_o, q_o) = observer.shifted(t_sync);
    let ch = chain(point, &p_o, &q_o, calib);
    let (pix, jp, jk) = pinhole(&ch.z, calib)?;
    let jac = PointJacobians {
        point: jp * ch.dz_dpoint,
        observer: stack6(jp * ch.dz_dpo, jp * ch.dz_dthetao),
        intrinsics: jk,
        extrinsics: stack6(jp * ch.dz_dpic, jp * ch.dz_dthetac),
        t_sync: tsync_column(point, observer, calib, t_sync)?,
    };
    Ok((pix, jac))
}

/// Derivative of the anchor-frame point `u(α, β)/ρ` w.r.t. `(α, β, ρ)`.
fn d_anchor_point(params: &Vector3<f64>) -> Matrix3<f64> {
    let (a, b, rho) = (params.x, params.y, params.z);
    let (sa, ca, sb, cb) = (a.sin(), a.cos(), b.sin(), b.cos());
    let u = Vector3::new(cb * sa, sb, cb * ca);
    let mut m = Matrix3::zeros();
    m.set_column(0, &(Vector3::new(cb * ca, 0.0, -cb * sa) / rho));
    m.set_column(1, &(Vector3::new(-sb * sa, cb, -sb * ca) / rho));
    m.set_column(2, &(-u / (rho * rho)));
    m
}

/// Sensitivity of the global point of `feature` w.r.t. its parameters, the
/// anchor pose (p, θ) and the extrinsics (p, θ).
struct GlobalPointJac {
    point: Vector3<f64>,
    d_feature: Matrix3<f64>,
    d_anchor_p: Matrix3<f64>,
    d_anchor_th: Matrix3<f64>,
    d_pic: Matrix3<f64>,
    d_thc: Matrix3<f64>,
}

fn global_point_jac(feature: &InverseDepthFeature, anchor: &Pose, calib: &CameraCalibration) -> GlobalPointJac {
    let r_a = rot(&anchor.q);
    let r_ic = rot(&calib.q_ic);
    let pc = feature.point_in_anchor();
    let rp = r_ic * pc;
    let w = calib.p_ic + rp;
    GlobalPointJac {
        point: anchor.p + r_a * w,
        d_feature: r_a * r_ic * d_anchor_point(&feature.params),
        d_anchor_p: Matrix3::identity(),
        d_anchor_th: -skew(&(r_a * w)),
        d_pic: r_a,
        d_thc: -r_a * skew(&rp),
    }
}

/// Pixel of an inverse-depth feature seen from pose `observer_id`, with
/// Jacobians for every block it touches. When the observer is the anchor the
/// two pose blocks are both filled and must be summed by the caller.
pub fn project_feature(
    state: &VinsStateVector,
    feature: &InverseDepthFeature,
    observer_id: u64,
) -> Result<(Vector2<f64>, ProjectionJacobians), ModelError> {
    let anchor = state
        .pose(feature.anchor_id)
        .ok_or(ModelError::MissingPose(feature.anchor_id))?;
    let observer = state.pose(observer_id).ok_or(ModelError::MissingPose(observer_id))?;
    let calib = &state.calib;
    let g = global_point_jac(feature, anchor, calib);
    let (p_o, q_o) = observer.shifted(state.t_sync);
    let ch = chain(&g.point, &p_o, &q_o, calib);
    let (pix, jp, jk) = pinhole(&ch.z, calib)?;
    let dpt = jp * ch.dz_dpoint;
    let jac = ProjectionJacobians {
        anchor: stack6(dpt * g.d_anchor_p, dpt * g.d_anchor_th),
        observer: stack6(jp * ch.dz_dpo, jp * ch.dz_dthetao),
        feature: dpt * g.d_feature,
        intrinsics: jk,
        extrinsics: stack6(jp * ch.dz_dpic + dpt * g.d_pic, jp * ch.dz_dthetac + dpt * g.d_thc),
        t_sync: tsync_column(&g.point, observer, calib, state.t_sync)?,
    };
    Ok((pix, jac))
}

/// Inverse-depth parameters of global `point` in the camera of `anchor`.
pub fn inverse_depth_params(
    point: &Vector3<f64>,
    anchor: &Pose,
    calib: &CameraCalibration,
) -> Result<Vector3<f64>, ModelError> {
    let ch = chain(point, &anchor.p, &anchor.q, calib);
    params_from_camera_point(&ch.z).map(|(p, _)| p)
}

fn params_from_camera_point(z: &Vector3<f64>) -> Result<(Vector3<f64>, Matrix3<f64>), ModelError> {
    if !(z.z > 0.0) {
        return Err(ModelError::NonPositiveDepth { depth: z.z });
    }
    let (x, y, zz) = (z.x, z.y, z.z);
    let s2 = x * x + zz * zz;
    let s = s2.sqrt();
    let r2 = s2 + y * y;
    let r = r2.sqrt();
    let params = Vector3::new(x.atan2(zz), y.atan2(s), 1.0 / r);
    let mut j = Matrix3::zeros();
    j.set_row(0, &Vector3::new(zz / s2, 0.0, -x / s2).transpose());
    j.set_row(
        1,
        &Vector3::new(-y * x / (s * r2), s / r2, -y * zz / (s * r2)).transpose(),
    );
    j.set_row(2, &(-z / (r2 * r)).transpose());
    Ok((params, j))
}

/// Jacobians of reanchored parameters w.r.t. the old parameters, both anchor
/// poses and the extrinsics.
#[derive(Debug, Clone, PartialEq)]
pub struct ReanchorJacobians {
    pub feature: Matrix3<f64>,
    pub old_anchor: Matrix3x6,
    pub new_anchor: Matrix3x6,
    pub extrinsics: Matrix3x6,
}

fn stack36(a: Matrix3<f64>, b: Matrix3<f64>) -> Matrix3x6 {
    let mut m = Matrix3x6::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&a);
    m.fixed_view_mut::<3, 3>(0, 3).copy_from(&b);
    m
}

/// Re-expresses `feature` in the camera frame of `new_anchor` so that the
/// represented global point is unchanged.
pub fn reanchor_feature(
    feature: &InverseDepthFeature,
    old_anchor: &Pose,
    new_anchor: &Pose,
    calib: &CameraCalibration,
) -> Result<(InverseDepthFeature, ReanchorJacobians), ModelError> {
    let g = global_point_jac(feature, old_anchor, calib);
    let ch = chain(&g.point, &new_anchor.p, &new_anchor.q, calib);
    let (params, jz) = params_from_camera_point(&ch.z)?;
    let dz = ch.dz_dpoint;
    let jac = ReanchorJacobians {
        feature: jz * dz * g.d_feature,
        old_anchor: stack36(jz * dz * g.d_anchor_p, jz * dz * g.d_anchor_th),
        new_anchor: stack36(jz * ch.dz_dpo, jz * ch.dz_dthetao),
        extrinsics: stack36(jz * (ch.dz_dpic + dz * g.d_pic), jz * (ch.dz_dthetac + dz * g.d_thc)),
    };
    Ok((
        InverseDepthFeature {
            id: feature.id,
            anchor_id: new_anchor.id,
            params,
        },
        jac,
    ))
}
