use nalgebra::{UnitQuaternion, Vector3, Vector4};

use super::layout::{BlockId, ErrorStateLayout};
use super::{so3, StateError};

/// A cloned IMU pose in the sliding window.
///
/// `q` rotates IMU-frame vectors into the global frame. The two hint fields
/// are not estimated: they hold the velocity and body rate at clone time and
/// are only used to shift the pose by the camera time offset.
#[derive(Debug, Clone, PartialEq)]
pub struct Pose {
    pub id: u64,
    pub timestamp: f64,
    pub p: Vector3<f64>,
    pub q: UnitQuaternion<f64>,
    pub velocity_hint: Vector3<f64>,
    pub omega_hint: Vector3<f64>,
}

impl Pose {
    pub fn new(id: u64, timestamp: f64, p: Vector3<f64>, q: UnitQuaternion<f64>) -> Self {
        Self {
            id,
            timestamp,
            p,
            q,
            velocity_hint: Vector3::zeros(),
            omega_hint: Vector3::zeros(),
        }
    }

    /// Pose moved forward by `dt` with its hint velocity and body rate.
    pub fn shifted(&self, dt: f64) -> (Vector3<f64>, UnitQuaternion<f64>) {
        (
            self.p + self.velocity_hint * dt,
            self.q * so3::exp(&(self.omega_hint * dt)),
        )
    }
}

/// Camera-anchored inverse-depth point: azimuth `α`, elevation `β`, inverse
/// range `ρ` (1/m) in the camera frame of pose `anchor_id`.
#[derive(Debug, Clone, PartialEq)]
pub struct InverseDepthFeature {
    pub id: u64,
    pub anchor_id: u64,
    pub params: Vector3<f64>,
}

impl InverseDepthFeature {
    /// Unit bearing `(cos β sin α, sin β, cos β cos α)`.
    pub fn bearing(&self) -> Vector3<f64> {
        bearing(self.params.x, self.params.y)
    }

    /// Point in the anchor camera frame.
    pub fn point_in_anchor(&self) -> Vector3<f64> {
        self.bearing() / self.params.z
    }
}

pub(crate) fn bearing(alpha: f64, beta: f64) -> Vector3<f64> {
    Vector3::new(beta.cos() * alpha.sin(), beta.sin(), beta.cos() * alpha.cos())
}

/// Pinhole intrinsics `(fx, fy, cx, cy)` in pixels plus the camera pose in
/// the IMU frame (`p_ic`, `q_ic` rotating camera vectors into the IMU frame).
#[derive(Debug, Clone, PartialEq)]
pub struct CameraCalibration {
    pub intrinsics: Vector4<f64>,
    pub p_ic: Vector3<f64>,
    pub q_ic: UnitQuaternion<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VinsStateVector {
    pub gyro_bias: Vector3<f64>,
    pub accel_bias: Vector3<f64>,
    /// Global-frame velocity of the newest pose.
    pub velocity: Vector3<f64>,
    pub slam_features: Vec<InverseDepthFeature>,
    pub t_sync: f64,
    /// Chronological; the last entry is the current IMU pose.
    pub poses: Vec<Pose>,
    pub calib: CameraCalibration,
}

impl VinsStateVector {
    pub fn layout(&self) -> ErrorStateLayout {
        let f: Vec<u64> = self.slam_features.iter().map(|f| f.id).collect();
        let p: Vec<u64> = self.poses.iter().map(|p| p.id).collect();
        ErrorStateLayout::new(&f, &p)
    }

    pub fn pose(&self, id: u64) -> Option<&Pose> {
        self.poses.iter().find(|p| p.id == id)
    }

    pub fn newest_pose(&self) -> &Pose {
        self.poses.last().expect("window holds at least one pose")
    }

    pub fn feature(&self, id: u64) -> Option<&InverseDepthFeature> {
        self.slam_features.iter().find(|f| f.id == id)
    }

    fn check_layout(&self, layout: &ErrorStateLayout, len: usize) -> Result<(), StateError> {
        if len != layout.n() {
            return Err(StateError::DimensionMismatch {
                expected: layout.n(),
                got: len,
            });
        }
        if *layout != self.layout() {
            return Err(StateError::LayoutMismatch);
        }
        Ok(())
    }

    /// `x ⊞ δ`: vector blocks add, rotations compose on the left.
    pub fn boxplus(&self, delta: &[f64], layout: &ErrorStateLayout) -> Result<Self, StateError> {
        self.check_layout(layout, delta.len())?;
        let mut out = self.clone();
        let v3 = |o: usize| Vector3::new(delta[o], delta[o + 1], delta[o + 2]);
        let mut fi = 0;
        let mut pi = 0;
        for b in layout.blocks() {
            let o = b.offset;
            match b.id {
                BlockId::GyroBias => out.gyro_bias += v3(o),
                BlockId::AccelBias => out.accel_bias += v3(o),
                BlockId::Velocity => out.velocity += v3(o),
                BlockId::Feature(_) => {
                    out.slam_features[fi].params += v3(o);
                    fi += 1;
                }
                BlockId::TimeSync => out.t_sync += delta[o],
                BlockId::Pose(_) => {
                    let pose = &mut out.poses[pi];
                    pose.p += v3(o);
                    pose.q = so3::retract(&pose.q, &v3(o + 3));
                    pi += 1;
                }
                BlockId::Intrinsics => {
                    out.calib.intrinsics +=
                        Vector4::new(delta[o], delta[o + 1], delta[o + 2], delta[o + 3]);
                }
                BlockId::Extrinsics => {
                    out.calib.p_ic += v3(o);
                    out.calib.q_ic = so3::retract(&out.calib.q_ic, &v3(o + 3));
                }
            }
        }
        Ok(out)
    }

    /// `self ⊟ base`: the delta with `base ⊞ δ = self`. Both states must share
    /// a layout.
    pub fn boxminus(&self, base: &VinsStateVector) -> Result<Vec<f64>, StateError> {
        let layout = base.layout();
        if layout != self.layout() {
            return Err(StateError::LayoutMismatch);
        }
        let mut d = vec![0.0; layout.n()];
        let mut put = |o: usize, v: &Vector3<f64>| d[o..o + 3].copy_from_slice(v.as_slice());
        for (k, b) in layout.blocks().iter().enumerate() {
            let o = b.offset;
            match b.id {
                BlockId::GyroBias => put(o, &(self.gyro_bias - base.gyro_bias)),
                BlockId::AccelBias => put(o, &(self.accel_bias - base.accel_bias)),
                BlockId::Velocity => put(o, &(self.velocity - base.velocity)),
                BlockId::Feature(_) => {
                    let i = k - 3;
                    put(o, &(self.slam_features[i].params - base.slam_features[i].params));
                }
                BlockId::TimeSync => {}
                BlockId::Pose(_) => {
                    let i = k - 4 - self.slam_features.len();
                    let (a, b0) = (&self.poses[i], &base.poses[i]);
                    put(o, &(a.p - b0.p));
                    put(o + 3, &so3::local(&a.q, &b0.q));
                }
                BlockId::Intrinsics => {}
                BlockId::Extrinsics => {
                    put(o, &(self.calib.p_ic - base.calib.p_ic));
                    put(o + 3, &so3::local(&self.calib.q_ic, &base.calib.q_ic));
                }
            }
        }
        let ts = layout.offset(BlockId::TimeSync)?;
        d[ts] = self.t_sync - base.t_sync;
        let io = layout.offset(BlockId::Intrinsics)?;
        let di = self.calib.intrinsics - base.calib.intrinsics;
        d[io..io + 4].copy_from_slice(di.as_slice());
        Ok(d)
    }
}
