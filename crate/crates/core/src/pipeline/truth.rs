use crate::models::{inverse_depth_params, ModelError};
use crate::sim::Dataset;
use crate::state::{Pose, VinsStateVector};

fn truth_pose(data: &Dataset, pose: &Pose) -> Result<Pose, ModelError> {
    let frame = data
        .frames
        .get(pose.id as usize)
        .ok_or(ModelError::MissingPose(pose.id))?;
    let s = &data.truth.states[frame.imu_index];
    let mut p = pose.clone();
    p.p = s.p;
    p.q = s.q;
    Ok(p)
}

/// The true state with the same poses and features as `est`. Pose ids are
/// frame indices; features are re-expressed in their true anchor cameras.
pub fn truth_state_like(est: &VinsStateVector, data: &Dataset) -> Result<VinsStateVector, ModelError> {
    let newest = est.newest_pose();
    let k = data
        .frames
        .get(newest.id as usize)
        .ok_or(ModelError::MissingPose(newest.id))?
        .imu_index;
    let s = &data.truth.states[k];
    let mut out = est.clone();
    out.gyro_bias = s.bg;
    out.accel_bias = s.ba;
    out.velocity = s.v;
    out.t_sync = data.spec.camera.t_sync;
    out.calib = data.spec.calibration();
    for p in &mut out.poses {
        *p = truth_pose(data, p)?;
    }
    for f in &mut out.slam_features {
        let anchor = out
            .poses
            .iter()
            .find(|p| p.id == f.anchor_id)
            .ok_or(ModelError::MissingPose(f.anchor_id))?;
        let point = data
            .truth
            .features
            .get(f.id as usize)
            .ok_or_else(|| ModelError::InvalidInput(format!("unknown feature {}", f.id)))?;
        f.params = inverse_depth_params(point, anchor, &out.calib)?;
    }
    Ok(out)
}
