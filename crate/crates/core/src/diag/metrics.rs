use nalgebra::{Rotation3, UnitQuaternion, Vector3};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StampedPose {
    pub t: f64,
    pub p: Vector3<f64>,
    pub q: UnitQuaternion<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TrajectoryMetrics {
    /// m
    pub ate_translation: f64,
    /// deg
    pub ate_rotation: f64,
    /// m
    pub rte_translation: f64,
    /// deg
    pub rte_rotation: f64,
    /// s
    pub rte_interval: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("no overlapping timestamps between estimate and ground truth")]
    NoOverlap,
}

/// Pairs of poses whose timestamps agree within `tol`.
fn associate<'a>(est: &'a [StampedPose], gt: &'a [StampedPose], tol: f64) -> Vec<(&'a StampedPose, &'a StampedPose)> {
    let mut out = Vec::new();
    let mut j = 0;
    for e in est {
        while j + 1 < gt.len() && gt[j + 1].t <= e.t + tol && (gt[j + 1].t - e.t).abs() <= (gt[j].t - e.t).abs() {
            j += 1;
        }
        if let Some(g) = gt.get(j) {
            if (g.t - e.t).abs() <= tol {
                out.push((e, g));
            }
        }
    }
    out
}

fn angle_deg(q: &UnitQuaternion<f64>) -> f64 {
    q.angle().to_degrees()
}

/// Yaw and translation `(ψ, t)` minimizing `Σ‖Rz(ψ) p_est + t − p_gt‖²`.
pub fn align_yaw_translation(est: &[Vector3<f64>], gt: &[Vector3<f64>]) -> (f64, Vector3<f64>) {
    let n = est.len().max(1) as f64;
    let me = est.iter().sum::<Vector3<f64>>() / n;
    let mg = gt.iter().sum::<Vector3<f64>>() / n;
    let (mut s, mut c) = (0.0, 0.0);
    for (e, g) in est.iter().zip(gt) {
        let (e, g) = (e - me, g - mg);
        s += e.x * g.y - e.y * g.x;
        c += e.x * g.x + e.y * g.y;
    }
    let yaw = s.atan2(c);
    let rz = Rotation3::from_axis_angle(&Vector3::z_axis(), yaw);
    (yaw, mg - rz * me)
}

/// RMS translation (m) and rotation (deg) error after 4-DOF alignment.
/// Timestamps are associated within `tol` seconds.
pub fn compute_ate(est: &[StampedPose], gt: &[StampedPose], tol: f64) -> Result<(f64, f64), MetricsError> {
    let pairs = associate(est, gt, tol);
    if pairs.is_empty() {
        return Err(MetricsError::NoOverlap);
    }
    let pe: Vec<_> = pairs.iter().map(|(e, _)| e.p).collect();
    let pg: Vec<_> = pairs.iter().map(|(_, g)| g.p).collect();
    let (yaw, t) = align_yaw_translation(&pe, &pg);
    let qz = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw);
    let (mut st, mut sr) = (0.0, 0.0);
    for (e, g) in &pairs {
        st += (qz * e.p + t - g.p).norm_squared();
        sr += angle_deg(&(g.q.inverse() * qz * e.q)).powi(2);
    }
    let n = pairs.len() as f64;
    Ok(((st / n).sqrt(), (sr / n).sqrt()))
}

/// RMS error of relative motions over `interval` seconds, no alignment.
///
/// The translation error of a pair is the displacement error expressed in
/// the start frame and in the end frame, combined in quadrature, so the
/// metric does not change when both trajectories are reversed in time.
pub fn compute_rte(
    est: &[StampedPose],
    gt: &[StampedPose],
    interval: f64,
    tol: f64,
) -> Result<(f64, f64), MetricsError> {
    let pairs = associate(est, gt, tol);
    if pairs.is_empty() {
        return Err(MetricsError::NoOverlap);
    }
    let (mut st, mut sr, mut count) = (0.0, 0.0, 0usize);
    let mut j = 0;
    for i in 0..pairs.len() {
        let target = pairs[i].0.t + interval;
        while j < pairs.len() && pairs[j].0.t < target - tol {
            j += 1;
        }
        if j >= pairs.len() {
            break;
        }
        if (pairs[j].0.t - target).abs() > tol {
            continue;
        }
        let ((ei, gi), (ej, gj)) = (pairs[i], pairs[j]);
        let de = ej.p - ei.p;
        let dg = gj.p - gi.p;
        let fwd = (ei.q.inverse() * de - gi.q.inverse() * dg).norm_squared();
        let bwd = (ej.q.inverse() * de - gj.q.inverse() * dg).norm_squared();
        st += 0.5 * (fwd + bwd);
        let rel_e = ei.q.inverse() * ej.q;
        let rel_g = gi.q.inverse() * gj.q;
        sr += angle_deg(&(rel_g.inverse() * rel_e)).powi(2);
        count += 1;
    }
    if count == 0 {
        return Ok((0.0, 0.0));
    }
    let n = count as f64;
    Ok(((st / n).sqrt(), (sr / n).sqrt()))
}
