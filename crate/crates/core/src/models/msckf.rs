use nalgebra::{Matrix3, Vector2, Vector3};

use super::camera::{project_global_point, project_point, MIN_DEPTH};
use super::ModelError;
use crate::linalg::{householder_qr, DenseMatrix, FlopCounter};
use crate::state::VinsStateVector;

/// One pixel observation of a feature from a window pose.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub pose_id: u64,
    pub pixel: Vector2<f64>,
}

/// Eliminates the feature from `[Hx | r]` by projecting onto the left null
/// space of `Hf`, computed from a Householder QR of `Hf`.
///
/// Returns `rows − 3` rows.
pub fn msckf_nullspace_project(
    hf: &DenseMatrix<f64>,
    hx: &DenseMatrix<f64>,
    r: &[f64],
) -> Result<(DenseMatrix<f64>, Vec<f64>), ModelError> {
    let m = hf.rows();
    if hf.cols() != 3 || hx.rows() != m || r.len() != m {
        return Err(ModelError::InvalidInput(format!(
            "null-space projection shapes: Hf {:?}, Hx {:?}, r {}",
            hf.shape(),
            hx.shape(),
            r.len()
        )));
    }
    if m < 4 {
        return Err(ModelError::RankDeficientFeature { rows: m });
    }
    let n = hx.cols();
    let mut rhs = DenseMatrix::zeros(m, n + 1);
    for i in 0..m {
        rhs.row_mut(i)[..n].copy_from_slice(hx.row(i));
        rhs[(i, n)] = r[i];
    }
    let mut flops = FlopCounter::new();
    let qr = householder_qr(hf, &rhs, &mut flops).map_err(|e| ModelError::Numerical(e.to_string()))?;
    let scale = hf.frobenius_norm();
    if qr.r.diagonal().iter().any(|d| d.abs() <= 1e-10 * scale) {
        return Err(ModelError::RankDeficientFeature { rows: m });
    }
    let hx2 = qr.rhs.submatrix(3, 0, m - 3, n);
    let r2 = (3..m).map(|i| qr.rhs[(i, n)]).collect();
    Ok((hx2, r2))
}

/// Linear ray-intersection guess refined by Gauss-Newton on the pixel error.
pub fn triangulate(state: &VinsStateVector, obs: &[Observation]) -> Result<Vector3<f64>, ModelError> {
    if obs.len() < 2 {
        return Err(ModelError::TriangulationFailed("fewer than two observations".into()));
    }
    let calib = &state.calib;
    let k = &calib.intrinsics;
    let mut a = Matrix3::zeros();
    let mut b = Vector3::zeros();
    for o in obs {
        let pose = state.pose(o.pose_id).ok_or(ModelError::MissingPose(o.pose_id))?;
        let (p, q) = pose.shifted(state.t_sync);
        let center = p + q * calib.p_ic;
        let ray = Vector3::new((o.pixel.x - k[2]) / k[0], (o.pixel.y - k[3]) / k[1], 1.0);
        let d = (q * (calib.q_ic * ray)).normalize();
        let proj = Matrix3::identity() - d * d.transpose();
        a += proj;
        b += proj * center;
    }
    let eig = a.symmetric_eigenvalues();
    let (lo, hi) = (eig.min(), eig.max());
    if !(lo > 1e-6 * hi) {
        return Err(ModelError::TriangulationFailed("insufficient parallax".into()));
    }
    let mut x = a
        .lu()
        .solve(&b)
        .ok_or_else(|| ModelError::TriangulationFailed("singular ray system".into()))?;
    for _ in 0..20 {
        let mut jtj = Matrix3::zeros();
        let mut jtr = Vector3::zeros();
        for o in obs {
            let pose = state.pose(o.pose_id).ok_or(ModelError::MissingPose(o.pose_id))?;
            let (pix, jac) = project_global_point(&x, pose, calib, state.t_sync)
                .map_err(|e| ModelError::TriangulationFailed(e.to_string()))?;
            let res = o.pixel - pix;
            jtj += jac.point.transpose() * jac.point;
            jtr += jac.point.transpose() * res;
        }
        let step = jtj
            .cholesky()
            .ok_or_else(|| ModelError::TriangulationFailed("degenerate normal matrix".into()))?
            .solve(&jtr);
        x += step;
        if step.norm() <= 1e-13 * (1.0 + x.norm()) {
            break;
        }
    }
    for o in obs {
        let pose = state.pose(o.pose_id).ok_or(ModelError::MissingPose(o.pose_id))?;
        project_point(&x, pose, calib, state.t_sync).map_err(|_| {
            ModelError::TriangulationFailed(format!("point behind camera (min depth {MIN_DEPTH} m)"))
        })?;
    }
    if !x.iter().all(|v| v.is_finite()) {
        return Err(ModelError::NonFinite("triangulated point".into()));
    }
    Ok(x)
}
