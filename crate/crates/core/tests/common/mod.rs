#![allow(dead_code)]

use nalgebra::{UnitQuaternion, Vector3, Vector4};
use pcsrif_core::linalg::DenseMatrix;
use pcsrif_core::state::{CameraCalibration, InverseDepthFeature, Pose, VinsStateVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn vec3(r: &mut impl Rng, s: f64) -> Vector3<f64> {
    Vector3::new(r.random_range(-s..s), r.random_range(-s..s), r.random_range(-s..s))
}

pub fn random_matrix(r: &mut impl Rng, rows: usize, cols: usize) -> DenseMatrix<f64> {
    DenseMatrix::from_fn(rows, cols, |_, _| r.random_range(-1.0..1.0))
}

/// Random upper-triangular matrix with a positive diagonal in `[0.5, 2]`.
pub fn random_upper(r: &mut impl Rng, n: usize) -> DenseMatrix<f64> {
    DenseMatrix::from_fn(n, n, |i, j| {
        if j < i {
            0.0
        } else if i == j {
            r.random_range(0.5..2.0)
        } else {
            r.random_range(-1.0..1.0)
        }
    })
}

/// Window of poses along +x looking roughly forward, one SLAM feature in
/// front of the anchor (pose 1), forward-looking camera.
pub fn random_state(seed: u64) -> VinsStateVector {
    let mut r = rng(seed);
    let r_ic = nalgebra::Matrix3::new(0.0, 0.0, 1.0, -1.0, 0.0, 0.0, 0.0, -1.0, 0.0);
    let q_ic = UnitQuaternion::from_matrix(&r_ic) * UnitQuaternion::from_scaled_axis(vec3(&mut r, 0.05));
    let poses: Vec<Pose> = (0..4)
        .map(|i| {
            let mut p = Pose::new(
                100 + i,
                0.1 * i as f64,
                Vector3::new(0.15 * i as f64, 0.0, 0.0) + vec3(&mut r, 0.05),
                UnitQuaternion::from_scaled_axis(vec3(&mut r, 0.1)),
            );
            p.velocity_hint = Vector3::new(1.0, 0.0, 0.0) + vec3(&mut r, 0.3);
            p.omega_hint = vec3(&mut r, 0.5);
            p
        })
        .collect();
    let feature = InverseDepthFeature {
        id: 5,
        anchor_id: 101,
        params: Vector3::new(r.random_range(-0.3..0.3), r.random_range(-0.3..0.3), r.random_range(0.2..0.6)),
    };
    VinsStateVector {
        gyro_bias: vec3(&mut r, 0.01),
        accel_bias: vec3(&mut r, 0.05),
        velocity: Vector3::new(1.0, 0.0, 0.0),
        slam_features: vec![feature],
        t_sync: r.random_range(-0.01..0.01),
        poses,
        calib: CameraCalibration {
            intrinsics: Vector4::new(400.0, 410.0, 320.0, 240.0) + Vector4::new(r.random_range(-5.0..5.0), 0.0, r.random_range(-5.0..5.0), 0.0),
            p_ic: vec3(&mut r, 0.05),
            q_ic,
        },
    }
}

pub fn rel_err(a: &DenseMatrix<f64>, b: &DenseMatrix<f64>) -> f64 {
    a.sub(b).frobenius_norm() / b.frobenius_norm().max(1e-300)
}
