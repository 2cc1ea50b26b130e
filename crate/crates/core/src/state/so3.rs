//! Small SO(3) helpers on nalgebra types.

use nalgebra::{Matrix3, UnitQuaternion, Vector3};

pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

pub fn exp(phi: &Vector3<f64>) -> UnitQuaternion<f64> {
    UnitQuaternion::from_scaled_axis(*phi)
}

pub fn log(q: &UnitQuaternion<f64>) -> Vector3<f64> {
    q.scaled_axis()
}

/// Right Jacobian of SO(3): `Exp(φ + δ) ≈ Exp(φ)·Exp(J_r(φ)·δ)`.
pub fn right_jacobian(phi: &Vector3<f64>) -> Matrix3<f64> {
    let theta = phi.norm();
    let k = skew(phi);
    if theta < 1e-6 {
        return Matrix3::identity() - 0.5 * k + (k * k) / 6.0;
    }
    let t2 = theta * theta;
    Matrix3::identity() - (1.0 - theta.cos()) / t2 * k + (theta - theta.sin()) / (t2 * theta) * (k * k)
}

/// Left-global retraction `q ← Exp(δθ) ⊗ q`.
pub fn retract(q: &UnitQuaternion<f64>, dtheta: &Vector3<f64>) -> UnitQuaternion<f64> {
    if *dtheta == Vector3::zeros() {
        return *q;
    }
    let mut out = exp(dtheta) * q;
    out.renormalize();
    out
}

/// Inverse of [`retract`]: the `δθ` with `retract(base, δθ) = q`.
pub fn local(q: &UnitQuaternion<f64>, base: &UnitQuaternion<f64>) -> Vector3<f64> {
    log(&(q * base.inverse()))
}
