use nalgebra::{Matrix3, SMatrix, UnitQuaternion, Vector3};

use super::ModelError;
use crate::linalg::{cholesky_upper, spd_inverse, DenseMatrix, FlopCounter};
use crate::state::so3::{exp, right_jacobian, skew};

pub type Matrix15 = SMatrix<f64, 15, 15>;

pub const GRAVITY: Vector3<f64> = Vector3::new(0.0, 0.0, -9.81);

/// One IMU interval. The sample values stand for the interval midpoint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuSample {
    pub omega: Vector3<f64>,
    pub accel: Vector3<f64>,
    pub dt: f64,
}

/// Continuous-time noise densities.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ImuNoise {
    /// rad/s/√Hz
    pub gyro_noise: f64,
    /// m/s²/√Hz
    pub accel_noise: f64,
    /// rad/s²/√Hz
    pub gyro_walk: f64,
    /// m/s³/√Hz
    pub accel_walk: f64,
}

/// Nominal IMU state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuState {
    pub q: UnitQuaternion<f64>,
    pub p: Vector3<f64>,
    pub v: Vector3<f64>,
    pub bg: Vector3<f64>,
    pub ba: Vector3<f64>,
}

/// Linearized transition of the error state `[b_g, b_a, v, p, θ]` over one
/// propagation interval: `δξ = Φ·δx + w`, `w ~ N(0, Q)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionBlock {
    pub phi: Matrix15,
    pub noise_cov: Matrix15,
    /// Upper triangular `A` with `AᵀA = Q⁻¹`.
    pub sqrt_info: Matrix15,
    /// Bias-corrected body rate at the end of the interval.
    pub omega_end: Vector3<f64>,
}

const BG: usize = 0;
const BA: usize = 3;
const V: usize = 6;
const P: usize = 9;
const TH: usize = 12;

fn put(m: &mut Matrix15, r: usize, c: usize, b: &Matrix3<f64>) {
    m.fixed_view_mut::<3, 3>(r, c).copy_from(b);
}

/// Midpoint step of the nominal kinematics.
pub fn integrate_step(s: &ImuState, sample: &ImuSample) -> ImuState {
    let dt = sample.dt;
    let w = sample.omega - s.bg;
    let a = sample.accel - s.ba;
    let q_mid = s.q * exp(&(w * (0.5 * dt)));
    let q_next = s.q * exp(&(w * dt));
    let a_g = q_mid * a + GRAVITY;
    ImuState {
        q: q_next,
        p: s.p + s.v * dt + 0.5 * a_g * dt * dt,
        v: s.v + a_g * dt,
        bg: s.bg,
        ba: s.ba,
    }
}

/// Propagates `start` through `samples` and returns the predicted state with
/// its transition block.
pub fn imu_transition(
    start: &ImuState,
    samples: &[ImuSample],
    noise: &ImuNoise,
) -> Result<(ImuState, TransitionBlock), ModelError> {
    if samples.is_empty() {
        return Err(ModelError::InvalidInput("no IMU samples".into()));
    }
    let finite = |v: &Vector3<f64>| v.iter().all(|x| x.is_finite());
    if !finite(&start.bg) || !finite(&start.ba) || !finite(&start.v) || !finite(&start.p) {
        return Err(ModelError::NonFinite("IMU start state".into()));
    }
    let mut s = *start;
    let mut phi = Matrix15::identity();
    let mut q_cov = Matrix15::zeros();
    let mut omega_end = Vector3::zeros();
    let i3 = Matrix3::identity();
    for sample in samples {
        if !(sample.dt > 0.0) || !finite(&sample.omega) || !finite(&sample.accel) {
            return Err(ModelError::NonFinite("IMU sample".into()));
        }
        let dt = sample.dt;
        let w = sample.omega - s.bg;
        let a = sample.accel - s.ba;
        let r = s.q.to_rotation_matrix().into_inner();
        let r_mid = r * exp(&(w * (0.5 * dt))).to_rotation_matrix().into_inner();
        let r_next = r * exp(&(w * dt)).to_rotation_matrix().into_inner();
        let jr = right_jacobian(&(w * dt));
        let jr_half = right_jacobian(&(w * (0.5 * dt)));

        // Sensitivity of the global acceleration.
        let da_dth = -skew(&(r_mid * a));
        let da_dbg = r_mid * skew(&a) * jr_half * (0.5 * dt);
        let da_dba = -r_mid;

        let mut f = Matrix15::identity();
        put(&mut f, TH, BG, &(-r_next * jr * dt));
        put(&mut f, V, TH, &(da_dth * dt));
        put(&mut f, V, BG, &(da_dbg * dt));
        put(&mut f, V, BA, &(da_dba * dt));
        put(&mut f, P, V, &(i3 * dt));
        put(&mut f, P, TH, &(da_dth * (0.5 * dt * dt)));
        put(&mut f, P, BG, &(da_dbg * (0.5 * dt * dt)));
        put(&mut f, P, BA, &(da_dba * (0.5 * dt * dt)));

        // White sensor noise enters exactly like a negative bias error.
        let mut g_g = SMatrix::<f64, 15, 3>::zeros();
        let mut g_a = SMatrix::<f64, 15, 3>::zeros();
        for row in [V, P, TH] {
            g_g.fixed_view_mut::<3, 3>(row, 0)
                .copy_from(&(-f.fixed_view::<3, 3>(row, BG)));
            g_a.fixed_view_mut::<3, 3>(row, 0)
                .copy_from(&(-f.fixed_view::<3, 3>(row, BA)));
        }
        let var_g = noise.gyro_noise * noise.gyro_noise / dt;
        let var_a = noise.accel_noise * noise.accel_noise / dt;
        let mut qd = g_g * g_g.transpose() * var_g + g_a * g_a.transpose() * var_a;
        for k in 0..3 {
            qd[(BG + k, BG + k)] += noise.gyro_walk * noise.gyro_walk * dt;
            qd[(BA + k, BA + k)] += noise.accel_walk * noise.accel_walk * dt;
        }

        q_cov = f * q_cov * f.transpose() + qd;
        phi = f * phi;
        s = integrate_step(&s, sample);
        omega_end = w;
    }
    q_cov = 0.5 * (q_cov + q_cov.transpose());
    let sqrt_info = sqrt_information(&q_cov)?;
    Ok((
        s,
        TransitionBlock {
            phi,
            noise_cov: q_cov,
            sqrt_info,
            omega_end,
        },
    ))
}

/// Upper-triangular `A` with `AᵀA = Q⁻¹`, computed at binary64.
pub fn sqrt_information(q: &Matrix15) -> Result<Matrix15, ModelError> {
    let mut f = FlopCounter::new();
    let d = DenseMatrix::from_fn(15, 15, |i, j| q[(i, j)]);
    let inv = spd_inverse(&d, &mut f).map_err(|e| ModelError::Numerical(e.to_string()))?;
    let a = cholesky_upper(&inv, &mut f).map_err(|e| ModelError::Numerical(e.to_string()))?;
    Ok(Matrix15::from_fn(|i, j| a[(i, j)]))
}
