use std::f64::consts::{FRAC_PI_2, TAU};

use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::models::GRAVITY;

/// Closed-form trajectory families. Periods are in seconds, lengths in
/// metres, angles in radians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TrajectorySpec {
    /// Horizontal circle about the origin, heading along the tangent.
    Circle {
        radius: f64,
        period: f64,
        height: f64,
        vertical_amplitude: f64,
        /// Vertical oscillations per lap.
        vertical_cycles: u32,
        roll_amplitude: f64,
        roll_cycles: u32,
        pitch_amplitude: f64,
        pitch_cycles: u32,
    },
    /// Independent sines on each axis and on yaw.
    Sinusoid3d {
        amplitude: [f64; 3],
        period: [f64; 3],
        center: [f64; 3],
        yaw_amplitude: f64,
        yaw_period: f64,
        tilt_amplitude: f64,
        tilt_period: f64,
    },
    /// Lemniscate-like `(r·sin ωt, r/2·sin 2ωt)` with oscillating yaw.
    FigureEight {
        radius: f64,
        period: f64,
        height: f64,
        yaw_amplitude: f64,
        tilt_amplitude: f64,
    },
}

/// `c + rate·t + Σ a·sin(ω t + φ)` with exact derivatives.
#[derive(Debug, Clone, Default)]
struct Signal {
    offset: f64,
    rate: f64,
    terms: Vec<(f64, f64, f64)>,
}

impl Signal {
    fn constant(c: f64) -> Self {
        Self {
            offset: c,
            ..Self::default()
        }
    }

    fn sine(mut self, amp: f64, period: f64, phase: f64) -> Self {
        if amp != 0.0 && period > 0.0 {
            self.terms.push((amp, TAU / period, phase));
        }
        self
    }

    fn eval(&self, t: f64) -> [f64; 3] {
        let mut out = [self.offset + self.rate * t, self.rate, 0.0];
        for &(a, w, ph) in &self.terms {
            let (s, c) = (w * t + ph).sin_cos();
            out[0] += a * s;
            out[1] += a * w * c;
            out[2] -= a * w * w * s;
        }
        out
    }
}

/// Ground-truth kinematics at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectorySample {
    pub p: Vector3<f64>,
    /// Body-to-world orientation.
    pub q: UnitQuaternion<f64>,
    pub v: Vector3<f64>,
    /// World-frame acceleration.
    pub a: Vector3<f64>,
    /// Body angular rate.
    pub omega: Vector3<f64>,
    /// Specific force in the body frame, `Rᵀ(a − g)`.
    pub specific_force: Vector3<f64>,
}

/// The six signals `(x, y, z, yaw, pitch, roll)`.
struct Signals([Signal; 6]);

fn signals(spec: &TrajectorySpec) -> Signals {
    match *spec {
        TrajectorySpec::Circle {
            radius,
            period,
            height,
            vertical_amplitude,
            vertical_cycles,
            roll_amplitude,
            roll_cycles,
            pitch_amplitude,
            pitch_cycles,
        } => {
            let sub = |cycles: u32| if cycles == 0 { 0.0 } else { period / cycles as f64 };
            Signals([
                Signal::constant(0.0).sine(radius, period, FRAC_PI_2),
                Signal::constant(0.0).sine(radius, period, 0.0),
                Signal::constant(height).sine(vertical_amplitude, sub(vertical_cycles), 0.0),
                Signal {
                    offset: FRAC_PI_2,
                    rate: TAU / period,
                    terms: Vec::new(),
                },
                Signal::constant(0.0).sine(pitch_amplitude, sub(pitch_cycles), 0.7),
                Signal::constant(0.0).sine(roll_amplitude, sub(roll_cycles), 0.0),
            ])
        }
        TrajectorySpec::Sinusoid3d {
            amplitude,
            period,
            center,
            yaw_amplitude,
            yaw_period,
            tilt_amplitude,
            tilt_period,
        } => Signals([
            Signal::constant(center[0]).sine(amplitude[0], period[0], 0.0),
            Signal::constant(center[1]).sine(amplitude[1], period[1], 0.0),
            Signal::constant(center[2]).sine(amplitude[2], period[2], 0.0),
            Signal::constant(0.0).sine(yaw_amplitude, yaw_period, 0.0),
            Signal::constant(0.0).sine(tilt_amplitude, tilt_period, 0.7),
            Signal::constant(0.0).sine(tilt_amplitude, 0.5 * tilt_period, 0.0),
        ]),
        TrajectorySpec::FigureEight {
            radius,
            period,
            height,
            yaw_amplitude,
            tilt_amplitude,
        } => Signals([
            Signal::constant(0.0).sine(radius, period, 0.0),
            Signal::constant(0.0).sine(0.5 * radius, 0.5 * period, 0.0),
            Signal::constant(height),
            Signal::constant(0.0).sine(yaw_amplitude, period, 0.0),
            Signal::constant(0.0).sine(tilt_amplitude, 0.5 * period, 0.7),
            Signal::constant(0.0).sine(tilt_amplitude, period, 0.0),
        ]),
    }
}

/// Pose and derivatives at time `t`. Orientation is `Rz(ψ)·Ry(θ)·Rx(φ)`.
pub fn gen_trajectory(spec: &TrajectorySpec, t: f64) -> TrajectorySample {
    let Signals(s) = signals(spec);
    let e: Vec<[f64; 3]> = s.iter().map(|sig| sig.eval(t)).collect();
    let p = Vector3::new(e[0][0], e[1][0], e[2][0]);
    let v = Vector3::new(e[0][1], e[1][1], e[2][1]);
    let a = Vector3::new(e[0][2], e[1][2], e[2][2]);
    let (yaw, dyaw) = (e[3][0], e[3][1]);
    let (pitch, dpitch) = (e[4][0], e[4][1]);
    let (roll, droll) = (e[5][0], e[5][1]);
    let q = UnitQuaternion::from_euler_angles(roll, pitch, yaw);
    let (sr, cr) = roll.sin_cos();
    let (sp, cp) = pitch.sin_cos();
    let omega = Vector3::new(
        droll - dyaw * sp,
        dpitch * cr + dyaw * sr * cp,
        -dpitch * sr + dyaw * cr * cp,
    );
    let specific_force = q.inverse() * (a - GRAVITY);
    TrajectorySample {
        p,
        q,
        v,
        a,
        omega,
        specific_force,
    }
}
