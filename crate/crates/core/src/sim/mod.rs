//! Synthetic visual-inertial scenarios with ground truth.

mod cache;
mod generate;
mod trajectory;

use nalgebra::{Matrix3, UnitQuaternion, Vector3, Vector4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::models::ImuNoise;
use crate::state::CameraCalibration;

pub use cache::{read_dataset, write_dataset, CACHE_MAGIC, CACHE_VERSION};
pub use generate::{
    gen_imu, gen_scenario, gen_tracks, gen_truth, Dataset, FeatureObservation, Frame, GroundTruth, TrackLabel,
    TruthState,
};
pub use trajectory::{gen_trajectory, TrajectorySample, TrajectorySpec};
pub(crate) use generate::{seeded, stream};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("scenario parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("scenario serialization error: {0}")]
    Serialize(#[from] toml::ser::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad cache file: {0}")]
    Cache(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImuSpec {
    #[serde(flatten)]
    pub noise: ImuNoise,
    pub initial_gyro_bias: [f64; 3],
    pub initial_accel_bias: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraSpec {
    pub width: f64,
    pub height: f64,
    /// `fx, fy, cx, cy` in pixels.
    pub intrinsics: [f64; 4],
    /// Camera origin in the body frame (m).
    pub p_ic: [f64; 3],
    /// Rotation vector applied on top of the forward-looking mount (rad).
    pub rot_ic: [f64; 3],
    /// Camera clock offset (s): frame `t` is exposed at body time `t + t_sync`.
    pub t_sync: f64,
    pub sigma_px: f64,
    /// Points closer than this (m) along the optical axis are not observed.
    pub min_depth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureSpec {
    pub count: usize,
    /// Points lie on a vertical cylinder about the origin.
    pub radius: f64,
    pub radius_jitter: f64,
    pub z_min: f64,
    pub z_max: f64,
}

/// Standard deviations of the initial estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSpec {
    pub position: f64,
    pub orientation: f64,
    pub velocity: f64,
    pub gyro_bias: f64,
    pub accel_bias: f64,
    pub t_sync: f64,
    pub intrinsics: f64,
    pub extrinsic_position: f64,
    pub extrinsic_rotation: f64,
    /// Start from a draw of the prior instead of the true state.
    pub perturb: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowSpec {
    /// Sliding-window size `l` (poses) and maximum MSCKF track length.
    pub size: usize,
    pub max_slam: usize,
    pub max_msckf: usize,
    /// Frames a track must stay visible for to be promoted to SLAM.
    pub slam_min_track: usize,
}

/// Complete scenario description. Field names are the on-disk TOML schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub schema_version: u32,
    pub name: String,
    pub seed: u64,
    /// Seconds.
    pub duration: f64,
    /// Hz.
    pub imu_rate: f64,
    /// Hz; must divide `imu_rate`.
    pub cam_rate: f64,
    pub window: WindowSpec,
    pub trajectory: TrajectorySpec,
    pub imu: ImuSpec,
    pub camera: CameraSpec,
    pub features: FeatureSpec,
    pub prior: PriorSpec,
}

/// Nominal camera mount: optical axis along body x, image y down.
pub fn nominal_r_ic() -> Matrix3<f64> {
    Matrix3::new(0.0, 0.0, 1.0, -1.0, 0.0, 0.0, 0.0, -1.0, 0.0)
}

impl ScenarioSpec {
    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "default" => Some(Self::default_scenario()),
            "conditioning" => Some(Self::conditioning()),
            "noiseless" => Some(Self::noiseless()),
            "consistency" => Some(Self::consistency()),
            _ => None,
        }
    }

    pub const PRESETS: [&'static str; 4] = ["default", "conditioning", "noiseless", "consistency"];

    /// 60 s circle with phone-grade noise.
    pub fn default_scenario() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            name: "default".into(),
            seed: 1,
            duration: 60.0,
            imu_rate: 200.0,
            cam_rate: 10.0,
            window: WindowSpec {
                size: 11,
                max_slam: 15,
                max_msckf: 35,
                slam_min_track: 15,
            },
            trajectory: TrajectorySpec::Circle {
                radius: 2.0,
                period: 10.0,
                height: 1.0,
                vertical_amplitude: 0.3,
                vertical_cycles: 2,
                roll_amplitude: 0.1,
                roll_cycles: 3,
                pitch_amplitude: 0.1,
                pitch_cycles: 2,
            },
            imu: ImuSpec {
                noise: ImuNoise {
                    gyro_noise: 1.7e-4,
                    accel_noise: 2.0e-3,
                    gyro_walk: 1.9e-5,
                    accel_walk: 3.0e-3,
                },
                initial_gyro_bias: [2e-3, -1e-3, 1.5e-3],
                initial_accel_bias: [2e-2, -1e-2, 3e-2],
            },
            camera: CameraSpec {
                width: 640.0,
                height: 480.0,
                intrinsics: [400.0, 400.0, 320.0, 240.0],
                p_ic: [0.05, 0.01, -0.02],
                rot_ic: [0.01, -0.02, 0.015],
                t_sync: 0.004,
                sigma_px: 1.0,
                min_depth: 0.2,
            },
            features: FeatureSpec {
                count: 600,
                radius: 5.0,
                radius_jitter: 0.5,
                z_min: -1.0,
                z_max: 3.0,
            },
            prior: PriorSpec {
                position: 1e-3,
                orientation: 1e-3,
                velocity: 1e-2,
                gyro_bias: 5e-3,
                accel_bias: 5e-2,
                t_sync: 5e-3,
                intrinsics: 1.0,
                extrinsic_position: 5e-3,
                extrinsic_rotation: 5e-3,
                perturb: false,
            },
        }
    }

    /// Long run in which the unobservable directions drift far enough to
    /// make the square-root information factor badly conditioned.
    pub fn conditioning() -> Self {
        let mut s = Self::default_scenario();
        s.name = "conditioning".into();
        s.seed = 7;
        s.duration = 150.0;
        s
    }

    /// No sensor noise, no bias, no clock offset.
    pub fn noiseless() -> Self {
        let mut s = Self::default_scenario();
        s.name = "noiseless".into();
        s.duration = 30.0;
        s.imu.noise = ImuNoise {
            gyro_noise: 0.0,
            accel_noise: 0.0,
            gyro_walk: 0.0,
            accel_walk: 0.0,
        };
        s.imu.initial_gyro_bias = [0.0; 3];
        s.imu.initial_accel_bias = [0.0; 3];
        s.camera.t_sync = 0.0;
        s.camera.sigma_px = 0.0;
        s
    }

    /// Short run with a perturbed start, for statistical consistency checks.
    pub fn consistency() -> Self {
        let mut s = Self::default_scenario();
        s.name = "consistency".into();
        s.duration = 6.0;
        s.window.size = 6;
        s.window.max_slam = 8;
        s.window.max_msckf = 20;
        s.window.slam_min_track = 8;
        s.prior.perturb = true;
        s
    }

    pub fn from_toml(text: &str) -> Result<Self, SimError> {
        let spec: Self = toml::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> Result<String, SimError> {
        Ok(toml::to_string(self)?)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, SimError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn imu_per_frame(&self) -> usize {
        (self.imu_rate / self.cam_rate).round() as usize
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::Invalid(m.into()));
        if self.schema_version != SCHEMA_VERSION {
            return Err(SimError::Invalid(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if !(self.duration > 0.0) {
            return bad("duration must be positive");
        }
        if !(self.imu_rate > 0.0) || !(self.cam_rate > 0.0) {
            return bad("rates must be positive");
        }
        let ratio = self.imu_rate / self.cam_rate;
        if (ratio - ratio.round()).abs() > 1e-9 || ratio < 1.0 {
            return bad("cam_rate must divide imu_rate");
        }
        if self.window.size < 2 {
            return bad("window size must be at least 2");
        }
        if self.camera.sigma_px < 0.0 || self.features.radius <= 0.0 {
            return bad("sigma_px must be nonnegative and feature radius positive");
        }
        let n = &self.imu.noise;
        if [n.gyro_noise, n.accel_noise, n.gyro_walk, n.accel_walk].iter().any(|&v| !(v >= 0.0)) {
            return bad("noise densities must be nonnegative");
        }
        Ok(())
    }

    /// True camera calibration.
    pub fn calibration(&self) -> CameraCalibration {
        let c = &self.camera;
        let q_ic = UnitQuaternion::from_scaled_axis(Vector3::from(c.rot_ic))
            * UnitQuaternion::from_matrix(&nominal_r_ic());
        CameraCalibration {
            intrinsics: Vector4::from(c.intrinsics),
            p_ic: Vector3::from(c.p_ic),
            q_ic,
        }
    }
}
