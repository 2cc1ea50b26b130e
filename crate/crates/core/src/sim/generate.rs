use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::TAU;

use nalgebra::{UnitQuaternion, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::trajectory::gen_trajectory;
use super::ScenarioSpec;
use crate::models::ImuSample;

/// Independent random streams derived from the scenario seed.
pub(crate) mod stream {
    pub const FEATURES: u64 = 1;
    pub const BIAS_WALK: u64 = 2;
    pub const IMU_NOISE: u64 = 5;
    pub const PIXELS: u64 = 3;
    pub const PRIOR: u64 = 4;
}

pub(crate) fn seeded(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

fn normal3(r: &mut impl Rng) -> Vector3<f64> {
    Vector3::new(r.sample(StandardNormal), r.sample(StandardNormal), r.sample(StandardNormal))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthState {
    pub t: f64,
    pub p: Vector3<f64>,
    pub q: UnitQuaternion<f64>,
    pub v: Vector3<f64>,
    pub omega: Vector3<f64>,
    pub bg: Vector3<f64>,
    pub ba: Vector3<f64>,
}

/// Ground truth sampled at IMU rate.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub states: Vec<TruthState>,
    /// Global feature positions, indexed by feature id.
    pub features: Vec<Vector3<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TrackLabel {
    Slam,
    Msckf,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureObservation {
    pub feature_id: u64,
    pub pixel: Vector2<f64>,
    pub label: TrackLabel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub t: f64,
    /// Index into `GroundTruth::states` of the frame time.
    pub imu_index: usize,
    pub observations: Vec<FeatureObservation>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub spec: ScenarioSpec,
    pub truth: GroundTruth,
    /// `imu[k]` spans `truth.states[k]` to `truth.states[k + 1]`.
    pub imu: Vec<ImuSample>,
    pub frames: Vec<Frame>,
}

/// Trajectory, bias random walk and feature field.
pub fn gen_truth(spec: &ScenarioSpec) -> GroundTruth {
    let n = (spec.duration * spec.imu_rate).round() as usize;
    let dt = 1.0 / spec.imu_rate;
    let mut rng = seeded(spec.seed, stream::BIAS_WALK);
    let mut bg = Vector3::from(spec.imu.initial_gyro_bias);
    let mut ba = Vector3::from(spec.imu.initial_accel_bias);
    let noise = spec.imu.noise;
    let mut states = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let t = k as f64 * dt;
        let s = gen_trajectory(&spec.trajectory, t);
        states.push(TruthState {
            t,
            p: s.p,
            q: s.q,
            v: s.v,
            omega: s.omega,
            bg,
            ba,
        });
        bg += normal3(&mut rng) * (noise.gyro_walk * dt.sqrt());
        ba += normal3(&mut rng) * (noise.accel_walk * dt.sqrt());
    }
    let f = &spec.features;
    let mut frng = seeded(spec.seed, stream::FEATURES);
    let features = (0..f.count)
        .map(|_| {
            let ang = frng.random_range(0.0..TAU);
            let rad = f.radius + f.radius_jitter * frng.random_range(-1.0..1.0);
            let z = frng.random_range(f.z_min..=f.z_max);
            Vector3::new(rad * ang.cos(), rad * ang.sin(), z)
        })
        .collect();
    GroundTruth { states, features }
}

/// IMU samples: analytic rate and specific force at each interval midpoint,
/// plus the bias at the interval start and white noise of the given density.
pub fn gen_imu(spec: &ScenarioSpec, truth: &GroundTruth) -> Vec<ImuSample> {
    let dt = 1.0 / spec.imu_rate;
    let noise = spec.imu.noise;
    let mut rng = seeded(spec.seed, stream::IMU_NOISE);
    let sg = noise.gyro_noise / dt.sqrt();
    let sa = noise.accel_noise / dt.sqrt();
    truth
        .states
        .windows(2)
        .map(|w| {
            let mid = gen_trajectory(&spec.trajectory, w[0].t + 0.5 * dt);
            let mut omega = mid.omega + w[0].bg;
            let mut accel = mid.specific_force + w[0].ba;
            if sg > 0.0 {
                omega += normal3(&mut rng) * sg;
            }
            if sa > 0.0 {
                accel += normal3(&mut rng) * sa;
            }
            ImuSample { omega, accel, dt }
        })
        .collect()
}

/// Noise-free pixel of `point` at body time `t`, if visible.
fn visible_pixel(spec: &ScenarioSpec, point: &Vector3<f64>, t: f64) -> Option<Vector2<f64>> {
    let cam = &spec.camera;
    let calib = spec.calibration();
    let s = gen_trajectory(&spec.trajectory, t + cam.t_sync);
    let p_c = s.p + s.q * calib.p_ic;
    let q_c = s.q * calib.q_ic;
    let z = q_c.inverse() * (point - p_c);
    if z.z < cam.min_depth {
        return None;
    }
    let [fx, fy, cx, cy] = cam.intrinsics;
    let u = fx * z.x / z.z + cx;
    let v = fy * z.y / z.z + cy;
    (u >= 0.0 && u < cam.width && v >= 0.0 && v < cam.height).then(|| Vector2::new(u, v))
}

/// Per-frame observations with SLAM/MSCKF labels.
///
/// A feature that comes into view is promoted to SLAM if a slot is free and
/// it stays visible for at least `slam_min_track` frames; it keeps the label
/// until it leaves the view. Otherwise it becomes an MSCKF track if one of
/// the MSCKF slots is free. Longer upcoming tracks are served first.
pub fn gen_tracks(spec: &ScenarioSpec, truth: &GroundTruth) -> Vec<Frame> {
    let per = spec.imu_per_frame();
    let frame_idx: Vec<usize> = (0..truth.states.len()).step_by(per).collect();
    let clean: Vec<BTreeMap<u64, Vector2<f64>>> = frame_idx
        .iter()
        .map(|&k| {
            let t = truth.states[k].t;
            truth
                .features
                .iter()
                .enumerate()
                .filter_map(|(id, pt)| visible_pixel(spec, pt, t).map(|px| (id as u64, px)))
                .collect()
        })
        .collect();
    // Remaining visibility run of every visible feature.
    let mut run: Vec<BTreeMap<u64, usize>> = vec![BTreeMap::new(); clean.len()];
    for j in (0..clean.len()).rev() {
        for &id in clean[j].keys() {
            let next = run.get(j + 1).and_then(|m| m.get(&id)).copied().unwrap_or(0);
            run[j].insert(id, next + 1);
        }
    }
    let w = &spec.window;
    let mut rng = seeded(spec.seed, stream::PIXELS);
    let sigma = spec.camera.sigma_px;
    let mut slam = BTreeSet::new();
    let mut msckf = BTreeSet::new();
    let mut frames = Vec::with_capacity(clean.len());
    for (j, &k) in frame_idx.iter().enumerate() {
        let vis = &clean[j];
        slam.retain(|id| vis.contains_key(id));
        msckf.retain(|id| vis.contains_key(id));
        let mut fresh: Vec<(usize, u64)> = vis
            .keys()
            .filter(|id| !slam.contains(*id) && !msckf.contains(*id))
            .map(|&id| (run[j][&id], id))
            .collect();
        fresh.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        for (len, id) in fresh {
            if slam.len() < w.max_slam && len >= w.slam_min_track {
                slam.insert(id);
            } else if msckf.len() < w.max_msckf {
                msckf.insert(id);
            }
        }
        let mut observations = Vec::new();
        for (&id, px) in vis {
            let label = if slam.contains(&id) {
                TrackLabel::Slam
            } else if msckf.contains(&id) {
                TrackLabel::Msckf
            } else {
                continue;
            };
            let mut pixel = *px;
            if sigma > 0.0 {
                pixel += Vector2::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal)) * sigma;
            }
            observations.push(FeatureObservation {
                feature_id: id,
                pixel,
                label,
            });
        }
        frames.push(Frame {
            t: truth.states[k].t,
            imu_index: k,
            observations,
        });
    }
    frames
}

/// Full dataset for `spec`; deterministic in the spec (including its seed).
pub fn gen_scenario(spec: &ScenarioSpec) -> Dataset {
    let truth = gen_truth(spec);
    let imu = gen_imu(spec, &truth);
    let frames = gen_tracks(spec, &truth);
    Dataset {
        spec: spec.clone(),
        truth,
        imu,
        frames,
    }
}
