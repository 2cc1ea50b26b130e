//! Sliding-window visual-inertial estimator over a simulated dataset.
//!
//! Each frame runs propagation (IMU clone), marginalization (lost SLAM
//! features, reanchoring, oldest pose) and one combined visual update
//! (SLAM features, MSCKF tracks, rows left over from SLAM initialization).

mod truth;

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use nalgebra::Vector3;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::diag::{record_conditioning, ConditioningRecord, PhaseFlops, StampedPose};
use crate::filters::{
    Augmentation, Estimator, EstimatorKind, EstimatorOptions, FallbackPolicy, FilterEventKind,
};
use crate::linalg::{householder_qr, invert_upper, solve_upper, DenseMatrix, FlopCounter, Precision, Real};
use crate::models::{
    imu_transition, inverse_depth_params, inverse_depth_rows, msckf_rows, reanchor_feature, stack_measurements,
    triangulate, whiten, ImuNoise, ImuState, LinearizedMeasurement, ModelError, Observation,
};
use crate::sim::{seeded, stream, Dataset, ScenarioSpec, TrackLabel};
use crate::state::{BlockId, ErrorStateLayout, InverseDepthFeature, Pose, VinsStateVector};

pub use truth::truth_state_like;

/// Leading error-state dimension untouched by visual updates.
const N1: usize = 9;
/// Observations needed before a SLAM feature is initialized.
const SLAM_INIT_OBS: usize = 3;
const MSCKF_MIN_OBS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub kind: EstimatorKind,
    pub precision: Precision,
    pub fallback: FallbackPolicy,
    /// `None` keeps the estimator default.
    pub shadow_check: Option<bool>,
    pub verify_identity: bool,
    /// Conditioning is recorded every `svd_stride` updates; 0 turns it off.
    pub svd_stride: usize,
    /// Keep per-frame estimation errors and standard deviations.
    pub record_estimates: bool,
    pub max_frames: Option<usize>,
}

impl RunOptions {
    pub fn new(kind: EstimatorKind, precision: Precision) -> Self {
        Self {
            kind,
            precision,
            fallback: FallbackPolicy::Abort,
            shadow_check: None,
            verify_identity: false,
            svd_stride: 10,
            record_estimates: true,
            max_frames: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunEvent {
    pub frame: usize,
    pub t: f64,
    pub kind: FilterEventKind,
    pub value: f64,
    pub detail: String,
}

/// Estimation error `x̂ ⊟ x` and marginal standard deviations for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct StepEstimate {
    pub frame: usize,
    pub t: f64,
    pub blocks: Vec<(BlockId, usize, usize)>,
    pub error: Vec<f64>,
    pub sigma: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunStats {
    pub frames: usize,
    pub updates: usize,
    pub max_rows: usize,
    pub max_n2: usize,
    pub slam_inits: usize,
    pub reanchors: usize,
    pub dropped_features: usize,
    pub skipped_tracks: usize,
    pub max_identity_error: f64,
    pub all_upper_triangular: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub kind: EstimatorKind,
    pub precision: Precision,
    pub trajectory: Vec<StampedPose>,
    pub truth: Vec<StampedPose>,
    pub conditioning: Vec<ConditioningRecord>,
    pub flops: PhaseFlops,
    pub events: Vec<RunEvent>,
    pub estimates: Vec<StepEstimate>,
    /// Position NEES of the newest pose, per frame.
    pub nees: Vec<f64>,
    pub stats: RunStats,
    /// Set when the estimator aborted; records the failing frame.
    pub failure: Option<(usize, String)>,
}

impl RunOutput {
    pub fn count_events(&self, kind: FilterEventKind) -> usize {
        self.events.iter().filter(|e| e.kind == kind).count()
    }

    pub fn instability_events(&self) -> usize {
        self.events.iter().filter(|e| e.kind.is_instability()).count()
    }
}

/// Noise model assumed by the estimator. Zero densities (noiseless scenarios)
/// fall back to the default scenario values so that the filter stays proper.
pub fn estimator_noise(spec: &ScenarioSpec) -> (ImuNoise, f64) {
    let d = ScenarioSpec::default_scenario();
    let pick = |v: f64, fallback: f64| if v > 0.0 { v } else { fallback };
    let (n, dn) = (spec.imu.noise, d.imu.noise);
    (
        ImuNoise {
            gyro_noise: pick(n.gyro_noise, dn.gyro_noise),
            accel_noise: pick(n.accel_noise, dn.accel_noise),
            gyro_walk: pick(n.gyro_walk, dn.gyro_walk),
            accel_walk: pick(n.accel_walk, dn.accel_walk),
        },
        pick(spec.camera.sigma_px, d.camera.sigma_px),
    )
}

/// Prior standard deviations in layout order for a single-pose state.
fn prior_sigmas(spec: &ScenarioSpec, layout: &ErrorStateLayout) -> Vec<f64> {
    let p = &spec.prior;
    let mut s = vec![0.0; layout.n()];
    for b in layout.blocks() {
        let vals: Vec<f64> = match b.id {
            BlockId::GyroBias => vec![p.gyro_bias; 3],
            BlockId::AccelBias => vec![p.accel_bias; 3],
            BlockId::Velocity => vec![p.velocity; 3],
            BlockId::TimeSync => vec![p.t_sync],
            BlockId::Pose(_) => [[p.position; 3], [p.orientation; 3]].concat(),
            BlockId::Intrinsics => vec![p.intrinsics; 4],
            BlockId::Extrinsics => [[p.extrinsic_position; 3], [p.extrinsic_rotation; 3]].concat(),
            BlockId::Feature(_) => unreachable!("initial state has no features"),
        };
        s[b.range()].copy_from_slice(&vals);
    }
    s
}

/// Initial estimate and prior covariance. With `prior.perturb` the estimate
/// is a draw from the prior around the truth.
pub fn initial_state(data: &Dataset) -> (VinsStateVector, DenseMatrix<f64>) {
    let spec = &data.spec;
    let k0 = data.frames[0].imu_index;
    let s0 = &data.truth.states[k0];
    let mut pose = Pose::new(0, data.frames[0].t, s0.p, s0.q);
    pose.velocity_hint = s0.v;
    pose.omega_hint = data.imu.get(k0).map_or(Vector3::zeros(), |m| m.omega - s0.bg);
    let truth = VinsStateVector {
        gyro_bias: s0.bg,
        accel_bias: s0.ba,
        velocity: s0.v,
        slam_features: Vec::new(),
        t_sync: spec.camera.t_sync,
        poses: vec![pose],
        calib: spec.calibration(),
    };
    let layout = truth.layout();
    let sig = prior_sigmas(spec, &layout);
    let cov = DenseMatrix::from_diagonal(&sig.iter().map(|s| s * s).collect::<Vec<_>>());
    if !spec.prior.perturb {
        return (truth, cov);
    }
    let mut rng = seeded(spec.seed, stream::PRIOR);
    let delta: Vec<f64> = sig.iter().map(|s| s * rng.sample::<f64, _>(StandardNormal)).collect();
    let start = truth.boxplus(&delta, &layout).expect("prior layout matches");
    (start, cov)
}

/// Copies the columns of `h` (over `from`) into the matching blocks of `to`.
fn remap_columns(h: &DenseMatrix<f64>, from: &ErrorStateLayout, to: &ErrorStateLayout) -> DenseMatrix<f64> {
    let mut out = DenseMatrix::zeros(h.rows(), to.n());
    for b in from.blocks() {
        if let Some(dst) = to.block(b.id) {
            for i in 0..h.rows() {
                for c in 0..b.dim {
                    out[(i, dst.offset + c)] = h[(i, b.offset + c)];
                }
            }
        }
    }
    out
}

struct Driver<'a, T> {
    data: &'a Dataset,
    opts: RunOptions,
    noise: ImuNoise,
    sigma_px: f64,
    window: usize,
    state: VinsStateVector,
    est: Estimator<T>,
    slam_buf: BTreeMap<u64, Vec<Observation>>,
    msckf_buf: BTreeMap<u64, Vec<Observation>>,
    out: RunOutput,
}

type StepResult = Result<(), String>;

impl<'a, T: Real> Driver<'a, T> {
    fn new(data: &'a Dataset, opts: RunOptions) -> Result<Self, String> {
        let (state, cov) = initial_state(data);
        let mut eo = EstimatorOptions::new(opts.kind);
        eo.fallback = opts.fallback;
        eo.verify_identity = opts.verify_identity;
        if let Some(s) = opts.shadow_check {
            eo.shadow_check = s;
        }
        let est = Estimator::<T>::new(eo, &cov).map_err(|e| format!("prior: {e}"))?;
        let (noise, sigma_px) = estimator_noise(&data.spec);
        Ok(Self {
            data,
            opts,
            noise,
            sigma_px,
            window: data.spec.window.size,
            state,
            est,
            slam_buf: BTreeMap::new(),
            msckf_buf: BTreeMap::new(),
            out: RunOutput {
                kind: opts.kind,
                precision: opts.precision,
                trajectory: Vec::new(),
                truth: Vec::new(),
                conditioning: Vec::new(),
                flops: PhaseFlops::default(),
                events: Vec::new(),
                estimates: Vec::new(),
                nees: Vec::new(),
                stats: RunStats {
                    all_upper_triangular: true,
                    ..RunStats::default()
                },
                failure: None,
            },
        })
    }

    fn propagate(&mut self, j: usize) -> StepResult {
        let (f0, f1) = (&self.data.frames[j - 1], &self.data.frames[j]);
        let samples = &self.data.imu[f0.imu_index..f1.imu_index];
        let newest = self.state.newest_pose();
        let start = ImuState {
            q: newest.q,
            p: newest.p,
            v: self.state.velocity,
            bg: self.state.gyro_bias,
            ba: self.state.accel_bias,
        };
        let (end, tb) = imu_transition(&start, samples, &self.noise).map_err(|e| e.to_string())?;
        let layout = self.state.layout();
        let n = layout.n();
        let pose_col = layout.offset(BlockId::Pose(newest.id)).map_err(|e| e.to_string())?;
        let pose_end = layout.offset(BlockId::Intrinsics).map_err(|e| e.to_string())?;
        let mut phi = DenseMatrix::zeros(15, n);
        for r in 0..15 {
            for c in 0..9 {
                phi[(r, c)] = tb.phi[(r, c)];
            }
            for c in 0..6 {
                phi[(r, pose_col + c)] = tb.phi[(r, 9 + c)];
            }
        }
        let new_positions: Vec<usize> = (9..18).chain(pose_end + 9..pose_end + 15).collect();
        let m15 = |m: &nalgebra::SMatrix<f64, 15, 15>| DenseMatrix::from_fn(15, 15, |r, c| m[(r, c)]);
        let aug = Augmentation {
            new_positions,
            phi,
            sqrt_info: m15(&tb.sqrt_info),
            noise_cov: m15(&tb.noise_cov),
        };
        let mut flops = FlopCounter::new();
        self.est.augment(&aug, &mut flops).map_err(|e| e.to_string())?;
        self.est
            .marginalize(&(0..9).collect::<Vec<_>>(), &mut flops)
            .map_err(|e| e.to_string())?;
        self.out.flops.propagation += flops;
        self.state.gyro_bias = end.bg;
        self.state.accel_bias = end.ba;
        self.state.velocity = end.v;
        let mut pose = Pose::new(j as u64, f1.t, end.p, end.q);
        pose.velocity_hint = end.v;
        pose.omega_hint = tb.omega_end;
        self.state.poses.push(pose);
        Ok(())
    }

    fn remove_block(&mut self, id: BlockId, flops: &mut FlopCounter) -> StepResult {
        let layout = self.state.layout();
        let idx = layout.reorder_for_marginalization(&[id]).map_err(|e| e.to_string())?;
        self.est.marginalize(&idx, flops).map_err(|e| e.to_string())?;
        match id {
            BlockId::Feature(f) => self.state.slam_features.retain(|x| x.id != f),
            BlockId::Pose(p) => self.state.poses.retain(|x| x.id != p),
            _ => unreachable!("only features and poses leave the state"),
        }
        Ok(())
    }

    fn marginalize(&mut self, j: usize) -> StepResult {
        let frame = &self.data.frames[j];
        let seen: BTreeSet<u64> = frame
            .observations
            .iter()
            .filter(|o| o.label == TrackLabel::Slam)
            .map(|o| o.feature_id)
            .collect();
        let mut flops = FlopCounter::new();
        let lost: Vec<u64> = self
            .state
            .slam_features
            .iter()
            .map(|f| f.id)
            .filter(|id| !seen.contains(id))
            .collect();
        for id in lost {
            self.remove_block(BlockId::Feature(id), &mut flops)?;
        }
        self.slam_buf.retain(|id, _| seen.contains(id));

        if self.state.poses.len() > self.window {
            let oldest = self.state.poses[0].clone();
            let newest = self.state.newest_pose().clone();
            let anchored: Vec<InverseDepthFeature> = self
                .state
                .slam_features
                .iter()
                .filter(|f| f.anchor_id == oldest.id)
                .cloned()
                .collect();
            for f in anchored {
                match reanchor_feature(&f, &oldest, &newest, &self.state.calib) {
                    Ok((nf, jac)) => {
                        let layout = self.state.layout();
                        let off = |id| layout.offset(id).map_err(|e| e.to_string());
                        let fo = off(BlockId::Feature(f.id))?;
                        let (oo, no, eo) = (off(BlockId::Pose(oldest.id))?, off(BlockId::Pose(newest.id))?, off(BlockId::Extrinsics)?);
                        let mut rows = DenseMatrix::zeros(3, layout.n());
                        for r in 0..3 {
                            for c in 0..3 {
                                rows[(r, fo + c)] = jac.feature[(r, c)];
                            }
                            for c in 0..6 {
                                rows[(r, oo + c)] = jac.old_anchor[(r, c)];
                                rows[(r, no + c)] += jac.new_anchor[(r, c)];
                                rows[(r, eo + c)] = jac.extrinsics[(r, c)];
                            }
                        }
                        self.est.reparameterize(fo, &rows, &mut flops).map_err(|e| e.to_string())?;
                        let slot = self.state.slam_features.iter_mut().find(|x| x.id == f.id).expect("feature present");
                        *slot = nf;
                        self.out.stats.reanchors += 1;
                    }
                    Err(ModelError::NonPositiveDepth { .. }) => {
                        self.remove_block(BlockId::Feature(f.id), &mut flops)?;
                        self.out.stats.dropped_features += 1;
                    }
                    Err(e) => return Err(e.to_string()),
                }
            }
            self.remove_block(BlockId::Pose(oldest.id), &mut flops)?;
        }
        self.out.flops.marginalization += flops;
        Ok(())
    }

    /// Augments a new SLAM feature from its buffered track. Returns the rows
    /// orthogonal to the feature (over the layout before augmentation).
    fn init_slam_feature(
        &mut self,
        id: u64,
        obs: &[Observation],
        flops: &mut FlopCounter,
    ) -> Result<Option<(ErrorStateLayout, LinearizedMeasurement<f64>)>, String> {
        let anchor = self.state.newest_pose().clone();
        let Ok(point) = triangulate(&self.state, obs) else {
            return Ok(None);
        };
        let Ok(params) = inverse_depth_params(&point, &anchor, &self.state.calib) else {
            return Ok(None);
        };
        let feature = InverseDepthFeature {
            id,
            anchor_id: anchor.id,
            params,
        };
        let layout = self.state.layout();
        let n = layout.n();
        let Ok((r, h, hf)) = inverse_depth_rows(&self.state, &layout, &feature, obs, None) else {
            return Ok(None);
        };
        let m = r.len();
        let s = 1.0 / self.sigma_px;
        let hf = hf.scale(s);
        let mut rhs = DenseMatrix::zeros(m, n + 1);
        for i in 0..m {
            for c in 0..n {
                rhs[(i, c)] = h[(i, c)] * s;
            }
            rhs[(i, n)] = r[i] * s;
        }
        // Measurement-model evaluation, not estimator work.
        let mut scratch = FlopCounter::new();
        let qr = householder_qr(&hf, &rhs, &mut scratch).map_err(|e| e.to_string())?;
        let rf = qr.r;
        let scale = hf.frobenius_norm();
        if rf.diagonal().iter().any(|&d| !(d > 1e-8 * scale)) {
            return Ok(None);
        }
        let hx1 = qr.rhs.submatrix(0, 0, 3, n);
        let r1: Vec<f64> = (0..3).map(|i| qr.rhs[(i, n)]).collect();
        let mut phi = DenseMatrix::zeros(3, n);
        for c in 0..n {
            let col: Vec<f64> = (0..3).map(|i| -hx1[(i, c)]).collect();
            let x = solve_upper(&rf, &col, &mut scratch).map_err(|e| e.to_string())?;
            for i in 0..3 {
                phi[(i, c)] = x[i];
            }
        }
        let rf_inv = invert_upper(&rf, &mut scratch).map_err(|e| e.to_string())?;
        let noise_cov = rf_inv.matmul_transposed(&rf_inv, &mut scratch);
        let df = solve_upper(&rf, &r1, &mut scratch).map_err(|e| e.to_string())?;
        let pos = N1 + 3 * self.state.slam_features.len();
        let aug = Augmentation {
            new_positions: vec![pos, pos + 1, pos + 2],
            phi,
            sqrt_info: rf,
            noise_cov,
        };
        self.est.augment(&aug, flops).map_err(|e| e.to_string())?;
        let mut feature = feature;
        feature.params += Vector3::new(df[0], df[1], df[2]);
        self.state.slam_features.push(feature);
        self.out.stats.slam_inits += 1;

        let q2 = m - 3;
        let mut h2 = DenseMatrix::zeros(q2, n);
        let mut r2 = Vec::with_capacity(q2);
        for i in 0..q2 {
            h2.row_mut(i).copy_from_slice(&qr.rhs.row(3 + i)[..n]);
            r2.push(qr.rhs[(3 + i, n)]);
        }
        Ok(Some((
            layout,
            LinearizedMeasurement {
                residual: r2,
                h2,
                n1: 0,
            },
        )))
    }

    fn window_obs(&self, obs: &[Observation]) -> Vec<Observation> {
        obs.iter().filter(|o| self.state.pose(o.pose_id).is_some()).copied().collect()
    }

    fn update(&mut self, j: usize) -> StepResult {
        let frame = &self.data.frames[j];
        let pose_id = j as u64;
        let mut slam_obs = Vec::new();
        let mut msckf_seen = BTreeSet::new();
        for o in &frame.observations {
            let ob = Observation {
                pose_id,
                pixel: o.pixel,
            };
            match o.label {
                TrackLabel::Slam if self.state.feature(o.feature_id).is_some() => slam_obs.push((o.feature_id, ob)),
                TrackLabel::Slam => self.slam_buf.entry(o.feature_id).or_default().push(ob),
                TrackLabel::Msckf => {
                    self.msckf_buf.entry(o.feature_id).or_default().push(ob);
                    msckf_seen.insert(o.feature_id);
                }
            }
        }
        let mut flops = FlopCounter::new();

        let mut extra: Vec<(ErrorStateLayout, LinearizedMeasurement<f64>)> = Vec::new();
        let ready: Vec<u64> = self
            .slam_buf
            .iter()
            .filter(|(_, v)| v.len() >= SLAM_INIT_OBS)
            .map(|(&id, _)| id)
            .collect();
        for id in ready {
            if self.state.slam_features.len() >= self.data.spec.window.max_slam {
                break;
            }
            let obs = self.window_obs(&self.slam_buf[&id]);
            if obs.len() < SLAM_INIT_OBS {
                continue;
            }
            if let Some(rows) = self.init_slam_feature(id, &obs, &mut flops)? {
                self.slam_buf.remove(&id);
                extra.push(rows);
            } else if let Some(buf) = self.slam_buf.get_mut(&id) {
                if buf.len() >= self.window {
                    buf.remove(0);
                }
            }
        }

        let layout = self.state.layout();
        let n = layout.n();
        let mut parts = Vec::new();
        for (id, ob) in &slam_obs {
            let f = self.state.feature(*id).expect("feature in state").clone();
            let fo = layout.offset(BlockId::Feature(*id)).map_err(|e| e.to_string())?;
            match inverse_depth_rows(&self.state, &layout, &f, std::slice::from_ref(ob), Some(fo)) {
                Ok((r, h, _)) => parts.push(whiten(&r, &h, self.sigma_px, N1).map_err(|e| e.to_string())?),
                Err(_) => self.out.stats.skipped_tracks += 1,
            }
        }
        let done: Vec<u64> = self
            .msckf_buf
            .iter()
            .filter(|(id, v)| !msckf_seen.contains(id) || v.len() >= self.window)
            .map(|(&id, _)| id)
            .collect();
        for id in done {
            let track = self.msckf_buf.remove(&id).unwrap_or_default();
            let obs = self.window_obs(&track);
            if obs.len() < MSCKF_MIN_OBS {
                continue;
            }
            match msckf_rows(&self.state, &layout, &obs) {
                Ok((r, h)) => parts.push(whiten(&r, &h, self.sigma_px, N1).map_err(|e| e.to_string())?),
                Err(_) => self.out.stats.skipped_tracks += 1,
            }
        }
        for (from, lm) in extra {
            let h = remap_columns(&lm.h2, &from, &layout);
            parts.push(LinearizedMeasurement {
                residual: lm.residual,
                h2: h.submatrix(0, N1, h.rows(), n - N1),
                n1: N1,
            });
        }
        let meas = stack_measurements(&parts, N1, n - N1);
        if meas.rows() > 0 {
            let pose_x2: Vec<usize> = layout.pose_offsets().iter().map(|o| o - N1).collect();
            let stride = self.opts.svd_stride;
            let want = stride > 0 && self.out.stats.updates % stride == 0;
            let report = self.est.update(&meas, &pose_x2, want, &mut flops);
            for e in report.as_ref().map(|r| r.events.clone()).unwrap_or_default() {
                self.push_event(j, e.kind, e.value, e.detail);
            }
            let report = match report {
                Ok(r) => r,
                Err(e) => {
                    if let Some((pivot, value)) = e.not_positive_definite() {
                        self.push_event(j, FilterEventKind::NotPositiveDefinite, value, format!("pivot {pivot}"));
                    }
                    self.out.flops.update += flops;
                    return Err(e.to_string());
                }
            };
            self.out.stats.updates += 1;
            self.out.stats.max_rows = self.out.stats.max_rows.max(meas.rows());
            self.out.stats.max_n2 = self.out.stats.max_n2.max(n - N1);
            self.out.stats.all_upper_triangular &= report.upper_triangular;
            if let Some(err) = report.identity_error {
                self.out.stats.max_identity_error = self.out.stats.max_identity_error.max(err);
            }
            if let Some(d) = &report.diagnostics {
                self.out.conditioning.push(record_conditioning(frame.t, j, d, &pose_x2));
            }
            self.state = self.state.boxplus(&report.delta_x, &layout).map_err(|e| e.to_string())?;
        }
        self.out.flops.update += flops;
        Ok(())
    }

    fn push_event(&mut self, frame: usize, kind: FilterEventKind, value: f64, detail: String) {
        self.out.events.push(RunEvent {
            frame,
            t: self.data.frames[frame].t,
            kind,
            value,
            detail,
        });
    }

    fn record(&mut self, j: usize) -> StepResult {
        let frame = &self.data.frames[j];
        let newest = self.state.newest_pose();
        self.out.trajectory.push(StampedPose {
            t: frame.t,
            p: newest.p,
            q: newest.q,
        });
        let s = &self.data.truth.states[frame.imu_index];
        self.out.truth.push(StampedPose {
            t: frame.t,
            p: s.p,
            q: s.q,
        });
        if !self.opts.record_estimates {
            return Ok(());
        }
        let truth = truth_state_like(&self.state, self.data).map_err(|e| e.to_string())?;
        let error = self.state.boxminus(&truth).map_err(|e| e.to_string())?;
        let cov = self.est.covariance().map_err(|e| e.to_string())?;
        let layout = self.state.layout();
        let po = layout.offset(BlockId::Pose(newest.id)).map_err(|e| e.to_string())?;
        let idx = [po, po + 1, po + 2];
        let pp = nalgebra::Matrix3::from_fn(|r, c| cov[(idx[r], idx[c])]);
        let e = Vector3::new(error[po], error[po + 1], error[po + 2]);
        let nees = pp.cholesky().map_or(f64::NAN, |ch| e.dot(&ch.solve(&e)));
        self.out.nees.push(nees);
        self.out.estimates.push(StepEstimate {
            frame: j,
            t: frame.t,
            blocks: layout.blocks().iter().map(|b| (b.id, b.offset, b.dim)).collect(),
            error,
            sigma: (0..cov.rows()).map(|i| cov[(i, i)].max(0.0).sqrt()).collect(),
        });
        Ok(())
    }

    fn run(mut self) -> (RunOutput, PhaseTimes) {
        let frames = self.opts.max_frames.unwrap_or(usize::MAX).min(self.data.frames.len());
        let mut times = PhaseTimes::default();
        let step = |d: &mut Self, j: usize, times: &mut PhaseTimes| -> StepResult {
            if j > 0 {
                let t0 = Instant::now();
                d.propagate(j)?;
                let t1 = Instant::now();
                d.marginalize(j)?;
                times.propagation += t1 - t0;
                times.marginalization += t1.elapsed();
            }
            let t0 = Instant::now();
            d.update(j)?;
            times.update += t0.elapsed();
            d.record(j)
        };
        for j in 0..frames {
            if let Err(msg) = step(&mut self, j, &mut times) {
                self.out.failure = Some((j, msg));
                break;
            }
            self.out.stats.frames = j + 1;
        }
        (self.out, times)
    }
}

/// Wall-clock time per phase. Kept out of [`RunOutput`] so that outputs of
/// repeated runs compare equal.
#[derive(Debug, Clone, Copy, Default)]
pub struct PhaseTimes {
    pub propagation: Duration,
    pub marginalization: Duration,
    pub update: Duration,
}

impl PhaseTimes {
    pub fn total(&self) -> Duration {
        self.propagation + self.marginalization + self.update
    }
}

/// Runs one estimator at working precision `T` over the whole dataset.
pub fn run_dataset_at<T: Real>(data: &Dataset, opts: RunOptions) -> (RunOutput, PhaseTimes) {
    match Driver::<T>::new(data, opts) {
        Ok(d) => d.run(),
        Err(msg) => (
            RunOutput {
                kind: opts.kind,
                precision: opts.precision,
                trajectory: Vec::new(),
                truth: Vec::new(),
                conditioning: Vec::new(),
                flops: PhaseFlops::default(),
                events: Vec::new(),
                estimates: Vec::new(),
                nees: Vec::new(),
                stats: RunStats::default(),
                failure: Some((0, msg)),
            },
            PhaseTimes::default(),
        ),
    }
}

/// Runs at the precision selected in `opts`, also returning phase timings.
pub fn run_dataset_timed(data: &Dataset, opts: RunOptions) -> (RunOutput, PhaseTimes) {
    match opts.precision {
        Precision::Binary32 => run_dataset_at::<f32>(data, opts),
        Precision::Binary64 => run_dataset_at::<f64>(data, opts),
    }
}

/// Runs at the precision selected in `opts`.
pub fn run_dataset(data: &Dataset, opts: RunOptions) -> RunOutput {
    run_dataset_timed(data, opts).0
}

/// Largest per-frame difference of two runs' estimates, in units of the
/// first run's marginal standard deviation. Frames are matched by index and
/// must share a layout; `None` if they do not.
pub fn max_normalized_divergence(a: &RunOutput, b: &RunOutput) -> Option<f64> {
    if a.estimates.len() != b.estimates.len() {
        return None;
    }
    let mut worst = 0.0_f64;
    for (x, y) in a.estimates.iter().zip(&b.estimates) {
        if x.blocks != y.blocks {
            return None;
        }
        for i in 0..x.error.len() {
            let s = x.sigma[i];
            let d = (x.error[i] - y.error[i]).abs();
            worst = worst.max(if s > 0.0 { d / s } else { d });
        }
    }
    Some(worst)
}
