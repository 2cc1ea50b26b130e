mod common;

use common::{random_upper, rng, vec3};
use nalgebra::{DMatrix, UnitQuaternion, Vector3};
use pcsrif_core::diag::*;
use pcsrif_core::filters::UpdateDiagnostics;
use pcsrif_core::linalg::{cond_spectral, DenseMatrix, FlopCounter};
use proptest::prelude::*;
use rand::Rng;

fn diagnostics(prior: DenseMatrix<f64>, post: DenseMatrix<f64>) -> UpdateDiagnostics {
    UpdateDiagnostics {
        r22_prior: prior,
        r22_post: post,
        preconditioner: None,
    }
}

#[test]
fn identity_factor_has_unit_condition() {
    let i = DenseMatrix::identity(12);
    let rec = record_conditioning(1.0, 3, &diagnostics(i.clone(), i), &[0, 6]);
    for k in [
        rec.kappa2_r22_post,
        rec.kappa2_r22_post_scaled,
        rec.kappa2_r22_post_precond,
        rec.kappa2_r22_precond,
    ] {
        assert!((k - 1.0).abs() < 1e-12, "{rec:?}");
    }
    assert!((rec.sigma_max_p - 1.0).abs() < 1e-12 && (rec.sigma_min_p - 1.0).abs() < 1e-12);
    assert_eq!((rec.t, rec.step, rec.n2), (1.0, 3, 12));
}

#[test]
fn scaled_covariance_extremes_match_dense_eigenvalues() {
    let mut r = rng(3);
    let n = 18;
    let mut post = random_upper(&mut r, n);
    for j in 0..n {
        let s = 10f64.powf(r.random_range(-2.0..2.0));
        for i in 0..=j {
            post[(i, j)] *= s;
        }
    }
    let prior = random_upper(&mut r, n);
    let rec = record_conditioning(0.0, 0, &diagnostics(prior, post.clone()), &[0, 6, 12]);
    let a = post.to_nalgebra();
    let d: Vec<f64> = (0..n).map(|j| a.column(j).norm()).collect();
    let p = (a.transpose() * &a).try_inverse().unwrap();
    let ps = DMatrix::from_fn(n, n, |i, j| d[i] * p[(i, j)] * d[j]);
    let eig = ps.symmetric_eigenvalues();
    let (lo, hi) = (eig.min(), eig.max());
    assert!((rec.sigma_max_p - hi).abs() <= 1e-8 * hi);
    assert!((rec.sigma_min_p - lo).abs() <= 1e-8 * lo);
    // Diagonal of the scaled covariance inverse is one, so the spread is the
    // whole story: κ² of the normalized factor equals σmax/σmin.
    assert!((rec.kappa2_r22_post_scaled - hi / lo).abs() <= 1e-6 * hi / lo);
    assert!(rec.kappa2_r22_post >= 1.0 && rec.kappa2_r22_precond >= 1.0);
}

#[test]
fn column_normalization_gives_unit_columns() {
    let mut r = rng(4);
    let mut a = random_upper(&mut r, 7);
    for i in 0..7 {
        a[(i, 3)] = 0.0;
    }
    let b = column_normalized(&a);
    for j in 0..7 {
        let n: f64 = b.column(j).iter().map(|v| v * v).sum::<f64>().sqrt();
        if j == 3 {
            assert_eq!(n, 0.0);
        } else {
            assert!((n - 1.0).abs() < 1e-14);
        }
    }
}

#[test]
fn preconditioner_in_record_comes_from_the_prior() {
    let mut r = rng(9);
    let prior = random_upper(&mut r, 12);
    let post = random_upper(&mut r, 12);
    let offsets = [0, 6];
    let rec = record_conditioning(0.0, 0, &diagnostics(prior.clone(), post.clone()), &offsets);
    let mut f = FlopCounter::new();
    let m = pcsrif_core::filters::build_preconditioner(&prior, &offsets, &mut f);
    let pc = pcsrif_core::filters::apply_preconditioner_inverse(&m, &post, &mut f);
    assert!((rec.kappa2_r22_post_precond - cond_spectral(&pc).kappa_squared()).abs() < 1e-9 * rec.kappa2_r22_post_precond);
}

fn helix(n: usize, dt: f64) -> Vec<StampedPose> {
    (0..n)
        .map(|k| {
            let t = k as f64 * dt;
            StampedPose {
                t,
                p: Vector3::new(2.0 * (0.3 * t).cos(), 2.0 * (0.3 * t).sin(), 0.1 * t),
                q: UnitQuaternion::from_euler_angles(0.05 * t.sin(), 0.02 * t, 0.3 * t),
            }
        })
        .collect()
}

#[test]
fn identical_trajectories_have_zero_error() {
    let gt = helix(50, 0.1);
    let (t, r) = compute_ate(&gt, &gt, 1e-3).unwrap();
    assert!(t < 1e-12 && r < 1e-9);
    let (t, r) = compute_rte(&gt, &gt, 1.0, 1e-3).unwrap();
    assert!(t < 1e-12 && r < 1e-9);
}

#[test]
fn yaw_and_shift_are_absorbed() {
    let gt = helix(60, 0.1);
    let qz = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), 10f64.to_radians());
    let shift = Vector3::new(1.0, 0.0, 0.0);
    let est: Vec<StampedPose> = gt
        .iter()
        .map(|s| StampedPose {
            t: s.t,
            p: qz * s.p + shift,
            q: qz * s.q,
        })
        .collect();
    let (at, ar) = compute_ate(&est, &gt, 1e-3).unwrap();
    assert!(at < 1e-9 && ar < 1e-6, "{at} {ar}");
    let (rt, rr) = compute_rte(&est, &gt, 1.0, 1e-3).unwrap();
    assert!(rt < 1e-9 && rr < 1e-6, "{rt} {rr}");
}

fn brute_force_ate(est: &[StampedPose], gt: &[StampedPose]) -> f64 {
    let mut best = f64::INFINITY;
    let steps = 200_000;
    for k in 0..=steps {
        let yaw = -0.2 + 0.4 * k as f64 / steps as f64;
        let qz = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw);
        let n = est.len() as f64;
        let t: Vector3<f64> = est.iter().zip(gt).map(|(e, g)| g.p - qz * e.p).sum::<Vector3<f64>>() / n;
        let sse: f64 = est.iter().zip(gt).map(|(e, g)| (qz * e.p + t - g.p).norm_squared()).sum();
        best = best.min((sse / n).sqrt());
    }
    best
}

#[test]
fn partial_offset_on_straight_segment_matches_brute_force() {
    let gt: Vec<StampedPose> = (0..10)
        .map(|k| StampedPose {
            t: k as f64 * 0.1,
            p: Vector3::new(0.5 * k as f64, 0.0, 1.0),
            q: UnitQuaternion::identity(),
        })
        .collect();
    // A constant offset is removed entirely.
    let all: Vec<StampedPose> = gt.iter().map(|s| StampedPose { p: s.p + Vector3::new(0.0, 0.1, 0.0), ..*s }).collect();
    assert!(compute_ate(&all, &gt, 1e-3).unwrap().0 < 1e-12);
    // Offset on the second half only survives alignment.
    let est: Vec<StampedPose> = gt
        .iter()
        .enumerate()
        .map(|(k, s)| StampedPose {
            p: s.p + if k >= 5 { Vector3::new(0.0, 0.1, 0.0) } else { Vector3::zeros() },
            ..*s
        })
        .collect();
    let (ate, _) = compute_ate(&est, &gt, 1e-3).unwrap();
    let bf = brute_force_ate(&est, &gt);
    assert!(ate > 0.01 && ate < 0.05, "{ate}");
    assert!((ate - bf).abs() <= 1e-6 * bf, "{ate} vs {bf}");
}

fn reversed(traj: &[StampedPose]) -> Vec<StampedPose> {
    let end = traj.last().unwrap().t;
    traj.iter().rev().map(|s| StampedPose { t: end - s.t, ..*s }).collect()
}

#[test]
fn no_overlap_is_an_error() {
    let gt = helix(10, 0.1);
    let late: Vec<StampedPose> = gt.iter().map(|s| StampedPose { t: s.t + 100.0, ..*s }).collect();
    assert_eq!(compute_ate(&late, &gt, 1e-3), Err(MetricsError::NoOverlap));
    assert!(compute_rte(&late, &gt, 1.0, 1e-3).is_err());
}

#[test]
fn phase_totals_add_up() {
    let mut f = PhaseFlops::default();
    f.propagation.madd(10);
    f.marginalization.add(3);
    f.update.mul(7);
    assert_eq!(f.total().total(), 20 + 3 + 7);
    let rows = f.rows();
    assert_eq!(rows[3].0, "Estimator Total");
    assert_eq!(rows[3].1, f.total());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn metrics_are_symmetric_under_time_reversal(seed in 0u64..1000) {
        let mut r = rng(seed);
        let gt = helix(40, 0.1);
        let est: Vec<StampedPose> = gt
            .iter()
            .map(|s| StampedPose {
                t: s.t,
                p: s.p + vec3(&mut r, 0.05),
                q: s.q * UnitQuaternion::from_scaled_axis(vec3(&mut r, 0.02)),
            })
            .collect();
        let (a, b) = (compute_ate(&est, &gt, 1e-6).unwrap(), compute_ate(&reversed(&est), &reversed(&gt), 1e-6).unwrap());
        prop_assert!((a.0 - b.0).abs() < 1e-12 && (a.1 - b.1).abs() < 1e-9);
        let (a, b) = (
            compute_rte(&est, &gt, 1.0, 1e-6).unwrap(),
            compute_rte(&reversed(&est), &reversed(&gt), 1.0, 1e-6).unwrap(),
        );
        prop_assert!((a.0 - b.0).abs() < 1e-12 && (a.1 - b.1).abs() < 1e-9, "{:?} {:?}", a, b);
        prop_assert!(a.0 >= 0.0 && a.1 >= 0.0);
    }

    #[test]
    fn condition_numbers_are_at_least_one(seed in 0u64..1000) {
        let mut r = rng(seed);
        let prior = random_upper(&mut r, 14);
        let post = random_upper(&mut r, 14);
        let rec = record_conditioning(0.0, 0, &diagnostics(prior, post), &[0, 6]);
        for k in [rec.kappa2_r22_post, rec.kappa2_r22_post_scaled, rec.kappa2_r22_post_precond, rec.kappa2_r22_precond] {
            prop_assert!(k >= 1.0 - 1e-12);
        }
        prop_assert!(rec.sigma_max_p >= rec.sigma_min_p);
    }

    #[test]
    fn condition_number_ignores_transpose_and_permutation(seed in 0u64..1000) {
        let mut r = rng(seed);
        let a = random_upper(&mut r, 9);
        let k = cond_spectral(&a).kappa;
        prop_assert!((cond_spectral(&a.transpose()).kappa - k).abs() < 1e-9 * k);
        let perm: Vec<usize> = vec![4, 0, 8, 2, 6, 1, 7, 3, 5];
        let p = a.select(&perm, &(0..9).collect::<Vec<_>>()).select_columns(&perm);
        prop_assert!((cond_spectral(&p).kappa - k).abs() < 1e-9 * k);
    }
}
