use pcsrif_core::filters::{EstimatorKind, FallbackPolicy, FilterEventKind};
use pcsrif_core::linalg::Precision;
use pcsrif_core::pipeline::*;
use pcsrif_core::sim::{gen_scenario, Dataset, ScenarioSpec};

fn short_default(duration: f64) -> Dataset {
    let mut spec = ScenarioSpec::default_scenario();
    spec.duration = duration;
    gen_scenario(&spec)
}

fn opts(kind: EstimatorKind) -> RunOptions {
    RunOptions::new(kind, Precision::Binary64)
}

#[test]
fn noiseless_run_stays_on_truth() {
    let data = gen_scenario(&ScenarioSpec::noiseless());
    assert!((data.spec.duration - 30.0).abs() < 1e-12);
    for kind in [EstimatorKind::Kf, EstimatorKind::Srif, EstimatorKind::PcSrif] {
        let mut o = opts(kind);
        o.record_estimates = false;
        o.svd_stride = 0;
        let out = run_dataset(&data, o);
        assert!(out.failure.is_none(), "{kind}: {:?}", out.failure);
        assert_eq!(out.stats.frames, data.frames.len());
        let worst = out
            .trajectory
            .iter()
            .zip(&out.truth)
            .map(|(e, g)| (e.p - g.p).norm())
            .fold(0.0, f64::max);
        assert!(worst <= 1e-4, "{kind}: {worst}");
    }
}

#[test]
fn position_nees_is_consistent_over_twenty_runs() {
    let runs = 20;
    let mut avg: Vec<f64> = Vec::new();
    for k in 0..runs {
        let mut spec = ScenarioSpec::consistency();
        spec.seed = 100 + k;
        let out = run_dataset(&gen_scenario(&spec), opts(EstimatorKind::Srif));
        assert!(out.failure.is_none());
        if avg.is_empty() {
            avg = vec![0.0; out.nees.len()];
        }
        for (a, v) in avg.iter_mut().zip(&out.nees) {
            *a += v / runs as f64;
        }
    }
    // 95% two-sided bounds of χ²(3·20)/20.
    let (lo, hi) = (2.02, 4.12);
    for (j, v) in avg.iter().enumerate() {
        assert!(*v >= lo && *v <= hi, "frame {j}: average NEES {v}");
    }
}

#[test]
fn estimators_agree_at_binary64() {
    let data = short_default(15.0);
    let run = |k| {
        let mut o = opts(k);
        o.verify_identity = true;
        run_dataset(&data, o)
    };
    let (kf, srif, pc) = (run(EstimatorKind::Kf), run(EstimatorKind::Srif), run(EstimatorKind::PcSrif));
    for out in [&kf, &srif, &pc] {
        assert!(out.failure.is_none());
    }
    assert!(max_normalized_divergence(&srif, &kf).unwrap() <= 1e-6);
    assert!(max_normalized_divergence(&srif, &pc).unwrap() <= 1e-6);
    for out in [&srif, &pc] {
        assert!(out.stats.max_identity_error <= 1e-9, "{}", out.stats.max_identity_error);
        assert!(out.stats.all_upper_triangular);
    }
}

#[test]
fn window_dimensions_match_the_caps() {
    let data = short_default(20.0);
    let out = run_dataset(&data, opts(EstimatorKind::Srif));
    assert!(out.failure.is_none());
    assert_eq!(out.stats.max_n2, 122);
    assert!(out.stats.max_rows <= 995, "{}", out.stats.max_rows);
    assert!(out.stats.slam_inits > 0 && out.stats.reanchors > 0);
    assert!(out.flops.propagation.total() > 0 && out.flops.marginalization.total() > 0);
    assert!(!out.conditioning.is_empty());
    assert_eq!(out.trajectory.len(), data.frames.len());
}

#[test]
fn runs_are_deterministic() {
    let data = short_default(5.0);
    let o = RunOptions::new(EstimatorKind::PcSrif, Precision::Binary32);
    assert_eq!(run_dataset(&data, o), run_dataset(&data, o));
}

#[test]
fn single_precision_normal_equation_fails_without_preconditioning() {
    let mut spec = ScenarioSpec::conditioning();
    spec.duration = 10.0;
    let data = gen_scenario(&spec);
    let abort = run_dataset(&data, RunOptions::new(EstimatorKind::IfOracle, Precision::Binary32));
    assert!(abort.instability_events() >= 1);
    let mut o = RunOptions::new(EstimatorKind::IfOracle, Precision::Binary32);
    o.fallback = FallbackPolicy::Qr;
    let out = run_dataset(&data, o);
    assert!(out.failure.is_none(), "{:?}", out.failure);
    if out.count_events(FilterEventKind::NotPositiveDefinite) > 0 {
        assert!(out.count_events(FilterEventKind::FallbackQr) > 0);
    }
    let pc = run_dataset(&data, RunOptions::new(EstimatorKind::PcSrif, Precision::Binary32));
    assert!(pc.failure.is_none());
    assert_eq!(pc.count_events(FilterEventKind::NotPositiveDefinite), 0);
}

#[test]
fn zero_noise_scenarios_use_default_filter_noise() {
    let (n, s) = estimator_noise(&ScenarioSpec::noiseless());
    let d = ScenarioSpec::default_scenario();
    assert_eq!(n, d.imu.noise);
    assert_eq!(s, d.camera.sigma_px);
    let (n, s) = estimator_noise(&d);
    assert_eq!((n, s), (d.imu.noise, d.camera.sigma_px));
}

#[test]
fn perturbed_start_is_a_prior_draw() {
    let mut spec = ScenarioSpec::consistency();
    spec.duration = 1.0;
    let data = gen_scenario(&spec);
    let (a, cov) = initial_state(&data);
    let (b, _) = initial_state(&data);
    assert_eq!(a, b);
    let truth = truth_state_like(&a, &data).unwrap();
    let d = a.boxminus(&truth).unwrap();
    assert!(d.iter().any(|v| *v != 0.0));
    let chi2: f64 = d.iter().enumerate().map(|(i, v)| v * v / cov[(i, i)]).sum();
    assert!(chi2 < 100.0, "{chi2}");
    spec.prior.perturb = false;
    let (c, _) = initial_state(&gen_scenario(&spec));
    let truth_c = truth_state_like(&c, &data).unwrap();
    assert!(c.boxminus(&truth_c).unwrap().iter().all(|v| v.abs() < 1e-15));
}
