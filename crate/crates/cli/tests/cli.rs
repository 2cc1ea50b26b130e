use std::path::{Path, PathBuf};
use std::process::Command;

use nalgebra::{UnitQuaternion, Vector3};
use pcsrif_cli::formats::*;
use pcsrif_cli::*;
use pcsrif_core::diag::{ConditioningRecord, StampedPose, TrajectoryMetrics};
use pcsrif_core::filters::EstimatorKind;
use pcsrif_core::linalg::Precision;
use pcsrif_core::sim::ScenarioSpec;

const FILES: [&str; 8] = [
    "trajectory.txt",
    "truth.txt",
    "conditioning.csv",
    "metrics.csv",
    "events.csv",
    "estimates.csv",
    "flops.csv",
    "manifest.json",
];

fn short_spec(dir: &Path, base: ScenarioSpec, duration: f64) -> String {
    let mut spec = base;
    spec.duration = duration;
    let path = dir.join(format!("{}-{duration}.toml", spec.name));
    std::fs::write(&path, spec.to_toml().unwrap()).unwrap();
    path.display().to_string()
}

fn read(p: PathBuf) -> Vec<u8> {
    std::fs::read(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn repeated_runs_write_identical_files() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = short_spec(tmp.path(), ScenarioSpec::default_scenario(), 3.0);
    let mut a = RunConfig::new(&scenario, EstimatorKind::PcSrif, Precision::Binary32, tmp.path().join("a"));
    a.seeds = vec![7];
    let mut b = a.clone();
    b.output = tmp.path().join("b");
    run(&a).unwrap();
    run(&b).unwrap();
    for f in FILES {
        assert_eq!(read(a.output.join(f)), read(b.output.join(f)), "{f}");
    }
}

#[test]
fn manifest_reexecutes_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = short_spec(tmp.path(), ScenarioSpec::default_scenario(), 2.0);
    let cfg = RunConfig::new(&scenario, EstimatorKind::Srif, Precision::Binary64, tmp.path().join("a"));
    run(&cfg).unwrap();
    let again = tmp.path().join("again");
    rerun(&cfg.output.join("manifest.json"), &again).unwrap();
    for f in FILES {
        assert_eq!(read(cfg.output.join(f)), read(again.join(f)), "{f}");
    }
    // A manifest whose spec no longer matches its hash is rejected.
    let mut m = Manifest::load(&cfg.output.join("manifest.json")).unwrap();
    m.scenario_spec = m.scenario_spec.replace("duration = 2.0", "duration = 2.5");
    let bad = tmp.path().join("bad.json");
    std::fs::write(&bad, m.to_json()).unwrap();
    assert!(matches!(rerun(&bad, &tmp.path().join("c")), Err(CliError::ScenarioMismatch { .. })));
}

#[test]
fn several_seeds_get_their_own_directories() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = short_spec(tmp.path(), ScenarioSpec::default_scenario(), 1.0);
    let mut cfg = RunConfig::new(&scenario, EstimatorKind::Kf, Precision::Binary64, tmp.path().join("out"));
    cfg.seeds = vec![3, 4];
    cfg.count_flops = false;
    let s = run(&cfg).unwrap();
    assert_eq!(s.len(), 2);
    for seed in [3, 4] {
        let dir = cfg.output.join(format!("seed-{seed}"));
        let m = Manifest::load(&dir.join("manifest.json")).unwrap();
        assert_eq!(m.seed, seed);
        assert!(!dir.join("flops.csv").exists());
    }
    assert!(read(cfg.output.join("seed-3/estimates.csv")) != read(cfg.output.join("seed-4/estimates.csv")));
}

#[test]
fn cached_scenario_matches_its_source() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = short_spec(tmp.path(), ScenarioSpec::default_scenario(), 1.0);
    let cache = tmp.path().join("s.bin");
    let spec_out = tmp.path().join("s.toml");
    let hash = simulate(&scenario, None, &cache, Some(&spec_out)).unwrap();
    assert_eq!(ScenarioSpec::load(&spec_out).unwrap().duration, 1.0);
    let a = RunConfig::new(cache.display().to_string(), EstimatorKind::Srif, Precision::Binary64, tmp.path().join("a"));
    let b = RunConfig::new(&scenario, EstimatorKind::Srif, Precision::Binary64, tmp.path().join("b"));
    run(&a).unwrap();
    run(&b).unwrap();
    let (ma, mb) = (
        Manifest::load(&a.output.join("manifest.json")).unwrap(),
        Manifest::load(&b.output.join("manifest.json")).unwrap(),
    );
    assert_eq!(ma.scenario_hash, hash);
    assert_eq!(mb.scenario_hash, hash);
    assert_eq!(read(a.output.join("estimates.csv")), read(b.output.join("estimates.csv")));
}

#[test]
fn unknown_scenario_is_a_usage_error() {
    let cfg = RunConfig::new("no-such-preset", EstimatorKind::Srif, Precision::Binary64, "/nonexistent");
    assert!(matches!(run(&cfg), Err(CliError::Usage(_))));
}

#[test]
fn compare_reports_equivalence_at_binary64() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = short_spec(tmp.path(), ScenarioSpec::default_scenario(), 5.0);
    let mut dirs = Vec::new();
    for k in [EstimatorKind::Kf, EstimatorKind::Srif, EstimatorKind::PcSrif] {
        let cfg = RunConfig::new(&scenario, k, Precision::Binary64, tmp.path().join(k.name()));
        run(&cfg).unwrap();
        dirs.push(cfg.output);
    }
    let report = compare(&dirs).unwrap();
    assert_eq!(report.divergences.len(), 3);
    for d in &report.divergences {
        assert!(d.value.unwrap() <= 1e-6, "{d:?}");
        assert!(!d.flagged);
    }
    let text = report.render();
    assert!(text.contains("ATE translation [m]") && text.contains("Estimator Total [flop]"));

    assert!(matches!(compare(&dirs[..1]), Err(CliError::Usage(_))));

    let other = short_spec(tmp.path(), ScenarioSpec::noiseless(), 5.0);
    let cfg = RunConfig::new(&other, EstimatorKind::Srif, Precision::Binary64, tmp.path().join("other"));
    run(&cfg).unwrap();
    let mixed = vec![dirs[0].clone(), cfg.output];
    assert!(matches!(compare(&mixed), Err(CliError::ScenarioMismatch { .. })));
}

#[test]
fn export_round_trips_and_handles_empty_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = short_spec(tmp.path(), ScenarioSpec::default_scenario(), 2.0);
    let cfg = RunConfig::new(&scenario, EstimatorKind::Srif, Precision::Binary64, tmp.path().join("a"));
    let s = run(&cfg).unwrap();
    let out = tmp.path().join("est.txt");
    let n = export(&cfg.output, false, &out).unwrap();
    assert_eq!(n, s[0].output.trajectory.len());
    let back = read_trajectory(&String::from_utf8(read(out)).unwrap()).unwrap();
    for (a, b) in back.iter().zip(&s[0].output.trajectory) {
        assert_eq!(a.t, b.t);
        assert_eq!(a.p, b.p);
        assert_eq!(a.q.coords, b.q.coords);
    }
    let gt = tmp.path().join("gt.txt");
    export(&cfg.output, true, &gt).unwrap();
    assert_eq!(read(gt), read(cfg.output.join("truth.txt")));

    let empty = tmp.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    std::fs::write(empty.join("trajectory.txt"), "").unwrap();
    let e = tmp.path().join("e.txt");
    assert_eq!(export(&empty, false, &e).unwrap(), 0);
    assert!(read(e).is_empty());
}

#[test]
fn trajectory_text_keeps_seventeen_digits() {
    let poses = vec![StampedPose {
        t: 0.1 + 0.2,
        p: Vector3::new(1.0 / 3.0, -2e-17, 12345.678901234567),
        q: UnitQuaternion::from_euler_angles(0.1, -0.7, 2.9),
    }];
    let text = write_trajectory(&poses);
    assert_eq!(text.split_whitespace().count(), 8);
    let back = read_trajectory(&text).unwrap();
    assert_eq!(back[0].t, poses[0].t);
    assert_eq!(back[0].p, poses[0].p);
    assert_eq!(back[0].q.coords, poses[0].q.coords);
    assert!(read_trajectory("1 2 3\n").is_err());
}

#[test]
fn report_csvs_round_trip() {
    let rec = ConditioningRecord {
        t: 1.5,
        step: 4,
        n2: 122,
        kappa2_r22_post: 1.0e9,
        kappa2_r22_post_scaled: 3.0e7,
        kappa2_r22_post_precond: 1.0e3,
        kappa2_r22_precond: 2.0e3,
        sigma_max_p: 20.0,
        sigma_min_p: 0.1,
    };
    assert_eq!(read_conditioning(&write_conditioning(&[rec.clone()])).unwrap(), vec![rec]);
    let row = MetricsRow {
        estimator: "srif".into(),
        precision: "binary64".into(),
        frames: 10,
        metrics: TrajectoryMetrics {
            ate_translation: 0.05,
            ate_rotation: 0.4,
            rte_translation: 0.02,
            rte_rotation: 0.1,
            rte_interval: 1.0,
        },
        instability_events: 2,
    };
    assert_eq!(read_metrics(&write_metrics(&row)).unwrap(), row);
    assert!(read_metrics("estimator\n").is_err());
}

#[test]
fn binary_exits_nonzero_on_estimator_abort() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = short_spec(tmp.path(), ScenarioSpec::conditioning(), 10.0);
    let out = tmp.path().join("abort");
    let status = Command::new(env!("CARGO_BIN_EXE_pcsrif"))
        .args(["run", "--scenario", &scenario, "--estimator", "if-oracle", "--precision", "binary32", "--output"])
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(EXIT_ABORTED), "{}", String::from_utf8_lossy(&status.stderr));
    let m = Manifest::load(&out.join("manifest.json")).unwrap();
    assert_eq!(m.status, "aborted");
    let frame = m.failure.unwrap().frame;
    let events = String::from_utf8(read(out.join("events.csv"))).unwrap();
    assert!(events.lines().any(|l| l.starts_with(&format!("{frame},,Abort"))));
    assert!(events.contains("NotPositiveDefinite") || events.contains("SolutionError"));

    let usage = Command::new(env!("CARGO_BIN_EXE_pcsrif")).args(["compare", "x"]).output().unwrap();
    assert_eq!(usage.status.code(), Some(2));
}
