use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use pcsrif_core::diag::{compute_ate, compute_rte, TrajectoryMetrics};
use pcsrif_core::linalg::Precision;
use pcsrif_core::pipeline::{run_dataset_timed, PhaseTimes, RunOptions, RunOutput};
use pcsrif_core::sim::{write_dataset, Dataset};

use crate::config::{dataset_bytes, file_hash, git_hash, Failure, Manifest, ManifestConfig, RunConfig, ScenarioSource, MANIFEST_FORMAT};
use crate::formats::{self, MetricsRow};
use crate::CliError;

/// Association tolerance between estimate and truth stamps.
const STAMP_TOL: f64 = 1e-6;
const RTE_INTERVAL: f64 = 1.0;
/// Largest normalized state difference tolerated between binary64 runs.
pub const EQUIVALENCE_TOL: f64 = 1e-6;

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|e| io_err(path, e))
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub seed: u64,
    pub metrics: MetricsRow,
    pub failure: Option<(usize, String)>,
    pub times: PhaseTimes,
    pub output: RunOutput,
}

pub fn trajectory_metrics(out: &RunOutput) -> TrajectoryMetrics {
    let (ate_translation, ate_rotation) = compute_ate(&out.trajectory, &out.truth, STAMP_TOL).unwrap_or((f64::NAN, f64::NAN));
    let (rte_translation, rte_rotation) =
        compute_rte(&out.trajectory, &out.truth, RTE_INTERVAL, STAMP_TOL).unwrap_or((f64::NAN, f64::NAN));
    TrajectoryMetrics {
        ate_translation,
        ate_rotation,
        rte_translation,
        rte_rotation,
        rte_interval: RTE_INTERVAL,
    }
}

fn manifest_config(cfg: &RunConfig) -> ManifestConfig {
    ManifestConfig {
        scenario: cfg.scenario.clone(),
        estimator: cfg.estimator.name().to_string(),
        precision: cfg.precision,
        fallback: cfg.fallback.name().to_string(),
        svd_stride: cfg.svd_stride,
        count_flops: cfg.count_flops,
        verify_identity: cfg.verify_identity,
        shadow_check: cfg.shadow_check,
    }
}

fn run_one(cfg: &RunConfig, data: &Dataset, scenario_hash: String, dir: &Path) -> Result<RunSummary, CliError> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut opts = RunOptions::new(cfg.estimator, cfg.precision);
    opts.fallback = cfg.fallback;
    opts.shadow_check = cfg.shadow_check;
    opts.verify_identity = cfg.verify_identity;
    opts.svd_stride = cfg.svd_stride;
    let (out, times) = run_dataset_timed(data, opts);

    let metrics = MetricsRow {
        estimator: cfg.estimator.name().to_string(),
        precision: cfg.precision.name().to_string(),
        frames: out.stats.frames,
        metrics: trajectory_metrics(&out),
        instability_events: out.instability_events(),
    };
    let mut files: Vec<(&str, String)> = vec![
        ("trajectory.txt", formats::write_trajectory(&out.trajectory)),
        ("truth.txt", formats::write_trajectory(&out.truth)),
        ("conditioning.csv", formats::write_conditioning(&out.conditioning)),
        ("metrics.csv", formats::write_metrics(&metrics)),
        ("events.csv", formats::write_events(&out.events, out.failure.as_ref())),
        ("estimates.csv", formats::write_estimates(&out.estimates)),
    ];
    if cfg.count_flops {
        files.push(("flops.csv", formats::write_flops(&out.flops)));
    }
    let mut outputs = BTreeMap::new();
    for (name, text) in &files {
        write_file(&dir.join(name), text.as_bytes())?;
        outputs.insert(name.to_string(), file_hash(text.as_bytes()));
    }
    let manifest = Manifest {
        format: MANIFEST_FORMAT.to_string(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config: manifest_config(cfg),
        seed: data.spec.seed,
        scenario_spec: data.spec.to_toml()?,
        scenario_hash,
        status: if out.failure.is_some() { "aborted" } else { "completed" }.to_string(),
        failure: out.failure.as_ref().map(|(frame, message)| Failure {
            frame: *frame,
            message: message.clone(),
        }),
        frames: out.stats.frames,
        outputs,
    };
    write_file(&dir.join("manifest.json"), manifest.to_json().as_bytes())?;
    Ok(RunSummary {
        dir: dir.to_path_buf(),
        seed: data.spec.seed,
        metrics,
        failure: out.failure.clone(),
        times,
        output: out,
    })
}

fn execute(cfg: &RunConfig, source: &ScenarioSource, expected_hash: Option<&str>) -> Result<Vec<RunSummary>, CliError> {
    let seeds: Vec<Option<u64>> = if cfg.seeds.is_empty() {
        vec![None]
    } else {
        cfg.seeds.iter().map(|&s| Some(s)).collect()
    };
    let mut summaries = Vec::new();
    for seed in &seeds {
        let data = source.dataset(*seed)?;
        let hash = git_hash(&dataset_bytes(&data));
        if let Some(expected) = expected_hash {
            if expected != hash {
                return Err(CliError::ScenarioMismatch {
                    a: "manifest".into(),
                    hash_a: expected.to_string(),
                    b: "regenerated scenario".into(),
                    hash_b: hash,
                });
            }
        }
        let dir = match seed {
            Some(s) if seeds.len() > 1 => cfg.output.join(format!("seed-{s}")),
            _ => cfg.output.clone(),
        };
        summaries.push(run_one(cfg, &data, hash, &dir)?);
    }
    Ok(summaries)
}

/// Runs the configured estimator once per seed. An estimator abort is not
/// an error here; it is reported in the summary and the manifest.
pub fn run(cfg: &RunConfig) -> Result<Vec<RunSummary>, CliError> {
    execute(cfg, &ScenarioSource::resolve(&cfg.scenario)?, None)
}

/// Re-executes the run described by a manifest into `output`.
pub fn rerun(manifest: &Path, output: &Path) -> Result<Vec<RunSummary>, CliError> {
    let m = Manifest::load(manifest)?;
    let spec = pcsrif_core::sim::ScenarioSpec::from_toml(&m.scenario_spec)?;
    execute(&m.run_config(output)?, &ScenarioSource::Spec(spec), Some(&m.scenario_hash))
}

/// Writes the binary scenario cache (and optionally the spec as TOML).
/// Returns the scenario hash.
pub fn simulate(scenario: &str, seed: Option<u64>, output: &Path, spec_out: Option<&Path>) -> Result<String, CliError> {
    let data = ScenarioSource::resolve(scenario)?.dataset(seed)?;
    let file = std::fs::File::create(output).map_err(|e| io_err(output, e))?;
    let mut w = std::io::BufWriter::new(file);
    write_dataset(&mut w, &data)?;
    std::io::Write::flush(&mut w).map_err(|e| io_err(output, e))?;
    if let Some(p) = spec_out {
        write_file(p, data.spec.to_toml()?.as_bytes())?;
    }
    Ok(git_hash(&dataset_bytes(&data)))
}

/// Copies a run's estimated (or ground-truth) trajectory in the
/// `t x y z qx qy qz qw` text format. Returns the number of poses.
pub fn export(run_dir: &Path, truth: bool, output: &Path) -> Result<usize, CliError> {
    let name = if truth { "truth.txt" } else { "trajectory.txt" };
    let poses = formats::read_trajectory(&formats::read_text(&run_dir.join(name))?)?;
    write_file(output, formats::write_trajectory(&poses).as_bytes())?;
    Ok(poses.len())
}

#[derive(Debug, Clone)]
pub struct CompareRun {
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub metrics: MetricsRow,
    pub flops: Vec<(String, u64)>,
}

#[derive(Debug, Clone)]
pub struct Divergence {
    pub a: usize,
    pub b: usize,
    /// `None` if the runs' estimates cannot be matched frame by frame.
    pub value: Option<f64>,
    /// Both runs at binary64 and beyond [`EQUIVALENCE_TOL`].
    pub flagged: bool,
}

#[derive(Debug, Clone)]
pub struct CompareReport {
    pub runs: Vec<CompareRun>,
    pub divergences: Vec<Divergence>,
}

impl CompareReport {
    pub fn any_flagged(&self) -> bool {
        self.divergences.iter().any(|d| d.flagged)
    }

    fn update_flops(&self, i: usize) -> Option<u64> {
        self.runs[i].flops.iter().find(|(n, _)| n == "Update").map(|p| p.1)
    }

    fn label(&self, i: usize) -> String {
        let m = &self.runs[i].metrics;
        format!("{}/{}", m.estimator, m.precision)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "scenario {}", self.runs[0].manifest.scenario_hash);
        let _ = write!(s, "{:<28}", "");
        for i in 0..self.runs.len() {
            let _ = write!(s, "{:>20}", self.label(i));
        }
        s.push('\n');
        type Getter = fn(&MetricsRow) -> f64;
        let rows: [(&str, Getter); 4] = [
            ("ATE translation [m]", |m| m.metrics.ate_translation),
            ("ATE rotation [deg]", |m| m.metrics.ate_rotation),
            ("RTE translation [m]", |m| m.metrics.rte_translation),
            ("RTE rotation [deg]", |m| m.metrics.rte_rotation),
        ];
        for (name, get) in rows {
            let _ = write!(s, "{name:<28}");
            for r in &self.runs {
                let _ = write!(s, "{:>20.6}", get(&r.metrics));
            }
            s.push('\n');
        }
        for phase in ["Propagation", "Marginalization", "Update", "Estimator Total"] {
            let _ = write!(s, "{:<28}", format!("{phase} [flop]"));
            for r in &self.runs {
                match r.flops.iter().find(|(n, _)| n == phase) {
                    Some((_, v)) => {
                        let _ = write!(s, "{:>20}", v);
                    }
                    None => {
                        let _ = write!(s, "{:>20}", "-");
                    }
                }
            }
            s.push('\n');
        }
        if let Some(base) = self.update_flops(0) {
            let _ = write!(s, "{:<28}", "Update ratio vs first");
            for i in 0..self.runs.len() {
                match self.update_flops(i) {
                    Some(v) if base > 0 => {
                        let _ = write!(s, "{:>20.4}", v as f64 / base as f64);
                    }
                    _ => {
                        let _ = write!(s, "{:>20}", "-");
                    }
                }
            }
            s.push('\n');
        }
        let _ = write!(s, "{:<28}", "Instability events");
        for r in &self.runs {
            let _ = write!(s, "{:>20}", r.metrics.instability_events);
        }
        s.push('\n');
        s.push('\n');
        for d in &self.divergences {
            let value = d.value.map_or("unmatched".to_string(), |v| format!("{v:.3e}"));
            let flag = if d.flagged { "  EXCEEDS TOLERANCE" } else { "" };
            let _ = writeln!(s, "divergence {} vs {}: {value}{flag}", self.label(d.a), self.label(d.b));
        }
        s
    }
}

type Estimates = BTreeMap<(usize, String, usize), (f64, f64)>;

fn load_estimates(dir: &Path) -> Result<Estimates, CliError> {
    let rows = formats::read_estimates(&formats::read_text(&dir.join("estimates.csv"))?)?;
    Ok(rows.into_iter().map(|(k, e, s)| (k, (e, s))).collect())
}

/// Max over shared entries of `|e_a − e_b| / σ_a`. The runs must hold the
/// same set of entries.
fn divergence(a: &Estimates, b: &Estimates) -> Option<f64> {
    if a.len() != b.len() || a.is_empty() {
        return None;
    }
    let mut worst = 0.0_f64;
    for (k, (ea, sa)) in a {
        let (eb, _) = b.get(k)?;
        let d = (ea - eb).abs();
        worst = worst.max(if *sa > 0.0 { d / sa } else { d });
    }
    Some(worst)
}

pub fn compare(dirs: &[PathBuf]) -> Result<CompareReport, CliError> {
    if dirs.len() < 2 {
        return Err(CliError::Usage("compare needs at least two run directories".into()));
    }
    let mut runs = Vec::new();
    let mut estimates = Vec::new();
    for dir in dirs {
        let manifest = Manifest::load(&dir.join("manifest.json"))?;
        let metrics = formats::read_metrics(&formats::read_text(&dir.join("metrics.csv"))?)?;
        let flops_path = dir.join("flops.csv");
        let flops = if flops_path.exists() {
            formats::read_flops(&formats::read_text(&flops_path)?)?
        } else {
            Vec::new()
        };
        runs.push(CompareRun {
            dir: dir.clone(),
            manifest,
            metrics,
            flops,
        });
        estimates.push(load_estimates(dir)?);
    }
    let first = &runs[0];
    for r in &runs[1..] {
        if r.manifest.scenario_hash != first.manifest.scenario_hash {
            return Err(CliError::ScenarioMismatch {
                a: first.dir.display().to_string(),
                hash_a: first.manifest.scenario_hash.clone(),
                b: r.dir.display().to_string(),
                hash_b: r.manifest.scenario_hash.clone(),
            });
        }
    }
    let mut divergences = Vec::new();
    for a in 0..runs.len() {
        for b in a + 1..runs.len() {
            let value = divergence(&estimates[a], &estimates[b]);
            let both64 = runs[a].manifest.config.precision == Precision::Binary64
                && runs[b].manifest.config.precision == Precision::Binary64;
            divergences.push(Divergence {
                a,
                b,
                value,
                flagged: both64 && value.is_none_or(|v| v > EQUIVALENCE_TOL),
            });
        }
    }
    Ok(CompareReport { runs, divergences })
}
