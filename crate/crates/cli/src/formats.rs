//! On-disk report formats.
//!
//! Every CSV starts with a `# <name>/<version>` line followed by a header
//! whose column names carry units. Floats are written with 17 significant
//! digits so that files round-trip exactly.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use pcsrif_core::diag::{ConditioningRecord, PhaseFlops, StampedPose, TrajectoryMetrics};
use pcsrif_core::pipeline::{RunEvent, StepEstimate};

use crate::CliError;

pub const CONDITIONING_FORMAT: &str = "# conditioning/1";
pub const METRICS_FORMAT: &str = "# metrics/1";
pub const FLOPS_FORMAT: &str = "# flops/1";
pub const EVENTS_FORMAT: &str = "# events/1";
pub const ESTIMATES_FORMAT: &str = "# estimates/1";

pub const CONDITIONING_HEADER: &str = "step,t_s,n2,kappa2_r22_post,kappa2_r22_post_scaled,kappa2_r22_post_precond,kappa2_r22_precond,sigma_max_p,sigma_min_p";
pub const METRICS_HEADER: &str = "estimator,precision,frames,ate_translation_m,ate_rotation_deg,rte_translation_m,rte_rotation_deg,rte_interval_s,instability_events";
pub const FLOPS_HEADER: &str = "phase,flops,adds,muls,divs,sqrts";
pub const EVENTS_HEADER: &str = "frame,t_s,kind,value,detail";
pub const ESTIMATES_HEADER: &str = "frame,t_s,block,component,error,sigma";

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_f64(s: &str, what: &str) -> Result<f64, CliError> {
    s.trim()
        .parse()
        .map_err(|_| CliError::Format(format!("bad number `{s}` in {what}")))
}

/// Content lines of a CSV file after checking its format tag and header.
fn csv_rows<'a>(text: &'a str, format: &str, header: &str) -> Result<Vec<Vec<&'a str>>, CliError> {
    let mut lines = text.lines();
    if lines.next() != Some(format) {
        return Err(CliError::Format(format!("expected `{format}` tag")));
    }
    if lines.next() != Some(header) {
        return Err(CliError::Format(format!("unexpected header in `{format}` file")));
    }
    Ok(lines.filter(|l| !l.is_empty()).map(|l| l.split(',').collect()).collect())
}

/// `t x y z qx qy qz qw` per line, space separated.
pub fn write_trajectory(poses: &[StampedPose]) -> String {
    let mut s = String::new();
    for p in poses {
        let q = p.q.coords;
        let vals = [p.t, p.p.x, p.p.y, p.p.z, q.x, q.y, q.z, q.w];
        let line: Vec<String> = vals.iter().map(|&v| num(v)).collect();
        s.push_str(&line.join(" "));
        s.push('\n');
    }
    s
}

pub fn read_trajectory(text: &str) -> Result<Vec<StampedPose>, CliError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let v: Vec<f64> = line
            .split_whitespace()
            .map(|s| parse_f64(s, "trajectory"))
            .collect::<Result<_, _>>()?;
        if v.len() != 8 {
            return Err(CliError::Format(format!("trajectory line {} has {} fields", i + 1, v.len())));
        }
        out.push(StampedPose {
            t: v[0],
            p: Vector3::new(v[1], v[2], v[3]),
            q: UnitQuaternion::new_unchecked(Quaternion::new(v[7], v[4], v[5], v[6])),
        });
    }
    Ok(out)
}

pub fn write_conditioning(records: &[ConditioningRecord]) -> String {
    let mut s = format!("{CONDITIONING_FORMAT}\n{CONDITIONING_HEADER}\n");
    for r in records {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            r.step,
            num(r.t),
            r.n2,
            num(r.kappa2_r22_post),
            num(r.kappa2_r22_post_scaled),
            num(r.kappa2_r22_post_precond),
            num(r.kappa2_r22_precond),
            num(r.sigma_max_p),
            num(r.sigma_min_p)
        );
    }
    s
}

pub fn read_conditioning(text: &str) -> Result<Vec<ConditioningRecord>, CliError> {
    csv_rows(text, CONDITIONING_FORMAT, CONDITIONING_HEADER)?
        .into_iter()
        .map(|f| {
            if f.len() != 9 {
                return Err(CliError::Format("conditioning row width".into()));
            }
            let g = |i: usize| parse_f64(f[i], "conditioning");
            let int = |i: usize| f[i].parse::<usize>().map_err(|_| CliError::Format("conditioning index".into()));
            Ok(ConditioningRecord {
                step: int(0)?,
                t: g(1)?,
                n2: int(2)?,
                kappa2_r22_post: g(3)?,
                kappa2_r22_post_scaled: g(4)?,
                kappa2_r22_post_precond: g(5)?,
                kappa2_r22_precond: g(6)?,
                sigma_max_p: g(7)?,
                sigma_min_p: g(8)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub estimator: String,
    pub precision: String,
    pub frames: usize,
    pub metrics: TrajectoryMetrics,
    pub instability_events: usize,
}

pub fn write_metrics(row: &MetricsRow) -> String {
    let m = &row.metrics;
    format!(
        "{METRICS_FORMAT}\n{METRICS_HEADER}\n{},{},{},{},{},{},{},{},{}\n",
        row.estimator,
        row.precision,
        row.frames,
        num(m.ate_translation),
        num(m.ate_rotation),
        num(m.rte_translation),
        num(m.rte_rotation),
        num(m.rte_interval),
        row.instability_events
    )
}

pub fn read_metrics(text: &str) -> Result<MetricsRow, CliError> {
    let rows = csv_rows(text, METRICS_FORMAT, METRICS_HEADER)?;
    let f = rows
        .first()
        .filter(|f| f.len() == 9)
        .ok_or_else(|| CliError::Format("metrics file needs one 9-column row".into()))?;
    let g = |i: usize| parse_f64(f[i], "metrics");
    let int = |i: usize| f[i].parse::<usize>().map_err(|_| CliError::Format("metrics count".into()));
    Ok(MetricsRow {
        estimator: f[0].to_string(),
        precision: f[1].to_string(),
        frames: int(2)?,
        metrics: TrajectoryMetrics {
            ate_translation: g(3)?,
            ate_rotation: g(4)?,
            rte_translation: g(5)?,
            rte_rotation: g(6)?,
            rte_interval: g(7)?,
        },
        instability_events: int(8)?,
    })
}

pub fn write_flops(flops: &PhaseFlops) -> String {
    let mut s = format!("{FLOPS_FORMAT}\n{FLOPS_HEADER}\n");
    for (name, c) in flops.rows() {
        let _ = writeln!(s, "{name},{},{},{},{},{}", c.total(), c.adds, c.muls, c.divs, c.sqrts);
    }
    s
}

/// `(phase, total flops)` rows.
pub fn read_flops(text: &str) -> Result<Vec<(String, u64)>, CliError> {
    csv_rows(text, FLOPS_FORMAT, FLOPS_HEADER)?
        .into_iter()
        .map(|f| {
            let total = f
                .get(1)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| CliError::Format("flops row".into()))?;
            Ok((f[0].to_string(), total))
        })
        .collect()
}

fn clean_detail(s: &str) -> String {
    s.replace([',', '\n'], ";")
}

pub fn write_events(events: &[RunEvent], failure: Option<&(usize, String)>) -> String {
    let mut s = format!("{EVENTS_FORMAT}\n{EVENTS_HEADER}\n");
    for e in events {
        let _ = writeln!(s, "{},{},{},{},{}", e.frame, num(e.t), e.kind.name(), num(e.value), clean_detail(&e.detail));
    }
    if let Some((frame, msg)) = failure {
        let _ = writeln!(s, "{frame},,Abort,,{}", clean_detail(msg));
    }
    s
}

pub fn write_estimates(estimates: &[StepEstimate]) -> String {
    let mut s = format!("{ESTIMATES_FORMAT}\n{ESTIMATES_HEADER}\n");
    for e in estimates {
        for &(id, offset, dim) in &e.blocks {
            for c in 0..dim {
                let i = offset + c;
                let _ = writeln!(s, "{},{},{id},{c},{},{}", e.frame, num(e.t), num(e.error[i]), num(e.sigma[i]));
            }
        }
    }
    s
}

/// One estimates row: `(frame, block label, component) → (error, sigma)`.
pub type EstimateKey = (usize, String, usize);

pub fn read_estimates(text: &str) -> Result<Vec<(EstimateKey, f64, f64)>, CliError> {
    csv_rows(text, ESTIMATES_FORMAT, ESTIMATES_HEADER)?
        .into_iter()
        .map(|f| {
            if f.len() != 6 {
                return Err(CliError::Format("estimates row width".into()));
            }
            let int = |i: usize| f[i].parse::<usize>().map_err(|_| CliError::Format("estimates index".into()));
            Ok((
                (int(0)?, f[2].to_string(), int(3)?),
                parse_f64(f[4], "estimates")?,
                parse_f64(f[5], "estimates")?,
            ))
        })
        .collect()
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}
