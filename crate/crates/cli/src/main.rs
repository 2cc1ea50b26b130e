use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pcsrif_core::filters::{EstimatorKind, FallbackPolicy};
use pcsrif_core::linalg::Precision;
use pcsrif_cli::{CliError, RunConfig, EXIT_ABORTED};

#[derive(Parser)]
#[command(name = "pcsrif", version, about = "Sliding-window VIO filter benchmark runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a scenario and write its binary cache.
    Simulate {
        /// Preset name or scenario .toml file.
        #[arg(long, default_value = "default")]
        scenario: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        output: PathBuf,
        /// Also write the resolved scenario spec as TOML.
        #[arg(long)]
        write_spec: Option<PathBuf>,
    },
    /// Run one estimator over a scenario and write reports.
    Run(RunArgs),
    /// Side-by-side report over completed runs of the same scenario.
    Compare {
        #[arg(required = false)]
        runs: Vec<PathBuf>,
    },
    /// Export a run's trajectory as `t x y z qx qy qz qw` text.
    Export {
        run: PathBuf,
        /// Export the ground truth instead of the estimate.
        #[arg(long)]
        truth: bool,
        #[arg(long)]
        output: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Re-execute the run recorded in this manifest; other run flags are ignored.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Preset name, scenario .toml file or binary scenario cache.
    #[arg(long, default_value = "default")]
    scenario: String,
    #[arg(long, default_value = "pcsrif", value_parser = parse::<EstimatorKind>)]
    estimator: EstimatorKind,
    #[arg(long, default_value = "binary64", value_parser = parse::<Precision>)]
    precision: Precision,
    /// Repeatable; several seeds write to `<output>/seed-<n>`.
    #[arg(long = "seed")]
    seeds: Vec<u64>,
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value = "abort", value_parser = parse::<FallbackPolicy>)]
    fallback: FallbackPolicy,
    /// Record conditioning every N updates (0 disables).
    #[arg(long, default_value_t = 10)]
    svd_stride: usize,
    /// Skip the FLOP report.
    #[arg(long)]
    no_flops: bool,
    /// Check the posterior information identity at every update.
    #[arg(long)]
    verify_identity: bool,
    /// Compare single-precision normal-equation solves against a binary64 QR.
    #[arg(long)]
    shadow_check: Option<bool>,
}

fn parse<T: std::str::FromStr>(s: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    s.parse::<T>().map_err(|e| e.to_string())
}

fn exec(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Simulate {
            scenario,
            seed,
            output,
            write_spec,
        } => {
            let hash = pcsrif_cli::simulate(&scenario, seed, &output, write_spec.as_deref())?;
            println!("wrote {} (scenario {hash})", output.display());
            Ok(0)
        }
        Command::Run(a) => {
            let summaries = match &a.manifest {
                Some(m) => pcsrif_cli::rerun(m, &a.output)?,
                None => {
                    let cfg = RunConfig {
                        scenario: a.scenario,
                        estimator: a.estimator,
                        precision: a.precision,
                        seeds: a.seeds,
                        output: a.output,
                        fallback: a.fallback,
                        svd_stride: a.svd_stride,
                        count_flops: !a.no_flops,
                        verify_identity: a.verify_identity,
                        shadow_check: a.shadow_check,
                    };
                    pcsrif_cli::run(&cfg)?
                }
            };
            let mut code = 0;
            for s in &summaries {
                let m = &s.metrics;
                let t = s.times;
                println!(
                    "{} seed {}: {} frames, ATE {:.4} m / {:.3} deg, RTE {:.4} m / {:.3} deg, {} instability events",
                    s.dir.display(),
                    s.seed,
                    m.frames,
                    m.metrics.ate_translation,
                    m.metrics.ate_rotation,
                    m.metrics.rte_translation,
                    m.metrics.rte_rotation,
                    m.instability_events
                );
                println!(
                    "  wall clock [s]: propagation {:.3}, marginalization {:.3}, update {:.3}, total {:.3}",
                    t.propagation.as_secs_f64(),
                    t.marginalization.as_secs_f64(),
                    t.update.as_secs_f64(),
                    t.total().as_secs_f64()
                );
                if let Some((frame, msg)) = &s.failure {
                    eprintln!("  aborted at frame {frame}: {msg}");
                    code = EXIT_ABORTED;
                }
            }
            Ok(code)
        }
        Command::Compare { runs } => {
            let report = pcsrif_cli::compare(&runs)?;
            print!("{}", report.render());
            Ok(if report.any_flagged() { 1 } else { 0 })
        }
        Command::Export { run, truth, output } => {
            let n = pcsrif_cli::export(&run, truth, &output)?;
            println!("wrote {n} poses to {}", output.display());
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    match exec(Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
