//! `vns`: command-line front end for the kinetic-fluid laboratory.
//!
//! Exit codes: 0 success, 2 configuration or schema problems, 3 runtime
//! aborts (instability, non-finite values, IO), 4 for runs that finish but
//! fail at least one monitor.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use vns_core::config::{preset, preset_names, RunConfig};
use vns_core::run::{analyze, resume, run, RunSummary, CSV_FILE};

#[derive(Parser)]
#[command(
    name = "vns",
    version,
    about = "Kinetic-fluid simulation laboratory: coupled particle/fluid decay runs \
             with streaming diagnostics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a run from a config file or a named preset.
    Run {
        /// Path to a run configuration (TOML).
        #[arg(required_unless_present = "preset")]
        config: Option<PathBuf>,
        /// Use a named preset instead of a config file.
        #[arg(long, conflicts_with = "config")]
        preset: Option<String>,
        /// Override the configured output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the named presets, or print one as TOML.
    Presets {
        /// Print this preset's full configuration instead of the list.
        #[arg(long)]
        show: Option<String>,
    },
    /// Validate a diagnostics CSV and print summary statistics.
    Analyze {
        /// Path to a `diag.csv` produced by `run`.
        csv: PathBuf,
    },
    /// Continue a checkpointed run directory to its configured horizon.
    Resume {
        /// Run directory holding config.toml, checkpoint.bin, sampler.bin.
        dir: PathBuf,
    },
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(classify(&err))
        }
    }
}

fn classify(err: &anyhow::Error) -> u8 {
    use vns_core::Error;
    match err.downcast_ref::<Error>() {
        Some(
            Error::Config(_)
            | Error::Schema(_)
            | Error::InvalidArgument(_)
            | Error::InvalidGrid(_)
            | Error::ShapeMismatch(_),
        ) => 2,
        Some(Error::Cfl(_) | Error::NonFinite(_) | Error::Io(_)) => 3,
        // Anything outside the solver's own taxonomy (unreadable files,
        // malformed arguments) is treated as a validation problem.
        None => 2,
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run { config, preset: preset_name, out } => {
            let mut config = match (config, preset_name) {
                (Some(path), None) => {
                    let text = fs::read_to_string(&path)
                        .with_context(|| format!("reading {}", path.display()))?;
                    RunConfig::from_toml(&text)?
                }
                (None, Some(name)) => preset(&name)?,
                _ => unreachable!("clap enforces exactly one source"),
            };
            if let Some(dir) = out {
                config.output.dir = dir;
            }
            let summary = run(&config)?;
            report_run(&summary);
            if summary.all_passed() {
                Ok(ExitCode::SUCCESS)
            } else {
                eprintln!("one or more probes failed");
                Ok(ExitCode::from(4))
            }
        }
        Command::Presets { show } => {
            match show {
                Some(name) => print!("{}", preset(&name)?.to_toml()?),
                None => {
                    for name in preset_names() {
                        println!("{name}");
                    }
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Analyze { csv } => {
            let (_, stats) = analyze(&csv)?;
            println!(
                "{} rows over t in [{}, {}]",
                stats.rows, stats.t_first, stats.t_last
            );
            println!("energy: {} -> {}", stats.initial_energy, stats.final_energy);
            match stats.energy_fit {
                Some(fit) => println!(
                    "energy ~ (1+t)^{:.3} over the second half (r^2 = {:.4}, {} samples)",
                    fit.exponent, fit.r2, fit.used
                ),
                None => println!("energy fit: not enough usable samples"),
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Resume { dir } => {
            let summary = resume(&dir)?;
            report_run(&summary);
            if summary.all_passed() {
                Ok(ExitCode::SUCCESS)
            } else {
                eprintln!("one or more probes failed");
                Ok(ExitCode::from(4))
            }
        }
    }
}

fn report_run(summary: &RunSummary) {
    println!(
        "{} steps to t = {}; {} samples -> {}",
        summary.steps,
        summary.final_time,
        summary.records.len(),
        summary.out_dir.join(CSV_FILE).display()
    );
    if let (Some(first), Some(last)) = (summary.records.first(), summary.records.last()) {
        println!("energy: {} -> {}", first.e, last.e);
    }
    for report in &summary.reports {
        println!("{}", report.summary_line());
    }
}
