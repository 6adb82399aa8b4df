//! Command-line driver.
//!
//! Exit codes: 0 on success, 2 on configuration errors, 3 on solver errors.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mstransport_core::harness::{assemble_only, run_experiment, RunOptions, RunReport};
use mstransport_core::{Error, ExperimentConfig, ExperimentKind};

#[derive(Parser)]
#[command(
    name = "mstransport",
    about = "Multiscale transport solver: asymptotic-preserving even-odd Galerkin stepper \
             with multiscale finite element bases",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory for the report and CSV snapshots.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Matrix cache directory.
    #[arg(long)]
    cache: Option<PathBuf>,
    /// Worker pool size for sweep members.
    #[arg(long)]
    threads: Option<usize>,
    /// Ignore the matrix cache even when --cache is given.
    #[arg(long)]
    no_cache: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Build matrices and populate the cache without solving.
    Assemble(CommonArgs),
    /// Run one solve and export solution snapshots.
    Solve(CommonArgs),
    /// Run a parameter sweep (eps, delta, or resolution consistency).
    Sweep(CommonArgs),
    /// Compare the symmetric and asymmetric formulations.
    Compare(CommonArgs),
}

fn kind_allowed(command: &Command, kind: ExperimentKind) -> bool {
    match command {
        Command::Assemble(_) => true,
        Command::Solve(_) => matches!(kind, ExperimentKind::SingleRun),
        Command::Sweep(_) => matches!(
            kind,
            ExperimentKind::EpsSweep
                | ExperimentKind::DeltaSweep
                | ExperimentKind::ResolutionConsistency
        ),
        Command::Compare(_) => matches!(kind, ExperimentKind::FormulationCompare),
    }
}

/// Load and check the configuration; any failure here is a configuration
/// error (exit code 2).
fn load_config(cli: &Cli) -> Result<(ExperimentConfig, RunOptions), Error> {
    let args = match &cli.command {
        Command::Assemble(a) | Command::Solve(a) | Command::Sweep(a) | Command::Compare(a) => a,
    };
    let cfg = ExperimentConfig::from_file(&args.config)?;
    if !kind_allowed(&cli.command, cfg.kind) {
        return Err(Error::Config(format!(
            "experiment kind {:?} does not match this subcommand",
            cfg.kind
        )));
    }
    let opts = RunOptions {
        out_dir: args.out.clone(),
        cache_dir: if args.no_cache { None } else { args.cache.clone() },
        threads: args.threads,
        write_snapshots: args.out.is_some(),
    };
    Ok((cfg, opts))
}

fn run(cli: &Cli, cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunReport, Error> {
    match cli.command {
        Command::Assemble(_) => assemble_only(cfg, opts),
        _ => run_experiment(cfg, opts),
    }
}

fn print_report(report: &RunReport) {
    for warning in &report.warnings {
        eprintln!("warning: {warning}");
    }
    for run in &report.runs {
        let params: Vec<String> = run
            .params
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect();
        let errors: Vec<String> = run
            .errors
            .iter()
            .map(|(k, v)| format!("{k}={v:.6e}"))
            .collect();
        println!("run [{}] {}", params.join(", "), errors.join(", "));
    }
    for rate in &report.rates {
        println!(
            "rate {}: slope {:.4} (fit residual {:.2e})",
            rate.name, rate.slope, rate.residual
        );
    }
    if report.cache_hits + report.cache_misses > 0 {
        println!(
            "cache: {} hits, {} misses",
            report.cache_hits, report.cache_misses
        );
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (cfg, opts) = match load_config(&cli) {
        Ok(loaded) => loaded,
        Err(err) => {
            eprintln!("error: {err}");
            return ExitCode::from(2);
        }
    };
    match run(&cli, &cfg, &opts) {
        Ok(report) => {
            print_report(&report);
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                Error::Config(_) | Error::InvalidMedia { .. } => ExitCode::from(2),
                _ => ExitCode::from(3),
            }
        }
    }
}
