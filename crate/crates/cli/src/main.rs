use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use herald_cli::commands::{self, read_checkpoint};
use herald_cli::config::{self, default_grid, LoadedConfig};
use herald_cli::{CliError, THREADS_ENV};
use herald_core::circuit::MeasurementPattern;
use herald_core::noise::LossSetup;
use herald_core::search::Checkpoint;
use herald_core::targets::TargetSpec;
use herald_core::wigner::GridSpec;

#[derive(Parser)]
#[command(name = "herald", version, about = "Optimize and analyse heralded Gaussian photonic circuits")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Input shared by the checkpoint-driven subcommands.
#[derive(Args)]
struct Source {
    /// Checkpoint written by `optimize`.
    #[arg(conflicts_with = "config")]
    checkpoint: Option<PathBuf>,
    /// Run configuration (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Write output here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the basin-hopping search and write report.json and checkpoint.json.
    Optimize {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides `output_dir` of the config.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Seed restart 0 from this checkpoint's parameters.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Re-simulate a checkpoint at a larger cutoff and report per-pattern infidelities.
    Validate {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        cutoff: Option<usize>,
    },
    /// Photon-loss sweep of every assigned pattern, as CSV.
    LossSweep {
        #[command(flatten)]
        source: Source,
        /// Comma-separated transmissivities.
        #[arg(long, value_delimiter = ',')]
        eta: Option<Vec<f64>>,
        /// Density-matrix cutoff.
        #[arg(long)]
        cutoff: Option<usize>,
    },
    /// Wigner function of a heralded state on a square grid, as CSV.
    Wigner {
        #[command(flatten)]
        source: Source,
        /// Comma-separated ancilla counts.
        #[arg(long, value_delimiter = ',')]
        pattern: Option<Vec<usize>>,
        #[arg(long)]
        half_width: Option<f64>,
        #[arg(long)]
        points: Option<usize>,
        /// Rotate by the best angle against the assigned target.
        #[arg(long)]
        align: bool,
    },
    /// Target amplitudes and parity diagnostics, as JSON.
    Targets {
        #[command(flatten)]
        source: Source,
        /// A single target description (JSON).
        #[arg(long, conflicts_with_all = ["checkpoint", "config"])]
        spec: Option<String>,
        #[arg(long)]
        cutoff: Option<usize>,
    },
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var(THREADS_ENV) else { return Ok(()) };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| CliError::Config(format!("{THREADS_ENV}={raw:?} is not a thread count")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("{THREADS_ENV}: {e}")))
}

fn emit(text: &str, out: Option<&Path>) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display()))),
        None => std::io::stdout().write_all(text.as_bytes()).map_err(|e| CliError::Io(e.to_string())),
    }
}

fn load_source(source: &Source) -> Result<(Option<LoadedConfig>, PathBuf), CliError> {
    match (&source.checkpoint, &source.config) {
        (Some(path), None) => Ok((None, path.clone())),
        (None, Some(cfg_path)) => {
            let loaded = config::load(cfg_path)?;
            let ckpt = loaded
                .config
                .checkpoint
                .clone()
                .ok_or_else(|| CliError::Config(format!("{}: missing `checkpoint`", cfg_path.display())))?;
            Ok((Some(loaded), ckpt))
        }
        _ => Err(CliError::Config("give a checkpoint path or --config".into())),
    }
}

fn checkpoint_source(source: &Source) -> Result<(Option<LoadedConfig>, Vec<u8>, Checkpoint), CliError> {
    let (loaded, path) = load_source(source)?;
    let (bytes, ckpt) = read_checkpoint(&path)?;
    Ok((loaded, bytes, ckpt))
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    match cli.command {
        Command::Optimize { config, out_dir, resume } => {
            let loaded = config::load(&config)?;
            let out = commands::optimize(&loaded.config, &loaded.bytes, out_dir.as_deref(), resume.as_deref())?;
            for row in &out.report.patterns {
                eprintln!(
                    "{} -> {}: p = {:.4}%, F = {:.6}, phi* = {:.4}",
                    row.pattern,
                    row.target_name,
                    100.0 * row.probability,
                    row.fidelity,
                    row.phi_star
                );
            }
            eprintln!("report: {}", out.report_path.display());
            eprintln!("checkpoint: {}", out.checkpoint_path.display());
            emit(&commands::optimize_text(&out), None)
        }
        Command::Validate { source, cutoff } => {
            let (loaded, bytes, ckpt) = checkpoint_source(&source)?;
            let high = cutoff.or(loaded.map(|l| l.config.validate.cutoff)).unwrap_or(50);
            emit(&commands::validate(&bytes, &ckpt, high)?, source.out.as_deref())
        }
        Command::LossSweep { source, eta, cutoff } => {
            let (loaded, _, ckpt) = checkpoint_source(&source)?;
            let section = loaded.map(|l| l.config.loss_sweep).unwrap_or_default();
            let etas = eta.unwrap_or(section.etas);
            let setup = LossSetup {
                cutoff: cutoff.unwrap_or(section.setup.cutoff),
                source_cutoff: section.setup.source_cutoff.max(ckpt.cutoff),
                ..section.setup
            };
            emit(&commands::loss_sweep(&ckpt, &etas, &setup)?, source.out.as_deref())
        }
        Command::Wigner { source, pattern, half_width, points, align } => {
            let (loaded, _, ckpt) = checkpoint_source(&source)?;
            let section = loaded.and_then(|l| l.config.wigner);
            let pattern = pattern
                .map(MeasurementPattern)
                .or_else(|| section.as_ref().map(|s| s.pattern.clone()))
                .ok_or_else(|| CliError::Config("no heralding pattern given".into()))?;
            let mut grid = section.as_ref().map_or_else(default_grid, |s| s.grid);
            if half_width.is_some() || points.is_some() {
                let base = default_grid();
                grid = GridSpec::square(half_width.unwrap_or(base.x_max), points.unwrap_or(base.x_points));
            }
            let align = align || section.is_some_and(|s| s.align);
            emit(&commands::wigner_csv(&ckpt, &pattern, &grid, align)?, source.out.as_deref())
        }
        Command::Targets { source, spec, cutoff } => {
            let (specs, default_cutoff, hbar) = if let Some(json) = spec {
                let spec: TargetSpec =
                    serde_json::from_str(&json).map_err(|e| CliError::Config(format!("--spec: {e}")))?;
                (vec![spec], 30, 1.0)
            } else if let Some(cfg_path) = &source.config {
                let c = config::load(cfg_path)?.config;
                (c.targets, c.circuit.cutoff, c.hbar)
            } else if let Some(path) = &source.checkpoint {
                let (_, ckpt) = read_checkpoint(path)?;
                (ckpt.targets, ckpt.cutoff, ckpt.hbar)
            } else {
                return Err(CliError::Config("give a checkpoint path, --config or --spec".into()));
            };
            emit(&commands::targets(&specs, cutoff.unwrap_or(default_cutoff), hbar)?, source.out.as_deref())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("herald: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
