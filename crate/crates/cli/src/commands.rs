//! Subcommand implementations. Each returns the text it would print.

use std::path::{Path, PathBuf};
use std::time::Instant;

use herald_core::circuit::{build_state, herald, CircuitParams, MeasurementPattern};
use herald_core::fock::{Conventions, FockState, C64};
use herald_core::noise::{lossless_dm, lossy_point, LossSetup};
use herald_core::objective::{rotation_fidelity_raw, score_patterns, Assignment};
use herald_core::search::{
    classify_rotation, run_beam, run_fixed, truncation_infidelity, Checkpoint, RotationClass,
    SearchMode, DEFAULT_ROTATION_TOLERANCE,
};
use herald_core::targets::{TargetSpec, TargetState};
use herald_core::wigner::{wigner, GridSpec};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn read_checkpoint(path: &Path) -> Result<(Vec<u8>, Checkpoint), CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let ckpt: Checkpoint = serde_json::from_slice(&bytes)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let expected = CircuitParams::from_vector(ckpt.num_modes, &ckpt.vector)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    if expected != ckpt.params {
        return Err(CliError::Config(format!("{}: params and vector disagree", path.display())));
    }
    Ok((bytes, ckpt))
}

fn build_targets(specs: &[TargetSpec], cutoff: usize, hbar: f64) -> Result<Vec<TargetState>, CliError> {
    let conv = Conventions { hbar };
    specs.iter().map(|s| s.build(cutoff, conv).map_err(CliError::from)).collect()
}

/// One reported heralding pattern.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternRow {
    pub pattern: MeasurementPattern,
    pub target: usize,
    pub target_name: String,
    pub probability: f64,
    pub fidelity: f64,
    pub phi_star: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeReport {
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    pub mode: String,
    pub num_modes: usize,
    pub cutoff: usize,
    pub params: CircuitParams,
    pub vector: Vec<f64>,
    pub patterns: Vec<PatternRow>,
    pub aggregate_probability: f64,
    pub loss: f64,
    pub leakage: f64,
    pub restart_losses: Vec<f64>,
    pub evaluations: usize,
    /// Present when some target is heralded by two or more patterns.
    pub rotation: Option<RotationClass>,
    pub beam_set: Vec<MeasurementPattern>,
    pub wall_time_seconds: f64,
}

pub struct OptimizeOutput {
    pub report: OptimizeReport,
    pub checkpoint: Checkpoint,
    pub report_path: PathBuf,
    pub checkpoint_path: PathBuf,
}

pub fn optimize(
    cfg: &RunConfig,
    config_bytes: &[u8],
    out_dir: Option<&Path>,
    resume: Option<&Path>,
) -> Result<OptimizeOutput, CliError> {
    let started = Instant::now();
    let opt = cfg.opt_config()?;
    let targets = build_targets(&cfg.targets, opt.circuit.cutoff, cfg.hbar)?;
    let x0 = match resume {
        Some(path) => {
            let (_, ckpt) = read_checkpoint(path)?;
            if ckpt.num_modes != opt.circuit.num_modes {
                return Err(CliError::Config(format!(
                    "checkpoint has {} modes, config has {}",
                    ckpt.num_modes, opt.circuit.num_modes
                )));
            }
            Some(ckpt.vector)
        }
        None => None,
    };
    let result = match opt.mode {
        SearchMode::Fixed { .. } => run_fixed(&targets, &opt, x0.as_deref())?,
        SearchMode::Beam { .. } => run_beam(&targets, &opt, x0.as_deref())?,
    };
    if !result.loss.is_finite() {
        return Err(CliError::Numeric("optimized loss is not finite".into()));
    }
    let assignments: Vec<Assignment> = match &opt.mode {
        SearchMode::Fixed { assignments } => assignments.clone(),
        SearchMode::Beam { .. } => result
            .scores
            .iter()
            .map(|s| Assignment { pattern: s.pattern.clone(), target: s.target })
            .collect(),
    };
    let rotation = classify_rotation(&result.scores, &targets, DEFAULT_ROTATION_TOLERANCE).ok();
    let patterns = result
        .scores
        .iter()
        .map(|s| PatternRow {
            pattern: s.pattern.clone(),
            target: s.target,
            target_name: cfg.targets[s.target].short_name(),
            probability: s.probability,
            fidelity: s.fidelity,
            phi_star: s.phi_star,
        })
        .collect();
    let checkpoint = Checkpoint {
        num_modes: opt.circuit.num_modes,
        cutoff: opt.circuit.cutoff,
        hbar: cfg.hbar,
        targets: cfg.targets.clone(),
        assignments,
        params: result.params.clone(),
        vector: result.vector.clone(),
        loss: result.loss,
        seed: result.seed,
        iteration: opt.basin.hops,
    };
    let report = OptimizeReport {
        version: VERSION.into(),
        config_hash: sha256_hex(config_bytes),
        seed: result.seed,
        mode: match opt.mode {
            SearchMode::Fixed { .. } => "fixed".into(),
            SearchMode::Beam { .. } => "beam".into(),
        },
        num_modes: opt.circuit.num_modes,
        cutoff: opt.circuit.cutoff,
        params: result.params,
        vector: result.vector,
        patterns,
        aggregate_probability: result.aggregate_probability,
        loss: result.loss,
        leakage: result.leakage,
        restart_losses: result.restart_losses,
        evaluations: result.evaluations,
        rotation,
        beam_set: result.beam_set,
        wall_time_seconds: started.elapsed().as_secs_f64(),
    };
    let dir = out_dir.map(Path::to_path_buf).or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| ".".into());
    std::fs::create_dir_all(&dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let report_path = dir.join("report.json");
    let checkpoint_path = dir.join("checkpoint.json");
    write_file(&report_path, &to_json(&report))?;
    write_file(&checkpoint_path, &to_json(&checkpoint))?;
    Ok(OptimizeOutput { report, checkpoint, report_path, checkpoint_path })
}

pub fn optimize_text(out: &OptimizeOutput) -> String {
    to_json(&out.report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationRow {
    pub pattern: MeasurementPattern,
    pub target: usize,
    /// Rescored at the checkpoint cutoff.
    pub probability: f64,
    pub fidelity: f64,
    pub phi_star: f64,
    pub infidelity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub version: String,
    pub checkpoint_hash: String,
    pub seed: u64,
    pub cutoff: usize,
    pub validation_cutoff: usize,
    pub patterns: Vec<ValidationRow>,
    pub max_infidelity: f64,
}

pub fn validate(ckpt_bytes: &[u8], ckpt: &Checkpoint, high: usize) -> Result<String, CliError> {
    if high < ckpt.cutoff {
        return Err(CliError::Config(format!(
            "validation cutoff {high} below checkpoint cutoff {}",
            ckpt.cutoff
        )));
    }
    let targets = build_targets(&ckpt.targets, ckpt.cutoff, ckpt.hbar)?;
    let (scores, _) = score_patterns(&ckpt.params, &ckpt.assignments, &targets, ckpt.cutoff, 0.0)?;
    let mut rows = Vec::with_capacity(scores.len());
    for s in scores {
        let infidelity = truncation_infidelity(&ckpt.params, &s.pattern, ckpt.cutoff, high, 0.0)?;
        rows.push(ValidationRow {
            pattern: s.pattern,
            target: s.target,
            probability: s.probability,
            fidelity: s.fidelity,
            phi_star: s.phi_star,
            infidelity,
        });
    }
    let max_infidelity = rows.iter().map(|r| r.infidelity).fold(0.0, f64::max);
    Ok(to_json(&ValidationReport {
        version: VERSION.into(),
        checkpoint_hash: sha256_hex(ckpt_bytes),
        seed: ckpt.seed,
        cutoff: ckpt.cutoff,
        validation_cutoff: high,
        patterns: rows,
        max_infidelity,
    }))
}

fn csv_text(header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<String, CliError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(header).map_err(|e| CliError::Io(e.to_string()))?;
    for r in rows {
        w.write_record(&r).map_err(|e| CliError::Io(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv fields are UTF-8"))
}

pub fn loss_sweep(ckpt: &Checkpoint, etas: &[f64], setup: &LossSetup) -> Result<String, CliError> {
    if etas.is_empty() {
        return Err(CliError::Config("empty transmissivity list".into()));
    }
    if let Some(bad) = etas.iter().find(|e| !(0.0..=1.0).contains(*e)) {
        return Err(CliError::Config(format!("transmissivity {bad} outside [0, 1]")));
    }
    let targets = build_targets(&ckpt.targets, ckpt.cutoff, ckpt.hbar)?;
    let dm = lossless_dm(&ckpt.params, setup)?;
    let mut rows = Vec::new();
    for a in &ckpt.assignments {
        for &eta in etas {
            let pt = lossy_point(&dm, &a.pattern, &targets[a.target], eta, setup)?;
            rows.push(vec![
                ckpt.targets[a.target].short_name(),
                a.pattern.to_string(),
                format!("{eta}"),
                format!("{:.12e}", pt.probability),
                format!("{:.12e}", pt.fidelity),
                format!("{:.12e}", pt.phi_star),
            ]);
        }
    }
    csv_text(&["target", "pattern", "eta", "probability", "fidelity", "phi_star"], rows.into_iter())
}

/// Heralds `pattern`, optionally aligns it with its assigned target, and tabulates `W`.
pub fn wigner_csv(
    ckpt: &Checkpoint,
    pattern: &MeasurementPattern,
    grid: &GridSpec,
    align: bool,
) -> Result<String, CliError> {
    let state = build_state(&ckpt.params, ckpt.cutoff)?;
    let out = herald(&state, pattern, 0.0)?.output;
    let out = if align {
        let a = ckpt
            .assignments
            .iter()
            .find(|a| &a.pattern == pattern)
            .ok_or_else(|| CliError::Config(format!("pattern {pattern} has no assigned target to align with")))?;
        let target = &build_targets(&ckpt.targets[a.target..=a.target], ckpt.cutoff, ckpt.hbar)?[0];
        let (_, phi) = rotation_fidelity_raw(target.amplitudes(), out.amplitudes());
        let amps: Vec<C64> = out
            .amplitudes()
            .iter()
            .enumerate()
            .map(|(n, z)| z * C64::from_polar(1.0, n as f64 * phi))
            .collect();
        FockState::single_mode(amps)?
    } else {
        out
    };
    let w = wigner(&out, grid, Conventions { hbar: ckpt.hbar })?;
    let mut rows = Vec::with_capacity(w.x_axis.len() * w.p_axis.len());
    for (i, x) in w.x_axis.iter().enumerate() {
        for (j, p) in w.p_axis.iter().enumerate() {
            rows.push(vec![format!("{x}"), format!("{p}"), format!("{:.12e}", w.values[(i, j)])]);
        }
    }
    csv_text(&["x", "p", "W"], rows.into_iter())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSummary {
    pub name: String,
    pub spec: TargetSpec,
    pub cutoff: usize,
    /// `[re, im]` per Fock level.
    pub amplitudes: Vec<[f64; 2]>,
    pub norm: f64,
    pub mean_photon_number: f64,
    pub even_weight: f64,
    pub odd_weight: f64,
    /// `even`, `odd` or `mixed` at 1e−12.
    pub parity: String,
}

pub fn targets(specs: &[TargetSpec], cutoff: usize, hbar: f64) -> Result<String, CliError> {
    if specs.is_empty() {
        return Err(CliError::Config("no targets given".into()));
    }
    let built = build_targets(specs, cutoff, hbar)?;
    let summaries: Vec<TargetSummary> = specs
        .iter()
        .zip(&built)
        .map(|(spec, t)| {
            let amps = t.amplitudes();
            let weight = |parity: usize| -> f64 {
                amps.iter().enumerate().filter(|(n, _)| n % 2 == parity).map(|(_, z)| z.norm_sqr()).sum()
            };
            let (even_weight, odd_weight) = (weight(0), weight(1));
            let parity = if odd_weight < 1e-12 {
                "even"
            } else if even_weight < 1e-12 {
                "odd"
            } else {
                "mixed"
            };
            TargetSummary {
                name: spec.short_name(),
                spec: spec.clone(),
                cutoff,
                amplitudes: t.to_pairs(),
                norm: amps.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt(),
                mean_photon_number: amps.iter().enumerate().map(|(n, z)| n as f64 * z.norm_sqr()).sum(),
                even_weight,
                odd_weight,
                parity: parity.into(),
            }
        })
        .collect();
    Ok(to_json(&summaries))
}
