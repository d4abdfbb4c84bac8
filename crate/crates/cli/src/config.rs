//! Run configuration documents.

use std::path::{Path, PathBuf};

use herald_core::circuit::MeasurementPattern;
use herald_core::noise::LossSetup;
use herald_core::objective::LossConfig;
use herald_core::optim::BasinConfig;
use herald_core::search::{CircuitSpec, OptConfig, SearchMode};
use herald_core::targets::TargetSpec;
use herald_core::wigner::GridSpec;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

fn default_hbar() -> f64 {
    1.0
}

/// One JSON document drives every subcommand; each reads the sections it needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub targets: Vec<TargetSpec>,
    #[serde(default = "default_hbar")]
    pub hbar: f64,
    #[serde(default)]
    pub circuit: CircuitSpec,
    /// Required by `optimize`.
    #[serde(default)]
    pub mode: Option<SearchMode>,
    #[serde(default)]
    pub loss: LossConfig,
    #[serde(default)]
    pub basin: BasinConfig,
    /// Where `optimize` writes its report and checkpoint.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Checkpoint consumed by `validate`, `loss-sweep` and `wigner`.
    #[serde(default)]
    pub checkpoint: Option<PathBuf>,
    #[serde(default)]
    pub validate: ValidateSection,
    #[serde(default)]
    pub loss_sweep: LossSweepSection,
    #[serde(default)]
    pub wigner: Option<WignerSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidateSection {
    pub cutoff: usize,
}

impl Default for ValidateSection {
    fn default() -> Self {
        Self { cutoff: 50 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossSweepSection {
    /// Transmissivities; loss is `1 − η`.
    pub etas: Vec<f64>,
    pub setup: LossSetup,
}

impl Default for LossSweepSection {
    fn default() -> Self {
        Self { etas: vec![1.0, 0.99, 0.95, 0.9], setup: LossSetup::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WignerSection {
    pub pattern: MeasurementPattern,
    #[serde(default = "default_grid")]
    pub grid: GridSpec,
    /// Rotate the heralded state by its best angle against the assigned target.
    #[serde(default)]
    pub align: bool,
}

pub fn default_grid() -> GridSpec {
    GridSpec::square(5.0, 101)
}

/// Raw bytes and parsed document, with relative paths resolved against the file's directory.
pub struct LoadedConfig {
    pub bytes: Vec<u8>,
    pub config: RunConfig,
}

pub fn load(path: &Path) -> Result<LoadedConfig, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let mut config: RunConfig = serde_json::from_slice(&bytes)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    for p in [&mut config.output_dir, &mut config.checkpoint].into_iter().flatten() {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    }
    if !(config.hbar.is_finite() && config.hbar > 0.0) {
        return Err(CliError::Config(format!("hbar must be positive, got {}", config.hbar)));
    }
    Ok(LoadedConfig { bytes, config })
}

impl RunConfig {
    pub fn opt_config(&self) -> Result<OptConfig, CliError> {
        let mode = self.mode.clone().ok_or_else(|| CliError::Config("missing `mode` section".into()))?;
        let cfg = OptConfig { circuit: self.circuit, mode, loss: self.loss, basin: self.basin.clone() };
        cfg.validate(self.targets.len()).map_err(|e| CliError::Config(e.to_string()))?;
        Ok(cfg)
    }
}
