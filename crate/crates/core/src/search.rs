//! Pattern discovery, global optimization runs and rotation classification.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::circuit::{
    ancilla_marginals, build_state, herald, rectangular_mesh, truncation_leakage, CircuitParams, Marginals,
    MeasurementPattern, DEFAULT_HERALD_EPSILON,
};
use crate::error::{Error, Result};
use crate::fock::{C64, ROTATION_GRID};
use crate::objective::{
    loss_beam, loss_fixed, score_best_target, score_state, Assignment, LossConfig, PatternScore,
};
use crate::optim::{basin_hop, BasinConfig, Bound};
use crate::targets::{TargetSpec, TargetState};

/// The 12 dB source squeezing cap, `ln(10^{12/20})`.
pub const MAX_SQUEEZING: f64 = 1.3816;

/// The `B` most probable ancilla patterns, most probable first; equal probabilities
/// keep lexicographic order. Patterns with zero probability are never returned.
pub fn top_b_patterns(marginals: &Marginals, b: usize) -> Vec<MeasurementPattern> {
    let probs = marginals.probabilities();
    let mut idx: Vec<usize> = (0..probs.len()).filter(|&i| probs[i] > 0.0).collect();
    // flat index order is lexicographic pattern order
    idx.sort_by(|&a, &c| probs[c].total_cmp(&probs[a]).then(a.cmp(&c)));
    idx.truncate(b);
    idx.into_iter().map(|i| marginals.pattern_at(i)).collect()
}

/// Device shape and parameter bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CircuitSpec {
    pub num_modes: usize,
    pub cutoff: usize,
    pub max_squeezing: f64,
    /// Bound on `|Re α|` and `|Im α|`; zero pins all displacements at the origin.
    pub max_displacement: f64,
    /// Optimize the output phase rotations (they leave every loss unchanged).
    pub free_output_phases: bool,
    pub herald_epsilon: f64,
}

impl Default for CircuitSpec {
    fn default() -> Self {
        Self {
            num_modes: 2,
            cutoff: 30,
            max_squeezing: MAX_SQUEEZING,
            max_displacement: 0.0,
            free_output_phases: false,
            herald_epsilon: DEFAULT_HERALD_EPSILON,
        }
    }
}

impl CircuitSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_modes < 2 {
            return Err(Error::InvalidParameter("a heralded device needs at least two modes".into()));
        }
        if self.cutoff < 2 {
            return Err(Error::CutoffTooSmall(self.cutoff));
        }
        let finite = [self.max_squeezing, self.max_displacement, self.herald_epsilon];
        if finite.iter().any(|v| !v.is_finite() || *v < 0.0) || self.max_squeezing == 0.0 {
            return Err(Error::InvalidParameter("bounds must be finite and non-negative".into()));
        }
        Ok(())
    }

    /// Bounds in the flat layout of [`CircuitParams::to_vector`].
    pub fn bounds(&self) -> Vec<Bound> {
        let n = self.num_modes;
        let phase = Bound::Periodic { period: TAU };
        let mut b = Vec::with_capacity(CircuitParams::vector_len(n));
        b.extend(std::iter::repeat(Bound::Interval { lo: 0.0, hi: self.max_squeezing }).take(n));
        b.extend(std::iter::repeat(phase).take(n));
        let disp = if self.max_displacement > 0.0 {
            Bound::Interval { lo: -self.max_displacement, hi: self.max_displacement }
        } else {
            Bound::Fixed { value: 0.0 }
        };
        b.extend(std::iter::repeat(disp).take(2 * n));
        b.extend(std::iter::repeat(phase).take(2 * rectangular_mesh(n).len()));
        let out = if self.free_output_phases { phase } else { Bound::Fixed { value: 0.0 } };
        b.extend(std::iter::repeat(out).take(n));
        b
    }
}

/// Which loss drives the search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SearchMode {
    /// Fixed pattern-to-target assignment scored by the fixed-pattern loss.
    Fixed { assignments: Vec<Assignment> },
    /// Top-`width` patterns rediscovered at every evaluation, scored by the beam loss.
    Beam {
        width: usize,
        /// Discovered patterns at or above this fidelity are reported.
        #[serde(default = "default_report_fidelity")]
        report_fidelity: f64,
    },
}

fn default_report_fidelity() -> f64 {
    0.97
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptConfig {
    #[serde(default)]
    pub circuit: CircuitSpec,
    pub mode: SearchMode,
    #[serde(default)]
    pub loss: LossConfig,
    #[serde(default)]
    pub basin: BasinConfig,
}

impl OptConfig {
    pub fn validate(&self, num_targets: usize) -> Result<()> {
        self.circuit.validate()?;
        self.loss.validate()?;
        if num_targets == 0 {
            return Err(Error::InvalidParameter("no targets".into()));
        }
        match &self.mode {
            SearchMode::Fixed { assignments } => {
                if assignments.is_empty() {
                    return Err(Error::NotEnoughPatterns("fixed mode needs at least one pattern".into()));
                }
                for a in assignments {
                    if a.target >= num_targets {
                        return Err(Error::InvalidParameter(format!(
                            "pattern {} assigned to missing target {}",
                            a.pattern, a.target
                        )));
                    }
                    if a.pattern.0.len() + 1 != self.circuit.num_modes {
                        return Err(Error::InvalidPattern {
                            pattern: a.pattern.0.clone(),
                            reason: format!("expected {} ancilla counts", self.circuit.num_modes - 1),
                        });
                    }
                    if a.pattern.0.iter().any(|&c| c >= self.circuit.cutoff) {
                        return Err(Error::InvalidPattern {
                            pattern: a.pattern.0.clone(),
                            reason: format!("count at or above cutoff {}", self.circuit.cutoff),
                        });
                    }
                }
            }
            SearchMode::Beam { width, report_fidelity } => {
                if *width == 0 {
                    return Err(Error::InvalidParameter("beam width must be at least 1".into()));
                }
                if !(0.0..=1.0).contains(report_fidelity) {
                    return Err(Error::InvalidParameter("report fidelity outside [0, 1]".into()));
                }
            }
        }
        let s = &self.basin;
        if !(s.step_scale.is_finite() && s.step_scale >= 0.0 && s.temperature.is_finite() && s.temperature >= 0.0) {
            return Err(Error::InvalidParameter("basin step scale and temperature must be finite".into()));
        }
        if !(s.local.gradient_step > 0.0 && s.local.gradient_step.is_finite()) {
            return Err(Error::InvalidParameter("gradient step must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptResult {
    pub params: CircuitParams,
    pub vector: Vec<f64>,
    /// Reported patterns: the fixed assignment, or the qualifying discovered patterns.
    pub scores: Vec<PatternScore>,
    /// Sum of the reported pattern probabilities.
    pub aggregate_probability: f64,
    pub loss: f64,
    pub leakage: f64,
    /// Running global-best loss.
    pub trace: Vec<f64>,
    /// Best loss of each restart, in restart order.
    pub restart_losses: Vec<f64>,
    pub seed: u64,
    pub evaluations: usize,
    /// Top-B pattern set at the final parameters (beam mode only).
    pub beam_set: Vec<MeasurementPattern>,
}

/// Loss of one parameter vector under `cfg`, together with its scores and leakage.
pub fn evaluate(
    vector: &[f64],
    targets: &[TargetState],
    cfg: &OptConfig,
) -> Result<(f64, Vec<PatternScore>, f64, Vec<MeasurementPattern>)> {
    let spec = &cfg.circuit;
    let params = CircuitParams::from_vector(spec.num_modes, vector)?;
    let state = build_state(&params, spec.cutoff)?;
    let leakage = truncation_leakage(&state);
    match &cfg.mode {
        SearchMode::Fixed { assignments } => {
            let scores = score_state(&state, assignments, targets, spec.herald_epsilon)?;
            Ok((loss_fixed(&scores, leakage, &cfg.loss), scores, leakage, Vec::new()))
        }
        SearchMode::Beam { width, .. } => {
            let marginals = ancilla_marginals(&state)?;
            let set = top_b_patterns(&marginals, *width);
            let scores = set
                .iter()
                .map(|p| score_best_target(&state, p, targets, spec.herald_epsilon))
                .collect::<Result<Vec<_>>>()?;
            let loss = if scores.is_empty() {
                // nothing detectable: sit on the degenerate plateau
                -cfg.loss.delta.ln() + cfg.loss.truncation_weight * leakage
            } else {
                loss_beam(&scores, leakage, &cfg.loss)
            };
            Ok((loss, scores, leakage, set))
        }
    }
}

fn run(targets: &[TargetState], cfg: &OptConfig, x0: Option<&[f64]>) -> Result<OptResult> {
    cfg.validate(targets.len())?;
    let targets: Vec<TargetState> = targets
        .iter()
        .map(|t| t.with_cutoff(cfg.circuit.cutoff))
        .collect::<Result<_>>()?;
    let bounds = cfg.circuit.bounds();
    let objective = |x: &[f64]| match evaluate(x, &targets, cfg) {
        Ok((loss, ..)) => loss,
        Err(_) => f64::NAN,
    };
    let found = basin_hop(&objective, &bounds, x0, &cfg.basin)?;
    let (loss, mut scores, leakage, beam_set) = evaluate(&found.x, &targets, cfg)?;
    if let SearchMode::Beam { report_fidelity, .. } = cfg.mode {
        scores.retain(|s| s.fidelity >= report_fidelity);
    }
    let aggregate_probability = scores.iter().map(|s| s.probability).sum();
    Ok(OptResult {
        params: CircuitParams::from_vector(cfg.circuit.num_modes, &found.x)?,
        vector: found.x,
        scores,
        aggregate_probability,
        loss,
        leakage,
        trace: found.trace,
        restart_losses: found.restarts.iter().map(|r| r.best).collect(),
        seed: cfg.basin.seed,
        evaluations: found.evaluations,
        beam_set,
    })
}

/// Basin-hopping over the fixed-pattern loss. `x0`, when given, seeds restart 0.
pub fn run_fixed(targets: &[TargetState], cfg: &OptConfig, x0: Option<&[f64]>) -> Result<OptResult> {
    if !matches!(cfg.mode, SearchMode::Fixed { .. }) {
        return Err(Error::InvalidParameter("run_fixed needs a fixed-mode configuration".into()));
    }
    run(targets, cfg, x0)
}

/// Basin-hopping over the beam-search loss with best-over-targets matching.
pub fn run_beam(targets: &[TargetState], cfg: &OptConfig, x0: Option<&[f64]>) -> Result<OptResult> {
    if !matches!(cfg.mode, SearchMode::Beam { .. }) {
        return Err(Error::InvalidParameter("run_beam needs a beam-mode configuration".into()));
    }
    run(targets, cfg, x0)
}

/// Default circular tolerance of [`classify_rotation`]: two grid steps.
pub const DEFAULT_ROTATION_TOLERANCE: f64 = 2.0 * TAU / ROTATION_GRID as f64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RotationClass {
    Invariant,
    Variant,
}

/// Period of the fidelity landscape of `target` under phase rotation: `2π/g` with `g`
/// the gcd of the gaps between occupied Fock levels.
pub fn rotation_period(target: &TargetState) -> f64 {
    let support: Vec<usize> = target
        .amplitudes()
        .iter()
        .enumerate()
        .filter(|(_, a)| a.norm() > 1e-12)
        .map(|(n, _)| n)
        .collect();
    let g = support.windows(2).fold(0, |g, w| gcd(g, w[1] - w[0]));
    if g == 0 {
        TAU
    } else {
        TAU / g as f64
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn circular_distance(a: f64, b: f64, period: f64) -> f64 {
    let d = (a - b).rem_euclid(period);
    d.min(period - d)
}

/// Invariant when every group of patterns sharing a target reports the same best
/// rotation within `tol`, measured modulo that target's rotational symmetry.
pub fn classify_rotation(
    scores: &[PatternScore],
    targets: &[TargetState],
    tol: f64,
) -> Result<RotationClass> {
    let mut comparable = false;
    for (t, target) in targets.iter().enumerate() {
        let phis: Vec<f64> = scores.iter().filter(|s| s.target == t).map(|s| s.phi_star).collect();
        if phis.len() < 2 {
            continue;
        }
        comparable = true;
        let period = rotation_period(target);
        for i in 0..phis.len() {
            for j in i + 1..phis.len() {
                if circular_distance(phis[i], phis[j], period) > tol {
                    return Ok(RotationClass::Variant);
                }
            }
        }
    }
    if comparable {
        Ok(RotationClass::Invariant)
    } else {
        Err(Error::NotEnoughPatterns("no target has two or more heralding patterns".into()))
    }
}

/// `1 − |⟨ψ_low|ψ_high⟩|²` between the states heralded by `pattern` when the device is
/// simulated at `low` and at `high`, the low-cutoff state zero-padded.
pub fn truncation_infidelity(
    params: &CircuitParams,
    pattern: &MeasurementPattern,
    low: usize,
    high: usize,
    epsilon: f64,
) -> Result<f64> {
    if high < low {
        return Err(Error::InvalidParameter(format!("validation cutoff {high} below {low}")));
    }
    let lo = herald(&build_state(params, low)?, pattern, epsilon)?.output;
    let hi = herald(&build_state(params, high)?, pattern, epsilon)?.output;
    let overlap: C64 = lo.amplitudes().iter().zip(hi.amplitudes()).map(|(a, b)| a.conj() * b).sum();
    Ok((1.0 - overlap.norm_sqr()).max(0.0))
}

/// Everything needed to rescore or resume a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub num_modes: usize,
    pub cutoff: usize,
    pub hbar: f64,
    pub targets: Vec<TargetSpec>,
    pub assignments: Vec<Assignment>,
    pub params: CircuitParams,
    pub vector: Vec<f64>,
    pub loss: f64,
    pub seed: u64,
    /// Basin-hopping rounds completed when the checkpoint was written.
    pub iteration: usize,
}
