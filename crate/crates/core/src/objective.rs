//! Scoring of circuit parameters: rotation-maximized fidelities and the fixed-pattern
//! and beam-search losses.

use std::sync::{Arc, OnceLock};

use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::circuit::{
    build_state, herald_slice, truncation_leakage, CircuitParams, MeasurementPattern,
};
use crate::error::Result;
use crate::fock::{FockState, C64, ROTATION_GRID, ZERO};
use crate::targets::TargetState;

/// Probability, fidelity and best rotation for one heralding pattern.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternScore {
    pub pattern: MeasurementPattern,
    /// Index of the target the pattern was scored against.
    pub target: usize,
    pub probability: f64,
    pub fidelity: f64,
    /// Grid angle attaining `fidelity`, in `[0, 2π)`.
    pub phi_star: f64,
}

/// Denominator used by the logarithmic weight of the beam-search loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LambdaMode {
    /// `log₁₀(1 − F̃)/log₁₀(1 − ε)`; reaches ≈193.6 at the cap for ε = 0.02.
    #[default]
    AsPrinted,
    /// `log₁₀(1 − F̃)/log₁₀(ε)`; reaches exactly 1 at the cap.
    Normalized,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    /// Probability weight of the fixed-pattern loss.
    pub alpha: f64,
    /// Infidelity cap of the beam-search loss.
    pub epsilon: f64,
    /// Regularizer inside the logarithm.
    pub delta: f64,
    /// Linear weight of the beam-search score.
    pub lambda: f64,
    /// Weight of the truncation-leakage penalty.
    pub truncation_weight: f64,
    pub lambda_mode: LambdaMode,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            epsilon: 2e-2,
            delta: 1e-72,
            lambda: 1e4,
            truncation_weight: 10.0,
            lambda_mode: LambdaMode::AsPrinted,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.epsilon > 0.0
            && self.epsilon < 1.0
            && self.alpha >= 0.0
            && self.delta >= 0.0
            && self.lambda >= 0.0
            && self.truncation_weight >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(crate::Error::InvalidParameter(format!("loss configuration out of range: {self:?}")))
        }
    }
}

pub(crate) fn fft256() -> Arc<dyn Fft<f64>> {
    static PLAN: OnceLock<Arc<dyn Fft<f64>>> = OnceLock::new();
    PLAN.get_or_init(|| FftPlanner::new().plan_fft_inverse(ROTATION_GRID)).clone()
}

/// Picks the first grid index within `1e−12` of the maximum.
pub(crate) fn argmax_first(values: &[f64]) -> (usize, f64) {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let k = values.iter().position(|&v| v >= max - 1e-12).unwrap_or(0);
    (k, max)
}

pub(crate) fn grid_angle(k: usize) -> f64 {
    2.0 * std::f64::consts::PI * k as f64 / ROTATION_GRID as f64
}

/// `max_φ |Σₙ tₙ* e^{inφ} ψₙ|²` over the 256-angle grid, with its argmax angle.
///
/// `state` need not be normalized; the caller gets the raw overlap.
pub fn rotation_fidelity_raw(target: &[C64], state: &[C64]) -> (f64, f64) {
    let mut buf = vec![ZERO; ROTATION_GRID];
    for (n, (t, s)) in target.iter().zip(state).enumerate() {
        buf[n % ROTATION_GRID] += t.conj() * s;
    }
    fft256().process(&mut buf);
    let values: Vec<f64> = buf.iter().map(|z| z.norm_sqr()).collect();
    let (k, f) = argmax_first(&values);
    (f, grid_angle(k))
}

/// Rotation-maximized fidelity of a normalized single-mode state with `target`.
pub fn rotation_fidelity(target: &TargetState, state: &FockState) -> Result<(f64, f64)> {
    if state.num_modes() != 1 {
        return Err(crate::Error::NotSingleMode(state.num_modes()));
    }
    if state.cutoff() != target.cutoff() {
        return Err(crate::Error::CutoffMismatch { expected: target.cutoff(), actual: state.cutoff() });
    }
    Ok(rotation_fidelity_raw(target.amplitudes(), state.amplitudes()))
}

/// `Σₖ (α pₖ + Fₖ)` negated, plus the truncation penalty.
pub fn loss_fixed(scores: &[PatternScore], leakage: f64, cfg: &LossConfig) -> f64 {
    let gain: f64 = scores.iter().map(|s| cfg.alpha * s.probability + s.fidelity).sum();
    -gain + cfg.truncation_weight * leakage
}

/// Logarithmic weight `Λ` of a capped fidelity.
pub fn lambda_weight(fidelity: f64, cfg: &LossConfig) -> f64 {
    let capped = fidelity.min(1.0 - cfg.epsilon).max(0.0);
    let denom = match cfg.lambda_mode {
        LambdaMode::AsPrinted => (1.0 - cfg.epsilon).log10(),
        LambdaMode::Normalized => cfg.epsilon.log10(),
    };
    (1.0 - capped).log10() / denom
}

/// Probability-weighted filtration score `𝒮 = Σ pₖ (F̃ₖ² Λₖ)⁴`.
pub fn beam_score(scores: &[PatternScore], cfg: &LossConfig) -> f64 {
    scores
        .iter()
        .map(|s| {
            let capped = s.fidelity.min(1.0 - cfg.epsilon).max(0.0);
            s.probability * (capped * capped * lambda_weight(s.fidelity, cfg)).powi(4)
        })
        .sum()
}

/// `−ln(𝒮 + δ) − λ𝒮` plus the truncation penalty.
pub fn loss_beam(scores: &[PatternScore], leakage: f64, cfg: &LossConfig) -> f64 {
    let s = beam_score(scores, cfg);
    -(s + cfg.delta).ln() - cfg.lambda * s + cfg.truncation_weight * leakage
}

/// Probability and rotation fidelity of one pattern against one target, using the
/// unnormalized heralded slice. Void outcomes score zero.
pub fn score_slice(slice: &[C64], target: &TargetState, epsilon: f64) -> (f64, f64, f64) {
    let p: f64 = slice.iter().map(|a| a.norm_sqr()).sum();
    if p < epsilon || p == 0.0 {
        return (p.max(0.0), 0.0, 0.0);
    }
    let (raw, phi) = rotation_fidelity_raw(target.amplitudes(), slice);
    (p, (raw / p).min(1.0), phi)
}

/// Pattern-to-target assignment evaluated by [`score_patterns`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub pattern: MeasurementPattern,
    pub target: usize,
}

/// Scores every assigned pattern of an already simulated state.
pub fn score_state(
    state: &FockState,
    assignments: &[Assignment],
    targets: &[TargetState],
    epsilon: f64,
) -> Result<Vec<PatternScore>> {
    assignments
        .iter()
        .map(|a| {
            let slice = herald_slice(state, &a.pattern)?;
            let (probability, fidelity, phi_star) = score_slice(slice, &targets[a.target], epsilon);
            Ok(PatternScore { pattern: a.pattern.clone(), target: a.target, probability, fidelity, phi_star })
        })
        .collect()
}

/// Builds the device state and scores the assigned patterns; returns the scores and
/// the truncation leakage.
pub fn score_patterns(
    params: &CircuitParams,
    assignments: &[Assignment],
    targets: &[TargetState],
    cutoff: usize,
    epsilon: f64,
) -> Result<(Vec<PatternScore>, f64)> {
    let state = build_state(params, cutoff)?;
    let scores = score_state(&state, assignments, targets, epsilon)?;
    Ok((scores, truncation_leakage(&state)))
}

/// Scores `pattern` against whichever target it matches best (lowest index on ties).
pub fn score_best_target(
    state: &FockState,
    pattern: &MeasurementPattern,
    targets: &[TargetState],
    epsilon: f64,
) -> Result<PatternScore> {
    let slice = herald_slice(state, pattern)?;
    let mut best: Option<PatternScore> = None;
    for (i, t) in targets.iter().enumerate() {
        let (probability, fidelity, phi_star) = score_slice(slice, t, epsilon);
        if best.as_ref().map_or(true, |b| fidelity > b.fidelity) {
            best = Some(PatternScore { pattern: pattern.clone(), target: i, probability, fidelity, phi_star });
        }
    }
    Ok(best.expect("at least one target"))
}
