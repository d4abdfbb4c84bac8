//! Fock-basis target states: squeezed cats, binomial codewords, enveloped GKP grid
//! states with their low-photon core approximations, and displaced cubic phase states.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{annihilation_matrix, displace_matrix, squeeze_entries, Conventions, FockState, C64, ZERO};

/// Normalized single-mode target with a descriptive label.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetState {
    pub label: String,
    amplitudes: Vec<C64>,
}

impl TargetState {
    /// Normalizes `amplitudes`; fails on a zero vector.
    pub fn new(label: impl Into<String>, amplitudes: Vec<C64>) -> Result<Self> {
        let norm: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::InvalidParameter("target has zero or non-finite norm".into()));
        }
        Ok(Self { label: label.into(), amplitudes: amplitudes.into_iter().map(|a| a / norm).collect() })
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn cutoff(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn to_state(&self) -> FockState {
        FockState::single_mode(self.amplitudes.clone()).expect("targets have cutoff ≥ 2")
    }

    /// Same target zero-padded or truncated (and renormalized) to another cutoff.
    pub fn with_cutoff(&self, cutoff: usize) -> Result<Self> {
        let mut amps = self.amplitudes.clone();
        amps.resize(cutoff, ZERO);
        Self::new(self.label.clone(), amps)
    }

    /// Amplitudes as `[re, im]` pairs.
    pub fn to_pairs(&self) -> Vec<[f64; 2]> {
        self.amplitudes.iter().map(|a| [a.re, a.im]).collect()
    }

    /// Largest amplitude magnitude at odd (`parity = 1`) or even (`parity = 0`) levels.
    pub fn max_amplitude_with_parity(&self, parity: usize) -> f64 {
        self.amplitudes
            .iter()
            .enumerate()
            .filter(|(n, _)| n % 2 == parity)
            .map(|(_, a)| a.norm())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parity {
    Even,
    Odd,
}

/// Extra levels used when a target is built above its requested cutoff and truncated.
const PADDING: usize = 60;

/// `S(r)·N(|α⟩ ± |−α⟩)`, renormalized on the first `cutoff` levels.
pub fn cat_state(alpha: C64, r: f64, parity: Parity, cutoff: usize) -> Result<TargetState> {
    if cutoff < 2 {
        return Err(Error::CutoffTooSmall(cutoff));
    }
    let big = cutoff + PADDING;
    // coherent amplitudes e^{−|α|²/2} αⁿ/√n!, with the odd or even terms doubled
    let mut amps = vec![ZERO; big];
    let mut coh = C64::new((-0.5 * alpha.norm_sqr()).exp(), 0.0);
    for (n, a) in amps.iter_mut().enumerate() {
        if n > 0 {
            coh = coh * alpha / (n as f64).sqrt();
        }
        let keep = match parity {
            Parity::Even => n % 2 == 0,
            Parity::Odd => n % 2 == 1,
        };
        if keep {
            *a = coh * 2.0;
        }
    }
    if amps.iter().all(|a| a.norm_sqr() == 0.0) {
        return Err(Error::InvalidParameter("odd cat with α = 0 vanishes".into()));
    }
    let amps = if r != 0.0 {
        let s = squeeze_entries(r, 0.0, big, big);
        (s * DVector::from_vec(amps)).iter().copied().collect()
    } else {
        amps
    };
    let label = format!(
        "cat{}(alpha={:.4},r={:.4})",
        if parity == Parity::Even { "+" } else { "-" },
        alpha,
        r
    );
    truncate_checked(label, amps, cutoff, 1e-6)
}

/// Normalizes on the full buffer, then truncates to `cutoff`, failing when more than
/// `tolerance` probability is lost.
fn truncate_checked(label: String, amps: Vec<C64>, cutoff: usize, tolerance: f64) -> Result<TargetState> {
    let total: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
    let kept: f64 = amps[..cutoff].iter().map(|a| a.norm_sqr()).sum();
    let leakage = 1.0 - kept / total;
    if leakage > tolerance {
        return Err(Error::Leakage { leakage, tolerance });
    }
    TargetState::new(label, amps[..cutoff].to_vec())
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Binomial-code logical codeword of order `order` and spacing `spacing`.
///
/// `|μ⟩ = 2^{−N/2} Σ_{p ≡ μ mod 2} √C(N+1, p) |p(S+1)⟩`.
pub fn binomial_codeword(order: usize, spacing: usize, logical: u8, cutoff: usize) -> Result<TargetState> {
    if logical > 1 {
        return Err(Error::InvalidParameter(format!("logical value {logical} not in {{0, 1}}")));
    }
    let top = (order + 1) * (spacing + 1);
    if top >= cutoff {
        return Err(Error::SupportExceedsCutoff(format!(
            "binomial (N={order}, S={spacing}) reaches level {top}, cutoff {cutoff}"
        )));
    }
    let mut amps = vec![ZERO; cutoff];
    let scale = 2f64.powi(order as i32).sqrt();
    for p in (logical as usize..=order + 1).step_by(2) {
        amps[p * (spacing + 1)] = C64::new(binomial(order + 1, p).sqrt() / scale, 0.0);
    }
    TargetState::new(format!("binomial{logical}(N={order},S={spacing})"), amps)
}

/// Gaussian envelope of a finite-energy grid state, applied as `e^{−β n̂}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GkpEnvelope {
    pub damping: f64,
}

impl GkpEnvelope {
    /// Envelope quoted in dB: `Δ² = 10^{−dB/10}`, `β = −ln(1 − Δ²)/2`.
    pub fn from_db(db: f64) -> Result<Self> {
        let delta_sq = 10f64.powf(-db / 10.0);
        if !(delta_sq > 0.0 && delta_sq < 1.0) {
            return Err(Error::InvalidParameter(format!("envelope {db} dB must be positive")));
        }
        Ok(Self { damping: -(1.0 - delta_sq).ln() / 2.0 })
    }
}

/// `⟨n|q⟩` for `n < count`, in scaled form `(mantissa, ln scale)` so that large
/// `|q|` does not underflow.
fn hermite_functions(q: f64, count: usize) -> Vec<f64> {
    let mut out = vec![0.0; count];
    let base = -0.5 * q * q - 0.25 * PI.ln();
    let mut scale = 0.0f64;
    let (mut prev, mut cur) = (0.0f64, 1.0f64);
    for (n, slot) in out.iter_mut().enumerate() {
        if n > 0 {
            let nf = n as f64;
            let next = (2.0 / nf).sqrt() * q * cur - ((nf - 1.0) / nf).sqrt() * prev;
            prev = cur;
            cur = next;
        }
        if cur.abs() > 1e150 {
            prev /= 1e150;
            cur /= 1e150;
            scale += 150.0 * std::f64::consts::LN_10;
        }
        *slot = cur * (base + scale).exp();
    }
    out
}

/// Fock amplitudes of `e^{−β n̂} Σ_s |q = (2s + μ)√π⟩`, normalized on `cutoff` levels.
///
/// Each damped position eigenstate is a Gaussian, so the sum over lattice teeth is
/// cut once every Hermite function has decayed below `1e−10` of its peak.
pub fn ideal_gkp_fock(logical: u8, envelope: GkpEnvelope, cutoff: usize) -> Result<TargetState> {
    if logical > 1 {
        return Err(Error::InvalidParameter(format!("logical value {logical} not in {{0, 1}}")));
    }
    if !(envelope.damping > 0.0) {
        return Err(Error::InvalidParameter("envelope damping must be positive".into()));
    }
    if cutoff < 2 {
        return Err(Error::CutoffTooSmall(cutoff));
    }
    let spacing = PI.sqrt();
    // beyond the classical turning point the Hermite functions decay like e^{−(q−q_t)²}
    let q_max = (2.0 * cutoff as f64 + 1.0).sqrt() + 2.0 * (10.0 * std::f64::consts::LN_10).sqrt();
    let mut sums = vec![0.0f64; cutoff];
    let mut s: i64 = 0;
    loop {
        let mut any = false;
        for sign in [1i64, -1] {
            let k = if sign > 0 { s } else { -s - 1 };
            let q = (2 * k + logical as i64) as f64 * spacing;
            if q.abs() > q_max {
                continue;
            }
            any = true;
            for (acc, h) in sums.iter_mut().zip(hermite_functions(q, cutoff)) {
                *acc += h;
            }
        }
        if !any {
            break;
        }
        s += 1;
    }
    let amps: Vec<C64> = sums
        .iter()
        .enumerate()
        .map(|(n, &v)| C64::new(v * (-envelope.damping * n as f64).exp(), 0.0))
        .collect();
    let total: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
    let tail: f64 = amps[cutoff.saturating_sub(cutoff / 10 + 1)..].iter().map(|a| a.norm_sqr()).sum();
    if tail / total > 1e-8 {
        return Err(Error::NonConvergence(format!(
            "grid state keeps {:.2e} of its mass in the top levels at cutoff {cutoff}",
            tail / total
        )));
    }
    TargetState::new(format!("gkp{logical}(beta={:.4})", envelope.damping), amps)
}

/// Result of fitting a low-photon core to an enveloped grid state.
#[derive(Debug, Clone, PartialEq)]
pub struct CoreFit {
    pub target: TargetState,
    /// Squeezing `ξ` such that `S(ξ)|core⟩` approximates the grid state.
    pub squeezing: C64,
    /// `|⟨grid|S(ξ)|core⟩|²`.
    pub fidelity: f64,
    /// Set when the fit falls short of 0.99.
    pub below_threshold: bool,
}

/// Cutoff used internally for the enveloped grid state.
pub(crate) fn gkp_working_cutoff(envelope: GkpEnvelope) -> usize {
    // keep e^{−2βn} below 1e−16 at the edge
    let n = (16.0 * std::f64::consts::LN_10 / (2.0 * envelope.damping)).ceil() as usize + 40;
    n.clamp(60, 900)
}

/// Unnormalized projection `P_{n_max} S(ξ)† |grid⟩` and its squared norm.
pub(crate) fn core_projection(grid: &[C64], xi: C64, n_max: usize) -> (Vec<C64>, f64) {
    let s = squeeze_entries(xi.norm(), xi.arg(), grid.len(), n_max + 1);
    let coeffs: Vec<C64> = (0..=n_max)
        .map(|k| s.column(k).iter().zip(grid).map(|(sk, g)| sk.conj() * g).sum())
        .collect();
    let f = coeffs.iter().map(|c| c.norm_sqr()).sum();
    (coeffs, f)
}

/// Low-photon core `Σ_{n ≤ n_max} cₙ|n⟩` of the enveloped logical grid state.
///
/// Maximizes `‖P_{n_max} S(ξ)†|grid⟩‖²` over the squeezing `ξ`; the optimal core is
/// the renormalized projection. The displacement is held at zero since the square
/// lattice codewords are even functions of `q`.
pub fn gkp_core_state(logical: u8, n_max: usize, envelope: GkpEnvelope, cutoff: usize) -> Result<CoreFit> {
    if n_max >= cutoff {
        return Err(Error::SupportExceedsCutoff(format!("core n_max {n_max} ≥ cutoff {cutoff}")));
    }
    let grid = ideal_gkp_fock(logical, envelope, gkp_working_cutoff(envelope))?;
    let amps = grid.amplitudes();
    let eval = |u: f64, v: f64| core_projection(amps, C64::new(u, v), n_max).1;

    // coarse scan of ξ = u + iv, then a shrinking compass search around the best cell
    let (mut best_u, mut best_v, mut best_f) = (0.0, 0.0, eval(0.0, 0.0));
    let steps = 24;
    let span = 1.6;
    for i in 0..=2 * steps {
        for j in 0..=2 * steps {
            let u = span * (i as f64 - steps as f64) / steps as f64;
            let v = span * (j as f64 - steps as f64) / steps as f64;
            let f = eval(u, v);
            if f > best_f {
                (best_u, best_v, best_f) = (u, v, f);
            }
        }
    }
    let mut h = span / steps as f64;
    while h > 1e-10 {
        let mut improved = false;
        for (du, dv) in [(h, 0.0), (-h, 0.0), (0.0, h), (0.0, -h)] {
            let f = eval(best_u + du, best_v + dv);
            if f > best_f {
                (best_u, best_v, best_f) = (best_u + du, best_v + dv, f);
                improved = true;
            }
        }
        if !improved {
            h *= 0.5;
        }
    }
    let xi = C64::new(best_u, best_v);
    let (coeffs, fidelity) = core_projection(amps, xi, n_max);
    let mut padded = vec![ZERO; cutoff];
    padded[..=n_max].copy_from_slice(&coeffs);
    let target = TargetState::new(format!("gkp{logical}_A{n_max}(beta={:.4})", envelope.damping), padded)?;
    Ok(CoreFit { target, squeezing: xi, fidelity, below_threshold: fidelity < 0.99 })
}

/// `D(α) e^{iγ Q̂³} S(r)|0⟩` with `Q̂ = √(ħ/2)(â + â†)`.
pub fn cubic_phase_state(
    gamma: f64,
    r: f64,
    alpha: f64,
    cutoff: usize,
    conv: Conventions,
) -> Result<TargetState> {
    if cutoff < 2 {
        return Err(Error::CutoffTooSmall(cutoff));
    }
    let big = cutoff + 2 * PADDING;
    let vac_sq: Vec<C64> = squeeze_entries(r, 0.0, big, 1).iter().copied().collect();
    let cubic = cubic_phase_unitary(gamma, big, conv);
    let mut v = &cubic * DVector::from_vec(vac_sq);
    if alpha != 0.0 {
        v = displace_matrix(C64::new(alpha, 0.0), big)?.entries() * v;
    }
    let label = format!("cubic(gamma={gamma},r={r},alpha={alpha})");
    truncate_checked(label, v.iter().copied().collect(), cutoff, 1e-3)
}

/// `exp(iγ Q̂³)` from the truncated position operator, by scaling and squaring.
pub fn cubic_phase_unitary(gamma: f64, cutoff: usize, conv: Conventions) -> DMatrix<C64> {
    let a = annihilation_matrix(cutoff);
    let q = (&a + a.adjoint()) * C64::new(conv.quadrature_scale(), 0.0);
    let q3 = &q * &q * &q;
    (q3 * C64::new(0.0, gamma)).exp()
}

/// Declarative description of a target, as used in run configurations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetSpec {
    Cat {
        alpha: f64,
        #[serde(default)]
        alpha_imag: f64,
        squeezing: f64,
        parity: Parity,
    },
    Binomial {
        order: usize,
        spacing: usize,
        logical: u8,
    },
    GkpCore {
        logical: u8,
        n_max: usize,
        #[serde(default = "default_envelope_db")]
        envelope_db: f64,
    },
    GkpIdeal {
        logical: u8,
        #[serde(default = "default_envelope_db")]
        envelope_db: f64,
    },
    Cubic {
        gamma: f64,
        squeezing: f64,
        displacement: f64,
    },
    Fock {
        n: usize,
    },
}

fn default_envelope_db() -> f64 {
    10.0
}

impl TargetSpec {
    pub fn build(&self, cutoff: usize, conv: Conventions) -> Result<TargetState> {
        match *self {
            TargetSpec::Cat { alpha, alpha_imag, squeezing, parity } => {
                cat_state(C64::new(alpha, alpha_imag), squeezing, parity, cutoff)
            }
            TargetSpec::Binomial { order, spacing, logical } => {
                binomial_codeword(order, spacing, logical, cutoff)
            }
            TargetSpec::GkpCore { logical, n_max, envelope_db } => {
                Ok(gkp_core_state(logical, n_max, GkpEnvelope::from_db(envelope_db)?, cutoff)?.target)
            }
            TargetSpec::GkpIdeal { logical, envelope_db } => {
                let env = GkpEnvelope::from_db(envelope_db)?;
                let full = ideal_gkp_fock(logical, env, gkp_working_cutoff(env))?;
                let mut amps = full.amplitudes()[..cutoff.min(full.cutoff())].to_vec();
                amps.resize(cutoff, ZERO);
                TargetState::new(full.label.clone(), amps)
            }
            TargetSpec::Cubic { gamma, squeezing, displacement } => {
                cubic_phase_state(gamma, squeezing, displacement, cutoff, conv)
            }
            TargetSpec::Fock { n } => {
                if n >= cutoff {
                    return Err(Error::SupportExceedsCutoff(format!("|{n}⟩ at cutoff {cutoff}")));
                }
                let mut amps = vec![ZERO; cutoff];
                amps[n] = C64::new(1.0, 0.0);
                TargetState::new(format!("fock{n}"), amps)
            }
        }
    }

    /// Short name used in reports.
    pub fn short_name(&self) -> String {
        match self {
            TargetSpec::Cat { parity: Parity::Even, .. } => "cat+".into(),
            TargetSpec::Cat { parity: Parity::Odd, .. } => "cat-".into(),
            TargetSpec::Binomial { spacing, logical, .. } => format!("bin{logical}_S{spacing}"),
            TargetSpec::GkpCore { logical, n_max, .. } => format!("gkp{logical}_A{n_max}"),
            TargetSpec::GkpIdeal { logical, .. } => format!("gkp{logical}"),
            TargetSpec::Cubic { .. } => "cubic".into(),
            TargetSpec::Fock { n } => format!("fock{n}"),
        }
    }
}
