//! The heralding device: squeezed and displaced vacua, a beam-splitter mesh, and
//! photon counting on every mode except the last.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{displace_matrix, squeeze_entries, BeamSplitter, FockState, C64, ZERO};

/// Heralding probabilities below this are treated as void outcomes.
pub const DEFAULT_HERALD_EPSILON: f64 = 1e-14;

/// One beam splitter of the mesh, acting on nearest neighbours `(mode, mode + 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeshElement {
    pub mode: usize,
    pub theta: f64,
    pub phi: f64,
}

/// Every classical control of an `N`-mode device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircuitParams {
    /// `(r, φ)` per input mode.
    pub squeeze: Vec<(f64, f64)>,
    pub displacement: Vec<C64>,
    pub mesh: Vec<MeshElement>,
    pub output_phases: Vec<f64>,
}

/// Upper mode index of each beam splitter of the rectangular nearest-neighbour mesh.
///
/// `N` layers alternating between even and odd pairs; `N(N−1)/2` elements in total.
pub fn rectangular_mesh(num_modes: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(num_modes * num_modes.saturating_sub(1) / 2);
    for layer in 0..num_modes {
        let mut k = layer % 2;
        while k + 1 < num_modes {
            out.push(k);
            k += 2;
        }
    }
    out
}

impl CircuitParams {
    /// All-zero controls: the device leaves the vacuum untouched.
    pub fn zeros(num_modes: usize) -> Self {
        Self {
            squeeze: vec![(0.0, 0.0); num_modes],
            displacement: vec![ZERO; num_modes],
            mesh: rectangular_mesh(num_modes)
                .into_iter()
                .map(|mode| MeshElement { mode, theta: 0.0, phi: 0.0 })
                .collect(),
            output_phases: vec![0.0; num_modes],
        }
    }

    pub fn num_modes(&self) -> usize {
        self.squeeze.len()
    }

    /// Length of the flat parameter vector for `num_modes`.
    pub fn vector_len(num_modes: usize) -> usize {
        5 * num_modes + num_modes * num_modes.saturating_sub(1)
    }

    /// Flat layout: `[r₁..r_N, φ₁..φ_N, Re α₁..Re α_N, Im α₁..Im α_N,
    /// (θ, φ) per mesh element in mesh order, output phases]`.
    pub fn to_vector(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(Self::vector_len(self.num_modes()));
        v.extend(self.squeeze.iter().map(|s| s.0));
        v.extend(self.squeeze.iter().map(|s| s.1));
        v.extend(self.displacement.iter().map(|a| a.re));
        v.extend(self.displacement.iter().map(|a| a.im));
        for el in &self.mesh {
            v.push(el.theta);
            v.push(el.phi);
        }
        v.extend(&self.output_phases);
        v
    }

    pub fn from_vector(num_modes: usize, v: &[f64]) -> Result<Self> {
        let expected = Self::vector_len(num_modes);
        if v.len() != expected {
            return Err(Error::DimensionMismatch { expected, actual: v.len() });
        }
        let n = num_modes;
        let squeeze = (0..n).map(|i| (v[i], v[n + i])).collect();
        let displacement = (0..n).map(|i| C64::new(v[2 * n + i], v[3 * n + i])).collect();
        let mut at = 4 * n;
        let mesh = rectangular_mesh(n)
            .into_iter()
            .map(|mode| {
                let el = MeshElement { mode, theta: v[at], phi: v[at + 1] };
                at += 2;
                el
            })
            .collect();
        let output_phases = v[at..at + n].to_vec();
        Ok(Self { squeeze, displacement, mesh, output_phases })
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_modes();
        if n == 0 {
            return Err(Error::InvalidParameter("circuit needs at least one mode".into()));
        }
        if self.displacement.len() != n || self.output_phases.len() != n {
            return Err(Error::InvalidParameter("per-mode parameter lists differ in length".into()));
        }
        if let Some(el) = self.mesh.iter().find(|el| el.mode + 1 >= n) {
            return Err(Error::ModeOutOfRange { index: el.mode + 1, num_modes: n });
        }
        let finite = self.to_vector().iter().all(|x| x.is_finite());
        if !finite {
            return Err(Error::InvalidParameter("non-finite circuit parameter".into()));
        }
        if self.squeeze.iter().any(|s| s.0 < 0.0) {
            return Err(Error::InvalidParameter("squeezing magnitude must be non-negative".into()));
        }
        Ok(())
    }
}

/// Ancilla photon counts `(n₁,…,n_{N−1})`, ordered lexicographically.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MeasurementPattern(pub Vec<usize>);

impl MeasurementPattern {
    pub fn new(counts: Vec<usize>) -> Self {
        Self(counts)
    }

    pub fn counts(&self) -> &[usize] {
        &self.0
    }

    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }

    pub(crate) fn flat_index(&self, cutoff: usize) -> usize {
        self.0.iter().fold(0, |acc, &n| acc * cutoff + n)
    }

    pub(crate) fn check(&self, num_modes: usize, cutoff: usize) -> Result<()> {
        if self.0.len() + 1 != num_modes {
            return Err(Error::InvalidPattern {
                pattern: self.0.clone(),
                reason: format!("expected {} ancilla counts", num_modes.saturating_sub(1)),
            });
        }
        if self.0.iter().any(|&n| n >= cutoff) {
            return Err(Error::InvalidPattern {
                pattern: self.0.clone(),
                reason: format!("count at or above cutoff {cutoff}"),
            });
        }
        Ok(())
    }
}

impl fmt::Display for MeasurementPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, n) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{n}")?;
        }
        write!(f, ")")
    }
}

impl std::str::FromStr for MeasurementPattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let inner = s.trim().trim_start_matches('(').trim_end_matches(')');
        let counts = inner
            .split(',')
            .map(|t| t.trim().parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::InvalidPattern { pattern: vec![], reason: format!("{s}: {e}") })?;
        Ok(Self(counts))
    }
}

/// Pre-detection state of the device.
///
/// Vacuum → per-mode squeezing → per-mode displacement → mesh in order → output phases.
pub fn build_state(params: &CircuitParams, cutoff: usize) -> Result<FockState> {
    params.validate()?;
    let n = params.num_modes();
    let mut state: Option<FockState> = None;
    for i in 0..n {
        let (r, phi) = params.squeeze[i];
        let mut column: Vec<C64> = squeeze_entries(r, phi, cutoff, 1).iter().copied().collect();
        let alpha = params.displacement[i];
        if alpha != ZERO {
            let d = displace_matrix(alpha, cutoff)?;
            column = (d.entries() * nalgebra::DVector::from_vec(column)).iter().copied().collect();
        }
        let mode = FockState::single_mode(column)?;
        state = Some(match state {
            None => mode,
            Some(s) => s.tensor(&mode)?,
        });
    }
    let mut state = state.expect("at least one mode");
    for el in &params.mesh {
        BeamSplitter::new(el.theta, el.phi, cutoff)?.apply(&mut state, el.mode, el.mode + 1)?;
    }
    apply_output_phases(&mut state, &params.output_phases);
    Ok(state)
}

fn apply_output_phases(state: &mut FockState, phases: &[f64]) {
    if phases.iter().all(|&p| p == 0.0) {
        return;
    }
    let d = state.cutoff();
    let n = state.num_modes();
    // e^{i Σ_k n_k θ_k} factorizes over modes
    let per_mode: Vec<Vec<C64>> = phases
        .iter()
        .map(|&th| (0..d).map(|l| C64::from_polar(1.0, l as f64 * th)).collect())
        .collect();
    for (idx, amp) in state.amplitudes_mut().iter_mut().enumerate() {
        let mut rem = idx;
        let mut f = C64::new(1.0, 0.0);
        for k in (0..n).rev() {
            f *= per_mode[k][rem % d];
            rem /= d;
        }
        *amp *= f;
    }
}

/// `1 − ‖ψ‖²`, the probability lost above the cutoff.
pub fn truncation_leakage(state: &FockState) -> f64 {
    1.0 - state.norm_sqr()
}

/// Marginal probabilities of every ancilla pattern, the last mode being traced out.
#[derive(Debug, Clone, PartialEq)]
pub struct Marginals {
    num_ancillas: usize,
    cutoff: usize,
    probs: Vec<f64>,
}

impl Marginals {
    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn num_ancillas(&self) -> usize {
        self.num_ancillas
    }

    pub fn get(&self, pattern: &MeasurementPattern) -> f64 {
        if pattern.0.len() != self.num_ancillas || pattern.0.iter().any(|&n| n >= self.cutoff) {
            return 0.0;
        }
        self.probs[pattern.flat_index(self.cutoff)]
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    pub fn pattern_at(&self, flat: usize) -> MeasurementPattern {
        let mut counts = vec![0; self.num_ancillas];
        let mut rem = flat;
        for k in (0..self.num_ancillas).rev() {
            counts[k] = rem % self.cutoff;
            rem /= self.cutoff;
        }
        MeasurementPattern(counts)
    }

    /// `(pattern, probability)` in lexicographic pattern order.
    pub fn iter(&self) -> impl Iterator<Item = (MeasurementPattern, f64)> + '_ {
        self.probs.iter().enumerate().map(move |(i, &p)| (self.pattern_at(i), p))
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }
}

/// Exact enumeration of the ancilla photon-count distribution.
pub fn ancilla_marginals(state: &FockState) -> Result<Marginals> {
    let n = state.num_modes();
    if n < 2 {
        return Err(Error::InvalidParameter("marginals need at least one ancilla".into()));
    }
    let d = state.cutoff();
    let probs = state
        .amplitudes()
        .chunks_exact(d)
        .map(|slice| slice.iter().map(|a| a.norm_sqr()).sum())
        .collect();
    Ok(Marginals { num_ancillas: n - 1, cutoff: d, probs })
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeraldResult {
    pub probability: f64,
    /// Normalized output-mode state.
    pub output: FockState,
}

/// Unnormalized output-mode slice conditioned on `pattern`.
pub fn herald_slice<'a>(state: &'a FockState, pattern: &MeasurementPattern) -> Result<&'a [C64]> {
    pattern.check(state.num_modes(), state.cutoff())?;
    let d = state.cutoff();
    let start = pattern.flat_index(d) * d;
    Ok(&state.amplitudes()[start..start + d])
}

/// Projects the ancillas onto `pattern`.
pub fn herald(state: &FockState, pattern: &MeasurementPattern, epsilon: f64) -> Result<HeraldResult> {
    let slice = herald_slice(state, pattern)?;
    let probability: f64 = slice.iter().map(|a| a.norm_sqr()).sum();
    if probability < epsilon || probability == 0.0 {
        return Err(Error::VoidOutcome { probability, threshold: epsilon });
    }
    let norm = probability.sqrt();
    let output = FockState::single_mode(slice.iter().map(|a| a / norm).collect())?;
    Ok(HeraldResult { probability, output })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::squeeze_matrix;

    #[test]
    fn mesh_layout() {
        assert_eq!(rectangular_mesh(1), Vec::<usize>::new());
        assert_eq!(rectangular_mesh(2), vec![0]);
        assert_eq!(rectangular_mesh(3), vec![0, 1, 0]);
        assert_eq!(rectangular_mesh(4).len(), 6);
    }

    #[test]
    fn vector_layout() {
        let mut p = CircuitParams::zeros(3);
        p.squeeze[1] = (0.5, 0.25);
        p.displacement[2] = C64::new(0.1, -0.2);
        p.mesh[2].theta = 0.7;
        p.output_phases[0] = 1.5;
        let v = p.to_vector();
        assert_eq!(v.len(), CircuitParams::vector_len(3));
        assert_eq!(v[1], 0.5);
        assert_eq!(v[4], 0.25);
        assert_eq!(v[8], 0.1);
        assert_eq!(v[11], -0.2);
        assert_eq!(v[12 + 4], 0.7);
        assert_eq!(v[18], 1.5);
        assert_eq!(CircuitParams::from_vector(3, &v).unwrap(), p);
        assert!(CircuitParams::from_vector(3, &v[1..]).is_err());
    }

    #[test]
    fn zero_circuit_gives_vacuum() {
        let s = build_state(&CircuitParams::zeros(2), 6).unwrap();
        assert_eq!(s, FockState::vacuum(2, 6).unwrap());
        assert_eq!(truncation_leakage(&s), 0.0);
    }

    #[test]
    fn single_mode_matches_squeeze_column() {
        let mut p = CircuitParams::zeros(1);
        p.squeeze[0] = (1.0, 0.3);
        let s = build_state(&p, 20).unwrap();
        let col = squeeze_matrix(1.0, 0.3, 20).unwrap().column(0);
        for (a, b) in s.amplitudes().iter().zip(&col) {
            assert!((a - b).norm() < 1e-15);
        }
    }

    #[test]
    fn pattern_parse_and_display() {
        let p: MeasurementPattern = "(1, 3)".parse().unwrap();
        assert_eq!(p, MeasurementPattern(vec![1, 3]));
        assert_eq!(p.to_string(), "(1,3)");
        assert!("(a)".parse::<MeasurementPattern>().is_err());
    }

    #[test]
    fn herald_product_state() {
        let anc = FockState::basis(&[2], 5).unwrap();
        let out = FockState::single_mode(vec![
            C64::new(0.6, 0.0),
            ZERO,
            C64::new(0.0, 0.8),
            ZERO,
            ZERO,
        ])
        .unwrap();
        let s = anc.tensor(&out).unwrap();
        let h = herald(&s, &MeasurementPattern(vec![2]), DEFAULT_HERALD_EPSILON).unwrap();
        assert!((h.probability - 1.0).abs() < 1e-15);
        assert_eq!(h.output, out);
        let m = ancilla_marginals(&s).unwrap();
        assert!((m.get(&MeasurementPattern(vec![2])) - 1.0).abs() < 1e-15);
        assert!(matches!(
            herald(&s, &MeasurementPattern(vec![1]), DEFAULT_HERALD_EPSILON),
            Err(Error::VoidOutcome { .. })
        ));
        assert!(matches!(
            herald(&s, &MeasurementPattern(vec![5]), DEFAULT_HERALD_EPSILON),
            Err(Error::InvalidPattern { .. })
        ));
    }
}
