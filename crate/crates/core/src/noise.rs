//! Photon loss before detection, simulated on density matrices.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::circuit::{build_state, CircuitParams, MeasurementPattern};
use crate::error::{Error, Result};
use crate::fock::{FockState, C64, ROTATION_GRID, ZERO};
use crate::objective::{argmax_first, fft256, grid_angle};
use crate::targets::TargetState;

/// Multimode density matrix in the row-major Fock layout of [`FockState`].
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    num_modes: usize,
    cutoff: usize,
    entries: DMatrix<C64>,
}

impl DensityMatrix {
    pub fn new(num_modes: usize, cutoff: usize, entries: DMatrix<C64>) -> Result<Self> {
        let dim = cutoff.pow(num_modes as u32);
        if entries.nrows() != dim || entries.ncols() != dim {
            return Err(Error::DimensionMismatch { expected: dim, actual: entries.nrows() });
        }
        Ok(Self { num_modes, cutoff, entries })
    }

    /// `|ψ⟩⟨ψ|`, unnormalized if `ψ` is.
    pub fn from_pure(state: &FockState) -> Self {
        let a = nalgebra::DVector::from_column_slice(state.amplitudes());
        Self { num_modes: state.num_modes(), cutoff: state.cutoff(), entries: &a * a.adjoint() }
    }

    pub fn num_modes(&self) -> usize {
        self.num_modes
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn entries(&self) -> &DMatrix<C64> {
        &self.entries
    }

    pub fn trace(&self) -> f64 {
        self.entries.diagonal().iter().map(|z| z.re).sum()
    }

    /// Largest `|ρ − ρ†|` entry.
    pub fn hermiticity_error(&self) -> f64 {
        let n = self.entries.nrows();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in i..n {
                worst = worst.max((self.entries[(i, j)] - self.entries[(j, i)].conj()).norm());
            }
        }
        worst
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> f64 {
        let h = (&self.entries + self.entries.adjoint()) * C64::new(0.5, 0.0);
        h.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Hermitian within 1e−10, PSD within −1e−8, trace at most 1 + 1e−10.
    pub fn check(&self) -> Result<()> {
        let herm = self.hermiticity_error();
        let tr = self.trace();
        let min = self.min_eigenvalue();
        if herm > 1e-10 || tr > 1.0 + 1e-10 || min < -1e-8 {
            return Err(Error::InvalidParameter(format!(
                "not a density matrix: hermiticity {herm:e}, trace {tr}, min eigenvalue {min:e}"
            )));
        }
        Ok(())
    }

    /// Keeps levels below `cutoff` in every mode (no renormalization).
    pub fn with_cutoff(&self, cutoff: usize) -> Result<Self> {
        let keep: Vec<usize> = (0..self.entries.nrows())
            .filter(|&i| levels(i, self.num_modes, self.cutoff).iter().all(|&l| l < cutoff))
            .collect();
        if cutoff > self.cutoff {
            return Err(Error::InvalidParameter(format!(
                "cannot raise cutoff {} to {cutoff}",
                self.cutoff
            )));
        }
        let entries = DMatrix::from_fn(keep.len(), keep.len(), |i, j| self.entries[(keep[i], keep[j])]);
        Self::new(self.num_modes, cutoff, entries)
    }
}

fn levels(mut index: usize, num_modes: usize, cutoff: usize) -> Vec<usize> {
    let mut out = vec![0; num_modes];
    for k in (0..num_modes).rev() {
        out[k] = index % cutoff;
        index /= cutoff;
    }
    out
}

/// Pure-loss channel `ρ ↦ Σₖ Kₖ ρ Kₖ†`, `Kₖ = √((1−η)ᵏ/k!) η^{n̂/2} âᵏ`.
#[derive(Debug, Clone, PartialEq)]
pub struct LossChannel {
    pub eta: f64,
    /// `kraus[k][(n − k, n)]`; other entries are zero.
    pub kraus: Vec<DMatrix<f64>>,
}

impl LossChannel {
    /// Coefficient of `|n − k⟩⟨n|` in `Kₖ`.
    fn coefficient(&self, k: usize, n: usize) -> f64 {
        self.kraus[k][(n - k, n)]
    }
}

/// Kraus set of a beam-splitter loss with transmissivity `eta`, up to order `D − 1`.
pub fn loss_kraus(eta: f64, cutoff: usize) -> Result<LossChannel> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::InvalidParameter(format!("transmissivity {eta} outside [0, 1]")));
    }
    let ln_fact: Vec<f64> = std::iter::once(0.0)
        .chain((1..cutoff).scan(0.0, |acc, n| {
            *acc += (n as f64).ln();
            Some(*acc)
        }))
        .collect();
    let kraus = (0..cutoff)
        .map(|k| {
            DMatrix::from_fn(cutoff, cutoff, |m, n| {
                if n < k || m != n - k {
                    return 0.0;
                }
                // √C(n,k) η^{(n−k)/2} (1−η)^{k/2}
                let binom = (ln_fact[n] - ln_fact[k] - ln_fact[n - k]).exp();
                binom.sqrt() * eta.powf((n - k) as f64 / 2.0) * (1.0 - eta).powf(k as f64 / 2.0)
            })
        })
        .collect();
    Ok(LossChannel { eta, kraus })
}

/// Applies `channel` to `mode`.
pub fn apply_loss(dm: &DensityMatrix, mode: usize, channel: &LossChannel) -> Result<DensityMatrix> {
    if mode >= dm.num_modes {
        return Err(Error::ModeOutOfRange { index: mode, num_modes: dm.num_modes });
    }
    if channel.kraus.first().map_or(0, |k| k.nrows()) != dm.cutoff {
        return Err(Error::CutoffMismatch {
            expected: dm.cutoff,
            actual: channel.kraus.first().map_or(0, |k| k.nrows()),
        });
    }
    let d = dm.cutoff;
    let stride = d.pow((dm.num_modes - mode - 1) as u32);
    let dim = dm.entries.nrows();
    let level = |i: usize| (i / stride) % d;
    let mut out = DMatrix::from_element(dim, dim, ZERO);
    for j in 0..dim {
        let nj = level(j);
        for i in 0..dim {
            let rho = dm.entries[(i, j)];
            if rho == ZERO {
                continue;
            }
            let ni = level(i);
            for k in 0..=ni.min(nj) {
                let w = channel.coefficient(k, ni) * channel.coefficient(k, nj);
                out[(i - k * stride, j - k * stride)] += rho * w;
            }
        }
    }
    DensityMatrix::new(dm.num_modes, dm.cutoff, out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixedHerald {
    pub probability: f64,
    /// Normalized output-mode density matrix.
    pub output: DMatrix<C64>,
}

/// Projects the ancillas (all modes but the last) onto `pattern`.
pub fn herald_dm(dm: &DensityMatrix, pattern: &MeasurementPattern, epsilon: f64) -> Result<MixedHerald> {
    pattern.check(dm.num_modes, dm.cutoff)?;
    let d = dm.cutoff;
    let start = pattern.flat_index(d) * d;
    let block = dm.entries.view((start, start), (d, d)).into_owned();
    let probability: f64 = block.diagonal().iter().map(|z| z.re).sum();
    if probability < epsilon || probability <= 0.0 {
        return Err(Error::VoidOutcome { probability, threshold: epsilon });
    }
    Ok(MixedHerald { probability, output: block / C64::new(probability, 0.0) })
}

/// `max_φ ⟨t|e^{−in̂φ} ρ e^{in̂φ}|t⟩` on the 256-angle grid, with its argmax angle.
///
/// Collapses `tₙ* ρₙₘ tₘ` along diagonals `n − m`, folds them onto the grid and
/// transforms once.
pub fn rotation_fidelity_dm(target: &[C64], rho: &DMatrix<C64>) -> (f64, f64) {
    let d = rho.nrows().min(target.len());
    let mut buf = vec![ZERO; ROTATION_GRID];
    for n in 0..d {
        for m in 0..d {
            let diff = (n as isize - m as isize).rem_euclid(ROTATION_GRID as isize) as usize;
            buf[diff] += target[n].conj() * rho[(n, m)] * target[m];
        }
    }
    fft256().process(&mut buf);
    let values: Vec<f64> = buf.iter().map(|z| z.re).collect();
    let (k, f) = argmax_first(&values);
    (f, grid_angle(k))
}

/// Probability and fidelity of one heralded pattern under uniform loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossPoint {
    pub eta: f64,
    pub probability: f64,
    pub fidelity: f64,
    pub phi_star: f64,
}

/// Cutoffs of the lossy re-simulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossSetup {
    /// Cutoff at which the pure device state is simulated.
    pub source_cutoff: usize,
    /// Per-mode cutoff of the density matrix.
    pub cutoff: usize,
    pub herald_epsilon: f64,
}

impl Default for LossSetup {
    fn default() -> Self {
        Self { source_cutoff: 30, cutoff: 15, herald_epsilon: 1e-14 }
    }
}

/// Lossless device state truncated to the density-matrix cutoff.
pub fn lossless_dm(params: &CircuitParams, setup: &LossSetup) -> Result<DensityMatrix> {
    let source = setup.source_cutoff.max(setup.cutoff);
    let state = build_state(params, source)?.with_cutoff(setup.cutoff)?;
    Ok(DensityMatrix::from_pure(&state))
}

/// Loss `1 − η` on every mode, then heralding and rotation-maximized fidelity.
pub fn lossy_pipeline(
    params: &CircuitParams,
    pattern: &MeasurementPattern,
    target: &TargetState,
    eta: f64,
    setup: &LossSetup,
) -> Result<LossPoint> {
    let dm = lossless_dm(params, setup)?;
    lossy_point(&dm, pattern, target, eta, setup)
}

/// Like [`lossy_pipeline`] on a precomputed lossless density matrix.
pub fn lossy_point(
    dm: &DensityMatrix,
    pattern: &MeasurementPattern,
    target: &TargetState,
    eta: f64,
    setup: &LossSetup,
) -> Result<LossPoint> {
    let channel = loss_kraus(eta, dm.cutoff)?;
    let mut rho = dm.clone();
    if eta < 1.0 {
        for mode in 0..dm.num_modes {
            rho = apply_loss(&rho, mode, &channel)?;
        }
    }
    let heralded = herald_dm(&rho, pattern, setup.herald_epsilon)?;
    let target = target.with_cutoff(dm.cutoff)?;
    let (fidelity, phi_star) = rotation_fidelity_dm(target.amplitudes(), &heralded.output);
    Ok(LossPoint { eta, probability: heralded.probability, fidelity: fidelity.min(1.0), phi_star })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::herald;
    use crate::objective::rotation_fidelity_raw;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_state(num_modes: usize, cutoff: usize, rng: &mut impl Rng) -> FockState {
        let amps = (0..cutoff.pow(num_modes as u32))
            .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        FockState::new(num_modes, cutoff, amps).unwrap().normalized()
    }

    #[test]
    fn kraus_examples() {
        let id = loss_kraus(1.0, 8).unwrap();
        assert_eq!(id.kraus[0], DMatrix::identity(8, 8));
        assert!(id.kraus[1..].iter().all(|k| k.iter().all(|&v| v == 0.0)));

        let one = DensityMatrix::from_pure(&FockState::basis(&[1], 6).unwrap());
        let out = apply_loss(&one, 0, &loss_kraus(0.9, 6).unwrap()).unwrap();
        assert!((out.entries()[(1, 1)].re - 0.9).abs() < 1e-15);
        assert!((out.entries()[(0, 0)].re - 0.1).abs() < 1e-15);
        assert!((out.trace() - 1.0).abs() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = DensityMatrix::from_pure(&random_state(1, 7, &mut rng));
        let vac = apply_loss(&s, 0, &loss_kraus(0.0, 7).unwrap()).unwrap();
        assert!((vac.entries()[(0, 0)].re - 1.0).abs() < 1e-12);
        assert!((vac.trace() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kraus_completeness() {
        let ch = loss_kraus(0.73, 12).unwrap();
        let sum = ch.kraus.iter().fold(DMatrix::<f64>::zeros(12, 12), |acc, k| acc + k.transpose() * k);
        assert!((sum - DMatrix::<f64>::identity(12, 12)).abs().max() < 1e-12);
    }

    #[test]
    fn loss_on_product_state_factorizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (a, b) = (random_state(1, 5, &mut rng), random_state(1, 5, &mut rng));
        let ch = loss_kraus(0.6, 5).unwrap();
        let joint = apply_loss(&DensityMatrix::from_pure(&a.tensor(&b).unwrap()), 0, &ch).unwrap();
        let la = apply_loss(&DensityMatrix::from_pure(&a), 0, &ch).unwrap();
        let rb = DensityMatrix::from_pure(&b);
        let want = la.entries().kronecker(rb.entries());
        assert!((joint.entries() - want).iter().all(|z| z.norm() < 1e-14));
        joint.check().unwrap();
    }

    #[test]
    fn pure_herald_matches_state_herald() {
        let mut p = CircuitParams::zeros(2);
        p.squeeze = vec![(0.8, 0.3), (0.5, 1.0)];
        p.mesh[0].theta = 0.9;
        p.mesh[0].phi = 0.4;
        let state = build_state(&p, 12).unwrap();
        let dm = DensityMatrix::from_pure(&state);
        let pat = MeasurementPattern(vec![2]);
        let pure = herald(&state, &pat, 1e-14).unwrap();
        let mixed = herald_dm(&dm, &pat, 1e-14).unwrap();
        assert!((pure.probability - mixed.probability).abs() < 1e-15);
        let a = nalgebra::DVector::from_column_slice(pure.output.amplitudes());
        assert!((&a * a.adjoint() - &mixed.output).iter().all(|z| z.norm() < 1e-14));
        // completeness over all patterns
        let total: f64 = (0..12)
            .filter_map(|n| herald_dm(&dm, &MeasurementPattern(vec![n]), 0.0).ok())
            .map(|h| h.probability)
            .sum();
        assert!((total - dm.trace()).abs() < 1e-12);
    }

    #[test]
    fn mixed_fidelity_of_pure_state_matches_pure_metric() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let t = random_state(1, 10, &mut rng);
            let s = random_state(1, 10, &mut rng);
            let dm = DensityMatrix::from_pure(&s);
            let (f1, p1) = rotation_fidelity_raw(t.amplitudes(), s.amplitudes());
            let (f2, p2) = rotation_fidelity_dm(t.amplitudes(), dm.entries());
            assert!((f1 - f2).abs() < 1e-12);
            assert_eq!(p1, p2);
        }
    }

    #[test]
    fn full_transmission_is_lossless() {
        let mut p = CircuitParams::zeros(2);
        p.squeeze = vec![(0.9, 0.0), (0.7, 2.0)];
        p.mesh[0].theta = 1.1;
        let setup = LossSetup { source_cutoff: 20, cutoff: 20, herald_epsilon: 1e-14 };
        let pat = MeasurementPattern(vec![3]);
        let state = build_state(&p, 20).unwrap();
        let pure = herald(&state, &pat, 1e-14).unwrap();
        let target = TargetState::new("t", pure.output.amplitudes().to_vec()).unwrap();
        let pt = lossy_pipeline(&p, &pat, &target, 1.0, &setup).unwrap();
        assert!((pt.probability - pure.probability).abs() < 1e-14);
        assert!((pt.fidelity - 1.0).abs() < 1e-12);
        let worse = lossy_pipeline(&p, &pat, &target, 0.9, &setup).unwrap();
        assert!(worse.fidelity < pt.fidelity);
    }

    #[test]
    fn bad_inputs() {
        assert!(loss_kraus(1.2, 4).is_err());
        let dm = DensityMatrix::from_pure(&FockState::vacuum(2, 4).unwrap());
        assert!(apply_loss(&dm, 2, &loss_kraus(0.5, 4).unwrap()).is_err());
        assert!(apply_loss(&dm, 0, &loss_kraus(0.5, 5).unwrap()).is_err());
        assert!(matches!(
            herald_dm(&dm, &MeasurementPattern(vec![1]), 1e-14),
            Err(Error::VoidOutcome { .. })
        ));
    }
}
