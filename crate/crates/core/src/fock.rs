//! Truncated Fock-space states and the matrices of Gaussian primitives.
//!
//! Conventions (fixed crate-wide, see [`Conventions`]):
//!
//! * squeezing `S(ξ) = exp(½(ξ* â² − ξ â†²))`, `ξ = r e^{iφ}`;
//! * displacement `D(α) = exp(α â† − α* â)`;
//! * phase rotation `R(θ) = exp(iθ n̂)`;
//! * beam splitter `BS(θ, φ)` with Heisenberg action
//!   `â → cosθ â + e^{−iφ} sinθ b̂`, `b̂ → −e^{iφ} sinθ â + cosθ b̂`;
//! * quadratures `q̂ = √(ħ/2)(â + â†)`, `ħ = 1` unless overridden.
//!
//! Multimode amplitudes are stored row-major with mode 0 the slowest index, so
//! `|n₀,…,n_{N−1}⟩` lives at `Σ nᵢ·D^{N−1−i}`.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);
pub(crate) const ONE: C64 = C64::new(1.0, 0.0);

/// Number of uniformly spaced phase angles used by every rotation-maximized fidelity.
pub const ROTATION_GRID: usize = 256;

/// Physical conventions shared by the whole crate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Conventions {
    /// Value of ħ in `[q̂, p̂] = iħ`.
    pub hbar: f64,
}

impl Default for Conventions {
    fn default() -> Self {
        Self { hbar: 1.0 }
    }
}

impl Conventions {
    /// Scale factor between `q̂` and `(â + â†)`.
    pub fn quadrature_scale(&self) -> f64 {
        (self.hbar / 2.0).sqrt()
    }
}

/// Squeezing parameter `r` for a squeezing level given in dB, `r = dB·ln10/20`.
pub fn db_to_squeezing(db: f64) -> f64 {
    db * std::f64::consts::LN_10 / 20.0
}

/// Pure state over `num_modes` modes truncated at `cutoff` levels per mode.
#[derive(Debug, Clone, PartialEq)]
pub struct FockState {
    num_modes: usize,
    cutoff: usize,
    amplitudes: Vec<C64>,
}

impl FockState {
    pub fn new(num_modes: usize, cutoff: usize, amplitudes: Vec<C64>) -> Result<Self> {
        check_cutoff(cutoff)?;
        if num_modes == 0 {
            return Err(Error::InvalidParameter("a state needs at least one mode".into()));
        }
        let dim = cutoff.pow(num_modes as u32);
        if amplitudes.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, actual: amplitudes.len() });
        }
        Ok(Self { num_modes, cutoff, amplitudes })
    }

    pub fn vacuum(num_modes: usize, cutoff: usize) -> Result<Self> {
        Self::basis(&vec![0; num_modes], cutoff)
    }

    /// Fock basis state `|n₀,…,n_{N−1}⟩`.
    pub fn basis(levels: &[usize], cutoff: usize) -> Result<Self> {
        check_cutoff(cutoff)?;
        let num_modes = levels.len();
        let mut amplitudes = vec![ZERO; cutoff.pow(num_modes as u32)];
        let mut state = Self { num_modes, cutoff, amplitudes: Vec::new() };
        let idx = state.checked_index(levels)?;
        amplitudes[idx] = ONE;
        state.amplitudes = amplitudes;
        Ok(state)
    }

    pub fn single_mode(amplitudes: Vec<C64>) -> Result<Self> {
        let cutoff = amplitudes.len();
        Self::new(1, cutoff, amplitudes)
    }

    /// Tensor product, `self` occupying the leading modes.
    pub fn tensor(&self, other: &FockState) -> Result<Self> {
        if self.cutoff != other.cutoff {
            return Err(Error::CutoffMismatch { expected: self.cutoff, actual: other.cutoff });
        }
        let mut amplitudes = Vec::with_capacity(self.amplitudes.len() * other.amplitudes.len());
        for a in &self.amplitudes {
            amplitudes.extend(other.amplitudes.iter().map(|b| a * b));
        }
        Self::new(self.num_modes + other.num_modes, self.cutoff, amplitudes)
    }

    pub fn num_modes(&self) -> usize {
        self.num_modes
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn amplitudes_mut(&mut self) -> &mut [C64] {
        &mut self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amplitudes
    }

    /// Flat offset of `|n₀,…⟩`; no bounds checking beyond debug assertions.
    pub fn index(&self, levels: &[usize]) -> usize {
        debug_assert_eq!(levels.len(), self.num_modes);
        levels.iter().fold(0, |acc, &n| acc * self.cutoff + n)
    }

    fn checked_index(&self, levels: &[usize]) -> Result<usize> {
        if levels.len() != self.num_modes {
            return Err(Error::DimensionMismatch { expected: self.num_modes, actual: levels.len() });
        }
        if let Some(&n) = levels.iter().find(|&&n| n >= self.cutoff) {
            return Err(Error::InvalidParameter(format!(
                "Fock level {n} outside cutoff {}",
                self.cutoff
            )));
        }
        Ok(self.index(levels))
    }

    pub fn amplitude(&self, levels: &[usize]) -> Result<C64> {
        Ok(self.amplitudes[self.checked_index(levels)?])
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Copy scaled to unit norm. A zero state is returned unchanged.
    pub fn normalized(&self) -> Self {
        let norm = self.norm_sqr().sqrt();
        let mut out = self.clone();
        if norm > 0.0 {
            out.amplitudes.iter_mut().for_each(|a| *a /= norm);
        }
        out
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &FockState) -> Result<C64> {
        if self.amplitudes.len() != other.amplitudes.len() {
            return Err(Error::DimensionMismatch {
                expected: self.amplitudes.len(),
                actual: other.amplitudes.len(),
            });
        }
        Ok(self.amplitudes.iter().zip(&other.amplitudes).map(|(a, b)| a.conj() * b).sum())
    }

    /// Re-expresses a single- or multimode state at a different cutoff, dropping or
    /// zero-padding levels per mode.
    pub fn with_cutoff(&self, cutoff: usize) -> Result<Self> {
        check_cutoff(cutoff)?;
        let n = self.num_modes;
        let mut out = vec![ZERO; cutoff.pow(n as u32)];
        let keep = cutoff.min(self.cutoff);
        let mut levels = vec![0usize; n];
        for (src, amp) in self.amplitudes.iter().enumerate() {
            let mut rem = src;
            for k in (0..n).rev() {
                levels[k] = rem % self.cutoff;
                rem /= self.cutoff;
            }
            if levels.iter().all(|&l| l < keep) {
                let dst = levels.iter().fold(0, |acc, &l| acc * cutoff + l);
                out[dst] = *amp;
            }
        }
        Self::new(n, cutoff, out)
    }

    /// Photon-number distribution of a single-mode state.
    pub fn photon_distribution(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.norm_sqr()).collect()
    }
}

fn check_cutoff(cutoff: usize) -> Result<()> {
    if cutoff < 2 {
        Err(Error::CutoffTooSmall(cutoff))
    } else {
        Ok(())
    }
}

/// Truncated matrix of a one- or two-mode operator.
///
/// For two-mode operators the row/column index of `|m,n⟩` is `m·D + n`, the first
/// mode of the pair being the slow index.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrix {
    arity: usize,
    cutoff: usize,
    entries: DMatrix<C64>,
}

impl OperatorMatrix {
    pub fn new(arity: usize, cutoff: usize, entries: DMatrix<C64>) -> Result<Self> {
        check_cutoff(cutoff)?;
        if !(1..=2).contains(&arity) {
            return Err(Error::InvalidParameter(format!("unsupported arity {arity}")));
        }
        let dim = cutoff.pow(arity as u32);
        if entries.nrows() != dim || entries.ncols() != dim {
            return Err(Error::DimensionMismatch { expected: dim, actual: entries.nrows() });
        }
        Ok(Self { arity, cutoff, entries })
    }

    pub fn identity(arity: usize, cutoff: usize) -> Result<Self> {
        check_cutoff(cutoff)?;
        let dim = cutoff.pow(arity as u32);
        Self::new(arity, cutoff, DMatrix::identity(dim, dim))
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn entries(&self) -> &DMatrix<C64> {
        &self.entries
    }

    pub fn into_entries(self) -> DMatrix<C64> {
        self.entries
    }

    /// Column `n` as a vector, i.e. the operator applied to `|n⟩`.
    pub fn column(&self, n: usize) -> Vec<C64> {
        self.entries.column(n).iter().copied().collect()
    }

    /// Matrix product `self · rhs`.
    pub fn compose(&self, rhs: &OperatorMatrix) -> Result<Self> {
        if self.cutoff != rhs.cutoff {
            return Err(Error::CutoffMismatch { expected: self.cutoff, actual: rhs.cutoff });
        }
        if self.arity != rhs.arity {
            return Err(Error::ArityMismatch { arity: self.arity, given: rhs.arity });
        }
        Self::new(self.arity, self.cutoff, &self.entries * &rhs.entries)
    }

    pub fn adjoint(&self) -> Self {
        Self { arity: self.arity, cutoff: self.cutoff, entries: self.entries.adjoint() }
    }
}

/// `⟨m|S(r e^{iφ})|n⟩` for `m, n < D`.
pub fn squeeze_matrix(r: f64, phi: f64, cutoff: usize) -> Result<OperatorMatrix> {
    check_cutoff(cutoff)?;
    Ok(OperatorMatrix { arity: 1, cutoff, entries: squeeze_entries(r, phi, cutoff, cutoff) })
}

/// Rows `0..rows`, columns `0..cols` of the squeezing operator.
pub(crate) fn squeeze_entries(r: f64, phi: f64, rows: usize, cols: usize) -> DMatrix<C64> {
    let sech = 1.0 / r.cosh();
    let tanh = r.tanh();
    let e_phi_tanh = C64::from_polar(tanh, phi);
    let mut s = DMatrix::from_element(rows, cols, ZERO);
    s[(0, 0)] = C64::new(sech.sqrt(), 0.0);
    for m in (2..rows).step_by(2) {
        s[(m, 0)] = -((m - 1) as f64 / m as f64).sqrt() * e_phi_tanh * s[(m - 2, 0)];
    }
    for n in 1..cols {
        let nf = n as f64;
        for m in 0..rows {
            if (m + n) % 2 != 0 {
                continue;
            }
            let mut v = ZERO;
            if n >= 2 {
                v += ((nf - 1.0) / nf).sqrt() * e_phi_tanh.conj() * s[(m, n - 2)];
            }
            if m >= 1 {
                v += (m as f64 / nf).sqrt() * sech * s[(m - 1, n - 1)];
            }
            s[(m, n)] = v;
        }
    }
    s
}

/// `⟨m|D(α)|n⟩` for `m, n < D`.
pub fn displace_matrix(alpha: C64, cutoff: usize) -> Result<OperatorMatrix> {
    check_cutoff(cutoff)?;
    let mut d = DMatrix::from_element(cutoff, cutoff, ZERO);
    d[(0, 0)] = C64::new((-0.5 * alpha.norm_sqr()).exp(), 0.0);
    for m in 1..cutoff {
        d[(m, 0)] = alpha / (m as f64).sqrt() * d[(m - 1, 0)];
    }
    let ac = alpha.conj();
    for n in 1..cutoff {
        let inv = 1.0 / (n as f64).sqrt();
        for m in 0..cutoff {
            let mut v = -ac * d[(m, n - 1)];
            if m >= 1 {
                v += (m as f64).sqrt() * d[(m - 1, n - 1)];
            }
            d[(m, n)] = v * inv;
        }
    }
    Ok(OperatorMatrix { arity: 1, cutoff, entries: d })
}

/// Diagonal phase rotation `exp(iθ n̂)`.
pub fn phase_matrix(theta: f64, cutoff: usize) -> Result<OperatorMatrix> {
    check_cutoff(cutoff)?;
    let diag = nalgebra::DVector::from_iterator(
        cutoff,
        (0..cutoff).map(|n| C64::from_polar(1.0, n as f64 * theta)),
    );
    Ok(OperatorMatrix { arity: 1, cutoff, entries: DMatrix::from_diagonal(&diag) })
}

/// Beam splitter as photon-number blocks.
///
/// Block `N` holds `⟨m, N−m|BS|p, N−p⟩` for all `m, p` with both modes below the
/// cutoff; entries outside these blocks vanish because the beam splitter conserves
/// total photon number.
#[derive(Debug, Clone)]
pub struct BeamSplitter {
    cutoff: usize,
    blocks: Vec<PhotonBlock>,
}

#[derive(Debug, Clone)]
struct PhotonBlock {
    /// Smallest first-mode occupation present in the block.
    first: usize,
    len: usize,
    /// Row-major `len × len`, row = output first-mode level offset.
    entries: Vec<C64>,
}

impl PhotonBlock {
    #[inline]
    fn get(&self, m: usize, p: usize) -> C64 {
        self.entries[(m - self.first) * self.len + (p - self.first)]
    }
}

impl BeamSplitter {
    pub fn new(theta: f64, phi: f64, cutoff: usize) -> Result<Self> {
        check_cutoff(cutoff)?;
        let (s, c) = theta.sin_cos();
        // U a† U† = c a† − e^{iφ} s b†,  U b† U† = e^{−iφ} s a† + c b†
        let a_from_a = C64::new(c, 0.0);
        let a_from_b = -C64::from_polar(s, phi);
        let b_from_a = C64::from_polar(s, -phi);
        let b_from_b = C64::new(c, 0.0);
        let sqrt: Vec<f64> = (0..2 * cutoff).map(|k| (k as f64).sqrt()).collect();

        let mut blocks: Vec<PhotonBlock> = Vec::with_capacity(2 * cutoff - 1);
        blocks.push(PhotonBlock { first: 0, len: 1, entries: vec![ONE] });
        for total in 1..=2 * (cutoff - 1) {
            let first = total.saturating_sub(cutoff - 1);
            let last = total.min(cutoff - 1);
            let len = last - first + 1;
            let prev = &blocks[total - 1];
            let prev_get = |m: usize, p: usize| -> C64 {
                if m < prev.first || m >= prev.first + prev.len {
                    ZERO
                } else {
                    prev.get(m, p)
                }
            };
            let mut entries = vec![ZERO; len * len];
            for p in first..=last {
                let q = total - p;
                for m in first..=last {
                    let n = total - m;
                    let v = if p > 0 {
                        // raise mode a of the input: column (p−1, q)
                        let mut acc = ZERO;
                        if m > 0 {
                            acc += a_from_a * sqrt[m] * prev_get(m - 1, p - 1);
                        }
                        if n > 0 {
                            acc += a_from_b * sqrt[n] * prev_get(m, p - 1);
                        }
                        acc / sqrt[p]
                    } else {
                        let mut acc = ZERO;
                        if m > 0 {
                            acc += b_from_a * sqrt[m] * prev_get(m - 1, p);
                        }
                        if n > 0 {
                            acc += b_from_b * sqrt[n] * prev_get(m, p);
                        }
                        acc / sqrt[q]
                    };
                    entries[(m - first) * len + (p - first)] = v;
                }
            }
            blocks.push(PhotonBlock { first, len, entries });
        }
        Ok(Self { cutoff, blocks })
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    /// `⟨m,n|BS|p,q⟩`.
    pub fn element(&self, m: usize, n: usize, p: usize, q: usize) -> C64 {
        let d = self.cutoff;
        if m >= d || n >= d || p >= d || q >= d || m + n != p + q {
            return ZERO;
        }
        self.blocks[m + n].get(m, p)
    }

    pub fn to_matrix(&self) -> OperatorMatrix {
        let d = self.cutoff;
        let mut u = DMatrix::from_element(d * d, d * d, ZERO);
        for (total, block) in self.blocks.iter().enumerate() {
            for m in block.first..block.first + block.len {
                for p in block.first..block.first + block.len {
                    u[(m * d + total - m, p * d + total - p)] = block.get(m, p);
                }
            }
        }
        OperatorMatrix { arity: 2, cutoff: d, entries: u }
    }

    /// Applies the beam splitter in place to modes `(first, second)` of `state`.
    pub fn apply(&self, state: &mut FockState, first: usize, second: usize) -> Result<()> {
        check_modes(state, &[first, second])?;
        if state.cutoff != self.cutoff {
            return Err(Error::CutoffMismatch { expected: state.cutoff, actual: self.cutoff });
        }
        let d = self.cutoff;
        let stride_a = stride(state, first);
        let stride_b = stride(state, second);
        let bases = slice_bases(state, &[first, second]);
        let mut gathered = vec![ZERO; d];
        let amps = &mut state.amplitudes;
        for &base in &bases {
            for (total, block) in self.blocks.iter().enumerate().skip(1) {
                let offs = |m: usize| base + m * stride_a + (total - m) * stride_b;
                for (j, g) in gathered.iter_mut().take(block.len).enumerate() {
                    *g = amps[offs(block.first + j)];
                }
                if gathered[..block.len].iter().all(|g| g.re == 0.0 && g.im == 0.0) {
                    continue;
                }
                for i in 0..block.len {
                    let row = &block.entries[i * block.len..(i + 1) * block.len];
                    let v: C64 = row.iter().zip(&gathered[..block.len]).map(|(u, g)| u * g).sum();
                    amps[offs(block.first + i)] = v;
                }
            }
        }
        Ok(())
    }
}

/// Dense two-mode Fock matrix of `BS(θ, φ)`.
pub fn beamsplitter_matrix(theta: f64, phi: f64, cutoff: usize) -> Result<OperatorMatrix> {
    Ok(BeamSplitter::new(theta, phi, cutoff)?.to_matrix())
}

fn check_modes(state: &FockState, modes: &[usize]) -> Result<()> {
    for (i, &m) in modes.iter().enumerate() {
        if m >= state.num_modes {
            return Err(Error::ModeOutOfRange { index: m, num_modes: state.num_modes });
        }
        if modes[..i].contains(&m) {
            return Err(Error::RepeatedMode(m));
        }
    }
    Ok(())
}

fn stride(state: &FockState, mode: usize) -> usize {
    state.cutoff.pow((state.num_modes - 1 - mode) as u32)
}

/// Flat offsets of all basis states whose digits on `modes` are zero.
fn slice_bases(state: &FockState, modes: &[usize]) -> Vec<usize> {
    let d = state.cutoff;
    let others: Vec<usize> = (0..state.num_modes).filter(|k| !modes.contains(k)).collect();
    let count = d.pow(others.len() as u32);
    (0..count)
        .map(|mut idx| {
            let mut off = 0;
            for &k in others.iter().rev() {
                off += (idx % d) * stride(state, k);
                idx /= d;
            }
            off
        })
        .collect()
}

/// Applies a one-mode matrix to `mode` in place.
pub(crate) fn apply_single_in_place(
    entries: &DMatrix<C64>,
    state: &mut FockState,
    mode: usize,
) {
    let d = state.cutoff;
    let st = stride(state, mode);
    let bases = slice_bases(state, &[mode]);
    let mut gathered = vec![ZERO; d];
    for &base in &bases {
        for (n, g) in gathered.iter_mut().enumerate() {
            *g = state.amplitudes[base + n * st];
        }
        for m in 0..d {
            let mut v = ZERO;
            for (n, g) in gathered.iter().enumerate() {
                v += entries[(m, n)] * g;
            }
            state.amplitudes[base + m * st] = v;
        }
    }
}

/// Contracts `op` against the given mode indices of `state`.
pub fn apply_op(op: &OperatorMatrix, state: &FockState, modes: &[usize]) -> Result<FockState> {
    if op.cutoff != state.cutoff {
        return Err(Error::CutoffMismatch { expected: state.cutoff, actual: op.cutoff });
    }
    if op.arity != modes.len() {
        return Err(Error::ArityMismatch { arity: op.arity, given: modes.len() });
    }
    check_modes(state, modes)?;
    let mut out = state.clone();
    match modes {
        [k] => apply_single_in_place(&op.entries, &mut out, *k),
        [a, b] => {
            let d = state.cutoff;
            let (sa, sb) = (stride(state, *a), stride(state, *b));
            let mut gathered = vec![ZERO; d * d];
            for base in slice_bases(state, modes) {
                for m in 0..d {
                    for n in 0..d {
                        gathered[m * d + n] = state.amplitudes[base + m * sa + n * sb];
                    }
                }
                for m in 0..d {
                    for n in 0..d {
                        let row = m * d + n;
                        let v: C64 =
                            gathered.iter().enumerate().map(|(c, g)| op.entries[(row, c)] * g).sum();
                        out.amplitudes[base + m * sa + n * sb] = v;
                    }
                }
            }
        }
        _ => unreachable!("arity checked above"),
    }
    Ok(out)
}

/// Matrix of `â` truncated at `cutoff`.
pub fn annihilation_matrix(cutoff: usize) -> DMatrix<C64> {
    let mut a = DMatrix::from_element(cutoff, cutoff, ZERO);
    for n in 1..cutoff {
        a[(n - 1, n)] = C64::new((n as f64).sqrt(), 0.0);
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx_eq::*;

    mod approx_eq {
        pub fn close(a: f64, b: f64, tol: f64) -> bool {
            (a - b).abs() <= tol
        }
    }

    fn expm_generator(gen: &DMatrix<C64>) -> DMatrix<C64> {
        gen.clone().exp()
    }

    fn max_abs_diff(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
        (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    fn unitarity_defect(u: &DMatrix<C64>) -> f64 {
        let n = u.nrows();
        max_abs_diff(&(u.adjoint() * u), &DMatrix::identity(n, n))
    }

    #[test]
    fn db_conversion() {
        assert!(close(db_to_squeezing(12.0), 1.381_551, 1e-6));
    }

    #[test]
    fn zero_parameters_give_identity() {
        let id = DMatrix::<C64>::identity(8, 8);
        assert!(max_abs_diff(squeeze_matrix(0.0, 1.3, 8).unwrap().entries(), &id) < 1e-15);
        assert!(max_abs_diff(displace_matrix(ZERO, 8).unwrap().entries(), &id) < 1e-15);
        assert!(max_abs_diff(phase_matrix(0.0, 8).unwrap().entries(), &id) < 1e-15);
        let id2 = DMatrix::<C64>::identity(64, 64);
        assert!(max_abs_diff(beamsplitter_matrix(0.0, 0.4, 8).unwrap().entries(), &id2) < 1e-15);
    }

    #[test]
    fn squeeze_matches_matrix_exponential() {
        // top-left block of exp(½(ξ* a² − ξ a†²)) computed at a much larger cutoff;
        // only low columns are compared since S|n⟩ spreads far beyond n at 12 dB
        let big = 300;
        let a = annihilation_matrix(big);
        let ad = a.adjoint();
        for &(r, phi, cols) in &[(0.7, 0.0, 30), (1.0, 1.1, 20), (1.3816, -2.0, 8)] {
            let xi = C64::from_polar(r, phi);
            let gen = (&a * &a * xi.conj() - &ad * &ad * xi) * C64::new(0.5, 0.0);
            let exact = expm_generator(&gen);
            let s = squeeze_matrix(r, phi, 30).unwrap();
            let got = s.entries().view((0, 0), (30, cols)).into_owned();
            let want = exact.view((0, 0), (30, cols)).into_owned();
            let err = max_abs_diff(&got, &want);
            assert!(err < 1e-6, "r={r} phi={phi} err={err:e}");
        }
    }

    #[test]
    fn displace_matches_matrix_exponential() {
        let big = 120;
        let a = annihilation_matrix(big);
        let alpha = C64::new(0.8, -0.5);
        let gen = a.adjoint() * alpha - &a * alpha.conj();
        let exact = expm_generator(&gen);
        let d = displace_matrix(alpha, 30).unwrap();
        let block = exact.view((0, 0), (30, 30)).into_owned();
        assert!(max_abs_diff(d.entries(), &block) < 1e-9);
    }

    #[test]
    fn squeeze_parity_structure() {
        let s = squeeze_matrix(1.2, 0.3, 20).unwrap();
        for m in 0..20 {
            for n in 0..20 {
                if (m + n) % 2 == 1 {
                    assert_eq!(s.entries()[(m, n)], ZERO);
                }
            }
        }
    }

    #[test]
    fn active_column_norms() {
        let d = 30;
        let norm = |op: &OperatorMatrix, n: usize| -> f64 {
            op.column(n).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
        };
        let dis = displace_matrix(C64::from_polar(1.0, 0.7), d).unwrap();
        for n in 0..=d / 2 {
            assert!((norm(&dis, n) - 1.0).abs() < 1e-5, "displace col {n}");
        }
        let s = squeeze_matrix(0.5, 0.7, d).unwrap();
        for n in 0..=5 {
            assert!((norm(&s, n) - 1.0).abs() < 1e-4, "squeeze col {n}");
        }
        // at 12 dB even the vacuum column leaks: compare with the closed-form tail
        let r = 1.4_f64;
        let s = squeeze_matrix(r, 0.0, d).unwrap();
        let t2 = r.tanh().powi(2);
        let mut term = 1.0 / r.cosh();
        let mut kept = 0.0;
        for m in 0..d / 2 {
            kept += term;
            term *= t2 * ((2 * m + 1) as f64) / ((2 * m + 2) as f64);
        }
        assert!((norm(&s, 0).powi(2) - kept).abs() < 1e-12);
    }

    #[test]
    fn passive_ops_are_unitary() {
        for d in [2, 5, 12] {
            assert!(unitarity_defect(phase_matrix(0.77, d).unwrap().entries()) < 1e-12);
            let bs = beamsplitter_matrix(0.9, 2.1, d).unwrap();
            // exactly unitary on every total-photon block that fits
            let u = bs.entries();
            for total in 0..d {
                let idx: Vec<usize> = (0..=total).map(|m| m * d + total - m).collect();
                let mut blk = DMatrix::from_element(idx.len(), idx.len(), ZERO);
                for (i, &r) in idx.iter().enumerate() {
                    for (j, &c) in idx.iter().enumerate() {
                        blk[(i, j)] = u[(r, c)];
                    }
                }
                assert!(unitarity_defect(&blk) < 1e-12, "d={d} N={total}");
            }
        }
    }

    #[test]
    fn block_apply_matches_dense_apply() {
        let d = 6;
        let bs = BeamSplitter::new(0.4, 1.3, d).unwrap();
        let dense = bs.to_matrix();
        let amps: Vec<C64> = (0..d * d * d)
            .map(|k| C64::new((k as f64 * 0.37).sin(), (k as f64 * 0.11).cos()))
            .collect();
        let state = FockState::new(3, d, amps).unwrap();
        for (a, b) in [(0, 1), (1, 2), (2, 0)] {
            let want = apply_op(&dense, &state, &[a, b]).unwrap();
            let mut got = state.clone();
            bs.apply(&mut got, a, b).unwrap();
            let err = want
                .amplitudes()
                .iter()
                .zip(got.amplitudes())
                .map(|(x, y)| (x - y).norm())
                .fold(0.0, f64::max);
            assert!(err < 1e-12, "modes ({a},{b}) err {err}");
        }
    }

    #[test]
    fn apply_op_rejects_bad_modes() {
        let s = FockState::vacuum(2, 4).unwrap();
        let p = phase_matrix(0.1, 4).unwrap();
        assert!(matches!(apply_op(&p, &s, &[2]), Err(Error::ModeOutOfRange { .. })));
        let bs = beamsplitter_matrix(0.1, 0.0, 4).unwrap();
        assert!(matches!(apply_op(&bs, &s, &[1, 1]), Err(Error::RepeatedMode(1))));
        assert!(matches!(apply_op(&bs, &s, &[0]), Err(Error::ArityMismatch { .. })));
        let p5 = phase_matrix(0.1, 5).unwrap();
        assert!(matches!(apply_op(&p5, &s, &[0]), Err(Error::CutoffMismatch { .. })));
    }

    #[test]
    fn state_constructors_validate() {
        assert!(matches!(FockState::vacuum(1, 1), Err(Error::CutoffTooSmall(1))));
        assert!(FockState::new(2, 3, vec![ZERO; 8]).is_err());
        let s = FockState::basis(&[1, 2], 3).unwrap();
        assert_eq!(s.amplitudes()[5], ONE);
        assert!(FockState::basis(&[3, 0], 3).is_err());
    }

    #[test]
    fn with_cutoff_embeds_and_truncates() {
        let s = FockState::basis(&[1, 2], 4).unwrap();
        let up = s.with_cutoff(6).unwrap();
        assert_eq!(up.amplitude(&[1, 2]).unwrap(), ONE);
        let down = s.with_cutoff(2).unwrap();
        assert_eq!(down.norm_sqr(), 0.0);
    }
}
