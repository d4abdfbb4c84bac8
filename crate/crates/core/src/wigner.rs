//! Wigner quasi-probability of single-mode states on a rectangular phase-space grid.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{Conventions, FockState, C64, ZERO};

/// Rectangular grid in `(x, p)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub x_points: usize,
    pub p_min: f64,
    pub p_max: f64,
    pub p_points: usize,
}

impl GridSpec {
    pub fn square(half_width: f64, points: usize) -> Self {
        Self {
            x_min: -half_width,
            x_max: half_width,
            x_points: points,
            p_min: -half_width,
            p_max: half_width,
            p_points: points,
        }
    }

    fn axis(min: f64, max: f64, points: usize) -> Vec<f64> {
        match points {
            0 => Vec::new(),
            1 => vec![min],
            _ => (0..points)
                .map(|i| min + (max - min) * i as f64 / (points - 1) as f64)
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WignerGrid {
    pub x_axis: Vec<f64>,
    pub p_axis: Vec<f64>,
    /// `values[(i, j)] = W(x_axis[i], p_axis[j])`.
    pub values: DMatrix<f64>,
    pub hbar: f64,
}

impl WignerGrid {
    /// Riemann-sum integral over the grid.
    pub fn integral(&self) -> f64 {
        let step = |axis: &[f64]| {
            if axis.len() > 1 {
                (axis[axis.len() - 1] - axis[0]) / (axis.len() - 1) as f64
            } else {
                1.0
            }
        };
        self.values.sum() * step(&self.x_axis) * step(&self.p_axis)
    }

    pub fn min(&self) -> f64 {
        self.values.min()
    }

    pub fn max(&self) -> f64 {
        self.values.max()
    }
}

/// `W(x, p)` of a single-mode density matrix at one phase-space point.
///
/// Iterative evaluation of the Laguerre expansion; `rho[(m, n)] = ⟨m|ρ|n⟩`.
pub fn wigner_point(rho: &DMatrix<C64>, x: f64, p: f64, conv: Conventions) -> f64 {
    let dim = rho.nrows();
    let g = (2.0 / conv.hbar).sqrt();
    let a = C64::new(x, p) * (0.5 * g);
    let two_a = a * 2.0;
    let two_ac = a.conj() * 2.0;
    let sqrt: Vec<f64> = (0..dim.max(1)).map(|k| (k as f64).sqrt()).collect();

    let mut w = vec![ZERO; dim];
    w[0] = C64::new((-2.0 * a.norm_sqr()).exp() / std::f64::consts::PI, 0.0);
    let mut acc = rho[(0, 0)].re * w[0].re;
    for n in 1..dim {
        w[n] = two_a * w[n - 1] / sqrt[n];
        acc += 2.0 * (rho[(0, n)] * w[n]).re;
    }
    for m in 1..dim {
        let mut temp = w[m];
        w[m] = (two_ac * temp - sqrt[m] * w[m - 1]) / sqrt[m];
        acc += (rho[(m, m)] * w[m]).re;
        for n in m + 1..dim {
            let next = (two_a * w[n - 1] - sqrt[m] * temp) / sqrt[n];
            temp = w[n];
            w[n] = next;
            acc += 2.0 * (rho[(m, n)] * w[n]).re;
        }
    }
    0.5 * acc * g * g
}

/// Wigner function of a single-mode density matrix on `grid`.
pub fn wigner_dm(rho: &DMatrix<C64>, grid: &GridSpec, conv: Conventions) -> Result<WignerGrid> {
    if rho.nrows() != rho.ncols() {
        return Err(Error::DimensionMismatch { expected: rho.nrows(), actual: rho.ncols() });
    }
    let x_axis = GridSpec::axis(grid.x_min, grid.x_max, grid.x_points);
    let p_axis = GridSpec::axis(grid.p_min, grid.p_max, grid.p_points);
    let values = DMatrix::from_fn(x_axis.len(), p_axis.len(), |i, j| {
        wigner_point(rho, x_axis[i], p_axis[j], conv)
    });
    Ok(WignerGrid { x_axis, p_axis, values, hbar: conv.hbar })
}

/// Wigner function of a single-mode pure state.
pub fn wigner(state: &FockState, grid: &GridSpec, conv: Conventions) -> Result<WignerGrid> {
    if state.num_modes() != 1 {
        return Err(Error::NotSingleMode(state.num_modes()));
    }
    wigner_dm(&pure_density(state.amplitudes()), grid, conv)
}

pub(crate) fn pure_density(amps: &[C64]) -> DMatrix<C64> {
    let d = amps.len();
    DMatrix::from_fn(d, d, |m, n| amps[m] * amps[n].conj())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::displace_matrix;
    use std::f64::consts::PI;

    fn conv() -> Conventions {
        Conventions::default()
    }

    #[test]
    fn vacuum_and_single_photon_at_origin() {
        let vac = FockState::basis(&[0], 10).unwrap();
        let one = FockState::basis(&[1], 10).unwrap();
        let rho0 = pure_density(vac.amplitudes());
        let rho1 = pure_density(one.amplitudes());
        assert!((wigner_point(&rho0, 0.0, 0.0, conv()) - 1.0 / PI).abs() < 1e-14);
        assert!((wigner_point(&rho1, 0.0, 0.0, conv()) + 1.0 / PI).abs() < 1e-14);
    }

    #[test]
    fn coherent_state_is_displaced_gaussian() {
        let beta = C64::new(1.0, -0.5);
        let d = displace_matrix(beta, 40).unwrap();
        let rho = pure_density(&d.column(0));
        for &(x, p) in &[(0.3, 0.1), (1.2, -0.9), (-0.5, 0.4)] {
            let (x0, p0) = (2f64.sqrt() * beta.re, 2f64.sqrt() * beta.im);
            let want = (-(x - x0).powi(2) - (p - p0).powi(2)).exp() / PI;
            assert!((wigner_point(&rho, x, p, conv()) - want).abs() < 1e-12);
        }
    }

    #[test]
    fn hbar_two_rescales_phase_space() {
        let rho = pure_density(FockState::basis(&[0], 6).unwrap().amplitudes());
        let c2 = Conventions { hbar: 2.0 };
        // vacuum variance ħ/2 in each quadrature
        let want = (-(1.0f64 + 0.25) / 2.0).exp() / (2.0 * PI);
        assert!((wigner_point(&rho, 1.0, 0.5, c2) - want).abs() < 1e-14);
    }

    #[test]
    fn grid_integral_matches_trace() {
        let amps: Vec<C64> = (0..12).map(|k| C64::new(1.0 / (k as f64 + 1.0), 0.3 * k as f64 % 1.0)).collect();
        let state = FockState::single_mode(amps).unwrap().normalized();
        let grid = wigner(&state, &GridSpec::square(6.0, 201), conv()).unwrap();
        assert!((grid.integral() - 1.0).abs() < 1e-2);
    }

    #[test]
    fn multimode_rejected() {
        let s = FockState::vacuum(2, 4).unwrap();
        assert!(matches!(wigner(&s, &GridSpec::square(1.0, 3), conv()), Err(Error::NotSingleMode(2))));
    }
}
