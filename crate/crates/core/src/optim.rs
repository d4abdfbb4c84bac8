//! Bounded quasi-Newton descent and basin-hopping over box-constrained real vectors.
//!
//! Interval-bounded coordinates are optimized through `x = c + h·tanh(u)`, periodic
//! ones directly (wrapped on output), fixed ones not at all. Gradients are two-sided
//! finite differences in the unbounded coordinates.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Bound {
    Interval { lo: f64, hi: f64 },
    Periodic { period: f64 },
    Fixed { value: f64 },
}

impl Bound {
    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Bound::Interval { lo, hi } => lo.is_finite() && hi.is_finite() && lo < hi,
            Bound::Periodic { period } => period.is_finite() && period > 0.0,
            Bound::Fixed { value } => value.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid bound {self:?}")))
        }
    }

    fn contains(&self, x: f64) -> bool {
        match *self {
            Bound::Interval { lo, hi } => x >= lo && x <= hi,
            Bound::Periodic { .. } => x.is_finite(),
            Bound::Fixed { value } => x == value,
        }
    }

    /// Uniform draw over the feasible set.
    fn sample(&self, rng: &mut impl Rng) -> f64 {
        match *self {
            Bound::Interval { lo, hi } => rng.gen_range(lo..hi),
            Bound::Periodic { period } => rng.gen_range(0.0..period),
            Bound::Fixed { value } => value,
        }
    }
}

/// Map between bounded parameters and the unconstrained search space.
#[derive(Debug, Clone)]
struct Transform {
    bounds: Vec<Bound>,
    free: Vec<usize>,
}

/// Largest |tanh(u)| used when pulling a boundary point inside the box.
const EDGE: f64 = 1.0 - 1e-9;

impl Transform {
    fn new(bounds: &[Bound]) -> Result<Self> {
        for b in bounds {
            b.validate()?;
        }
        let free = bounds
            .iter()
            .enumerate()
            .filter(|(_, b)| !matches!(b, Bound::Fixed { .. }))
            .map(|(i, _)| i)
            .collect();
        Ok(Self { bounds: bounds.to_vec(), free })
    }

    fn to_unbounded(&self, x: &[f64]) -> Vec<f64> {
        self.free
            .iter()
            .map(|&i| match self.bounds[i] {
                Bound::Interval { lo, hi } => {
                    let (c, h) = ((lo + hi) / 2.0, (hi - lo) / 2.0);
                    ((x[i] - c) / h).clamp(-EDGE, EDGE).atanh()
                }
                _ => x[i],
            })
            .collect()
    }

    fn to_bounded(&self, u: &[f64]) -> Vec<f64> {
        let mut x: Vec<f64> = self
            .bounds
            .iter()
            .map(|b| match *b {
                Bound::Fixed { value } => value,
                _ => 0.0,
            })
            .collect();
        for (k, &i) in self.free.iter().enumerate() {
            x[i] = match self.bounds[i] {
                Bound::Interval { lo, hi } => (lo + hi) / 2.0 + (hi - lo) / 2.0 * u[k].tanh(),
                _ => u[k],
            };
        }
        x
    }

    /// Wraps periodic coordinates into `[0, period)`.
    fn canonical(&self, x: &mut [f64]) {
        for (xi, b) in x.iter_mut().zip(&self.bounds) {
            if let Bound::Periodic { period } = *b {
                *xi = xi.rem_euclid(period);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LocalConfig {
    pub max_iterations: usize,
    /// Finite-difference step in the unbounded coordinates.
    pub gradient_step: f64,
    /// Stop when the gradient max-norm falls below this.
    pub gradient_tolerance: f64,
    /// Stop when an accepted step changes `f` by less than this (relative).
    pub function_tolerance: f64,
    pub memory: usize,
}

impl Default for LocalConfig {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            gradient_step: 1e-6,
            gradient_tolerance: 1e-7,
            function_tolerance: 1e-12,
            memory: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    /// A non-finite objective value stopped the descent early.
    pub aborted: bool,
}

fn gradient<F>(f: &F, transform: &Transform, u: &[f64], h: f64) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    (0..u.len())
        .into_par_iter()
        .map(|k| {
            let mut up = u.to_vec();
            let mut dn = u.to_vec();
            up[k] += h;
            dn[k] -= h;
            (f(&transform.to_bounded(&up)) - f(&transform.to_bounded(&dn))) / (2.0 * h)
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Limited-memory BFGS from `x0` within `bounds`.
pub fn local_minimize<F>(f: &F, bounds: &[Bound], x0: &[f64], cfg: &LocalConfig) -> Result<LocalResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let transform = Transform::new(bounds)?;
    if x0.len() != bounds.len() {
        return Err(Error::DimensionMismatch { expected: bounds.len(), actual: x0.len() });
    }
    if let Some(i) = (0..x0.len()).find(|&i| !bounds[i].contains(x0[i])) {
        return Err(Error::InvalidParameter(format!("x0[{i}] = {} outside {:?}", x0[i], bounds[i])));
    }
    let mut u = transform.to_unbounded(x0);
    let mut fx = f(x0);
    let mut evaluations = 1;
    if !fx.is_finite() {
        return Err(Error::NonFinite);
    }
    let start = u.clone();
    let finish = |u: &[f64], fx: f64, iterations, evaluations, converged, aborted| {
        // an unmoved descent hands back x0 itself, not its tanh round trip
        let mut x = if u == start.as_slice() { x0.to_vec() } else { transform.to_bounded(u) };
        transform.canonical(&mut x);
        Ok(LocalResult { x, f: fx, iterations, evaluations, converged, aborted })
    };
    if u.is_empty() {
        return finish(&u, fx, 0, evaluations, true, false);
    }

    let n = u.len();
    let mut g = gradient(f, &transform, &u, cfg.gradient_step);
    evaluations += 2 * n;
    let mut history: Vec<(Vec<f64>, Vec<f64>, f64)> = Vec::with_capacity(cfg.memory);
    let mut iterations = 0;
    while iterations < cfg.max_iterations {
        if g.iter().any(|v| !v.is_finite()) {
            return finish(&u, fx, iterations, evaluations, false, true);
        }
        if g.iter().fold(0.0f64, |m, v| m.max(v.abs())) < cfg.gradient_tolerance {
            return finish(&u, fx, iterations, evaluations, true, false);
        }
        iterations += 1;

        // two-loop recursion
        let mut d: Vec<f64> = g.iter().map(|v| -v).collect();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = rho * dot(s, &d);
            d.iter_mut().zip(y).for_each(|(di, yi)| *di -= a * yi);
            alphas.push(a);
        }
        if let Some((s, y, _)) = history.last() {
            let gamma = dot(s, y) / dot(y, y);
            d.iter_mut().for_each(|di| *di *= gamma);
        } else {
            let gnorm = dot(&g, &g).sqrt();
            d.iter_mut().for_each(|di| *di /= gnorm.max(1.0));
        }
        for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &d);
            d.iter_mut().zip(s).for_each(|(di, si)| *di += (a - b) * si);
        }
        let mut slope = dot(&g, &d);
        if slope >= 0.0 {
            history.clear();
            d = g.iter().map(|v| -v).collect();
            slope = dot(&g, &d);
        }

        // backtracking Armijo line search
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let trial: Vec<f64> = u.iter().zip(&d).map(|(ui, di)| ui + step * di).collect();
            let ft = f(&transform.to_bounded(&trial));
            evaluations += 1;
            if !ft.is_finite() {
                return finish(&u, fx, iterations, evaluations, false, true);
            }
            if ft <= fx + 1e-4 * step * slope {
                accepted = Some((trial, ft));
                break;
            }
            step *= 0.5;
        }
        let Some((u_new, f_new)) = accepted else {
            if history.is_empty() {
                return finish(&u, fx, iterations, evaluations, true, false);
            }
            history.clear();
            continue;
        };
        let g_new = gradient(f, &transform, &u_new, cfg.gradient_step);
        evaluations += 2 * n;
        let s: Vec<f64> = u_new.iter().zip(&u).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if history.len() == cfg.memory.max(1) {
                history.remove(0);
            }
            history.push((s, y, 1.0 / sy));
        }
        let change = fx - f_new;
        u = u_new;
        fx = f_new;
        g = g_new;
        if change.abs() <= cfg.function_tolerance * fx.abs().max(1.0) {
            return finish(&u, fx, iterations, evaluations, true, false);
        }
    }
    finish(&u, fx, iterations, evaluations, false, false)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BasinConfig {
    /// Perturb-and-descend rounds per restart after the initial descent.
    pub hops: usize,
    /// Half-width of the uniform perturbation, in parameter units.
    pub step_scale: f64,
    /// Optional per-coordinate multipliers of `step_scale`.
    pub step_weights: Option<Vec<f64>>,
    /// Metropolis temperature; 0 accepts only improvements.
    pub temperature: f64,
    pub restarts: usize,
    pub seed: u64,
    /// Stop a restart after this many hops without a new restart-best.
    pub patience: Option<usize>,
    pub local: LocalConfig,
}

impl Default for BasinConfig {
    fn default() -> Self {
        Self {
            hops: 150,
            step_scale: 0.4,
            step_weights: None,
            temperature: 1.0,
            restarts: 10,
            seed: 0,
            patience: None,
            local: LocalConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartSummary {
    pub index: usize,
    pub best: f64,
    /// Loss of the accepted minimum after the initial descent and after each hop.
    pub accepted: Vec<f64>,
    /// Running restart-best after the initial descent and after each hop.
    pub best_trace: Vec<f64>,
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BasinResult {
    pub x: Vec<f64>,
    pub f: f64,
    /// Running global best, restarts concatenated in index order.
    pub trace: Vec<f64>,
    pub restarts: Vec<RestartSummary>,
    pub evaluations: usize,
}

/// Seed of restart `index` derived from the run seed.
pub fn restart_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Basin-hopping: random perturbation of the accepted minimum, local descent,
/// Metropolis acceptance; independent restarts from random starts (restart 0 from
/// `x0` when given). Deterministic for a fixed seed.
pub fn basin_hop<F>(f: &F, bounds: &[Bound], x0: Option<&[f64]>, cfg: &BasinConfig) -> Result<BasinResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    Transform::new(bounds)?;
    if let Some(w) = &cfg.step_weights {
        if w.len() != bounds.len() {
            return Err(Error::DimensionMismatch { expected: bounds.len(), actual: w.len() });
        }
    }
    let restarts = cfg.restarts.max(1);
    let runs: Vec<Result<(Vec<f64>, RestartSummary)>> = (0..restarts)
        .into_par_iter()
        .map(|index| {
            let mut rng = ChaCha8Rng::seed_from_u64(restart_seed(cfg.seed, index));
            let start: Vec<f64> = match (index, x0) {
                (0, Some(x)) => x.to_vec(),
                _ => bounds.iter().map(|b| b.sample(&mut rng)).collect(),
            };
            single_chain(f, bounds, &start, cfg, index, &mut rng)
        })
        .collect();

    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut trace = Vec::new();
    let mut summaries = Vec::with_capacity(restarts);
    let mut evaluations = 0;
    for run in runs {
        let (x, summary) = run?;
        let current = best.as_ref().map_or(f64::INFINITY, |b| b.1);
        trace.extend(summary.best_trace.iter().map(|&v| v.min(current)));
        if summary.best < current {
            best = Some((x, summary.best));
        }
        evaluations += summary.evaluations;
        summaries.push(summary);
    }
    let (x, fx) = best.ok_or(Error::NonFinite)?;
    Ok(BasinResult { x, f: fx, trace, restarts: summaries, evaluations })
}

fn single_chain<F>(
    f: &F,
    bounds: &[Bound],
    start: &[f64],
    cfg: &BasinConfig,
    index: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<f64>, RestartSummary)>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let first = local_minimize(f, bounds, start, &cfg.local)?;
    let mut evaluations = first.evaluations;
    let (mut cur_x, mut cur_f) = (first.x, first.f);
    let (mut best_x, mut best_f) = (cur_x.clone(), cur_f);
    let mut accepted = vec![cur_f];
    let mut best_trace = vec![best_f];
    let mut stale = 0;
    for _ in 0..cfg.hops {
        let trial: Vec<f64> = cur_x
            .iter()
            .enumerate()
            .map(|(i, &xi)| {
                let w = cfg.step_weights.as_ref().map_or(1.0, |w| w[i]);
                perturb(xi, bounds[i], cfg.step_scale * w, rng)
            })
            .collect();
        let u: f64 = rng.gen();
        let result = match local_minimize(f, bounds, &trial, &cfg.local) {
            Ok(r) => r,
            Err(Error::NonFinite) => {
                accepted.push(cur_f);
                best_trace.push(best_f);
                continue;
            }
            Err(e) => return Err(e),
        };
        evaluations += result.evaluations;
        let accept = result.f < cur_f
            || (cfg.temperature > 0.0 && u < (-(result.f - cur_f) / cfg.temperature).exp());
        if accept {
            cur_x = result.x;
            cur_f = result.f;
        }
        if cur_f < best_f {
            best_f = cur_f;
            best_x = cur_x.clone();
            stale = 0;
        } else {
            stale += 1;
        }
        accepted.push(cur_f);
        best_trace.push(best_f);
        if cfg.patience.is_some_and(|p| stale >= p) {
            break;
        }
    }
    Ok((best_x, RestartSummary { index, best: best_f, accepted, best_trace, evaluations }))
}

fn perturb(x: f64, bound: Bound, scale: f64, rng: &mut impl Rng) -> f64 {
    let step = if scale > 0.0 { rng.gen_range(-scale..=scale) } else { 0.0 };
    match bound {
        Bound::Fixed { value } => value,
        Bound::Periodic { period } => (x + step).rem_euclid(period),
        Bound::Interval { lo, hi } => {
            // reflect back into the box
            let mut y = x + step;
            let w = hi - lo;
            y = (y - lo).rem_euclid(2.0 * w);
            if y > w {
                y = 2.0 * w - y;
            }
            lo + y
        }
    }
}
