//! The N-particle system with time-evolving weights:
//! `dx_i/dt = (1/N) sum_j m_j a(x_j - x_i)`, `dm_i/dt = (1/N) sum_j S(x_i, m_i, x_j, m_j)`,
//! self-term included.

use crate::field::{DensityField, ProductDensity, XProfile, MProfile};
use crate::kernels::Kernels;
use crate::numerics::{wrap_unit, CompensatedSum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::{self, Write};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParticleError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("non-finite state detected at step {step}")]
    NonFinite { step: usize },
    #[error("density is not of product form (max relative deviation {deviation:.3e} > {tolerance:.1e})")]
    NotProductForm { deviation: f64, tolerance: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParticleEnsemble {
    pub dim: usize,
    /// Row-major `N x d`, each entry in [0, 1).
    pub positions: Vec<f64>,
    pub weights: Vec<f64>,
    pub time: f64,
}

impl ParticleEnsemble {
    pub fn new(dim: usize, positions: Vec<f64>, weights: Vec<f64>) -> Result<Self, ParticleError> {
        if !(dim == 1 || dim == 2) || positions.len() != weights.len() * dim {
            return Err(ParticleError::InvalidArgument("positions must be N x d with d in {1, 2}".into()));
        }
        if weights.iter().any(|m| !(*m >= 0.0)) {
            return Err(ParticleError::InvalidArgument("weights must be nonnegative".into()));
        }
        let positions = positions.into_iter().map(wrap_unit).collect();
        Ok(Self { dim, positions, weights, time: 0.0 })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn position(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }

    /// Particle `perm[i]` of `self` becomes particle `i`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut positions = Vec::with_capacity(self.positions.len());
        let mut weights = Vec::with_capacity(self.len());
        for &p in perm {
            positions.extend_from_slice(self.position(p));
            weights.push(self.weights[p]);
        }
        Self { dim: self.dim, positions, weights, time: self.time }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WeightedEmpirical {
    /// `(x_i, m_i / N)`.
    pub atoms: Vec<(Vec<f64>, f64)>,
    pub total_mass: f64,
}

pub fn weighted_empirical(ensemble: &ParticleEnsemble) -> WeightedEmpirical {
    let n = ensemble.len() as f64;
    let atoms: Vec<(Vec<f64>, f64)> =
        (0..ensemble.len()).map(|i| (ensemble.position(i).to_vec(), ensemble.weights[i] / n)).collect();
    let total_mass = CompensatedSum::new();
    let mut total = total_mass;
    for (_, w) in &atoms {
        total.add(*w);
    }
    WeightedEmpirical { atoms, total_mass: total.value() }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Drift {
    pub dx: Vec<f64>,
    pub dm: Vec<f64>,
}

/// Per-particle factors of a separable influence kernel, so the pair loop
/// only evaluates `s(x_i - x_j)`.
struct WeightFactors {
    c1: Vec<f64>,
    c2: Vec<f64>,
}

fn weight_factors(ensemble: &ParticleEnsemble, kernels: &Kernels) -> Option<WeightFactors> {
    let (chi1, chi2) = kernels.influence.profiles()?;
    Some(WeightFactors {
        c1: ensemble.weights.iter().map(|m| chi1.eval(*m)[0]).collect(),
        c2: ensemble.weights.iter().map(|m| chi2.eval(*m)[0]).collect(),
    })
}

/// Contribution of particles `js` to particle `i`.
#[inline]
fn pair_sums(
    ensemble: &ParticleEnsemble,
    kernels: &Kernels,
    factors: &Option<WeightFactors>,
    i: usize,
    js: std::ops::Range<usize>,
) -> ([f64; 2], f64) {
    let d = ensemble.dim;
    let xi = ensemble.position(i);
    let a = &kernels.interaction;
    let inf = &kernels.influence;
    let s_spec = inf.s_spec().filter(|s| s.amplitude != 0.0);
    let a_zero = a.is_zero();
    let mut vx = [0.0f64; 2];
    let mut vm = 0.0f64;
    let mut z = [0.0f64; 2];
    for j in js {
        let xj = ensemble.position(j);
        let mj = ensemble.weights[j];
        if !a_zero {
            for k in 0..d {
                z[k] = xj[k] - xi[k];
            }
            let v = a.at(&z[..d]);
            vx[0] += mj * v[0];
            vx[1] += mj * v[1];
        }
        if let Some(s) = s_spec {
            for k in 0..d {
                z[k] = xi[k] - xj[k];
            }
            match factors {
                Some(f) => {
                    let w = f.c1[i] * f.c2[j];
                    if w != 0.0 {
                        vm += w * s.at(&z[..d]);
                    }
                }
                None => vm += ensemble.weights[i] * mj * s.at(&z[..d]),
            }
        }
    }
    (vx, vm)
}

fn drift_with(ensemble: &ParticleEnsemble, kernels: &Kernels, tile: Option<usize>) -> Drift {
    let n = ensemble.len();
    let d = ensemble.dim;
    let inv_n = 1.0 / n as f64;
    let inert = kernels.interaction.is_zero() && kernels.influence.s_spec().is_none_or(|s| s.amplitude == 0.0);
    if inert {
        return Drift { dx: vec![0.0; n * d], dm: vec![0.0; n] };
    }
    let factors = weight_factors(ensemble, kernels);
    let per: Vec<([f64; 2], f64)> = (0..n)
        .into_par_iter()
        .map(|i| match tile {
            None => pair_sums(ensemble, kernels, &factors, i, 0..n),
            Some(t) => {
                let mut vx = [0.0; 2];
                let mut vm = 0.0;
                let mut start = 0;
                while start < n {
                    let (px, pm) = pair_sums(ensemble, kernels, &factors, i, start..(start + t).min(n));
                    vx[0] += px[0];
                    vx[1] += px[1];
                    vm += pm;
                    start += t;
                }
                (vx, vm)
            }
        })
        .collect();
    let mut dx = Vec::with_capacity(n * d);
    let mut dm = Vec::with_capacity(n);
    for (vx, vm) in per {
        dx.extend_from_slice(&[vx[0] * inv_n, vx[1] * inv_n][..d]);
        dm.push(vm * inv_n);
    }
    Drift { dx, dm }
}

/// Reference O(N^2) pairwise drift, parallel over the outer index.
pub fn drift(ensemble: &ParticleEnsemble, kernels: &Kernels) -> Drift {
    drift_with(ensemble, kernels, None)
}

/// Same sums accumulated tile by tile over the inner index.
pub fn drift_tiled(ensemble: &ParticleEnsemble, kernels: &Kernels, tile: usize) -> Drift {
    drift_with(ensemble, kernels, Some(tile.max(1)))
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Euler,
    #[default]
    Heun,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub frames: Vec<ParticleEnsemble>,
}

impl Trajectory {
    pub fn last(&self) -> &ParticleEnsemble {
        self.frames.last().expect("trajectory has at least one frame")
    }

    /// CSV `t,particle,x1[,x2],m`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let d = self.frames.first().map_or(1, |f| f.dim);
        writeln!(w, "{}", if d == 1 { "t,particle,x1,m" } else { "t,particle,x1,x2,m" })?;
        for f in &self.frames {
            for i in 0..f.len() {
                let x = f.position(i);
                if d == 1 {
                    writeln!(w, "{},{},{},{}", f.time, i, x[0], f.weights[i])?;
                } else {
                    writeln!(w, "{},{},{},{},{}", f.time, i, x[0], x[1], f.weights[i])?;
                }
            }
        }
        Ok(())
    }
}

fn axpy_state(base: &ParticleEnsemble, k: &Drift, dt: f64) -> ParticleEnsemble {
    ParticleEnsemble {
        dim: base.dim,
        positions: base.positions.iter().zip(&k.dx).map(|(x, v)| wrap_unit(x + dt * v)).collect(),
        weights: base.weights.iter().zip(&k.dm).map(|(m, v)| m + dt * v).collect(),
        time: base.time + dt,
    }
}

/// One explicit step of size `dt`.
pub fn step(state: &ParticleEnsemble, kernels: &Kernels, dt: f64, scheme: Scheme) -> ParticleEnsemble {
    let k1 = drift(state, kernels);
    match scheme {
        Scheme::Euler => axpy_state(state, &k1, dt),
        Scheme::Heun => {
            let mid = axpy_state(state, &k1, dt);
            let k2 = drift(&mid, kernels);
            let avg = Drift {
                dx: k1.dx.iter().zip(&k2.dx).map(|(a, b)| 0.5 * (a + b)).collect(),
                dm: k1.dm.iter().zip(&k2.dm).map(|(a, b)| 0.5 * (a + b)).collect(),
            };
            axpy_state(state, &avg, dt)
        }
    }
}

/// Fixed-step integration to `t_end`; frames every `store_every` steps plus
/// the initial and final states. A final partial step lands exactly on `t_end`.
pub fn simulate(
    init: &ParticleEnsemble,
    kernels: &Kernels,
    t_end: f64,
    dt: f64,
    scheme: Scheme,
    store_every: usize,
) -> Result<Trajectory, ParticleError> {
    if !(dt > 0.0) || !(t_end >= dt) || !t_end.is_finite() {
        return Err(ParticleError::InvalidArgument(format!("need dt > 0 and T >= dt (dt={dt}, T={t_end})")));
    }
    if kernels.dim() != init.dim {
        return Err(ParticleError::InvalidArgument("kernel and ensemble dimensions differ".into()));
    }
    let store_every = store_every.max(1);
    let ratio = t_end / dt;
    let steps = if (ratio - ratio.round()).abs() < 1e-9 * ratio.max(1.0) { ratio.round() as usize } else { ratio.ceil() as usize };
    let t0 = init.time;
    let mut state = init.clone();
    let mut frames = vec![state.clone()];
    for s in 1..=steps {
        let h = if s == steps { t0 + t_end - state.time } else { dt };
        let mut next = step(&state, kernels, h, scheme);
        next.time = if s == steps { t0 + t_end } else { t0 + s as f64 * dt };
        if next.positions.iter().chain(&next.weights).any(|v| !v.is_finite()) {
            return Err(ParticleError::NonFinite { step: s });
        }
        state = next;
        if s % store_every == 0 || s == steps {
            frames.push(state.clone());
        }
    }
    Ok(Trajectory { frames })
}

/// What to draw initial particles from.
#[derive(Clone, Debug)]
pub enum InitialSource<'a> {
    /// Product density, optionally truncated to weights in [0, m_max].
    Product { density: &'a ProductDensity, dim: usize, m_max: Option<f64> },
    /// Grid density, sampled per axis after a product-form check.
    Field(&'a DensityField),
}

/// Relative tolerance of the product-form check on grid densities.
pub const PRODUCT_FORM_TOL: f64 = 1e-8;

fn invert_monotone(target: f64, lo: f64, hi: f64, cdf: impl Fn(f64) -> f64) -> f64 {
    let (mut a, mut b) = (lo, hi);
    for _ in 0..200 {
        let c = 0.5 * (a + b);
        if cdf(c) < target {
            a = c;
        } else {
            b = c;
        }
        if b - a <= 1e-15 * b.abs().max(1.0) {
            break;
        }
    }
    0.5 * (a + b)
}

fn sample_x_profile(p: &XProfile, u: f64) -> f64 {
    match p {
        XProfile::Uniform => u,
        _ => invert_monotone(u, 0.0, 1.0, |x| p.cdf_1d(x)),
    }
}

fn sample_m_profile(p: &MProfile, m_max: Option<f64>, u: f64) -> f64 {
    let top = m_max.map_or(1.0, |m| p.cdf(m));
    let target = u * top;
    match p {
        MProfile::Exponential => -(-target).ln_1p(),
        _ => invert_monotone(target, 0.0, m_max.unwrap_or(1e3), |m| p.cdf(m)),
    }
}

/// Cumulative sums normalized to end at 1.
fn cumulative(weights: &[f64]) -> Vec<f64> {
    let mut acc = CompensatedSum::new();
    let mut out = Vec::with_capacity(weights.len());
    for w in weights {
        acc.add(*w);
        out.push(acc.value());
    }
    let total = acc.value();
    out.iter_mut().for_each(|v| *v /= total);
    out
}

/// Inverse CDF of a piecewise-constant density on `n` equal cells of [0, len].
fn sample_cells(cdf: &[f64], len: f64, u: f64) -> (usize, f64) {
    let k = cdf.partition_point(|c| *c < u).min(cdf.len() - 1);
    let lo = if k == 0 { 0.0 } else { cdf[k - 1] };
    let frac = if cdf[k] > lo { ((u - lo) / (cdf[k] - lo)).clamp(0.0, 1.0) } else { 0.5 };
    let h = len / cdf.len() as f64;
    (k, (k as f64 + frac) * h)
}

/// I.i.d. draws, deterministic given `seed`.
pub fn sample_initial(source: &InitialSource<'_>, n: usize, seed: u64) -> Result<ParticleEnsemble, ParticleError> {
    if n == 0 {
        return Err(ParticleError::InvalidArgument("N must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match source {
        InitialSource::Product { density, dim, m_max } => {
            let mut positions = Vec::with_capacity(n * dim);
            let mut weights = Vec::with_capacity(n);
            for _ in 0..n {
                positions.push(sample_x_profile(&density.x, rng.gen::<f64>()));
                if *dim == 2 {
                    positions.push(rng.gen::<f64>());
                }
                weights.push(sample_m_profile(&density.m, *m_max, rng.gen::<f64>()));
            }
            ParticleEnsemble::new(*dim, positions, weights)
        }
        InitialSource::Field(field) => {
            let g = field.grid;
            let (fx, fm, deviation) = product_factors(field);
            if deviation > PRODUCT_FORM_TOL {
                return Err(ParticleError::NotProductForm { deviation, tolerance: PRODUCT_FORM_TOL });
            }
            let cx = cumulative(&fx);
            let cm = cumulative(&fm);
            let mut positions = Vec::with_capacity(n * g.dim);
            let mut weights = Vec::with_capacity(n);
            for _ in 0..n {
                let (ix, _) = sample_cells(&cx, 1.0, rng.gen::<f64>());
                let c = g.x_center(ix);
                for k in 0..g.dim {
                    positions.push(c[k] + (rng.gen::<f64>() - 0.5) * g.hx());
                }
                weights.push(sample_cells(&cm, g.m_max, rng.gen::<f64>()).1);
            }
            ParticleEnsemble::new(g.dim, positions, weights)
        }
    }
}

/// x- and m-marginals of a grid density and the max relative deviation of
/// the density from their product.
pub fn product_factors(field: &DensityField) -> (Vec<f64>, Vec<f64>, f64) {
    let g = field.grid;
    let mass = field.mass();
    let fx: Vec<f64> = field.values.chunks_exact(g.gm).map(|c| c.iter().sum::<f64>() * g.hm()).collect();
    let mut fm = vec![0.0; g.gm];
    for col in field.values.chunks_exact(g.gm) {
        for (k, v) in col.iter().enumerate() {
            fm[k] += v * g.x_volume();
        }
    }
    let peak = field.linf().max(f64::MIN_POSITIVE);
    let mut dev = 0.0f64;
    for (ix, col) in field.values.chunks_exact(g.gm).enumerate() {
        for (k, v) in col.iter().enumerate() {
            dev = dev.max((v - fx[ix] * fm[k] / mass).abs() / peak);
        }
    }
    (fx, fm, dev)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::GridSpec;
    use crate::kernels::{InfluenceKernel, InfluenceSpec, InteractionKernel, InteractionSpec, SKind, SSpec};

    fn sine_kernels(amp: f64) -> Kernels {
        Kernels::new(InteractionKernel::new(InteractionSpec::Sine { amplitude: amp }).unwrap(), InfluenceKernel::zero())
    }

    #[test]
    fn two_particle_drift_matches_hand_sum() {
        let k = sine_kernels(0.1);
        let e = ParticleEnsemble::new(1, vec![0.1, 0.4], vec![1.0, 2.0]).unwrap();
        let a = |z: f64| 0.1 * (2.0 * std::f64::consts::PI * z).sin();
        let d = drift(&e, &k);
        let expected = 0.5 * (1.0 * a(0.0) + 2.0 * a(0.3));
        assert!((d.dx[0] - expected).abs() < 1e-15, "{} vs {}", d.dx[0], expected);
        assert!((d.dx[1] - 0.5 * (1.0 * a(-0.3) + 2.0 * a(0.0))).abs() < 1e-15);
    }

    #[test]
    fn constant_field_moves_unit_weights_at_c() {
        let k = Kernels::new(
            InteractionKernel::new(InteractionSpec::Constant { c: vec![0.3] }).unwrap(),
            InfluenceKernel::zero(),
        );
        let e = ParticleEnsemble::new(1, vec![0.1, 0.5, 0.9], vec![1.0; 3]).unwrap();
        let d = drift(&e, &k);
        for v in d.dx {
            assert!((v - 0.3).abs() < 1e-15);
        }
        assert_eq!(d.dm, vec![0.0; 3]);
    }

    #[test]
    fn weighted_empirical_masses() {
        let e = ParticleEnsemble::new(1, vec![0.1, 0.2], vec![1.0, 3.0]).unwrap();
        let w = weighted_empirical(&e);
        assert_eq!(w.atoms[0].1, 0.5);
        assert_eq!(w.atoms[1].1, 1.5);
        assert_eq!(w.total_mass, 2.0);
    }

    #[test]
    fn frozen_dynamics_is_bit_exact() {
        let e = ParticleEnsemble::new(2, vec![0.1, 0.2, 0.7, 0.3], vec![1.5, 0.2]).unwrap();
        let traj = simulate(&e, &Kernels::zero(2), 1.0, 0.1, Scheme::Heun, 3).unwrap();
        assert_eq!(traj.last().positions, e.positions);
        assert_eq!(traj.last().weights, e.weights);
        assert_eq!(traj.last().time, 1.0);
        assert_eq!(traj.frames.first().unwrap().time, 0.0);
    }

    #[test]
    fn product_sampling_moments() {
        let d = ProductDensity::exponential_uniform();
        let n = 100_000;
        let e = sample_initial(&InitialSource::Product { density: &d, dim: 1, m_max: None }, n, 7).unwrap();
        let mean = e.weights.iter().sum::<f64>() / n as f64;
        let second = e.weights.iter().map(|m| m * m).sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 3.0 / (n as f64).sqrt(), "{mean}");
        // Var(m^2) = 24 - 4 = 20 for Exp(1).
        assert!((second - 2.0).abs() < 3.0 * 20f64.sqrt() / (n as f64).sqrt(), "{second}");
        let again = sample_initial(&InitialSource::Product { density: &d, dim: 1, m_max: None }, n, 7).unwrap();
        assert_eq!(e, again);
    }

    #[test]
    fn field_sampling_refuses_correlated_density() {
        let grid = GridSpec::new(1, 8, 8, 4.0).unwrap();
        let mut f = DensityField::from_fn(grid, |x, m| (1.0 + 0.5 * (std::f64::consts::TAU * (x[0] - m)).cos()) * (-m).exp());
        f.normalize().unwrap();
        assert!(matches!(
            sample_initial(&InitialSource::Field(&f), 10, 1),
            Err(ParticleError::NotProductForm { .. })
        ));
        let p = ProductDensity::exponential_uniform().discretize(grid).unwrap();
        assert!(sample_initial(&InitialSource::Field(&p), 10, 1).is_ok());
    }

    #[test]
    fn tiled_drift_matches_reference() {
        let inf = InfluenceKernel::new(InfluenceSpec::Separable {
            s: SSpec { kind: SKind::Sin, amplitude: 0.2, freq: 1, parity: None },
            chi_support: Some([0.2, 3.0]),
            chi2_support: None,
            bounds: None,
        })
        .unwrap();
        let k = Kernels::new(InteractionKernel::new(InteractionSpec::Sine { amplitude: 0.3 }).unwrap(), inf);
        let d = ProductDensity::exponential_uniform();
        let e = sample_initial(&InitialSource::Product { density: &d, dim: 1, m_max: None }, 1000, 3).unwrap();
        let a = drift(&e, &k);
        let b = drift_tiled(&e, &k, 64);
        for (x, y) in a.dx.iter().chain(&a.dm).zip(b.dx.iter().chain(&b.dm)) {
            assert!((x - y).abs() <= 1e-12, "{x} vs {y}");
        }
    }

    #[test]
    fn nan_is_reported_with_step() {
        let k = Kernels::new(
            InteractionKernel::new(InteractionSpec::Constant { c: vec![1e150] }).unwrap(),
            InfluenceKernel::zero(),
        );
        let e = ParticleEnsemble::new(1, vec![0.5], vec![1e300]).unwrap();
        assert!(matches!(simulate(&e, &k, 1.0, 0.5, Scheme::Euler, 1), Err(ParticleError::NonFinite { step: 1 })));
    }
}
