//! Grid solver for the Liouville (Kolmogorov) equation of the particle system
//! at N = 1 or 2 in d = 1, on `T^N x [0, m_max]^N`.

use crate::field::{DensityField, GridSpec};
use crate::kernels::Kernels;
use crate::numerics::CompensatedSum;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

/// Default cell budget: 32^4.
pub const DEFAULT_BUDGET: usize = 1 << 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KolmogorovError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("grid of {cells} cells exceeds the budget of {budget}")]
    Budget { cells: usize, budget: usize },
    #[error("CFL violated: dt = {dt:.3e} exceeds the stable limit {limit:.3e}")]
    Cfl { dt: f64, limit: f64 },
    #[error("marginal order {k} outside 1..={n}")]
    MarginalOrder { k: usize, n: usize },
}

/// Axes are ordered `[x_1, .., x_N, m_1, .., m_N]`, row-major.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KolmogorovGrid {
    pub n: usize,
    pub gx: usize,
    pub gm: usize,
    pub m_max: f64,
}

impl KolmogorovGrid {
    pub fn new(n: usize, gx: usize, gm: usize, m_max: f64) -> Result<Self, KolmogorovError> {
        if !(n == 1 || n == 2) {
            return Err(KolmogorovError::InvalidArgument(format!("N must be 1 or 2, got {n}")));
        }
        GridSpec::new(1, gx, gm, m_max).map_err(|e| KolmogorovError::InvalidArgument(e.to_string()))?;
        Ok(Self { n, gx, gm, m_max })
    }

    pub fn axes(&self) -> usize {
        2 * self.n
    }

    pub fn size(&self, axis: usize) -> usize {
        if axis < self.n {
            self.gx
        } else {
            self.gm
        }
    }

    pub fn width(&self, axis: usize) -> f64 {
        if axis < self.n {
            1.0 / self.gx as f64
        } else {
            self.m_max / self.gm as f64
        }
    }

    pub fn cells(&self) -> usize {
        self.gx.pow(self.n as u32) * self.gm.pow(self.n as u32)
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.axes()).map(|a| self.width(a)).product()
    }

    pub fn stride(&self, axis: usize) -> usize {
        ((axis + 1)..self.axes()).map(|a| self.size(a)).product()
    }

    /// Per-axis integer coordinates of a flat index.
    pub fn coords(&self, mut idx: usize) -> [usize; 4] {
        let mut c = [0usize; 4];
        for axis in (0..self.axes()).rev() {
            let s = self.size(axis);
            c[axis] = idx % s;
            idx /= s;
        }
        c
    }

    pub fn index(&self, c: &[usize]) -> usize {
        (0..self.axes()).fold(0, |acc, a| acc * self.size(a) + c[a])
    }

    pub fn center(&self, axis: usize, i: usize) -> f64 {
        (i as f64 + 0.5) * self.width(axis)
    }

    /// The one-particle grid of the same axes.
    pub fn factor_grid(&self) -> GridSpec {
        GridSpec { dim: 1, gx: self.gx, gm: self.gm, m_max: self.m_max }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KolmogorovField {
    pub grid: KolmogorovGrid,
    pub values: Vec<f64>,
    pub time: f64,
}

impl KolmogorovField {
    pub fn zeros(grid: KolmogorovGrid) -> Self {
        Self { grid, values: vec![0.0; grid.cells()], time: 0.0 }
    }

    /// `psi^{(x) N}` of a one-particle field.
    pub fn tensor_power(factor: &DensityField, n: usize) -> Result<Self, KolmogorovError> {
        let g = factor.grid;
        if g.dim != 1 {
            return Err(KolmogorovError::InvalidArgument("the factor must live in d = 1".into()));
        }
        let grid = KolmogorovGrid::new(n, g.gx, g.gm, g.m_max)?;
        let mut out = Self::zeros(grid);
        for (idx, v) in out.values.iter_mut().enumerate() {
            let c = grid.coords(idx);
            *v = (0..n).map(|i| factor.at(c[i], c[n + i])).product();
        }
        out.time = factor.time;
        Ok(out)
    }

    pub fn mass(&self) -> f64 {
        let vol = self.grid.cell_volume();
        let mut acc = CompensatedSum::new();
        for v in &self.values {
            acc.add(v * vol);
        }
        acc.value()
    }

    /// Exchange the coordinate pairs of particles 1 and 2.
    pub fn swapped(&self) -> Self {
        let g = self.grid;
        if g.n != 2 {
            return self.clone();
        }
        let mut out = self.clone();
        for idx in 0..g.cells() {
            let c = g.coords(idx);
            out.values[g.index(&[c[1], c[0], c[3], c[2]])] = self.values[idx];
        }
        out
    }

    /// Integrates out the last `N - k` coordinate pairs.
    pub fn marginal(&self, k: usize) -> Result<KolmogorovField, KolmogorovError> {
        let g = self.grid;
        if k == 0 || k > g.n {
            return Err(KolmogorovError::MarginalOrder { k, n: g.n });
        }
        if k == g.n {
            return Ok(self.clone());
        }
        let out_grid = KolmogorovGrid { n: k, ..g };
        let w = g.width(1) * g.width(3);
        let mut acc = vec![CompensatedSum::new(); out_grid.cells()];
        for (idx, v) in self.values.iter().enumerate() {
            let c = g.coords(idx);
            acc[out_grid.index(&[c[0], c[2]])].add(v * w);
        }
        Ok(KolmogorovField { grid: out_grid, values: acc.iter().map(CompensatedSum::value).collect(), time: self.time })
    }

    /// One-particle view of an N = 1 field.
    pub fn to_density_field(&self) -> Result<DensityField, KolmogorovError> {
        if self.grid.n != 1 {
            return Err(KolmogorovError::InvalidArgument("only N = 1 fields are one-particle densities".into()));
        }
        Ok(DensityField { grid: self.grid.factor_grid(), values: self.values.clone(), time: self.time })
    }

    /// `int psi log psi`, cells with `psi <= 1e-30` contribute 0.
    pub fn entropy(&self) -> f64 {
        let vol = self.grid.cell_volume();
        let mut acc = CompensatedSum::new();
        for v in &self.values {
            if *v > 1e-30 {
                acc.add(v * v.ln() * vol);
            }
        }
        acc.value()
    }
}

/// Velocity of coordinate `axis` at a point `(x_1..x_N, m_1..m_N)`.
fn velocity(kernels: &Kernels, n: usize, axis: usize, x: &[f64], m: &[f64]) -> f64 {
    let inv = 1.0 / n as f64;
    if axis < n {
        let i = axis;
        if kernels.interaction.is_zero() {
            return 0.0;
        }
        let mut acc = 0.0;
        for j in 0..n {
            acc += m[j] * kernels.interaction.at(&[x[j] - x[i]])[0];
        }
        acc * inv
    } else {
        let i = axis - n;
        let mut acc = 0.0;
        for j in 0..n {
            acc += kernels.influence.at(&[x[i]], m[i], &[x[j]], m[j]).s;
        }
        acc * inv
    }
}

/// Time-independent face velocities: `faces[axis][c]` sits on the upper face
/// of cell `c` along `axis`. Upper m-boundary faces carry zero velocity.
#[derive(Clone, Debug)]
pub struct KolmogorovOperator {
    grid: KolmogorovGrid,
    faces: Vec<Vec<f64>>,
    rate: f64,
}

impl KolmogorovOperator {
    pub fn new(grid: KolmogorovGrid, kernels: &Kernels) -> Result<Self, KolmogorovError> {
        if kernels.dim() != 1 {
            return Err(KolmogorovError::InvalidArgument("the Kolmogorov solver is d = 1 only".into()));
        }
        if kernels.influence.is_product_weights() {
            return Err(KolmogorovError::InvalidArgument("product-weights influence is reduced-mode only".into()));
        }
        let n = grid.n;
        let mut faces = Vec::with_capacity(grid.axes());
        let mut rate = 0.0;
        for axis in 0..grid.axes() {
            let v: Vec<f64> = (0..grid.cells())
                .into_par_iter()
                .map(|idx| {
                    let c = grid.coords(idx);
                    if axis >= n && c[axis] + 1 == grid.gm {
                        return 0.0;
                    }
                    let mut x = [0.0; 2];
                    let mut m = [0.0; 2];
                    for i in 0..n {
                        x[i] = grid.center(i, c[i]);
                        m[i] = grid.center(n + i, c[n + i]);
                    }
                    let face = (c[axis] + 1) as f64 * grid.width(axis);
                    if axis < n {
                        x[axis] = face;
                    } else {
                        m[axis - n] = face;
                    }
                    velocity(kernels, n, axis, &x[..n], &m[..n])
                })
                .collect();
            rate += v.iter().fold(0.0f64, |a, b| a.max(b.abs())) / grid.width(axis);
            faces.push(v);
        }
        Ok(Self { grid, faces, rate })
    }

    /// `cfl` times the largest stable step of the unsplit scheme.
    pub fn stable_dt(&self, cfl: f64) -> f64 {
        if self.rate == 0.0 {
            f64::INFINITY
        } else {
            cfl / self.rate
        }
    }

    /// One unsplit donor-cell step.
    pub fn step(&self, psi: &KolmogorovField, dt: f64) -> Result<KolmogorovField, KolmogorovError> {
        let limit = self.stable_dt(1.0);
        if dt > limit * (1.0 + 1e-12) {
            return Err(KolmogorovError::Cfl { dt, limit });
        }
        let g = self.grid;
        let n = g.n;
        let old = &psi.values;
        let values = (0..g.cells())
            .into_par_iter()
            .map(|idx| {
                let c = g.coords(idx);
                let mut change = 0.0;
                for axis in 0..g.axes() {
                    let s = g.stride(axis);
                    let size = g.size(axis);
                    let vf = &self.faces[axis];
                    let here = old[idx];
                    let up = if c[axis] + 1 < size {
                        Some(idx + s)
                    } else if axis < n {
                        Some(idx + s - size * s)
                    } else {
                        None
                    };
                    let down = if c[axis] > 0 {
                        Some(idx - s)
                    } else if axis < n {
                        Some(idx + (size - 1) * s)
                    } else {
                        None
                    };
                    let fr = up.map_or(0.0, |u| upwind(vf[idx], here, old[u]));
                    let fl = down.map_or(0.0, |d| upwind(vf[d], old[d], here));
                    change += (fr - fl) / g.width(axis);
                }
                old[idx] - dt * change
            })
            .collect();
        Ok(KolmogorovField { grid: g, values, time: psi.time + dt })
    }
}

#[inline]
fn upwind(v: f64, left: f64, right: f64) -> f64 {
    v.max(0.0) * left + v.min(0.0) * right
}

#[derive(Clone, Debug, PartialEq)]
pub struct KolmogorovOptions {
    pub t_end: f64,
    pub cfl: f64,
    /// Increasing output times in (0, t_end]; `t_end` is always appended.
    pub frame_times: Vec<f64>,
    pub budget: usize,
}

impl KolmogorovOptions {
    pub fn every(t_end: f64, frame_dt: f64) -> Self {
        let n = (t_end / frame_dt).round().max(1.0) as usize;
        Self {
            t_end,
            cfl: 0.45,
            frame_times: (1..=n).map(|k| if k == n { t_end } else { k as f64 * t_end / n as f64 }).collect(),
            budget: DEFAULT_BUDGET,
        }
    }
}

/// Frames at `t = 0` and every requested time.
pub fn solve_kolmogorov(psi0: &KolmogorovField, kernels: &Kernels, opts: &KolmogorovOptions) -> Result<Vec<KolmogorovField>, KolmogorovError> {
    let g = psi0.grid;
    if g.cells() > opts.budget {
        return Err(KolmogorovError::Budget { cells: g.cells(), budget: opts.budget });
    }
    if !(opts.cfl > 0.0 && opts.cfl <= 1.0) || !(opts.t_end > 0.0) {
        return Err(KolmogorovError::InvalidArgument("need 0 < cfl <= 1 and T > 0".into()));
    }
    let mut times: Vec<f64> = opts.frame_times.iter().copied().filter(|t| *t > 0.0 && *t < opts.t_end).collect();
    times.push(opts.t_end);
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(KolmogorovError::InvalidArgument("frame times must be increasing".into()));
    }
    let op = KolmogorovOperator::new(g, kernels)?;
    let limit = op.stable_dt(opts.cfl);
    let mut psi = psi0.clone();
    psi.time = 0.0;
    let mut frames = vec![psi.clone()];
    for target in times {
        loop {
            let remaining = target - psi.time;
            let hit = limit >= remaining;
            psi = op.step(&psi, if hit { remaining } else { limit })?;
            if hit {
                psi.time = target;
                break;
            }
        }
        frames.push(psi.clone());
    }
    Ok(frames)
}

/// `sum_i sum_j d/dm_i [S(x_i, m_i, x_j, m_j)]` at a point; the `j = i` term
/// differentiates both weight slots.
fn weight_divergence(kernels: &Kernels, n: usize, x: &[f64], m: &[f64]) -> f64 {
    let inf = &kernels.influence;
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            acc += inf.at(&[x[i]], m[i], &[x[j]], m[j]).dm;
            if i == j {
                acc += inf.d_second_weight(&[x[i]], m[i], &[x[j]], m[j]);
            }
        }
    }
    acc
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EntropyReport {
    pub times: Vec<f64>,
    pub entropy: Vec<f64>,
    /// `-(1/N) int_0^t sum_{i,j} int d_{m_i} S psi_N`, trapezoid in time.
    pub source_term: Vec<f64>,
    pub rhs_bound: Vec<f64>,
    pub tol: f64,
    pub max_excess: f64,
    pub satisfied: bool,
}

/// Checks `E(t) <= E(0) + source_term(t) + tol` on every frame.
pub fn entropy_inequality_check(frames: &[KolmogorovField], kernels: &Kernels, tol: f64) -> Result<EntropyReport, KolmogorovError> {
    let Some(first) = frames.first() else {
        return Err(KolmogorovError::InvalidArgument("no frames".into()));
    };
    let g = first.grid;
    let n = g.n;
    let weights: Vec<f64> = (0..g.cells())
        .into_par_iter()
        .map(|idx| {
            let c = g.coords(idx);
            let mut x = [0.0; 2];
            let mut m = [0.0; 2];
            for i in 0..n {
                x[i] = g.center(i, c[i]);
                m[i] = g.center(n + i, c[n + i]);
            }
            weight_divergence(kernels, n, &x[..n], &m[..n])
        })
        .collect();
    let vol = g.cell_volume();
    let rate = |f: &KolmogorovField| {
        let mut acc = CompensatedSum::new();
        for (v, w) in f.values.iter().zip(&weights) {
            acc.add(v * w * vol);
        }
        -acc.value() / n as f64
    };
    let times: Vec<f64> = frames.iter().map(|f| f.time).collect();
    let entropy: Vec<f64> = frames.iter().map(KolmogorovField::entropy).collect();
    let rates: Vec<f64> = frames.iter().map(rate).collect();
    let mut source_term = vec![0.0];
    for k in 1..frames.len() {
        let prev = source_term[k - 1];
        source_term.push(prev + 0.5 * (rates[k] + rates[k - 1]) * (times[k] - times[k - 1]));
    }
    let rhs_bound: Vec<f64> = source_term.iter().map(|s| entropy[0] + s).collect();
    let max_excess = entropy.iter().zip(&rhs_bound).map(|(e, r)| e - r).fold(f64::NEG_INFINITY, f64::max);
    Ok(EntropyReport { times, entropy, source_term, rhs_bound, tol, max_excess, satisfied: max_excess <= tol })
}

/// `max_cells e^{sum_k m_k / 2} psi_N` at cell centers.
pub fn exp_decay_check(psi: &KolmogorovField) -> f64 {
    let g = psi.grid;
    (0..g.cells())
        .map(|idx| {
            let c = g.coords(idx);
            let s: f64 = (0..g.n).map(|i| g.center(g.n + i, c[g.n + i])).sum();
            (0.5 * s).exp() * psi.values[idx]
        })
        .fold(0.0, f64::max)
}

/// `(1/N) int psi_N log(psi_N / psi^{(x) N})`; `None` where the reference
/// vanishes on the support of `psi_N`.
pub fn relative_entropy_to_tensor(psi_n: &KolmogorovField, factor: &DensityField) -> Result<Option<f64>, KolmogorovError> {
    let reference = KolmogorovField::tensor_power(factor, psi_n.grid.n)?;
    if reference.grid != psi_n.grid {
        return Err(KolmogorovError::InvalidArgument("grids differ".into()));
    }
    let vol = psi_n.grid.cell_volume();
    let mut acc = CompensatedSum::new();
    for (p, q) in psi_n.values.iter().zip(&reference.values) {
        if *p > 1e-30 {
            if !(*q > 0.0) {
                return Ok(None);
            }
            acc.add(p * (p / q).ln() * vol);
        }
    }
    Ok(Some(acc.value() / psi_n.grid.n as f64))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GronwallReport {
    pub times: Vec<f64>,
    pub relative_entropy: Vec<f64>,
    /// Slope constant fitted at the first frame after t = 0.
    pub kappa: f64,
    pub margin: f64,
    pub bounds: Vec<f64>,
    pub holds: bool,
    /// Smallest `kappa` for which the envelope holds at every frame.
    pub kappa_required: f64,
}

/// `H(t) <= (H(0) + t kappa) e^{t (1 + margin)}` along matched frames.
pub fn gronwall_shape(frames: &[KolmogorovField], mean_field: &[DensityField], margin: f64) -> Result<GronwallReport, KolmogorovError> {
    if frames.len() != mean_field.len() || frames.len() < 2 {
        return Err(KolmogorovError::InvalidArgument("need matching frame lists of length >= 2".into()));
    }
    let mut times = Vec::new();
    let mut h = Vec::new();
    for (k, f) in frames.iter().zip(mean_field) {
        if (k.time - f.time).abs() > 1e-12 {
            return Err(KolmogorovError::InvalidArgument("frame times differ".into()));
        }
        times.push(k.time);
        h.push(relative_entropy_to_tensor(k, f)?.unwrap_or(f64::INFINITY));
    }
    let growth = |t: f64| (t * (1.0 + margin)).exp();
    let t1 = times[1];
    let kappa = ((h[1] / growth(t1) - h[0]) / t1).max(0.0);
    let bounds: Vec<f64> = times.iter().map(|t| (h[0] + t * kappa) * growth(*t)).collect();
    let holds = h.iter().zip(&bounds).all(|(v, b)| *v <= b * (1.0 + 1e-9) + 1e-15);
    let kappa_required = times
        .iter()
        .zip(&h)
        .skip(1)
        .map(|(t, v)| (v / growth(*t) - h[0]) / t)
        .fold(0.0, f64::max);
    Ok(GronwallReport { times, relative_entropy: h, kappa, margin, bounds, holds, kappa_required })
}
