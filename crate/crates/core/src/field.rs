//! Cell-averaged densities on the periodic x-grid times the truncated
//! m-grid, initial-data profiles, and the m-quadrature used for moments.

use crate::numerics::{gauss_integral, CompensatedSum, GAUSS3};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid density: {0}")]
    InvalidDensity(String),
}

/// Periodic x-grid with `gx` cells per axis on [0,1)^d and `gm` cells on [0, m_max].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dim: usize,
    pub gx: usize,
    pub gm: usize,
    pub m_max: f64,
}

impl GridSpec {
    pub fn new(dim: usize, gx: usize, gm: usize, m_max: f64) -> Result<Self, FieldError> {
        if !(dim == 1 || dim == 2) {
            return Err(FieldError::InvalidGrid(format!("d must be 1 or 2, got {dim}")));
        }
        if gx < 2 || gm < 2 || !(m_max > 0.0 && m_max.is_finite()) {
            return Err(FieldError::InvalidGrid(format!("need G_x >= 2, G_m >= 2, m_max > 0 (got {gx}, {gm}, {m_max})")));
        }
        Ok(Self { dim, gx, gm, m_max })
    }

    pub fn hx(&self) -> f64 {
        1.0 / self.gx as f64
    }

    pub fn hm(&self) -> f64 {
        self.m_max / self.gm as f64
    }

    pub fn x_cells(&self) -> usize {
        self.gx.pow(self.dim as u32)
    }

    pub fn cells(&self) -> usize {
        self.x_cells() * self.gm
    }

    /// Volume of one x-cell.
    pub fn x_volume(&self) -> f64 {
        self.hx().powi(self.dim as i32)
    }

    pub fn cell_volume(&self) -> f64 {
        self.x_volume() * self.hm()
    }

    /// Center of flat x-cell `ix` (unused components are 0).
    #[inline]
    pub fn x_center(&self, ix: usize) -> [f64; 2] {
        let h = self.hx();
        if self.dim == 1 {
            [(ix as f64 + 0.5) * h, 0.0]
        } else {
            [((ix / self.gx) as f64 + 0.5) * h, ((ix % self.gx) as f64 + 0.5) * h]
        }
    }

    #[inline]
    pub fn m_center(&self, k: usize) -> f64 {
        (k as f64 + 0.5) * self.hm()
    }

    /// Flat x-index of the neighbour of `ix` shifted by `step` cells along `axis`.
    #[inline]
    pub fn x_neighbor(&self, ix: usize, axis: usize, step: isize) -> usize {
        let g = self.gx as isize;
        if self.dim == 1 {
            (ix as isize + step).rem_euclid(g) as usize
        } else {
            let (i, j) = ((ix / self.gx) as isize, (ix % self.gx) as isize);
            if axis == 0 {
                ((i + step).rem_euclid(g) * g + j) as usize
            } else {
                (i * g + (j + step).rem_euclid(g)) as usize
            }
        }
    }

    /// Grid of the same x-axes without an m-axis.
    pub fn spatial(&self) -> SpatialGrid {
        SpatialGrid { dim: self.dim, gx: self.gx }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpatialGrid {
    pub dim: usize,
    pub gx: usize,
}

impl SpatialGrid {
    pub fn cells(&self) -> usize {
        self.gx.pow(self.dim as u32)
    }

    pub fn hx(&self) -> f64 {
        1.0 / self.gx as f64
    }

    pub fn volume(&self) -> f64 {
        self.hx().powi(self.dim as i32)
    }

    pub fn center(&self, ix: usize) -> [f64; 2] {
        GridSpec { dim: self.dim, gx: self.gx, gm: 2, m_max: 1.0 }.x_center(ix)
    }
}

/// Cell averages of a function of x alone (used for mu).
#[derive(Clone, Debug, PartialEq)]
pub struct SpatialField {
    pub grid: SpatialGrid,
    pub values: Vec<f64>,
    pub time: f64,
}

impl SpatialField {
    pub fn l1(&self) -> f64 {
        let v = self.grid.volume();
        let mut acc = CompensatedSum::new();
        for x in &self.values {
            acc.add(x.abs() * v);
        }
        acc.value()
    }

    pub fn total(&self) -> f64 {
        let v = self.grid.volume();
        let mut acc = CompensatedSum::new();
        for x in &self.values {
            acc.add(x * v);
        }
        acc.value()
    }

    pub fn linf(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    /// L1 norm of the centered-difference gradient (Euclidean in the d components).
    pub fn grad_l1(&self) -> f64 {
        let g = GridSpec { dim: self.grid.dim, gx: self.grid.gx, gm: 2, m_max: 1.0 };
        let h = self.grid.hx();
        let mut acc = CompensatedSum::new();
        for ix in 0..self.values.len() {
            let mut sq = 0.0;
            for axis in 0..self.grid.dim {
                let d = (self.values[g.x_neighbor(ix, axis, 1)] - self.values[g.x_neighbor(ix, axis, -1)]) / (2.0 * h);
                sq += d * d;
            }
            acc.add(sq.sqrt() * self.grid.volume());
        }
        acc.value()
    }
}

/// Cell-averaged density on the (x, m) grid; `values[ix * gm + k]`.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityField {
    pub grid: GridSpec,
    pub values: Vec<f64>,
    pub time: f64,
}

impl DensityField {
    pub fn zeros(grid: GridSpec) -> Self {
        Self { grid, values: vec![0.0; grid.cells()], time: 0.0 }
    }

    /// Cell averages of `f(x, m)` by tensor Gauss-Legendre on every cell.
    pub fn from_fn(grid: GridSpec, f: impl Fn(&[f64], f64) -> f64) -> Self {
        let mut out = Self::zeros(grid);
        let (hx, hm) = (grid.hx(), grid.hm());
        for ix in 0..grid.x_cells() {
            let c = grid.x_center(ix);
            for k in 0..grid.gm {
                let mc = grid.m_center(k);
                let mut acc = 0.0;
                for &(um, wm) in &GAUSS3 {
                    let m = mc + 0.5 * hm * um;
                    for &(u1, w1) in &GAUSS3 {
                        let x1 = c[0] + 0.5 * hx * u1;
                        if grid.dim == 1 {
                            acc += wm * w1 * f(&[x1], m) / 4.0;
                        } else {
                            for &(u2, w2) in &GAUSS3 {
                                let x2 = c[1] + 0.5 * hx * u2;
                                acc += wm * w1 * w2 * f(&[x1, x2], m) / 8.0;
                            }
                        }
                    }
                }
                out.values[ix * grid.gm + k] = acc;
            }
        }
        out
    }

    #[inline]
    pub fn at(&self, ix: usize, k: usize) -> f64 {
        self.values[ix * self.grid.gm + k]
    }

    pub fn mass(&self) -> f64 {
        let v = self.grid.cell_volume();
        let mut acc = CompensatedSum::new();
        for x in &self.values {
            acc.add(x * v);
        }
        acc.value()
    }

    pub fn linf(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    /// Rescale to unit mass.
    pub fn normalize(&mut self) -> Result<(), FieldError> {
        let m = self.mass();
        if !(m > 0.0 && m.is_finite()) {
            return Err(FieldError::InvalidDensity(format!("cannot normalize a field of mass {m}")));
        }
        for v in &mut self.values {
            *v /= m;
        }
        Ok(())
    }

    /// `mu(x) = int n psi(x, n) dn`.
    pub fn mu(&self) -> SpatialField {
        let w = MQuadrature::new(&self.grid).weights(|m| m);
        self.x_integral(&w)
    }

    /// `sum_k w_k psi(x, k)` for every x-cell.
    pub fn x_integral(&self, w: &[f64]) -> SpatialField {
        let gm = self.grid.gm;
        let values = self
            .values
            .chunks_exact(gm)
            .map(|col| {
                let mut acc = CompensatedSum::new();
                for (p, wk) in col.iter().zip(w) {
                    acc.add(p * wk);
                }
                acc.value()
            })
            .collect();
        SpatialField { grid: self.grid.spatial(), values, time: self.time }
    }

    /// `int (1 + m^{bp}) psi^p dx dm` with the reconstruction quadrature.
    pub fn moment(&self, b: u32, p: u32) -> f64 {
        let e = (b * p) as i32;
        let w = MQuadrature::new(&self.grid).weights(|m| 1.0 + m.powi(e));
        let vol = self.grid.x_volume();
        let mut acc = CompensatedSum::new();
        for col in self.values.chunks_exact(self.grid.gm) {
            for (v, wk) in col.iter().zip(&w) {
                acc.add(v.powi(p as i32) * wk * vol);
            }
        }
        acc.value()
    }

    /// L1 distance to another field on the same grid.
    pub fn l1_distance(&self, other: &DensityField) -> f64 {
        let v = self.grid.cell_volume();
        let mut acc = CompensatedSum::new();
        for (a, b) in self.values.iter().zip(&other.values) {
            acc.add((a - b).abs() * v);
        }
        acc.value()
    }

    /// L1 norm of the centered-difference x-gradient.
    pub fn grad_x_l1(&self) -> f64 {
        let g = &self.grid;
        let h = g.hx();
        let vol = g.cell_volume();
        let mut acc = CompensatedSum::new();
        for ix in 0..g.x_cells() {
            for k in 0..g.gm {
                let mut sq = 0.0;
                for axis in 0..g.dim {
                    let d = (self.at(g.x_neighbor(ix, axis, 1), k) - self.at(g.x_neighbor(ix, axis, -1), k)) / (2.0 * h);
                    sq += d * d;
                }
                acc.add(sq.sqrt() * vol);
            }
        }
        acc.value()
    }

    /// L1 norm of the full (x, m) gradient; m-derivative one-sided at the ends.
    pub fn grad_l1(&self) -> f64 {
        let g = &self.grid;
        let (h, hm) = (g.hx(), g.hm());
        let vol = g.cell_volume();
        let mut acc = CompensatedSum::new();
        for ix in 0..g.x_cells() {
            for k in 0..g.gm {
                let mut sq = 0.0;
                for axis in 0..g.dim {
                    let d = (self.at(g.x_neighbor(ix, axis, 1), k) - self.at(g.x_neighbor(ix, axis, -1), k)) / (2.0 * h);
                    sq += d * d;
                }
                let dm = if k == 0 {
                    (self.at(ix, 1) - self.at(ix, 0)) / hm
                } else if k == g.gm - 1 {
                    (self.at(ix, k) - self.at(ix, k - 1)) / hm
                } else {
                    (self.at(ix, k + 1) - self.at(ix, k - 1)) / (2.0 * hm)
                };
                acc.add((sq + dm * dm).sqrt() * vol);
            }
        }
        acc.value()
    }
}

/// Moment quadrature in m for cell-averaged data. Each cell carries a linear
/// reconstruction with centered slopes (one-sided at the two ends); the
/// integral of `g` against it is exact per cell up to Gauss quadrature, which
/// gives fourth-order accuracy for smooth data instead of the second order of
/// midpoint weights.
pub struct MQuadrature {
    gm: usize,
    hm: f64,
}

impl MQuadrature {
    pub fn new(grid: &GridSpec) -> Self {
        Self { gm: grid.gm, hm: grid.hm() }
    }

    pub fn from_axis(gm: usize, m_max: f64) -> Self {
        Self { gm, hm: m_max / gm as f64 }
    }

    /// Effective weights `w` with `int g psi dm ~= sum_k w_k psi_k`.
    pub fn weights(&self, g: impl Fn(f64) -> f64) -> Vec<f64> {
        let (n, h) = (self.gm, self.hm);
        let mut w = vec![0.0; n];
        let mut first = vec![0.0; n];
        for k in 0..n {
            let lo = k as f64 * h;
            let c = lo + 0.5 * h;
            w[k] = gauss_integral(lo, lo + h, 2, &g);
            first[k] = gauss_integral(lo, lo + h, 2, |m| g(m) * (m - c));
        }
        if n < 2 {
            return w;
        }
        // slope_0 = (psi_1 - psi_0)/h, slope_k = (psi_{k+1} - psi_{k-1})/(2h), slope_{n-1} = (psi_{n-1} - psi_{n-2})/h
        for k in 0..n {
            let f = first[k];
            if k == 0 {
                w[1] += f / h;
                w[0] -= f / h;
            } else if k == n - 1 {
                w[n - 1] += f / h;
                w[n - 2] -= f / h;
            } else {
                w[k + 1] += f / (2.0 * h);
                w[k - 1] -= f / (2.0 * h);
            }
        }
        w
    }

    /// Plain midpoint weights `h g(m_k)`.
    pub fn midpoint(&self, g: impl Fn(f64) -> f64) -> Vec<f64> {
        (0..self.gm).map(|k| self.hm * g((k as f64 + 0.5) * self.hm)).collect()
    }
}

/// Spatial factor of a product initial density.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "profile", rename_all = "kebab-case", deny_unknown_fields)]
pub enum XProfile {
    Uniform,
    /// `1 + amplitude cos(2 pi freq x_1)`, |amplitude| < 1.
    Cosine {
        amplitude: f64,
        #[serde(default = "one")]
        freq: u32,
    },
}

fn one() -> u32 {
    1
}

impl XProfile {
    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            XProfile::Uniform => 1.0,
            XProfile::Cosine { amplitude, freq } => 1.0 + amplitude * (2.0 * PI * *freq as f64 * x[0]).cos(),
        }
    }

    /// Average of the first-axis factor over [lo, hi].
    pub fn average_1d(&self, lo: f64, hi: f64) -> f64 {
        match self {
            XProfile::Uniform => 1.0,
            XProfile::Cosine { amplitude, freq } => {
                let k = 2.0 * PI * *freq as f64;
                1.0 + amplitude * ((k * hi).sin() - (k * lo).sin()) / (k * (hi - lo))
            }
        }
    }

    /// CDF of the first-axis factor on [0, 1].
    pub fn cdf_1d(&self, x: f64) -> f64 {
        match self {
            XProfile::Uniform => x,
            XProfile::Cosine { amplitude, freq } => {
                let k = 2.0 * PI * *freq as f64;
                x + amplitude * (k * x).sin() / k
            }
        }
    }

    pub fn validate(&self) -> Result<(), FieldError> {
        match self {
            XProfile::Uniform => Ok(()),
            XProfile::Cosine { amplitude, freq } => {
                if amplitude.abs() >= 1.0 || *freq == 0 {
                    Err(FieldError::InvalidDensity("cosine profile needs |amplitude| < 1 and freq >= 1".into()))
                } else {
                    Ok(())
                }
            }
        }
    }
}

/// Weight factor of a product initial density.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "profile", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MProfile {
    /// `e^{-m}`.
    Exponential,
    /// `m^{k-1} e^{-m} / (k-1)!` with integer shape k >= 1.
    Gamma { shape: u32 },
}

impl MProfile {
    fn shape(&self) -> u32 {
        match self {
            MProfile::Exponential => 1,
            MProfile::Gamma { shape } => *shape,
        }
    }

    pub fn density(&self, m: f64) -> f64 {
        let k = self.shape();
        let mut fact = 1.0;
        for j in 1..k {
            fact *= j as f64;
        }
        m.powi(k as i32 - 1) * (-m).exp() / fact
    }

    /// Untruncated CDF.
    pub fn cdf(&self, m: f64) -> f64 {
        1.0 - self.survival(m)
    }

    /// `1 - cdf(m)`, accurate in the tail.
    pub fn survival(&self, m: f64) -> f64 {
        if m <= 0.0 {
            return 1.0;
        }
        let k = self.shape();
        let mut term = 1.0;
        let mut sum = 1.0;
        for j in 1..k {
            term *= m / j as f64;
            sum += term;
        }
        (-m).exp() * sum
    }

    pub fn validate(&self) -> Result<(), FieldError> {
        if self.shape() == 0 {
            return Err(FieldError::InvalidDensity("gamma shape must be >= 1".into()));
        }
        Ok(())
    }
}

/// `psi_0(x, m) = f(x) g(m)` restricted to [0, m_max] and renormalized.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ProductDensity {
    pub x: XProfile,
    pub m: MProfile,
}

impl ProductDensity {
    pub fn exponential_uniform() -> Self {
        Self { x: XProfile::Uniform, m: MProfile::Exponential }
    }

    /// Exact cell averages, normalized to unit mass on the truncated grid.
    pub fn discretize(&self, grid: GridSpec) -> Result<DensityField, FieldError> {
        self.x.validate()?;
        self.m.validate()?;
        let (hx, hm) = (grid.hx(), grid.hm());
        let mavg: Vec<f64> = (0..grid.gm)
            .map(|k| {
                let lo = k as f64 * hm;
                (self.m.survival(lo) - self.m.survival(lo + hm)) / hm
            })
            .collect();
        let mut out = DensityField::zeros(grid);
        for ix in 0..grid.x_cells() {
            let c = grid.x_center(ix);
            let fx = self.x.average_1d(c[0] - 0.5 * hx, c[0] + 0.5 * hx);
            for k in 0..grid.gm {
                out.values[ix * grid.gm + k] = fx * mavg[k];
            }
        }
        out.normalize()?;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_third_moment_is_seven() {
        let grid = GridSpec::new(1, 4, 400, 30.0).unwrap();
        let psi = ProductDensity::exponential_uniform().discretize(grid).unwrap();
        let m3 = psi.moment(3, 1);
        assert!((m3 - 7.0).abs() < 1e-4, "{m3}");
    }

    #[test]
    fn mu_of_truncated_exponential() {
        let grid = GridSpec::new(1, 8, 400, 20.0).unwrap();
        let mut psi = DensityField::zeros(grid);
        for ix in 0..grid.x_cells() {
            for k in 0..grid.gm {
                let lo = k as f64 * grid.hm();
                psi.values[ix * grid.gm + k] = ((-lo).exp() - (-(lo + grid.hm())).exp()) / grid.hm();
            }
        }
        let expected = 1.0 - 21.0 * (-20f64).exp();
        for v in psi.mu().values {
            assert!((v - expected).abs() < 1e-6, "{v} vs {expected}");
        }
    }

    #[test]
    fn mu_weights_are_positive() {
        let q = MQuadrature::from_axis(50, 10.0);
        assert!(q.weights(|m| m).iter().all(|w| *w > 0.0));
    }

    #[test]
    fn quadrature_is_exact_for_linear_data() {
        let q = MQuadrature::from_axis(16, 4.0);
        let w = q.weights(|m| m * m);
        // cell averages of psi(m) = 2 + m are psi at the centers
        let psi: Vec<f64> = (0..16).map(|k| 2.0 + (k as f64 + 0.5) * 0.25).collect();
        let v: f64 = w.iter().zip(&psi).map(|(a, b)| a * b).sum();
        let exact = 2.0 * 64.0 / 3.0 + 256.0 / 4.0;
        assert!((v - exact).abs() < 1e-11, "{v} vs {exact}");
    }

    #[test]
    fn product_density_has_unit_mass() {
        let grid = GridSpec::new(2, 8, 20, 8.0).unwrap();
        let spec = ProductDensity { x: XProfile::Cosine { amplitude: 0.5, freq: 1 }, m: MProfile::Gamma { shape: 3 } };
        let psi = spec.discretize(grid).unwrap();
        assert!((psi.mass() - 1.0).abs() < 1e-13);
        assert!(psi.values.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn gamma_cdf_matches_quadrature() {
        let g = MProfile::Gamma { shape: 4 };
        let direct = gauss_integral(0.0, 3.0, 64, |m| g.density(m));
        assert!((g.cdf(3.0) - direct).abs() < 1e-12);
    }
}
