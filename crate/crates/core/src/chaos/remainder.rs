//! The one-particle functions `phi` (weight part) and `theta` (position part)
//! whose pair sums form the remainders of the tensorized mean-field law, and
//! the checks built on them.

use super::index::{IndexTuple, qualifying_pairs};
use super::ChaosError;
use crate::field::{DensityField, GridSpec};
use crate::kernels::Kernels;
use crate::meanfield::Convolver;
use crate::numerics::{linear_fit, wrap_unit, CompensatedSum};
use crate::particles::ParticleEnsemble;
use rayon::prelude::*;
use serde::Serialize;

/// Points with `psi <= SAMPLE_FLOOR e^{-m}` have no usable log-gradient.
pub const SAMPLE_FLOOR: f64 = 1e-12;

/// Multilinear interpolation weights: periodic in x, clamped in m.
#[derive(Clone, Copy, Debug)]
struct Stencil {
    xs: [(usize, f64); 4],
    nx: usize,
    ms: [(usize, f64); 2],
}

fn periodic_pair(x: f64, g: usize) -> [(usize, f64); 2] {
    let v = wrap_unit(x) * g as f64 - 0.5;
    let i0 = v.floor();
    let f = v - i0;
    let lo = (i0 as isize).rem_euclid(g as isize) as usize;
    [(lo, 1.0 - f), ((lo + 1) % g, f)]
}

fn clamped_pair(m: f64, hm: f64, g: usize) -> [(usize, f64); 2] {
    let v = m / hm - 0.5;
    if !(v > 0.0) {
        return [(0, 1.0), (0, 0.0)];
    }
    if v >= (g - 1) as f64 {
        return [(g - 1, 1.0), (g - 1, 0.0)];
    }
    let k = v.floor();
    let f = v - k;
    [(k as usize, 1.0 - f), (k as usize + 1, f)]
}

/// Values of the `psi`-derived fields at one point.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct PointFields {
    pub psi: f64,
    /// `d_m log psi`.
    pub dm_log: f64,
    /// `grad_x log psi` (unused component 0).
    pub dx_log: [f64; 2],
    /// `(a * mu)(x) = sum_z a(z - x) mu(z)`.
    pub a_conv: [f64; 2],
    /// `Smean(x, m) = int S(x, m, y, n) psi(y, n)`.
    pub smean: f64,
    pub dsmean: f64,
}

/// Grid fields derived from one density: log-gradients by centered
/// differences, the interaction convolution and the mean influence.
#[derive(Clone, Debug)]
pub struct RemainderFields {
    kernels: Kernels,
    grid: GridSpec,
    psi: Vec<f64>,
    dm_log: Vec<f64>,
    dx_log: Vec<[f64; 2]>,
    a_conv: Vec<[f64; 2]>,
    smean: Vec<f64>,
    dsmean: Vec<f64>,
    mu_l1: f64,
    /// Cells whose log-gradient was set to 0 because a stencil value is below the floor.
    pub unresolved: usize,
}

impl RemainderFields {
    pub fn new(psi: &DensityField, kernels: &Kernels) -> Result<Self, ChaosError> {
        if kernels.influence.is_product_weights() {
            return Err(ChaosError::UnsupportedKernel(
                "the product-weights influence kernel is outside the cancellation machinery".into(),
            ));
        }
        let g = psi.grid;
        if kernels.dim() != g.dim {
            return Err(ChaosError::InvalidArgument("kernel and grid dimensions differ".into()));
        }
        let conv = Convolver::new(g.spatial(), kernels)?;
        let vf = conv.fields(psi);
        let (nx, gm, hm, hx) = (g.x_cells(), g.gm, g.hm(), g.hx());
        let ok = |ix: usize, k: usize| psi.at(ix, k) > SAMPLE_FLOOR * (-g.m_center(k)).exp();
        let ln = |ix: usize, k: usize| psi.at(ix, k).ln();
        let mut dm_log = vec![0.0; nx * gm];
        let mut dx_log = vec![[0.0; 2]; nx * gm];
        let mut unresolved = 0;
        for ix in 0..nx {
            for k in 0..gm {
                let (lo, hi) = (k.saturating_sub(1), (k + 1).min(gm - 1));
                let mut resolved = ok(ix, k) && ok(ix, lo) && ok(ix, hi);
                let mut grad = [0.0; 2];
                for (axis, slot) in grad.iter_mut().enumerate().take(g.dim) {
                    let (r, l) = (g.x_neighbor(ix, axis, 1), g.x_neighbor(ix, axis, -1));
                    if ok(r, k) && ok(l, k) {
                        *slot = (ln(r, k) - ln(l, k)) / (2.0 * hx);
                    } else {
                        resolved = false;
                    }
                }
                if resolved && gm > 1 {
                    dm_log[ix * gm + k] = (ln(ix, hi) - ln(ix, lo)) / ((hi - lo) as f64 * hm);
                    dx_log[ix * gm + k] = grad;
                } else {
                    unresolved += 1;
                }
            }
        }
        Ok(Self {
            kernels: kernels.clone(),
            grid: g,
            psi: psi.values.clone(),
            dm_log,
            dx_log,
            a_conv: vf.a_field,
            smean: vf.smean,
            dsmean: vf.dsmean_dm,
            mu_l1: vf.mu.l1(),
            unresolved,
        })
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn kernels(&self) -> &Kernels {
        &self.kernels
    }

    fn stencil(&self, x: &[f64], m: f64) -> Stencil {
        let g = &self.grid;
        let p0 = periodic_pair(x[0], g.gx);
        let mut xs = [(0, 0.0); 4];
        let nx = if g.dim == 1 {
            xs[0] = p0[0];
            xs[1] = p0[1];
            2
        } else {
            let p1 = periodic_pair(x[1], g.gx);
            for (a, (i, wi)) in p0.iter().enumerate() {
                for (b, (j, wj)) in p1.iter().enumerate() {
                    xs[2 * a + b] = (i * g.gx + j, wi * wj);
                }
            }
            4
        };
        Stencil { xs, nx, ms: clamped_pair(m, g.hm(), g.gm) }
    }

    /// Fields at cell `(ix, k)`, no interpolation.
    pub fn at_cell(&self, ix: usize, k: usize) -> PointFields {
        let c = ix * self.grid.gm + k;
        PointFields {
            psi: self.psi[c],
            dm_log: self.dm_log[c],
            dx_log: self.dx_log[c],
            a_conv: self.a_conv[ix],
            smean: self.smean[c],
            dsmean: self.dsmean[c],
        }
    }

    /// Multilinear interpolation of every field at `(x, m)`.
    pub fn at(&self, x: &[f64], m: f64) -> PointFields {
        let st = self.stencil(x, m);
        let gm = self.grid.gm;
        let mut out = PointFields::default();
        for &(ix, wx) in &st.xs[..st.nx] {
            out.a_conv[0] += wx * self.a_conv[ix][0];
            out.a_conv[1] += wx * self.a_conv[ix][1];
            for &(k, wm) in &st.ms {
                let w = wx * wm;
                if w == 0.0 {
                    continue;
                }
                let c = ix * gm + k;
                out.psi += w * self.psi[c];
                out.dm_log += w * self.dm_log[c];
                out.dx_log[0] += w * self.dx_log[c][0];
                out.dx_log[1] += w * self.dx_log[c][1];
                out.smean += w * self.smean[c];
                out.dsmean += w * self.dsmean[c];
            }
        }
        out
    }

    /// Interpolated fields, refusing points where the density is below the floor.
    pub fn at_checked(&self, x: &[f64], m: f64) -> Result<PointFields, ChaosError> {
        let p = self.at(x, m);
        if !(p.psi > SAMPLE_FLOOR * (-m).exp()) {
            let mut xx = [0.0; 2];
            xx[..x.len()].copy_from_slice(x);
            return Err(ChaosError::BelowFloor { x: xx, m });
        }
        Ok(p)
    }

    /// `phi(x, m, y, n)` given the fields at `(x, m)`.
    #[inline]
    pub fn phi_with(&self, at_x: &PointFields, x: &[f64], m: f64, y: &[f64], n: f64) -> f64 {
        let v = self.kernels.influence.at(x, m, y, n);
        v.dm + v.s * at_x.dm_log - at_x.dsmean - at_x.dm_log * at_x.smean
    }

    /// `theta(x, m, y, n)` given the fields at `(y, n)`.
    #[inline]
    pub fn theta_with(&self, at_y: &PointFields, x: &[f64], m: f64, y: &[f64]) -> f64 {
        let d = self.grid.dim;
        let mut z = [0.0; 2];
        for k in 0..d {
            z[k] = x[k] - y[k];
        }
        let a = if self.kernels.interaction.is_zero() { [0.0; 2] } else { self.kernels.interaction.at(&z[..d]) };
        let mut acc = 0.0;
        for k in 0..d {
            acc += (m * a[k] - at_y.a_conv[k]) * at_y.dx_log[k];
        }
        acc
    }

    /// Both remainders at one configuration.
    pub fn remainder_sample(&self, e: &ParticleEnsemble) -> Result<RemainderSample, ChaosError> {
        let n = e.len();
        let d = self.grid.dim;
        if e.dim != d {
            return Err(ChaosError::InvalidArgument("ensemble and grid dimensions differ".into()));
        }
        let pts: Vec<PointFields> =
            (0..n).map(|i| self.at_checked(e.position(i), e.weights[i])).collect::<Result<_, _>>()?;
        let a = &self.kernels.interaction;
        let inf = &self.kernels.influence;
        let (a_zero, s_zero) = (a.is_zero(), inf.is_zero());
        let nf = n as f64;
        let mut r = CompensatedSum::new();
        let mut s = CompensatedSum::new();
        let mut z = [0.0; 2];
        for i in 0..n {
            let (xi, mi, pi) = (e.position(i), e.weights[i], &pts[i]);
            if !a_zero {
                let mut v = [0.0; 2];
                for j in 0..n {
                    let xj = e.position(j);
                    for k in 0..d {
                        z[k] = xj[k] - xi[k];
                    }
                    let aj = a.at(&z[..d]);
                    v[0] += e.weights[j] * aj[0];
                    v[1] += e.weights[j] * aj[1];
                }
                for k in 0..d {
                    r.add((v[k] - nf * pi.a_conv[k]) * pi.dx_log[k]);
                }
            }
            if !s_zero {
                let mut acc = inf.d_second_weight(xi, mi, xi, mi);
                for j in 0..n {
                    let v = inf.at(xi, mi, e.position(j), e.weights[j]);
                    acc += v.dm + v.s * pi.dm_log;
                }
                s.add(acc - nf * (pi.dsmean + pi.dm_log * pi.smean));
            }
        }
        Ok(RemainderSample { r_value: r.value() / nf, s_value: s.value() / nf })
    }
}

/// Position remainder `R_N` and weight remainder `S_N` at one configuration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RemainderSample {
    pub r_value: f64,
    pub s_value: f64,
}

/// `(phi(x, m, y, n), theta(x, m, y, n))` for the density `psi`.
pub fn phi_theta(psi: &DensityField, kernels: &Kernels, x: &[f64], m: f64, y: &[f64], n: f64) -> Result<(f64, f64), ChaosError> {
    let f = RemainderFields::new(psi, kernels)?;
    let px = f.at_checked(x, m)?;
    let py = f.at_checked(y, n)?;
    Ok((f.phi_with(&px, x, m, y, n), f.theta_with(&py, x, m, y)))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CancellationReport {
    pub hx: f64,
    pub hm: f64,
    /// `max_{x,m} |int phi(x, m, y, n) psi(y, n) dy dn|`.
    pub phi_second_slot: f64,
    /// `max_{y,n} |int theta(x, m, y, n) psi(x, m) dx dm|`.
    pub theta_first_slot: f64,
    /// `max_{x,m} |int theta(x, m, y, n) psi(y, n) dy dn|`.
    pub theta_second_slot: f64,
}

/// Gauss points of one cell: x-offsets per axis and m-offsets, in units of h.
const GAUSS2: [f64; 2] = [-0.288_675_134_594_812_9, 0.288_675_134_594_812_9];

/// Sub-cell quadrature data of the interpolated density: for each x point,
/// the m-integrated moments `sum w psi f(n)`; `total = sum w psi` over all points.
struct SubQuadrature {
    xs: Vec<[f64; 2]>,
    /// `sum_n w psi n`.
    first: Vec<f64>,
    /// `sum_n w psi chi2(n)`.
    chi2: Vec<f64>,
    /// `sum_n w psi grad_x log psi`.
    grad: Vec<[f64; 2]>,
    /// `sum_n w psi (a * mu) . grad_x log psi`.
    a_dot_grad: Vec<f64>,
    total: f64,
}

fn sub_quadrature(f: &RemainderFields) -> SubQuadrature {
    let g = f.grid;
    let (hx, hm) = (g.hx(), g.hm());
    let chi2 = f.kernels.influence.profiles().map(|p| p.1);
    let mut x_offsets: Vec<[f64; 2]> = Vec::new();
    if g.dim == 1 {
        x_offsets.extend(GAUSS2.iter().map(|o| [o * hx, 0.0]));
    } else {
        for a in GAUSS2 {
            for b in GAUSS2 {
                x_offsets.push([a * hx, b * hx]);
            }
        }
    }
    let wx = g.x_volume() / x_offsets.len() as f64;
    let mut m_points = Vec::with_capacity(2 * g.gm);
    for k in 0..g.gm {
        for o in GAUSS2 {
            m_points.push(g.m_center(k) + o * hm);
        }
    }
    let wm = hm / 2.0;
    let xs: Vec<[f64; 2]> = (0..g.x_cells())
        .flat_map(|ix| {
            let c = g.x_center(ix);
            x_offsets.iter().map(move |o| [wrap_unit(c[0] + o[0]), if g.dim == 2 { wrap_unit(c[1] + o[1]) } else { 0.0 }]).collect::<Vec<_>>()
        })
        .collect();
    let rows: Vec<(f64, f64, f64, [f64; 2], f64)> = xs
        .par_iter()
        .map(|x| {
            let (mut mass, mut first, mut c2, mut grad, mut adg) =
                (CompensatedSum::new(), CompensatedSum::new(), CompensatedSum::new(), [CompensatedSum::new(); 2], CompensatedSum::new());
            for &m in &m_points {
                let p = f.at(&x[..g.dim], m);
                let w = wx * wm * p.psi;
                mass.add(w);
                first.add(w * m);
                if let Some(chi) = chi2 {
                    c2.add(w * chi.eval(m)[0]);
                }
                let mut dot = 0.0;
                for k in 0..g.dim {
                    grad[k].add(w * p.dx_log[k]);
                    dot += p.a_conv[k] * p.dx_log[k];
                }
                adg.add(w * dot);
            }
            (mass.value(), first.value(), c2.value(), [grad[0].value(), grad[1].value()], adg.value())
        })
        .collect();
    let total = rows.iter().fold(CompensatedSum::new(), |mut a, r| {
        a.add(r.0);
        a
    });
    SubQuadrature {
        xs,
        first: rows.iter().map(|r| r.1).collect(),
        chi2: rows.iter().map(|r| r.2).collect(),
        grad: rows.iter().map(|r| r.3).collect(),
        a_dot_grad: rows.iter().map(|r| r.4).collect(),
        total: total.value(),
    }
}

/// The three single-slot integrals of the cancellation rule, maximized over
/// grid points. The integrals use a two-point Gauss rule per cell and axis on
/// the multilinear interpolant of the grid fields, while `phi` and the
/// interaction convolution use plain cell sums; the maxima therefore measure
/// how consistently the two quadratures cancel and shrink with the mesh.
pub fn cancellation_check(psi: &DensityField, kernels: &Kernels) -> Result<CancellationReport, ChaosError> {
    let f = RemainderFields::new(psi, kernels)?;
    let g = f.grid;
    let d = g.dim;
    let q = sub_quadrature(&f);
    let inter = &kernels.interaction;
    let a_zero = inter.is_zero();
    let diff = |x: &[f64], y: &[f64]| -> [f64; 2] {
        let mut z = [0.0; 2];
        for k in 0..d {
            z[k] = x[k] - y[k];
        }
        z
    };

    let phi_second_slot = match (kernels.influence.profiles(), kernels.influence.s_spec()) {
        (Some((chi1, _)), Some(s)) if !kernels.influence.is_zero() => (0..g.x_cells())
            .into_par_iter()
            .map(|ix| {
                let x = g.x_center(ix);
                let mut u0 = CompensatedSum::new();
                for (y, c2) in q.xs.iter().zip(&q.chi2) {
                    u0.add(s.at(&diff(&x, y)[..d]) * c2);
                }
                let u0 = u0.value();
                (0..g.gm)
                    .map(|k| {
                        let p = f.at_cell(ix, k);
                        let [c, dc, _] = chi1.eval(g.m_center(k));
                        (dc * u0 + c * p.dm_log * u0 - (p.dsmean + p.dm_log * p.smean) * q.total).abs()
                    })
                    .fold(0.0, f64::max)
            })
            .reduce(|| 0.0, f64::max),
        _ => 0.0,
    };

    let (theta_first_slot, theta_second_slot) = if a_zero {
        (0.0, 0.0)
    } else {
        let first = (0..g.x_cells())
            .into_par_iter()
            .map(|iy| {
                let y = g.x_center(iy);
                let mut v = [CompensatedSum::new(); 2];
                for (x, w) in q.xs.iter().zip(&q.first) {
                    let a = inter.at(&diff(x, &y)[..d]);
                    v[0].add(a[0] * w);
                    v[1].add(a[1] * w);
                }
                (0..g.gm)
                    .map(|k| {
                        let p = f.at_cell(iy, k);
                        let mut acc = 0.0;
                        for c in 0..d {
                            acc += (v[c].value() - p.a_conv[c] * q.total) * p.dx_log[c];
                        }
                        acc.abs()
                    })
                    .fold(0.0, f64::max)
            })
            .reduce(|| 0.0, f64::max);
        let constant = q.a_dot_grad.iter().fold(CompensatedSum::new(), |mut a, v| {
            a.add(*v);
            a
        });
        let constant = constant.value();
        let second = (0..g.x_cells())
            .into_par_iter()
            .map(|ix| {
                let x = g.x_center(ix);
                let mut p = CompensatedSum::new();
                for (y, gr) in q.xs.iter().zip(&q.grad) {
                    let a = inter.at(&diff(&x, y)[..d]);
                    p.add(a[0] * gr[0] + a[1] * gr[1]);
                }
                let p = p.value();
                (0..g.gm).map(|k| (g.m_center(k) * p - constant).abs()).fold(0.0, f64::max)
            })
            .reduce(|| 0.0, f64::max);
        (first, second)
    };
    Ok(CancellationReport { hx: g.hx(), hm: g.hm(), phi_second_slot, theta_first_slot, theta_second_slot })
}

/// Single-slot maxima at or below this are exact cancellations up to roundoff.
pub const ROUNDOFF_LEVEL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RefinementReport {
    pub reports: Vec<CancellationReport>,
    /// Log-log slopes of the three maxima against `hx`; `None` when some
    /// level is exactly zero.
    pub slopes: [Option<f64>; 3],
}

impl RefinementReport {
    /// Every maximum stays at roundoff level or decays with at least `min_slope`.
    pub fn passes(&self, min_slope: f64) -> bool {
        (0..3).all(|c| self.at_roundoff(c) || self.slopes[c].is_some_and(|s| s >= min_slope))
    }

    /// Whether maximum `c` (0, 1, 2 in slope order) sits at roundoff on every level.
    pub fn at_roundoff(&self, c: usize) -> bool {
        self.reports.iter().all(|r| Self::pick(r, c) <= ROUNDOFF_LEVEL)
    }

    fn pick(r: &CancellationReport, c: usize) -> f64 {
        [r.phi_second_slot, r.theta_first_slot, r.theta_second_slot][c]
    }
}

/// `cancellation_check` on a sequence of grids, each density built by `make`.
pub fn cancellation_refinement(
    grids: &[GridSpec],
    kernels: &Kernels,
    make: impl Fn(GridSpec) -> Result<DensityField, ChaosError>,
) -> Result<RefinementReport, ChaosError> {
    let reports = grids.iter().map(|g| cancellation_check(&make(*g)?, kernels)).collect::<Result<Vec<_>, _>>()?;
    let slopes = [0, 1, 2].map(|c| {
        let vals: Vec<f64> = reports.iter().map(|r| RefinementReport::pick(r, c)).collect();
        if vals.iter().any(|v| !(*v > 0.0)) {
            return None;
        }
        let lh: Vec<f64> = reports.iter().map(|r| r.hx.ln()).collect();
        let lv: Vec<f64> = vals.iter().map(|v| v.ln()).collect();
        linear_fit(&lh, &lv).map(|(s, _)| s)
    });
    Ok(RefinementReport { reports, slopes })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BruteforceEntry {
    pub i: Vec<usize>,
    pub j: Vec<usize>,
    /// `I` in the reduced set and `J` outside the partner class of `I`.
    pub qualifying: bool,
    pub phi: f64,
    pub theta: f64,
    /// Integrals of the absolute integrands, for scale.
    pub phi_abs: f64,
    pub theta_abs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BruteforceReport {
    pub n: usize,
    pub k: usize,
    pub tol_cancel: f64,
    pub entries: Vec<BruteforceEntry>,
    pub qualifying_count: usize,
    /// Largest `|phi|`, `|theta|` over qualifying entries.
    pub max_qualifying: f64,
    pub passes: bool,
}

impl BruteforceReport {
    pub fn entry(&self, i: &[usize], j: &[usize]) -> Option<&BruteforceEntry> {
        self.entries.iter().find(|e| e.i == i && e.j == j)
    }
}

/// Largest number of product-quadrature terms the brute-force check evaluates.
pub const BRUTEFORCE_BUDGET: u128 = 4_000_000_000;

/// Tensor-quadrature integrals `int prod_nu F(z_{i_nu}, z_{j_nu}) psi^{(x) N}`
/// for `F = phi, theta` and every pair of length-`2k` tuples over `1..=N`.
pub fn product_cancellation_bruteforce(
    psi: &DensityField,
    kernels: &Kernels,
    n: usize,
    k: usize,
    tol_cancel: f64,
) -> Result<BruteforceReport, ChaosError> {
    let g = psi.grid;
    if g.dim != 1 {
        return Err(ChaosError::InvalidArgument("the brute-force check is for d = 1".into()));
    }
    if n == 0 || n > 3 || k == 0 {
        return Err(ChaosError::InvalidArgument("need 1 <= N <= 3 and k >= 1".into()));
    }
    let f = RemainderFields::new(psi, kernels)?;
    let p = g.cells();
    let tuples = IndexTuple::all(n, 2 * k);
    let configs = (p as u128).pow(n as u32);
    let count = configs * (tuples.len() as u128).pow(2);
    if count > BRUTEFORCE_BUDGET {
        return Err(ChaosError::Budget { count, budget: BRUTEFORCE_BUDGET });
    }
    let points: Vec<([f64; 1], f64, PointFields)> = (0..p)
        .map(|c| {
            let (ix, km) = (c / g.gm, c % g.gm);
            ([g.x_center(ix)[0]], g.m_center(km), f.at_cell(ix, km))
        })
        .collect();
    let weights: Vec<f64> = psi.values.iter().map(|v| v * g.cell_volume()).collect();
    let mut phi = vec![0.0; p * p];
    let mut theta = vec![0.0; p * p];
    phi.par_chunks_mut(p).zip(theta.par_chunks_mut(p)).enumerate().for_each(|(a, (prow, trow))| {
        let (xa, ma, fa) = &points[a];
        for b in 0..p {
            let (xb, mb, fb) = &points[b];
            prow[b] = f.phi_with(fa, xa, *ma, xb, *mb);
            trow[b] = f.theta_with(fb, xa, *ma, xb);
        }
    });
    let qualifying: Vec<(IndexTuple, IndexTuple)> = qualifying_pairs(n, k);
    let pairs: Vec<(IndexTuple, IndexTuple)> =
        tuples.iter().flat_map(|i| tuples.iter().map(move |j| (i.clone(), j.clone()))).collect();
    let entries: Vec<BruteforceEntry> = pairs
        .par_iter()
        .map(|(i, j)| {
            let (ie, je) = (i.entries(), j.entries());
            let mut sums = [CompensatedSum::new(); 4];
            let mut cfg = vec![0usize; n];
            for flat in 0..configs as usize {
                let mut rest = flat;
                let mut w = 1.0;
                for slot in cfg.iter_mut() {
                    *slot = rest % p;
                    rest /= p;
                    w *= weights[*slot];
                }
                if w == 0.0 {
                    continue;
                }
                let (mut fp, mut ft) = (w, w);
                for (a, b) in ie.iter().zip(je) {
                    let idx = cfg[a - 1] * p + cfg[b - 1];
                    fp *= phi[idx];
                    ft *= theta[idx];
                }
                sums[0].add(fp);
                sums[1].add(ft);
                sums[2].add(fp.abs());
                sums[3].add(ft.abs());
            }
            BruteforceEntry {
                i: ie.to_vec(),
                j: je.to_vec(),
                qualifying: qualifying.iter().any(|(qi, qj)| qi == i && qj == j),
                phi: sums[0].value(),
                theta: sums[1].value(),
                phi_abs: sums[2].value(),
                theta_abs: sums[3].value(),
            }
        })
        .collect();
    let max_qualifying =
        entries.iter().filter(|e| e.qualifying).map(|e| e.phi.abs().max(e.theta.abs())).fold(0.0, f64::max);
    Ok(BruteforceReport {
        n,
        k,
        tol_cancel,
        qualifying_count: qualifying.len(),
        passes: max_qualifying <= tol_cancel,
        max_qualifying,
        entries,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GammaReport {
    pub time: f64,
    pub b_max: u32,
    pub gamma1_measured: f64,
    pub gamma1_bound: f64,
    pub gamma2_measured: f64,
    pub gamma2_bound: f64,
    /// `dm_log_linf`, `dx_log_linf` and the moment term entering the bounds.
    pub dm_log_linf: f64,
    pub dx_log_linf: f64,
    pub moment_term: f64,
}

impl GammaReport {
    pub fn holds(&self, slack: f64) -> bool {
        self.gamma1_measured <= self.gamma1_bound * (1.0 + slack)
            && self.gamma2_measured <= self.gamma2_bound * (1.0 + slack)
    }
}

/// `max_b (1/b) (sum sup^b psi vol)^{1/b}` over `b = 1..=b_max`.
fn lb_growth(sup: &[f64], psi: &DensityField, b_max: u32) -> f64 {
    let vol = psi.grid.cell_volume();
    (1..=b_max)
        .map(|b| {
            let mut acc = CompensatedSum::new();
            for (s, v) in sup.iter().zip(&psi.values) {
                acc.add(s.powi(b as i32) * v * vol);
            }
            acc.value().max(0.0).powf(1.0 / b as f64) / b as f64
        })
        .fold(0.0, f64::max)
}

/// Measured growth constants of `sup_{y,n} |phi|` and `sup_{y,n} |theta|`
/// in `L^b(psi)` next to their closed-form bounds. Suprema run over the grid.
pub fn gamma_bounds(psi: &DensityField, kernels: &Kernels, b_max: u32) -> Result<GammaReport, ChaosError> {
    if b_max < 8 {
        return Err(ChaosError::InvalidArgument("b_max must be at least 8".into()));
    }
    let f = RemainderFields::new(psi, kernels)?;
    let g = f.grid;
    let d = g.dim;
    let (nx, gm) = (g.x_cells(), g.gm);
    let dm_log_linf = f.dm_log.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let dx_log_linf = f.dx_log.iter().fold(0.0f64, |a, v| a.max((v[0] * v[0] + v[1] * v[1]).sqrt()));

    let mut sup_phi = vec![0.0; nx * gm];
    if let (Some((chi1, chi2)), Some(s)) = (kernels.influence.profiles(), kernels.influence.s_spec()) {
        if !kernels.influence.is_zero() {
            let c2: Vec<f64> = (0..gm).map(|k| chi2.eval(g.m_center(k))[0]).collect();
            let (c2min, c2max) = c2.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
            sup_phi.par_chunks_mut(gm).enumerate().for_each(|(ix, col)| {
                let x = g.x_center(ix);
                let (mut umin, mut umax) = (f64::INFINITY, f64::NEG_INFINITY);
                for iy in 0..nx {
                    let y = g.x_center(iy);
                    let sv = s.at(&[x[0] - y[0], x[1] - y[1]][..d]);
                    for u in [sv * c2min, sv * c2max] {
                        umin = umin.min(u);
                        umax = umax.max(u);
                    }
                }
                for (k, out) in col.iter_mut().enumerate() {
                    let p = f.at_cell(ix, k);
                    let [c, dc, _] = chi1.eval(g.m_center(k));
                    let slope = dc + c * p.dm_log;
                    let offset = p.dsmean + p.dm_log * p.smean;
                    *out = (slope * umax - offset).abs().max((slope * umin - offset).abs());
                }
            });
        }
    }

    let mut sup_theta = vec![0.0; nx * gm];
    let inter = &kernels.interaction;
    if !inter.is_zero() {
        let cells: Vec<PointFields> = (0..nx * gm).map(|c| f.at_cell(c / gm, c % gm)).collect();
        sup_theta.par_chunks_mut(gm).enumerate().for_each(|(ix, col)| {
            let x = g.x_center(ix);
            let mut lines = Vec::with_capacity(nx * gm);
            for iy in 0..nx {
                let y = g.x_center(iy);
                let a = inter.at(&[x[0] - y[0], x[1] - y[1]][..d]);
                for k in 0..gm {
                    let p = &cells[iy * gm + k];
                    let mut alpha = 0.0;
                    let mut beta = 0.0;
                    for c in 0..d {
                        alpha += a[c] * p.dx_log[c];
                        beta -= p.a_conv[c] * p.dx_log[c];
                    }
                    lines.push((alpha, beta));
                }
            }
            for (k, out) in col.iter_mut().enumerate() {
                let m = g.m_center(k);
                *out = lines.iter().fold(0.0f64, |acc, (al, be)| acc.max((m * al + be).abs()));
            }
        });
    }

    let moment_term = (1..=b_max).map(|b| psi.moment(b, 1).powf(1.0 / b as f64) / b as f64).fold(0.0, f64::max);
    let bounds = kernels.influence.bounds();
    Ok(GammaReport {
        time: psi.time,
        b_max,
        gamma1_measured: lb_growth(&sup_phi, psi, b_max),
        gamma1_bound: 2.0 * bounds.s1 + 2.0 * bounds.s0 * dm_log_linf,
        gamma2_measured: lb_growth(&sup_theta, psi, b_max),
        gamma2_bound: dx_log_linf * inter.sup_bound() * (f.mu_l1 + moment_term),
        dm_log_linf,
        dx_log_linf,
        moment_term,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{MProfile, ProductDensity, XProfile};
    use crate::kernels::{InfluenceKernel, InfluenceSpec, InteractionKernel, InteractionSpec, SKind, SSpec};

    fn cosine_density(grid: GridSpec) -> DensityField {
        ProductDensity { x: XProfile::Cosine { amplitude: 0.3, freq: 1 }, m: MProfile::Exponential }
            .discretize(grid)
            .unwrap()
    }

    fn generic_kernels() -> Kernels {
        Kernels::new(
            InteractionKernel::new(InteractionSpec::Constant { c: vec![0.3] }).unwrap(),
            InfluenceKernel::new(InfluenceSpec::Separable {
                s: SSpec { kind: SKind::Sin, amplitude: 0.2, freq: 1, parity: None },
                chi_support: Some([0.5, 4.0]),
                chi2_support: None,
                bounds: None,
            })
            .unwrap(),
        )
    }

    #[test]
    fn zero_kernels_have_zero_remainders() {
        let psi = cosine_density(GridSpec::new(1, 8, 16, 6.0).unwrap());
        let f = RemainderFields::new(&psi, &Kernels::zero(1)).unwrap();
        let e = ParticleEnsemble::new(1, vec![0.1, 0.6, 0.9], vec![0.5, 1.0, 2.0]).unwrap();
        let r = f.remainder_sample(&e).unwrap();
        assert_eq!((r.r_value, r.s_value), (0.0, 0.0));
        let (phi, theta) = phi_theta(&psi, &Kernels::zero(1), &[0.2], 1.0, &[0.7], 2.0).unwrap();
        assert_eq!((phi, theta), (0.0, 0.0));
        let c = cancellation_check(&psi, &Kernels::zero(1)).unwrap();
        assert_eq!((c.phi_second_slot, c.theta_first_slot, c.theta_second_slot), (0.0, 0.0, 0.0));
    }

    #[test]
    fn flat_in_x_density_kills_theta() {
        let psi = ProductDensity::exponential_uniform().discretize(GridSpec::new(1, 8, 16, 6.0).unwrap()).unwrap();
        let (_, theta) = phi_theta(&psi, &generic_kernels(), &[0.2], 1.0, &[0.7], 2.0).unwrap();
        assert_eq!(theta, 0.0);
    }

    #[test]
    fn interpolation_reproduces_cell_values() {
        let psi = cosine_density(GridSpec::new(1, 8, 16, 6.0).unwrap());
        let f = RemainderFields::new(&psi, &generic_kernels()).unwrap();
        let g = psi.grid;
        for (ix, k) in [(0, 3), (5, 0), (7, 15)] {
            let p = f.at(&g.x_center(ix)[..1], g.m_center(k));
            let q = f.at_cell(ix, k);
            assert!((p.psi - q.psi).abs() < 1e-15 && (p.smean - q.smean).abs() < 1e-15);
        }
    }

    #[test]
    fn below_floor_is_refused() {
        let g = GridSpec::new(1, 4, 8, 4.0).unwrap();
        let mut psi = cosine_density(g);
        psi.values[0] = 0.0;
        psi.values[1] = 0.0;
        let err = phi_theta(&psi, &generic_kernels(), &[0.125], 0.25, &[0.6], 1.0).unwrap_err();
        assert!(matches!(err, ChaosError::BelowFloor { .. }));
    }

    #[test]
    fn product_weights_are_refused() {
        let psi = cosine_density(GridSpec::new(1, 4, 8, 4.0).unwrap());
        let k = Kernels::new(
            InteractionKernel::zero(1),
            InfluenceKernel::new(InfluenceSpec::ProductWeights {
                s: SSpec { kind: SKind::Cos, amplitude: 0.1, freq: 1, parity: None },
            })
            .unwrap(),
        );
        assert!(matches!(RemainderFields::new(&psi, &k), Err(ChaosError::UnsupportedKernel(_))));
    }
}
