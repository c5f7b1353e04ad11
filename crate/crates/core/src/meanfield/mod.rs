//! Finite-volume solver for the mean-field equation
//! `d_t psi + div_x(psi A[psi]) + d_m(psi Smean[psi]) = 0` on the periodic
//! x-grid times a truncated m-grid, plus the reduced mu-equation, the bounds
//! ledger and a two-solution stability probe.

mod ledger;
mod reduced;
mod stability;

pub use ledger::{bounds_ledger, moment_growth_rate, BoundsLedger, LedgerError, LedgerInputs};
pub use reduced::{solve_mu_reduced, ReducedOptions};
pub use stability::{shift_x, stability_check, StabilityReport};

use crate::field::{DensityField, GridSpec, SpatialField, SpatialGrid};
use crate::kernels::{Chi, Kernels, SSpec};
use crate::numerics::CompensatedSum;
use rayon::prelude::*;
use serde::Serialize;
use std::io::{self, Write};
use thiserror::Error;

/// Default Courant number of each split substep.
pub const DEFAULT_CFL: f64 = 0.45;
/// Largest Courant number for which donor-cell keeps every cell nonnegative.
pub const MAX_CFL: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeanFieldError {
    #[error("CFL violated: dt = {dt:.3e} exceeds the stable limit {limit:.3e}")]
    Cfl { dt: f64, limit: f64 },
    #[error("initial envelope violated: {0}")]
    Envelope(String),
    #[error("mass drift {drift:.3e} at t = {time} exceeds tolerance")]
    MassDrift { time: f64, drift: f64 },
    #[error("unsupported kernel: {0}")]
    UnsupportedKernel(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("non-finite value after step {step}")]
    NonFinite { step: usize },
}

#[derive(Clone, Copy, Debug)]
enum Weighting {
    None,
    Separable { chi1: Chi, chi2: Chi },
    ProductWeights,
}

/// Kernel tables on the displacement grid, so each convolution is a plain
/// circular sum over cells.
#[derive(Clone, Debug)]
pub struct Convolver {
    grid: SpatialGrid,
    /// `a(delta h)` for displacement index `delta`.
    a_table: Vec<[f64; 2]>,
    a_zero: bool,
    /// `s(delta h)`.
    s_table: Vec<f64>,
    weighting: Weighting,
}

impl Convolver {
    pub fn new(grid: SpatialGrid, kernels: &Kernels) -> Result<Self, MeanFieldError> {
        if kernels.dim() != grid.dim {
            return Err(MeanFieldError::InvalidArgument(format!(
                "kernel dimension {} differs from grid dimension {}",
                kernels.dim(),
                grid.dim
            )));
        }
        let n = grid.cells();
        let h = grid.hx();
        let disp = |idx: usize| -> [f64; 2] {
            if grid.dim == 1 {
                [idx as f64 * h, 0.0]
            } else {
                [(idx / grid.gx) as f64 * h, (idx % grid.gx) as f64 * h]
            }
        };
        let a_zero = kernels.interaction.is_zero();
        let a_table = (0..n)
            .map(|idx| if a_zero { [0.0; 2] } else { kernels.interaction.at(&disp(idx)[..grid.dim]) })
            .collect();
        let inf = &kernels.influence;
        let weighting = if inf.is_zero() {
            Weighting::None
        } else if inf.is_product_weights() {
            Weighting::ProductWeights
        } else {
            let (chi1, chi2) = inf.profiles().expect("separable influence has profiles");
            Weighting::Separable { chi1, chi2 }
        };
        let s_table = match inf.s_spec() {
            Some(s) if !matches!(weighting, Weighting::None) => {
                (0..n).map(|idx| SSpec::at(s, &disp(idx)[..grid.dim])).collect()
            }
            _ => vec![0.0; n],
        };
        Ok(Self { grid, a_table, a_zero, s_table, weighting })
    }

    /// Index of the displacement `to - from` in the tables.
    #[inline]
    fn disp_index(&self, from: usize, to: usize) -> usize {
        let g = self.grid.gx;
        if self.grid.dim == 1 {
            (to + g - from) % g
        } else {
            let (fi, fj) = (from / g, from % g);
            let (ti, tj) = (to / g, to % g);
            ((ti + g - fi) % g) * g + (tj + g - fj) % g
        }
    }

    /// `A(x_i) = sum_j a(x_j - x_i) mu_j h^d`.
    pub fn interaction(&self, mu: &[f64]) -> Vec<[f64; 2]> {
        let n = self.grid.cells();
        if self.a_zero {
            return vec![[0.0; 2]; n];
        }
        let vol = self.grid.volume();
        (0..n)
            .into_par_iter()
            .map(|i| {
                let mut acc = [0.0; 2];
                for (j, m) in mu.iter().enumerate() {
                    let a = self.a_table[self.disp_index(i, j)];
                    acc[0] += a[0] * m;
                    acc[1] += a[1] * m;
                }
                [acc[0] * vol, acc[1] * vol]
            })
            .collect()
    }

    /// `sum_j s(x_i - x_j) rho_j h^d`.
    pub fn influence(&self, rho: &[f64]) -> Vec<f64> {
        let vol = self.grid.volume();
        (0..self.grid.cells())
            .into_par_iter()
            .map(|i| {
                let mut acc = 0.0;
                for (j, r) in rho.iter().enumerate() {
                    acc += self.s_table[self.disp_index(j, i)] * r;
                }
                acc * vol
            })
            .collect()
    }

    /// All velocity fields of `psi`.
    pub fn fields(&self, psi: &DensityField) -> VelocityFields {
        let g = psi.grid;
        let (nx, gm, hm) = (g.x_cells(), g.gm, g.hm());
        let mu = psi.mu();
        let a_field = self.interaction(&mu.values);
        let mut smean = vec![0.0; nx * gm];
        let mut dsmean_dm = vec![0.0; nx * gm];
        let mut smean_faces = vec![0.0; nx * (gm + 1)];
        match self.weighting {
            Weighting::None => {}
            Weighting::Separable { chi1, chi2 } => {
                let w2: Vec<f64> = (0..gm).map(|k| chi2.eval(g.m_center(k))[0] * hm).collect();
                let rho = psi.x_integral(&w2);
                let conv = self.influence(&rho.values);
                let centers: Vec<[f64; 3]> = (0..gm).map(|k| chi1.eval(g.m_center(k))).collect();
                let faces: Vec<f64> = (0..=gm).map(|k| chi1.eval(k as f64 * hm)[0]).collect();
                for ix in 0..nx {
                    for k in 0..gm {
                        smean[ix * gm + k] = centers[k][0] * conv[ix];
                        dsmean_dm[ix * gm + k] = centers[k][1] * conv[ix];
                    }
                    for k in 1..gm {
                        smean_faces[ix * (gm + 1) + k] = faces[k] * conv[ix];
                    }
                }
            }
            Weighting::ProductWeights => {
                let conv = self.influence(&mu.values);
                for ix in 0..nx {
                    for k in 0..gm {
                        smean[ix * gm + k] = g.m_center(k) * conv[ix];
                        dsmean_dm[ix * gm + k] = conv[ix];
                    }
                    for k in 1..gm {
                        smean_faces[ix * (gm + 1) + k] = k as f64 * hm * conv[ix];
                    }
                }
            }
        }
        VelocityFields { grid: g, a_field, smean, dsmean_dm, smean_faces, mu }
    }
}

/// Velocities of the mean-field equation for one state.
#[derive(Clone, Debug, PartialEq)]
pub struct VelocityFields {
    pub grid: GridSpec,
    /// `A = a * mu` per x-cell (unused components 0).
    pub a_field: Vec<[f64; 2]>,
    /// `Smean(x, m)` at cell centers.
    pub smean: Vec<f64>,
    pub dsmean_dm: Vec<f64>,
    /// `Smean` on the `gm + 1` m-faces of each column; both boundary faces are 0.
    pub smean_faces: Vec<f64>,
    pub mu: SpatialField,
}

impl VelocityFields {
    pub fn a_sup(&self) -> f64 {
        self.a_field.iter().fold(0.0, |a, v| a.max((v[0] * v[0] + v[1] * v[1]).sqrt()))
    }

    pub fn smean_sup(&self) -> f64 {
        self.smean.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    pub fn dsmean_dm_sup(&self) -> f64 {
        self.dsmean_dm.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    fn x_face_velocity(&self, ix: usize, axis: usize) -> f64 {
        let nb = self.grid.x_neighbor(ix, axis, 1);
        0.5 * (self.a_field[ix][axis] + self.a_field[nb][axis])
    }

    /// Largest substep Courant number per unit time over all split sweeps.
    fn courant_rate(&self) -> f64 {
        let g = &self.grid;
        let mut rate = 0.0f64;
        for axis in 0..g.dim {
            for ix in 0..g.x_cells() {
                rate = rate.max(self.x_face_velocity(ix, axis).abs() / g.hx());
            }
        }
        for v in &self.smean_faces {
            rate = rate.max(v.abs() / g.hm());
        }
        rate
    }

    /// `cfl` times the largest stable time step.
    pub fn stable_dt(&self, cfl: f64) -> f64 {
        let r = self.courant_rate();
        if r == 0.0 {
            f64::INFINITY
        } else {
            cfl / r
        }
    }
}

/// Fields of `psi` under `kernels`.
pub fn velocity_fields(psi: &DensityField, kernels: &Kernels) -> Result<VelocityFields, MeanFieldError> {
    Ok(Convolver::new(psi.grid.spatial(), kernels)?.fields(psi))
}

/// Donor-cell flux through a face with velocity `v` between `left` and `right`.
#[inline]
fn upwind_flux(v: f64, left: f64, right: f64) -> f64 {
    v.max(0.0) * left + v.min(0.0) * right
}

/// One dimensionally split donor-cell step: every x axis, then m.
pub fn advance(psi: &DensityField, fields: &VelocityFields, dt: f64) -> Result<DensityField, MeanFieldError> {
    if !(dt >= 0.0) {
        return Err(MeanFieldError::InvalidArgument(format!("dt must be nonnegative, got {dt}")));
    }
    let limit = fields.stable_dt(MAX_CFL);
    if dt > limit * (1.0 + 1e-12) {
        return Err(MeanFieldError::Cfl { dt, limit });
    }
    let g = psi.grid;
    let gm = g.gm;
    let mut cur = psi.values.clone();
    for axis in 0..g.dim {
        let lam = dt / g.hx();
        let faces: Vec<f64> = (0..g.x_cells()).map(|ix| fields.x_face_velocity(ix, axis)).collect();
        if faces.iter().all(|v| *v == 0.0) {
            continue;
        }
        let old = cur.clone();
        cur.par_chunks_mut(gm).enumerate().for_each(|(ix, out)| {
            let right = g.x_neighbor(ix, axis, 1);
            let left = g.x_neighbor(ix, axis, -1);
            let (vr, vl) = (faces[ix], faces[left]);
            for k in 0..gm {
                let here = old[ix * gm + k];
                let fr = upwind_flux(vr, here, old[right * gm + k]);
                let fl = upwind_flux(vl, old[left * gm + k], here);
                out[k] = here - lam * (fr - fl);
            }
        });
    }
    let lam = dt / g.hm();
    cur.par_chunks_mut(gm).enumerate().for_each(|(ix, col)| {
        let vf = &fields.smean_faces[ix * (gm + 1)..(ix + 1) * (gm + 1)];
        if vf.iter().all(|v| *v == 0.0) {
            return;
        }
        let old = col.to_vec();
        for k in 0..gm {
            let fr = if k + 1 < gm { upwind_flux(vf[k + 1], old[k], old[k + 1]) } else { 0.0 };
            let fl = if k > 0 { upwind_flux(vf[k], old[k - 1], old[k]) } else { 0.0 };
            col[k] = old[k] - lam * (fr - fl);
        }
    });
    Ok(DensityField { grid: g, values: cur, time: psi.time + dt })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MomentEntry {
    pub b: u32,
    pub p: u32,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MomentReport {
    pub time: f64,
    pub moments: Vec<MomentEntry>,
    pub mu_l1: f64,
    pub mu_linf: f64,
    pub psi_linf: f64,
    /// `max_b M_{b,1}^{1/b} / b` over the tabulated b.
    pub n0_estimate: f64,
}

impl MomentReport {
    pub fn of(psi: &DensityField, b_values: &[u32], p_values: &[u32]) -> Self {
        let mu = psi.mu();
        let mut moments = Vec::new();
        let mut n0 = 0.0f64;
        for &b in b_values {
            for &p in p_values {
                let value = psi.moment(b, p);
                if p == 1 {
                    n0 = n0.max(value.powf(1.0 / b as f64) / b as f64);
                }
                moments.push(MomentEntry { b, p, value });
            }
        }
        Self { time: psi.time, moments, mu_l1: mu.l1(), mu_linf: mu.linf(), psi_linf: psi.linf(), n0_estimate: n0 }
    }

    pub fn get(&self, b: u32, p: u32) -> Option<f64> {
        self.moments.iter().find(|e| e.b == b && e.p == p).map(|e| e.value)
    }
}

/// Finite-difference log-gradients and the `e^m psi` envelope of one frame.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LogGradientReport {
    pub time: f64,
    /// `max |d_m log psi|`, centered differences, excluding the top band of m-cells.
    pub dm_log_linf: f64,
    /// `max |grad_x log psi|` (Euclidean), same cells.
    pub dx_log_linf: f64,
    /// `min / max` of `e^{m_k} psi` over cells with `m_k <= m_max - band_width`.
    pub envelope_min: f64,
    pub envelope_max: f64,
}

/// Cells count as resolved where `psi > LOG_FLOOR e^{-m}`.
pub const LOG_FLOOR: f64 = 1e-12;

impl LogGradientReport {
    pub fn of(psi: &DensityField, band_cells: usize, band_width: f64) -> Self {
        let g = psi.grid;
        let (gm, hm, hx) = (g.gm, g.hm(), g.hx());
        let ok = |ix: usize, k: usize| psi.at(ix, k) > LOG_FLOOR * (-g.m_center(k)).exp();
        let mut dm_max = 0.0f64;
        let mut dx_max = 0.0f64;
        let mut env_min = f64::INFINITY;
        let mut env_max = 0.0f64;
        let top = gm.saturating_sub(band_cells);
        for ix in 0..g.x_cells() {
            for k in 0..gm {
                let mc = g.m_center(k);
                if mc <= g.m_max - band_width {
                    let e = psi.at(ix, k) * mc.exp();
                    env_min = env_min.min(e);
                    env_max = env_max.max(e);
                }
                if k == 0 || k + 1 >= top || !ok(ix, k) || !ok(ix, k - 1) || !ok(ix, k + 1) {
                    continue;
                }
                let dm = (psi.at(ix, k + 1).ln() - psi.at(ix, k - 1).ln()) / (2.0 * hm);
                dm_max = dm_max.max(dm.abs());
                let mut sq = 0.0;
                let mut resolved = true;
                for axis in 0..g.dim {
                    let (r, l) = (g.x_neighbor(ix, axis, 1), g.x_neighbor(ix, axis, -1));
                    if !ok(r, k) || !ok(l, k) {
                        resolved = false;
                        break;
                    }
                    let d = (psi.at(r, k).ln() - psi.at(l, k).ln()) / (2.0 * hx);
                    sq += d * d;
                }
                if resolved {
                    dx_max = dx_max.max(sq.sqrt());
                }
            }
        }
        if env_min == f64::INFINITY {
            env_min = 0.0;
        }
        Self { time: psi.time, dm_log_linf: dm_max, dx_log_linf: dx_max, envelope_min: env_min, envelope_max: env_max }
    }
}

/// Smallest `C` with `e^{-m}/C <= psi <= C e^{-m}` at every cell center; `None`
/// when some cell is not strictly positive.
pub fn envelope_constant(psi: &DensityField) -> Option<f64> {
    let g = psi.grid;
    let mut c = 1.0f64;
    for ix in 0..g.x_cells() {
        for k in 0..g.gm {
            let r = psi.at(ix, k) * g.m_center(k).exp();
            if !(r > 0.0) || !r.is_finite() {
                return None;
            }
            c = c.max(r).max(1.0 / r);
        }
    }
    Some(c)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveOptions {
    pub t_end: f64,
    pub cfl: f64,
    /// Increasing output times in (0, t_end]; `t_end` is always appended.
    pub frame_times: Vec<f64>,
    /// Largest accepted initial envelope constant.
    pub envelope_cap: f64,
    pub mass_tolerance: f64,
    /// m-cells excluded at the top of the grid in the log-gradient measurement.
    pub band_cells: usize,
    /// Width in m of the excluded top band in the envelope measurement.
    pub band_width: f64,
    pub moment_b: Vec<u32>,
    pub moment_p: Vec<u32>,
    pub max_steps: usize,
}

impl SolveOptions {
    /// Frames every `frame_dt` up to `t_end`.
    pub fn every(t_end: f64, frame_dt: f64) -> Self {
        let n = (t_end / frame_dt).round().max(1.0) as usize;
        let frame_times = (1..=n).map(|k| if k == n { t_end } else { k as f64 * t_end / n as f64 }).collect();
        Self {
            t_end,
            cfl: DEFAULT_CFL,
            frame_times,
            envelope_cap: 1e6,
            mass_tolerance: 1e-6,
            band_cells: 5,
            band_width: 5.0,
            moment_b: vec![1, 2, 3, 4],
            moment_p: vec![1, 2],
            max_steps: 10_000_000,
        }
    }

    fn validated_times(&self) -> Result<Vec<f64>, MeanFieldError> {
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(MeanFieldError::InvalidArgument(format!("T must be positive, got {}", self.t_end)));
        }
        if !(self.cfl > 0.0 && self.cfl <= MAX_CFL) {
            return Err(MeanFieldError::InvalidArgument(format!("cfl must lie in (0, {MAX_CFL}], got {}", self.cfl)));
        }
        let mut times: Vec<f64> = self.frame_times.iter().copied().filter(|t| *t < self.t_end).collect();
        times.push(self.t_end);
        if times.iter().any(|t| !(*t > 0.0)) || times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(MeanFieldError::InvalidArgument("frame times must be increasing and positive".into()));
        }
        Ok(times)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MeanFieldRun {
    /// Frame 0 is the initial state.
    pub frames: Vec<DensityField>,
    pub moments: Vec<MomentReport>,
    pub log_gradients: Vec<LogGradientReport>,
    /// Measured envelope constant of the initial data.
    pub envelope_constant: f64,
    pub steps: usize,
    pub max_mass_drift: f64,
}

impl MeanFieldRun {
    pub fn last(&self) -> &DensityField {
        self.frames.last().expect("run has frames")
    }

    pub fn mu_frames(&self) -> Vec<SpatialField> {
        self.frames.iter().map(DensityField::mu).collect()
    }
}

/// Integrates to `opts.t_end`, hitting every frame time exactly.
pub fn solve(psi0: &DensityField, kernels: &Kernels, opts: &SolveOptions) -> Result<MeanFieldRun, MeanFieldError> {
    let times = opts.validated_times()?;
    if !kernels.influence.compact_m_support() {
        return Err(MeanFieldError::UnsupportedKernel(
            "the influence kernel needs a compact weight support inside (0, m_max)".into(),
        ));
    }
    if let Some((_, hi)) = kernels.influence.m_support() {
        if hi > psi0.grid.m_max {
            return Err(MeanFieldError::UnsupportedKernel(format!(
                "weight support reaches {hi} beyond m_max = {}",
                psi0.grid.m_max
            )));
        }
    }
    let envelope = envelope_constant(psi0)
        .ok_or_else(|| MeanFieldError::Envelope("initial density must be positive on every cell".into()))?;
    if envelope > opts.envelope_cap {
        return Err(MeanFieldError::Envelope(format!(
            "envelope constant {envelope:.3e} exceeds cap {:.3e}",
            opts.envelope_cap
        )));
    }
    let conv = Convolver::new(psi0.grid.spatial(), kernels)?;
    let mass0 = psi0.mass();
    let report = |p: &DensityField| {
        (
            MomentReport::of(p, &opts.moment_b, &opts.moment_p),
            LogGradientReport::of(p, opts.band_cells, opts.band_width),
        )
    };
    let mut psi = psi0.clone();
    psi.time = 0.0;
    let (m0, l0) = report(&psi);
    let mut run = MeanFieldRun {
        frames: vec![psi.clone()],
        moments: vec![m0],
        log_gradients: vec![l0],
        envelope_constant: envelope,
        steps: 0,
        max_mass_drift: 0.0,
    };
    for target in times {
        loop {
            let fields = conv.fields(&psi);
            let remaining = target - psi.time;
            let limit = fields.stable_dt(opts.cfl);
            let hit = limit >= remaining;
            let dt = if hit { remaining } else { limit };
            psi = advance(&psi, &fields, dt)?;
            run.steps += 1;
            if hit {
                psi.time = target;
            }
            if psi.values.iter().any(|v| !v.is_finite()) {
                return Err(MeanFieldError::NonFinite { step: run.steps });
            }
            let drift = (psi.mass() / mass0 - 1.0).abs();
            run.max_mass_drift = run.max_mass_drift.max(drift);
            if drift > opts.mass_tolerance {
                return Err(MeanFieldError::MassDrift { time: psi.time, drift });
            }
            if run.steps >= opts.max_steps {
                return Err(MeanFieldError::InvalidArgument(format!("step budget {} exhausted", opts.max_steps)));
            }
            if hit {
                break;
            }
        }
        let (m, l) = report(&psi);
        run.frames.push(psi.clone());
        run.moments.push(m);
        run.log_gradients.push(l);
    }
    Ok(run)
}

/// L1 residual of `d_t mu + div_x(mu A) - int psi Smean dm` between
/// consecutive frames (time-centered); one value per frame pair.
pub fn mu_equation_residual(frames: &[DensityField], kernels: &Kernels) -> Result<Vec<f64>, MeanFieldError> {
    let Some(first) = frames.first() else {
        return Ok(Vec::new());
    };
    let g = first.grid;
    let conv = Convolver::new(g.spatial(), kernels)?;
    let summary = |p: &DensityField| {
        let f = conv.fields(p);
        let nx = g.x_cells();
        let mut src = vec![0.0; nx];
        for (ix, s) in src.iter_mut().enumerate() {
            let mut acc = CompensatedSum::new();
            for k in 0..g.gm {
                acc.add(p.at(ix, k) * f.smean[ix * g.gm + k] * g.hm());
            }
            *s = acc.value();
        }
        let mut div = vec![0.0; nx];
        for (ix, d) in div.iter_mut().enumerate() {
            for axis in 0..g.dim {
                let (r, l) = (g.x_neighbor(ix, axis, 1), g.x_neighbor(ix, axis, -1));
                *d += (f.mu.values[r] * f.a_field[r][axis] - f.mu.values[l] * f.a_field[l][axis]) / (2.0 * g.hx());
            }
        }
        (f.mu.values, div, src)
    };
    let mut out = Vec::new();
    let mut prev = summary(first);
    for pair in frames.windows(2) {
        let next = summary(&pair[1]);
        let dt = pair[1].time - pair[0].time;
        let mut acc = CompensatedSum::new();
        for ix in 0..g.x_cells() {
            let r = (next.0[ix] - prev.0[ix]) / dt + 0.5 * (next.1[ix] + prev.1[ix]) - 0.5 * (next.2[ix] + prev.2[ix]);
            acc.add(r.abs() * g.x_volume());
        }
        out.push(acc.value());
        prev = next;
    }
    Ok(out)
}

/// CSV `t,x1[,x2],m,psi` over all frames, cell centers.
pub fn write_field_csv<W: Write>(frames: &[DensityField], mut w: W) -> io::Result<()> {
    let Some(first) = frames.first() else {
        return Ok(());
    };
    let g = first.grid;
    writeln!(w, "{}", if g.dim == 1 { "t,x1,m,psi" } else { "t,x1,x2,m,psi" })?;
    for f in frames {
        for ix in 0..g.x_cells() {
            let c = g.x_center(ix);
            for k in 0..g.gm {
                if g.dim == 1 {
                    writeln!(w, "{},{},{},{}", f.time, c[0], g.m_center(k), f.at(ix, k))?;
                } else {
                    writeln!(w, "{},{},{},{},{}", f.time, c[0], c[1], g.m_center(k), f.at(ix, k))?;
                }
            }
        }
    }
    Ok(())
}
