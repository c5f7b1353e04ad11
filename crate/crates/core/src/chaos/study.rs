//! Monte-Carlo convergence of the particle one-marginal to the mean-field
//! density.

use super::mc::exp_moment_mc;
use super::ChaosError;
use crate::field::{DensityField, GridSpec};
use crate::kernels::Kernels;
use crate::meanfield::{solve, SolveOptions};
use crate::numerics::{linear_fit, median, wrap_unit, CompensatedSum};
use crate::particles::{product_factors, sample_initial, simulate, InitialSource, ParticleEnsemble, Scheme, PRODUCT_FORM_TOL};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

#[derive(Clone, Debug)]
pub struct StudyConfig {
    pub kernels: Kernels,
    /// Product-form initial density; its grid is the PDE grid.
    pub psi0: DensityField,
    /// Histogram bins; must equal the PDE cells when given.
    pub bins: Option<GridSpec>,
    pub t_end: f64,
    pub dt: f64,
    pub scheme: Scheme,
    pub cfl: f64,
    /// Times in (0, t_end) at which errors are also recorded; `t_end` is appended.
    pub checkpoints: Vec<f64>,
    pub ns: Vec<usize>,
    pub replicas: usize,
    pub seeds: Vec<u64>,
    /// `(N, samples)` for the exponential-moment estimate at each checkpoint.
    pub delta: Option<(usize, usize)>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChaosRow {
    #[serde(rename = "N")]
    pub n: usize,
    pub replicas: usize,
    /// Median over seeds of the one-marginal L1 error at `t_end`.
    pub l1: f64,
    /// Median over seeds of the weighted position W1 error at `t_end`.
    pub w1: f64,
    pub l1_seeds: Vec<f64>,
    pub w1_seeds: Vec<f64>,
    /// Median L1 error at every checkpoint.
    pub l1_checkpoints: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DeltaRow {
    pub t: f64,
    pub mean: f64,
    pub ci: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChaosReport {
    pub rows: Vec<ChaosRow>,
    /// Slope of `log l1` against `log N`; `None` with fewer than two rows.
    pub slope: Option<f64>,
    pub delta: Vec<DeltaRow>,
    /// Checkpoints where the density was not of product form, so no delta was sampled.
    pub delta_skipped: Vec<f64>,
    pub checkpoints: Vec<f64>,
}

/// Seed of replica `r` of study seed `seed` at particle count `n`.
fn replica_seed(seed: u64, n: usize, r: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((n as u64) << 24) | r as u64);
    rng.gen()
}

/// Wasserstein-1 distance on the unit circle between the weighted atoms and
/// the piecewise-constant density with cell masses `cells`:
/// `min_alpha int_0^1 |F - G - alpha|`.
pub fn circle_w1(positions: &[f64], weights: &[f64], cells: &[f64]) -> f64 {
    let total_w = weights.iter().sum::<f64>();
    let total_c = cells.iter().sum::<f64>();
    if !(total_w > 0.0 && total_c > 0.0) {
        return f64::NAN;
    }
    let g = cells.len();
    let mut atoms: Vec<(f64, f64)> = positions.iter().map(|x| wrap_unit(*x)).zip(weights.iter().map(|w| w / total_w)).collect();
    atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
    let cdf_g = |x: f64| -> f64 {
        let u = x * g as f64;
        let k = (u.floor() as usize).min(g - 1);
        let before: f64 = cells[..k].iter().sum::<f64>();
        (before + cells[k] * (u - k as f64)) / total_c
    };
    // Breakpoints: atoms and cell edges.
    let mut points: Vec<f64> = atoms.iter().map(|a| a.0).chain((0..=g).map(|k| k as f64 / g as f64)).collect();
    points.sort_by(f64::total_cmp);
    points.dedup();
    // Linear pieces of H = F - G: (length, start value, end value).
    let mut pieces = Vec::with_capacity(points.len());
    let mut f = 0.0;
    let mut next = 0;
    for w in points.windows(2) {
        while next < atoms.len() && atoms[next].0 <= w[0] {
            f += atoms[next].1;
            next += 1;
        }
        if w[1] > w[0] {
            pieces.push((w[1] - w[0], f - cdf_g(w[0]), f - cdf_g(w[1])));
        }
    }
    let cost = |alpha: f64| -> f64 {
        let mut acc = CompensatedSum::new();
        for (len, u, v) in &pieces {
            let (p, q) = (u - alpha, v - alpha);
            let part = if p * q >= 0.0 {
                0.5 * (p.abs() + q.abs())
            } else {
                0.5 * (p * p + q * q) / (p.abs() + q.abs())
            };
            acc.add(len * part);
        }
        acc.value()
    };
    let (mut lo, mut hi) = pieces.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, u, v)| {
        (lo.min(*u).min(*v), hi.max(*u).max(*v))
    });
    for _ in 0..200 {
        let a = lo + (hi - lo) / 3.0;
        let b = hi - (hi - lo) / 3.0;
        if cost(a) <= cost(b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    cost(0.5 * (lo + hi))
}

/// Pooled histogram of `(x, m)` over the PDE cells: L1 distance to the
/// density (mass outside the m-range counts in full).
fn histogram_l1(states: &[ParticleEnsemble], psi: &DensityField) -> f64 {
    let g = psi.grid;
    let mut counts = vec![0usize; g.cells()];
    let mut outside = 0usize;
    let mut total = 0usize;
    for e in states {
        for i in 0..e.len() {
            total += 1;
            let m = e.weights[i];
            if !(m >= 0.0 && m < g.m_max) {
                outside += 1;
                continue;
            }
            let x = e.position(i);
            let mut ix = 0;
            for &xk in x.iter().take(g.dim) {
                ix = ix * g.gx + ((wrap_unit(xk) * g.gx as f64) as usize).min(g.gx - 1);
            }
            let k = ((m / g.hm()) as usize).min(g.gm - 1);
            counts[ix * g.gm + k] += 1;
        }
    }
    let vol = g.cell_volume();
    let mut acc = CompensatedSum::new();
    for (c, v) in counts.iter().zip(&psi.values) {
        acc.add((*c as f64 / (total as f64 * vol) - v).abs() * vol);
    }
    acc.add(outside as f64 / total as f64);
    acc.value()
}

/// Weighted position W1 error against `mu[psi]`, on the first axis.
fn weighted_w1(states: &[ParticleEnsemble], psi: &DensityField) -> f64 {
    let g = psi.grid;
    let mu = psi.mu();
    let cells: Vec<f64> = if g.dim == 1 {
        mu.values.clone()
    } else {
        mu.values.chunks_exact(g.gx).map(|r| r.iter().sum()).collect()
    };
    let (mut xs, mut ws) = (Vec::new(), Vec::new());
    for e in states {
        for i in 0..e.len() {
            xs.push(e.position(i)[0]);
            ws.push(e.weights[i]);
        }
    }
    circle_w1(&xs, &ws, &cells)
}

/// Runs `R` replicas of `N` particles per seed, pools each replica's particles
/// into one-marginal histograms over the PDE cells and compares with the
/// mean-field solution at every checkpoint.
pub fn marginal_error_study(cfg: &StudyConfig) -> Result<ChaosReport, ChaosError> {
    let grid = cfg.psi0.grid;
    if let Some(b) = cfg.bins {
        if b != grid {
            return Err(ChaosError::BinsMisaligned);
        }
    }
    if cfg.ns.is_empty() || cfg.replicas == 0 || cfg.seeds.is_empty() || !(cfg.dt > 0.0) || !(cfg.t_end > 0.0) {
        return Err(ChaosError::InvalidArgument("need N values, replicas, seeds, dt > 0 and T > 0".into()));
    }
    let mut checkpoints: Vec<f64> = cfg.checkpoints.iter().copied().filter(|t| *t > 0.0 && *t < cfg.t_end).collect();
    checkpoints.push(cfg.t_end);
    if checkpoints.windows(2).any(|w| w[1] <= w[0]) {
        return Err(ChaosError::InvalidArgument("checkpoints must be increasing".into()));
    }
    let mut opts = SolveOptions::every(cfg.t_end, cfg.t_end);
    opts.frame_times = checkpoints.clone();
    opts.cfl = cfg.cfl;
    let run = solve(&cfg.psi0, &cfg.kernels, &opts)?;
    let pde: Vec<&DensityField> = run.frames[1..].iter().collect();

    let mut rows = Vec::with_capacity(cfg.ns.len());
    for &n in &cfg.ns {
        let per_seed: Vec<(Vec<f64>, f64)> = cfg
            .seeds
            .iter()
            .map(|&seed| -> Result<(Vec<f64>, f64), ChaosError> {
                let replicas: Vec<Vec<ParticleEnsemble>> = (0..cfg.replicas)
                    .into_par_iter()
                    .map(|r| -> Result<Vec<ParticleEnsemble>, ChaosError> {
                        let mut state = sample_initial(&InitialSource::Field(&cfg.psi0), n, replica_seed(seed, n, r))?;
                        let mut out = Vec::with_capacity(checkpoints.len());
                        for &t in &checkpoints {
                            let span = t - state.time;
                            let traj = simulate(&state, &cfg.kernels, span, cfg.dt.min(span), cfg.scheme, usize::MAX)?;
                            state = traj.last().clone();
                            state.time = t;
                            out.push(state.clone());
                        }
                        Ok(out)
                    })
                    .collect::<Result<_, _>>()?;
                let l1: Vec<f64> = (0..checkpoints.len())
                    .map(|c| {
                        let pooled: Vec<ParticleEnsemble> = replicas.iter().map(|r| r[c].clone()).collect();
                        histogram_l1(&pooled, pde[c])
                    })
                    .collect();
                let last: Vec<ParticleEnsemble> = replicas.iter().map(|r| r[checkpoints.len() - 1].clone()).collect();
                let w1 = weighted_w1(&last, pde[checkpoints.len() - 1]);
                Ok((l1, w1))
            })
            .collect::<Result<_, _>>()?;
        let l1_seeds: Vec<f64> = per_seed.iter().map(|(l, _)| *l.last().expect("one checkpoint")).collect();
        let w1_seeds: Vec<f64> = per_seed.iter().map(|(_, w)| *w).collect();
        let l1_checkpoints =
            (0..checkpoints.len()).map(|c| median(&per_seed.iter().map(|(l, _)| l[c]).collect::<Vec<_>>())).collect();
        rows.push(ChaosRow {
            n,
            replicas: cfg.replicas,
            l1: median(&l1_seeds),
            w1: median(&w1_seeds),
            l1_seeds,
            w1_seeds,
            l1_checkpoints,
        });
    }
    let slope = if rows.len() >= 2 {
        let lx: Vec<f64> = rows.iter().map(|r| (r.n as f64).ln()).collect();
        let ly: Vec<f64> = rows.iter().map(|r| r.l1.ln()).collect();
        linear_fit(&lx, &ly).map(|(s, _)| s)
    } else {
        None
    };

    let mut delta = Vec::new();
    let mut delta_skipped = Vec::new();
    if let Some((n, samples)) = cfg.delta {
        for frame in &run.frames {
            let (_, _, dev) = product_factors(frame);
            if dev > PRODUCT_FORM_TOL {
                delta_skipped.push(frame.time);
                continue;
            }
            let r = exp_moment_mc(frame, &cfg.kernels, n, samples, cfg.seeds[0])?;
            delta.push(DeltaRow { t: frame.time, mean: r.delta, ci: r.ci });
        }
    }
    Ok(ChaosReport { rows, slope, delta, delta_skipped, checkpoints })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn w1_of_matching_uniform_is_small() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        let w = vec![1.0; 1000];
        let d = circle_w1(&xs, &w, &[1.0; 8]);
        assert!(d < 1e-3, "{d}");
    }

    #[test]
    fn w1_of_point_mass_against_uniform() {
        // Rotation-optimal distance from a Dirac to the uniform law is 1/4.
        let d = circle_w1(&[0.3], &[2.0], &[1.0; 16]);
        assert!((d - 0.25).abs() < 1e-9, "{d}");
    }

    #[test]
    fn w1_two_antipodal_atoms() {
        // Optimal rotation gives int |F - G - alpha| = 1/8.
        let d = circle_w1(&[0.0, 0.5], &[1.0, 1.0], &[1.0; 4]);
        assert!((d - 0.125).abs() < 1e-9, "{d}");
    }
}
