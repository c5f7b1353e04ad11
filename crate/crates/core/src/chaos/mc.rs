//! Monte-Carlo estimate of `E exp(|R_N + S_N|)` under the tensorized law.

use super::remainder::RemainderFields;
use super::ChaosError;
use crate::field::DensityField;
use crate::kernels::Kernels;
use crate::numerics::{linear_fit, percentile_sorted, CompensatedSum};
use crate::particles::{sample_initial, InitialSource, ParticleEnsemble};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

pub const BOOTSTRAP_RESAMPLES: usize = 200;
/// Redraws per configuration before the configuration counts as failed.
const MAX_REDRAWS: usize = 64;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExpMomentReport {
    pub n: usize,
    pub samples: usize,
    pub seed: u64,
    pub time: f64,
    pub delta: f64,
    /// Bootstrap 95% percentile interval of `delta`.
    pub ci: [f64; 2],
    pub mean_r: f64,
    pub mean_s: f64,
    pub max_abs: f64,
    /// Configurations redrawn because a particle fell below the density floor.
    pub rejected: usize,
    /// `exp(|R_N + S_N|)` per sample.
    #[serde(skip)]
    pub values: Vec<f64>,
}

/// Per-sample seed for redraw `attempt` of configuration `index`.
fn redraw_seed(seed: u64, index: usize, attempt: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1 + (index as u64) * MAX_REDRAWS as u64 + attempt as u64);
    rng.gen()
}

fn mean(values: &[f64]) -> f64 {
    let mut acc = CompensatedSum::new();
    values.iter().for_each(|v| acc.add(*v));
    acc.value() / values.len() as f64
}

fn bootstrap_ci(values: &[f64], seed: u64) -> [f64; 2] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0);
    let n = values.len();
    let mut means: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
        .map(|_| {
            let mut acc = CompensatedSum::new();
            for _ in 0..n {
                acc.add(values[rng.gen_range(0..n)]);
            }
            acc.value() / n as f64
        })
        .collect();
    means.sort_by(f64::total_cmp);
    [percentile_sorted(&means, 0.025), percentile_sorted(&means, 0.975)]
}

/// Draws `samples` configurations of `n` particles from `psi^{(x) n}` and
/// averages `exp(|R_N + S_N|)`, with every field interpolated from the grid.
pub fn exp_moment_mc(
    psi: &DensityField,
    kernels: &Kernels,
    n: usize,
    samples: usize,
    seed: u64,
) -> Result<ExpMomentReport, ChaosError> {
    if n == 0 || samples == 0 {
        return Err(ChaosError::InvalidArgument("need N >= 1 and at least one sample".into()));
    }
    let fields = RemainderFields::new(psi, kernels)?;
    let source = InitialSource::Field(psi);
    let d = psi.grid.dim;
    let all = sample_initial(&source, n * samples, seed)?;
    let chunk = |s: usize| -> ParticleEnsemble {
        ParticleEnsemble {
            dim: d,
            positions: all.positions[s * n * d..(s + 1) * n * d].to_vec(),
            weights: all.weights[s * n..(s + 1) * n].to_vec(),
            time: 0.0,
        }
    };
    let results: Vec<Result<(f64, f64, usize), ChaosError>> = (0..samples)
        .into_par_iter()
        .map(|s| {
            let mut e = chunk(s);
            let mut rejected = 0;
            loop {
                match fields.remainder_sample(&e) {
                    Ok(r) => return Ok((r.r_value, r.s_value, rejected)),
                    Err(ChaosError::BelowFloor { .. }) if rejected < MAX_REDRAWS => {
                        rejected += 1;
                        e = sample_initial(&source, n, redraw_seed(seed, s, rejected))?;
                    }
                    Err(err) => return Err(err),
                }
            }
        })
        .collect();
    let mut rs = Vec::with_capacity(samples);
    let mut rejected = 0;
    for r in results {
        let (rv, sv, rej) = r?;
        rs.push((rv, sv));
        rejected += rej;
    }
    if rejected * 100 > samples {
        return Err(ChaosError::TooManyRejections { rejected, samples });
    }
    let values: Vec<f64> = rs.iter().map(|(r, s)| (r + s).abs().exp()).collect();
    let delta = mean(&values);
    Ok(ExpMomentReport {
        n,
        samples,
        seed,
        time: psi.time,
        delta,
        ci: bootstrap_ci(&values, seed ^ 0x5eed_b007),
        mean_r: mean(&rs.iter().map(|p| p.0).collect::<Vec<_>>()),
        mean_s: mean(&rs.iter().map(|p| p.1).collect::<Vec<_>>()),
        max_abs: rs.iter().fold(0.0, |a, (r, s)| a.max((r + s).abs())),
        rejected,
        values,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DeltaTrend {
    pub ns: Vec<usize>,
    pub deltas: Vec<f64>,
    /// Least-squares slope of `log delta` against `N`.
    pub slope: f64,
    /// Bootstrap 95% percentile interval of the slope.
    pub ci: [f64; 2],
}

impl DeltaTrend {
    /// The whole slope interval lies within `[-tol, tol]`.
    pub fn flat_within(&self, tol: f64) -> bool {
        self.ci[0] >= -tol && self.ci[1] <= tol
    }
}

/// Slope of `log delta` against `N` across reports, with a bootstrap interval
/// obtained by resampling every report's samples independently.
pub fn delta_trend(reports: &[ExpMomentReport], seed: u64) -> Result<DeltaTrend, ChaosError> {
    if reports.len() < 2 || reports.iter().any(|r| r.values.is_empty()) {
        return Err(ChaosError::InvalidArgument("need at least two reports with samples".into()));
    }
    let ns: Vec<usize> = reports.iter().map(|r| r.n).collect();
    let xs: Vec<f64> = ns.iter().map(|n| *n as f64).collect();
    let deltas: Vec<f64> = reports.iter().map(|r| r.delta).collect();
    let fit = |ds: &[f64]| linear_fit(&xs, &ds.iter().map(|d| d.ln()).collect::<Vec<_>>()).map(|(s, _)| s);
    let slope = fit(&deltas).ok_or_else(|| ChaosError::InvalidArgument("N values must differ".into()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut slopes: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
        .map(|_| {
            let ds: Vec<f64> = reports
                .iter()
                .map(|r| {
                    let n = r.values.len();
                    let mut acc = CompensatedSum::new();
                    for _ in 0..n {
                        acc.add(r.values[rng.gen_range(0..n)]);
                    }
                    acc.value() / n as f64
                })
                .collect();
            fit(&ds).unwrap_or(f64::NAN)
        })
        .collect();
    slopes.sort_by(f64::total_cmp);
    Ok(DeltaTrend { ns, deltas, slope, ci: [percentile_sorted(&slopes, 0.025), percentile_sorted(&slopes, 0.975)] })
}
