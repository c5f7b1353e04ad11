//! Growth of the distance between two mean-field solutions.

use super::{solve, MeanFieldError, SolveOptions};
use crate::field::DensityField;
use crate::kernels::Kernels;
use crate::numerics::{linear_fit, CompensatedSum};
use serde::Serialize;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StabilityReport {
    pub times: Vec<f64>,
    /// `||psi_1 - psi_2||_1 + ||mu_1 - mu_2||_1` per frame.
    pub distances: Vec<f64>,
    pub d0: f64,
    /// Least-squares slope of `log D` against t.
    pub fitted_rate: f64,
    /// `max_t log(D(t)/D(0)) / t`.
    pub envelope_rate: f64,
    pub margin: f64,
    /// `max(fitted_rate, envelope_rate) + margin`.
    pub c_hat: f64,
    /// `5 (||a|| + S0 + S1)`, recorded for comparison only.
    pub reference_rate: f64,
    pub bound_holds: bool,
    /// `D(0) = 0`: no rate can be fitted.
    pub degenerate: bool,
}

/// `psi(x + cells h_x e_1, m)`, renormalized to unit mass.
pub fn shift_x(psi: &DensityField, cells: isize) -> DensityField {
    let g = psi.grid;
    let mut out = psi.clone();
    for ix in 0..g.x_cells() {
        let src = g.x_neighbor(ix, 0, cells);
        out.values[ix * g.gm..(ix + 1) * g.gm].copy_from_slice(&psi.values[src * g.gm..(src + 1) * g.gm]);
    }
    let mass = out.mass();
    if mass > 0.0 {
        out.values.iter_mut().for_each(|v| *v /= mass);
    }
    out
}

fn distance(a: &DensityField, b: &DensityField) -> f64 {
    let (ma, mb) = (a.mu(), b.mu());
    let mut acc = CompensatedSum::new();
    acc.add(a.l1_distance(b));
    for (x, y) in ma.values.iter().zip(&mb.values) {
        acc.add((x - y).abs() * ma.grid.volume());
    }
    acc.value()
}

pub fn stability_check(
    psi_a: &DensityField,
    psi_b: &DensityField,
    kernels: &Kernels,
    opts: &SolveOptions,
    margin: f64,
) -> Result<StabilityReport, MeanFieldError> {
    if psi_a.grid != psi_b.grid {
        return Err(MeanFieldError::InvalidArgument("both initial fields must share one grid".into()));
    }
    let ra = solve(psi_a, kernels, opts)?;
    let rb = solve(psi_b, kernels, opts)?;
    let times: Vec<f64> = ra.frames.iter().map(|f| f.time).collect();
    let distances: Vec<f64> = ra.frames.iter().zip(&rb.frames).map(|(a, b)| distance(a, b)).collect();
    let d0 = distances[0];
    let bounds = kernels.influence.bounds();
    let reference_rate = 5.0 * (kernels.interaction.sup_bound() + bounds.s0 + bounds.s1);
    if d0 == 0.0 {
        return Ok(StabilityReport {
            bound_holds: distances.iter().all(|d| *d <= 1e-12),
            times,
            distances,
            d0,
            fitted_rate: 0.0,
            envelope_rate: 0.0,
            margin,
            c_hat: margin,
            reference_rate,
            degenerate: true,
        });
    }
    let mut envelope_rate = f64::NEG_INFINITY;
    let (mut ts, mut logs) = (Vec::new(), Vec::new());
    for (t, d) in times.iter().zip(&distances) {
        if *d > 0.0 {
            ts.push(*t);
            logs.push((d / d0).ln());
            if *t > 0.0 {
                envelope_rate = envelope_rate.max((d / d0).ln() / t);
            }
        }
    }
    if envelope_rate == f64::NEG_INFINITY {
        envelope_rate = 0.0;
    }
    let fitted_rate = linear_fit(&ts, &logs).map_or(0.0, |(s, _)| s);
    let c_hat = fitted_rate.max(envelope_rate) + margin;
    let bound_holds = times.iter().zip(&distances).all(|(t, d)| *d <= (c_hat * t).exp() * d0 * (1.0 + 1e-12));
    Ok(StabilityReport {
        times,
        distances,
        d0,
        fitted_rate,
        envelope_rate,
        margin,
        c_hat,
        reference_rate,
        bound_holds,
        degenerate: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{GridSpec, MProfile, ProductDensity, XProfile};

    #[test]
    fn identical_inputs_stay_identical() {
        let grid = GridSpec::new(1, 16, 30, 8.0).unwrap();
        let psi = ProductDensity { x: XProfile::Cosine { amplitude: 0.3, freq: 1 }, m: MProfile::Exponential }
            .discretize(grid)
            .unwrap();
        let r = stability_check(&psi, &psi, &Kernels::zero(1), &SolveOptions::every(1.0, 0.5), 0.1).unwrap();
        assert!(r.degenerate && r.bound_holds);
        assert!(r.distances.iter().all(|d| *d == 0.0));
    }

    #[test]
    fn inert_fields_keep_distance() {
        let grid = GridSpec::new(1, 16, 30, 8.0).unwrap();
        let psi = ProductDensity { x: XProfile::Cosine { amplitude: 0.3, freq: 1 }, m: MProfile::Exponential }
            .discretize(grid)
            .unwrap();
        let other = shift_x(&psi, 1);
        let r = stability_check(&psi, &other, &Kernels::zero(1), &SolveOptions::every(1.0, 0.25), 0.1).unwrap();
        assert!(r.d0 > 0.0);
        assert!(r.distances.iter().all(|d| *d == r.d0));
        assert!(r.bound_holds);
    }
}
