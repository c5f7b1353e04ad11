//! First-moment equation `d_t mu + div_x(mu a*mu) = mu (s * mu)` for the
//! product-weights influence kernel `S = m n s(x - y)`.

use super::{upwind_flux, Convolver, MeanFieldError, DEFAULT_CFL};
use crate::field::{SpatialField, SpatialGrid};
use crate::kernels::Kernels;

#[derive(Clone, Debug, PartialEq)]
pub struct ReducedOptions {
    pub t_end: f64,
    pub cfl: f64,
    /// Increasing output times in (0, t_end]; `t_end` is always appended.
    pub frame_times: Vec<f64>,
    /// Upper bound on `dt * max |s * mu|` per step.
    pub source_step: f64,
}

impl ReducedOptions {
    pub fn new(t_end: f64) -> Self {
        Self { t_end, cfl: DEFAULT_CFL, frame_times: Vec::new(), source_step: 0.01 }
    }
}

struct Operator<'a> {
    conv: &'a Convolver,
    grid: SpatialGrid,
}

impl Operator<'_> {
    /// Right-hand side and the largest stable dt of forward Euler on it.
    fn rhs(&self, mu: &[f64], opts: &ReducedOptions) -> (Vec<f64>, f64) {
        let g = self.grid;
        let gm = crate::field::GridSpec { dim: g.dim, gx: g.gx, gm: 2, m_max: 1.0 };
        let a = self.conv.interaction(mu);
        let src = self.conv.influence(mu);
        let n = g.cells();
        let mut out: Vec<f64> = (0..n).map(|i| mu[i] * src[i]).collect();
        let mut rate = 0.0;
        for axis in 0..g.dim {
            let faces: Vec<f64> = (0..n).map(|i| 0.5 * (a[i][axis] + a[gm.x_neighbor(i, axis, 1)][axis])).collect();
            rate += faces.iter().fold(0.0f64, |m, v| m.max(v.abs())) / g.hx();
            for i in 0..n {
                let (r, l) = (gm.x_neighbor(i, axis, 1), gm.x_neighbor(i, axis, -1));
                let fr = upwind_flux(faces[i], mu[i], mu[r]);
                let fl = upwind_flux(faces[l], mu[l], mu[i]);
                out[i] -= (fr - fl) / g.hx();
            }
        }
        let smax = src.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut dt = f64::INFINITY;
        if rate > 0.0 {
            dt = dt.min(opts.cfl / rate);
        }
        if smax > 0.0 {
            dt = dt.min(opts.source_step / smax);
        }
        (out, dt)
    }
}

/// Heun (SSP-RK2) integration with upwind transport and explicit source.
/// Returns the initial field followed by one field per frame time.
pub fn solve_mu_reduced(mu0: &SpatialField, kernels: &Kernels, opts: &ReducedOptions) -> Result<Vec<SpatialField>, MeanFieldError> {
    let inf = &kernels.influence;
    if !(inf.is_product_weights() || inf.is_zero()) {
        return Err(MeanFieldError::UnsupportedKernel("the reduced equation needs the product-weights influence form".into()));
    }
    if !(opts.t_end > 0.0) || !(opts.cfl > 0.0 && opts.cfl <= super::MAX_CFL) || !(opts.source_step > 0.0) {
        return Err(MeanFieldError::InvalidArgument("need T > 0, 0 < cfl <= 0.5, source_step > 0".into()));
    }
    let mut times: Vec<f64> = opts.frame_times.iter().copied().filter(|t| *t > 0.0 && *t < opts.t_end).collect();
    times.push(opts.t_end);
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(MeanFieldError::InvalidArgument("frame times must be increasing".into()));
    }
    let conv = Convolver::new(mu0.grid, kernels)?;
    let op = Operator { conv: &conv, grid: mu0.grid };
    let mut mu = mu0.values.clone();
    let mut t = 0.0;
    let mut out = vec![SpatialField { grid: mu0.grid, values: mu.clone(), time: 0.0 }];
    let mut step = 0usize;
    for target in times {
        loop {
            let (k1, limit) = op.rhs(&mu, opts);
            let remaining = target - t;
            let hit = limit >= remaining;
            let dt = if hit { remaining } else { limit };
            let stage: Vec<f64> = mu.iter().zip(&k1).map(|(u, k)| u + dt * k).collect();
            let (k2, _) = op.rhs(&stage, opts);
            mu = mu
                .iter()
                .zip(stage.iter().zip(&k2))
                .map(|(u, (s, k))| 0.5 * u + 0.5 * (s + dt * k))
                .collect();
            step += 1;
            if mu.iter().any(|v| !v.is_finite()) {
                return Err(MeanFieldError::NonFinite { step });
            }
            t = if hit { target } else { t + dt };
            if hit {
                break;
            }
        }
        out.push(SpatialField { grid: mu0.grid, values: mu.clone(), time: t });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{InfluenceKernel, InfluenceSpec, InteractionKernel, SKind, SSpec};

    fn field(gx: usize, f: impl Fn(f64) -> f64) -> SpatialField {
        let grid = SpatialGrid { dim: 1, gx };
        SpatialField { grid, values: (0..gx).map(|i| f((i as f64 + 0.5) / gx as f64)).collect(), time: 0.0 }
    }

    fn product(kind: SKind, amp: f64) -> InfluenceKernel {
        InfluenceKernel::new(InfluenceSpec::ProductWeights { s: SSpec { kind, amplitude: amp, freq: 1, parity: None } })
            .unwrap()
    }

    #[test]
    fn inert_kernels_keep_mu() {
        let mu0 = field(16, |x| 1.0 + 0.2 * (std::f64::consts::TAU * x).cos());
        let k = Kernels::new(InteractionKernel::zero(1), product(SKind::Sin, 0.0));
        let out = solve_mu_reduced(&mu0, &k, &ReducedOptions::new(1.0)).unwrap();
        assert_eq!(out.last().unwrap().values, mu0.values);
    }

    #[test]
    fn riccati_total_mass() {
        let mu0 = field(16, |x| 1.0 + 0.5 * (std::f64::consts::TAU * x).sin());
        let m0 = mu0.total();
        let k = Kernels::new(InteractionKernel::zero(1), product(SKind::Constant, 1.0));
        let mut opts = ReducedOptions::new(0.5 / m0);
        opts.frame_times = (1..10).map(|i| i as f64 * 0.05 / m0).collect();
        let out = solve_mu_reduced(&mu0, &k, &opts).unwrap();
        for f in &out {
            let exact = m0 / (1.0 - m0 * f.time);
            assert!((f.total() - exact).abs() < 1e-3, "t={} {} vs {}", f.time, f.total(), exact);
        }
    }

    #[test]
    fn bounded_influence_is_refused() {
        let mu0 = field(8, |_| 1.0);
        assert!(solve_mu_reduced(&mu0, &Kernels::zero(1), &ReducedOptions::new(1.0)).is_ok());
        let inf = InfluenceKernel::new(InfluenceSpec::Separable {
            s: SSpec { kind: SKind::Sin, amplitude: 0.1, freq: 1, parity: None },
            chi_support: Some([0.5, 2.0]),
            chi2_support: None,
            bounds: None,
        })
        .unwrap();
        let k = Kernels::new(InteractionKernel::zero(1), inf);
        assert!(matches!(solve_mu_reduced(&mu0, &k, &ReducedOptions::new(1.0)), Err(MeanFieldError::UnsupportedKernel(_))));
    }
}
