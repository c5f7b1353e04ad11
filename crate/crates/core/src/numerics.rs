//! Small numerical helpers shared by the solvers: compensated sums, torus
//! wrapping, cell quadrature and least-squares slopes.

/// Neumaier-compensated accumulator. Results depend only on the order in
/// which values are added, never on how work was split across threads.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.carry += (self.sum - t) + v;
        } else {
            self.carry += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut acc = CompensatedSum::new();
    for v in values {
        acc.add(v);
    }
    acc.value()
}

/// Sign with `sign(0) = 0`.
#[inline]
pub fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Wrap onto [0, 1).
#[inline]
pub fn wrap_unit(x: f64) -> f64 {
    let w = x - x.floor();
    if w >= 1.0 {
        0.0
    } else {
        w
    }
}

/// Wrap a displacement onto (-1/2, 1/2].
#[inline]
pub fn wrap_half(z: f64) -> f64 {
    let k = (z - 0.5).ceil();
    if k == 0.0 {
        z
    } else {
        z - k
    }
}

/// Three-point Gauss-Legendre nodes and weights on [-1, 1].
pub const GAUSS3: [(f64, f64); 3] = [
    (-0.774_596_669_241_483_4, 5.0 / 9.0),
    (0.0, 8.0 / 9.0),
    (0.774_596_669_241_483_4, 5.0 / 9.0),
];

/// Integral of `f` over [lo, hi] by composite three-point Gauss-Legendre.
pub fn gauss_integral(lo: f64, hi: f64, pieces: usize, f: impl Fn(f64) -> f64) -> f64 {
    let h = (hi - lo) / pieces as f64;
    let mut acc = CompensatedSum::new();
    for k in 0..pieces {
        let c = lo + (k as f64 + 0.5) * h;
        for &(node, w) in &GAUSS3 {
            acc.add(0.5 * h * w * f(c + 0.5 * h * node));
        }
    }
    acc.value()
}

/// `log(sum_i exp(v_i) w_i)` without overflow; entries with `w_i == 0` are skipped.
pub fn log_sum_exp_weighted(values: &[f64], weights: &[f64]) -> f64 {
    let mut max = f64::NEG_INFINITY;
    for (v, w) in values.iter().zip(weights) {
        if *w > 0.0 && *v > max {
            max = *v;
        }
    }
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let s = compensated_sum(
        values
            .iter()
            .zip(weights)
            .filter(|(_, w)| **w > 0.0)
            .map(|(v, w)| w * (v - max).exp()),
    );
    max + s.ln()
}

/// Ordinary least-squares slope and intercept of `y` against `x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let n = x.len();
    if n < 2 || n != y.len() {
        return None;
    }
    let mx = compensated_sum(x.iter().copied()) / n as f64;
    let my = compensated_sum(y.iter().copied()) / n as f64;
    let sxx = compensated_sum(x.iter().map(|v| (v - mx) * (v - mx)));
    let sxy = compensated_sum(x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)));
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

/// Percentile of already sorted data by linear interpolation, `q` in [0, 1].
pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    percentile_sorted(&v, 0.5)
}
