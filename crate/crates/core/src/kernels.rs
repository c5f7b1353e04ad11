//! Interaction kernel `a` (velocity field on the torus) and influence kernel
//! `S(x, m, y, n)` driving the weights, with their declared bounds and a
//! numerical validator for the structural hypotheses.

use crate::numerics::{wrap_half, wrap_unit};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::OnceLock;
use thiserror::Error;

const TWO_PI: f64 = 2.0 * PI;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("dimension mismatch: kernel has d={kernel}, point has {point} components")]
    DimensionMismatch { kernel: usize, point: usize },
    #[error("invalid kernel: {0}")]
    Invalid(String),
    #[error("product-weights influence kernel is only usable by the reduced mu-equation solver")]
    ReducedModeOnly,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum Trig {
    Sin,
    Cos,
}

impl Trig {
    /// `(f(theta), f'(theta))`.
    fn eval(self, theta: f64) -> (f64, f64) {
        match self {
            Trig::Sin => (theta.sin(), theta.cos()),
            Trig::Cos => (theta.cos(), -theta.sin()),
        }
    }
}

fn default_potential() -> [Trig; 2] {
    [Trig::Sin, Trig::Sin]
}

/// `sign(sin(2 pi w))` for `w` already in [0, 1), exact at the zero crossings.
fn sign_sin_unit(w: f64) -> f64 {
    if w == 0.0 || w == 0.5 {
        0.0
    } else if w < 0.5 {
        1.0
    } else {
        -1.0
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InteractionSpec {
    /// `a(z) = c`.
    Constant { c: Vec<f64> },
    /// d = 2: `a(z) = amplitude * (sign(sin(2 pi z2)), 0)`.
    ShearSign { amplitude: f64 },
    /// d = 2: `a = amplitude * (dK/dz2, -dK/dz1)` with `K = f1(2 pi z1) f2(2 pi z2) / (2 pi)`.
    PerpGradientTrig {
        amplitude: f64,
        #[serde(default = "default_potential")]
        potential: [Trig; 2],
    },
    /// d = 1: `a(z) = amplitude * sin(2 pi z)`. Not divergence-free; particle tests only.
    Sine { amplitude: f64 },
    /// Piecewise-constant table over `cells^d` cells of (-1/2, 1/2]^d, row-major.
    Tabulated {
        cells: usize,
        values: Vec<Vec<f64>>,
        divergence_free: bool,
    },
}

#[derive(Clone, Debug)]
pub struct InteractionKernel {
    spec: InteractionSpec,
    dim: usize,
    sup_bound: f64,
}

impl InteractionKernel {
    pub fn new(spec: InteractionSpec) -> Result<Self, KernelError> {
        let (dim, sup_bound) = match &spec {
            InteractionSpec::Constant { c } => {
                if c.is_empty() || c.len() > 2 {
                    return Err(KernelError::Invalid("constant field needs 1 or 2 components".into()));
                }
                (c.len(), c.iter().map(|v| v * v).sum::<f64>().sqrt())
            }
            InteractionSpec::ShearSign { amplitude } => (2, amplitude.abs()),
            InteractionSpec::PerpGradientTrig { amplitude, .. } => (2, amplitude.abs()),
            InteractionSpec::Sine { amplitude } => (1, amplitude.abs()),
            InteractionSpec::Tabulated { cells, values, .. } => {
                let dim = values.first().map_or(0, Vec::len);
                if dim == 0 || dim > 2 {
                    return Err(KernelError::Invalid("tabulated entries need 1 or 2 components".into()));
                }
                if *cells == 0 || values.len() != cells.pow(dim as u32) {
                    return Err(KernelError::Invalid(format!(
                        "tabulated kernel needs cells^d = {} entries, got {}",
                        cells.pow(dim as u32),
                        values.len()
                    )));
                }
                if values.iter().any(|v| v.len() != dim) {
                    return Err(KernelError::Invalid("ragged tabulated entries".into()));
                }
                let sup = values
                    .iter()
                    .map(|v| v.iter().map(|c| c * c).sum::<f64>().sqrt())
                    .fold(0.0, f64::max);
                (dim, sup)
            }
        };
        if !sup_bound.is_finite() {
            return Err(KernelError::Invalid("non-finite interaction parameters".into()));
        }
        Ok(Self { spec, dim, sup_bound })
    }

    pub fn zero(dim: usize) -> Self {
        Self::new(InteractionSpec::Constant { c: vec![0.0; dim] }).expect("valid zero field")
    }

    pub fn spec(&self) -> &InteractionSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Euclidean sup-norm bound `||a||_inf`.
    pub fn sup_bound(&self) -> f64 {
        self.sup_bound
    }

    pub fn is_zero(&self) -> bool {
        self.sup_bound == 0.0
    }

    /// True when `a` does not depend on its argument.
    pub fn is_constant(&self) -> bool {
        matches!(self.spec, InteractionSpec::Constant { .. }) || self.is_zero()
    }

    pub fn divergence_free(&self) -> bool {
        match &self.spec {
            InteractionSpec::Constant { .. }
            | InteractionSpec::ShearSign { .. }
            | InteractionSpec::PerpGradientTrig { .. } => true,
            InteractionSpec::Sine { amplitude } => *amplitude == 0.0,
            InteractionSpec::Tabulated { divergence_free, .. } => *divergence_free,
        }
    }

    /// Declared discontinuity lines as `(axis, coordinate)`.
    pub fn discontinuities(&self) -> Vec<(usize, f64)> {
        match &self.spec {
            InteractionSpec::ShearSign { .. } => vec![(1, 0.0), (1, 0.5)],
            InteractionSpec::Tabulated { cells, .. } => {
                let mut out = Vec::new();
                for axis in 0..self.dim {
                    for k in 0..*cells {
                        out.push((axis, wrap_unit(k as f64 / *cells as f64 - 0.5)));
                    }
                }
                out
            }
            _ => Vec::new(),
        }
    }

    /// `a(z)` for a displacement `z` with `z.len() == dim`; unused components are 0.
    #[inline]
    pub fn at(&self, z: &[f64]) -> [f64; 2] {
        match &self.spec {
            InteractionSpec::Constant { c } => {
                if c.len() == 1 {
                    [c[0], 0.0]
                } else {
                    [c[0], c[1]]
                }
            }
            InteractionSpec::ShearSign { amplitude } => {
                [amplitude * sign_sin_unit(wrap_unit(z[1])), 0.0]
            }
            InteractionSpec::PerpGradientTrig { amplitude, potential } => {
                let (f1, df1) = potential[0].eval(TWO_PI * wrap_unit(z[0]));
                let (f2, df2) = potential[1].eval(TWO_PI * wrap_unit(z[1]));
                [amplitude * f1 * df2, -amplitude * df1 * f2]
            }
            InteractionSpec::Sine { amplitude } => {
                [amplitude * (TWO_PI * wrap_unit(z[0])).sin(), 0.0]
            }
            InteractionSpec::Tabulated { cells, values, .. } => {
                let g = *cells;
                let mut idx = 0usize;
                for &zk in z.iter().take(self.dim) {
                    let w = wrap_half(zk) + 0.5;
                    let k = ((w * g as f64).floor() as usize).min(g - 1);
                    idx = idx * g + k;
                }
                let v = &values[idx];
                if self.dim == 1 {
                    [v[0], 0.0]
                } else {
                    [v[0], v[1]]
                }
            }
        }
    }

    /// Checked evaluation at a torus point.
    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>, KernelError> {
        if x.len() != self.dim {
            return Err(KernelError::DimensionMismatch { kernel: self.dim, point: x.len() });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(KernelError::Invalid("non-finite evaluation point".into()));
        }
        let v = self.at(x);
        Ok(v[..self.dim].to_vec())
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    Odd,
    Even,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum SKind {
    Constant,
    Sin,
    Cos,
    SignSin,
}

fn one() -> u32 {
    1
}

/// `s(z) = amplitude * g(2 pi freq (z_1 + ... + z_d))`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SSpec {
    #[serde(rename = "type")]
    pub kind: SKind,
    pub amplitude: f64,
    #[serde(default = "one")]
    pub freq: u32,
    #[serde(default)]
    pub parity: Option<Parity>,
}

impl SSpec {
    pub fn natural_parity(&self) -> Parity {
        match self.kind {
            SKind::Constant | SKind::Cos => Parity::Even,
            SKind::Sin | SKind::SignSin => Parity::Odd,
        }
    }

    #[inline]
    pub fn at(&self, z: &[f64]) -> f64 {
        let w = wrap_unit(self.freq as f64 * z.iter().sum::<f64>());
        match self.kind {
            SKind::Constant => self.amplitude,
            SKind::Sin => self.amplitude * (TWO_PI * w).sin(),
            SKind::Cos => self.amplitude * (TWO_PI * w).cos(),
            SKind::SignSin => self.amplitude * sign_sin_unit(w),
        }
    }

    pub fn sup(&self) -> f64 {
        self.amplitude.abs()
    }
}

/// Smooth bump `exp(1 - 1/(1 - u^2))`, `u = (2m - lo - hi)/(hi - lo)`, zero outside.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bump {
    lo: f64,
    hi: f64,
}

/// Suprema of |d chi/du| and |d^2 chi/du^2| for the standard bump, by dense
/// sampling followed by golden-section refinement.
fn standard_bump_derivative_sups() -> [f64; 2] {
    static SUPS: OnceLock<[f64; 2]> = OnceLock::new();
    *SUPS.get_or_init(|| {
        let mut out = [0.0; 2];
        for (slot, order) in [(0usize, 1usize), (1, 2)] {
            let f = |u: f64| bump_u(u)[order].abs();
            let n = 40_000;
            let mut best = 0usize;
            let mut best_v = 0.0;
            for k in 1..n {
                let u = -1.0 + 2.0 * k as f64 / n as f64;
                let v = f(u);
                if v > best_v {
                    best_v = v;
                    best = k;
                }
            }
            let step = 2.0 / n as f64;
            let c = -1.0 + 2.0 * best as f64 / n as f64;
            let (mut a, mut b) = (c - step, c + step);
            let g = 0.5 * (5f64.sqrt() - 1.0);
            for _ in 0..100 {
                let x1 = b - g * (b - a);
                let x2 = a + g * (b - a);
                if f(x1) > f(x2) {
                    b = x2;
                } else {
                    a = x1;
                }
            }
            out[slot] = best_v.max(f(0.5 * (a + b)));
        }
        out
    })
}

/// `(chi, chi_u, chi_uu)` of the standard bump at `u`.
fn bump_u(u: f64) -> [f64; 3] {
    let q = 1.0 - u * u;
    if q <= 0.0 {
        return [0.0; 3];
    }
    let inv = 1.0 / q;
    if inv > 700.0 {
        return [0.0; 3];
    }
    let chi = (1.0 - inv).exp();
    let d1 = chi * (-2.0 * u * inv * inv);
    let d2 = chi * (4.0 * u * u * inv.powi(4) - 2.0 * inv * inv - 8.0 * u * u * inv.powi(3));
    [chi, d1, d2]
}

impl Bump {
    pub fn new(lo: f64, hi: f64) -> Result<Self, KernelError> {
        if !(lo > 0.0 && hi > lo && hi.is_finite()) {
            return Err(KernelError::Invalid(format!(
                "bump support [{lo}, {hi}] must satisfy 0 < lo < hi < inf"
            )));
        }
        Ok(Self { lo, hi })
    }

    pub fn support(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    /// `(chi, chi', chi'')` with derivatives in m.
    #[inline]
    pub fn eval(&self, m: f64) -> [f64; 3] {
        if m <= self.lo || m >= self.hi {
            return [0.0; 3];
        }
        let k = 2.0 / (self.hi - self.lo);
        let u = (2.0 * m - self.lo - self.hi) / (self.hi - self.lo);
        let [c, d1, d2] = bump_u(u);
        [c, k * d1, k * k * d2]
    }

    /// Suprema of `(|chi|, |chi'|, |chi''|)`.
    pub fn sups(&self) -> [f64; 3] {
        let k = 2.0 / (self.hi - self.lo);
        let [s1, s2] = standard_bump_derivative_sups();
        [1.0, k * s1, k * k * s2]
    }
}

/// Weight profile `chi`: a bump, or identically 1 (no compact support; only
/// meaningful on the truncated grids of the Kolmogorov solver).
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Chi {
    Flat,
    Bump(Bump),
}

impl Chi {
    #[inline]
    pub fn eval(&self, m: f64) -> [f64; 3] {
        match self {
            Chi::Flat => [1.0, 0.0, 0.0],
            Chi::Bump(b) => b.eval(m),
        }
    }

    pub fn sups(&self) -> [f64; 3] {
        match self {
            Chi::Flat => [1.0, 0.0, 0.0],
            Chi::Bump(b) => b.sups(),
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct InfluenceBounds {
    pub s0: f64,
    pub s1: f64,
    pub s2: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "form", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InfluenceSpec {
    Zero,
    /// `S = chi1(m) chi2(n) s(x - y)`; omitting `chi_support` makes both profiles flat.
    Separable {
        s: SSpec,
        #[serde(default)]
        chi_support: Option<[f64; 2]>,
        #[serde(default)]
        chi2_support: Option<[f64; 2]>,
        #[serde(default)]
        bounds: Option<InfluenceBounds>,
    },
    /// `S = m n s(x - y)`; unbounded, reduced mu-equation only.
    ProductWeights { s: SSpec },
}

#[derive(Clone, Debug)]
enum Form {
    Zero,
    Separable { s: SSpec, chi1: Chi, chi2: Chi },
    ProductWeights { s: SSpec },
}

/// Value of `S` and its first-weight derivatives.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct InfluenceValue {
    pub s: f64,
    pub dm: f64,
    pub dmm: f64,
}

#[derive(Clone, Debug)]
pub struct InfluenceKernel {
    spec: InfluenceSpec,
    form: Form,
    bounds: InfluenceBounds,
    computed: InfluenceBounds,
}

impl InfluenceKernel {
    pub fn new(spec: InfluenceSpec) -> Result<Self, KernelError> {
        let check_s = |s: &SSpec| -> Result<(), KernelError> {
            if !s.amplitude.is_finite() || s.freq == 0 {
                return Err(KernelError::Invalid("s needs finite amplitude and freq >= 1".into()));
            }
            Ok(())
        };
        let (form, computed, declared) = match &spec {
            InfluenceSpec::Zero => (Form::Zero, InfluenceBounds { s0: 0.0, s1: 0.0, s2: 0.0 }, None),
            InfluenceSpec::Separable { s, chi_support, chi2_support, bounds } => {
                check_s(s)?;
                let chi1 = match chi_support {
                    Some([lo, hi]) => Chi::Bump(Bump::new(*lo, *hi)?),
                    None => Chi::Flat,
                };
                let chi2 = match (chi2_support, chi_support) {
                    (Some([lo, hi]), _) => Chi::Bump(Bump::new(*lo, *hi)?),
                    (None, Some(_)) => chi1,
                    (None, None) => Chi::Flat,
                };
                let [c0, c1, c2] = chi1.sups();
                let n0 = chi2.sups()[0];
                let amp = s.sup();
                let computed = InfluenceBounds { s0: amp * c0 * n0, s1: amp * c1 * n0, s2: amp * c2 * n0 };
                (Form::Separable { s: s.clone(), chi1, chi2 }, computed, *bounds)
            }
            InfluenceSpec::ProductWeights { s } => {
                check_s(s)?;
                let inf = f64::INFINITY;
                (Form::ProductWeights { s: s.clone() }, InfluenceBounds { s0: inf, s1: inf, s2: inf }, None)
            }
        };
        let bounds = match declared {
            Some(d) => {
                if d.s0 < computed.s0 || d.s1 < computed.s1 || d.s2 < computed.s2 {
                    return Err(KernelError::Invalid(format!(
                        "declared bounds {d:?} are below the kernel's actual bounds {computed:?}"
                    )));
                }
                d
            }
            None => computed,
        };
        Ok(Self { spec, form, bounds, computed })
    }

    pub fn zero() -> Self {
        Self::new(InfluenceSpec::Zero).expect("valid zero kernel")
    }

    pub fn spec(&self) -> &InfluenceSpec {
        &self.spec
    }

    /// Bounds used by every estimate: declared if given, otherwise computed.
    pub fn bounds(&self) -> InfluenceBounds {
        self.bounds
    }

    /// Bounds implied by the kernel parameters alone.
    pub fn computed_bounds(&self) -> InfluenceBounds {
        self.computed
    }

    pub fn is_zero(&self) -> bool {
        match &self.form {
            Form::Zero => true,
            Form::Separable { s, .. } | Form::ProductWeights { s } => s.amplitude == 0.0,
        }
    }

    pub fn is_product_weights(&self) -> bool {
        matches!(self.form, Form::ProductWeights { .. })
    }

    /// The `s` factor when the kernel is separable or product-weights.
    pub fn s_spec(&self) -> Option<&SSpec> {
        match &self.form {
            Form::Zero => None,
            Form::Separable { s, .. } | Form::ProductWeights { s } => Some(s),
        }
    }

    /// `(chi1, chi2)` for the separable form.
    pub fn profiles(&self) -> Option<(Chi, Chi)> {
        match &self.form {
            Form::Separable { chi1, chi2, .. } => Some((*chi1, *chi2)),
            _ => None,
        }
    }

    /// Bump support of `S` in the first weight.
    pub fn m_support(&self) -> Option<(f64, f64)> {
        match &self.form {
            Form::Separable { chi1: Chi::Bump(b), .. } => Some(b.support()),
            _ => None,
        }
    }

    /// `S(x, ., y, n)` vanishes outside a compact subset of (0, inf).
    pub fn compact_m_support(&self) -> bool {
        self.is_zero() || self.m_support().is_some()
    }

    pub fn discontinuities(&self) -> Vec<f64> {
        match self.s_spec() {
            Some(s) if s.kind == SKind::SignSin => {
                (0..2 * s.freq).map(|k| k as f64 / (2 * s.freq) as f64).collect()
            }
            _ => Vec::new(),
        }
    }

    /// Fast evaluation for bounded forms; the product-weights form returns 0.
    #[inline]
    pub fn at(&self, x: &[f64], m: f64, y: &[f64], n: f64) -> InfluenceValue {
        match &self.form {
            Form::Separable { s, chi1, chi2 } => {
                let c2 = chi2.eval(n)[0];
                if c2 == 0.0 {
                    return InfluenceValue::default();
                }
                let [c, d1, d2] = chi1.eval(m);
                if c == 0.0 && d1 == 0.0 && d2 == 0.0 {
                    return InfluenceValue::default();
                }
                let sv = s.at_diff(x, y) * c2;
                InfluenceValue { s: c * sv, dm: d1 * sv, dmm: d2 * sv }
            }
            _ => InfluenceValue::default(),
        }
    }

    /// Derivative of `S` in the second weight `n`.
    #[inline]
    pub fn d_second_weight(&self, x: &[f64], m: f64, y: &[f64], n: f64) -> f64 {
        match &self.form {
            Form::Separable { s, chi1, chi2 } => {
                let c1 = chi1.eval(m)[0];
                if c1 == 0.0 {
                    return 0.0;
                }
                c1 * chi2.eval(n)[1] * s.at_diff(x, y)
            }
            _ => 0.0,
        }
    }

    /// Checked evaluation returning `(S, dS/dm, d2S/dm2)`.
    pub fn eval(&self, x: &[f64], m: f64, y: &[f64], n: f64) -> Result<InfluenceValue, KernelError> {
        if self.is_product_weights() {
            return Err(KernelError::ReducedModeOnly);
        }
        if x.len() != y.len() {
            return Err(KernelError::DimensionMismatch { kernel: x.len(), point: y.len() });
        }
        if !(m >= 0.0 && n >= 0.0) {
            return Err(KernelError::Invalid("weights must be nonnegative".into()));
        }
        Ok(self.at(x, m, y, n))
    }

    /// `m n s(x - y)` for the product-weights form.
    pub fn product_weights_at(&self, x: &[f64], m: f64, y: &[f64], n: f64) -> Result<f64, KernelError> {
        match &self.form {
            Form::ProductWeights { s } => Ok(m * n * s.at_diff(x, y)),
            _ => Err(KernelError::Invalid("kernel is not of product-weights form".into())),
        }
    }
}

impl SSpec {
    #[inline]
    fn at_diff(&self, x: &[f64], y: &[f64]) -> f64 {
        if x.len() == 1 {
            self.at(&[x[0] - y[0]])
        } else {
            self.at(&[x[0] - y[0], x[1] - y[1]])
        }
    }
}

/// Serializable description of both kernels.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    pub interaction: InteractionSpec,
    pub influence: InfluenceSpec,
}

#[derive(Clone, Debug)]
pub struct Kernels {
    pub interaction: InteractionKernel,
    pub influence: InfluenceKernel,
}

impl Kernels {
    pub fn new(interaction: InteractionKernel, influence: InfluenceKernel) -> Self {
        Self { interaction, influence }
    }

    pub fn from_spec(spec: &KernelSpec) -> Result<Self, KernelError> {
        Ok(Self {
            interaction: InteractionKernel::new(spec.interaction.clone())?,
            influence: InfluenceKernel::new(spec.influence.clone())?,
        })
    }

    pub fn zero(dim: usize) -> Self {
        Self { interaction: InteractionKernel::zero(dim), influence: InfluenceKernel::zero() }
    }

    pub fn dim(&self) -> usize {
        self.interaction.dim()
    }

    pub fn spec(&self) -> KernelSpec {
        KernelSpec {
            interaction: self.interaction.spec().clone(),
            influence: self.influence.spec().clone(),
        }
    }
}

pub const TOL_DIV: f64 = 1e-10;
pub const TOL_DIV_NEAR_JUMP: f64 = 1e-2;

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct ValidationReport {
    /// Max central-difference divergence over nodes whose stencils avoid jumps.
    pub div_norm: f64,
    /// Same, over nodes whose stencils straddle a declared discontinuity.
    pub div_norm_near_discontinuity: f64,
    /// Only meaningful for families declared divergence-free.
    pub divergence_ok: bool,
    pub bound_violations: usize,
    pub parity_ok: bool,
    pub compact_m_support: bool,
    /// `grad_x int S psi - int S grad_y psi` on the grid, no absolute values.
    pub gradient_identity_residual: f64,
}

impl ValidationReport {
    pub fn ok(&self) -> bool {
        self.divergence_ok && self.bound_violations == 0 && self.parity_ok
    }
}

/// Checks the structural hypotheses on nodes `k / resolution` (and cell
/// centers for bounds). `resolution >= 16`.
pub fn validate_kernels(kernels: &Kernels, resolution: usize) -> Result<ValidationReport, KernelError> {
    if resolution < 16 {
        return Err(KernelError::Invalid("validation grid needs at least 16 points per axis".into()));
    }
    let a = &kernels.interaction;
    let d = a.dim();
    let g = resolution;
    let h = 1.0 / g as f64;
    let points: Vec<Vec<f64>> = grid_points(d, g, 0.0);

    let jumps = a.discontinuities();
    let mut div_far = 0.0f64;
    let mut div_near = 0.0f64;
    for x in &points {
        let mut div = 0.0;
        let mut near = false;
        for k in 0..d {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[k] += h;
            xm[k] -= h;
            div += (a.at(&xp)[k] - a.at(&xm)[k]) / (2.0 * h);
            for &(axis, pos) in &jumps {
                if axis == k && wrap_half(x[k] - pos).abs() <= h {
                    near = true;
                }
            }
        }
        if near {
            div_near = div_near.max(div.abs());
        } else {
            div_far = div_far.max(div.abs());
        }
    }
    let divergence_ok = !a.divergence_free() || (div_far <= TOL_DIV && div_near <= TOL_DIV_NEAR_JUMP);

    let mut violations = 0usize;
    let mut all_x = points.clone();
    all_x.extend(grid_points(d, g, 0.5));
    for x in &all_x {
        let v = a.at(x);
        if (v[0] * v[0] + v[1] * v[1]).sqrt() > a.sup_bound() * (1.0 + 1e-12) {
            violations += 1;
        }
    }

    let inf = &kernels.influence;
    let mut parity_ok = true;
    let mut compact = true;
    let mut residual = 0.0f64;
    if !inf.is_product_weights() {
        let b = inf.bounds();
        let top = inf.m_support().map_or(4.0, |(_, hi)| 1.25 * hi);
        let mw = 24usize;
        let weights: Vec<f64> = (0..=mw).map(|k| top * k as f64 / mw as f64).collect();
        let gx = if d == 1 { g } else { g.min(12) };
        let xs = grid_points(d, gx, 0.25);
        for x in &xs {
            for y in &xs {
                for &m in &weights {
                    for &n in &weights {
                        let v = inf.at(x, m, y, n);
                        let tol = 1.0 + 1e-12;
                        if v.s.abs() > b.s0 * tol || v.dm.abs() > b.s1 * tol || v.dmm.abs() > b.s2 * tol {
                            violations += 1;
                        }
                    }
                }
            }
        }
        compact = inf.compact_m_support();
        if let Some((lo, hi)) = inf.m_support() {
            for x in &xs {
                for &m in &[0.0, 0.5 * lo, lo, hi, hi + 1.0] {
                    if inf.at(x, m, x, 0.5 * (lo + hi)) != InfluenceValue::default() {
                        compact = false;
                    }
                }
            }
        }
        if let Some(s) = inf.s_spec() {
            let declared = s.parity.unwrap_or_else(|| s.natural_parity());
            let sgn = if declared == Parity::Odd { -1.0 } else { 1.0 };
            for z in grid_points(d, g, 0.0).iter().chain(grid_points(d, g, 0.37).iter()) {
                let neg: Vec<f64> = z.iter().map(|v| -v).collect();
                if (s.at(&neg) - sgn * s.at(z)).abs() > 1e-12 * s.sup().max(1e-300) {
                    parity_ok = false;
                }
            }
        }
        residual = gradient_identity_residual(inf, d, g);
    }

    Ok(ValidationReport {
        div_norm: div_far,
        div_norm_near_discontinuity: div_near,
        divergence_ok,
        bound_violations: violations,
        parity_ok,
        compact_m_support: compact,
        gradient_identity_residual: residual,
    })
}

fn grid_points(d: usize, g: usize, offset: f64) -> Vec<Vec<f64>> {
    let h = 1.0 / g as f64;
    if d == 1 {
        (0..g).map(|i| vec![(i as f64 + offset) * h]).collect()
    } else {
        let mut out = Vec::with_capacity(g * g);
        for i in 0..g {
            for j in 0..g {
                out.push(vec![(i as f64 + offset) * h, (j as f64 + offset) * h]);
            }
        }
        out
    }
}

/// Compares the centered difference in x of `F(x) = sum_y S(x,m,y,n) psi(y,n) h^d`
/// with `sum_y S(x,m,y,n) D_y psi(y,n) h^d` for a smooth test density, at grid
/// nodes, for both `S` and `dS/dm`.
fn gradient_identity_residual(inf: &InfluenceKernel, d: usize, g: usize) -> f64 {
    let g = if d == 1 { g } else { g.min(16) };
    let h = 1.0 / g as f64;
    let vol = h.powi(d as i32);
    let nodes = grid_points(d, g, 0.0);
    let psi = |y: &[f64]| 1.0 + 0.5 * (TWO_PI * y[0]).cos() + if d == 2 { 0.25 * (TWO_PI * y[1]).sin() } else { 0.0 };
    let (m, n) = inf
        .m_support()
        .map_or((1.0, 1.0), |(lo, hi)| (0.5 * (lo + hi) + 0.1 * (hi - lo), 0.5 * (lo + hi)));
    let mut worst = 0.0f64;
    for x in &nodes {
        for k in 0..d {
            for alpha in 0..2 {
                let pick = |v: InfluenceValue| if alpha == 0 { v.s } else { v.dm };
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[k] += h;
                xm[k] -= h;
                let mut lhs = 0.0;
                let mut rhs = 0.0;
                for y in &nodes {
                    let mut yp = y.clone();
                    let mut ym = y.clone();
                    yp[k] += h;
                    ym[k] -= h;
                    lhs += (pick(inf.at(&xp, m, y, n)) - pick(inf.at(&xm, m, y, n))) / (2.0 * h) * psi(y) * vol;
                    rhs += pick(inf.at(x, m, y, n)) * (psi(&yp) - psi(&ym)) / (2.0 * h) * vol;
                }
                worst = worst.max((lhs - rhs).abs());
            }
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn separable(kind: SKind, amp: f64, support: [f64; 2]) -> InfluenceKernel {
        InfluenceKernel::new(InfluenceSpec::Separable {
            s: SSpec { kind, amplitude: amp, freq: 1, parity: None },
            chi_support: Some(support),
            chi2_support: None,
            bounds: None,
        })
        .unwrap()
    }

    #[test]
    fn constant_family_returns_constant() {
        let a = InteractionKernel::new(InteractionSpec::Constant { c: vec![0.3] }).unwrap();
        assert_eq!(a.eval(&[0.7]).unwrap(), vec![0.3]);
    }

    #[test]
    fn shear_sign_at_quarter() {
        let a = InteractionKernel::new(InteractionSpec::ShearSign { amplitude: 1.0 }).unwrap();
        assert_eq!(a.eval(&[0.1, 0.25]).unwrap(), vec![1.0, 0.0]);
        assert_eq!(a.eval(&[0.1, 0.5]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(a.eval(&[0.1, 0.75]).unwrap(), vec![-1.0, 0.0]);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let a = InteractionKernel::new(InteractionSpec::ShearSign { amplitude: 1.0 }).unwrap();
        assert_eq!(a.eval(&[0.1]), Err(KernelError::DimensionMismatch { kernel: 2, point: 1 }));
    }

    /// Finite-difference oracle for `a = (dK/dz2, -dK/dz1)` with `K = f1 f2 / (2 pi)`.
    fn fd_perp_gradient(p: [Trig; 2], x: [f64; 2]) -> [f64; 2] {
        let k = |z1: f64, z2: f64| p[0].eval(TWO_PI * z1).0 * p[1].eval(TWO_PI * z2).0 / TWO_PI;
        let e = 1e-6;
        [
            (k(x[0], x[1] + e) - k(x[0], x[1] - e)) / (2.0 * e),
            -(k(x[0] + e, x[1]) - k(x[0] - e, x[1])) / (2.0 * e),
        ]
    }

    #[test]
    fn perp_gradient_matches_finite_differences() {
        for p in [[Trig::Sin, Trig::Sin], [Trig::Sin, Trig::Cos], [Trig::Cos, Trig::Cos]] {
            let a = InteractionKernel::new(InteractionSpec::PerpGradientTrig { amplitude: TWO_PI, potential: p })
                .unwrap();
            for x in [[0.0, 0.0], [0.1, 0.3], [0.77, 0.42]] {
                let v = a.eval(&x).unwrap();
                let fd = fd_perp_gradient(p, x);
                assert_abs_diff_eq!(v[0], TWO_PI * fd[0], epsilon = 1e-6);
                assert_abs_diff_eq!(v[1], TWO_PI * fd[1], epsilon = 1e-6);
            }
        }
        // sin*sin vanishes at the origin; sin*cos gives (0, -2 pi) there.
        let ss = InteractionKernel::new(InteractionSpec::PerpGradientTrig {
            amplitude: TWO_PI,
            potential: [Trig::Sin, Trig::Sin],
        })
        .unwrap();
        let v = ss.eval(&[0.0, 0.0]).unwrap();
        assert_abs_diff_eq!(v[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(v[1], 0.0, epsilon = 1e-12);
        let sc = InteractionKernel::new(InteractionSpec::PerpGradientTrig {
            amplitude: TWO_PI,
            potential: [Trig::Sin, Trig::Cos],
        })
        .unwrap();
        let v = sc.eval(&[0.0, 0.0]).unwrap();
        assert_abs_diff_eq!(v[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(v[1], -TWO_PI, epsilon = 1e-12);
    }

    #[test]
    fn analytic_families_are_periodic_on_dyadic_nodes() {
        let fams = [
            InteractionSpec::ShearSign { amplitude: 0.3 },
            InteractionSpec::PerpGradientTrig { amplitude: 0.2, potential: [Trig::Sin, Trig::Cos] },
        ];
        for f in fams {
            let a = InteractionKernel::new(f).unwrap();
            for i in 0..64 {
                for j in 0..64 {
                    let x = [i as f64 / 64.0, j as f64 / 64.0];
                    assert_eq!(a.at(&x), a.at(&[x[0] + 1.0, x[1]]));
                    assert_eq!(a.at(&x), a.at(&[x[0], x[1] - 1.0]));
                }
            }
        }
    }

    #[test]
    fn tabulated_uses_half_open_displacements() {
        let a = InteractionKernel::new(InteractionSpec::Tabulated {
            cells: 4,
            values: vec![vec![1.0], vec![2.0], vec![3.0], vec![4.0]],
            divergence_free: false,
        })
        .unwrap();
        assert_eq!(a.at(&[-0.45])[0], 1.0);
        assert_eq!(a.at(&[0.05])[0], 3.0);
        assert_eq!(a.at(&[0.55])[0], 1.0);
        assert_eq!(a.sup_bound(), 4.0);
    }

    #[test]
    fn influence_vanishes_off_support() {
        let k = separable(SKind::Sin, 0.1, [0.5, 3.0]);
        for m in [0.0, 0.3, 0.5, 3.0, 7.0] {
            assert_eq!(k.eval(&[0.2], m, &[0.7], 1.0).unwrap(), InfluenceValue::default());
        }
    }

    #[test]
    fn bump_normalized_at_center() {
        let k = separable(SKind::Constant, 1.0, [0.5, 3.0]);
        let c = 1.75;
        assert_eq!(k.eval(&[0.3], c, &[0.9], c).unwrap().s, 1.0);
    }

    #[test]
    fn bump_derivatives_match_finite_differences() {
        let b = Bump::new(0.5, 3.0).unwrap();
        for m in [0.7, 1.1, 1.75, 2.4, 2.9] {
            let e = 1e-5;
            let [_, d1, d2] = b.eval(m);
            let fd1 = (b.eval(m + e)[0] - b.eval(m - e)[0]) / (2.0 * e);
            let fd2 = (b.eval(m + e)[1] - b.eval(m - e)[1]) / (2.0 * e);
            assert_abs_diff_eq!(d1, fd1, epsilon = 1e-6);
            assert_abs_diff_eq!(d2, fd2, epsilon = 1e-5);
        }
    }

    #[test]
    fn dm_bound_dominates_dense_sample() {
        let k = separable(SKind::Sin, 0.1, [0.5, 3.0]);
        let b = k.bounds();
        let g = 50;
        let mut worst = [0.0f64; 3];
        for i in 0..g {
            let x = i as f64 / g as f64;
            for j in 0..g {
                let m = 3.5 * j as f64 / g as f64;
                for l in 0..g {
                    let y = l as f64 / g as f64 + 0.013;
                    for q in 0..g {
                        let n = 3.5 * q as f64 / g as f64;
                        let v = k.at(&[x], m, &[y], n);
                        worst[0] = worst[0].max(v.s.abs());
                        worst[1] = worst[1].max(v.dm.abs());
                        worst[2] = worst[2].max(v.dmm.abs());
                    }
                }
            }
        }
        assert!(worst[0] <= b.s0 && worst[1] <= b.s1 && worst[2] <= b.s2, "{worst:?} vs {b:?}");
        assert!(worst[1] > 0.9 * b.s1, "sampled max should be close to the bound");
    }

    #[test]
    fn declared_bounds_below_actual_are_rejected() {
        let r = InfluenceKernel::new(InfluenceSpec::Separable {
            s: SSpec { kind: SKind::Sin, amplitude: 1.0, freq: 1, parity: None },
            chi_support: Some([0.5, 3.0]),
            chi2_support: None,
            bounds: Some(InfluenceBounds { s0: 0.1, s1: 10.0, s2: 10.0 }),
        });
        assert!(matches!(r, Err(KernelError::Invalid(_))));
    }

    #[test]
    fn product_weights_refused_outside_reduced_mode() {
        let k = InfluenceKernel::new(InfluenceSpec::ProductWeights {
            s: SSpec { kind: SKind::Constant, amplitude: 1.0, freq: 1, parity: None },
        })
        .unwrap();
        assert_eq!(k.eval(&[0.0], 1.0, &[0.0], 1.0), Err(KernelError::ReducedModeOnly));
        assert_eq!(k.product_weights_at(&[0.0], 2.0, &[0.5], 3.0).unwrap(), 6.0);
    }

    #[test]
    fn validation_of_builtin_families() {
        let inf = separable(SKind::Sin, 0.1, [0.5, 3.0]);
        let cases = [
            InteractionSpec::Constant { c: vec![0.2] },
            InteractionSpec::ShearSign { amplitude: 0.1 },
            InteractionSpec::PerpGradientTrig { amplitude: 0.1, potential: [Trig::Sin, Trig::Cos] },
        ];
        for spec in cases {
            let a = InteractionKernel::new(spec.clone()).unwrap();
            let d = a.dim();
            let inf = if d == 1 { inf.clone() } else { separable(SKind::SignSin, 0.1, [0.5, 3.0]) };
            let r = validate_kernels(&Kernels::new(a, inf), 16).unwrap();
            assert!(r.ok(), "{spec:?}: {r:?}");
            assert!(r.compact_m_support);
            assert!(r.gradient_identity_residual < 1e-12, "{}", r.gradient_identity_residual);
            if !matches!(spec, InteractionSpec::PerpGradientTrig { .. }) {
                assert_eq!(r.div_norm, 0.0);
                assert_eq!(r.div_norm_near_discontinuity, 0.0);
            }
        }
    }

    #[test]
    fn parity_mismatch_is_reported() {
        let inf = InfluenceKernel::new(InfluenceSpec::Separable {
            s: SSpec { kind: SKind::Cos, amplitude: 0.1, freq: 1, parity: Some(Parity::Odd) },
            chi_support: Some([0.5, 3.0]),
            chi2_support: None,
            bounds: None,
        })
        .unwrap();
        let r = validate_kernels(&Kernels::new(InteractionKernel::zero(1), inf), 16).unwrap();
        assert!(!r.parity_ok);
    }

    #[test]
    fn odd_s_integrates_to_zero() {
        for kind in [SKind::Sin, SKind::SignSin] {
            let s = SSpec { kind, amplitude: 1.0, freq: 2, parity: None };
            let g = 256;
            let total: f64 = (0..g).map(|i| s.at(&[(i as f64 + 0.5) / g as f64])).sum::<f64>() / g as f64;
            assert!(total.abs() < 1e-14, "{kind:?}: {total}");
        }
    }

    #[test]
    fn kernel_spec_parses_documented_example() {
        let json = r#"{"interaction": {"family": "shear-sign", "amplitude": 0.1},
            "influence": {"form": "separable", "s": {"type": "sin", "parity": "odd", "amplitude": 0.1},
            "chi_support": [0.5, 3.0]}}"#;
        let spec: KernelSpec = serde_json::from_str(json).unwrap();
        let k = Kernels::from_spec(&spec).unwrap();
        assert_eq!(k.dim(), 2);
        let bad = r#"{"interaction": {"family": "shear-sign", "amplitude": 0.1, "typo": 1},
            "influence": {"form": "zero"}}"#;
        assert!(serde_json::from_str::<KernelSpec>(bad).is_err());
    }
}
