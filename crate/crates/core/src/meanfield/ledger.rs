//! Closed-form constants of the a-priori estimates, the short existence time
//! and the two smallness conditions.

use super::envelope_constant;
use crate::field::DensityField;
use crate::kernels::Kernels;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LedgerError {
    #[error("ledger input `{0}` must be finite and nonnegative")]
    BadInput(&'static str),
    #[error("Lambda must be positive")]
    BadLambda,
    #[error("internal error: Y(0) = {0} is not positive")]
    Internal(f64),
    #[error("initial density is not strictly positive, so no envelope constant exists")]
    NoEnvelope,
}

/// Upper end of the bracket searched for `T_star`.
pub const T_STAR_CAP: f64 = 1e6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LedgerInputs {
    pub s0: f64,
    pub s1: f64,
    pub s2: f64,
    pub a_sup: f64,
    /// Envelope constant of the initial data.
    pub envelope_c: f64,
    pub grad_psi0_l1: f64,
    pub grad_mu0_l1: f64,
    /// Moment constant `M_in`, taken as `max_b M_{b,1}^{1/b} / b`.
    pub m_in: f64,
    /// `max(||mu_0||_1, ||mu_0||_inf)`.
    pub mu_bar: f64,
    pub lambda: f64,
    /// Requested horizon; `T** = min(T_star, t_user)`.
    pub t_user: f64,
}

impl LedgerInputs {
    /// Inputs measured on the grid from the initial data and kernel bounds.
    pub fn measure(psi0: &DensityField, kernels: &Kernels, b_max: u32, lambda: f64, t_user: f64) -> Result<Self, LedgerError> {
        let b = kernels.influence.bounds();
        let mu = psi0.mu();
        let m_in = (1..=b_max.max(1))
            .map(|k| psi0.moment(k, 1).powf(1.0 / k as f64) / k as f64)
            .fold(0.0, f64::max);
        Ok(Self {
            s0: b.s0,
            s1: b.s1,
            s2: b.s2,
            a_sup: kernels.interaction.sup_bound(),
            envelope_c: envelope_constant(psi0).ok_or(LedgerError::NoEnvelope)?,
            grad_psi0_l1: psi0.grad_x_l1(),
            grad_mu0_l1: mu.grad_l1(),
            m_in,
            mu_bar: mu.l1().max(mu.linf()),
            lambda,
            t_user,
        })
    }

    fn check(&self) -> Result<(), LedgerError> {
        let fields = [
            ("s0", self.s0),
            ("s1", self.s1),
            ("s2", self.s2),
            ("a_sup", self.a_sup),
            ("envelope_c", self.envelope_c),
            ("grad_psi0_l1", self.grad_psi0_l1),
            ("grad_mu0_l1", self.grad_mu0_l1),
            ("m_in", self.m_in),
            ("mu_bar", self.mu_bar),
            ("t_user", self.t_user),
        ];
        for (name, v) in fields {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(LedgerError::BadInput(name));
            }
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(LedgerError::BadLambda);
        }
        Ok(())
    }

    /// `|d_m psi| <= K_dm e^{-m}` on [0, T].
    pub fn k_dm(&self, t: f64) -> f64 {
        let (s0, s1, s2, c) = (self.s0, self.s1, self.s2, self.envelope_c);
        c * (1.0 + t * s2 * ((s0 + s1) * t).exp()) * (s1 * t).exp()
    }

    /// `||d_m log psi||_inf <= K_logm` on [0, T].
    pub fn k_logm(&self, t: f64) -> f64 {
        let (s0, s1, s2, c) = (self.s0, self.s1, self.s2, self.envelope_c);
        c * c * (1.0 + s2 * t * ((s0 + s1) * t).exp()) * ((s0 + 2.0 * s1) * t).exp()
    }

    /// Growth coefficient of `Y(t) = 1 + ||grad mu||_1 + ||grad psi||_1`.
    pub fn k_growth(&self, t: f64) -> f64 {
        3.0 * self.a_sup + 3.0 * self.s1 + (2.0 + self.k_dm(t)) * self.s0
    }

    pub fn y0(&self) -> f64 {
        1.0 + self.grad_psi0_l1 + self.grad_mu0_l1
    }

    /// `|grad_x psi| <= K_gradx e^{-m}`, transcribed term by term.
    pub fn k_gradx(&self, t: f64) -> f64 {
        let (s0, s1, a, c) = (self.s0, self.s1, self.a_sup, self.envelope_c);
        let y = self.y0();
        let rate = s0 + s1 + 2.0 * a * y;
        (rate * t).exp() * (c + 2.0 * t * (s1 * c * ((s0 + s1) * t).exp() + s0 * self.k_dm(t)) * y)
    }

    /// Bound on `||grad_x log psi||_inf` on [0, T].
    pub fn gradx_log_bound(&self, t: f64) -> f64 {
        self.envelope_c * self.k_gradx(t) * ((self.s0 + self.s1) * t).exp()
    }

    pub fn cond1_lhs(&self, t: f64) -> f64 {
        4.0 * self.s1 + 4.0 * self.s0 * self.k_logm(t)
    }

    pub fn cond2_lhs(&self, t: f64) -> f64 {
        let e = self.s0 + self.s1;
        2.0 * self.a_sup
            * self.envelope_c
            * self.k_gradx(t)
            * (e * t).exp()
            * (self.mu_bar + self.s0 * t + (2.0 * e * t).exp() * self.m_in)
    }
}

/// `(b p + 1) S0 + (p + 1) S1`.
pub fn moment_growth_rate(b: u32, p: u32, s0: f64, s1: f64) -> f64 {
    ((b * p) as f64 + 1.0) * s0 + (p as f64 + 1.0) * s1
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundsLedger {
    pub inputs: LedgerInputs,
    pub y0: f64,
    pub t_star: f64,
    /// True when `T K(T)` stays below the target on the whole searched bracket.
    pub t_star_capped: bool,
    pub t_double_star: f64,
    /// Constants evaluated at `T**`.
    pub k_dm: f64,
    pub k_logm: f64,
    pub k_growth: f64,
    pub k_gradx: f64,
    pub gradx_log_bound: f64,
    pub cond1_lhs: f64,
    pub cond2_lhs: f64,
    pub small_cond_1: bool,
    pub small_cond_2: bool,
}

pub fn bounds_ledger(inputs: &LedgerInputs) -> Result<BoundsLedger, LedgerError> {
    inputs.check()?;
    let y0 = inputs.y0();
    if !(y0 > 0.0) {
        return Err(LedgerError::Internal(y0));
    }
    let target = 1.0 / (2.0 * y0);
    let g = |t: f64| t * inputs.k_growth(t) <= target;
    let (t_star, capped) = if g(T_STAR_CAP) {
        (T_STAR_CAP, true)
    } else {
        let (mut lo, mut hi) = (0.0, 1.0);
        while g(hi) {
            lo = hi;
            hi *= 2.0;
        }
        while hi - lo > 1e-7 {
            let mid = 0.5 * (lo + hi);
            if g(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        (lo, false)
    };
    let t = t_star.min(inputs.t_user);
    let half = inputs.lambda / 2.0;
    Ok(BoundsLedger {
        inputs: inputs.clone(),
        y0,
        t_star,
        t_star_capped: capped,
        t_double_star: t,
        k_dm: inputs.k_dm(t),
        k_logm: inputs.k_logm(t),
        k_growth: inputs.k_growth(t),
        k_gradx: inputs.k_gradx(t),
        gradx_log_bound: inputs.gradx_log_bound(t),
        cond1_lhs: inputs.cond1_lhs(t),
        cond2_lhs: inputs.cond2_lhs(t),
        small_cond_1: inputs.cond1_lhs(t) < half,
        small_cond_2: inputs.cond2_lhs(t) < half,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> LedgerInputs {
        LedgerInputs {
            s0: 0.1,
            s1: 0.1,
            s2: 0.3,
            a_sup: 0.2,
            envelope_c: 1.2,
            grad_psi0_l1: 0.5,
            grad_mu0_l1: 0.4,
            m_in: 1.0,
            mu_bar: 1.0,
            lambda: 1.0,
            t_user: 10.0,
        }
    }

    #[test]
    fn moment_rate_example() {
        assert!((moment_growth_rate(2, 1, 0.1, 0.2) - 0.7).abs() < 1e-15);
    }

    #[test]
    fn zero_influence_collapses_exponentials() {
        let mut i = base();
        i.s0 = 0.0;
        i.s1 = 0.0;
        i.s2 = 0.0;
        for t in [0.0, 0.7, 5.0] {
            assert_eq!(i.k_dm(t), 1.2);
            assert!((i.k_logm(t) - 1.44).abs() < 1e-15);
        }
    }

    #[test]
    fn t_star_solves_the_threshold() {
        let i = base();
        let l = bounds_ledger(&i).unwrap();
        assert!(!l.t_star_capped);
        let target = 1.0 / (2.0 * l.y0);
        assert!(l.t_star * i.k_growth(l.t_star) <= target);
        assert!((l.t_star + 1e-6) * i.k_growth(l.t_star + 1e-6) > target);
        assert_eq!(l.t_double_star, l.t_star);
    }

    #[test]
    fn no_dynamics_caps_t_star() {
        let mut i = base();
        i.s0 = 0.0;
        i.s1 = 0.0;
        i.a_sup = 0.0;
        let l = bounds_ledger(&i).unwrap();
        assert!(l.t_star_capped);
        assert_eq!(l.t_double_star, 10.0);
    }

    #[test]
    fn bad_inputs_are_rejected() {
        let mut i = base();
        i.s0 = f64::NAN;
        assert_eq!(bounds_ledger(&i), Err(LedgerError::BadInput("s0")));
        let mut i = base();
        i.lambda = 0.0;
        assert_eq!(bounds_ledger(&i), Err(LedgerError::BadLambda));
    }
}
