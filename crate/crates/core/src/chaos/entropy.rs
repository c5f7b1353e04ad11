//! Relative entropy on finite spaces and the inequalities built on it.

use super::ChaosError;
use crate::field::DensityField;
use crate::kolmogorov::KolmogorovField;
use crate::numerics::{compensated_sum, log_sum_exp_weighted, CompensatedSum};
use serde::Serialize;

/// Allowed deviation of the total probability from 1.
pub const SUM_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiscreteDistribution {
    probs: Vec<f64>,
}

impl DiscreteDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self, ChaosError> {
        if probs.is_empty() {
            return Err(ChaosError::InvalidArgument("empty distribution".into()));
        }
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(ChaosError::InvalidArgument("probabilities must be finite and nonnegative".into()));
        }
        let total = compensated_sum(probs.iter().copied());
        if (total - 1.0).abs() > SUM_TOL {
            return Err(ChaosError::InvalidArgument(format!("probabilities sum to {total}, not 1")));
        }
        Ok(Self { probs })
    }

    /// Normalizes nonnegative weights.
    pub fn from_weights(weights: &[f64]) -> Result<Self, ChaosError> {
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(ChaosError::InvalidArgument("weights must be finite and nonnegative".into()));
        }
        let total = compensated_sum(weights.iter().copied());
        if !(total > 0.0) {
            return Err(ChaosError::InvalidArgument("weights have zero total".into()));
        }
        Ok(Self { probs: weights.iter().map(|w| w / total).collect() })
    }

    /// Cell masses of a grid density.
    pub fn from_density(field: &DensityField) -> Result<Self, ChaosError> {
        Self::from_weights(&field.values)
    }

    /// Cell masses of an N-particle grid density.
    pub fn from_kolmogorov(field: &KolmogorovField) -> Result<Self, ChaosError> {
        Self::from_weights(&field.values)
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

fn same_support(p: &DiscreteDistribution, q: &DiscreteDistribution) -> Result<(), ChaosError> {
    if p.len() != q.len() {
        return Err(ChaosError::InvalidArgument(format!("support sizes differ: {} vs {}", p.len(), q.len())));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RelativeEntropy {
    /// `+inf` when `p` is not absolutely continuous with respect to `q`.
    pub value: f64,
    pub absolutely_continuous: bool,
}

/// `(1/normalizer) sum p_i log(p_i / q_i)`.
pub fn relative_entropy(
    p: &DiscreteDistribution,
    q: &DiscreteDistribution,
    normalizer: f64,
) -> Result<RelativeEntropy, ChaosError> {
    same_support(p, q)?;
    if !(normalizer > 0.0 && normalizer.is_finite()) {
        return Err(ChaosError::InvalidArgument("normalizer must be positive".into()));
    }
    let mut acc = CompensatedSum::new();
    for (pi, qi) in p.probs.iter().zip(&q.probs) {
        if *pi > 0.0 {
            if *qi == 0.0 {
                return Ok(RelativeEntropy { value: f64::INFINITY, absolutely_continuous: false });
            }
            acc.add(pi * (pi / qi).ln());
        }
    }
    Ok(RelativeEntropy { value: acc.value() / normalizer, absolutely_continuous: true })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CkpResult {
    pub l1: f64,
    pub entropy: f64,
    pub bound: f64,
    pub holds: bool,
}

fn l1(p: &DiscreteDistribution, q: &DiscreteDistribution) -> f64 {
    compensated_sum(p.probs.iter().zip(&q.probs).map(|(a, b)| (a - b).abs()))
}

/// `sum |p - q| <= sqrt(2 k H(p|q) / normalizer)`.
pub fn ckp_check(p: &DiscreteDistribution, q: &DiscreteDistribution, k: usize, normalizer: f64) -> Result<CkpResult, ChaosError> {
    let h = relative_entropy(p, q, normalizer)?.value;
    let l1 = l1(p, q);
    let bound = (2.0 * k as f64 * h.max(0.0)).sqrt();
    Ok(CkpResult { l1, entropy: h, bound, holds: l1 <= bound + 1e-12 })
}

/// CKP between an N-particle density and the tensor power of a one-particle
/// density: the L1 distance of the k-marginal against
/// `sqrt(2 k H_N)`, with `H_N` the per-particle relative entropy of the joint law.
pub fn ckp_tensor_check(joint: &KolmogorovField, factor: &DensityField, k: usize) -> Result<CkpResult, ChaosError> {
    let n = joint.grid.n;
    let reference = KolmogorovField::tensor_power(factor, n)?;
    let h = relative_entropy(
        &DiscreteDistribution::from_kolmogorov(joint)?,
        &DiscreteDistribution::from_kolmogorov(&reference)?,
        n as f64,
    )?
    .value;
    let marginal = joint.marginal(k)?;
    let reference_k = KolmogorovField::tensor_power(factor, k)?;
    let l1 = l1(
        &DiscreteDistribution::from_kolmogorov(&marginal)?,
        &DiscreteDistribution::from_kolmogorov(&reference_k)?,
    );
    let bound = (2.0 * k as f64 * h.max(0.0)).sqrt();
    Ok(CkpResult { l1, entropy: h, bound, holds: l1 <= bound + 1e-12 })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VariationalReport {
    /// `sum p log p` against counting measure.
    pub entropy: f64,
    pub duals: Vec<f64>,
    pub best_dual: f64,
    /// Dual value at `Phi = log p`; `None` when `p` has zeros.
    pub maximizer_dual: Option<f64>,
    /// `entropy - best_dual`.
    pub gap: f64,
    pub holds: bool,
}

/// `sum p Phi - log sum e^Phi`.
pub fn dual_value(p: &DiscreteDistribution, phi: &[f64]) -> Result<f64, ChaosError> {
    if phi.len() != p.len() {
        return Err(ChaosError::InvalidArgument("test function has the wrong length".into()));
    }
    let lin = compensated_sum(p.probs.iter().zip(phi).map(|(a, b)| a * b));
    Ok(lin - log_sum_exp_weighted(phi, &vec![1.0; phi.len()]))
}

/// Every candidate's dual value stays below the entropy; `log p` attains it.
pub fn variational_entropy_check(p: &DiscreteDistribution, candidates: &[Vec<f64>]) -> Result<VariationalReport, ChaosError> {
    let entropy =
        compensated_sum(p.probs.iter().filter(|v| **v > 0.0).map(|v| v * v.ln()));
    let duals = candidates.iter().map(|phi| dual_value(p, phi)).collect::<Result<Vec<_>, _>>()?;
    let maximizer_dual = if p.probs.iter().all(|v| *v > 0.0) {
        let log_p: Vec<f64> = p.probs.iter().map(|v| v.ln()).collect();
        Some(dual_value(p, &log_p)?)
    } else {
        None
    };
    let best_dual = duals.iter().copied().chain(maximizer_dual).fold(f64::NEG_INFINITY, f64::max);
    let holds = duals.iter().all(|d| *d <= entropy + 1e-12)
        && maximizer_dual.is_none_or(|d| (d - entropy).abs() <= 1e-12);
    Ok(VariationalReport { entropy, duals, best_dual, maximizer_dual, gap: entropy - best_dual, holds })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ChangeOfLaw {
    pub lhs: f64,
    /// `H(p|q) / N`.
    pub entropy: f64,
    /// `(1/N) log sum q e^{N Phi}`.
    pub log_moment: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// `sum Phi p <= H(p|q)/N + (1/N) log sum e^{N Phi} q`, the exponential
/// moment taken in log-sum-exp form.
pub fn change_of_law_check(
    p: &DiscreteDistribution,
    q: &DiscreteDistribution,
    phi: &[f64],
    n: usize,
) -> Result<ChangeOfLaw, ChaosError> {
    same_support(p, q)?;
    if phi.len() != p.len() || n == 0 {
        return Err(ChaosError::InvalidArgument("need one value of Phi per point and N >= 1".into()));
    }
    let nf = n as f64;
    let lhs = compensated_sum(p.probs.iter().zip(phi).map(|(a, b)| a * b));
    let entropy = relative_entropy(p, q, nf)?.value;
    let scaled: Vec<f64> = phi.iter().map(|v| nf * v).collect();
    let log_moment = log_sum_exp_weighted(&scaled, &q.probs) / nf;
    let rhs = entropy + log_moment;
    Ok(ChangeOfLaw { lhs, entropy, log_moment, rhs, holds: lhs <= rhs + 1e-12 })
}
