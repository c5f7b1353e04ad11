//! Relative-entropy toolkit: discrete entropy inequalities, the remainder
//! terms of the tensorized mean-field law, the cancellation and growth
//! checks they rely on, the exponential-moment estimator and the Monte-Carlo
//! marginal study.

mod entropy;
mod index;
mod mc;
mod remainder;
mod study;

pub use entropy::{
    change_of_law_check, ckp_check, ckp_tensor_check, dual_value, relative_entropy, variational_entropy_check,
    ChangeOfLaw, CkpResult, DiscreteDistribution, RelativeEntropy, VariationalReport, SUM_TOL,
};
pub use index::{qualifying_pairs, IndexTuple};
pub use mc::{delta_trend, exp_moment_mc, DeltaTrend, ExpMomentReport, BOOTSTRAP_RESAMPLES};
pub use remainder::{
    cancellation_check, cancellation_refinement, gamma_bounds, phi_theta, product_cancellation_bruteforce,
    BruteforceEntry, BruteforceReport, CancellationReport, GammaReport, PointFields, RefinementReport,
    RemainderFields, RemainderSample, BRUTEFORCE_BUDGET, ROUNDOFF_LEVEL, SAMPLE_FLOOR,
};
pub use study::{circle_w1, marginal_error_study, ChaosReport, ChaosRow, DeltaRow, StudyConfig};

use crate::kolmogorov::KolmogorovError;
use crate::meanfield::MeanFieldError;
use crate::particles::ParticleError;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChaosError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("unsupported kernel: {0}")]
    UnsupportedKernel(String),
    #[error("density below the floor at x = {x:?}, m = {m}: the log-gradient is undefined")]
    BelowFloor { x: [f64; 2], m: f64 },
    #[error("enumeration needs {count} evaluations, above the budget {budget}")]
    Budget { count: u128, budget: u128 },
    #[error("{rejected} of {samples} samples fell below the density floor (more than 1%)")]
    TooManyRejections { rejected: usize, samples: usize },
    #[error("histogram bins differ from the PDE cells")]
    BinsMisaligned,
    #[error(transparent)]
    MeanField(#[from] MeanFieldError),
    #[error(transparent)]
    Particles(#[from] ParticleError),
    #[error(transparent)]
    Kolmogorov(#[from] KolmogorovError),
}
