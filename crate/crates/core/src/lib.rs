//! Numerical laboratory for deterministic particle systems with time-evolving
//! weights: the particle ODEs, the mean-field transport equation for the joint
//! density of position and weight, the small-N Kolmogorov equation, and the
//! relative-entropy toolkit used to compare them.

// `!(x > y)` is how NaN is rejected throughout; index loops mirror the stencils.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod chaos;
pub mod field;
pub mod kernels;
pub mod kolmogorov;
pub mod meanfield;
pub mod numerics;
pub mod particles;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
