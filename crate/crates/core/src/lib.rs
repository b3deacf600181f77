//! Reliability analysis of spatially variable undrained slopes.
//!
//! The crate covers the whole chain from soil statistics to probability of
//! failure:
//!
//! * [`field`] generates anisotropic log-normal random fields of undrained
//!   shear strength by Cholesky decomposition of the cell covariance matrix.
//! * [`slope`] builds the slope grid and evaluates stability with circular-arc
//!   limit equilibrium.
//! * [`montecarlo`] runs seeded, parallel Monte Carlo campaigns, estimates the
//!   probability of failure and persists datasets.
//! * [`surrogate`] trains random forest, support vector and neural network
//!   classifiers on a small simulated subset and predicts the probability of
//!   failure for the rest (machine-learning-aided Monte Carlo).
//!
//! The guide in `book/` walks through each stage; its code listings are
//! compiled and run as doctests of this crate.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod field;
pub mod montecarlo;
pub mod rng;
pub mod slope;
pub mod surrogate;

pub use field::{CellGrid, FieldRealization, FieldStatistics};
pub use montecarlo::{Dataset, DatasetView, McConfig, PfEstimate, Sample};
pub use slope::{SearchSpec, SlopeGeometry, StabilityEvaluator, StabilityResult, Status, TrialCircle};
pub use surrogate::{HyperParams, ModelKind, TrainedModel};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/random_fields.md")]
    mod random_fields {}
    #[doc = include_str!("../../../book/src/slope_stability.md")]
    mod slope_stability {}
    #[doc = include_str!("../../../book/src/monte_carlo.md")]
    mod monte_carlo {}
    #[doc = include_str!("../../../book/src/surrogates.md")]
    mod surrogates {}
    #[doc = include_str!("../../../book/src/mlamc.md")]
    mod mlamc {}
}
