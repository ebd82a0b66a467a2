//! Importance sampling, population Monte Carlo and sample inflation for
//! models whose likelihood factorizes over conditionally independent
//! blocks.
//!
//! Sample inflation draws `M` values for each of `K` local blocks around a
//! shared global draw, evaluates each block's likelihood factor once per
//! value, and recombines the cached factors into `M^K` dependent weighted
//! samples. Self-normalized estimates over such dependent sets remain
//! consistent; the decomposition identities behind that are exposed in
//! [`estimators`] so they can be checked directly.

pub mod combinations;
pub mod distributions;
pub mod error;
pub mod estimators;
pub mod experiments;
pub mod factorized;
pub mod models;
pub mod pmc;

pub use distributions::{DensitySpec, RandomSource};
pub use error::{Error, Result};
pub use estimators::{Estimate, EstimateKind, SampleSet, TestFunction, WeightedSample};
pub use factorized::{EvalCounter, FactorizedModel, FactorizedProposal, InflationConfig};
