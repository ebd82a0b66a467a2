//! Concrete factorized models: the 2-D Gaussian toy and finite Dirichlet
//! mixtures, plus synthetic data for the latter.

pub mod dmm;
pub mod gaussian_toy;
pub mod synthetic;

pub use dmm::{
    dmm_model, encode_global, ComponentFamily, DirichletMixture, DmmKernel, DmmProposal, DmmSpec,
    SortedMeans,
};
pub use gaussian_toy::{gaussian_toy_model, GaussianToy};
pub use synthetic::{make_synthetic, make_synthetic_n, SyntheticDataset};
