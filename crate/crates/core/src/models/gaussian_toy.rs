use crate::distributions::{normal_ln_pdf, DensitySpec};
use crate::error::Result;
use crate::factorized::{FactorizedModel, ProductProposal};

/// Independent-coordinate Gaussian target scaled by `exp(log_evidence)`.
///
/// Each coordinate is its own block and there is no global block. The
/// target density is carried by the block likelihood terms; block priors
/// are flat.
#[derive(Debug, Clone)]
pub struct GaussianToy {
    pub mean: Vec<f64>,
    pub variance: f64,
    pub log_evidence: f64,
}

impl Default for GaussianToy {
    fn default() -> Self {
        GaussianToy {
            mean: vec![0.0, 0.0],
            variance: 2.0,
            log_evidence: -1000.0,
        }
    }
}

impl GaussianToy {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// True expectation of the identity under the normalized target.
    pub fn true_mean(&self) -> &[f64] {
        &self.mean
    }

    /// The normalized target as a density.
    pub fn target(&self) -> Result<DensitySpec> {
        DensitySpec::diag_gaussian(self.mean.clone(), vec![self.variance; self.dim()])
    }

    /// Product Student-t proposal with squared scale equal to the target
    /// variance, centered at `center`.
    pub fn t_proposal(&self, center: &[f64], df: f64) -> Result<ProductProposal> {
        let scale = self.variance.sqrt();
        let blocks = center
            .iter()
            .map(|&c| DensitySpec::student_t(c, scale, df))
            .collect::<Result<Vec<_>>>()?;
        Ok(ProductProposal::new(None, blocks))
    }

    /// Proposal equal to the target block by block.
    pub fn gaussian_proposal(&self, center: &[f64]) -> Result<ProductProposal> {
        let blocks = center
            .iter()
            .map(|&c| DensitySpec::diag_gaussian(vec![c], vec![self.variance]))
            .collect::<Result<Vec<_>>>()?;
        Ok(ProductProposal::new(None, blocks))
    }
}

pub fn gaussian_toy_model() -> GaussianToy {
    GaussianToy::default()
}

impl FactorizedModel for GaussianToy {
    fn num_blocks(&self) -> usize {
        self.mean.len()
    }

    fn global_dim(&self) -> usize {
        0
    }

    fn block_dim(&self, _: usize) -> usize {
        1
    }

    fn global_log_prior(&self, _: &[f64]) -> f64 {
        0.0
    }

    fn block_log_prior(&self, _: usize, _: &[f64]) -> f64 {
        0.0
    }

    fn block_log_likelihood(&self, block: usize, _: &[f64], value: &[f64]) -> f64 {
        normal_ln_pdf(value[0], self.mean[block], self.variance)
    }

    fn log_evidence_offset(&self) -> f64 {
        self.log_evidence
    }
}
