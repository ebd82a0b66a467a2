//! Finite Dirichlet mixture of univariate components.
//!
//! The global block holds the mixing weights followed by one label per
//! observation (zero-based, stored as `f64`). Block `j` holds the parameters
//! of component `j`: `[mean]` for unit-variance Gaussians, `[mean, variance,
//! df]` for Student-t components, where `variance` is the squared scale.

use crate::distributions::{
    dirichlet_ln_pdf, gamma_ln_pdf, inverse_gamma_ln_pdf, normal_ln_pdf, sample_categorical,
    student_t_ln_pdf, DensitySpec, RandomSource,
};
use crate::error::{Error, Result};
use crate::estimators::TestFunction;
use crate::factorized::{FactorizedModel, FactorizedProposal, Layout};
use crate::pmc::{KernelConfig, MarkovKernel};

use statrs::function::gamma::ln_gamma;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ComponentFamily {
    /// Gaussian components with fixed unit variance; only means are latent.
    Gaussian,
    /// Student-t components with latent mean, variance and degrees of freedom.
    StudentT,
}

impl ComponentFamily {
    pub fn block_dim(self) -> usize {
        match self {
            ComponentFamily::Gaussian => 1,
            ComponentFamily::StudentT => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ComponentFamily::Gaussian => "gaussian",
            ComponentFamily::StudentT => "t",
        }
    }
}

impl std::str::FromStr for ComponentFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" | "gauss" => Ok(ComponentFamily::Gaussian),
            "t" | "student-t" => Ok(ComponentFamily::StudentT),
            other => Err(Error::Config(format!("unknown component family {other:?}"))),
        }
    }
}

/// Prior hyperparameters of the mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct DmmSpec {
    pub family: ComponentFamily,
    pub components: usize,
    /// Dirichlet concentration on the mixing weights.
    pub alpha_phi: Vec<f64>,
    /// Gaussian family: N(0, mean_prior_var) on means.
    pub mean_prior_var: f64,
    /// Student-t family: T(0, 1, 1) on means.
    pub mean_prior_t: (f64, f64, f64),
    /// Student-t family: scalar inverse-Wishart(sigma2, df) on variances.
    pub variance_prior: (f64, f64),
    /// Student-t family: Gamma(shape, scale) on degrees of freedom.
    pub df_prior: (f64, f64),
}

impl DmmSpec {
    pub fn new(family: ComponentFamily) -> Self {
        DmmSpec {
            family,
            components: 2,
            alpha_phi: vec![1.0, 1.0],
            mean_prior_var: 1.0,
            mean_prior_t: (0.0, 1.0, 1.0),
            variance_prior: (5.0, 1.0),
            df_prior: (1.0, 1.0),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DirichletMixture {
    spec: DmmSpec,
    data: Vec<f64>,
}

pub fn dmm_model(spec: DmmSpec, data: Vec<f64>) -> Result<DirichletMixture> {
    DirichletMixture::new(spec, data)
}

/// Packs mixing weights and zero-based labels into a global block.
pub fn encode_global(weights: &[f64], labels: &[usize]) -> Vec<f64> {
    weights
        .iter()
        .copied()
        .chain(labels.iter().map(|&l| l as f64))
        .collect()
}

fn label_of(v: f64, k: usize) -> Option<usize> {
    (v >= 0.0 && v.fract() == 0.0 && (v as usize) < k).then_some(v as usize)
}

impl DirichletMixture {
    pub fn new(spec: DmmSpec, data: Vec<f64>) -> Result<Self> {
        if spec.components == 0 || spec.alpha_phi.len() != spec.components {
            return Err(Error::Config(format!(
                "{} components with {} dirichlet concentrations",
                spec.components,
                spec.alpha_phi.len()
            )));
        }
        DensitySpec::dirichlet(spec.alpha_phi.clone())?;
        if data.iter().any(|d| !d.is_finite()) {
            return Err(Error::ParameterDomain("observations must be finite".into()));
        }
        Ok(DirichletMixture { spec, data })
    }

    pub fn spec(&self) -> &DmmSpec {
        &self.spec
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn components(&self) -> usize {
        self.spec.components
    }

    pub fn weights<'a>(&self, global: &'a [f64]) -> &'a [f64] {
        &global[..self.spec.components]
    }

    pub fn labels<'a>(&self, global: &'a [f64]) -> &'a [f64] {
        &global[self.spec.components..]
    }

    /// Log density of one observation under component parameters.
    pub fn component_ln_pdf(&self, x: f64, params: &[f64]) -> f64 {
        match self.spec.family {
            ComponentFamily::Gaussian => normal_ln_pdf(x, params[0], 1.0),
            ComponentFamily::StudentT => student_t_ln_pdf(x, params[0], params[1].sqrt(), params[2]),
        }
    }

    /// Label posterior of every observation under fixed weights and
    /// component parameters.
    pub fn responsibilities(&self, weights: &[f64], components: &[&[f64]]) -> Vec<Vec<f64>> {
        self.data
            .iter()
            .map(|&x| {
                let logs: Vec<f64> = weights
                    .iter()
                    .zip(components)
                    .map(|(&w, c)| w.ln() + self.component_ln_pdf(x, c))
                    .collect();
                let total = crate::distributions::log_sum_exp(&logs);
                if total.is_finite() {
                    logs.iter().map(|l| (l - total).exp()).collect()
                } else {
                    vec![1.0 / weights.len() as f64; weights.len()]
                }
            })
            .collect()
    }

    /// Test function returning component means in increasing order, which
    /// is invariant under relabeling.
    pub fn sorted_means(&self) -> SortedMeans {
        SortedMeans {
            layout: self.layout(),
        }
    }
}

impl FactorizedModel for DirichletMixture {
    fn num_blocks(&self) -> usize {
        self.spec.components
    }

    fn global_dim(&self) -> usize {
        self.spec.components + self.data.len()
    }

    fn block_dim(&self, _: usize) -> usize {
        self.spec.family.block_dim()
    }

    fn global_log_prior(&self, global: &[f64]) -> f64 {
        let k = self.spec.components;
        let weights = &global[..k];
        let mut lp = dirichlet_ln_pdf(weights, &self.spec.alpha_phi);
        if lp == f64::NEG_INFINITY {
            return lp;
        }
        for &l in &global[k..] {
            match label_of(l, k) {
                Some(z) => lp += weights[z].ln(),
                None => return f64::NEG_INFINITY,
            }
        }
        lp
    }

    fn block_log_prior(&self, _: usize, value: &[f64]) -> f64 {
        match self.spec.family {
            ComponentFamily::Gaussian => normal_ln_pdf(value[0], 0.0, self.spec.mean_prior_var),
            ComponentFamily::StudentT => {
                let (loc, scale, df) = self.spec.mean_prior_t;
                let (sigma2, iw_df) = self.spec.variance_prior;
                let (shape, gscale) = self.spec.df_prior;
                student_t_ln_pdf(value[0], loc, scale, df)
                    + inverse_gamma_ln_pdf(value[1], iw_df / 2.0, sigma2 / 2.0)
                    + gamma_ln_pdf(value[2], shape, gscale)
            }
        }
    }

    fn block_log_likelihood(&self, block: usize, global: &[f64], value: &[f64]) -> f64 {
        let labels = &global[self.spec.components..];
        let target = block as f64;
        let mine = self
            .data
            .iter()
            .zip(labels)
            .filter(|(_, &l)| l == target)
            .map(|(&x, _)| x);
        match self.spec.family {
            ComponentFamily::Gaussian => mine.map(|x| normal_ln_pdf(x, value[0], 1.0)).sum(),
            ComponentFamily::StudentT => {
                let (mean, var, df) = (value[0], value[1], value[2]);
                if !(var > 0.0) || !(df > 0.0) {
                    return f64::NEG_INFINITY;
                }
                let scale = var.sqrt();
                let norm = ln_gamma((df + 1.0) / 2.0)
                    - ln_gamma(df / 2.0)
                    - 0.5 * (df * std::f64::consts::PI).ln()
                    - scale.ln();
                let half = (df + 1.0) / 2.0;
                mine.map(|x| {
                    let z = (x - mean) / scale;
                    norm - half * (z * z / df).ln_1p()
                })
                .sum()
            }
        }
    }
}

/// See [`DirichletMixture::sorted_means`].
#[derive(Debug, Clone)]
pub struct SortedMeans {
    layout: Layout,
}

impl TestFunction for SortedMeans {
    fn dim(&self) -> usize {
        self.layout.num_blocks()
    }

    fn eval(&self, point: &[f64], out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            *o = self.layout.block(point, j)[0];
        }
        out.sort_by(f64::total_cmp);
    }
}

enum LabelProposal {
    /// Labels drawn from `Cat(weights)` of the proposed weights.
    FromWeights,
    /// Fixed per-observation label probabilities.
    PerPoint(Vec<Vec<f64>>),
}

/// Global-then-blocks proposal for [`DirichletMixture`].
pub struct DmmProposal {
    weights: DensitySpec,
    labels: LabelProposal,
    observations: usize,
    /// Each block is a concatenation of one-dimensional densities.
    blocks: Vec<Vec<DensitySpec>>,
}

impl DmmProposal {
    /// Draws everything from the prior; labels follow the drawn weights.
    pub fn prior(model: &DirichletMixture) -> Result<Self> {
        let spec = &model.spec;
        let block = match spec.family {
            ComponentFamily::Gaussian => {
                vec![DensitySpec::diag_gaussian(vec![0.0], vec![spec.mean_prior_var])?]
            }
            ComponentFamily::StudentT => {
                let (loc, scale, df) = spec.mean_prior_t;
                let (sigma2, iw_df) = spec.variance_prior;
                let (shape, gscale) = spec.df_prior;
                vec![
                    DensitySpec::student_t(loc, scale, df)?,
                    DensitySpec::scalar_inverse_wishart(sigma2, iw_df)?,
                    DensitySpec::gamma(shape, gscale)?,
                ]
            }
        };
        Ok(DmmProposal {
            weights: DensitySpec::dirichlet(spec.alpha_phi.clone())?,
            labels: LabelProposal::FromWeights,
            observations: model.data.len(),
            blocks: vec![block; spec.components],
        })
    }
}

fn sample_concat(parts: &[DensitySpec], rng: &mut RandomSource) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(parts.len());
    for p in parts {
        out.extend(p.sample(rng)?);
    }
    Ok(out)
}

fn concat_log_density(parts: &[DensitySpec], value: &[f64]) -> f64 {
    let mut at = 0;
    let mut total = 0.0;
    for p in parts {
        let d = p.dim();
        if at + d > value.len() {
            return f64::NEG_INFINITY;
        }
        total += p.log_density(&value[at..at + d]).unwrap_or(f64::NEG_INFINITY);
        at += d;
    }
    if at == value.len() {
        total
    } else {
        f64::NEG_INFINITY
    }
}

impl FactorizedProposal for DmmProposal {
    fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    fn sample_global(&self, rng: &mut RandomSource) -> Result<Vec<f64>> {
        let weights = self.weights.sample(rng)?;
        let mut global = Vec::with_capacity(weights.len() + self.observations);
        global.extend_from_slice(&weights);
        match &self.labels {
            LabelProposal::FromWeights => {
                for _ in 0..self.observations {
                    global.push(sample_categorical(&weights, rng) as f64);
                }
            }
            LabelProposal::PerPoint(probs) => {
                for p in probs {
                    global.push(sample_categorical(p, rng) as f64);
                }
            }
        }
        Ok(global)
    }

    fn global_log_density(&self, global: &[f64]) -> f64 {
        let k = self.blocks.len();
        if global.len() != k + self.observations {
            return f64::NEG_INFINITY;
        }
        let weights = &global[..k];
        let mut lq = self.weights.log_density(weights).unwrap_or(f64::NEG_INFINITY);
        for (i, &l) in global[k..].iter().enumerate() {
            let Some(z) = label_of(l, k) else {
                return f64::NEG_INFINITY;
            };
            lq += match &self.labels {
                LabelProposal::FromWeights => weights[z].ln(),
                LabelProposal::PerPoint(probs) => probs[i][z].ln(),
            };
        }
        lq
    }

    fn sample_block(&self, block: usize, rng: &mut RandomSource) -> Result<Vec<f64>> {
        sample_concat(&self.blocks[block], rng)
    }

    fn block_log_density(&self, block: usize, value: &[f64]) -> f64 {
        concat_log_density(&self.blocks[block], value)
    }
}

/// Markov kernels centered on a previous-generation sample.
///
/// Means move by a Gaussian (Gaussian family) or Student-t (t family)
/// random walk, variances by an inverse-Wishart and degrees of freedom by a
/// gamma whose mean is the current value, mixing weights by a Dirichlet
/// concentrated around the current weights. Labels are redrawn from the
/// label posterior under the center's parameters, smoothed towards uniform.
pub struct DmmKernel<'a> {
    model: &'a DirichletMixture,
    cfg: KernelConfig,
}

impl<'a> DmmKernel<'a> {
    pub fn new(model: &'a DirichletMixture, cfg: KernelConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(DmmKernel { model, cfg })
    }

    fn positive_kernels(&self, center: f64) -> Result<(DensitySpec, DensitySpec)> {
        let cv2 = self.cfg.positive_cv * self.cfg.positive_cv;
        // inverse-gamma with mean `center` and the configured coefficient of variation
        let iw_df = 2.0 * (2.0 + 1.0 / cv2);
        let iw = DensitySpec::scalar_inverse_wishart(center * (iw_df - 2.0), iw_df)?;
        let shape = 1.0 / cv2;
        let gamma = DensitySpec::gamma(shape, center / shape)?;
        Ok((iw, gamma))
    }
}

impl MarkovKernel for DmmKernel<'_> {
    type Proposal = DmmProposal;

    fn centered_on(&self, center: &[f64]) -> Result<DmmProposal> {
        let model = self.model;
        let layout = model.layout();
        let k = model.components();
        let global = layout.global(center);
        let weights = model.weights(global);
        let comps: Vec<&[f64]> = (0..k).map(|j| layout.block(center, j)).collect();

        let alpha = weights
            .iter()
            .map(|&w| 1.0 + self.cfg.simplex_concentration * w)
            .collect();
        let eps = self.cfg.label_smoothing;
        let probs = model
            .responsibilities(weights, &comps)
            .into_iter()
            .map(|r| r.into_iter().map(|p| (1.0 - eps) * p + eps / k as f64).collect())
            .collect();

        let blocks = comps
            .iter()
            .map(|c| match model.spec.family {
                ComponentFamily::Gaussian => Ok(vec![DensitySpec::diag_gaussian(
                    vec![c[0]],
                    vec![self.cfg.mean_scale * self.cfg.mean_scale],
                )?]),
                ComponentFamily::StudentT => {
                    let (variance_kernel, _) = self.positive_kernels(c[1])?;
                    let (_, df_kernel) = self.positive_kernels(c[2])?;
                    Ok(vec![
                        DensitySpec::student_t(c[0], self.cfg.mean_scale, self.cfg.mean_kernel_df)?,
                        variance_kernel,
                        df_kernel,
                    ])
                }
            })
            .collect::<Result<Vec<_>>>()?;

        Ok(DmmProposal {
            weights: DensitySpec::dirichlet(alpha)?,
            labels: LabelProposal::PerPoint(probs),
            observations: model.data.len(),
            blocks,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factorized::plain_factorized_sampler;

    fn ln_dir2(w: &[f64], a: &[f64]) -> f64 {
        ln_gamma(a[0] + a[1]) - ln_gamma(a[0]) - ln_gamma(a[1])
            + (a[0] - 1.0) * w[0].ln()
            + (a[1] - 1.0) * w[1].ln()
    }

    #[test]
    fn empty_component_has_zero_likelihood() {
        let model = dmm_model(DmmSpec::new(ComponentFamily::Gaussian), vec![0.3, -1.2, 2.0]).unwrap();
        let g = encode_global(&[0.6, 0.4], &[0, 0, 0]);
        for m in [-5.0, 0.0, 17.0] {
            assert_eq!(model.block_log_likelihood(1, &g, &[m]), 0.0);
        }
    }

    #[test]
    fn gaussian_joint_matches_monolithic_density() {
        let data = vec![0.3, -1.2, 2.0];
        let model = dmm_model(DmmSpec::new(ComponentFamily::Gaussian), data.clone()).unwrap();
        let w = [0.35, 0.65];
        let z = [1usize, 0, 1];
        let mu = [-0.8, 1.4];
        let mut point = encode_global(&w, &z);
        point.extend_from_slice(&mu);

        let ln_norm = |x: f64, m: f64, v: f64| {
            -0.5 * (2.0 * std::f64::consts::PI * v).ln() - (x - m) * (x - m) / (2.0 * v)
        };
        let mut direct = ln_dir2(&w, &[1.0, 1.0]);
        for (i, &x) in data.iter().enumerate() {
            direct += w[z[i]].ln() + ln_norm(x, mu[z[i]], 1.0);
        }
        direct += ln_norm(mu[0], 0.0, 1.0) + ln_norm(mu[1], 0.0, 1.0);
        assert!((model.log_density(&point) - direct).abs() < 1e-12);
    }

    #[test]
    fn t_joint_matches_monolithic_density() {
        let data = vec![0.3, -1.2, 2.0];
        let model = dmm_model(DmmSpec::new(ComponentFamily::StudentT), data.clone()).unwrap();
        let w = [0.5, 0.5];
        let z = [0usize, 0, 1];
        let params = [[0.1, 1.3, 4.0], [1.8, 0.7, 30.0]];
        let mut point = encode_global(&w, &z);
        point.extend_from_slice(&params[0]);
        point.extend_from_slice(&params[1]);

        let ln_t = |x: f64, m: f64, s: f64, v: f64| {
            ln_gamma((v + 1.0) / 2.0) - ln_gamma(v / 2.0)
                - 0.5 * (v * std::f64::consts::PI).ln()
                - s.ln()
                - (v + 1.0) / 2.0 * (1.0 + ((x - m) / s).powi(2) / v).ln()
        };
        let mut direct = ln_dir2(&w, &[1.0, 1.0]);
        for (i, &x) in data.iter().enumerate() {
            let p = params[z[i]];
            direct += w[z[i]].ln() + ln_t(x, p[0], p[1].sqrt(), p[2]);
        }
        for p in params {
            // cauchy mean prior, inverse-gamma(1/2, 5/2) variance prior, exp(1) df prior
            direct += -(std::f64::consts::PI * (1.0 + p[0] * p[0])).ln();
            direct += 0.5 * 2.5f64.ln() - ln_gamma(0.5) - 1.5 * p[1].ln() - 2.5 / p[1];
            direct += -p[2];
        }
        assert!((model.log_density(&point) - direct).abs() < 1e-12);
    }

    #[test]
    fn relabeling_leaves_joint_unchanged() {
        let data = vec![0.3, -1.2, 2.0, 0.9];
        let model = dmm_model(DmmSpec::new(ComponentFamily::StudentT), data).unwrap();
        let mut p = encode_global(&[0.3, 0.7], &[0, 1, 1, 0]);
        p.extend_from_slice(&[0.1, 1.3, 4.0, 1.8, 0.7, 30.0]);
        let mut q = encode_global(&[0.7, 0.3], &[1, 0, 0, 1]);
        q.extend_from_slice(&[1.8, 0.7, 30.0, 0.1, 1.3, 4.0]);
        assert!((model.log_density(&p) - model.log_density(&q)).abs() < 1e-12);
    }

    #[test]
    fn invalid_labels_have_zero_prior() {
        let model = dmm_model(DmmSpec::new(ComponentFamily::Gaussian), vec![0.0, 1.0]).unwrap();
        assert_eq!(model.global_log_prior(&encode_global(&[0.5, 0.5], &[0, 2])), f64::NEG_INFINITY);
        assert_eq!(model.global_log_prior(&[0.5, 0.5, 0.5, 1.0]), f64::NEG_INFINITY);
    }

    #[test]
    fn prior_proposal_on_data_free_model_gives_unit_weights() {
        let model = dmm_model(DmmSpec::new(ComponentFamily::StudentT), vec![]).unwrap();
        let prop = DmmProposal::prior(&model).unwrap();
        let (set, _) = plain_factorized_sampler(&model, &prop, 50, &mut RandomSource::new(2)).unwrap();
        for s in set.iter() {
            assert!(s.log_weight().abs() < 1e-10, "{}", s.log_weight());
        }
    }

    #[test]
    fn kernel_proposal_covers_its_draws() {
        let data = vec![-2.1, -1.7, 2.2, 1.9, 0.1];
        let model = dmm_model(DmmSpec::new(ComponentFamily::StudentT), data).unwrap();
        let kernel = DmmKernel::new(&model, KernelConfig::default()).unwrap();
        let mut center = encode_global(&[0.4, 0.6], &[0, 0, 1, 1, 0]);
        center.extend_from_slice(&[-2.0, 1.0, 5.0, 2.0, 0.8, 12.0]);
        let prop = kernel.centered_on(&center).unwrap();
        let mut rng = RandomSource::new(4);
        for _ in 0..100 {
            let g = prop.sample_global(&mut rng).unwrap();
            assert_eq!(g.len(), 7);
            assert!(prop.global_log_density(&g).is_finite());
            for j in 0..2 {
                let b = prop.sample_block(j, &mut rng).unwrap();
                assert!(b[1] > 0.0 && b[2] > 0.0);
                assert!(prop.block_log_density(j, &b).is_finite());
            }
        }
    }

    #[test]
    fn kernel_positive_parameters_are_centered() {
        let model = dmm_model(DmmSpec::new(ComponentFamily::StudentT), vec![0.0]).unwrap();
        let kernel = DmmKernel::new(&model, KernelConfig::default()).unwrap();
        let (iw, gamma) = kernel.positive_kernels(2.5).unwrap();
        let mut rng = RandomSource::new(12);
        let n = 200_000;
        let iw_mean = (0..n).map(|_| iw.sample(&mut rng).unwrap()[0]).sum::<f64>() / n as f64;
        let g_mean = (0..n).map(|_| gamma.sample(&mut rng).unwrap()[0]).sum::<f64>() / n as f64;
        assert!((iw_mean - 2.5).abs() < 0.02, "{iw_mean}");
        assert!((g_mean - 2.5).abs() < 0.02, "{g_mean}");
    }
}
