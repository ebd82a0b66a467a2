//! Samplers and log-density evaluators for the distributions used by the
//! samplers and experiments, plus a seedable random source.
//!
//! Densities are always evaluated in log space. Student-t, gamma and
//! inverse-gamma use `statrs`' log-gamma; everything else is closed form.

use std::f64::consts::PI;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal, StudentT};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Deterministic random stream with seed splitting.
///
/// Child sources are derived from the seed and a key path, never from the
/// current stream position, so a child is the same no matter how much of the
/// parent has been consumed.
#[derive(Debug, Clone)]
pub struct RandomSource {
    seed: u64,
    rng: ChaCha8Rng,
}

impl RandomSource {
    pub fn new(seed: u64) -> Self {
        RandomSource {
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Derives an independent source for a key path such as
    /// `(replication, generation, draw)`.
    pub fn derive(&self, path: &[u64]) -> RandomSource {
        let mut state = splitmix64(self.seed ^ 0x5851_f42d_4c95_7f2d);
        for (depth, &key) in path.iter().enumerate() {
            state = splitmix64(state ^ splitmix64(key.wrapping_add(depth as u64 + 1)));
        }
        RandomSource::new(state)
    }

    /// Uniform draw on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform index in `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }
}

impl RngCore for RandomSource {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A parametric distribution.
///
/// Categorical draws are returned as a one-element vector holding the
/// zero-based category index.
#[derive(Debug, Clone, PartialEq)]
pub enum DensitySpec {
    /// Independent normals; `var` holds per-coordinate variances.
    DiagGaussian { mean: Vec<f64>, var: Vec<f64> },
    /// Univariate location-scale Student-t.
    StudentT { loc: f64, scale: f64, df: f64 },
    /// Independent Student-t per coordinate with a shared `df`.
    ProductStudentT { loc: Vec<f64>, scale: Vec<f64>, df: f64 },
    Dirichlet { alpha: Vec<f64> },
    Categorical { probs: Vec<f64> },
    /// Shape-scale parametrization.
    Gamma { shape: f64, scale: f64 },
    /// Inverse-Wishart on a 1x1 matrix, i.e. inverse-gamma with shape
    /// `df / 2` and scale `sigma2 / 2`.
    ScalarInverseWishart { sigma2: f64, df: f64 },
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::ParameterDomain(format!("{name} must be positive and finite, got {v}")))
    }
}

fn finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::ParameterDomain(format!("{name} must be finite, got {v}")))
    }
}

fn same_len(a: usize, b: usize) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected: a, got: b })
    }
}

impl DensitySpec {
    pub fn diag_gaussian(mean: Vec<f64>, var: Vec<f64>) -> Result<Self> {
        let spec = DensitySpec::DiagGaussian { mean, var };
        spec.validate()?;
        Ok(spec)
    }

    pub fn student_t(loc: f64, scale: f64, df: f64) -> Result<Self> {
        let spec = DensitySpec::StudentT { loc, scale, df };
        spec.validate()?;
        Ok(spec)
    }

    pub fn product_student_t(loc: Vec<f64>, scale: Vec<f64>, df: f64) -> Result<Self> {
        let spec = DensitySpec::ProductStudentT { loc, scale, df };
        spec.validate()?;
        Ok(spec)
    }

    pub fn dirichlet(alpha: Vec<f64>) -> Result<Self> {
        let spec = DensitySpec::Dirichlet { alpha };
        spec.validate()?;
        Ok(spec)
    }

    pub fn categorical(probs: Vec<f64>) -> Result<Self> {
        let spec = DensitySpec::Categorical { probs };
        spec.validate()?;
        Ok(spec)
    }

    pub fn gamma(shape: f64, scale: f64) -> Result<Self> {
        let spec = DensitySpec::Gamma { shape, scale };
        spec.validate()?;
        Ok(spec)
    }

    pub fn scalar_inverse_wishart(sigma2: f64, df: f64) -> Result<Self> {
        let spec = DensitySpec::ScalarInverseWishart { sigma2, df };
        spec.validate()?;
        Ok(spec)
    }

    /// Dimension of a draw.
    pub fn dim(&self) -> usize {
        match self {
            DensitySpec::DiagGaussian { mean, .. } => mean.len(),
            DensitySpec::ProductStudentT { loc, .. } => loc.len(),
            DensitySpec::Dirichlet { alpha } => alpha.len(),
            DensitySpec::StudentT { .. }
            | DensitySpec::Categorical { .. }
            | DensitySpec::Gamma { .. }
            | DensitySpec::ScalarInverseWishart { .. } => 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            DensitySpec::DiagGaussian { mean, var } => {
                same_len(mean.len(), var.len())?;
                mean.iter().try_for_each(|&m| finite("mean", m))?;
                var.iter().try_for_each(|&v| positive("variance", v))
            }
            DensitySpec::StudentT { loc, scale, df } => {
                finite("loc", *loc)?;
                positive("scale", *scale)?;
                positive("df", *df)
            }
            DensitySpec::ProductStudentT { loc, scale, df } => {
                same_len(loc.len(), scale.len())?;
                loc.iter().try_for_each(|&m| finite("loc", m))?;
                scale.iter().try_for_each(|&s| positive("scale", s))?;
                positive("df", *df)
            }
            DensitySpec::Dirichlet { alpha } => {
                if alpha.len() < 2 {
                    return Err(Error::ParameterDomain(
                        "dirichlet needs at least two components".into(),
                    ));
                }
                alpha.iter().try_for_each(|&a| positive("concentration", a))
            }
            DensitySpec::Categorical { probs } => {
                if probs.is_empty() {
                    return Err(Error::ParameterDomain("categorical needs a category".into()));
                }
                if probs.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
                    return Err(Error::ParameterDomain(
                        "categorical probabilities must be nonnegative".into(),
                    ));
                }
                let total: f64 = probs.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::ParameterDomain(format!(
                        "categorical probabilities sum to {total}, not 1"
                    )));
                }
                Ok(())
            }
            DensitySpec::Gamma { shape, scale } => {
                positive("shape", *shape)?;
                positive("scale", *scale)
            }
            DensitySpec::ScalarInverseWishart { sigma2, df } => {
                positive("sigma2", *sigma2)?;
                positive("df", *df)
            }
        }
    }

    pub fn sample(&self, rng: &mut RandomSource) -> Result<Vec<f64>> {
        self.validate()?;
        let draw = match self {
            DensitySpec::DiagGaussian { mean, var } => mean
                .iter()
                .zip(var)
                .map(|(&m, &v)| m + v.sqrt() * rng.standard_normal())
                .collect(),
            DensitySpec::StudentT { loc, scale, df } => {
                vec![loc + scale * standard_t(*df, rng)?]
            }
            DensitySpec::ProductStudentT { loc, scale, df } => {
                let mut out = Vec::with_capacity(loc.len());
                for (&m, &s) in loc.iter().zip(scale) {
                    out.push(m + s * standard_t(*df, rng)?);
                }
                out
            }
            DensitySpec::Dirichlet { alpha } => sample_dirichlet(alpha, rng)?,
            DensitySpec::Categorical { probs } => vec![sample_categorical(probs, rng) as f64],
            DensitySpec::Gamma { shape, scale } => vec![sample_gamma(*shape, *scale, rng)?],
            DensitySpec::ScalarInverseWishart { sigma2, df } => {
                let g = sample_gamma(df / 2.0, 2.0 / sigma2, rng)?;
                vec![1.0 / g]
            }
        };
        Ok(draw)
    }

    /// Natural-log density at `x`; `-inf` outside the support.
    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        self.validate()?;
        same_len(self.dim(), x.len())?;
        let lp = match self {
            DensitySpec::DiagGaussian { mean, var } => x
                .iter()
                .zip(mean.iter().zip(var))
                .map(|(&xi, (&m, &v))| normal_ln_pdf(xi, m, v))
                .sum(),
            DensitySpec::StudentT { loc, scale, df } => student_t_ln_pdf(x[0], *loc, *scale, *df),
            DensitySpec::ProductStudentT { loc, scale, df } => x
                .iter()
                .zip(loc.iter().zip(scale))
                .map(|(&xi, (&m, &s))| student_t_ln_pdf(xi, m, s, *df))
                .sum(),
            DensitySpec::Dirichlet { alpha } => dirichlet_ln_pdf(x, alpha),
            DensitySpec::Categorical { probs } => {
                let k = x[0];
                if k >= 0.0 && k.fract() == 0.0 && (k as usize) < probs.len() {
                    probs[k as usize].ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
            DensitySpec::Gamma { shape, scale } => gamma_ln_pdf(x[0], *shape, *scale),
            DensitySpec::ScalarInverseWishart { sigma2, df } => {
                inverse_gamma_ln_pdf(x[0], df / 2.0, sigma2 / 2.0)
            }
        };
        Ok(lp)
    }
}

fn standard_t(df: f64, rng: &mut RandomSource) -> Result<f64> {
    let t = StudentT::new(df).map_err(|e| Error::ParameterDomain(e.to_string()))?;
    Ok(t.sample(rng))
}

fn sample_gamma(shape: f64, scale: f64, rng: &mut RandomSource) -> Result<f64> {
    let g = Gamma::new(shape, scale).map_err(|e| Error::ParameterDomain(e.to_string()))?;
    Ok(g.sample(rng))
}

/// Log of a Gamma(shape, 1) draw. Uses the `U^(1/a)` boost for small shapes
/// so that draws which would underflow in linear space keep their ordering.
fn sample_log_gamma(shape: f64, rng: &mut RandomSource) -> Result<f64> {
    if shape >= 1.0 {
        Ok(sample_gamma(shape, 1.0, rng)?.ln())
    } else {
        let g = sample_gamma(shape + 1.0, 1.0, rng)?;
        let u: f64 = 1.0 - rng.uniform();
        Ok(g.ln() + u.ln() / shape)
    }
}

fn sample_dirichlet(alpha: &[f64], rng: &mut RandomSource) -> Result<Vec<f64>> {
    let logs = alpha
        .iter()
        .map(|&a| sample_log_gamma(a, rng))
        .collect::<Result<Vec<_>>>()?;
    let total = log_sum_exp(&logs);
    let mut x: Vec<f64> = logs.iter().map(|&l| (l - total).exp()).collect();
    // the last component absorbs rounding so the draw sums to one exactly
    let last = x.len() - 1;
    let head: f64 = x[..last].iter().sum();
    x[last] = (1.0 - head).max(0.0);
    Ok(x)
}

pub(crate) fn sample_categorical(probs: &[f64], rng: &mut RandomSource) -> usize {
    let u = rng.uniform();
    let mut cum = 0.0;
    let mut last_positive = 0;
    for (k, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            cum += p;
            last_positive = k;
            if u < cum {
                return k;
            }
        }
    }
    last_positive
}

/// Stable `log(sum(exp(xs)))`; `-inf` for an empty slice.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|&x| (x - m).exp()).sum::<f64>().ln()
}

/// `log(exp(a) + exp(b))`.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

pub fn normal_ln_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * (2.0 * PI * var).ln() - d * d / (2.0 * var)
}

pub fn student_t_ln_pdf(x: f64, loc: f64, scale: f64, df: f64) -> f64 {
    let z = (x - loc) / scale;
    ln_gamma((df + 1.0) / 2.0)
        - ln_gamma(df / 2.0)
        - 0.5 * (df * PI).ln()
        - scale.ln()
        - (df + 1.0) / 2.0 * (z * z / df).ln_1p()
}

pub fn gamma_ln_pdf(x: f64, shape: f64, scale: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    (shape - 1.0) * x.ln() - x / scale - ln_gamma(shape) - shape * scale.ln()
}

pub fn inverse_gamma_ln_pdf(x: f64, shape: f64, scale: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    shape * scale.ln() - ln_gamma(shape) - (shape + 1.0) * x.ln() - scale / x
}

pub fn dirichlet_ln_pdf(x: &[f64], alpha: &[f64]) -> f64 {
    if x.iter().any(|&v| !(v > 0.0)) || (x.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return f64::NEG_INFINITY;
    }
    let norm = ln_gamma(alpha.iter().sum()) - alpha.iter().map(|&a| ln_gamma(a)).sum::<f64>();
    norm + x
        .iter()
        .zip(alpha)
        .map(|(&xi, &a)| (a - 1.0) * xi.ln())
        .sum::<f64>()
}
