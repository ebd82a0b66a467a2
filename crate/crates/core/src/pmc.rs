//! Population Monte Carlo with optional sample inflation.
//!
//! Generation 1 samples from an initial proposal. Every later draw picks a
//! center uniformly from the previous generation's resampled population and
//! proposes from a Markov kernel centered there; its weight uses that
//! draw's own proposal density. Each generation is resampled back to the
//! population size with multinomial resampling.

use crate::distributions::RandomSource;
use crate::error::{Error, Result};
use crate::estimators::{resample, Estimate, SampleSet, TestFunction, WeightedSample, WeightedSums};
use crate::factorized::{
    inflate_draw, plain_factorized_with, Emitted, EvalCounter, FactorizedModel, FactorizedProposal,
    InflationConfig,
};

/// Builds a proposal centered on a previous-generation sample.
pub trait MarkovKernel {
    type Proposal: FactorizedProposal;

    fn centered_on(&self, center: &[f64]) -> Result<Self::Proposal>;
}

/// Kernel bandwidths.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct KernelConfig {
    /// Scale of random-walk kernels on unconstrained location parameters.
    pub mean_scale: f64,
    /// Degrees of freedom when the location kernel is Student-t.
    pub mean_kernel_df: f64,
    /// Coefficient of variation of kernels on positive parameters.
    pub positive_cv: f64,
    /// Dirichlet kernel concentration around the current simplex point.
    pub simplex_concentration: f64,
    /// Weight of the uniform component mixed into label proposals.
    pub label_smoothing: f64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig {
            mean_scale: 0.25,
            mean_kernel_df: 5.0,
            positive_cv: 0.3,
            simplex_concentration: 50.0,
            label_smoothing: 0.05,
        }
    }
}

impl KernelConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("mean_scale", self.mean_scale),
            ("mean_kernel_df", self.mean_kernel_df),
            ("positive_cv", self.positive_cv),
            ("simplex_concentration", self.simplex_concentration),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.label_smoothing > 0.0 && self.label_smoothing <= 1.0) {
            return Err(Error::Config(format!(
                "label_smoothing must be in (0, 1], got {}",
                self.label_smoothing
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PmcConfig {
    pub population_size: usize,
    pub generations: usize,
    pub kernel: KernelConfig,
    /// Block draws per outer draw when inflating; `None` runs plain PMC.
    pub inflation: Option<usize>,
}

impl PmcConfig {
    pub fn new(population_size: usize, generations: usize) -> Self {
        PmcConfig {
            population_size,
            generations,
            kernel: KernelConfig::default(),
            inflation: None,
        }
    }

    pub fn inflated(mut self, inner_draws: usize) -> Self {
        self.inflation = Some(inner_draws);
        self
    }

    /// Outer draws per generation. Inflated runs draw `p / M` outer samples
    /// so both variants spend `p · K` block likelihood evaluations.
    pub fn outer_draws(&self) -> Result<usize> {
        if self.population_size == 0 || self.generations == 0 {
            return Err(Error::Config("population size and generations must be at least 1".into()));
        }
        self.kernel.validate()?;
        match self.inflation {
            None => Ok(self.population_size),
            Some(0) => Err(Error::Config("inflation needs at least one inner draw".into())),
            Some(m) if self.population_size % m != 0 => Err(Error::Config(format!(
                "population size {} is not divisible by inflation factor {m}",
                self.population_size
            ))),
            Some(m) => Ok(self.population_size / m),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Generation {
    /// One-based generation index.
    pub index: usize,
    pub sample_set: SampleSet,
    pub resampled_points: Vec<Vec<f64>>,
    /// Self-normalized estimate of the test function.
    pub estimate: Estimate,
    /// Largest data log likelihood among the generation's samples.
    pub best_log_likelihood: f64,
    pub evals: EvalCounter,
}

struct Collector<'h, H: ?Sized> {
    samples: Vec<WeightedSample>,
    sums: WeightedSums,
    best: f64,
    h: &'h H,
}

impl<'h, H: TestFunction + ?Sized> Collector<'h, H> {
    fn new(h: &'h H) -> Self {
        Collector {
            samples: Vec::new(),
            sums: WeightedSums::new(h.dim()),
            best: f64::NEG_INFINITY,
            h,
        }
    }

    fn accept(&mut self, e: Emitted<'_>) -> Result<()> {
        self.samples.push(WeightedSample::new(e.point.to_vec(), e.log_weight)?);
        self.sums.push(e.point, e.log_weight, self.h);
        if e.log_likelihood > self.best {
            self.best = e.log_likelihood;
        }
        Ok(())
    }
}

fn draw_one<M, P, H>(
    model: &M,
    prop: &P,
    inflation: Option<usize>,
    rng: &mut RandomSource,
    sink: &mut Collector<'_, H>,
) -> Result<EvalCounter>
where
    M: FactorizedModel + ?Sized,
    P: FactorizedProposal + ?Sized,
    H: TestFunction + ?Sized,
{
    match inflation {
        None => plain_factorized_with(model, prop, 1, rng, |e| sink.accept(e)),
        Some(m) => {
            let per_draw = InflationConfig::new(1, m).combinations_per_draw(model.num_blocks())?;
            inflate_draw(model, prop, m, per_draw, rng, &mut |e| sink.accept(e))
        }
    }
}

fn finish<H: TestFunction + ?Sized>(
    index: usize,
    collector: Collector<'_, H>,
    evals: EvalCounter,
    population: usize,
    rng: &mut RandomSource,
) -> Result<Generation> {
    let at = |source: Error| Error::Generation {
        generation: index,
        source: Box::new(source),
    };
    let estimate = collector.sums.self_normalized().map_err(at)?;
    let sample_set = SampleSet::new(collector.samples);
    let resampled_points = resample(&sample_set, population, rng).map_err(at)?;
    Ok(Generation {
        index,
        sample_set,
        resampled_points,
        estimate,
        best_log_likelihood: collector.best,
        evals,
    })
}

/// Runs `cfg.generations` generations of population Monte Carlo.
pub fn run_pmc<M, P, K, H>(
    model: &M,
    init: &P,
    kernel: &K,
    h: &H,
    cfg: &PmcConfig,
    rng: &mut RandomSource,
) -> Result<Vec<Generation>>
where
    M: FactorizedModel + ?Sized,
    P: FactorizedProposal + ?Sized,
    K: MarkovKernel,
    H: TestFunction + ?Sized,
{
    let outer = cfg.outer_draws()?;
    let p = cfg.population_size;
    let mut generations: Vec<Generation> = Vec::with_capacity(cfg.generations);

    let mut collector = Collector::new(h);
    let evals = match cfg.inflation {
        None => plain_factorized_with(model, init, outer, rng, |e| collector.accept(e))?,
        Some(m) => crate::factorized::inflate_with(
            model,
            init,
            InflationConfig::new(outer, m),
            rng,
            |e| collector.accept(e),
        )?,
    };
    generations.push(finish(1, collector, evals, p, rng)?);

    for index in 2..=cfg.generations {
        let previous = &generations.last().expect("generation 1 exists").resampled_points;
        let mut collector = Collector::new(h);
        let mut evals = EvalCounter::default();
        for _ in 0..outer {
            let center = &previous[rng.index(previous.len())];
            let prop = kernel.centered_on(center).map_err(|e| Error::Generation {
                generation: index,
                source: Box::new(e),
            })?;
            evals += draw_one(model, &prop, cfg.inflation, rng, &mut collector)?;
        }
        generations.push(finish(index, collector, evals, p, rng)?);
    }
    Ok(generations)
}

/// Per-generation diagnostics of a PMC run.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TracePoint {
    pub generation: usize,
    pub best_log_likelihood: f64,
    /// Euclidean distance between the generation estimate and the truth.
    pub estimate_error: f64,
    pub estimate: Vec<f64>,
    /// Variance of the finite log weights, a proxy for weight degeneracy.
    pub log_weight_variance: f64,
    pub samples: usize,
    pub block_evals: u64,
}

pub fn trace_metrics(generations: &[Generation], truth: &[f64]) -> Vec<TracePoint> {
    generations
        .iter()
        .map(|g| {
            let err = g
                .estimate
                .value
                .iter()
                .zip(truth)
                .map(|(e, t)| (e - t) * (e - t))
                .sum::<f64>()
                .sqrt();
            let finite: Vec<f64> = g
                .sample_set
                .iter()
                .map(WeightedSample::log_weight)
                .filter(|l| l.is_finite())
                .collect();
            let n = finite.len().max(1) as f64;
            let mean = finite.iter().sum::<f64>() / n;
            let var = finite.iter().map(|l| (l - mean) * (l - mean)).sum::<f64>() / n;
            TracePoint {
                generation: g.index,
                best_log_likelihood: g.best_log_likelihood,
                estimate_error: err,
                estimate: g.estimate.value.clone(),
                log_weight_variance: var,
                samples: g.sample_set.len(),
                block_evals: g.evals.block_likelihood_evals,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::{log_sum_exp, normal_ln_pdf, DensitySpec};
    use crate::estimators::{self_normalized_estimate, Identity};
    use crate::factorized::{inflate, plain_factorized_sampler, ProductProposal};

    /// One-block model with target density carried by the likelihood.
    struct OneBlock<F: Fn(f64) -> f64 + Sync>(F);

    impl<F: Fn(f64) -> f64 + Sync> FactorizedModel for OneBlock<F> {
        fn num_blocks(&self) -> usize {
            1
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
        fn block_log_likelihood(&self, _: usize, _: &[f64], v: &[f64]) -> f64 {
            (self.0)(v[0])
        }
    }

    struct GaussianWalk(f64);

    impl MarkovKernel for GaussianWalk {
        type Proposal = ProductProposal;
        fn centered_on(&self, c: &[f64]) -> Result<ProductProposal> {
            Ok(ProductProposal::new(
                None,
                vec![DensitySpec::diag_gaussian(c.to_vec(), vec![self.0 * self.0])?],
            ))
        }
    }

    struct Fixed(ProductProposal);

    impl MarkovKernel for Fixed {
        type Proposal = ProductProposal;
        fn centered_on(&self, _: &[f64]) -> Result<ProductProposal> {
            Ok(self.0.clone())
        }
    }

    fn wide() -> ProductProposal {
        ProductProposal::new(None, vec![DensitySpec::student_t(0.0, 5.0, 3.0).unwrap()])
    }

    #[test]
    fn single_generation_is_importance_sampling() {
        let model = OneBlock(|x| normal_ln_pdf(x, 1.0, 0.5));
        let init = wide();
        let cfg = PmcConfig::new(300, 1);
        let gens = run_pmc(&model, &init, &GaussianWalk(0.3), &Identity(1), &cfg, &mut RandomSource::new(3)).unwrap();
        let (direct, _) = plain_factorized_sampler(&model, &init, 300, &mut RandomSource::new(3)).unwrap();
        let expect = self_normalized_estimate(&direct, &Identity(1)).unwrap().value[0];
        assert_eq!(gens.len(), 1);
        assert!((gens[0].estimate.value[0] - expect).abs() < 1e-12);
        assert_eq!(gens[0].resampled_points.len(), 300);

        let cfg = PmcConfig::new(300, 1).inflated(3);
        let gens = run_pmc(&model, &init, &GaussianWalk(0.3), &Identity(1), &cfg, &mut RandomSource::new(3)).unwrap();
        let (direct, _) = inflate(&model, &init, InflationConfig::new(100, 3), &mut RandomSource::new(3)).unwrap();
        let expect = self_normalized_estimate(&direct, &Identity(1)).unwrap().value[0];
        assert!((gens[0].estimate.value[0] - expect).abs() < 1e-12);
    }

    #[test]
    fn target_equal_to_proposal_gives_flat_weights() {
        let prop = ProductProposal::new(None, vec![DensitySpec::diag_gaussian(vec![0.5], vec![2.0]).unwrap()]);
        let model = OneBlock(|x| normal_ln_pdf(x, 0.5, 2.0));
        let cfg = PmcConfig::new(100, 4);
        let gens = run_pmc(&model, &prop, &Fixed(prop.clone()), &Identity(1), &cfg, &mut RandomSource::new(1)).unwrap();
        for g in &gens {
            assert!(g.sample_set.iter().all(|s| s.log_weight().abs() < 1e-12));
            let plain_mean = g.sample_set.iter().map(|s| s.point[0]).sum::<f64>() / 100.0;
            assert!((g.estimate.value[0] - plain_mean).abs() < 1e-12);
        }
    }

    #[test]
    fn identical_seeds_identical_traces() {
        let model = OneBlock(|x| normal_ln_pdf(x, -2.0, 1.0));
        let cfg = PmcConfig::new(60, 5).inflated(2);
        let run = || {
            run_pmc(&model, &wide(), &GaussianWalk(0.5), &Identity(1), &cfg, &mut RandomSource::new(21))
                .unwrap()
                .iter()
                .map(|g| (g.estimate.value.clone(), g.sample_set.log_weights(), g.resampled_points.clone()))
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn inflated_generations_keep_eval_parity() {
        let model = OneBlock(|x| normal_ln_pdf(x, 0.0, 1.0));
        let plain = run_pmc(&model, &wide(), &GaussianWalk(0.5), &Identity(1), &PmcConfig::new(40, 3), &mut RandomSource::new(5)).unwrap();
        let infl = run_pmc(&model, &wide(), &GaussianWalk(0.5), &Identity(1), &PmcConfig::new(40, 3).inflated(4), &mut RandomSource::new(5)).unwrap();
        for (a, b) in plain.iter().zip(&infl) {
            assert_eq!(a.evals.block_likelihood_evals, 40);
            assert_eq!(b.evals.block_likelihood_evals, 40);
            assert_eq!(b.resampled_points.len(), 40);
        }
        assert!(PmcConfig::new(40, 3).inflated(3).outer_draws().is_err());
    }

    #[test]
    fn degenerate_generation_reports_index() {
        // target with support the proposal never reaches after generation 1
        let model = OneBlock(|x| if x < 0.0 { 0.0 } else { f64::NEG_INFINITY });
        let init = ProductProposal::new(None, vec![DensitySpec::gamma(2.0, 1.0).unwrap()]);
        let err = run_pmc(&model, &init, &GaussianWalk(0.1), &Identity(1), &PmcConfig::new(10, 3), &mut RandomSource::new(0))
            .unwrap_err();
        assert!(matches!(err, Error::Generation { generation: 1, .. }), "{err}");
    }

    #[test]
    fn bimodal_target_mean() {
        // 0.3 N(-1, 0.1) + 0.7 N(1, 0.1)
        let log_f = |x: f64| {
            log_sum_exp(&[0.3f64.ln() + normal_ln_pdf(x, -1.0, 0.1), 0.7f64.ln() + normal_ln_pdf(x, 1.0, 0.1)])
        };
        // midpoint quadrature for the true mean
        let n = 200_000;
        let (lo, hi) = (-30.0, 30.0);
        let h = (hi - lo) / n as f64;
        let truth: f64 = (0..n)
            .map(|i| {
                let x = lo + (i as f64 + 0.5) * h;
                x * log_f(x).exp() * h
            })
            .sum();
        assert!((truth - 0.4).abs() < 1e-6);

        let model = OneBlock(log_f);
        let mut hits = 0;
        for seed in 0..50 {
            // a kernel wider than either mode keeps the weights bounded
            let gens = run_pmc(&model, &wide(), &GaussianWalk(1.5), &Identity(1), &PmcConfig::new(200, 10), &mut RandomSource::new(seed)).unwrap();
            let last = gens.last().unwrap().estimate.value[0];
            if (last - truth).abs() < 0.2 {
                hits += 1;
            }
        }
        assert!(hits >= 45, "{hits}/50");
    }

    #[test]
    fn resampling_preserves_weighted_mean() {
        let model = OneBlock(|x| normal_ln_pdf(x, 1.0, 0.3));
        let (set, _) = plain_factorized_sampler(&model, &wide(), 50, &mut RandomSource::new(17)).unwrap();
        let target = self_normalized_estimate(&set, &Identity(1)).unwrap().value[0];
        let mut rng = RandomSource::new(18);
        let reps = 10_000;
        let means: Vec<f64> = (0..reps)
            .map(|_| {
                let pts = resample(&set, 50, &mut rng).unwrap();
                pts.iter().map(|p| p[0]).sum::<f64>() / 50.0
            })
            .collect();
        let m = means.iter().sum::<f64>() / reps as f64;
        let sd = (means.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (reps as f64 - 1.0)).sqrt();
        assert!((m - target).abs() < 3.0 * sd / (reps as f64).sqrt());
    }

    #[test]
    fn trace_shapes() {
        let model = OneBlock(|x| normal_ln_pdf(x, 0.0, 1.0));
        let gens = run_pmc(&model, &wide(), &GaussianWalk(0.5), &Identity(1), &PmcConfig::new(30, 1), &mut RandomSource::new(2)).unwrap();
        let t = trace_metrics(&gens, &[0.0]);
        assert_eq!(t.len(), 1);
        let doubled = vec![gens[0].clone(), gens[0].clone()];
        let t = trace_metrics(&doubled, &[0.0]);
        assert_eq!(t[0].best_log_likelihood, t[1].best_log_likelihood);
        assert_eq!(t[0].estimate_error, t[1].estimate_error);
        assert_eq!(t[0].log_weight_variance, t[1].log_weight_variance);
    }
}
