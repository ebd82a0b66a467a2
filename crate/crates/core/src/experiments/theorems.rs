//! Randomized property suite for the decomposition identity, the convex
//! error bound and the inflation cache.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::{DensitySpec, RandomSource};
use crate::error::Result;
use crate::estimators::{
    convex_error_bound, decomposition_residual, EstimateKind, Identity, Norm, SampleSet, WeightedSample,
};
use crate::experiments::config::{ExperimentConfig, TheoremConfig};
use crate::experiments::{in_pool, THEOREM_STREAM};
use crate::factorized::{inflate, FactorizedModel, InflationConfig, ProductProposal};

pub const DECOMPOSITION_TOLERANCE: f64 = 1e-10;
pub const ADVERSARIAL_TOLERANCE: f64 = 1e-8;
pub const BOUND_SLACK: f64 = 1e-12;
pub const CACHE_TOLERANCE: f64 = 1e-12;

const KINDS: [EstimateKind; 2] = [EstimateKind::Standard, EstimateKind::SelfNormalized];

/// A weighted sample set split into parts, plus a reference value for the
/// error bound.
#[derive(Debug, Clone)]
pub struct PartitionInstance {
    pub parts: Vec<SampleSet>,
    pub reference: Vec<f64>,
}

impl PartitionInstance {
    pub fn dim(&self) -> usize {
        self.reference.len()
    }

    pub fn len(&self) -> usize {
        self.parts.iter().map(SampleSet::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn random_sizes(n: usize, k: usize, rng: &mut RandomSource) -> Vec<usize> {
    let mut sizes = vec![1; k];
    for _ in k..n {
        sizes[rng.index(k)] += 1;
    }
    sizes
}

fn random_points(n: usize, dim: usize, rng: &mut RandomSource) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..dim).map(|_| 3.0 * rng.standard_normal()).collect())
        .collect()
}

/// Between 1 and `max_size` samples in up to 10 parts. The largest
/// possible log weight is 0; the spread below it is drawn up to `max_span`.
pub fn random_instance(max_size: usize, max_span: f64, rng: &mut RandomSource) -> Result<PartitionInstance> {
    let n = 1 + rng.index(max_size);
    let k = 1 + rng.index(n.min(10));
    random_instance_with(n, k, max_span, rng)
}

/// `n` samples in exactly `k` non-empty parts.
pub fn random_instance_with(n: usize, k: usize, max_span: f64, rng: &mut RandomSource) -> Result<PartitionInstance> {
    let dim = 1 + rng.index(3);
    let span = rng.uniform() * max_span;
    let points = random_points(n, dim, rng);
    let log_weights = (0..n).map(|_| -span * rng.uniform()).collect();
    let set = SampleSet::from_parts(points, log_weights)?;
    let parts = set.partition(&random_sizes(n, k, rng))?;
    let reference = (0..dim).map(|_| rng.standard_normal()).collect();
    Ok(PartitionInstance { parts, reference })
}

/// Parts whose weight levels sit `max_span / (k - 1)` log units apart, so
/// the mixing coefficients range over the full span. With `dead_part`, the
/// last part has only zero weights.
pub fn adversarial_instance(k: usize, per_part: usize, max_span: f64, dead_part: bool, rng: &mut RandomSource) -> Result<PartitionInstance> {
    let dim = 2;
    let parts = (0..k)
        .map(|i| {
            let level = if k == 1 { 0.0 } else { -max_span * i as f64 / (k - 1) as f64 };
            random_points(per_part, dim, rng)
                .into_iter()
                .map(|p| {
                    let lw = if dead_part && i == k - 1 {
                        f64::NEG_INFINITY
                    } else {
                        level - rng.uniform()
                    };
                    WeightedSample::new(p, lw)
                })
                .collect::<Result<SampleSet>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PartitionInstance {
        parts,
        reference: vec![0.0; dim],
    })
}

/// Outcome of one property over its instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub instances: usize,
    /// Largest observed residual or bound excess.
    pub max_residual: f64,
    pub tolerance: f64,
    pub violations: usize,
    pub passed: bool,
}

impl CheckOutcome {
    fn new(name: impl Into<String>, tolerance: f64) -> Self {
        CheckOutcome {
            name: name.into(),
            instances: 0,
            max_residual: 0.0,
            tolerance,
            violations: 0,
            passed: true,
        }
    }

    fn record(&mut self, residual: f64, violated: bool) {
        self.instances += 1;
        // NaN residuals count as violations and poison the maximum
        if residual.is_nan() || residual > self.max_residual {
            self.max_residual = residual;
        }
        if violated || residual.is_nan() {
            self.violations += 1;
            self.passed = false;
        }
    }

    fn residual(&mut self, residual: f64) {
        self.record(residual, !(residual <= self.tolerance));
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremReport {
    pub seed: u64,
    pub checks: Vec<CheckOutcome>,
    pub passed: bool,
    pub seconds: f64,
}

impl TheoremReport {
    pub fn check(&self, name: &str) -> Option<&CheckOutcome> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn kind_name(kind: EstimateKind) -> &'static str {
    match kind {
        EstimateKind::Standard => "standard",
        EstimateKind::SelfNormalized => "self-normalized",
        EstimateKind::Evidence => "evidence",
    }
}

fn norm_name(norm: Norm) -> &'static str {
    match norm {
        Norm::L1 => "l1",
        Norm::L2 => "l2",
        Norm::LInf => "linf",
    }
}

/// Decomposition residuals per kind, then bound excesses
/// `rhs - lhs` per (kind, norm), with a flag for a negative right side.
struct InstanceResult {
    residuals: Vec<f64>,
    bounds: Vec<(f64, bool)>,
}

fn evaluate(inst: &PartitionInstance) -> Result<InstanceResult> {
    let h = Identity(inst.dim());
    let mut residuals = Vec::new();
    let mut bounds = Vec::new();
    for kind in KINDS {
        residuals.push(decomposition_residual(&inst.parts, &h, kind)?);
        for norm in Norm::ALL {
            let (lhs, rhs) = convex_error_bound(&inst.parts, &h, kind, &inst.reference, norm)?;
            bounds.push((rhs - lhs, rhs < 0.0));
        }
    }
    Ok(InstanceResult { residuals, bounds })
}

/// Small factorized model with Gaussian priors and a Gaussian likelihood
/// whose mean is the sum of the global and block coordinates, plus an
/// independent monolithic evaluator.
#[derive(Debug, Clone)]
pub struct RandomFactorized {
    pub global_dim: usize,
    pub block_dims: Vec<usize>,
    pub data: Vec<Vec<f64>>,
    pub offset: f64,
}

const GLOBAL_PRIOR_VAR: f64 = 1.0;
const BLOCK_PRIOR_VAR: f64 = 4.0;

fn gauss(x: f64, m: f64, v: f64) -> f64 {
    -0.5 * ((x - m) * (x - m) / v + (std::f64::consts::TAU * v).ln())
}

impl FactorizedModel for RandomFactorized {
    fn num_blocks(&self) -> usize {
        self.block_dims.len()
    }
    fn global_dim(&self) -> usize {
        self.global_dim
    }
    fn block_dim(&self, block: usize) -> usize {
        self.block_dims[block]
    }
    fn global_log_prior(&self, global: &[f64]) -> f64 {
        global.iter().map(|&g| gauss(g, 0.0, GLOBAL_PRIOR_VAR)).sum()
    }
    fn block_log_prior(&self, _: usize, value: &[f64]) -> f64 {
        value.iter().map(|&v| gauss(v, 0.0, BLOCK_PRIOR_VAR)).sum()
    }
    fn block_log_likelihood(&self, block: usize, global: &[f64], value: &[f64]) -> f64 {
        let mean: f64 = global.iter().sum::<f64>() + value.iter().sum::<f64>();
        self.data[block].iter().map(|&d| gauss(d, mean, 1.0)).sum()
    }
    fn log_evidence_offset(&self) -> f64 {
        self.offset
    }
}

/// A random small instance for the cache oracle.
#[derive(Debug, Clone)]
pub struct CacheInstance {
    pub model: RandomFactorized,
    pub proposal: ProductProposal,
    pub outer_draws: usize,
    pub inner_draws: usize,
    global_q: Vec<(f64, f64)>,
    block_q: Vec<Vec<(f64, f64)>>,
}

impl CacheInstance {
    /// `m, M, K ≤ 3`, at most 10 data points.
    pub fn random(rng: &mut RandomSource) -> Result<Self> {
        let k = 1 + rng.index(3);
        let global_dim = rng.index(2);
        let block_dims: Vec<usize> = (0..k).map(|_| 1 + rng.index(2)).collect();
        let mut data = vec![Vec::new(); k];
        for _ in 0..rng.index(11) {
            data[rng.index(k)].push(2.0 * rng.standard_normal());
        }
        let model = RandomFactorized {
            global_dim,
            block_dims: block_dims.clone(),
            data,
            offset: 10.0 * (rng.uniform() - 0.5),
        };
        let mut params = |d: usize| -> Vec<(f64, f64)> {
            (0..d).map(|_| (rng.standard_normal(), 0.5 + 1.5 * rng.uniform())).collect()
        };
        let global_q = params(global_dim);
        let block_q: Vec<Vec<(f64, f64)>> = block_dims.iter().map(|&d| params(d)).collect();
        let spec = |q: &[(f64, f64)]| DensitySpec::diag_gaussian(q.iter().map(|p| p.0).collect(), q.iter().map(|p| p.1).collect());
        let proposal = ProductProposal::new(
            if global_dim > 0 { Some(spec(&global_q)?) } else { None },
            block_q.iter().map(|q| spec(q)).collect::<Result<Vec<_>>>()?,
        );
        Ok(CacheInstance {
            model,
            proposal,
            outer_draws: 1 + rng.index(3),
            inner_draws: 1 + rng.index(3),
            global_q,
            block_q,
        })
    }

    /// Log weight of a joint point evaluated from scratch, without the
    /// block decomposition.
    pub fn oracle_log_weight(&self, point: &[f64]) -> f64 {
        let m = &self.model;
        let g = &point[..m.global_dim];
        let mut lp = m.offset;
        let mut lq = 0.0;
        for (&x, &(mu, v)) in g.iter().zip(&self.global_q) {
            lp += gauss(x, 0.0, GLOBAL_PRIOR_VAR);
            lq += gauss(x, mu, v);
        }
        let mut at = m.global_dim;
        for (j, &d) in m.block_dims.iter().enumerate() {
            let block = &point[at..at + d];
            at += d;
            let mean = g.iter().chain(block).sum::<f64>();
            for (&x, &(mu, v)) in block.iter().zip(&self.block_q[j]) {
                lp += gauss(x, 0.0, BLOCK_PRIOR_VAR);
                lq += gauss(x, mu, v);
            }
            for &y in &m.data[j] {
                lp += gauss(y, mean, 1.0);
            }
        }
        lp - lq
    }
}

/// Result of one cache-oracle instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CacheCheck {
    pub max_weight_error: f64,
    pub counts_match: bool,
}

pub fn check_cache_instance(inst: &CacheInstance, rng: &mut RandomSource) -> Result<CacheCheck> {
    let k = inst.model.num_blocks();
    let cfg = InflationConfig::new(inst.outer_draws, inst.inner_draws);
    let (set, evals) = inflate(&inst.model, &inst.proposal, cfg, rng)?;
    let per_draw = inst.inner_draws.pow(k as u32);
    let counts_match = evals.block_likelihood_evals == (inst.outer_draws * inst.inner_draws * k) as u64
        && evals.joint_samples_emitted == (inst.outer_draws * per_draw) as u64
        && set.len() == inst.outer_draws * per_draw;
    let max_weight_error = set
        .iter()
        .map(|s| (s.log_weight() - inst.oracle_log_weight(&s.point)).abs())
        .fold(0.0, f64::max);
    Ok(CacheCheck {
        max_weight_error,
        counts_match,
    })
}

fn stream(seed: u64, family: u64, i: usize) -> RandomSource {
    RandomSource::new(seed).derive(&[THEOREM_STREAM, family, i as u64])
}

/// Runs the suite described by `cfg.theorems` at `cfg.seed`.
pub fn run_theorem_suite(cfg: &ExperimentConfig) -> Result<TheoremReport> {
    in_pool(cfg.threads, || theorem_suite(&cfg.theorems, cfg.seed))?
}

pub fn theorem_suite(tc: &TheoremConfig, seed: u64) -> Result<TheoremReport> {
    let start = Instant::now();
    let mut decomposition: Vec<CheckOutcome> = KINDS
        .iter()
        .map(|&k| CheckOutcome::new(format!("decomposition/{}", kind_name(k)), DECOMPOSITION_TOLERANCE))
        .collect();
    let mut bound: Vec<CheckOutcome> = KINDS
        .iter()
        .flat_map(|&k| Norm::ALL.map(|n| (k, n)))
        .map(|(k, n)| CheckOutcome::new(format!("convex-bound/{}/{}", kind_name(k), norm_name(n)), BOUND_SLACK))
        .collect();

    let random: Vec<InstanceResult> = (0..tc.instances)
        .into_par_iter()
        .map(|i| {
            let inst = random_instance(tc.max_set_size, tc.max_log_weight_span, &mut stream(seed, 0, i))?;
            evaluate(&inst)
        })
        .collect::<Result<_>>()?;
    for r in &random {
        for (c, &res) in decomposition.iter_mut().zip(&r.residuals) {
            c.residual(res);
        }
        for (c, &(excess, negative)) in bound.iter_mut().zip(&r.bounds) {
            c.record(excess, excess > BOUND_SLACK || negative);
        }
    }

    let mut single = CheckOutcome::new("decomposition/single-part", 0.0);
    for i in 0..tc.instances.min(100) {
        let mut rng = stream(seed, 1, i);
        let n = 1 + rng.index(tc.max_set_size);
        let r = evaluate(&random_instance_with(n, 1, tc.max_log_weight_span, &mut rng)?)?;
        for res in r.residuals {
            single.residual(res);
        }
    }

    let mut adversarial = CheckOutcome::new("decomposition/adversarial", ADVERSARIAL_TOLERANCE);
    let mut adversarial_bound = CheckOutcome::new("convex-bound/adversarial", BOUND_SLACK);
    for (i, (k, dead)) in [(2, false), (3, false), (10, false), (2, true), (5, true)].into_iter().enumerate() {
        let mut rng = stream(seed, 2, i);
        let inst = adversarial_instance(k, 50, tc.max_log_weight_span.max(600.0), dead, &mut rng)?;
        let r = evaluate(&inst)?;
        for res in r.residuals {
            adversarial.residual(res);
        }
        for (excess, negative) in r.bounds {
            adversarial_bound.record(excess, excess > BOUND_SLACK || negative);
        }
    }

    let mut cache = CheckOutcome::new("inflation-cache", CACHE_TOLERANCE);
    let mut counts = CheckOutcome::new("inflation-eval-count", 0.0);
    for i in 0..tc.cache_instances {
        let mut rng = stream(seed, 3, i);
        let inst = CacheInstance::random(&mut rng)?;
        let c = check_cache_instance(&inst, &mut rng)?;
        cache.residual(c.max_weight_error);
        counts.record(0.0, !c.counts_match);
    }

    let mut checks = decomposition;
    checks.push(single);
    checks.push(adversarial);
    checks.extend(bound);
    checks.push(adversarial_bound);
    checks.push(cache);
    checks.push(counts);
    let passed = checks.iter().all(|c| c.passed);
    Ok(TheoremReport {
        seed,
        checks,
        passed,
        seconds: start.elapsed().as_secs_f64(),
    })
}
