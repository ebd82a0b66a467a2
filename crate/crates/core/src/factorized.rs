//! Models whose likelihood factorizes over conditionally independent local
//! blocks, and the sample inflation engine built on that structure.
//!
//! A joint point is laid out as `[global.., block_0.., block_1.., ..]`.
//! Inflation draws one global value and `M` values per block, evaluates
//! each block factor once per value, then emits every recombination of the
//! block values with weights assembled from the cached factors.

use crate::combinations::IndexTuples;
use crate::distributions::{DensitySpec, RandomSource};
use crate::error::{Error, Result};
use crate::estimators::{SampleSet, WeightedSample};

/// Emission limit per outer draw when no combination cap is set.
pub const MAX_COMBINATIONS: usize = 100_000_000;

/// An unnormalized density `f(φ, γ_1..K)` that splits into a global prior
/// term and one prior-plus-likelihood term per block.
///
/// The joint log density is
/// `global_log_prior(φ) + Σ_j [block_log_prior(j, γ_j) + block_log_likelihood(j, φ, γ_j)] + log_evidence_offset()`.
pub trait FactorizedModel: Sync {
    fn num_blocks(&self) -> usize;
    fn global_dim(&self) -> usize;
    fn block_dim(&self, block: usize) -> usize;

    fn global_log_prior(&self, global: &[f64]) -> f64;
    fn block_log_prior(&self, block: usize, value: &[f64]) -> f64;
    /// Log likelihood of the data points attached to `block`.
    fn block_log_likelihood(&self, block: usize, global: &[f64], value: &[f64]) -> f64;

    fn log_evidence_offset(&self) -> f64 {
        0.0
    }

    fn layout(&self) -> Layout {
        Layout::new(
            self.global_dim(),
            (0..self.num_blocks()).map(|j| self.block_dim(j)).collect(),
        )
    }

    /// Joint unnormalized log density through the block decomposition.
    fn log_density(&self, point: &[f64]) -> f64 {
        let layout = self.layout();
        let global = layout.global(point);
        let mut total = self.global_log_prior(global) + self.log_evidence_offset();
        for j in 0..self.num_blocks() {
            let value = layout.block(point, j);
            total += self.block_log_prior(j, value) + self.block_log_likelihood(j, global, value);
        }
        total
    }

    /// Data log likelihood `Σ_j block_log_likelihood`.
    fn log_likelihood(&self, point: &[f64]) -> f64 {
        let layout = self.layout();
        let global = layout.global(point);
        (0..self.num_blocks())
            .map(|j| self.block_log_likelihood(j, global, layout.block(point, j)))
            .sum()
    }
}

/// Offsets of the global block and each local block in a joint point.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    global_dim: usize,
    offsets: Vec<usize>,
}

impl Layout {
    pub fn new(global_dim: usize, block_dims: Vec<usize>) -> Self {
        let mut offsets = Vec::with_capacity(block_dims.len() + 1);
        let mut at = global_dim;
        offsets.push(at);
        for d in block_dims {
            at += d;
            offsets.push(at);
        }
        Layout { global_dim, offsets }
    }

    pub fn dim(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn num_blocks(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn global<'a>(&self, point: &'a [f64]) -> &'a [f64] {
        &point[..self.global_dim]
    }

    pub fn block<'a>(&self, point: &'a [f64], j: usize) -> &'a [f64] {
        &point[self.offsets[j]..self.offsets[j + 1]]
    }

    fn block_mut<'a>(&self, point: &'a mut [f64], j: usize) -> &'a mut [f64] {
        &mut point[self.offsets[j]..self.offsets[j + 1]]
    }
}

/// Proposal `q_φ(φ) Π_j q_{γ_j}(γ_j)` with blocks drawn independently.
pub trait FactorizedProposal {
    fn num_blocks(&self) -> usize;
    fn sample_global(&self, rng: &mut RandomSource) -> Result<Vec<f64>>;
    fn global_log_density(&self, global: &[f64]) -> f64;
    fn sample_block(&self, block: usize, rng: &mut RandomSource) -> Result<Vec<f64>>;
    fn block_log_density(&self, block: usize, value: &[f64]) -> f64;
}

/// Proposal built from fixed parametric densities. A `None` global block is
/// the empty block: it draws an empty vector with log density 0.
#[derive(Debug, Clone)]
pub struct ProductProposal {
    pub global: Option<DensitySpec>,
    pub blocks: Vec<DensitySpec>,
}

impl ProductProposal {
    pub fn new(global: Option<DensitySpec>, blocks: Vec<DensitySpec>) -> Self {
        ProductProposal { global, blocks }
    }
}

impl FactorizedProposal for ProductProposal {
    fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    fn sample_global(&self, rng: &mut RandomSource) -> Result<Vec<f64>> {
        match &self.global {
            Some(spec) => spec.sample(rng),
            None => Ok(Vec::new()),
        }
    }

    fn global_log_density(&self, global: &[f64]) -> f64 {
        match &self.global {
            Some(spec) => spec.log_density(global).unwrap_or(f64::NEG_INFINITY),
            None if global.is_empty() => 0.0,
            None => f64::NEG_INFINITY,
        }
    }

    fn sample_block(&self, block: usize, rng: &mut RandomSource) -> Result<Vec<f64>> {
        self.blocks[block].sample(rng)
    }

    fn block_log_density(&self, block: usize, value: &[f64]) -> f64 {
        self.blocks[block]
            .log_density(value)
            .unwrap_or(f64::NEG_INFINITY)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InflationConfig {
    /// Independent global draws `m`.
    pub outer_draws: usize,
    /// Draws per block per global draw `M`.
    pub inner_draws: usize,
    /// Emit only the first `cap` tuples (lexicographic) per global draw.
    pub combination_cap: Option<usize>,
}

impl InflationConfig {
    pub fn new(outer_draws: usize, inner_draws: usize) -> Self {
        InflationConfig {
            outer_draws,
            inner_draws,
            combination_cap: None,
        }
    }

    pub fn with_cap(mut self, cap: usize) -> Self {
        self.combination_cap = Some(cap);
        self
    }

    /// Validates the config for `blocks` blocks and returns the number of
    /// tuples emitted per global draw.
    pub fn combinations_per_draw(&self, blocks: usize) -> Result<usize> {
        if self.outer_draws == 0 || self.inner_draws == 0 {
            return Err(Error::Config("outer and inner draw counts must be at least 1".into()));
        }
        let full = IndexTuples::count(self.inner_draws, blocks);
        match (self.combination_cap, full) {
            (Some(cap), Some(full)) if cap > full => Err(Error::Config(format!(
                "combination cap {cap} exceeds M^K = {full}"
            ))),
            (Some(0), _) => Err(Error::Config("combination cap must be positive".into())),
            (Some(cap), _) => Ok(cap),
            (None, Some(full)) if full <= MAX_COMBINATIONS => Ok(full),
            (None, _) => Err(Error::Config(format!(
                "M^K = {}^{} combinations per draw exceeds {MAX_COMBINATIONS}; set a combination cap",
                self.inner_draws, blocks
            ))),
        }
    }
}

/// Likelihood-evaluation accounting.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct EvalCounter {
    pub block_likelihood_evals: u64,
    pub joint_samples_emitted: u64,
}

impl std::ops::AddAssign for EvalCounter {
    fn add_assign(&mut self, rhs: Self) {
        self.block_likelihood_evals += rhs.block_likelihood_evals;
        self.joint_samples_emitted += rhs.joint_samples_emitted;
    }
}

/// One emitted joint sample.
#[derive(Debug, Clone, Copy)]
pub struct Emitted<'a> {
    pub point: &'a [f64],
    pub log_weight: f64,
    pub log_likelihood: f64,
}

fn check_model_proposal<M, P>(model: &M, prop: &P) -> Result<()>
where
    M: FactorizedModel + ?Sized,
    P: FactorizedProposal + ?Sized,
{
    if model.num_blocks() != prop.num_blocks() {
        return Err(Error::DimensionMismatch {
            expected: model.num_blocks(),
            got: prop.num_blocks(),
        });
    }
    Ok(())
}

fn own_density(lq: f64, what: &str) -> Result<f64> {
    if lq == f64::NEG_INFINITY || lq.is_nan() {
        Err(Error::Invariant(format!("proposal density of its own {what} draw is {lq}")))
    } else {
        Ok(lq)
    }
}

/// Plain importance sampling for a factorized model: one block value per
/// global draw.
pub fn plain_factorized_sampler<M, P>(
    model: &M,
    prop: &P,
    draws: usize,
    rng: &mut RandomSource,
) -> Result<(SampleSet, EvalCounter)>
where
    M: FactorizedModel + ?Sized,
    P: FactorizedProposal + ?Sized,
{
    let mut samples = Vec::with_capacity(draws);
    let counter = plain_factorized_with(model, prop, draws, rng, |e| {
        samples.push(WeightedSample::new(e.point.to_vec(), e.log_weight)?);
        Ok(())
    })?;
    Ok((SampleSet::new(samples), counter))
}

/// Streaming form of [`plain_factorized_sampler`].
pub fn plain_factorized_with<M, P, F>(
    model: &M,
    prop: &P,
    draws: usize,
    rng: &mut RandomSource,
    mut sink: F,
) -> Result<EvalCounter>
where
    M: FactorizedModel + ?Sized,
    P: FactorizedProposal + ?Sized,
    F: FnMut(Emitted<'_>) -> Result<()>,
{
    check_model_proposal(model, prop)?;
    let layout = model.layout();
    let mut counter = EvalCounter::default();
    let mut point = vec![0.0; layout.dim()];
    for _ in 0..draws {
        let global = prop.sample_global(rng)?;
        let mut lw = model.global_log_prior(&global) + model.log_evidence_offset()
            - own_density(prop.global_log_density(&global), "global")?;
        point[..global.len()].copy_from_slice(&global);
        let mut lik = 0.0;
        for j in 0..model.num_blocks() {
            let value = prop.sample_block(j, rng)?;
            let lq = own_density(prop.block_log_density(j, &value), "block")?;
            let ll = model.block_log_likelihood(j, &global, &value);
            counter.block_likelihood_evals += 1;
            lw += model.block_log_prior(j, &value) + ll - lq;
            lik += ll;
            layout.block_mut(&mut point, j).copy_from_slice(&value);
        }
        counter.joint_samples_emitted += 1;
        sink(Emitted {
            point: &point,
            log_weight: lw,
            log_likelihood: lik,
        })?;
    }
    Ok(counter)
}

/// Cached per-value block factors.
struct BlockCache {
    values: Vec<Vec<f64>>,
    /// `block_log_prior + block_log_likelihood - log q`.
    log_ratio: Vec<f64>,
    log_lik: Vec<f64>,
}

/// Emits every (or the first `limit`) recombination of cached block values
/// around a fixed global part. `point` must already hold the global part.
fn emit_recombinations<F>(
    layout: &Layout,
    caches: &[BlockCache],
    base: f64,
    limit: usize,
    point: &mut [f64],
    counter: &mut EvalCounter,
    sink: &mut F,
) -> Result<()>
where
    F: FnMut(Emitted<'_>) -> Result<()>,
{
    let k = caches.len();
    let radix = caches.first().map_or(1, |c| c.values.len());
    let mut tuples = IndexTuples::new(radix, k);
    // running prefix sums so each step only recomputes the changed suffix
    let mut prefix_lw = vec![0.0; k + 1];
    let mut prefix_ll = vec![0.0; k + 1];
    prefix_lw[0] = base;
    let mut emitted = 0;
    while emitted < limit {
        let Some(changed) = tuples.advance() else {
            break;
        };
        let digits = tuples.digits();
        for j in changed..k {
            let c = &caches[j];
            let i = digits[j];
            prefix_lw[j + 1] = prefix_lw[j] + c.log_ratio[i];
            prefix_ll[j + 1] = prefix_ll[j] + c.log_lik[i];
            layout.block_mut(point, j).copy_from_slice(&c.values[i]);
        }
        sink(Emitted {
            point,
            log_weight: prefix_lw[k],
            log_likelihood: prefix_ll[k],
        })?;
        emitted += 1;
    }
    counter.joint_samples_emitted += emitted as u64;
    Ok(())
}

/// One global draw of the inflation sampler: `M` values per block, `M·K`
/// block likelihood evaluations, up to `M^K` emitted samples.
pub fn inflate_draw<M, P, F>(
    model: &M,
    prop: &P,
    inner_draws: usize,
    emit_limit: usize,
    rng: &mut RandomSource,
    sink: &mut F,
) -> Result<EvalCounter>
where
    M: FactorizedModel + ?Sized,
    P: FactorizedProposal + ?Sized,
    F: FnMut(Emitted<'_>) -> Result<()>,
{
    check_model_proposal(model, prop)?;
    let layout = model.layout();
    let mut counter = EvalCounter::default();
    let global = prop.sample_global(rng)?;
    let base = model.global_log_prior(&global) + model.log_evidence_offset()
        - own_density(prop.global_log_density(&global), "global")?;
    let mut caches = Vec::with_capacity(model.num_blocks());
    for j in 0..model.num_blocks() {
        let mut cache = BlockCache {
            values: Vec::with_capacity(inner_draws),
            log_ratio: Vec::with_capacity(inner_draws),
            log_lik: Vec::with_capacity(inner_draws),
        };
        for _ in 0..inner_draws {
            let value = prop.sample_block(j, rng)?;
            let lq = own_density(prop.block_log_density(j, &value), "block")?;
            let ll = model.block_log_likelihood(j, &global, &value);
            counter.block_likelihood_evals += 1;
            cache
                .log_ratio
                .push(model.block_log_prior(j, &value) + ll - lq);
            cache.log_lik.push(ll);
            cache.values.push(value);
        }
        caches.push(cache);
    }
    let mut point = vec![0.0; layout.dim()];
    point[..global.len()].copy_from_slice(&global);
    emit_recombinations(&layout, &caches, base, emit_limit, &mut point, &mut counter, sink)?;
    Ok(counter)
}

/// Streaming sample inflation.
pub fn inflate_with<M, P, F>(
    model: &M,
    prop: &P,
    cfg: InflationConfig,
    rng: &mut RandomSource,
    mut sink: F,
) -> Result<EvalCounter>
where
    M: FactorizedModel + ?Sized,
    P: FactorizedProposal + ?Sized,
    F: FnMut(Emitted<'_>) -> Result<()>,
{
    let per_draw = cfg.combinations_per_draw(model.num_blocks())?;
    let mut counter = EvalCounter::default();
    for _ in 0..cfg.outer_draws {
        counter += inflate_draw(model, prop, cfg.inner_draws, per_draw, rng, &mut sink)?;
    }
    Ok(counter)
}

/// Sample inflation collected into a [`SampleSet`].
pub fn inflate<M, P>(
    model: &M,
    prop: &P,
    cfg: InflationConfig,
    rng: &mut RandomSource,
) -> Result<(SampleSet, EvalCounter)>
where
    M: FactorizedModel + ?Sized,
    P: FactorizedProposal + ?Sized,
{
    let per_draw = cfg.combinations_per_draw(model.num_blocks())?;
    let total = per_draw
        .checked_mul(cfg.outer_draws)
        .filter(|&t| t <= MAX_COMBINATIONS)
        .ok_or_else(|| {
            Error::Config(format!(
                "{} outer draws x {per_draw} combinations is too many to materialize",
                cfg.outer_draws
            ))
        })?;
    let mut samples = Vec::with_capacity(total);
    let counter = inflate_with(model, prop, cfg, rng, |e| {
        samples.push(WeightedSample::new(e.point.to_vec(), e.log_weight)?);
        Ok(())
    })?;
    Ok((SampleSet::new(samples), counter))
}

/// Splits an uncapped inflated set into the `M^K` sets that share an index
/// tuple. Each of those holds one sample per global draw, so its members
/// are independent.
pub fn split_by_combination(set: &SampleSet, combinations_per_draw: usize) -> Result<Vec<SampleSet>> {
    if combinations_per_draw == 0 || set.len() % combinations_per_draw != 0 {
        return Err(Error::Config(format!(
            "{} samples do not divide into draws of {combinations_per_draw}",
            set.len()
        )));
    }
    let mut parts = vec![Vec::new(); combinations_per_draw];
    for (i, s) in set.iter().enumerate() {
        parts[i % combinations_per_draw].push(s.clone());
    }
    Ok(parts.into_iter().map(SampleSet::new).collect())
}

fn check_grouping<M: FactorizedModel + ?Sized>(model: &M, n: usize, group_size: usize) -> Result<()> {
    if model.global_dim() != 0 {
        return Err(Error::Config("grouped inflation needs a model without a global block".into()));
    }
    if group_size == 0 || n % group_size != 0 {
        return Err(Error::Config(format!(
            "{n} draws cannot be partitioned into groups of {group_size}"
        )));
    }
    Ok(())
}

/// Recombines already drawn joint samples: each group of `group_size`
/// draws supplies `group_size` values per block, and all `group_size^K`
/// recombinations are emitted. Groups are emitted in order.
pub fn grouped_inflate_with<M, P, F>(
    points: &[Vec<f64>],
    group_size: usize,
    model: &M,
    prop: &P,
    mut sink: F,
) -> Result<EvalCounter>
where
    M: FactorizedModel + ?Sized,
    P: FactorizedProposal + ?Sized,
    F: FnMut(Emitted<'_>) -> Result<()>,
{
    check_model_proposal(model, prop)?;
    check_grouping(model, points.len(), group_size)?;
    let layout = model.layout();
    let per_group = IndexTuples::count(group_size, model.num_blocks())
        .filter(|&c| c <= MAX_COMBINATIONS)
        .ok_or_else(|| Error::Config(format!("group size {group_size} explodes over {} blocks", model.num_blocks())))?;
    let base = model.log_evidence_offset();
    let mut counter = EvalCounter::default();
    let mut buffer = vec![0.0; layout.dim()];
    for group in points.chunks(group_size) {
        let mut caches = Vec::with_capacity(model.num_blocks());
        for j in 0..model.num_blocks() {
            let mut cache = BlockCache {
                values: Vec::with_capacity(group_size),
                log_ratio: Vec::with_capacity(group_size),
                log_lik: Vec::with_capacity(group_size),
            };
            for p in group {
                if p.len() != layout.dim() {
                    return Err(Error::DimensionMismatch {
                        expected: layout.dim(),
                        got: p.len(),
                    });
                }
                let value = layout.block(p, j);
                let lq = own_density(prop.block_log_density(j, value), "block")?;
                let ll = model.block_log_likelihood(j, &[], value);
                counter.block_likelihood_evals += 1;
                cache.log_ratio.push(model.block_log_prior(j, value) + ll - lq);
                cache.log_lik.push(ll);
                cache.values.push(value.to_vec());
            }
            caches.push(cache);
        }
        emit_recombinations(&layout, &caches, base, per_group, &mut buffer, &mut counter, &mut sink)?;
    }
    Ok(counter)
}

/// [`grouped_inflate_with`] collected into a [`SampleSet`].
pub fn grouped_inflate<M, P>(
    points: &[Vec<f64>],
    group_size: usize,
    model: &M,
    prop: &P,
) -> Result<SampleSet>
where
    M: FactorizedModel + ?Sized,
    P: FactorizedProposal + ?Sized,
{
    let mut samples = Vec::new();
    grouped_inflate_with(points, group_size, model, prop, |e| {
        samples.push(WeightedSample::new(e.point.to_vec(), e.log_weight)?);
        Ok(())
    })?;
    Ok(SampleSet::new(samples))
}

/// Importance weights for already drawn joint samples, without recombination.
pub fn weigh_points<M, P>(points: &[Vec<f64>], model: &M, prop: &P) -> Result<SampleSet>
where
    M: FactorizedModel + ?Sized,
    P: FactorizedProposal + ?Sized,
{
    check_model_proposal(model, prop)?;
    let layout = model.layout();
    points
        .iter()
        .map(|p| {
            // per-block ratios, summed in the same order as the inflation cache
            let global = layout.global(p);
            let mut lw = model.global_log_prior(global) + model.log_evidence_offset()
                - own_density(prop.global_log_density(global), "global")?;
            for j in 0..model.num_blocks() {
                let value = layout.block(p, j);
                lw += model.block_log_prior(j, value) + model.block_log_likelihood(j, global, value)
                    - own_density(prop.block_log_density(j, value), "block")?;
            }
            WeightedSample::new(p.clone(), lw)
        })
        .collect()
}
