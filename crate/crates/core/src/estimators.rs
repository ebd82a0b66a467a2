//! Importance sampling estimators over log-space weights.
//!
//! Weights are never exponentiated on their own. Sums are accumulated
//! relative to a running maximum log weight, so weight sets far below the
//! linear-space underflow limit (log evidence around -1000) are fine.

use crate::distributions::{log_add_exp, log_sum_exp, RandomSource};
use crate::error::{Error, Result};

/// A point together with its unnormalized log weight `log f(x) - log q(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedSample {
    pub point: Vec<f64>,
    log_weight: f64,
}

impl WeightedSample {
    pub fn new(point: Vec<f64>, log_weight: f64) -> Result<Self> {
        check_log_weight(log_weight)?;
        Ok(WeightedSample { point, log_weight })
    }

    pub fn log_weight(&self) -> f64 {
        self.log_weight
    }
}

fn check_log_weight(lw: f64) -> Result<()> {
    if lw.is_nan() || lw == f64::INFINITY {
        Err(Error::InvalidWeight(lw))
    } else {
        Ok(())
    }
}

/// An immutable multiset of weighted samples with its cached log weight sum.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    samples: Vec<WeightedSample>,
    log_weight_sum: f64,
}

impl SampleSet {
    pub fn new(samples: Vec<WeightedSample>) -> Self {
        let lws: Vec<f64> = samples.iter().map(|s| s.log_weight).collect();
        SampleSet {
            log_weight_sum: log_sum_exp(&lws),
            samples,
        }
    }

    pub fn from_parts(points: Vec<Vec<f64>>, log_weights: Vec<f64>) -> Result<Self> {
        if points.len() != log_weights.len() {
            return Err(Error::DimensionMismatch {
                expected: points.len(),
                got: log_weights.len(),
            });
        }
        let samples = points
            .into_iter()
            .zip(log_weights)
            .map(|(p, lw)| WeightedSample::new(p, lw))
            .collect::<Result<Vec<_>>>()?;
        Ok(SampleSet::new(samples))
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[WeightedSample] {
        &self.samples
    }

    pub fn iter(&self) -> std::slice::Iter<'_, WeightedSample> {
        self.samples.iter()
    }

    pub fn log_weights(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.log_weight).collect()
    }

    /// `log w_Σ(X)`.
    pub fn log_weight_sum(&self) -> f64 {
        self.log_weight_sum
    }

    fn max_log_weight(&self) -> f64 {
        self.samples
            .iter()
            .map(|s| s.log_weight)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Splits the set into consecutive chunks of the given sizes.
    pub fn partition(&self, sizes: &[usize]) -> Result<Vec<SampleSet>> {
        if sizes.iter().sum::<usize>() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                got: sizes.iter().sum(),
            });
        }
        let mut out = Vec::with_capacity(sizes.len());
        let mut start = 0;
        for &n in sizes {
            out.push(SampleSet::new(self.samples[start..start + n].to_vec()));
            start += n;
        }
        Ok(out)
    }
}

impl FromIterator<WeightedSample> for SampleSet {
    fn from_iter<I: IntoIterator<Item = WeightedSample>>(iter: I) -> Self {
        SampleSet::new(iter.into_iter().collect())
    }
}

/// A function `h` whose expectation under the target is estimated.
pub trait TestFunction: Sync {
    fn dim(&self) -> usize;
    fn eval(&self, point: &[f64], out: &mut [f64]);
}

/// `h(x) = x` over the first `dim` coordinates.
#[derive(Debug, Clone, Copy)]
pub struct Identity(pub usize);

impl TestFunction for Identity {
    fn dim(&self) -> usize {
        self.0
    }

    fn eval(&self, point: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&point[..self.0]);
    }
}

/// Selects a subset of coordinates.
#[derive(Debug, Clone)]
pub struct Coordinates(pub Vec<usize>);

impl TestFunction for Coordinates {
    fn dim(&self) -> usize {
        self.0.len()
    }

    fn eval(&self, point: &[f64], out: &mut [f64]) {
        for (o, &k) in out.iter_mut().zip(&self.0) {
            *o = point[k];
        }
    }
}

/// Wraps a closure as a test function.
pub struct FnTest<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64], &mut [f64]) + Sync> FnTest<F> {
    pub fn new(dim: usize, f: F) -> Self {
        FnTest { dim, f }
    }
}

impl<F: Fn(&[f64], &mut [f64]) + Sync> TestFunction for FnTest<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, point: &[f64], out: &mut [f64]) {
        (self.f)(point, out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimateKind {
    Standard,
    SelfNormalized,
    /// `value[0]` holds the log of the evidence estimate.
    Evidence,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub value: Vec<f64>,
    pub kind: EstimateKind,
    pub n: usize,
    pub log_weight_sum: f64,
}

/// Streaming accumulator for `Σ w_u(x)`, `Σ w_u(x) h(x)` and the sample count.
///
/// Sums are held relative to `exp(shift)`, where `shift` is the largest log
/// weight seen so far; sign of `h` is carried by the linear partial sums.
#[derive(Debug, Clone)]
pub struct WeightedSums {
    shift: f64,
    weight: f64,
    weighted_h: Vec<f64>,
    count: u64,
    scratch: Vec<f64>,
}

impl WeightedSums {
    pub fn new(dim: usize) -> Self {
        WeightedSums::with_shift(dim, f64::NEG_INFINITY)
    }

    /// Starts with a known upper bound on the log weights, which avoids
    /// rescaling while accumulating.
    pub fn with_shift(dim: usize, shift: f64) -> Self {
        WeightedSums {
            shift,
            weight: 0.0,
            weighted_h: vec![0.0; dim],
            count: 0,
            scratch: vec![0.0; dim],
        }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn push<H: TestFunction + ?Sized>(&mut self, point: &[f64], log_weight: f64, h: &H) {
        if log_weight == f64::NEG_INFINITY {
            self.count += 1;
            return;
        }
        let mut scratch = std::mem::take(&mut self.scratch);
        h.eval(point, &mut scratch);
        self.push_value(&scratch, log_weight);
        self.scratch = scratch;
    }

    /// Pushes a sample whose `h` value is already known.
    pub fn push_value(&mut self, value: &[f64], log_weight: f64) {
        self.count += 1;
        if log_weight == f64::NEG_INFINITY {
            return;
        }
        if log_weight > self.shift {
            let scale = (self.shift - log_weight).exp();
            self.weight *= scale;
            self.weighted_h.iter_mut().for_each(|v| *v *= scale);
            self.shift = log_weight;
        }
        let w = (log_weight - self.shift).exp();
        self.weight += w;
        for (acc, &hv) in self.weighted_h.iter_mut().zip(value) {
            *acc += w * hv;
        }
    }

    pub fn log_weight_sum(&self) -> f64 {
        if self.weight == 0.0 {
            f64::NEG_INFINITY
        } else {
            self.shift + self.weight.ln()
        }
    }

    /// `𝔍(X) = (1/|X|) Σ w(x) h(x)`.
    pub fn standard(&self) -> Result<Estimate> {
        if self.count == 0 {
            return Err(Error::EmptySampleSet);
        }
        let log_n = (self.count as f64).ln();
        let value = self
            .weighted_h
            .iter()
            .map(|&s| {
                if s == 0.0 {
                    0.0
                } else {
                    s.signum() * (s.abs().ln() + self.shift - log_n).exp()
                }
            })
            .collect();
        Ok(Estimate {
            value,
            kind: EstimateKind::Standard,
            n: self.count as usize,
            log_weight_sum: self.log_weight_sum(),
        })
    }

    /// `𝔍_n(X) = Σ w_u(x) h(x) / w_Σ(X)`.
    pub fn self_normalized(&self) -> Result<Estimate> {
        if self.count == 0 {
            return Err(Error::EmptySampleSet);
        }
        if self.weight == 0.0 {
            return Err(Error::DegenerateWeights);
        }
        Ok(Estimate {
            value: self.weighted_h.iter().map(|&s| s / self.weight).collect(),
            kind: EstimateKind::SelfNormalized,
            n: self.count as usize,
            log_weight_sum: self.log_weight_sum(),
        })
    }

    /// `log 𝔷(X) = log Σ w_u(x) - log |X|`.
    pub fn evidence(&self) -> Result<Estimate> {
        if self.count == 0 {
            return Err(Error::EmptySampleSet);
        }
        let lws = self.log_weight_sum();
        Ok(Estimate {
            value: vec![lws - (self.count as f64).ln()],
            kind: EstimateKind::Evidence,
            n: self.count as usize,
            log_weight_sum: lws,
        })
    }
}

fn accumulate<H: TestFunction + ?Sized>(set: &SampleSet, h: &H) -> Result<WeightedSums> {
    if set.is_empty() {
        return Err(Error::EmptySampleSet);
    }
    let mut sums = WeightedSums::with_shift(h.dim(), set.max_log_weight());
    for s in set.iter() {
        sums.push(&s.point, s.log_weight, h);
    }
    Ok(sums)
}

/// Standard importance sampling estimate; weights must come from a
/// normalized target.
pub fn standard_estimate<H: TestFunction + ?Sized>(set: &SampleSet, h: &H) -> Result<Estimate> {
    accumulate(set, h)?.standard()
}

pub fn self_normalized_estimate<H: TestFunction + ?Sized>(
    set: &SampleSet,
    h: &H,
) -> Result<Estimate> {
    accumulate(set, h)?.self_normalized()
}

/// `Σ (w_u(x)/w_Σ(X))² (h(x) - 𝔍_n(X))²` per component.
pub fn snis_variance_estimate<H: TestFunction + ?Sized>(
    set: &SampleSet,
    h: &H,
) -> Result<Vec<f64>> {
    let mean = self_normalized_estimate(set, h)?.value;
    let lws = set.log_weight_sum();
    let mut hx = vec![0.0; h.dim()];
    let mut var = vec![0.0; h.dim()];
    for s in set.iter() {
        let w = (s.log_weight - lws).exp();
        if w == 0.0 {
            continue;
        }
        h.eval(&s.point, &mut hx);
        for ((v, &x), &m) in var.iter_mut().zip(&hx).zip(&mean) {
            let d = w * (x - m);
            *v += d * d;
        }
    }
    Ok(var)
}

/// Evidence estimate `𝔷(X)`, returned in log space.
pub fn evidence_estimate(set: &SampleSet) -> Result<Estimate> {
    if set.is_empty() {
        return Err(Error::EmptySampleSet);
    }
    Ok(Estimate {
        value: vec![set.log_weight_sum() - (set.len() as f64).ln()],
        kind: EstimateKind::Evidence,
        n: set.len(),
        log_weight_sum: set.log_weight_sum(),
    })
}

/// Multiset union of sample sets.
pub fn combine(sets: &[SampleSet]) -> SampleSet {
    let total = sets.iter().map(SampleSet::len).sum();
    let mut samples = Vec::with_capacity(total);
    for s in sets {
        samples.extend_from_slice(&s.samples);
    }
    SampleSet::new(samples)
}

/// Mixing coefficients `λ_i` tying per-set estimates to the union estimate:
/// `|X_i|/|X_∪|` for the standard estimator, `w_Σ(X_i)/w_Σ(X_∪)` for the
/// self-normalized one.
pub fn mixing_coefficients(sets: &[SampleSet], kind: EstimateKind) -> Result<Vec<f64>> {
    match kind {
        EstimateKind::Standard => {
            let total: usize = sets.iter().map(SampleSet::len).sum();
            Ok(sets.iter().map(|s| s.len() as f64 / total as f64).collect())
        }
        EstimateKind::SelfNormalized => {
            let total = sets
                .iter()
                .map(SampleSet::log_weight_sum)
                .fold(f64::NEG_INFINITY, log_add_exp);
            if total == f64::NEG_INFINITY {
                return Err(Error::DegenerateWeights);
            }
            Ok(sets
                .iter()
                .map(|s| (s.log_weight_sum() - total).exp())
                .collect())
        }
        EstimateKind::Evidence => Err(Error::Config(
            "decomposition is defined for standard and self-normalized estimates".into(),
        )),
    }
}

fn estimate_of<H: TestFunction + ?Sized>(
    set: &SampleSet,
    h: &H,
    kind: EstimateKind,
) -> Result<Estimate> {
    match kind {
        EstimateKind::Standard => standard_estimate(set, h),
        EstimateKind::SelfNormalized => self_normalized_estimate(set, h),
        EstimateKind::Evidence => evidence_estimate(set),
    }
}

/// Per-set estimates; a zero-weight set contributes with `λ_i = 0`, so its
/// estimate is replaced by zeros in the self-normalized case.
fn per_set_estimates<H: TestFunction + ?Sized>(
    sets: &[SampleSet],
    h: &H,
    kind: EstimateKind,
) -> Result<Vec<Vec<f64>>> {
    sets.iter()
        .map(|s| match estimate_of(s, h, kind) {
            Ok(e) => Ok(e.value),
            Err(Error::DegenerateWeights) if kind == EstimateKind::SelfNormalized => {
                Ok(vec![0.0; h.dim()])
            }
            Err(e) => Err(e),
        })
        .collect()
}

/// Max-norm of `estimate(X_∪) - Σ λ_i estimate(X_i)`.
pub fn decomposition_residual<H: TestFunction + ?Sized>(
    sets: &[SampleSet],
    h: &H,
    kind: EstimateKind,
) -> Result<f64> {
    if sets.is_empty() || sets.iter().any(SampleSet::is_empty) {
        return Err(Error::EmptySampleSet);
    }
    let union = estimate_of(&combine(sets), h, kind)?.value;
    let lambdas = mixing_coefficients(sets, kind)?;
    let parts = per_set_estimates(sets, h, kind)?;
    let mut mixed = vec![0.0; h.dim()];
    for (lambda, part) in lambdas.iter().zip(&parts) {
        for (m, &p) in mixed.iter_mut().zip(part) {
            *m += lambda * p;
        }
    }
    Ok(union
        .iter()
        .zip(&mixed)
        .map(|(u, m)| (u - m).abs())
        .fold(0.0, f64::max))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Norm {
    L1,
    L2,
    LInf,
}

impl Norm {
    pub const ALL: [Norm; 3] = [Norm::L1, Norm::L2, Norm::LInf];

    pub fn of(self, v: &[f64]) -> f64 {
        match self {
            Norm::L1 => v.iter().map(|x| x.abs()).sum(),
            Norm::L2 => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
            Norm::LInf => v.iter().map(|x| x.abs()).fold(0.0, f64::max),
        }
    }
}

/// Both sides of the convex-combination error bound for a partition:
/// `(Σ λ_i ‖J(X_i) - H‖, ‖Σ λ_i J(X_i) - H‖)`.
pub fn convex_error_bound<H: TestFunction + ?Sized>(
    sets: &[SampleSet],
    h: &H,
    kind: EstimateKind,
    reference: &[f64],
    norm: Norm,
) -> Result<(f64, f64)> {
    let lambdas = mixing_coefficients(sets, kind)?;
    let parts = per_set_estimates(sets, h, kind)?;
    let mut mixed = vec![0.0; h.dim()];
    let mut weighted_errors = 0.0;
    let mut diff = vec![0.0; h.dim()];
    for (lambda, part) in lambdas.iter().zip(&parts) {
        if *lambda == 0.0 {
            continue;
        }
        for ((d, &p), &r) in diff.iter_mut().zip(part).zip(reference) {
            *d = p - r;
        }
        weighted_errors += lambda * norm.of(&diff);
        for (m, &p) in mixed.iter_mut().zip(part) {
            *m += lambda * p;
        }
    }
    for ((d, &m), &r) in diff.iter_mut().zip(&mixed).zip(reference) {
        *d = m - r;
    }
    Ok((weighted_errors, norm.of(&diff)))
}

/// Multinomial resampling: indices drawn with replacement with probability
/// proportional to the weights.
pub fn resample_indices(set: &SampleSet, count: usize, rng: &mut RandomSource) -> Result<Vec<usize>> {
    if set.is_empty() {
        return Err(Error::EmptySampleSet);
    }
    let lws = set.log_weight_sum();
    if lws == f64::NEG_INFINITY {
        return Err(Error::DegenerateWeights);
    }
    let mut cumulative = Vec::with_capacity(set.len());
    let mut acc = 0.0;
    for s in set.iter() {
        acc += (s.log_weight - lws).exp();
        cumulative.push(acc);
    }
    let last_positive = set
        .samples
        .iter()
        .rposition(|s| s.log_weight > f64::NEG_INFINITY)
        .expect("positive weight exists");
    Ok((0..count)
        .map(|_| {
            let u = rng.uniform() * acc;
            let i = cumulative.partition_point(|&c| c <= u);
            i.min(last_positive)
        })
        .collect())
}

pub fn resample(set: &SampleSet, count: usize, rng: &mut RandomSource) -> Result<Vec<Vec<f64>>> {
    Ok(resample_indices(set, count, rng)?
        .into_iter()
        .map(|i| set.samples[i].point.clone())
        .collect())
}
