//! Gaussian toy: plain versus grouped-inflated importance sampling at equal
//! proposal budgets.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::RandomSource;
use crate::error::{Error, Result};
use crate::estimators::{evidence_estimate, self_normalized_estimate, Identity, TestFunction, WeightedSums};
use crate::experiments::config::{ExperimentConfig, ExperimentKind, Method};
use crate::experiments::metrics::{summarize, MetricSeries, ReplicationEstimate, RowKey};
use crate::experiments::{in_pool, GAUSS_STREAM};
use crate::factorized::{grouped_inflate_with, weigh_points, FactorizedModel, FactorizedProposal, ProductProposal};
use crate::models::GaussianToy;

/// Center of the off-target proposal.
pub const OFFCENTER: [f64; 2] = [5.0, 5.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussReplication {
    pub budget: usize,
    pub method: Method,
    pub replication: usize,
    pub estimate: ReplicationEstimate,
    /// Weighted samples entering the estimate.
    pub samples: u64,
    pub block_evals: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussRun {
    pub series: MetricSeries,
    /// Ordered by budget, then replication, then method.
    pub replications: Vec<GaussReplication>,
}

impl GaussRun {
    /// Per-replication estimates of one (budget, method) cell, in
    /// replication order.
    pub fn estimates(&self, budget: usize, method: Method) -> Vec<&ReplicationEstimate> {
        self.replications
            .iter()
            .filter(|r| r.budget == budget && r.method == method)
            .map(|r| &r.estimate)
            .collect()
    }
}

/// Target and proposal for a gauss experiment.
pub fn gauss_setup(cfg: &ExperimentConfig) -> Result<(GaussianToy, ProductProposal)> {
    let center = match cfg.experiment {
        ExperimentKind::GaussCentered => [0.0, 0.0],
        ExperimentKind::GaussOffcenter => OFFCENTER,
        other => return Err(Error::Config(format!("{other} is not a gauss experiment"))),
    };
    if cfg.sanity {
        let model = GaussianToy {
            log_evidence: 0.0,
            ..GaussianToy::default()
        };
        let prop = model.gaussian_proposal(&model.mean)?;
        Ok((model, prop))
    } else {
        let model = GaussianToy::default();
        let prop = model.t_proposal(&center, cfg.proposal_df)?;
        Ok((model, prop))
    }
}

fn draw_points(model: &GaussianToy, prop: &ProductProposal, n: usize, rng: &mut RandomSource) -> Result<Vec<Vec<f64>>> {
    (0..n)
        .map(|_| {
            let mut p = Vec::with_capacity(model.dim());
            for j in 0..model.num_blocks() {
                p.extend(prop.sample_block(j, rng)?);
            }
            Ok(p)
        })
        .collect()
}

fn replicate(
    cfg: &ExperimentConfig,
    model: &GaussianToy,
    prop: &ProductProposal,
    budget_index: usize,
    replication: usize,
) -> Result<Vec<(GaussReplication, f64)>> {
    let budget = cfg.budgets[budget_index];
    let mut rng = RandomSource::new(cfg.seed).derive(&[GAUSS_STREAM, budget_index as u64, replication as u64]);
    let points = draw_points(model, prop, budget, &mut rng)?;
    let h = Identity(model.dim());
    let blocks = model.num_blocks() as u64;
    let mut out = Vec::new();
    for &method in cfg.method.expand() {
        let start = Instant::now();
        let (estimate, samples, block_evals) = match method {
            Method::Plain => {
                let set = weigh_points(&points, model, prop)?;
                let estimate = ReplicationEstimate {
                    value: self_normalized_estimate(&set, &h)?.value,
                    log_evidence: Some(evidence_estimate(&set)?.value[0]),
                };
                (estimate, budget as u64, budget as u64 * blocks)
            }
            _ => {
                let mut sums = WeightedSums::new(h.dim());
                let evals = grouped_inflate_with(&points, cfg.group_size, model, prop, |e| {
                    sums.push(e.point, e.log_weight, &h);
                    Ok(())
                })?;
                let estimate = ReplicationEstimate {
                    value: sums.self_normalized()?.value,
                    log_evidence: Some(sums.evidence()?.value[0]),
                };
                (estimate, evals.joint_samples_emitted, evals.block_likelihood_evals)
            }
        };
        let rep = GaussReplication {
            budget,
            method,
            replication,
            estimate,
            samples,
            block_evals,
        };
        out.push((rep, start.elapsed().as_secs_f64()));
    }
    Ok(out)
}

/// Runs every (budget, replication) pair, replications in parallel, and
/// summarizes against the true mean and log evidence.
pub fn run_gauss(cfg: &ExperimentConfig) -> Result<GaussRun> {
    if !cfg.experiment.is_gauss() {
        return Err(Error::Config(format!("{} is not a gauss experiment", cfg.experiment)));
    }
    cfg.validate()?;
    let (model, prop) = gauss_setup(cfg)?;
    let jobs: Vec<(usize, usize)> = (0..cfg.budgets.len())
        .flat_map(|b| (0..cfg.replications).map(move |r| (b, r)))
        .collect();
    let results = in_pool(cfg.threads, || {
        jobs.par_iter()
            .map(|&(b, r)| replicate(cfg, &model, &prop, b, r))
            .collect::<Result<Vec<_>>>()
    })??;

    let mut series = MetricSeries::default();
    let mut replications = Vec::with_capacity(results.len() * 2);
    for (b, &budget) in cfg.budgets.iter().enumerate() {
        let cell = &results[b * cfg.replications..(b + 1) * cfg.replications];
        for &method in cfg.method.expand() {
            let picked: Vec<&(GaussReplication, f64)> = cell.iter().flatten().filter(|(r, _)| r.method == method).collect();
            let estimates: Vec<ReplicationEstimate> = picked.iter().map(|(r, _)| r.estimate.clone()).collect();
            let key = RowKey {
                experiment: cfg.experiment.name(),
                method: method.name(),
                budget,
                wall_seconds: picked.iter().map(|(_, s)| s).sum(),
            };
            series.extend(summarize(key, &estimates, model.true_mean(), Some(model.log_evidence))?);
        }
        replications.extend(cell.iter().flatten().map(|(r, _)| r.clone()));
    }
    Ok(GaussRun { series, replications })
}
