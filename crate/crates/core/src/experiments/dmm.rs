//! Dirichlet mixture runs: plain versus inflated population Monte Carlo at
//! equal block-likelihood budgets.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::RandomSource;
use crate::error::{Error, Result};
use crate::experiments::config::{ExperimentConfig, Method};
use crate::experiments::metrics::{summarize, MetricSeries, ReplicationEstimate, RowKey};
use crate::experiments::{in_pool, DMM_DATA_STREAM, DMM_RUN_STREAM};
use crate::models::{make_synthetic_n, DirichletMixture, DmmKernel, DmmProposal, DmmSpec};
use crate::pmc::{run_pmc, trace_metrics, PmcConfig, TracePoint};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DmmReplication {
    pub budget: usize,
    pub method: Method,
    pub replication: usize,
    /// Sorted component means of the final generation.
    pub estimate: Vec<f64>,
    pub block_evals: u64,
    pub trace: Vec<TracePoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DmmRun {
    pub series: MetricSeries,
    /// Ordered by budget, then replication, then method.
    pub replications: Vec<DmmReplication>,
}

impl DmmRun {
    pub fn get(&self, budget: usize, method: Method, replication: usize) -> Option<&DmmReplication> {
        self.replications
            .iter()
            .find(|r| r.budget == budget && r.method == method && r.replication == replication)
    }
}

/// The data set of one replication; shared by every budget and method.
pub fn replication_data(cfg: &ExperimentConfig, replication: usize) -> Result<DirichletMixture> {
    let family = cfg
        .experiment
        .family()
        .ok_or_else(|| Error::Config(format!("{} is not a dmm experiment", cfg.experiment)))?;
    let seed = RandomSource::new(cfg.seed)
        .derive(&[DMM_DATA_STREAM, replication as u64])
        .seed();
    let data = make_synthetic_n(family, cfg.true_means, seed, cfg.observations)?;
    DirichletMixture::new(DmmSpec::new(family), data.observations)
}

fn sorted_truth(cfg: &ExperimentConfig) -> Vec<f64> {
    let mut t = cfg.true_means.to_vec();
    t.sort_by(f64::total_cmp);
    t
}

fn replicate(cfg: &ExperimentConfig, budget_index: usize, replication: usize) -> Result<Vec<(DmmReplication, f64)>> {
    let budget = cfg.budgets[budget_index];
    let model = replication_data(cfg, replication)?;
    let init = DmmProposal::prior(&model)?;
    let kernel = DmmKernel::new(&model, cfg.kernel)?;
    let h = model.sorted_means();
    let truth = sorted_truth(cfg);
    let mut out = Vec::new();
    for &method in cfg.method.expand() {
        let start = Instant::now();
        let mut pmc = PmcConfig::new(budget, cfg.generations);
        pmc.kernel = cfg.kernel;
        let tag = match method {
            Method::Plain => 0,
            _ => {
                pmc = pmc.inflated(cfg.inflation_factor);
                1
            }
        };
        let mut rng = RandomSource::new(cfg.seed).derive(&[DMM_RUN_STREAM, budget_index as u64, replication as u64, tag]);
        let gens = run_pmc(&model, &init, &kernel, &h, &pmc, &mut rng)?;
        let trace = trace_metrics(&gens, &truth);
        let rep = DmmReplication {
            budget,
            method,
            replication,
            estimate: gens.last().expect("at least one generation").estimate.value.clone(),
            block_evals: trace.iter().map(|t| t.block_evals).sum(),
            trace,
        };
        out.push((rep, start.elapsed().as_secs_f64()));
    }
    Ok(out)
}

/// Runs plain and inflated PMC per replication and summarizes the final
/// sorted-mean estimates against the generating means.
pub fn run_dmm(cfg: &ExperimentConfig) -> Result<DmmRun> {
    if !cfg.experiment.is_dmm() {
        return Err(Error::Config(format!("{} is not a dmm experiment", cfg.experiment)));
    }
    cfg.validate()?;
    let jobs: Vec<(usize, usize)> = (0..cfg.budgets.len())
        .flat_map(|b| (0..cfg.replications).map(move |r| (b, r)))
        .collect();
    let results = in_pool(cfg.threads, || {
        jobs.par_iter()
            .map(|&(b, r)| replicate(cfg, b, r))
            .collect::<Result<Vec<_>>>()
    })??;

    let truth = sorted_truth(cfg);
    let mut series = MetricSeries::default();
    let mut replications = Vec::new();
    for (b, &budget) in cfg.budgets.iter().enumerate() {
        let cell = &results[b * cfg.replications..(b + 1) * cfg.replications];
        for &method in cfg.method.expand() {
            let picked: Vec<&(DmmReplication, f64)> = cell.iter().flatten().filter(|(r, _)| r.method == method).collect();
            let estimates: Vec<ReplicationEstimate> = picked
                .iter()
                .map(|(r, _)| ReplicationEstimate {
                    value: r.estimate.clone(),
                    log_evidence: None,
                })
                .collect();
            let key = RowKey {
                experiment: cfg.experiment.name(),
                method: method.name(),
                budget,
                wall_seconds: picked.iter().map(|(_, s)| s).sum(),
            };
            series.extend(summarize(key, &estimates, &truth, None)?);
        }
        replications.extend(cell.iter().flatten().map(|(r, _)| r.clone()));
    }
    Ok(DmmRun { series, replications })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::config::ExperimentKind;

    fn small(kind: ExperimentKind) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::new(kind, 5);
        cfg.budgets = vec![40];
        cfg.replications = 2;
        cfg.generations = 3;
        cfg.observations = 20;
        cfg
    }

    #[test]
    fn eval_parity_and_sample_ratio() {
        for kind in [ExperimentKind::DmmGauss, ExperimentKind::DmmT] {
            let run = run_dmm(&small(kind)).unwrap();
            for r in 0..2 {
                let plain = run.get(40, Method::Plain, r).unwrap();
                let inflated = run.get(40, Method::Inflated, r).unwrap();
                assert_eq!(plain.block_evals, inflated.block_evals);
                for (p, i) in plain.trace.iter().zip(&inflated.trace) {
                    assert_eq!(p.block_evals, 80);
                    assert_eq!(i.block_evals, 80);
                    assert_eq!(i.samples, 2 * p.samples);
                }
            }
            assert_eq!(run.series.len(), 4);
            assert!(run.series.rows.iter().all(|r| r.log_evidence_mse.is_none()));
        }
    }

    #[test]
    fn single_generation_trace() {
        let mut cfg = small(ExperimentKind::DmmGauss);
        cfg.generations = 1;
        cfg.method = Method::Plain;
        let run = run_dmm(&cfg).unwrap();
        assert!(run.replications.iter().all(|r| r.trace.len() == 1));
    }

    #[test]
    fn data_shared_across_methods() {
        let cfg = small(ExperimentKind::DmmT);
        let a = replication_data(&cfg, 1).unwrap();
        let b = replication_data(&cfg, 1).unwrap();
        let c = replication_data(&cfg, 0).unwrap();
        assert_eq!(a.data(), b.data());
        assert_ne!(a.data(), c.data());
    }
}
