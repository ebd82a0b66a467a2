//! Replication summaries: squared bias, variance and MSE per component.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One row per (budget, method, component).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub experiment: String,
    pub method: String,
    pub budget: usize,
    pub replications: usize,
    pub component: usize,
    pub squared_bias: f64,
    pub variance: f64,
    pub mse: f64,
    pub mean_estimate: f64,
    /// Mean squared error of the log evidence estimate; absent when the
    /// true evidence is unknown.
    pub log_evidence_mse: Option<f64>,
    pub wall_seconds: f64,
}

pub const COLUMNS: [&str; 11] = [
    "experiment",
    "method",
    "budget",
    "replications",
    "component",
    "squared_bias",
    "variance",
    "mse",
    "mean_estimate",
    "log_evidence_mse",
    "wall_seconds",
];

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MetricSeries {
    pub rows: Vec<MetricRow>,
}

impl MetricSeries {
    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn extend(&mut self, other: MetricSeries) {
        self.rows.extend(other.rows);
    }

    pub fn row(&self, method: &str, budget: usize, component: usize) -> Option<&MetricRow> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.budget == budget && r.component == component)
    }
}

/// One replication's final estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationEstimate {
    pub value: Vec<f64>,
    pub log_evidence: Option<f64>,
}

/// Labels attached to every row of one summary.
#[derive(Debug, Clone, Copy)]
pub struct RowKey<'a> {
    pub experiment: &'a str,
    pub method: &'a str,
    pub budget: usize,
    pub wall_seconds: f64,
}

/// Variance is the population variance over replications (divisor `R`),
/// so `mse = variance + squared_bias` up to rounding.
pub fn summarize(
    key: RowKey<'_>,
    estimates: &[ReplicationEstimate],
    truth: &[f64],
    log_evidence_truth: Option<f64>,
) -> Result<MetricSeries> {
    if estimates.len() < 2 {
        return Err(Error::Config(format!(
            "need at least 2 replications, got {}",
            estimates.len()
        )));
    }
    if let Some(e) = estimates.iter().find(|e| e.value.len() != truth.len()) {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            got: e.value.len(),
        });
    }
    let r = estimates.len() as f64;
    let log_evidence_mse = log_evidence_truth.and_then(|t| {
        estimates
            .iter()
            .map(|e| e.log_evidence.map(|l| (l - t) * (l - t)))
            .sum::<Option<f64>>()
            .map(|s| s / r)
    });
    let rows = truth
        .iter()
        .enumerate()
        .map(|(c, &t)| {
            let mean = estimates.iter().map(|e| e.value[c]).sum::<f64>() / r;
            let variance = estimates.iter().map(|e| (e.value[c] - mean).powi(2)).sum::<f64>() / r;
            let mse = estimates.iter().map(|e| (e.value[c] - t).powi(2)).sum::<f64>() / r;
            MetricRow {
                experiment: key.experiment.to_string(),
                method: key.method.to_string(),
                budget: key.budget,
                replications: estimates.len(),
                component: c,
                squared_bias: (mean - t).powi(2),
                variance,
                mse,
                mean_estimate: mean,
                log_evidence_mse,
                wall_seconds: key.wall_seconds,
            }
        })
        .collect();
    Ok(MetricSeries { rows })
}
