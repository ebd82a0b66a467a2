//! Seeded experiment harness: the Gaussian toy comparison, Dirichlet
//! mixture PMC runs, the randomized property suite, and metric output.
//!
//! Every replication draws from its own source derived from the base seed
//! and its indices, and results are reduced in index order, so output does
//! not depend on the thread count.

pub mod config;
pub mod dmm;
pub mod gauss;
pub mod metrics;
pub mod output;
pub mod theorems;

pub use config::{ConfigFile, ExperimentConfig, ExperimentKind, Method, OutputFormat, TheoremConfig};
pub use dmm::{run_dmm, DmmReplication, DmmRun};
pub use gauss::{run_gauss, GaussReplication, GaussRun};
pub use metrics::{summarize, MetricRow, MetricSeries, ReplicationEstimate};
pub use output::emit;
pub use theorems::{run_theorem_suite, TheoremReport};

use crate::error::{Error, Result};

pub(crate) const GAUSS_STREAM: u64 = 1;
pub(crate) const DMM_DATA_STREAM: u64 = 2;
pub(crate) const DMM_RUN_STREAM: u64 = 3;
pub(crate) const THEOREM_STREAM: u64 = 4;

/// Runs `f` on a dedicated pool of `threads` workers, or on the global
/// pool when unset.
pub(crate) fn in_pool<R: Send>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(format!("cannot start {n} worker threads: {e}")))?;
            Ok(pool.install(f))
        }
    }
}
