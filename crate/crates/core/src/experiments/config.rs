//! Experiment configuration.
//!
//! Config files are flat TOML: one `key = value` per line, typed values,
//! no tables, and a mandatory `schema_version`.
//!
//! ```text
//! schema_version = 1
//! experiment = "gauss-centered"
//! budgets = [200, 2000, 20000]
//! replications = 50
//! seed = 42
//! method = "both"
//! group_size = 100
//! ```
//!
//! Command-line flags are layered over the file; any key left unset falls
//! back to a per-experiment default.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::dmm::ComponentFamily;
use crate::pmc::KernelConfig;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    GaussCentered,
    GaussOffcenter,
    DmmGauss,
    DmmT,
    TheoremSuite,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 5] = [
        ExperimentKind::GaussCentered,
        ExperimentKind::GaussOffcenter,
        ExperimentKind::DmmGauss,
        ExperimentKind::DmmT,
        ExperimentKind::TheoremSuite,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::GaussCentered => "gauss-centered",
            ExperimentKind::GaussOffcenter => "gauss-offcenter",
            ExperimentKind::DmmGauss => "dmm-gauss",
            ExperimentKind::DmmT => "dmm-t",
            ExperimentKind::TheoremSuite => "theorem-suite",
        }
    }

    pub fn is_gauss(self) -> bool {
        matches!(self, ExperimentKind::GaussCentered | ExperimentKind::GaussOffcenter)
    }

    pub fn is_dmm(self) -> bool {
        matches!(self, ExperimentKind::DmmGauss | ExperimentKind::DmmT)
    }

    pub fn family(self) -> Option<ComponentFamily> {
        match self {
            ExperimentKind::DmmGauss => Some(ComponentFamily::Gaussian),
            ExperimentKind::DmmT => Some(ComponentFamily::StudentT),
            _ => None,
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ExperimentKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown experiment {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Plain,
    Inflated,
    Both,
}

impl Method {
    /// The concrete methods run, in output order.
    pub fn expand(self) -> &'static [Method] {
        match self {
            Method::Plain => &[Method::Plain],
            Method::Inflated => &[Method::Inflated],
            Method::Both => &[Method::Plain, Method::Inflated],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Plain => "plain",
            Method::Inflated => "inflated",
            Method::Both => "both",
        }
    }

    pub fn includes_inflated(self) -> bool {
        self != Method::Plain
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Method::Plain, Method::Inflated, Method::Both]
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            _ => Err(Error::Config(format!("unknown output format {s:?}"))),
        }
    }
}

/// Every settable key, all optional. Files and command-line flags both
/// produce one of these; [`ConfigFile::layer`] stacks them.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub schema_version: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub experiment: Option<ExperimentKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub budgets: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replications: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<Method>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub group_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub proposal_df: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sanity: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inflation_factor: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_scale: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_kernel_df: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub positive_cv: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub simplex_concentration: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label_smoothing: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub observations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub true_means: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub instances: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_set_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_log_weight_span: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cache_instances: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub format: Option<OutputFormat>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
}

impl ConfigFile {
    /// Parses a config file; `schema_version` must be present and current.
    pub fn parse(text: &str) -> Result<Self> {
        let file: ConfigFile = toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
                .unwrap_or(0);
            Error::Parse {
                line,
                message: e.message().to_string(),
            }
        })?;
        match file.schema_version {
            Some(SCHEMA_VERSION) => Ok(file),
            Some(v) => Err(Error::Config(format!(
                "schema_version {v} is not supported (expected {SCHEMA_VERSION})"
            ))),
            None => Err(Error::Config("config file lacks schema_version".into())),
        }
    }

    pub fn read(path: &std::path::Path) -> Result<Self> {
        ConfigFile::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("flat config always serializes")
    }

    /// Keys set in `over` replace those in `self`.
    pub fn layer(self, over: ConfigFile) -> ConfigFile {
        let mut base = serde_json::to_value(self).expect("config serializes");
        let top = serde_json::to_value(over).expect("config serializes");
        if let (Some(b), serde_json::Value::Object(t)) = (base.as_object_mut(), top) {
            b.extend(t);
        }
        serde_json::from_value(base).expect("layered config deserializes")
    }

    pub fn resolve(self) -> Result<ExperimentConfig> {
        let experiment = self
            .experiment
            .ok_or_else(|| Error::Config("experiment is not set".into()))?;
        let seed = self
            .seed
            .ok_or_else(|| Error::Config("seed is required for reproducibility".into()))?;
        let defaults = KernelConfig::default();
        let budgets = self.budgets.unwrap_or_else(|| match experiment {
            ExperimentKind::GaussCentered | ExperimentKind::GaussOffcenter => vec![200, 2_000, 20_000],
            ExperimentKind::DmmGauss | ExperimentKind::DmmT => vec![2_000],
            ExperimentKind::TheoremSuite => Vec::new(),
        });
        let cfg = ExperimentConfig {
            experiment,
            budgets,
            replications: self.replications.unwrap_or(50),
            seed,
            method: self.method.unwrap_or(Method::Both),
            group_size: self.group_size.unwrap_or(100),
            proposal_df: self.proposal_df.unwrap_or(20.0),
            sanity: self.sanity.unwrap_or(false),
            generations: self.generations.unwrap_or(10),
            inflation_factor: self.inflation_factor.unwrap_or(2),
            kernel: KernelConfig {
                mean_scale: self.mean_scale.unwrap_or(defaults.mean_scale),
                mean_kernel_df: self.mean_kernel_df.unwrap_or(defaults.mean_kernel_df),
                positive_cv: self.positive_cv.unwrap_or(defaults.positive_cv),
                simplex_concentration: self
                    .simplex_concentration
                    .unwrap_or(defaults.simplex_concentration),
                label_smoothing: self.label_smoothing.unwrap_or(defaults.label_smoothing),
            },
            observations: self.observations.unwrap_or(crate::models::synthetic::DEFAULT_OBSERVATIONS),
            true_means: self.true_means.unwrap_or([-2.0, 2.0]),
            theorems: TheoremConfig {
                instances: self.instances.unwrap_or(500),
                max_set_size: self.max_set_size.unwrap_or(1000),
                max_log_weight_span: self.max_log_weight_span.unwrap_or(600.0),
                cache_instances: self.cache_instances.unwrap_or(200),
            },
            output: self.output,
            format: self.format.unwrap_or_default(),
            threads: self.threads,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Sizes of the randomized property suite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoremConfig {
    pub instances: usize,
    pub max_set_size: usize,
    pub max_log_weight_span: f64,
    pub cache_instances: usize,
}

impl Default for TheoremConfig {
    fn default() -> Self {
        TheoremConfig {
            instances: 500,
            max_set_size: 1000,
            max_log_weight_span: 600.0,
            cache_instances: 200,
        }
    }
}

/// A fully resolved, validated experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    /// Proposal draws per replication (gauss) or plain population size per
    /// generation (dmm).
    pub budgets: Vec<usize>,
    pub replications: usize,
    pub seed: u64,
    pub method: Method,
    pub group_size: usize,
    pub proposal_df: f64,
    /// Replaces the Student-t proposal by the target itself and drops the
    /// evidence offset, so every weight is one.
    pub sanity: bool,
    pub generations: usize,
    pub inflation_factor: usize,
    pub kernel: KernelConfig,
    pub observations: usize,
    pub true_means: [f64; 2],
    pub theorems: TheoremConfig,
    pub output: Option<PathBuf>,
    pub format: OutputFormat,
    pub threads: Option<usize>,
}

impl ExperimentConfig {
    /// Defaults for `experiment` at `seed`.
    pub fn new(experiment: ExperimentKind, seed: u64) -> Self {
        ConfigFile {
            experiment: Some(experiment),
            seed: Some(seed),
            ..ConfigFile::default()
        }
        .resolve()
        .expect("defaults are valid")
    }

    pub fn validate(&self) -> Result<()> {
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        if self.experiment == ExperimentKind::TheoremSuite {
            let t = &self.theorems;
            if t.instances == 0 || t.max_set_size == 0 {
                return Err(Error::Config("theorem suite needs instances and a set size".into()));
            }
            if !(t.max_log_weight_span >= 0.0 && t.max_log_weight_span.is_finite()) {
                return Err(Error::Config("max_log_weight_span must be finite and nonnegative".into()));
            }
            return Ok(());
        }
        if self.replications < 2 {
            return Err(Error::Config(format!(
                "at least 2 replications are needed for a variance, got {}",
                self.replications
            )));
        }
        if self.budgets.is_empty() {
            return Err(Error::Config("no budgets given".into()));
        }
        if self.budgets[0] == 0 {
            return Err(Error::Config("budgets must be positive".into()));
        }
        if let Some(w) = self.budgets.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!(
                "budgets must be strictly increasing, got {} then {}",
                w[0], w[1]
            )));
        }
        if self.experiment.is_gauss() {
            if !(self.proposal_df > 0.0) {
                return Err(Error::Config("proposal_df must be positive".into()));
            }
            if self.method.includes_inflated() {
                if self.group_size == 0 {
                    return Err(Error::Config("group_size must be positive".into()));
                }
                if let Some(&b) = self.budgets.iter().find(|&&b| b < self.group_size || b % self.group_size != 0) {
                    return Err(Error::Config(format!(
                        "budget {b} is not a positive multiple of group_size {}",
                        self.group_size
                    )));
                }
            }
        }
        if self.experiment.is_dmm() {
            if self.generations == 0 || self.observations == 0 {
                return Err(Error::Config("generations and observations must be positive".into()));
            }
            self.kernel.validate()?;
            if self.method.includes_inflated() {
                let m = self.inflation_factor;
                if m == 0 {
                    return Err(Error::Config("inflation_factor must be positive".into()));
                }
                if let Some(&b) = self.budgets.iter().find(|&&b| b % m != 0) {
                    return Err(Error::Config(format!(
                        "budget {b} is not divisible by inflation_factor {m}"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_flat_file() {
        let text = "schema_version = 1\nexperiment = \"gauss-offcenter\"\nbudgets = [100, 300]\nreplications = 4\nseed = 9\nmethod = \"inflated\"\n";
        let cfg = ConfigFile::parse(text).unwrap().resolve().unwrap();
        assert_eq!(cfg.experiment, ExperimentKind::GaussOffcenter);
        assert_eq!(cfg.budgets, vec![100, 300]);
        assert_eq!(cfg.method, Method::Inflated);
        assert_eq!(cfg.group_size, 100);
    }

    #[test]
    fn schema_version_required() {
        assert!(matches!(ConfigFile::parse("seed = 1\n"), Err(Error::Config(_))));
        assert!(matches!(ConfigFile::parse("schema_version = 2\n"), Err(Error::Config(_))));
    }

    #[test]
    fn unknown_key_reports_line() {
        let err = ConfigFile::parse("schema_version = 1\n\nbogus = 3\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
    }

    #[test]
    fn layering_prefers_the_top() {
        let file = ConfigFile::parse("schema_version = 1\nexperiment = \"dmm-t\"\nseed = 1\ngenerations = 4\n").unwrap();
        let flags = ConfigFile {
            seed: Some(7),
            ..ConfigFile::default()
        };
        let cfg = file.layer(flags).resolve().unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.generations, 4);
        assert_eq!(cfg.budgets, vec![2000]);
    }

    #[test]
    fn text_round_trip() {
        let file = ConfigFile {
            schema_version: Some(SCHEMA_VERSION),
            experiment: Some(ExperimentKind::DmmGauss),
            seed: Some(3),
            true_means: Some([-1.5, 2.5]),
            ..ConfigFile::default()
        };
        assert_eq!(ConfigFile::parse(&file.to_text()).unwrap(), file);
    }

    #[test]
    fn validation() {
        let base = ExperimentConfig::new(ExperimentKind::GaussCentered, 1);
        let bad = |f: &dyn Fn(&mut ExperimentConfig)| {
            let mut c = base.clone();
            f(&mut c);
            c.validate().is_err()
        };
        assert!(bad(&|c| c.replications = 1));
        assert!(bad(&|c| c.budgets = vec![2000, 200]));
        assert!(bad(&|c| c.budgets = vec![200, 200]));
        assert!(bad(&|c| c.budgets = vec![50]));
        assert!(bad(&|c| c.budgets = vec![250]));
        assert!(bad(&|c| c.budgets.clear()));
        assert!(!bad(&|c| {
            c.budgets = vec![250];
            c.method = Method::Plain;
        }));
        let dmm = ExperimentConfig::new(ExperimentKind::DmmT, 1);
        let mut c = dmm.clone();
        c.budgets = vec![2001];
        assert!(c.validate().is_err());
        c.method = Method::Plain;
        assert!(c.validate().is_ok());
        assert!(ConfigFile::default().resolve().is_err());
        let no_seed = ConfigFile {
            experiment: Some(ExperimentKind::DmmT),
            ..ConfigFile::default()
        };
        assert!(no_seed.resolve().is_err());
    }
}
