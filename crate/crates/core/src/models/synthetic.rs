//! Two-component synthetic mixture data and its text format.
//!
//! ```text
//! # synthetic-mixture v1
//! # kind=gaussian seed=42 means=-2,2 df=30
//! -1.8803
//! ...
//! ```

use std::fmt::Write as _;
use std::path::Path;

use crate::distributions::{DensitySpec, RandomSource};
use crate::error::{Error, Result};
use crate::models::dmm::ComponentFamily;

pub const DEFAULT_OBSERVATIONS: usize = 100;
/// Degrees of freedom of Student-t generating components.
pub const GENERATING_DF: f64 = 30.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub kind: ComponentFamily,
    pub observations: Vec<f64>,
    pub means: [f64; 2],
    pub seed: u64,
}

/// Draws `n` points from an equal-weight mixture of two unit-scale
/// components centered at `means`.
pub fn make_synthetic_n(kind: ComponentFamily, means: [f64; 2], seed: u64, n: usize) -> Result<SyntheticDataset> {
    let mut rng = RandomSource::new(seed);
    let comps = means
        .iter()
        .map(|&m| match kind {
            ComponentFamily::Gaussian => DensitySpec::diag_gaussian(vec![m], vec![1.0]),
            ComponentFamily::StudentT => DensitySpec::student_t(m, 1.0, GENERATING_DF),
        })
        .collect::<Result<Vec<_>>>()?;
    let observations = (0..n)
        .map(|_| {
            let k = usize::from(rng.uniform() >= 0.5);
            comps[k].sample(&mut rng).map(|v| v[0])
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SyntheticDataset {
        kind,
        observations,
        means,
        seed,
    })
}

pub fn make_synthetic(kind: ComponentFamily, means: [f64; 2], seed: u64) -> Result<SyntheticDataset> {
    make_synthetic_n(kind, means, seed, DEFAULT_OBSERVATIONS)
}

impl SyntheticDataset {
    pub fn to_text(&self) -> String {
        let mut out = String::from("# synthetic-mixture v1\n");
        let _ = writeln!(
            out,
            "# kind={} seed={} means={},{} df={}",
            self.kind.name(),
            self.seed,
            self.means[0],
            self.means[1],
            GENERATING_DF
        );
        for x in &self.observations {
            let _ = writeln!(out, "{x}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let parse_err = |line: usize, message: String| Error::Parse { line: line + 1, message };
        match lines.next() {
            Some((_, "# synthetic-mixture v1")) => {}
            _ => return Err(parse_err(0, "missing synthetic-mixture v1 header".into())),
        }
        let (hl, header) = lines
            .next()
            .ok_or_else(|| parse_err(1, "missing metadata line".into()))?;
        let meta = header
            .strip_prefix("# ")
            .ok_or_else(|| parse_err(hl, "metadata line must start with '# '".into()))?;
        let (mut kind, mut seed, mut means) = (None, None, None);
        for field in meta.split_whitespace() {
            let (key, value) = field
                .split_once('=')
                .ok_or_else(|| parse_err(hl, format!("malformed field {field:?}")))?;
            match key {
                "kind" => kind = Some(value.parse::<ComponentFamily>()?),
                "seed" => {
                    seed = Some(value.parse::<u64>().map_err(|e| parse_err(hl, e.to_string()))?)
                }
                "means" => {
                    let parts: Vec<f64> = value
                        .split(',')
                        .map(|v| v.parse::<f64>().map_err(|e| parse_err(hl, e.to_string())))
                        .collect::<Result<_>>()?;
                    if parts.len() != 2 {
                        return Err(parse_err(hl, "expected two means".into()));
                    }
                    means = Some([parts[0], parts[1]]);
                }
                "df" => {}
                other => return Err(parse_err(hl, format!("unknown field {other:?}"))),
            }
        }
        let mut observations = Vec::new();
        for (i, line) in lines {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            observations.push(line.parse::<f64>().map_err(|e| parse_err(i, e.to_string()))?);
        }
        Ok(SyntheticDataset {
            kind: kind.ok_or_else(|| parse_err(hl, "missing kind".into()))?,
            seed: seed.ok_or_else(|| parse_err(hl, "missing seed".into()))?,
            means: means.ok_or_else(|| parse_err(hl, "missing means".into()))?,
            observations,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        SyntheticDataset::from_text(&std::fs::read_to_string(path)?)
    }
}
