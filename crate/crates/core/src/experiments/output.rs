//! CSV and JSON output of metric series.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::experiments::config::OutputFormat;
use crate::experiments::metrics::MetricSeries;

fn require_rows(series: &MetricSeries) -> Result<()> {
    if series.is_empty() {
        Err(Error::Config("refusing to emit an empty metric series".into()))
    } else {
        Ok(())
    }
}

pub fn to_csv(series: &MetricSeries) -> Result<String> {
    require_rows(series)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in &series.rows {
        w.serialize(row)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn to_json(series: &MetricSeries) -> Result<String> {
    require_rows(series)?;
    Ok(serde_json::to_string_pretty(series)?)
}

/// Writes `series` to `path`. An empty series is refused before the file
/// is created.
pub fn emit(series: &MetricSeries, path: &Path, format: OutputFormat) -> Result<()> {
    let text = match format {
        OutputFormat::Csv => to_csv(series)?,
        OutputFormat::Json => to_json(series)?,
    };
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_json(path: &Path) -> Result<MetricSeries> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

pub fn read_csv(path: &Path) -> Result<MetricSeries> {
    let mut r = csv::Reader::from_path(path)?;
    let rows = r.deserialize().collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(MetricSeries { rows })
}

/// Pretty JSON for any serializable report.
pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut f = File::create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::metrics::{MetricRow, COLUMNS};

    fn series() -> MetricSeries {
        let mut rows = Vec::new();
        for budget in [200, 2000] {
            for method in ["plain", "inflated"] {
                for component in 0..2 {
                    rows.push(MetricRow {
                        experiment: "gauss-centered".into(),
                        method: method.into(),
                        budget,
                        replications: 5,
                        component,
                        squared_bias: 0.1 / budget as f64,
                        variance: 1.0 / 3.0,
                        mse: 1.0 / 3.0 + 0.1 / budget as f64,
                        mean_estimate: -1e-17 * component as f64,
                        log_evidence_mse: (component == 0).then_some(std::f64::consts::PI),
                        wall_seconds: 0.25,
                    });
                }
            }
        }
        MetricSeries { rows }
    }

    #[test]
    fn csv_layout() {
        let text = to_csv(&series()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 9);
        assert_eq!(lines[0], COLUMNS.join(","));
    }

    #[test]
    fn round_trips_are_exact() {
        let dir = tempfile::tempdir().unwrap();
        let s = series();
        let json = dir.path().join("m.json");
        emit(&s, &json, OutputFormat::Json).unwrap();
        assert_eq!(read_json(&json).unwrap(), s);
        let csv = dir.path().join("m.csv");
        emit(&s, &csv, OutputFormat::Csv).unwrap();
        assert_eq!(read_csv(&csv).unwrap(), s);
    }

    #[test]
    fn empty_series_creates_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.csv");
        for format in [OutputFormat::Csv, OutputFormat::Json] {
            assert!(emit(&MetricSeries::default(), &path, format).is_err());
            assert!(!path.exists());
        }
    }

    #[test]
    fn unwritable_path_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("missing").join("m.csv");
        assert!(matches!(emit(&series(), &path, OutputFormat::Csv), Err(Error::Io(_))));
    }
}
