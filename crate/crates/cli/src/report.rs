use std::fs::File;
use std::path::Path;

use serde::Serialize;

use crate::error::CliResult;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    /// Counted or simulated on concrete data.
    Measured,
    /// Closed-form or configuration-derived.
    Analytic,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReportRow {
    pub metric: String,
    pub layer: String,
    pub value: f64,
    pub units: &'static str,
    pub provenance: Provenance,
}

/// Collects rows in emission order; the CSV is written once at the end.
#[derive(Debug, Default)]
pub struct Report {
    rows: Vec<ReportRow>,
}

impl Report {
    pub fn push(&mut self, metric: &str, layer: &str, value: f64, units: &'static str, provenance: Provenance) {
        self.rows.push(ReportRow {
            metric: metric.to_string(),
            layer: layer.to_string(),
            value,
            units,
            provenance,
        });
    }

    pub fn measured(&mut self, metric: &str, layer: &str, value: f64, units: &'static str) {
        self.push(metric, layer, value, units, Provenance::Measured);
    }

    pub fn analytic(&mut self, metric: &str, layer: &str, value: f64, units: &'static str) {
        self.push(metric, layer, value, units, Provenance::Analytic);
    }

    pub fn write_csv(&self, path: &Path) -> CliResult<()> {
        write_rows(path, &self.rows)
    }
}

pub fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(File::create(path)?);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}
