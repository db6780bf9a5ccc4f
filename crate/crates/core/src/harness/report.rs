//! Side-by-side comparison of finished run directories.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde_json::Value;

use crate::error::{Result, SimError};
use crate::harness::config::SCHEMA_VERSION;
use crate::harness::metrics::flatten_value;
use crate::harness::run::{num_cell, METRICS_FILE};

/// Metric rows for each run; the first run is the baseline for deltas.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub labels: Vec<String>,
    pub rows: Vec<ReportRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub metric: String,
    pub values: Vec<Option<f64>>,
}

impl ReportRow {
    /// (v − base) / base for each run after the first; None when undefined.
    pub fn rel_deltas(&self) -> Vec<Option<f64>> {
        let base = self.values.first().copied().flatten();
        self.values[1..]
            .iter()
            .map(|v| match (base, v) {
                (Some(b), Some(v)) if b != 0.0 => Some((v - b) / b),
                (Some(b), Some(v)) if b == 0.0 && *v == 0.0 => Some(0.0),
                _ => None,
            })
            .collect()
    }
}

/// Reads `metrics.json` and checks its schema version.
pub fn load_metrics(dir: &Path) -> Result<Value> {
    let text = fs::read_to_string(dir.join(METRICS_FILE))?;
    let v: Value = serde_json::from_str(&text)?;
    match v.get("schemaVersion").and_then(Value::as_u64) {
        Some(s) if s == SCHEMA_VERSION as u64 => Ok(v),
        Some(s) => Err(SimError::SchemaMismatch(format!("{} has {s}, expected {SCHEMA_VERSION}", dir.display()))),
        None => Err(SimError::SchemaMismatch(format!("{} has no schemaVersion", dir.display()))),
    }
}

fn label_for(dir: &Path, idx: usize) -> String {
    dir.file_name().map(|n| n.to_string_lossy().into_owned()).filter(|s| !s.is_empty()).unwrap_or_else(|| format!("run{idx}"))
}

pub fn report(dirs: &[impl AsRef<Path>]) -> Result<Report> {
    if dirs.is_empty() {
        return Err(SimError::Parse("report needs at least one run directory".into()));
    }
    let mut labels = Vec::new();
    let mut flats = Vec::new();
    for (i, d) in dirs.iter().enumerate() {
        let v = load_metrics(d.as_ref())?;
        let mut flat = BTreeMap::new();
        flatten_value("", &v, &mut flat);
        flats.push(flat);
        let mut label = label_for(d.as_ref(), i);
        if labels.contains(&label) {
            label = format!("{label}#{i}");
        }
        labels.push(label);
    }
    let mut metrics: Vec<String> = flats.iter().flat_map(|f| f.keys().cloned()).collect();
    metrics.sort();
    metrics.dedup();
    let rows = metrics
        .into_iter()
        .map(|m| ReportRow { values: flats.iter().map(|f| f.get(&m).copied()).collect(), metric: m })
        .collect();
    Ok(Report { labels, rows })
}

impl Report {
    /// `metric,<label...>,rel:<label...>` with deltas against the first run.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("metric");
        for l in &self.labels {
            let _ = write!(s, ",{l}");
        }
        for l in &self.labels[1..] {
            let _ = write!(s, ",rel:{l}");
        }
        s.push('\n');
        let cell = |x: Option<f64>| x.map(num_cell).unwrap_or_default();
        for r in &self.rows {
            s.push_str(&r.metric);
            for v in &r.values {
                let _ = write!(s, ",{}", cell(*v));
            }
            for d in r.rel_deltas() {
                let _ = write!(s, ",{}", cell(d));
            }
            s.push('\n');
        }
        s
    }

    pub fn row(&self, metric: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.metric == metric)
    }
}
