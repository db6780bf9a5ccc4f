//! Cartesian parameter sweeps over (value, seed).

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde_json::Value;

use crate::engine::simulate;
use crate::error::{Result, SimError};
use crate::harness::config::{resolve_path, set_path, ScenarioConfig};
use crate::harness::metrics::RunMetrics;
use crate::harness::run::num_cell;

pub const SWEEP_CSV: &str = "sweep.csv";

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub value: Value,
    pub seed: u64,
    pub metrics: RunMetrics,
}

/// Parses `a,b,c` into JSON values; bare words become strings. A list written as
/// a JSON array is taken as is, which allows object values.
pub fn parse_values(list: &str) -> Vec<Value> {
    if let Ok(Value::Array(items)) = serde_json::from_str(list.trim()) {
        return items;
    }
    list.split(',').map(str::trim).filter(|s| !s.is_empty()).map(crate::harness::config::parse_scalar).collect()
}

/// Parses a seed list such as `1,2,5` or `1-10` (inclusive), or a mix of both.
pub fn parse_seeds(list: &str) -> Result<Vec<u64>> {
    let mut out = Vec::new();
    for part in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let bad = || SimError::Parse(format!("bad seed list entry `{part}`"));
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (u64, u64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
                if a > b {
                    return Err(bad());
                }
                out.extend(a..=b);
            }
            None => out.push(part.parse().map_err(|_| bad())?),
        }
    }
    Ok(out)
}

/// Builds the config for one sweep point.
pub fn point_config(base: &ScenarioConfig, path: &str, value: &Value) -> Result<ScenarioConfig> {
    let mut v = base.to_value();
    set_path(&mut v, path, value.clone())?;
    ScenarioConfig::from_value(v)
}

/// Runs every (value, seed) pair, in parallel, and returns rows ordered by value
/// index then seed index regardless of completion order.
pub fn sweep(base: &ScenarioConfig, path: &str, values: &[Value], seeds: &[u64]) -> Result<Vec<SweepRow>> {
    // The path has to name an existing slot; sweeping is not a way to add keys.
    resolve_path(&mut base.to_value(), path)?;
    let configs: Vec<ScenarioConfig> = values.iter().map(|v| point_config(base, path, v)).collect::<Result<_>>()?;
    let jobs: Vec<(usize, u64)> = (0..values.len()).flat_map(|i| seeds.iter().map(move |&s| (i, s))).collect();
    let results: Vec<Result<RunMetrics>> =
        jobs.par_iter().map(|&(i, seed)| simulate(&configs[i], seed).map(|o| o.metrics)).collect();
    jobs.iter()
        .zip(results)
        .map(|(&(i, seed), m)| Ok(SweepRow { value: values[i].clone(), seed, metrics: m? }))
        .collect()
}

fn value_cell(v: &Value) -> String {
    let s = match v {
        Value::String(s) => s.clone(),
        Value::Number(n) => n.as_f64().map(num_cell).unwrap_or_else(|| n.to_string()),
        other => other.to_string(),
    };
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s
    }
}

/// One header line, then one line per row: `value,seed,<flattened metrics...>`.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let flats: Vec<_> = rows.iter().map(|r| r.metrics.flatten()).collect();
    // Histogram buckets differ between runs, so the header is the union of keys.
    let keys: BTreeSet<&String> = flats.iter().flat_map(|f| f.keys()).collect();
    let mut s = String::from("value,seed");
    for k in &keys {
        let _ = write!(s, ",{k}");
    }
    s.push('\n');
    for (r, flat) in rows.iter().zip(&flats) {
        let cells: Vec<String> = keys.iter().map(|k| flat.get(*k).map(|x| num_cell(*x)).unwrap_or_default()).collect();
        let _ = writeln!(s, "{},{},{}", value_cell(&r.value), r.seed, cells.join(","));
    }
    s
}

pub fn write_sweep(dir: &Path, rows: &[SweepRow]) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(SWEEP_CSV), sweep_csv(rows))?;
    Ok(())
}
