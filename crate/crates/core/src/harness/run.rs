//! Single-run driver and its on-disk layout.
//!
//! A run directory holds `config.json` (the resolved scenario), `metrics.json`,
//! `timeseries.csv`, and, when enabled, `packets.csv` and `events.csv`.

use std::fmt::Write as _;
use std::fs;
use std::io::BufWriter;
use std::path::Path;

use crate::engine::{simulate, PacketRecord, PacketState, RunOutput, TimeseriesRow};
use crate::error::Result;
use crate::harness::config::ScenarioConfig;

pub const CONFIG_FILE: &str = "config.json";
pub const METRICS_FILE: &str = "metrics.json";
pub const TIMESERIES_FILE: &str = "timeseries.csv";
pub const PACKETS_FILE: &str = "packets.csv";
pub const EVENTS_FILE: &str = "events.csv";

/// Formats a float with 9 significant digits and no exponent, so CSV output is
/// byte-stable across platforms.
pub fn sig9(x: f64) -> String {
    if !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let exp = x.abs().log10().floor() as i32;
    let decimals = (8 - exp).max(0) as usize;
    let s = format!("{x:.decimals$}");
    if s.starts_with('-') && s[1..].chars().all(|c| c == '0' || c == '.') {
        s[1..].to_string()
    } else {
        s
    }
}

/// Like [`sig9`], but integral values print without a fraction. Used for
/// flattened metrics where counts and ratios share a column.
pub fn num_cell(x: f64) -> String {
    if x.fract() == 0.0 && x.abs() < 1e15 {
        format!("{}", x as i64)
    } else {
        sig9(x)
    }
}

fn opt9(x: Option<f64>) -> String {
    x.map(sig9).unwrap_or_default()
}

pub fn metrics_json(out: &RunOutput) -> String {
    let mut s = serde_json::to_string_pretty(&out.metrics).expect("metrics serialize");
    s.push('\n');
    s
}

pub fn timeseries_csv(rows: &[TimeseriesRow]) -> String {
    let mut s = String::from(
        "time,generated,delivered,dropped,inFlight,meanUtilization,energyJoules,dataFramesSent,meanDegree,asleepNodes\n",
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{}",
            sig9(r.time),
            r.generated,
            r.delivered,
            r.dropped,
            r.in_flight,
            sig9(r.mean_utilization),
            sig9(r.energy_joules),
            r.data_frames_sent,
            sig9(r.mean_degree),
            r.asleep_nodes
        );
    }
    s
}

pub fn packets_csv(records: &[PacketRecord]) -> String {
    let mut s = String::from("id,flow,class,source,createdAt,deadline,state,reason,delay,hops,rebinds\n");
    for r in records {
        let (state, reason) = match r.state {
            PacketState::InFlight => ("inFlight", ""),
            PacketState::Delivered => ("delivered", ""),
            PacketState::Dropped(why) => ("dropped", why.as_str()),
        };
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.id,
            r.flow,
            r.priority_class,
            r.source.0,
            sig9(r.created_at.secs()),
            sig9(r.deadline.secs()),
            state,
            reason,
            opt9(r.delay()),
            r.hops.len().saturating_sub(1),
            r.rebinds
        );
    }
    s
}

/// Writes every artifact of a finished run into `dir`, creating it if needed.
pub fn write_run(dir: &Path, cfg: &ScenarioConfig, out: &RunOutput) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut config = serde_json::to_string_pretty(&cfg.to_value())?;
    config.push('\n');
    fs::write(dir.join(CONFIG_FILE), config)?;
    fs::write(dir.join(METRICS_FILE), metrics_json(out))?;
    fs::write(dir.join(TIMESERIES_FILE), timeseries_csv(&out.timeseries))?;
    if cfg.outputs.packet_trace {
        fs::write(dir.join(PACKETS_FILE), packets_csv(out.ledger.records()))?;
    }
    if cfg.outputs.event_trace {
        let f = BufWriter::new(fs::File::create(dir.join(EVENTS_FILE))?);
        out.trace.write_lines(f)?;
    }
    Ok(())
}

/// Validates, simulates with `seed`, and writes the run directory.
pub fn run_scenario(cfg: &ScenarioConfig, seed: u64, dir: &Path) -> Result<RunOutput> {
    cfg.validate()?;
    let out = simulate(cfg, seed)?;
    write_run(dir, cfg, &out)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig9_keeps_nine_significant_digits() {
        assert_eq!(sig9(0.0), "0");
        assert_eq!(sig9(1.0), "1.00000000");
        assert_eq!(sig9(123.456), "123.456000");
        assert_eq!(sig9(0.001234), "0.00123400000");
        assert_eq!(sig9(-2.5), "-2.50000000");
        assert_eq!(sig9(1234567890.0), "1234567890");
    }

    #[test]
    fn sig9_never_prints_negative_zero() {
        assert_eq!(sig9(-1e-30 * 0.0), "0");
    }
}
