use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sensornet::error::{Result, SimError};
use sensornet::harness::config::ScenarioConfig;
use sensornet::harness::{report, run, sweep};

#[derive(Parser)]
#[command(name = "sensornet", version, about = "Wireless sensor network simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one scenario and write its outputs to a directory.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Defaults to the seed stored in the config.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Dotted config path and JSON value, e.g. `routing.mode=lazyBinding`.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Run every (value, seed) combination of one parameter.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long)]
        values: String,
        /// Comma-separated seeds; `a-b` expands to an inclusive range.
        #[arg(long)]
        seeds: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Compare run directories; the first one is the baseline for deltas.
    Report {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the built-in reference scenario as JSON.
    Reference,
}

fn load(config: &Path, overrides: &[String]) -> Result<ScenarioConfig> {
    ScenarioConfig::load(config)?.with_overrides(overrides)
}

fn exec(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Run { config, seed, out, overrides } => {
            let cfg = load(&config, &overrides)?;
            let seed = seed.unwrap_or(cfg.seed);
            let o = run::run_scenario(&cfg, seed, &out)?;
            let p = &o.metrics.packets;
            println!(
                "seed {seed}: generated {} delivered {} dropped {} in-flight {} miss ratio {:.4}",
                p.generated, p.delivered, p.dropped_total, p.in_flight_at_end, p.deadline_miss_ratio
            );
        }
        Cmd::Sweep { config, param, values, seeds, out, overrides } => {
            let cfg = load(&config, &overrides)?;
            let values = sweep::parse_values(&values);
            let seeds = sweep::parse_seeds(&seeds)?;
            if values.is_empty() || seeds.is_empty() {
                return Err(SimError::Parse("sweep needs at least one value and one seed".into()));
            }
            let rows = sweep::sweep(&cfg, &param, &values, &seeds)?;
            sweep::write_sweep(&out, &rows)?;
            println!("{} rows written to {}", rows.len(), out.join(sweep::SWEEP_CSV).display());
        }
        Cmd::Report { dirs, out } => {
            let csv = report::report(&dirs)?.to_csv();
            match out {
                Some(path) => std::fs::write(path, csv)?,
                None => print!("{csv}"),
            }
        }
        Cmd::Reference => {
            println!("{}", serde_json::to_string_pretty(&ScenarioConfig::reference().to_value())?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match exec(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error: {}: {msg}", e.kind());
            ExitCode::FAILURE
        }
    }
}
