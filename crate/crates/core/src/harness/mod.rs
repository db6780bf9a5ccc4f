//! Scenario configuration, metrics, and the run/sweep/report drivers.

pub mod config;
pub mod metrics;
pub mod report;
pub mod run;
pub mod sweep;
