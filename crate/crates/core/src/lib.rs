//! Discrete-event wireless sensor network simulator with a layered protocol stack:
//! contention MAC, adaptive aggregation, velocity scheduling, speed-maintaining
//! geographic routing, lazy-binding forwarding, duty cycling and range-free
//! localization, plus a scenario harness.

pub mod aida;
pub mod engine;
pub mod error;
pub mod harness;
pub mod kernel;
pub mod localization;
pub mod mac;
pub mod power;
pub mod routing;
pub mod sched;
pub mod stats;
pub mod transport;

pub use error::{Result, SimError};
