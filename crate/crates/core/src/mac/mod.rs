//! Contention MAC: slotted CSMA with binary exponential backoff, optional per-hop
//! ACKs, per-neighbor delay estimation, channel utilization and failure suspicion.

pub mod csma;
pub mod frame;
pub mod link;
pub mod params;

use thiserror::Error;

pub use csma::{AttemptResult, Completion, Csma, FailReason, PendingFrame, SendOutcome, TimeoutResult, TxEndResult};
pub use frame::{Frame, FrameBody, FrameKind, LinkDst};
pub use link::LinkStats;
pub use params::MacParams;

#[derive(Debug, Error, PartialEq)]
pub enum MacError {
    #[error("delay sample must be positive, got {0}")]
    NonPositiveSample(f64),
}
