use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields, default)]
pub struct MacParams {
    pub slot_time: f64,
    pub cw_min: u32,
    pub cw_max: u32,
    /// Retransmissions after the first attempt.
    pub retry_limit: u32,
    pub ack_timeout: f64,
    /// Receive-to-transmit switch before an ACK goes out.
    pub turnaround: f64,
    /// Idle gap a contender waits after the channel clears.
    pub ifs: f64,
    pub header_bytes: usize,
    pub ack_bytes: usize,
    /// Per-hop reliability for data frames.
    pub reliable: bool,
    pub ewma_alpha: f64,
    pub utilization_window: f64,
    /// Silence after which a neighbor is suspected to have failed, in beacon periods.
    pub failure_timeout_beacons: f64,
}

impl Default for MacParams {
    fn default() -> Self {
        MacParams {
            slot_time: 320e-6,
            cw_min: 8,
            cw_max: 64,
            retry_limit: 3,
            ack_timeout: 1.2e-3,
            turnaround: 192e-6,
            ifs: 640e-6,
            header_bytes: 16,
            ack_bytes: 16,
            reliable: true,
            ewma_alpha: 0.3,
            utilization_window: 1.0,
            failure_timeout_beacons: 3.0,
        }
    }
}

impl MacParams {
    /// Checks internal consistency; `bitrate` is needed for the ACK timing bound.
    pub fn validate(&self, bitrate: f64) -> Result<(), (&'static str, String)> {
        if !(self.slot_time > 0.0) {
            return Err(("mac.slotTime", "must be > 0".into()));
        }
        if self.cw_min == 0 || self.cw_min > self.cw_max {
            return Err(("mac.cwMin", "must satisfy 1 <= cwMin <= cwMax".into()));
        }
        if !(self.ewma_alpha > 0.0 && self.ewma_alpha <= 1.0) {
            return Err(("mac.ewmaAlpha", "must be in (0, 1]".into()));
        }
        if !(self.utilization_window > 0.0) {
            return Err(("mac.utilizationWindow", "must be > 0".into()));
        }
        if self.ifs <= self.turnaround {
            return Err(("mac.ifs", "must exceed mac.turnaround so ACKs win the channel".into()));
        }
        let ack_air = self.ack_bytes as f64 * 8.0 / bitrate;
        if self.ack_timeout <= self.turnaround + ack_air {
            return Err(("mac.ackTimeout", format!("must exceed turnaround + ACK airtime ({:.6} s)", self.turnaround + ack_air)));
        }
        if !(self.failure_timeout_beacons > 0.0) {
            return Err(("mac.failureTimeoutBeacons", "must be > 0".into()));
        }
        Ok(())
    }
}
