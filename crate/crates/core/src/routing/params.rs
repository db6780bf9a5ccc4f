use serde::{Deserialize, Serialize};

use crate::kernel::{EntityId, Location};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum RoutingMode {
    TableDriven,
    LazyBinding,
}

/// Next-hop rule in table-driven mode. `Greedy` is the contrast baseline: always the
/// fastest candidate, with no setpoint, feedback, admission control or backpressure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum ForwardingPolicy {
    Speed,
    Greedy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields, default)]
pub struct RoutingParams {
    pub mode: RoutingMode,
    pub policy: ForwardingPolicy,
    /// Delivery-speed setpoint, m/s.
    pub setpoint: f64,
    /// Exponent of the speed weighting used for non-deterministic selection.
    pub k: f64,
    pub beacon_period: f64,
    pub neighbor_timeout: f64,
    pub delta_min: f64,
    pub ttl: u32,
    pub sector_half_angle: f64,
    /// Sector used by the single probe retry.
    pub retry_half_angle: f64,
    pub cts_window: f64,
    pub admission_threshold: f64,
    /// Factor applied to the delay estimate toward a node that signalled backpressure.
    pub backpressure_factor: f64,
    /// Smoothing of the node's own miss ratio.
    pub miss_alpha: f64,
    /// Times a packet may be re-routed after a link failure.
    pub reroute_budget: u32,
    /// Classes at or above this value bypass admission control.
    pub highest_class: u8,
}

impl Default for RoutingParams {
    fn default() -> Self {
        RoutingParams {
            mode: RoutingMode::TableDriven,
            policy: ForwardingPolicy::Speed,
            setpoint: 1000.0,
            k: 2.0,
            beacon_period: 1.0,
            neighbor_timeout: 5.0,
            delta_min: 0.002,
            ttl: 32,
            sector_half_angle: 60.0,
            retry_half_angle: 90.0,
            cts_window: 0.010,
            admission_threshold: 0.9,
            backpressure_factor: 2.0,
            miss_alpha: 0.1,
            reroute_budget: 2,
            highest_class: 3,
        }
    }
}

impl RoutingParams {
    pub fn validate(&self) -> Result<(), (&'static str, String)> {
        let checks: [(bool, &'static str, &str); 11] = [
            (self.setpoint > 0.0, "routing.setpoint", "must be > 0"),
            (self.k >= 0.0, "routing.k", "must be >= 0"),
            (self.beacon_period > 0.0, "routing.beaconPeriod", "must be > 0"),
            (self.neighbor_timeout > 0.0, "routing.neighborTimeout", "must be > 0"),
            (self.delta_min > 0.0, "routing.deltaMin", "must be > 0"),
            (self.ttl >= 1, "routing.ttl", "must be >= 1"),
            (self.sector_half_angle > 0.0 && self.sector_half_angle <= 90.0, "routing.sectorHalfAngle", "must be in (0, 90]"),
            (self.retry_half_angle > 0.0 && self.retry_half_angle <= 90.0, "routing.retryHalfAngle", "must be in (0, 90]"),
            (self.cts_window > 0.0, "routing.ctsWindow", "must be > 0"),
            ((0.0..=1.0).contains(&self.admission_threshold), "routing.admissionThreshold", "must be in [0, 1]"),
            (self.backpressure_factor >= 1.0, "routing.backpressureFactor", "must be >= 1"),
        ];
        for (ok, key, constraint) in checks {
            if !ok {
                return Err((key, constraint.to_string()));
            }
        }
        if !(self.miss_alpha > 0.0 && self.miss_alpha <= 1.0) {
            return Err(("routing.missAlpha", "must be in (0, 1]".into()));
        }
        Ok(())
    }
}

/// Location-addressed destination: any alive node within `radius` of `center`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Destination {
    pub center: Location,
    #[serde(default)]
    pub radius: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entity: Option<EntityId>,
}

impl Destination {
    pub fn contains(&self, p: &Location) -> bool {
        p.distance(&self.center) <= self.radius
    }
}
