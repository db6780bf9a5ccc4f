//! Energy accounting and coverage-preserving duty cycling.

use serde::{Deserialize, Serialize};

use crate::kernel::{Area, Location, SimTime};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Activity {
    Tx,
    Rx,
    Idle,
    Sleep,
    Cpu,
}

impl Activity {
    pub const ALL: [Activity; 5] = [Activity::Tx, Activity::Rx, Activity::Idle, Activity::Sleep, Activity::Cpu];

    pub fn as_str(self) -> &'static str {
        match self {
            Activity::Tx => "tx",
            Activity::Rx => "rx",
            Activity::Idle => "idle",
            Activity::Sleep => "sleep",
            Activity::Cpu => "cpu",
        }
    }

    fn slot(self) -> usize {
        self as usize
    }
}

/// Power draw per activity, in watts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields, default)]
pub struct EnergyRates {
    pub tx_watts: f64,
    pub rx_watts: f64,
    pub idle_watts: f64,
    pub sleep_watts: f64,
    pub cpu_watts: f64,
}

impl Default for EnergyRates {
    fn default() -> Self {
        EnergyRates { tx_watts: 0.060, rx_watts: 0.045, idle_watts: 0.012, sleep_watts: 0.000_03, cpu_watts: 0.006 }
    }
}

impl EnergyRates {
    pub fn rate(&self, activity: Activity) -> f64 {
        match activity {
            Activity::Tx => self.tx_watts,
            Activity::Rx => self.rx_watts,
            Activity::Idle => self.idle_watts,
            Activity::Sleep => self.sleep_watts,
            Activity::Cpu => self.cpu_watts,
        }
    }
}

/// Per-node joule ledger. `remaining` only ever goes down.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyLedger {
    initial: f64,
    per_activity: [f64; 5],
    remaining: f64,
}

impl EnergyLedger {
    pub fn new(initial_joules: f64) -> Self {
        EnergyLedger { initial: initial_joules, per_activity: [0.0; 5], remaining: initial_joules }
    }

    /// Charges `rate(activity) × duration`. Returns the joules drawn.
    pub fn consume(&mut self, rates: &EnergyRates, activity: Activity, duration: f64) -> f64 {
        debug_assert!(duration >= -1e-12, "negative duration {duration}");
        if duration <= 0.0 {
            return 0.0;
        }
        let joules = rates.rate(activity) * duration;
        self.per_activity[activity.slot()] += joules;
        self.remaining -= joules;
        joules
    }

    pub fn depleted(&self) -> bool {
        self.remaining <= 0.0
    }

    pub fn remaining(&self) -> f64 {
        self.remaining
    }

    pub fn initial(&self) -> f64 {
        self.initial
    }

    pub fn spent(&self, activity: Activity) -> f64 {
        self.per_activity[activity.slot()]
    }

    pub fn total_spent(&self) -> f64 {
        self.per_activity.iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DutyCycleState {
    Awake,
    Asleep { wake_at: SimTime },
}

impl DutyCycleState {
    pub fn is_awake(&self) -> bool {
        matches!(self, DutyCycleState::Awake)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct SensingParams {
    pub sensing_radius: f64,
    pub grid_resolution: f64,
}

impl SensingParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.sensing_radius > 0.0) {
            return Err("sensingRadius must be > 0".into());
        }
        if !(self.grid_resolution > 0.0 && self.grid_resolution <= self.sensing_radius / 4.0 + 1e-12) {
            return Err("gridResolution must be in (0, sensingRadius/4]".into());
        }
        Ok(())
    }
}

/// Grid sample points of the sensing disk around `center`, optionally clipped to the
/// deployment area. The grid is anchored at the center point.
pub fn sensing_samples(center: Location, params: &SensingParams, area: Option<&Area>) -> Vec<Location> {
    let r = params.sensing_radius;
    let g = params.grid_resolution;
    let steps = (r / g).floor() as i64;
    let mut out = Vec::new();
    for i in -steps..=steps {
        for j in -steps..=steps {
            let p = Location::new(center.x + i as f64 * g, center.y + j as f64 * g);
            if p.distance_sq(&center) > r * r + 1e-9 {
                continue;
            }
            if area.is_some_and(|a| !a.contains(&p)) {
                continue;
            }
            out.push(p);
        }
    }
    out
}

/// True iff every grid sample of the node's sensing disk is inside the sensing disk of
/// at least one awake neighbor.
pub fn coverage_redundant(
    node: Location,
    awake_neighbors: &[Location],
    params: &SensingParams,
    area: Option<&Area>,
) -> bool {
    if awake_neighbors.is_empty() {
        return false;
    }
    let r2 = params.sensing_radius * params.sensing_radius;
    sensing_samples(node, params, area)
        .iter()
        .all(|p| awake_neighbors.iter().any(|n| n.distance_sq(p) <= r2 + 1e-9))
}

/// Everything the grant rule needs about the requesting node.
#[derive(Debug, Clone, Copy)]
pub struct SleepRequest {
    pub awake: bool,
    pub redundant: bool,
    pub queues_empty: bool,
}

/// Greedy, local sleep grant.
pub fn grant_sleep(req: SleepRequest) -> bool {
    req.awake && req.redundant && req.queues_empty
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> SensingParams {
        SensingParams { sensing_radius: 20.0, grid_resolution: 5.0 }
    }

    #[test]
    fn consume_zero_and_rate_times_time() {
        let rates = EnergyRates { idle_watts: 0.001, ..EnergyRates::default() };
        let mut l = EnergyLedger::new(1.0);
        l.consume(&rates, Activity::Idle, 0.0);
        assert_eq!(l.total_spent(), 0.0);
        l.consume(&rates, Activity::Idle, 10.0);
        assert!((l.spent(Activity::Idle) - 0.01).abs() < 1e-15);
        assert!((l.remaining() - 0.99).abs() < 1e-15);
    }

    #[test]
    fn depletion_flag() {
        let rates = EnergyRates::default();
        let mut l = EnergyLedger::new(0.06);
        l.consume(&rates, Activity::Tx, 1.0);
        assert!(l.depleted());
    }

    #[test]
    fn no_neighbors_not_redundant() {
        assert!(!coverage_redundant(Location::new(50.0, 50.0), &[], &params(), None));
    }

    #[test]
    fn colocated_neighbor_covers() {
        let c = Location::new(50.0, 50.0);
        assert!(coverage_redundant(c, &[c], &params(), None));
    }

    /// Dense-sampling oracle: 10^4 points on a 100×100 lattice over the bounding box.
    fn dense_oracle(node: Location, nbrs: &[Location], r: f64) -> bool {
        let n = 100;
        for i in 0..n {
            for j in 0..n {
                let p = Location::new(
                    node.x - r + 2.0 * r * (i as f64 + 0.5) / n as f64,
                    node.y - r + 2.0 * r * (j as f64 + 0.5) / n as f64,
                );
                if p.distance(&node) > r {
                    continue;
                }
                if !nbrs.iter().any(|q| q.distance(&p) <= r) {
                    return false;
                }
            }
        }
        true
    }

    #[test]
    fn symmetric_pair_matches_dense_oracle() {
        let r = params().sensing_radius;
        let node = Location::new(0.0, 0.0);
        let nbrs = [Location::new(-r / 2.0, 0.0), Location::new(r / 2.0, 0.0)];
        assert_eq!(coverage_redundant(node, &nbrs, &params(), None), dense_oracle(node, &nbrs, r));
        let ring: Vec<Location> = (0..6)
            .map(|k| {
                let a = k as f64 * std::f64::consts::PI / 3.0;
                Location::new(0.5 * r * a.cos(), 0.5 * r * a.sin())
            })
            .collect();
        assert_eq!(coverage_redundant(node, &ring, &params(), None), dense_oracle(node, &ring, r));
        assert!(coverage_redundant(node, &ring, &params(), None));
    }

    #[test]
    fn grant_rule() {
        assert!(!grant_sleep(SleepRequest { awake: true, redundant: false, queues_empty: true }));
        assert!(grant_sleep(SleepRequest { awake: true, redundant: true, queues_empty: true }));
        assert!(!grant_sleep(SleepRequest { awake: true, redundant: true, queues_empty: false }));
    }

    #[test]
    fn samples_respect_area() {
        let area = Area::new(100.0, 100.0);
        let inner = sensing_samples(Location::new(50.0, 50.0), &params(), Some(&area));
        let corner = sensing_samples(Location::new(0.0, 0.0), &params(), Some(&area));
        assert!(corner.len() < inner.len());
        assert!(corner.iter().all(|p| area.contains(p)));
    }
}
