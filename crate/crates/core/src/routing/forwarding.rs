//! Table-driven next-hop selection: speed-maintaining non-deterministic forwarding
//! with neighborhood feedback, plus the greedy baseline.

use rand::Rng;

use super::neighbor::{NeighborEntry, NeighborTable};
use super::params::{ForwardingPolicy, RoutingParams};
use crate::kernel::{Location, NodeId};

/// Neighbors strictly closer to `target` than `here`.
pub fn candidate_set<'a>(here: &Location, target: &Location, table: &'a NeighborTable) -> Vec<&'a NeighborEntry> {
    let d = here.distance(target);
    table.live().filter(|e| d - e.location.distance(target) > 0.0).collect()
}

pub fn relay_speed(here: &Location, neighbor: &NeighborEntry, target: &Location, delta_min: f64) -> f64 {
    let progress = here.distance(target) - neighbor.location.distance(target);
    if progress <= 0.0 {
        return 0.0;
    }
    progress / neighbor.delay.max(delta_min)
}

/// Index drawn with probability proportional to `w_i^k`. Falls back to uniform if every
/// weight vanishes.
pub fn weighted_index<R: Rng + ?Sized>(speeds: &[f64], k: f64, rng: &mut R) -> usize {
    assert!(!speeds.is_empty());
    let weights: Vec<f64> = speeds.iter().map(|s| s.max(0.0).powf(k)).collect();
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return rng.random_range(0..speeds.len());
    }
    let mut x = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if x < *w {
            return i;
        }
        x -= w;
    }
    weights.iter().rposition(|w| *w > 0.0).unwrap()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HopDecision {
    Forward {
        to: NodeId,
        speed: f64,
        /// Some candidate met the setpoint, so `speed` must too.
        qualified: bool,
    },
    /// Feedback control chose to drop; the node should broadcast backpressure.
    Congestion,
    Void,
}

/// Sub-setpoint fallback: drop with probability equal to the mean candidate miss ratio,
/// otherwise forward to the fastest candidate.
pub fn feedback_control<R: Rng + ?Sized>(candidates: &[(&NeighborEntry, f64)], rng: &mut R) -> HopDecision {
    if candidates.is_empty() {
        return HopDecision::Void;
    }
    let p = (candidates.iter().map(|(e, _)| e.miss_ratio).sum::<f64>() / candidates.len() as f64).clamp(0.0, 1.0);
    if p > 0.0 && rng.random::<f64>() < p {
        return HopDecision::Congestion;
    }
    let (best, speed) = fastest(candidates);
    HopDecision::Forward { to: best.id, speed, qualified: false }
}

fn fastest<'a>(candidates: &[(&'a NeighborEntry, f64)]) -> (&'a NeighborEntry, f64) {
    let mut best = candidates[0];
    for c in &candidates[1..] {
        if c.1 > best.1 {
            best = *c;
        }
    }
    best
}

pub fn select_next_hop<R: Rng + ?Sized>(
    here: &Location,
    target: &Location,
    table: &NeighborTable,
    params: &RoutingParams,
    rng: &mut R,
) -> HopDecision {
    let cands: Vec<(&NeighborEntry, f64)> = candidate_set(here, target, table)
        .into_iter()
        .map(|e| (e, relay_speed(here, e, target, params.delta_min)))
        .collect();
    if cands.is_empty() {
        return HopDecision::Void;
    }
    match params.policy {
        ForwardingPolicy::Greedy => {
            let (best, speed) = fastest(&cands);
            HopDecision::Forward { to: best.id, speed, qualified: false }
        }
        ForwardingPolicy::Speed => {
            let q: Vec<(&NeighborEntry, f64)> = cands.iter().copied().filter(|(_, s)| *s >= params.setpoint).collect();
            if q.is_empty() {
                return feedback_control(&cands, rng);
            }
            let speeds: Vec<f64> = q.iter().map(|(_, s)| *s).collect();
            let i = weighted_index(&speeds, params.k, rng);
            HopDecision::Forward { to: q[i].0.id, speed: q[i].1, qualified: true }
        }
    }
}

/// Source-side policing: admit when the channel is below the threshold or the packet
/// is in the highest class.
pub fn admit_packet(utilization: f64, priority_class: u8, params: &RoutingParams) -> bool {
    utilization < params.admission_threshold || priority_class >= params.highest_class
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{rng, SimTime};

    fn table(points: &[(f64, f64, f64, f64)]) -> NeighborTable {
        let mut t = NeighborTable::new();
        for (i, &(x, y, delay, miss)) in points.iter().enumerate() {
            t.upsert(NodeId(i as u32 + 1), Location::new(x, y), miss, SimTime::ZERO, delay);
        }
        t
    }

    #[test]
    fn relay_speed_cases() {
        let here = Location::new(0.0, 0.0);
        let target = Location::new(100.0, 0.0);
        let t = table(&[(20.0, 0.0, 0.05, 0.0), (0.0, 0.0, 0.05, 0.0), (20.0, 0.0, 0.0001, 0.0)]);
        assert!((relay_speed(&here, t.get(NodeId(1)).unwrap(), &target, 0.002) - 400.0).abs() < 1e-9);
        assert_eq!(relay_speed(&here, t.get(NodeId(2)).unwrap(), &target, 0.002), 0.0);
        assert!((relay_speed(&here, t.get(NodeId(3)).unwrap(), &target, 0.002) - 10_000.0).abs() < 1e-6);
    }

    #[test]
    fn candidates_need_positive_progress() {
        let here = Location::new(50.0, 50.0);
        let t = table(&[(60.0, 50.0, 0.01, 0.0), (40.0, 50.0, 0.01, 0.0), (50.0, 60.0, 0.01, 0.0)]);
        let c = candidate_set(&here, &Location::new(100.0, 50.0), &t);
        assert_eq!(c.iter().map(|e| e.id).collect::<Vec<_>>(), vec![NodeId(1)]);
        let none = candidate_set(&here, &Location::new(50.0, 50.0), &t);
        assert!(none.is_empty());
    }

    #[test]
    fn single_qualifier_always_chosen() {
        let here = Location::new(0.0, 0.0);
        let target = Location::new(100.0, 0.0);
        let t = table(&[(30.0, 0.0, 0.01, 0.0), (5.0, 0.0, 0.01, 0.0)]);
        let p = RoutingParams { setpoint: 1000.0, ..RoutingParams::default() };
        let mut r = rng::stream(1, "routing", 0);
        for _ in 0..100 {
            match select_next_hop(&here, &target, &t, &p, &mut r) {
                HopDecision::Forward { to, qualified, speed } => {
                    assert_eq!(to, NodeId(1));
                    assert!(qualified && speed >= p.setpoint);
                }
                d => panic!("{d:?}"),
            }
        }
    }

    #[test]
    fn feedback_extremes() {
        let here = Location::new(0.0, 0.0);
        let target = Location::new(100.0, 0.0);
        let p = RoutingParams { setpoint: 1e9, ..RoutingParams::default() };
        let mut r = rng::stream(2, "routing", 0);
        let calm = table(&[(10.0, 0.0, 0.01, 0.0), (20.0, 0.0, 0.01, 0.0)]);
        let hot = table(&[(10.0, 0.0, 0.01, 1.0), (20.0, 0.0, 0.01, 1.0)]);
        for _ in 0..200 {
            assert_eq!(
                select_next_hop(&here, &target, &calm, &p, &mut r),
                HopDecision::Forward { to: NodeId(2), speed: 2000.0, qualified: false }
            );
            assert_eq!(select_next_hop(&here, &target, &hot, &p, &mut r), HopDecision::Congestion);
        }
        assert_eq!(select_next_hop(&here, &Location::new(-100.0, 0.0), &calm, &p, &mut r), HopDecision::Void);
    }

    #[test]
    fn greedy_ignores_feedback() {
        let here = Location::new(0.0, 0.0);
        let target = Location::new(100.0, 0.0);
        let p = RoutingParams { policy: ForwardingPolicy::Greedy, setpoint: 1e9, ..RoutingParams::default() };
        let hot = table(&[(10.0, 0.0, 0.01, 1.0), (20.0, 0.0, 0.01, 1.0)]);
        let mut r = rng::stream(3, "routing", 0);
        assert!(matches!(select_next_hop(&here, &target, &hot, &p, &mut r), HopDecision::Forward { to: NodeId(2), .. }));
    }

    #[test]
    fn admission() {
        let p = RoutingParams { admission_threshold: 0.5, highest_class: 3, ..RoutingParams::default() };
        assert!(admit_packet(0.0, 0, &p));
        assert!(!admit_packet(0.6, 0, &p));
        assert!(admit_packet(0.6, 3, &p));
    }
}
