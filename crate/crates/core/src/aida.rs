//! Application-independent aggregation between the network and link layers.
//!
//! Units are opaque network packets. The layer batches units that share a next hop
//! and a priority class into one link frame, adapting the batch size to the channel
//! utilization reported by the MAC while never holding a unit past its slack budget.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::{NodeId, SimTime, TIME_EPSILON};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AidaError {
    #[error("malformed aggregate: {0}")]
    Malformed(&'static str),
}

/// One opaque network-layer unit. `tag` is a local handle for the owning network
/// layer; it never goes on the wire.
#[derive(Debug, Clone, PartialEq)]
pub struct AidaUnit {
    pub payload: Vec<u8>,
    pub priority_class: u8,
    /// Seconds of slack at enqueue time.
    pub slack: f64,
    pub next_hop: NodeId,
    pub tag: u64,
}

impl AidaUnit {
    pub fn size_bytes(&self) -> usize {
        self.payload.len()
    }
}

/// Bytes of the per-unit length prefix used when a frame carries two or more units.
pub const UNIT_LENGTH_FIELD: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct AidaFrame {
    pub next_hop: NodeId,
    pub priority_class: u8,
    pub units: Vec<AidaUnit>,
}

/// Link-frame body as transmitted: degree and class ride in the MAC header.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AidaWire {
    pub degree: u8,
    pub priority_class: u8,
    pub bytes: Vec<u8>,
}

impl AidaFrame {
    pub fn degree(&self) -> usize {
        self.units.len()
    }

    /// Serialized body size. A single unit is sent bare; larger aggregates prefix each
    /// unit with a 16-bit length.
    pub fn body_bytes(&self) -> usize {
        let payload: usize = self.units.iter().map(AidaUnit::size_bytes).sum();
        if self.units.len() == 1 {
            payload
        } else {
            payload + UNIT_LENGTH_FIELD * self.units.len()
        }
    }

    pub fn encode(&self) -> AidaWire {
        assert!(!self.units.is_empty() && self.units.len() <= u8::MAX as usize);
        let mut bytes = Vec::with_capacity(self.body_bytes());
        if self.units.len() == 1 {
            bytes.extend_from_slice(&self.units[0].payload);
        } else {
            for u in &self.units {
                let len = u16::try_from(u.payload.len()).expect("unit larger than 64 KiB");
                bytes.extend_from_slice(&len.to_le_bytes());
                bytes.extend_from_slice(&u.payload);
            }
        }
        AidaWire { degree: self.units.len() as u8, priority_class: self.priority_class, bytes }
    }
}

/// Splits a received body back into its units, in order. Any inconsistency rejects
/// the whole frame.
pub fn disaggregate(wire: &AidaWire, next_hop: NodeId) -> Result<Vec<AidaUnit>, AidaError> {
    let unit = |payload: Vec<u8>| AidaUnit { payload, priority_class: wire.priority_class, slack: 0.0, next_hop, tag: 0 };
    match wire.degree {
        0 => Err(AidaError::Malformed("zero degree")),
        1 => Ok(vec![unit(wire.bytes.clone())]),
        n => {
            let mut out = Vec::with_capacity(n as usize);
            let mut rest = wire.bytes.as_slice();
            for _ in 0..n {
                if rest.len() < UNIT_LENGTH_FIELD {
                    return Err(AidaError::Malformed("truncated length field"));
                }
                let len = u16::from_le_bytes([rest[0], rest[1]]) as usize;
                rest = &rest[UNIT_LENGTH_FIELD..];
                if rest.len() < len {
                    return Err(AidaError::Malformed("unit overruns frame"));
                }
                out.push(unit(rest[..len].to_vec()));
                rest = &rest[len..];
            }
            if !rest.is_empty() {
                return Err(AidaError::Malformed("trailing bytes"));
            }
            Ok(out)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum AggregationMode {
    None,
    FixedDegree(u32),
    OnDemand,
    Adaptive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields, default)]
pub struct AggregationPolicy {
    pub mode: AggregationMode,
    pub max_degree: u32,
    /// τ: longest a unit may wait for companions.
    pub flush_timer: f64,
    /// Guard = factor × mean per-hop delay estimate.
    pub guard_factor: f64,
    pub u_low: f64,
    pub u_high: f64,
    /// Units buffered per node across all keys.
    pub buffer_capacity: usize,
}

impl Default for AggregationPolicy {
    fn default() -> Self {
        AggregationPolicy {
            mode: AggregationMode::Adaptive,
            max_degree: 4,
            flush_timer: 0.010,
            guard_factor: 2.0,
            u_low: 0.4,
            u_high: 0.7,
            buffer_capacity: 64,
        }
    }
}

impl AggregationPolicy {
    pub fn none() -> Self {
        AggregationPolicy { mode: AggregationMode::None, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), (&'static str, String)> {
        if self.max_degree < 1 || self.max_degree > 255 {
            return Err(("aggregation.maxDegree", "must be in [1, 255]".into()));
        }
        if let AggregationMode::FixedDegree(n) = self.mode {
            if n < 1 || n > self.max_degree {
                return Err(("aggregation.mode", "fixedDegree must satisfy 1 <= n <= maxDegree".into()));
            }
        }
        if !(self.u_low < self.u_high) || self.u_low < 0.0 || self.u_high > 1.0 {
            return Err(("aggregation.uLow", "must satisfy 0 <= uLow < uHigh <= 1".into()));
        }
        if !(self.flush_timer > 0.0) {
            return Err(("aggregation.flushTimer", "must be > 0".into()));
        }
        if self.buffer_capacity == 0 {
            return Err(("aggregation.bufferCapacity", "must be >= 1".into()));
        }
        if !(self.guard_factor >= 0.0) {
            return Err(("aggregation.guardFactor", "must be >= 0".into()));
        }
        Ok(())
    }
}

/// Degree control law. Adaptive mode moves the target by one step per decision
/// with a dead band between `u_low` and `u_high`.
pub fn select_degree(current: u32, utilization: f64, backlog: usize, policy: &AggregationPolicy) -> u32 {
    let max = policy.max_degree.max(1);
    match policy.mode {
        AggregationMode::None => 1,
        AggregationMode::FixedDegree(n) => n.clamp(1, max),
        AggregationMode::OnDemand => (backlog as u32).clamp(1, max),
        AggregationMode::Adaptive => {
            let current = current.clamp(1, max);
            if utilization >= policy.u_high {
                (current + 1).min(max).min(backlog.max(1) as u32)
            } else if utilization <= policy.u_low {
                current.saturating_sub(1).max(1)
            } else {
                current
            }
        }
    }
}

pub type BufferKey = (NodeId, u8);

#[derive(Debug, Clone)]
struct Held {
    unit: AidaUnit,
    enqueued_at: SimTime,
    guard: f64,
}

impl Held {
    fn latest_flush(&self, flush_timer: f64) -> SimTime {
        let by_slack = (self.unit.slack - self.guard).max(0.0);
        self.enqueued_at + flush_timer.min(by_slack)
    }

    fn remaining_slack(&self, now: SimTime) -> f64 {
        self.unit.slack - (now - self.enqueued_at)
    }
}

#[derive(Debug, Clone, Default)]
struct Buffer {
    units: VecDeque<Held>,
    generation: u64,
}

/// How long one unit stayed buffered, and the bound it had to respect.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HoldRecord {
    pub tag: u64,
    pub enqueued_at: SimTime,
    pub flushed_at: SimTime,
    pub flush_timer: f64,
    pub slack: f64,
    pub guard: f64,
}

impl HoldRecord {
    /// `held ≤ max(0, min(τ, slack − guard))`.
    pub fn within_bound(&self) -> bool {
        let held = self.flushed_at - self.enqueued_at;
        let bound = self.flush_timer.min(self.slack - self.guard).max(0.0);
        held <= bound + 1e-9
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Flushed {
    pub frame: AidaFrame,
    pub holds: Vec<HoldRecord>,
}

/// Timer request: fire `on_timer(key, generation)` at `at`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimerRequest {
    pub key: BufferKey,
    pub at: SimTime,
    pub generation: u64,
}

#[derive(Debug, Default)]
pub struct EnqueueOutcome {
    pub frames: Vec<Flushed>,
    pub dropped: Option<AidaUnit>,
    pub timers: Vec<TimerRequest>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AidaStats {
    pub frames: u64,
    pub units: u64,
    pub degree_histogram: BTreeMap<u32, u64>,
    pub header_bytes_saved: u64,
    pub overflow_drops: u64,
    pub malformed_drops: u64,
}

/// Per-node aggregation buffers keyed by (next hop, priority class).
#[derive(Debug, Clone)]
pub struct AidaLayer {
    policy: AggregationPolicy,
    header_bytes: usize,
    buffers: BTreeMap<BufferKey, Buffer>,
    target: u32,
    total: usize,
    stats: AidaStats,
}

impl AidaLayer {
    pub fn new(policy: AggregationPolicy, header_bytes: usize) -> Self {
        AidaLayer { policy, header_bytes, buffers: BTreeMap::new(), target: 1, total: 0, stats: AidaStats::default() }
    }

    pub fn policy(&self) -> &AggregationPolicy {
        &self.policy
    }

    pub fn target_degree(&self) -> u32 {
        self.target
    }

    pub fn buffered(&self) -> usize {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn stats(&self) -> &AidaStats {
        &self.stats
    }

    pub fn note_malformed(&mut self) {
        self.stats.malformed_drops += 1;
    }

    pub fn buffered_units(&self) -> impl Iterator<Item = &AidaUnit> {
        self.buffers.values().flat_map(|b| b.units.iter().map(|h| &h.unit))
    }

    /// Adds a unit. `utilization` and `backlog` feed the degree law; `guard` is the
    /// node's current slack guard in seconds.
    pub fn enqueue_unit(&mut self, unit: AidaUnit, now: SimTime, guard: f64, utilization: f64, backlog: usize) -> EnqueueOutcome {
        let mut out = EnqueueOutcome::default();
        let mut unit = Some(unit);
        if self.total >= self.policy.buffer_capacity {
            let incoming = unit.as_ref().unwrap();
            match self.overflow_victim(incoming, now) {
                None => {
                    self.stats.overflow_drops += 1;
                    out.dropped = unit.take();
                }
                Some((key, idx)) => {
                    let buf = self.buffers.get_mut(&key).unwrap();
                    let victim = buf.units.remove(idx).unwrap();
                    self.total -= 1;
                    self.stats.overflow_drops += 1;
                    out.dropped = Some(victim.unit);
                }
            }
        }

        self.target = select_degree(self.target, utilization, backlog, &self.policy);

        if let Some(unit) = unit {
            let key = (unit.next_hop, unit.priority_class);
            self.buffers.entry(key).or_default().units.push_back(Held { unit, enqueued_at: now, guard });
            self.total += 1;
        }

        self.flush_ready(now, &mut out);
        out
    }

    /// Flush-timer expiry for `key`.
    pub fn on_timer(&mut self, key: BufferKey, generation: u64, now: SimTime) -> EnqueueOutcome {
        let mut out = EnqueueOutcome::default();
        let due = match self.buffers.get(&key) {
            Some(b) if b.generation == generation && !b.units.is_empty() => self.due(b),
            _ => return out,
        };
        if due.before(now) || due.approx_eq(now) {
            let n = self.buffers[&key].units.len();
            let f = self.take(key, n, now);
            out.frames.push(f);
        }
        self.flush_ready(now, &mut out);
        out
    }

    fn due(&self, b: &Buffer) -> SimTime {
        b.units
            .iter()
            .map(|h| h.latest_flush(self.policy.flush_timer))
            .min()
            .expect("due of empty buffer")
    }

    /// Applies the count and slack triggers everywhere, then re-arms timers.
    fn flush_ready(&mut self, now: SimTime, out: &mut EnqueueOutcome) {
        let target = self.target.max(1) as usize;
        let keys: Vec<BufferKey> = self.buffers.keys().copied().collect();
        for key in keys {
            while self.buffers[&key].units.len() >= target {
                let f = self.take(key, target, now);
                out.frames.push(f);
            }
            let buf = &self.buffers[&key];
            if buf.units.is_empty() {
                continue;
            }
            let due = self.due(buf);
            if !now.before(due) || due.approx_eq(now) || due.secs() <= now.secs() + TIME_EPSILON {
                let n = buf.units.len();
                let f = self.take(key, n, now);
                out.frames.push(f);
                continue;
            }
            let buf = self.buffers.get_mut(&key).unwrap();
            buf.generation += 1;
            out.timers.push(TimerRequest { key, at: due, generation: buf.generation });
        }
        self.buffers.retain(|_, b| !b.units.is_empty());
    }

    fn take(&mut self, key: BufferKey, n: usize, now: SimTime) -> Flushed {
        let buf = self.buffers.get_mut(&key).unwrap();
        let n = n.min(buf.units.len());
        let held: Vec<Held> = buf.units.drain(..n).collect();
        buf.generation += 1;
        self.total -= held.len();
        let holds = held
            .iter()
            .map(|h| HoldRecord {
                tag: h.unit.tag,
                enqueued_at: h.enqueued_at,
                flushed_at: now,
                flush_timer: self.policy.flush_timer,
                slack: h.unit.slack,
                guard: h.guard,
            })
            .collect();
        let degree = held.len() as u32;
        self.stats.frames += 1;
        self.stats.units += degree as u64;
        *self.stats.degree_histogram.entry(degree).or_insert(0) += 1;
        self.stats.header_bytes_saved += (degree as u64 - 1) * self.header_bytes as u64;
        Flushed {
            frame: AidaFrame { next_hop: key.0, priority_class: key.1, units: held.into_iter().map(|h| h.unit).collect() },
            holds,
        }
    }

    /// Lowest class, then largest remaining slack, then most recent. `None` means the
    /// incoming unit itself loses.
    fn overflow_victim(&self, incoming: &AidaUnit, now: SimTime) -> Option<(BufferKey, usize)> {
        let mut best: Option<((u8, f64), Option<(BufferKey, usize)>, SimTime)> =
            Some(((incoming.priority_class, incoming.slack), None, now));
        for (key, buf) in &self.buffers {
            for (idx, h) in buf.units.iter().enumerate() {
                let cand = (h.unit.priority_class, h.remaining_slack(now));
                let (bk, _, bt) = best.as_ref().unwrap();
                let worse = cand.0 < bk.0
                    || (cand.0 == bk.0 && cand.1 > bk.1)
                    || (cand.0 == bk.0 && cand.1 == bk.1 && h.enqueued_at > *bt);
                if worse {
                    best = Some((cand, Some((*key, idx)), h.enqueued_at));
                }
            }
        }
        best.and_then(|(_, loc, _)| loc)
    }

    /// Empties every buffer (crash or death), returning the units.
    pub fn clear(&mut self) -> Vec<AidaUnit> {
        self.total = 0;
        std::mem::take(&mut self.buffers).into_values().flat_map(|b| b.units.into_iter().map(|h| h.unit)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(tag: u64, hop: u32, class: u8, slack: f64) -> AidaUnit {
        AidaUnit { payload: vec![tag as u8; 10 + tag as usize % 7], priority_class: class, slack, next_hop: NodeId(hop), tag }
    }

    fn t(s: f64) -> SimTime {
        SimTime::from_secs(s)
    }

    fn adaptive() -> AggregationPolicy {
        AggregationPolicy { mode: AggregationMode::Adaptive, ..AggregationPolicy::default() }
    }

    #[test]
    fn degree_law() {
        let none = AggregationPolicy::none();
        assert_eq!(select_degree(3, 0.99, 50, &none), 1);
        let p = adaptive();
        let mut d = 1;
        for _ in 0..10 {
            d = select_degree(d, 0.9, 100, &p);
        }
        assert_eq!(d, p.max_degree);
        assert_eq!(select_degree(3, 0.9, 2, &p), 2, "clamped by queue");
        assert_eq!(select_degree(3, 0.5, 100, &p), 3, "dead band");
        assert_eq!(select_degree(3, 0.1, 100, &p), 2);
        assert_eq!(select_degree(1, 0.1, 100, &p), 1);
        let od = AggregationPolicy { mode: AggregationMode::OnDemand, ..p };
        assert_eq!(select_degree(1, 0.0, 3, &od), 3);
        assert_eq!(select_degree(1, 0.0, 30, &od), 4);
        let fixed = AggregationPolicy { mode: AggregationMode::FixedDegree(3), ..p };
        assert_eq!(select_degree(1, 0.0, 0, &fixed), 3);
    }

    #[test]
    fn first_unit_arms_timer() {
        let p = AggregationPolicy { mode: AggregationMode::FixedDegree(4), ..adaptive() };
        let mut l = AidaLayer::new(p, 16);
        let out = l.enqueue_unit(unit(1, 5, 0, 10.0), t(1.0), 0.01, 0.0, 1);
        assert!(out.frames.is_empty());
        assert_eq!(out.timers.len(), 1);
        assert!(out.timers[0].at.approx_eq(t(1.0 + 0.010)));
        let fired = l.on_timer(out.timers[0].key, out.timers[0].generation, out.timers[0].at);
        assert_eq!(fired.frames.len(), 1);
        assert_eq!(fired.frames[0].frame.degree(), 1);
        assert!(l.is_empty());

        let mut l = AidaLayer::new(adaptive(), 16);
        let out = l.enqueue_unit(unit(1, 5, 0, 10.0), t(1.0), 0.01, 0.0, 1);
        assert_eq!(out.frames.len(), 1, "adaptive starts at degree 1 and holds nothing");
    }

    #[test]
    fn classes_are_isolated() {
        let p = AggregationPolicy { mode: AggregationMode::FixedDegree(2), ..adaptive() };
        let mut l = AidaLayer::new(p, 16);
        let a = l.enqueue_unit(unit(1, 5, 0, 10.0), t(0.0), 0.0, 0.0, 2);
        let b = l.enqueue_unit(unit(2, 5, 1, 10.0), t(0.0), 0.0, 0.0, 2);
        assert!(a.frames.is_empty() && b.frames.is_empty());
        let c = l.enqueue_unit(unit(3, 5, 1, 10.0), t(0.0), 0.0, 0.0, 2);
        assert_eq!(c.frames.len(), 1);
        assert!(c.frames[0].frame.units.iter().all(|u| u.priority_class == 1));
        assert_eq!(c.frames[0].frame.units.iter().map(|u| u.tag).collect::<Vec<_>>(), vec![2, 3]);
    }

    #[test]
    fn tight_slack_flushes_immediately() {
        let p = AggregationPolicy { mode: AggregationMode::FixedDegree(4), ..adaptive() };
        let mut l = AidaLayer::new(p, 16);
        l.enqueue_unit(unit(1, 5, 0, 10.0), t(0.0), 0.01, 0.0, 1);
        let out = l.enqueue_unit(unit(2, 5, 0, 0.005), t(0.001), 0.01, 0.0, 2);
        assert_eq!(out.frames.len(), 1);
        assert_eq!(out.frames[0].frame.degree(), 2);
        assert!(out.frames[0].holds.iter().all(HoldRecord::within_bound));
    }

    #[test]
    fn none_mode_is_passthrough() {
        let mut l = AidaLayer::new(AggregationPolicy::none(), 16);
        for i in 0..20 {
            let u = unit(i, (i % 3) as u32, (i % 2) as u8, 1.0);
            let out = l.enqueue_unit(u.clone(), t(i as f64 * 0.01), 0.0, 0.95, 30);
            assert_eq!(out.frames.len(), 1);
            let f = &out.frames[0];
            assert_eq!(f.holds[0].flushed_at, f.holds[0].enqueued_at);
            let wire = f.frame.encode();
            assert_eq!(wire.bytes, u.payload, "degree-1 body is the bare unit");
            assert_eq!(f.frame.body_bytes(), u.size_bytes());
        }
        assert_eq!(l.stats().header_bytes_saved, 0);
    }

    #[test]
    fn round_trip_preserves_order() {
        let f = AidaFrame { next_hop: NodeId(3), priority_class: 2, units: vec![unit(1, 3, 2, 0.0), unit(2, 3, 2, 0.0), unit(3, 3, 2, 0.0)] };
        let back = disaggregate(&f.encode(), NodeId(3)).unwrap();
        assert_eq!(back.iter().map(|u| &u.payload).collect::<Vec<_>>(), f.units.iter().map(|u| &u.payload).collect::<Vec<_>>());
        let single = AidaFrame { units: vec![unit(9, 3, 2, 0.0)], ..f.clone() };
        assert_eq!(disaggregate(&single.encode(), NodeId(3)).unwrap()[0].payload, single.units[0].payload);
    }

    #[test]
    fn malformed_is_rejected_whole() {
        let f = AidaFrame { next_hop: NodeId(3), priority_class: 0, units: vec![unit(1, 3, 0, 0.0), unit(2, 3, 0, 0.0)] };
        let mut wire = f.encode();
        wire.bytes.pop();
        assert!(disaggregate(&wire, NodeId(3)).is_err());
        let mut wire = f.encode();
        wire.bytes.push(0);
        assert!(disaggregate(&wire, NodeId(3)).is_err());
        let mut wire = f.encode();
        wire.degree = 0;
        assert!(disaggregate(&wire, NodeId(3)).is_err());
    }

    #[test]
    fn header_savings_identity() {
        let p = AggregationPolicy { mode: AggregationMode::FixedDegree(3), ..adaptive() };
        let mut l = AidaLayer::new(p, 16);
        let mut frames = Vec::new();
        for i in 0..10 {
            frames.extend(l.enqueue_unit(unit(i, 1, 0, 10.0), t(0.0), 0.0, 0.0, 3).frames);
        }
        let expected: u64 = frames.iter().map(|f| (f.frame.degree() as u64 - 1) * 16).sum();
        assert_eq!(l.stats().header_bytes_saved, expected);
        assert_eq!(expected, 3 * 2 * 16);
    }

    /// Brute-force victim: sort every candidate by (class asc, remaining slack desc,
    /// enqueue time desc, incoming last) and take the first.
    #[test]
    fn overflow_victim_matches_sort_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        for case in 0..300 {
            let cap = rng.random_range(1..8usize);
            let p = AggregationPolicy { mode: AggregationMode::FixedDegree(8), max_degree: 8, buffer_capacity: cap, flush_timer: 100.0, ..adaptive() };
            let mut l = AidaLayer::new(p, 16);
            let mut snapshot: Vec<(u8, f64, f64, u64)> = Vec::new();
            for i in 0..cap {
                let now = i as f64 * 0.001;
                let u = AidaUnit { slack: rng.random_range(1.0..50.0), ..unit(i as u64, rng.random_range(0..3), rng.random_range(0..3), 0.0) };
                snapshot.push((u.priority_class, u.slack, now, u.tag));
                let out = l.enqueue_unit(u, t(now), 0.0, 0.0, 1);
                assert!(out.frames.is_empty() && out.dropped.is_none());
            }
            let now = 0.5;
            let incoming = AidaUnit { slack: rng.random_range(1.0..50.0), ..unit(999, 0, rng.random_range(0..3), 0.0) };
            let mut cands: Vec<(u8, f64, f64, u64)> =
                snapshot.iter().map(|&(c, s, at, tag)| (c, s - (now - at), at, tag)).collect();
            cands.push((incoming.priority_class, incoming.slack, f64::INFINITY, 999));
            cands.sort_by(|a, b| {
                a.0.cmp(&b.0)
                    .then(b.1.partial_cmp(&a.1).unwrap())
                    .then(b.2.partial_cmp(&a.2).unwrap())
            });
            let out = l.enqueue_unit(incoming, t(now), 0.0, 0.0, 1);
            assert_eq!(out.dropped.expect("overflow").tag, cands[0].3, "case {case}");
        }
    }
}
