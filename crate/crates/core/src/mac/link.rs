use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::kernel::{NodeId, SimTime};

use super::MacError;

/// Per-node link measurements: per-neighbor delay EWMA, channel busy time and
/// neighbor liveness.
#[derive(Debug, Clone)]
pub struct LinkStats {
    alpha: f64,
    window: f64,
    delays: BTreeMap<NodeId, f64>,
    busy: VecDeque<(f64, f64)>,
    last_heard: BTreeMap<NodeId, SimTime>,
    suspected: BTreeSet<NodeId>,
}

impl LinkStats {
    pub fn new(alpha: f64, window: f64) -> Self {
        assert!(alpha > 0.0 && alpha <= 1.0, "alpha must be in (0,1]");
        assert!(window > 0.0);
        LinkStats {
            alpha,
            window,
            delays: BTreeMap::new(),
            busy: VecDeque::new(),
            last_heard: BTreeMap::new(),
            suspected: BTreeSet::new(),
        }
    }

    /// `d' = α·sample + (1−α)·d`; the first sample initializes the estimate.
    pub fn observe_delay(&mut self, neighbor: NodeId, sample: f64) -> Result<f64, MacError> {
        if !(sample > 0.0) || !sample.is_finite() {
            return Err(MacError::NonPositiveSample(sample));
        }
        let alpha = self.alpha;
        let d = self
            .delays
            .entry(neighbor)
            .and_modify(|d| *d = alpha * sample + (1.0 - alpha) * *d)
            .or_insert(sample);
        Ok(*d)
    }

    pub fn delay(&self, neighbor: NodeId) -> Option<f64> {
        self.delays.get(&neighbor).copied()
    }

    pub fn mean_delay(&self) -> Option<f64> {
        (!self.delays.is_empty()).then(|| self.delays.values().sum::<f64>() / self.delays.len() as f64)
    }

    /// Multiplies an existing delay estimate (or `floor` if none) by `factor`.
    pub fn inflate(&mut self, neighbor: NodeId, factor: f64, floor: f64) -> (f64, f64) {
        let d = self.delays.entry(neighbor).or_insert(floor);
        let before = *d;
        *d = before * factor;
        (before, *d)
    }

    pub fn forget(&mut self, neighbor: NodeId) {
        self.delays.remove(&neighbor);
        self.last_heard.remove(&neighbor);
        self.suspected.remove(&neighbor);
    }

    /// Records channel busy time `[start, end]` as observed by this node. Starts must be
    /// non-decreasing across calls.
    pub fn add_busy(&mut self, start: f64, end: f64) {
        debug_assert!(end >= start);
        if let Some(last) = self.busy.back_mut() {
            debug_assert!(start >= last.0 - 1e-12);
            if start <= last.1 {
                last.1 = last.1.max(end);
                return;
            }
        }
        self.busy.push_back((start, end));
    }

    /// Fraction of the last `W` seconds the channel was busy. Zero until one full
    /// window has elapsed.
    pub fn utilization(&mut self, now: SimTime) -> f64 {
        let now = now.secs();
        if now < self.window {
            return 0.0;
        }
        let lo = now - self.window;
        while self.busy.front().is_some_and(|&(_, e)| e < lo) {
            self.busy.pop_front();
        }
        let busy: f64 = self
            .busy
            .iter()
            .map(|&(s, e)| (e.min(now) - s.max(lo)).max(0.0))
            .sum();
        (busy / self.window).clamp(0.0, 1.0)
    }

    /// Refreshes liveness; returns true if the neighbor was suspected and is now cleared.
    pub fn heard(&mut self, neighbor: NodeId, now: SimTime) -> bool {
        self.last_heard.insert(neighbor, now);
        self.suspected.remove(&neighbor)
    }

    pub fn last_heard(&self, neighbor: NodeId) -> Option<SimTime> {
        self.last_heard.get(&neighbor).copied()
    }

    pub fn is_suspected(&self, neighbor: NodeId) -> bool {
        self.suspected.contains(&neighbor)
    }

    /// Neighbors silent for longer than `timeout`, each reported once until refreshed.
    pub fn sweep_suspicions(&mut self, now: SimTime, timeout: f64) -> Vec<NodeId> {
        let fresh: Vec<NodeId> = self
            .last_heard
            .iter()
            .filter(|(n, t)| now - **t > timeout && !self.suspected.contains(n))
            .map(|(n, _)| *n)
            .collect();
        self.suspected.extend(fresh.iter().copied());
        fresh
    }
}
