use std::collections::BTreeMap;

use crate::kernel::{Location, NodeId, SimTime};

/// Everything a node knows about one neighbor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeighborEntry {
    pub id: NodeId,
    pub location: Location,
    pub delay: f64,
    pub miss_ratio: f64,
    pub last_beacon: SimTime,
    /// Set by link-layer failure suspicion, cleared by the next beacon.
    pub stale: bool,
}

/// Per-node neighbor table; the whole routing state of a table-driven node.
#[derive(Debug, Clone, Default)]
pub struct NeighborTable {
    entries: BTreeMap<NodeId, NeighborEntry>,
}

impl NeighborTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Beacon receipt. A fresh entry starts with the optimistic delay `initial_delay`.
    pub fn upsert(&mut self, id: NodeId, location: Location, miss_ratio: f64, now: SimTime, initial_delay: f64) {
        let e = self.entries.entry(id).or_insert(NeighborEntry {
            id,
            location,
            delay: initial_delay,
            miss_ratio,
            last_beacon: now,
            stale: false,
        });
        e.location = location;
        e.miss_ratio = miss_ratio.clamp(0.0, 1.0);
        e.last_beacon = now;
        e.stale = false;
    }

    pub fn set_delay(&mut self, id: NodeId, delay: f64, floor: f64) {
        if let Some(e) = self.entries.get_mut(&id) {
            e.delay = delay.max(floor);
        }
    }

    pub fn mark_stale(&mut self, id: NodeId) -> bool {
        match self.entries.get_mut(&id) {
            Some(e) if !e.stale => {
                e.stale = true;
                true
            }
            _ => false,
        }
    }

    pub fn evict(&mut self, id: NodeId) -> bool {
        self.entries.remove(&id).is_some()
    }

    /// Removes entries whose last beacon is older than `timeout`.
    pub fn evict_older(&mut self, now: SimTime, timeout: f64) -> Vec<NodeId> {
        let gone: Vec<NodeId> = self.entries.values().filter(|e| now - e.last_beacon > timeout).map(|e| e.id).collect();
        for id in &gone {
            self.entries.remove(id);
        }
        gone
    }

    pub fn get(&self, id: NodeId) -> Option<&NeighborEntry> {
        self.entries.get(&id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &NeighborEntry> {
        self.entries.values()
    }

    /// Entries usable for forwarding.
    pub fn live(&self) -> impl Iterator<Item = &NeighborEntry> {
        self.entries.values().filter(|e| !e.stale)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }

    pub fn mean_delay(&self) -> Option<f64> {
        let (sum, n) = self.live().fold((0.0, 0usize), |(s, n), e| (s + e.delay, n + 1));
        (n > 0).then(|| sum / n as f64)
    }
}
