//! Entity endpoints with versioned location bindings, one-shot lazy rebinding and
//! in-order delivery.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::{EntityId, Location, NodeId, SimTime};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TransportError {
    #[error("unknown entity {0}")]
    UnknownEntity(EntityId),
    #[error("entity {0} already registered")]
    AlreadyRegistered(EntityId),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct EntityBinding {
    pub entity: EntityId,
    pub node: NodeId,
    pub location: Location,
    pub version: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum DirectoryMode {
    /// Only nodes near an entity's previous location learn where it went, and only for
    /// the staleness window.
    RegionLocal,
    /// Every node knows every current binding.
    GlobalOracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields, default)]
pub struct TransportParams {
    pub directory: DirectoryMode,
    pub rebind_radius: f64,
    pub stale_window: f64,
    /// Delay before a source learns a new binding.
    pub binding_lag: f64,
    pub rebind_budget: u8,
    pub reorder_capacity: usize,
}

impl Default for TransportParams {
    fn default() -> Self {
        TransportParams {
            directory: DirectoryMode::RegionLocal,
            rebind_radius: 20.0,
            stale_window: 10.0,
            binding_lag: 1.0,
            rebind_budget: 1,
            reorder_capacity: 16,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Issued {
    binding: EntityBinding,
    at: SimTime,
}

/// Binding history per entity. Current binding is the last one.
#[derive(Debug, Clone, Default)]
pub struct BindingTable {
    history: BTreeMap<EntityId, Vec<Issued>>,
}

impl BindingTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, entity: EntityId, node: NodeId, location: Location, now: SimTime) -> Result<EntityBinding, TransportError> {
        if self.history.contains_key(&entity) {
            return Err(TransportError::AlreadyRegistered(entity));
        }
        let binding = EntityBinding { entity, node, location, version: 1 };
        self.history.insert(entity, vec![Issued { binding, at: now }]);
        Ok(binding)
    }

    pub fn migrate(&mut self, entity: EntityId, node: NodeId, location: Location, now: SimTime) -> Result<EntityBinding, TransportError> {
        let h = self.history.get_mut(&entity).ok_or(TransportError::UnknownEntity(entity))?;
        let version = h.last().unwrap().binding.version + 1;
        let binding = EntityBinding { entity, node, location, version };
        h.push(Issued { binding, at: now });
        Ok(binding)
    }

    pub fn current(&self, entity: EntityId) -> Option<&EntityBinding> {
        self.history.get(&entity).and_then(|h| h.last()).map(|i| &i.binding)
    }

    fn superseded_at(&self, entity: EntityId, version: u32) -> Option<SimTime> {
        self.history.get(&entity)?.iter().find(|i| i.binding.version == version + 1).map(|i| i.at)
    }

    /// What a sender knows about `entity` at `now`: the newest binding issued at least
    /// `binding_lag` ago (the first binding is known immediately). `None` when that
    /// binding was superseded longer than the staleness window ago.
    pub fn known_at_source(&self, entity: EntityId, now: SimTime, params: &TransportParams) -> Option<EntityBinding> {
        let h = self.history.get(&entity)?;
        let known = match params.directory {
            DirectoryMode::GlobalOracle => h.last().unwrap(),
            DirectoryMode::RegionLocal => h
                .iter()
                .rev()
                .find(|i| i.binding.version == 1 || now - i.at >= params.binding_lag)
                .unwrap(),
        };
        if let Some(t) = self.superseded_at(entity, known.binding.version) {
            if now - t > params.stale_window {
                return None;
            }
        }
        Some(known.binding)
    }

    /// Binding a node at `here` can re-address a packet to, given the version the packet
    /// currently targets. Region-local knowledge covers one step: the successor of a
    /// binding whose location is within the rebind radius, while fresh.
    pub fn rebind_hint(&self, entity: EntityId, addressed: u32, here: &Location, now: SimTime, params: &TransportParams) -> Option<EntityBinding> {
        let h = self.history.get(&entity)?;
        match params.directory {
            DirectoryMode::GlobalOracle => {
                let cur = h.last().unwrap().binding;
                (cur.version > addressed).then_some(cur)
            }
            DirectoryMode::RegionLocal => {
                let old = h.iter().find(|i| i.binding.version == addressed)?;
                let next = h.iter().find(|i| i.binding.version == addressed + 1)?;
                let fresh = now - next.at <= params.stale_window;
                (fresh && old.binding.location.distance(here) <= params.rebind_radius).then_some(next.binding)
            }
        }
    }

    pub fn entities(&self) -> impl Iterator<Item = EntityId> + '_ {
        self.history.keys().copied()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DeliveryAction {
    /// Sequence numbers handed to the application, in order.
    Deliver(Vec<u64>),
    DiscardDuplicate,
    HoldOutOfOrder,
}

/// Exactly-once in-order delivery for one direction of a connection. Sequence numbers
/// start at 1.
#[derive(Debug, Clone)]
pub struct ReorderBuffer {
    next_expected: u64,
    held: BTreeSet<u64>,
    capacity: usize,
    overflow_drops: u64,
}

impl ReorderBuffer {
    pub fn new(capacity: usize) -> Self {
        ReorderBuffer { next_expected: 1, held: BTreeSet::new(), capacity, overflow_drops: 0 }
    }

    pub fn overflow_drops(&self) -> u64 {
        self.overflow_drops
    }

    pub fn held(&self) -> usize {
        self.held.len()
    }

    pub fn accept(&mut self, seq: u64) -> DeliveryAction {
        if seq < self.next_expected || self.held.contains(&seq) {
            return DeliveryAction::DiscardDuplicate;
        }
        if seq > self.next_expected {
            self.held.insert(seq);
            if self.held.len() <= self.capacity {
                return DeliveryAction::HoldOutOfOrder;
            }
            // Give up on the gap below the oldest held packet, which is dropped too.
            let oldest = self.held.pop_first().unwrap();
            self.overflow_drops += 1;
            self.next_expected = oldest + 1;
            let out = self.drain_run();
            return if out.is_empty() { DeliveryAction::HoldOutOfOrder } else { DeliveryAction::Deliver(out) };
        }
        self.next_expected += 1;
        let mut out = vec![seq];
        out.extend(self.drain_run());
        DeliveryAction::Deliver(out)
    }

    fn drain_run(&mut self) -> Vec<u64> {
        let mut out = Vec::new();
        while self.held.remove(&self.next_expected) {
            out.push(self.next_expected);
            self.next_expected += 1;
        }
        out
    }
}

/// Both directions of an entity pair.
#[derive(Debug, Clone)]
pub struct Connection {
    pub endpoints: (EntityId, EntityId),
    next_send: [u64; 2],
    inbound: [ReorderBuffer; 2],
}

impl Connection {
    pub fn new(a: EntityId, b: EntityId, reorder_capacity: usize) -> Self {
        Connection {
            endpoints: (a, b),
            next_send: [1, 1],
            inbound: [ReorderBuffer::new(reorder_capacity), ReorderBuffer::new(reorder_capacity)],
        }
    }

    pub fn next_seq(&mut self, direction: u8) -> u64 {
        let d = direction as usize & 1;
        let s = self.next_send[d];
        self.next_send[d] += 1;
        s
    }

    pub fn deliver_in_order(&mut self, direction: u8, seq: u64) -> DeliveryAction {
        self.inbound[direction as usize & 1].accept(seq)
    }

    pub fn overflow_drops(&self) -> u64 {
        self.inbound.iter().map(ReorderBuffer::overflow_drops).sum()
    }
}
