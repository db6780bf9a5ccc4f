use crate::kernel::{NodeId, SimTime};
use crate::routing::DropReason;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PacketState {
    InFlight,
    Delivered,
    Dropped(DropReason),
}

/// Simulator-side record of one generated packet. Used for metrics and audits only;
/// protocol code never reads it.
#[derive(Debug, Clone)]
pub struct PacketRecord {
    pub id: u64,
    pub flow: usize,
    pub priority_class: u8,
    pub source: NodeId,
    pub created_at: SimTime,
    pub deadline: SimTime,
    pub payload_bytes: u16,
    pub state: PacketState,
    pub delivered_at: Option<SimTime>,
    pub hops: Vec<(NodeId, SimTime)>,
    pub rebinds: u8,
    copies: u32,
    last_reason: Option<DropReason>,
}

impl PacketRecord {
    pub fn delay(&self) -> Option<f64> {
        self.delivered_at.map(|t| t - self.created_at)
    }

    pub fn on_time(&self) -> bool {
        self.delivered_at.is_some_and(|t| !self.deadline.before(t))
    }

    pub fn copies(&self) -> u32 {
        self.copies
    }
}

/// Tracks every live copy of every packet so each packet ends in exactly one terminal
/// state, or is still in flight when the run stops.
#[derive(Debug, Default)]
pub struct PacketLedger {
    records: Vec<PacketRecord>,
}

impl PacketLedger {
    pub fn create(&mut self, flow: usize, priority_class: u8, source: NodeId, created_at: SimTime, deadline: SimTime, payload_bytes: u16) -> u64 {
        let id = self.records.len() as u64;
        self.records.push(PacketRecord {
            id,
            flow,
            priority_class,
            source,
            created_at,
            deadline,
            payload_bytes,
            state: PacketState::InFlight,
            delivered_at: None,
            hops: vec![(source, created_at)],
            rebinds: 0,
            copies: 1,
            last_reason: None,
        });
        id
    }

    pub fn get(&self, id: u64) -> &PacketRecord {
        &self.records[id as usize]
    }

    pub fn records(&self) -> &[PacketRecord] {
        &self.records
    }

    /// A new copy appeared at `node` (reception).
    pub fn copy_arrived(&mut self, id: u64, node: NodeId, at: SimTime) {
        let r = &mut self.records[id as usize];
        r.copies += 1;
        r.hops.push((node, at));
    }

    pub fn note_rebind(&mut self, id: u64) {
        self.records[id as usize].rebinds += 1;
    }

    /// A copy reached the destination. Only the first delivery counts.
    pub fn deliver(&mut self, id: u64, at: SimTime) -> bool {
        let r = &mut self.records[id as usize];
        let first = r.state == PacketState::InFlight;
        if first {
            r.state = PacketState::Delivered;
            r.delivered_at = Some(at);
        }
        r.copies -= 1;
        first
    }

    /// A copy was destroyed for `reason`.
    pub fn drop_copy(&mut self, id: u64, reason: DropReason) {
        let r = &mut self.records[id as usize];
        r.last_reason = Some(reason);
        Self::release_inner(r);
    }

    /// The sender's copy is released after a hand-over. If nothing else holds the
    /// packet, it terminates with the most recent drop reason seen, or as a link loss.
    pub fn release(&mut self, id: u64) {
        Self::release_inner(&mut self.records[id as usize]);
    }

    fn release_inner(r: &mut PacketRecord) {
        assert!(r.copies > 0, "packet {} released with no live copy", r.id);
        r.copies -= 1;
        if r.copies == 0 && r.state == PacketState::InFlight {
            r.state = PacketState::Dropped(r.last_reason.unwrap_or(DropReason::MacFailure));
        }
    }

    pub fn in_flight(&self) -> usize {
        self.records.iter().filter(|r| r.state == PacketState::InFlight).count()
    }
}
