use thiserror::Error;

use super::params::Destination;
use crate::kernel::{EntityId, Location, SimTime};

#[derive(Debug, Error, PartialEq, Eq)]
#[error("malformed packet: {0}")]
pub struct PacketError(&'static str);

/// Transport sequencing carried by connection-oriented packets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConnTag {
    pub conn: u32,
    pub direction: u8,
    pub seq: u64,
}

/// Network packet as carried on air. Hop history is kept by the simulator's packet
/// ledger rather than growing the packet.
#[derive(Debug, Clone, PartialEq)]
pub struct Packet {
    pub id: u64,
    pub source: EntityId,
    pub dest: Destination,
    pub deadline: SimTime,
    pub priority_class: u8,
    pub payload_bytes: u16,
    pub created_at: SimTime,
    pub ttl_remaining: u16,
    pub rebinds: u8,
    /// Binding version targeted when `dest.entity` is set.
    pub dest_version: u32,
    pub conn: Option<ConnTag>,
}

const FIXED: usize = 8 + 4 + 8 * 3 + 1 + 4 + 4 + 8 + 1 + 2 + 8 + 2 + 1 + 1;
const CONN: usize = 4 + 1 + 8;

impl Packet {
    pub fn header_bytes(&self) -> usize {
        FIXED + if self.conn.is_some() { CONN } else { 0 }
    }

    pub fn wire_bytes(&self) -> usize {
        self.header_bytes() + self.payload_bytes as usize
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut b = Vec::with_capacity(self.wire_bytes());
        b.extend_from_slice(&self.id.to_le_bytes());
        b.extend_from_slice(&self.source.0.to_le_bytes());
        b.extend_from_slice(&self.dest.center.x.to_le_bytes());
        b.extend_from_slice(&self.dest.center.y.to_le_bytes());
        b.extend_from_slice(&self.dest.radius.to_le_bytes());
        b.push(self.dest.entity.is_some() as u8);
        b.extend_from_slice(&self.dest.entity.map_or(0, |e| e.0).to_le_bytes());
        b.extend_from_slice(&self.dest_version.to_le_bytes());
        b.extend_from_slice(&self.deadline.secs().to_le_bytes());
        b.push(self.priority_class);
        b.extend_from_slice(&self.payload_bytes.to_le_bytes());
        b.extend_from_slice(&self.created_at.secs().to_le_bytes());
        b.extend_from_slice(&self.ttl_remaining.to_le_bytes());
        b.push(self.rebinds);
        b.push(self.conn.is_some() as u8);
        if let Some(c) = self.conn {
            b.extend_from_slice(&c.conn.to_le_bytes());
            b.push(c.direction);
            b.extend_from_slice(&c.seq.to_le_bytes());
        }
        let fill = (self.id as u8).wrapping_mul(31);
        b.extend((0..self.payload_bytes).map(|i| fill.wrapping_add(i as u8)));
        b
    }

    pub fn decode(bytes: &[u8]) -> Result<Packet, PacketError> {
        let mut r = Reader { bytes, pos: 0 };
        let id = u64::from_le_bytes(r.take()?);
        let source = EntityId(u32::from_le_bytes(r.take()?));
        let x = f64::from_le_bytes(r.take()?);
        let y = f64::from_le_bytes(r.take()?);
        let radius = f64::from_le_bytes(r.take()?);
        let has_entity = r.byte()? != 0;
        let entity = u32::from_le_bytes(r.take()?);
        let dest_version = u32::from_le_bytes(r.take()?);
        let deadline = f64::from_le_bytes(r.take()?);
        let priority_class = r.byte()?;
        let payload_bytes = u16::from_le_bytes(r.take()?);
        let created_at = f64::from_le_bytes(r.take()?);
        let ttl_remaining = u16::from_le_bytes(r.take()?);
        let rebinds = r.byte()?;
        let conn = if r.byte()? != 0 {
            Some(ConnTag { conn: u32::from_le_bytes(r.take()?), direction: r.byte()?, seq: u64::from_le_bytes(r.take()?) })
        } else {
            None
        };
        if bytes.len() - r.pos != payload_bytes as usize {
            return Err(PacketError("payload length mismatch"));
        }
        Ok(Packet {
            id,
            source,
            dest: Destination {
                center: Location::new(x, y),
                radius,
                entity: has_entity.then_some(EntityId(entity)),
            },
            deadline: SimTime::from_secs(deadline),
            priority_class,
            payload_bytes,
            created_at: SimTime::from_secs(created_at),
            ttl_remaining,
            rebinds,
            dest_version,
            conn,
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N], PacketError> {
        let end = self.pos + N;
        let s = self.bytes.get(self.pos..end).ok_or(PacketError("truncated header"))?;
        self.pos = end;
        Ok(s.try_into().unwrap())
    }

    fn byte(&mut self) -> Result<u8, PacketError> {
        Ok(self.take::<1>()?[0])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(conn: Option<ConnTag>) -> Packet {
        Packet {
            id: 77,
            source: EntityId(3),
            dest: Destination { center: Location::new(185.0, 100.5), radius: 20.0, entity: Some(EntityId(9)) },
            deadline: SimTime::from_secs(1.25),
            priority_class: 2,
            payload_bytes: 32,
            created_at: SimTime::from_secs(0.75),
            ttl_remaining: 31,
            rebinds: 1,
            dest_version: 2,
            conn,
        }
    }

    #[test]
    fn round_trip() {
        for conn in [None, Some(ConnTag { conn: 4, direction: 1, seq: 12 })] {
            let p = sample(conn);
            let bytes = p.encode();
            assert_eq!(bytes.len(), p.wire_bytes());
            assert_eq!(Packet::decode(&bytes).unwrap(), p);
        }
    }

    #[test]
    fn truncation_detected() {
        let bytes = sample(None).encode();
        assert!(Packet::decode(&bytes[..bytes.len() - 1]).is_err());
        assert!(Packet::decode(&bytes[..10]).is_err());
    }
}
