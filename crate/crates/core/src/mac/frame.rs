use crate::aida::AidaWire;
use crate::kernel::{Location, NodeId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LinkDst {
    Node(NodeId),
    Broadcast,
}

impl LinkDst {
    pub fn accepts(self, node: NodeId) -> bool {
        match self {
            LinkDst::Node(n) => n == node,
            LinkDst::Broadcast => true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FrameKind {
    Data,
    Beacon,
    Probe,
    Response,
    Ack,
    Backpressure,
}

impl FrameKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FrameKind::Data => "data",
            FrameKind::Beacon => "beacon",
            FrameKind::Probe => "probe",
            FrameKind::Response => "response",
            FrameKind::Ack => "ack",
            FrameKind::Backpressure => "backpressure",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FrameBody {
    Data(AidaWire),
    Beacon { location: Location, miss_ratio: f64 },
    /// Lazy-binding relay solicitation.
    Probe { probe: u64, origin: Location, target: Location, half_angle_deg: f64 },
    Response { probe: u64 },
    Ack { acked_seq: u32 },
    Backpressure,
    /// Opaque filler, used to drive the MAC directly.
    Raw,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub src: NodeId,
    pub dst: LinkDst,
    pub kind: FrameKind,
    pub size_bytes: usize,
    /// Link-layer sequence number, per sender.
    pub seq: u32,
    pub body: FrameBody,
}

impl Frame {
    pub fn is_unicast(&self) -> bool {
        matches!(self.dst, LinkDst::Node(_))
    }
}
