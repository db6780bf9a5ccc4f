//! Location-addressed soft real-time routing.

pub mod forwarding;
pub mod lazy;
pub mod neighbor;
pub mod packet;
pub mod params;

pub use forwarding::{admit_packet, candidate_set, feedback_control, relay_speed, select_next_hop, weighted_index, HopDecision};
pub use lazy::{in_sector, response_delay, response_progress};
pub use neighbor::{NeighborEntry, NeighborTable};
pub use packet::{ConnTag, Packet, PacketError};
pub use params::{Destination, ForwardingPolicy, RoutingMode, RoutingParams};

/// Closed set of reasons a packet can leave the network without delivery.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum DropReason {
    TtlExhausted,
    Expired,
    Policed,
    CongestionFeedback,
    Void,
    MacFailure,
    QueueOverflow,
    AggregationOverflow,
    StaleBinding,
    Unresolvable,
    NodeFailure,
    Unlocalized,
}

impl DropReason {
    pub const ALL: [DropReason; 12] = [
        DropReason::TtlExhausted,
        DropReason::Expired,
        DropReason::Policed,
        DropReason::CongestionFeedback,
        DropReason::Void,
        DropReason::MacFailure,
        DropReason::QueueOverflow,
        DropReason::AggregationOverflow,
        DropReason::StaleBinding,
        DropReason::Unresolvable,
        DropReason::NodeFailure,
        DropReason::Unlocalized,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DropReason::TtlExhausted => "ttlExhausted",
            DropReason::Expired => "expired",
            DropReason::Policed => "policed",
            DropReason::CongestionFeedback => "congestionFeedback",
            DropReason::Void => "void",
            DropReason::MacFailure => "macFailure",
            DropReason::QueueOverflow => "queueOverflow",
            DropReason::AggregationOverflow => "aggregationOverflow",
            DropReason::StaleBinding => "staleBinding",
            DropReason::Unresolvable => "unresolvable",
            DropReason::NodeFailure => "nodeFailure",
            DropReason::Unlocalized => "unlocalized",
        }
    }
}
