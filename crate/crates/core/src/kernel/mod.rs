//! Discrete-event core: clock, event list, geometry, radio, topology, failures,
//! seeded randomness and the event trace.

pub mod events;
pub mod failure;
pub mod geom;
pub mod ids;
pub mod radio;
pub mod rng;
pub mod time;
pub mod topology;
pub mod trace;

pub use events::{EventHandle, EventQueue};
pub use failure::{FailureEntry, FailureKind, FailureSchedule};
pub use geom::{in_range, Area, Location};
pub use ids::{EntityId, NodeId};
pub use radio::{broadcast_deliver, RadioModel, RadioNode};
pub use rng::RngStream;
pub use time::{SimTime, TIME_EPSILON};
pub use topology::generate_topology;
pub use trace::{Module, Trace, TraceKind, TraceRecord};
