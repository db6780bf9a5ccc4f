use serde::{Deserialize, Serialize};

use super::geom::Location;
use super::ids::NodeId;
use super::time::SimTime;
use crate::error::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum FailureKind {
    Crash,
    SleepForce,
    Recover,
    MoveTo(Location),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct FailureEntry {
    pub node: NodeId,
    pub at: SimTime,
    pub kind: FailureKind,
}

/// Time-sorted list of injected failures, power-mode changes and teleports.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FailureSchedule {
    entries: Vec<FailureEntry>,
}

impl FailureSchedule {
    /// Sorts by time (stable, so same-time entries keep their listed order) and checks
    /// every referenced node exists.
    pub fn new(mut entries: Vec<FailureEntry>, node_count: usize) -> Result<Self, SimError> {
        for e in &entries {
            if e.node.index() >= node_count {
                return Err(SimError::UnknownNode(e.node));
            }
            if e.at.secs() < 0.0 || !e.at.secs().is_finite() {
                return Err(SimError::Config {
                    key: "failures.at".into(),
                    constraint: "must be a finite non-negative time".into(),
                });
            }
        }
        entries.sort_by_key(|e| e.at);
        Ok(FailureSchedule { entries })
    }

    pub fn entries(&self) -> &[FailureEntry] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
