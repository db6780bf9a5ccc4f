use rand::Rng;
use serde::{Deserialize, Serialize};

use super::geom::{in_range, Location};
use super::ids::NodeId;

/// Unit-disk radio with independent per-frame Bernoulli loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields, default)]
pub struct RadioModel {
    pub range: f64,
    pub bitrate: f64,
    pub loss_probability: f64,
}

impl Default for RadioModel {
    fn default() -> Self {
        RadioModel { range: 40.0, bitrate: 250_000.0, loss_probability: 0.0 }
    }
}

impl RadioModel {
    pub fn airtime(&self, bytes: usize) -> f64 {
        (bytes as f64 * 8.0) / self.bitrate
    }

    /// One Bernoulli draw: true when the frame survives at one receiver.
    pub fn survives<R: Rng + ?Sized>(&self, rng: &mut R) -> bool {
        if self.loss_probability <= 0.0 {
            return true;
        }
        if self.loss_probability >= 1.0 {
            return false;
        }
        rng.random::<f64>() >= self.loss_probability
    }
}

/// What the channel needs to know about a potential receiver.
#[derive(Debug, Clone, Copy)]
pub struct RadioNode {
    pub id: NodeId,
    pub location: Location,
    pub alive: bool,
    pub awake: bool,
}

/// Receivers of one broadcast: awake, alive, in-range nodes other than the sender,
/// each independently dropped with the radio's loss probability. Candidates are
/// visited in slice order so draws are reproducible.
pub fn broadcast_deliver<R: Rng + ?Sized>(
    sender: NodeId,
    nodes: &[RadioNode],
    radio: &RadioModel,
    rng: &mut R,
) -> Vec<NodeId> {
    let Some(origin) = nodes.iter().find(|n| n.id == sender) else {
        return Vec::new();
    };
    if !(origin.alive && origin.awake) {
        return Vec::new();
    }
    let from = origin.location;
    nodes
        .iter()
        .filter(|n| n.id != sender && n.alive && n.awake && in_range(&from, &n.location, radio.range))
        .filter(|_| radio.survives(rng))
        .map(|n| n.id)
        .collect()
}
