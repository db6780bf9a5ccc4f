//! The measurement record emitted by every run.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DelayStats {
    pub mean: Option<f64>,
    pub p50: Option<f64>,
    pub p95: Option<f64>,
    pub p99: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PacketMetrics {
    pub generated: u64,
    pub delivered: u64,
    pub delivered_on_time: u64,
    pub dropped: BTreeMap<String, u64>,
    pub dropped_total: u64,
    pub in_flight_at_end: u64,
    pub delivery_ratio: f64,
    pub deadline_miss_ratio: f64,
    pub miss_ratio_by_class: BTreeMap<String, f64>,
    pub delay: DelayStats,
    pub mean_hops: Option<f64>,
    /// Generation instants skipped because no source node was available.
    pub source_unavailable: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EnergyMetrics {
    pub total_joules: f64,
    pub by_activity: BTreeMap<String, f64>,
    pub per_node: Vec<f64>,
    pub per_delivered_payload_byte: Option<f64>,
    pub depleted_nodes: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct OverheadMetrics {
    pub beacon_bytes: u64,
    pub beacons: u64,
    pub probe_bytes: u64,
    pub response_bytes: u64,
    pub backpressure_bytes: u64,
    pub ack_bytes: u64,
    pub total_control_bytes: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MacMetrics {
    /// Every transmission of any kind.
    pub frames_sent: u64,
    /// Data-frame transmissions, retries included.
    pub data_frames_sent: u64,
    pub data_collisions: u64,
    pub corrupted_receptions: u64,
    pub loss_drops: u64,
    pub retransmissions: u64,
    pub link_failures: u64,
    pub mean_utilization: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AggregationMetrics {
    pub frames: u64,
    pub units: u64,
    pub mean_degree: Option<f64>,
    pub degree_histogram: BTreeMap<String, u64>,
    pub header_bytes_saved: u64,
    pub overflow_drops: u64,
    pub malformed_drops: u64,
    pub hold_audited: u64,
    pub hold_violations: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RoutingMetrics {
    pub decisions: u64,
    pub qualified_decisions: u64,
    pub feedback_decisions: u64,
    pub setpoint_violations: u64,
    pub progress_violations: u64,
    pub backpressure_events: u64,
    pub delay_inflations: u64,
    pub reroutes: u64,
    pub suspicions: u64,
    pub probes: u64,
    pub probe_retries: u64,
    pub bindings: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TransportMetrics {
    pub rebinds: u64,
    pub app_delivered: u64,
    pub duplicates_discarded: u64,
    pub reorder_overflow: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LocalizationMetrics {
    pub anchors: u64,
    pub unlocalized: u64,
    pub mean_error: Option<f64>,
    pub p95_error: Option<f64>,
    pub max_error: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DutyMetrics {
    pub sleep_grants: u64,
    pub sleep_denials: u64,
    pub frames_to_sleeping: u64,
    pub coverage_violations: u64,
    pub asleep_node_seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RunMetrics {
    pub schema_version: u32,
    pub seed: u64,
    pub duration_seconds: f64,
    pub events_dispatched: u64,
    pub packets: PacketMetrics,
    pub energy: EnergyMetrics,
    pub overhead: OverheadMetrics,
    pub mac: MacMetrics,
    pub aggregation: AggregationMetrics,
    pub routing: RoutingMetrics,
    pub transport: TransportMetrics,
    pub localization: LocalizationMetrics,
    pub duty: DutyMetrics,
}

impl RunMetrics {
    /// generated = delivered + Σ dropped + in flight.
    pub fn conserves_packets(&self) -> bool {
        let p = &self.packets;
        p.generated == p.delivered + p.dropped.values().sum::<u64>() + p.in_flight_at_end
    }

    /// Flattens numeric leaves into dotted keys, for reports and sweeps.
    pub fn flatten(&self) -> BTreeMap<String, f64> {
        let mut out = BTreeMap::new();
        flatten_value("", &serde_json::to_value(self).expect("metrics serialize"), &mut out);
        out
    }
}

pub fn flatten_value(prefix: &str, v: &serde_json::Value, out: &mut BTreeMap<String, f64>) {
    match v {
        serde_json::Value::Number(n) => {
            if let Some(f) = n.as_f64() {
                out.insert(prefix.to_string(), f);
            }
        }
        serde_json::Value::Object(m) => {
            for (k, v) in m {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten_value(&key, v, out);
            }
        }
        // Per-node arrays are too wide for comparison tables.
        _ => {}
    }
}
