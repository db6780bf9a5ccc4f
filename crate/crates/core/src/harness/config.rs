//! Scenario description: a single versioned JSON document.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::aida::AggregationPolicy;
use crate::error::{Result, SimError};
use crate::kernel::{Area, EntityId, FailureEntry, Location, NodeId, RadioModel};
use crate::mac::MacParams;
use crate::power::{EnergyRates, SensingParams};
use crate::routing::{Destination, RoutingParams};
use crate::sched::QueueParams;
use crate::transport::TransportParams;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct TopologyConfig {
    pub count: usize,
    pub area: Area,
    #[serde(default)]
    pub anchor_fraction: f64,
    /// Explicit placement; overrides random generation when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub positions: Option<Vec<Location>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields, default)]
pub struct EnergyConfig {
    pub rates: EnergyRates,
    pub initial_joules: f64,
    /// CPU time charged per routing decision.
    pub cpu_per_decision: f64,
}

impl Default for EnergyConfig {
    fn default() -> Self {
        EnergyConfig { rates: EnergyRates::default(), initial_joules: 100.0, cpu_per_decision: 0.0005 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum LocalizationMethod {
    Truth,
    Centroid,
    AreaRefined,
    Injected,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields, default)]
pub struct LocalizationConfig {
    pub method: LocalizationMethod,
    /// Noise for the `injected` method.
    pub sigma: f64,
    /// Nodes that hear no anchor fall back to injected error with this σ; otherwise
    /// they stay unlocalized.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fallback_sigma: Option<f64>,
    /// Area-test grid pitch.
    pub grid_resolution: f64,
}

impl Default for LocalizationConfig {
    fn default() -> Self {
        LocalizationConfig { method: LocalizationMethod::Truth, sigma: 0.0, fallback_sigma: None, grid_resolution: 2.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields, default)]
pub struct DutyCycleConfig {
    pub enabled: bool,
    pub check_period: f64,
    pub sleep_duration: f64,
    pub sensing_radius: f64,
    pub grid_resolution: f64,
}

impl Default for DutyCycleConfig {
    fn default() -> Self {
        DutyCycleConfig { enabled: false, check_period: 5.0, sleep_duration: 4.0, sensing_radius: 20.0, grid_resolution: 5.0 }
    }
}

impl DutyCycleConfig {
    pub fn sensing(&self) -> SensingParams {
        SensingParams { sensing_radius: self.sensing_radius, grid_resolution: self.grid_resolution }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct SourceRegion {
    pub center: Location,
    #[serde(default)]
    pub radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct FlowConfig {
    /// Packets originate at the alive, awake node nearest the region center.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<SourceRegion>,
    /// Alternatively, packets originate wherever this entity is bound.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub from_entity: Option<EntityId>,
    pub dest: Destination,
    /// Address the flow to an entity's last known binding instead of `dest.center`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub to_entity: Option<EntityId>,
    pub period_seconds: f64,
    pub payload_bytes: u16,
    pub deadline_offset_seconds: f64,
    #[serde(default)]
    pub priority_class: u8,
    #[serde(default)]
    pub start_time: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_time: Option<f64>,
    /// Sequence packets over a transport connection (requires both entities).
    #[serde(default)]
    pub connection: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct EntityConfig {
    pub id: EntityId,
    pub node: NodeId,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct MigrationConfig {
    pub entity: EntityId,
    pub at: f64,
    pub node: NodeId,
}

/// Crash a seeded random subset of nodes at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct RandomFailures {
    pub fraction: f64,
    pub at: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields, default)]
pub struct OutputConfig {
    pub packet_trace: bool,
    pub event_trace: bool,
    pub timeseries_interval: f64,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { packet_trace: false, event_trace: false, timeseries_interval: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: u64,
    pub duration_seconds: f64,
    pub topology: TopologyConfig,
    #[serde(default)]
    pub radio: RadioModel,
    #[serde(default)]
    pub energy: EnergyConfig,
    #[serde(default)]
    pub mac: MacParams,
    #[serde(default)]
    pub aggregation: AggregationPolicy,
    #[serde(default)]
    pub routing: RoutingParams,
    #[serde(default)]
    pub queue: QueueParams,
    #[serde(default)]
    pub localization: LocalizationConfig,
    #[serde(default)]
    pub duty_cycle: DutyCycleConfig,
    #[serde(default)]
    pub transport: TransportParams,
    #[serde(default)]
    pub entities: Vec<EntityConfig>,
    #[serde(default)]
    pub migrations: Vec<MigrationConfig>,
    #[serde(default)]
    pub traffic: Vec<FlowConfig>,
    #[serde(default)]
    pub failures: Vec<FailureEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random_failures: Option<RandomFailures>,
    #[serde(default)]
    pub outputs: OutputConfig,
}

fn check(ok: bool, key: impl Into<String>, constraint: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(SimError::config(key, constraint))
    }
}

fn lift(r: std::result::Result<(), (&'static str, String)>) -> Result<()> {
    r.map_err(|(k, c)| SimError::config(k, c))
}

impl ScenarioConfig {
    /// 100 nodes on 200 m × 200 m, 40 m range, 10% anchors, two crossing CBR flows.
    pub fn reference() -> Self {
        let flow = |from: (f64, f64), to: (f64, f64)| FlowConfig {
            source: Some(SourceRegion { center: Location::new(from.0, from.1), radius: 20.0 }),
            from_entity: None,
            dest: Destination { center: Location::new(to.0, to.1), radius: 20.0, entity: None },
            to_entity: None,
            period_seconds: 0.1,
            payload_bytes: 32,
            deadline_offset_seconds: 0.5,
            priority_class: 0,
            start_time: 1.0,
            stop_time: None,
            connection: false,
        };
        ScenarioConfig {
            schema_version: SCHEMA_VERSION,
            seed: 1,
            duration_seconds: 30.0,
            topology: TopologyConfig { count: 100, area: Area::new(200.0, 200.0), anchor_fraction: 0.1, positions: None },
            radio: RadioModel::default(),
            energy: EnergyConfig::default(),
            mac: MacParams::default(),
            aggregation: AggregationPolicy::default(),
            routing: RoutingParams::default(),
            queue: QueueParams::default(),
            localization: LocalizationConfig::default(),
            duty_cycle: DutyCycleConfig::default(),
            transport: TransportParams::default(),
            entities: Vec::new(),
            migrations: Vec::new(),
            traffic: vec![flow((15.0, 100.0), (185.0, 100.0)), flow((100.0, 15.0), (100.0, 185.0))],
            failures: Vec::new(),
            random_failures: None,
            outputs: OutputConfig::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(|e| SimError::Parse(e.to_string()))?;
        Self::from_value(value)
    }

    pub fn from_value(value: Value) -> Result<Self> {
        match value.get("schemaVersion").and_then(Value::as_u64) {
            Some(v) if v == SCHEMA_VERSION as u64 => {}
            Some(v) => return Err(SimError::SchemaMismatch(format!("config has {v}, expected {SCHEMA_VERSION}"))),
            None => return Err(SimError::config("schemaVersion", "required")),
        }
        let cfg: ScenarioConfig = serde_json::from_value(value).map_err(|e| SimError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("config serializes")
    }

    /// Applies `key=value` overrides on dotted paths, then re-validates.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        let mut v = self.to_value();
        for o in overrides {
            let (path, raw) = o
                .as_ref()
                .split_once('=')
                .ok_or_else(|| SimError::Parse(format!("override `{}` is not key=value", o.as_ref())))?;
            set_path(&mut v, path, parse_scalar(raw))?;
        }
        Self::from_value(v)
    }

    pub fn validate(&self) -> Result<()> {
        check(self.schema_version == SCHEMA_VERSION, "schemaVersion", "unsupported version")?;
        check(self.duration_seconds > 0.0 && self.duration_seconds.is_finite(), "durationSeconds", "must be > 0")?;
        let t = &self.topology;
        check(t.count >= 1, "topology.count", "must be >= 1")?;
        check(!t.area.is_degenerate(), "topology.area", "width and height must be > 0")?;
        check((0.0..=1.0).contains(&t.anchor_fraction), "topology.anchorFraction", "must be in [0, 1]")?;
        if let Some(p) = &t.positions {
            check(p.len() == t.count, "topology.positions", "must list exactly `count` locations")?;
            check(p.iter().all(|l| t.area.contains(l)), "topology.positions", "must lie inside the area")?;
        }
        let r = &self.radio;
        check(r.range > 0.0, "radio.range", "must be > 0")?;
        check(r.bitrate > 0.0, "radio.bitrate", "must be > 0")?;
        check((0.0..=1.0).contains(&r.loss_probability), "radio.lossProbability", "must be in [0, 1]")?;
        let e = &self.energy;
        for (k, v) in [
            ("energy.rates.txWatts", e.rates.tx_watts),
            ("energy.rates.rxWatts", e.rates.rx_watts),
            ("energy.rates.idleWatts", e.rates.idle_watts),
            ("energy.rates.sleepWatts", e.rates.sleep_watts),
            ("energy.rates.cpuWatts", e.rates.cpu_watts),
            ("energy.cpuPerDecision", e.cpu_per_decision),
        ] {
            check(v >= 0.0 && v.is_finite(), k, "must be >= 0")?;
        }
        check(e.initial_joules > 0.0, "energy.initialJoules", "must be > 0")?;
        lift(self.mac.validate(r.bitrate))?;
        lift(self.aggregation.validate())?;
        check(
            self.aggregation.max_degree as usize <= 255,
            "aggregation.maxDegree",
            "must be <= 255",
        )?;
        lift(self.routing.validate())?;
        check(self.queue.capacity >= 1, "queue.capacity", "must be >= 1")?;
        let l = &self.localization;
        check(l.sigma >= 0.0, "localization.sigma", "must be >= 0")?;
        check(l.fallback_sigma.is_none_or(|s| s >= 0.0), "localization.fallbackSigma", "must be >= 0")?;
        check(l.grid_resolution > 0.0, "localization.gridResolution", "must be > 0")?;
        let d = &self.duty_cycle;
        if d.enabled {
            self.duty_cycle.sensing().validate().map_err(|c| SimError::config("dutyCycle.gridResolution", c))?;
            check(d.check_period > 0.0, "dutyCycle.checkPeriod", "must be > 0")?;
            check(d.sleep_duration > 0.0, "dutyCycle.sleepDuration", "must be > 0")?;
        }
        let tp = &self.transport;
        check(tp.rebind_radius >= 0.0, "transport.rebindRadius", "must be >= 0")?;
        check(tp.stale_window >= 0.0, "transport.staleWindow", "must be >= 0")?;
        check(tp.binding_lag >= 0.0, "transport.bindingLag", "must be >= 0")?;
        check(tp.reorder_capacity >= 1, "transport.reorderCapacity", "must be >= 1")?;
        for (i, en) in self.entities.iter().enumerate() {
            check(en.node.index() < t.count, format!("entities[{i}].node"), "unknown node")?;
            check(
                self.entities[..i].iter().all(|o| o.id != en.id),
                format!("entities[{i}].id"),
                "duplicate entity",
            )?;
        }
        let known = |e: EntityId| self.entities.iter().any(|x| x.id == e);
        for (i, m) in self.migrations.iter().enumerate() {
            check(known(m.entity), format!("migrations[{i}].entity"), "unknown entity")?;
            check(m.node.index() < t.count, format!("migrations[{i}].node"), "unknown node")?;
            check(m.at >= 0.0, format!("migrations[{i}].at"), "must be >= 0")?;
        }
        for (i, f) in self.traffic.iter().enumerate() {
            let k = |s: &str| format!("traffic[{i}].{s}");
            check(f.source.is_some() != f.from_entity.is_some(), k("source"), "exactly one of source or fromEntity")?;
            if let Some(s) = f.source {
                check(t.area.contains(&s.center), k("source.center"), "must lie inside the area")?;
                check(s.radius >= 0.0, k("source.radius"), "must be >= 0")?;
            }
            if let Some(e) = f.from_entity {
                check(known(e), k("fromEntity"), "unknown entity")?;
            }
            if let Some(e) = f.to_entity {
                check(known(e), k("toEntity"), "unknown entity")?;
            } else {
                check(t.area.contains(&f.dest.center), k("dest.center"), "must lie inside the area")?;
            }
            check(f.dest.radius >= 0.0, k("dest.radius"), "must be >= 0")?;
            check(f.period_seconds > 0.0, k("periodSeconds"), "must be > 0")?;
            check(f.deadline_offset_seconds > 0.0, k("deadlineOffsetSeconds"), "must be > 0")?;
            check(f.start_time >= 0.0, k("startTime"), "must be >= 0")?;
            check(f.stop_time.is_none_or(|s| s >= f.start_time), k("stopTime"), "must be >= startTime")?;
            check(
                !f.connection || (f.from_entity.is_some() && f.to_entity.is_some()),
                k("connection"),
                "requires fromEntity and toEntity",
            )?;
        }
        for (i, fe) in self.failures.iter().enumerate() {
            check(fe.node.index() < t.count, format!("failures[{i}].node"), "unknown node")?;
            check(fe.at.secs() >= 0.0, format!("failures[{i}].at"), "must be >= 0")?;
            if let crate::kernel::FailureKind::MoveTo(l) = fe.kind {
                check(t.area.contains(&l), format!("failures[{i}].kind.moveTo"), "must lie inside the area")?;
            }
        }
        if let Some(rf) = self.random_failures {
            check((0.0..=1.0).contains(&rf.fraction), "randomFailures.fraction", "must be in [0, 1]")?;
            check(rf.at >= 0.0, "randomFailures.at", "must be >= 0")?;
        }
        check(self.outputs.timeseries_interval > 0.0, "outputs.timeseriesInterval", "must be > 0")?;
        Ok(())
    }
}

/// Interprets an override value as JSON when it parses, else as a bare string.
pub fn parse_scalar(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

/// Resolves a dotted path (`routing.setpoint`, `traffic.0.periodSeconds`) to a mutable
/// slot. Every segment must already exist.
pub fn resolve_path<'a>(root: &'a mut Value, path: &str) -> Result<&'a mut Value> {
    let mut cur = root;
    for seg in path.split('.') {
        cur = match cur {
            Value::Object(m) => m.get_mut(seg),
            Value::Array(a) => seg.parse::<usize>().ok().and_then(move |i| a.get_mut(i)),
            _ => None,
        }
        .ok_or_else(|| SimError::UnresolvablePath(path.to_string()))?;
    }
    Ok(cur)
}

pub fn set_path(root: &mut Value, path: &str, value: Value) -> Result<()> {
    // Optional fields are omitted when unset; allow creating a missing leaf under an
    // existing object.
    let (parent, leaf) = match path.rsplit_once('.') {
        Some((p, l)) => (Some(p), l),
        None => (None, path),
    };
    let slot = match parent {
        Some(p) => resolve_path(root, p).ok(),
        None => Some(&mut *root),
    };
    if let Some(Value::Object(m)) = slot {
        if !m.contains_key(leaf) {
            m.insert(leaf.to_string(), value);
            return Ok(());
        }
    }
    *resolve_path(root, path)? = value;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_validates_and_round_trips() {
        let r = ScenarioConfig::reference();
        r.validate().unwrap();
        let text = serde_json::to_string_pretty(&r).unwrap();
        assert_eq!(ScenarioConfig::from_json(&text).unwrap(), r);
    }

    #[test]
    fn unknown_keys_rejected() {
        let mut v = ScenarioConfig::reference().to_value();
        v["radio"]["gain"] = Value::from(3);
        assert!(matches!(ScenarioConfig::from_value(v), Err(SimError::Parse(m)) if m.contains("gain")));
    }

    #[test]
    fn validation_names_key() {
        let err = ScenarioConfig::reference().with_overrides(&["radio.lossProbability=1.5"]).unwrap_err();
        match err {
            SimError::Config { key, constraint } => {
                assert_eq!(key, "radio.lossProbability");
                assert!(constraint.contains("[0, 1]"));
            }
            e => panic!("{e}"),
        }
    }

    #[test]
    fn overrides_resolve_paths() {
        let c = ScenarioConfig::reference()
            .with_overrides(&["routing.setpoint=250", "traffic.1.periodSeconds=0.05", "routing.mode=lazyBinding"])
            .unwrap();
        assert_eq!(c.routing.setpoint, 250.0);
        assert_eq!(c.traffic[1].period_seconds, 0.05);
        assert_eq!(c.routing.mode, crate::routing::RoutingMode::LazyBinding);
        assert!(matches!(
            ScenarioConfig::reference().with_overrides(&["routing.nope.deeper=1"]),
            Err(SimError::UnresolvablePath(_))
        ));
    }

    #[test]
    fn schema_version_checked() {
        let mut v = ScenarioConfig::reference().to_value();
        v["schemaVersion"] = Value::from(99);
        assert!(matches!(ScenarioConfig::from_value(v), Err(SimError::SchemaMismatch(_))));
    }
}
