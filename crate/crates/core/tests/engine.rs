//! End-to-end behaviour of the assembled stack on small hand-built topologies.

use std::collections::BTreeMap;

use proptest::prelude::*;

use sensornet::aida::AggregationMode;
use sensornet::engine::{simulate, PacketState};
use sensornet::harness::config::{EntityConfig, FlowConfig, MigrationConfig, ScenarioConfig, SourceRegion};
use sensornet::kernel::{Area, EntityId, FailureEntry, FailureKind, Location, NodeId, SimTime, TraceKind};
use sensornet::routing::{Destination, DropReason, ForwardingPolicy, RoutingMode};

const SPACING: f64 = 30.0;

fn at(i: usize) -> Location {
    Location::new(5.0 + i as f64 * SPACING, 10.0)
}

/// `n` nodes on a line, 30 m apart (radio range 40 m), one flow from the first node
/// to the last.
fn line(n: usize) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::reference();
    cfg.topology.count = n;
    cfg.topology.area = Area::new(10.0 + (n - 1) as f64 * SPACING, 20.0);
    cfg.topology.anchor_fraction = 0.0;
    cfg.topology.positions = Some((0..n).map(at).collect());
    cfg.duration_seconds = 20.0;
    cfg.traffic = vec![FlowConfig {
        source: Some(SourceRegion { center: at(0), radius: 0.0 }),
        from_entity: None,
        dest: Destination { center: at(n - 1), radius: 1.0, entity: None },
        to_entity: None,
        period_seconds: 0.5,
        payload_bytes: 32,
        deadline_offset_seconds: 1.0,
        priority_class: 0,
        start_time: 3.0,
        stop_time: None,
        connection: false,
    }];
    cfg
}

fn dropped(m: &sensornet::harness::metrics::RunMetrics, r: DropReason) -> u64 {
    m.packets.dropped.get(r.as_str()).copied().unwrap_or(0)
}

#[test]
fn line_delivers_over_every_hop() {
    let mut cfg = line(5);
    cfg.outputs.packet_trace = true;
    let out = simulate(&cfg, 1).unwrap();
    let p = &out.metrics.packets;
    assert!(p.generated >= 30);
    assert_eq!(p.delivered + p.in_flight_at_end, p.generated, "{:?}", p.dropped);
    assert_eq!(p.mean_hops, Some(4.0));
    for r in out.ledger.records().iter().filter(|r| r.state == PacketState::Delivered) {
        let path: Vec<u32> = r.hops.iter().map(|h| h.0 .0).collect();
        assert_eq!(path, vec![0, 1, 2, 3, 4]);
    }
}

#[test]
fn ttl_of_one_stops_after_the_first_hop() {
    let mut cfg = line(5);
    cfg.routing.ttl = 1;
    let m = simulate(&cfg, 1).unwrap().metrics;
    assert_eq!(m.packets.delivered, 0);
    assert!(dropped(&m, DropReason::TtlExhausted) > 0);
    assert!(m.conserves_packets());
}

#[test]
fn silent_network_sends_no_data() {
    let mut cfg = ScenarioConfig::reference();
    cfg.traffic.clear();
    let m = simulate(&cfg, 2).unwrap().metrics;
    assert_eq!(m.packets.generated, 0);
    assert_eq!(m.mac.data_frames_sent, 0);
    assert!(m.overhead.beacons > 0);
    assert!(m.energy.total_joules > 0.0);
}

#[test]
fn same_seed_same_run_other_seed_other_run() {
    let cfg = ScenarioConfig::reference();
    let a = simulate(&cfg, 7).unwrap();
    let b = simulate(&cfg, 7).unwrap();
    let c = simulate(&cfg, 8).unwrap();
    assert_eq!(a.metrics, b.metrics);
    assert_eq!(a.timeseries, b.timeseries);
    assert_ne!(a.metrics, c.metrics);
}

#[test]
fn crashed_relay_receives_nothing() {
    let mut cfg = line(5);
    let crash = 10.0;
    cfg.failures = vec![FailureEntry { node: NodeId(2), at: SimTime::from_secs(crash), kind: FailureKind::Crash }];
    cfg.outputs.packet_trace = true;
    cfg.outputs.event_trace = true;
    let out = simulate(&cfg, 1).unwrap();
    let m = &out.metrics;
    assert!(m.packets.delivered > 0);
    assert!(m.conserves_packets());
    // The line is cut: nothing created after the crash gets through.
    for r in out.ledger.records().iter().filter(|r| r.created_at.secs() > crash) {
        assert_ne!(r.state, PacketState::Delivered, "packet {} crossed a dead relay", r.id);
        assert!(r.hops.iter().all(|h| h.0 != NodeId(2)));
    }
    let late_rx = out
        .trace
        .records()
        .iter()
        .filter(|r| r.node == Some(NodeId(2)) && r.time.secs() > crash)
        .filter(|r| matches!(r.kind, TraceKind::FrameReceived { .. } | TraceKind::TxStart { .. }))
        .count();
    assert_eq!(late_rx, 0);
}

#[test]
fn energy_trace_replays_to_the_per_node_totals() {
    let mut cfg = line(4);
    cfg.outputs.event_trace = true;
    let out = simulate(&cfg, 3).unwrap();
    let mut replay: BTreeMap<u32, f64> = BTreeMap::new();
    for r in out.trace.records() {
        if let (Some(n), TraceKind::Consume { joules, .. }) = (r.node, &r.kind) {
            *replay.entry(n.0).or_default() += joules;
        }
    }
    let per_node = &out.metrics.energy.per_node;
    for (i, e) in per_node.iter().enumerate() {
        let r = replay.get(&(i as u32)).copied().unwrap_or(0.0);
        assert!((r - e).abs() <= 1e-9 * e.max(1.0), "node {i}: trace {r} vs metrics {e}");
        assert!((out.consumed[i] - e).abs() <= 1e-9 * e.max(1.0));
    }
    let total: f64 = per_node.iter().sum();
    assert!((total - out.metrics.energy.total_joules).abs() <= 1e-9 * total);
}

#[test]
fn forwarding_always_makes_progress() {
    for policy in [ForwardingPolicy::Speed, ForwardingPolicy::Greedy] {
        let mut cfg = ScenarioConfig::reference();
        cfg.routing.policy = policy;
        let m = simulate(&cfg, 4).unwrap().metrics;
        assert!(m.routing.decisions > 0);
        assert_eq!(m.routing.progress_violations, 0, "{policy:?}");
    }
}

#[test]
fn migrated_entity_is_reached_by_rebinding() {
    let mut cfg = line(9);
    cfg.duration_seconds = 30.0;
    cfg.entities = vec![EntityConfig { id: EntityId(0), node: NodeId(8) }];
    cfg.migrations = vec![MigrationConfig { entity: EntityId(0), at: 10.0, node: NodeId(5) }];
    let f = &mut cfg.traffic[0];
    f.to_entity = Some(EntityId(0));
    f.period_seconds = 0.1;
    f.deadline_offset_seconds = 5.0;
    cfg.outputs.packet_trace = true;
    let out = simulate(&cfg, 1).unwrap();
    let m = &out.metrics;
    assert!(m.transport.rebinds > 0);
    assert!(m.conserves_packets());
    let rebound = out.ledger.records().iter().filter(|r| r.rebinds > 0 && r.state == PacketState::Delivered).count();
    assert!(rebound > 0);
    // Once the new binding has propagated, packets go straight to the new host.
    let lag = cfg.transport.binding_lag;
    for r in out.ledger.records().iter().filter(|r| r.created_at.secs() > 10.0 + lag && r.state == PacketState::Delivered) {
        assert_eq!(r.rebinds, 0);
        assert_eq!(r.hops.last().unwrap().0, NodeId(5));
    }
}

#[test]
fn lazy_binding_sends_no_beacons() {
    let mut cfg = line(5);
    cfg.routing.mode = RoutingMode::LazyBinding;
    let m = simulate(&cfg, 1).unwrap().metrics;
    assert_eq!(m.overhead.beacons, 0);
    assert!(m.routing.probes > 0);
    assert!(m.packets.delivered > 0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn packets_are_conserved(
        seed in 0u64..1000,
        count in 20usize..60,
        period in 0.02f64..0.3,
        lazy in any::<bool>(),
        adaptive in any::<bool>(),
        crash in 0.0f64..0.2,
    ) {
        let mut cfg = ScenarioConfig::reference();
        cfg.topology.count = count;
        cfg.duration_seconds = 8.0;
        if lazy {
            cfg.routing.mode = RoutingMode::LazyBinding;
        }
        if !adaptive {
            cfg.aggregation.mode = AggregationMode::None;
        }
        for f in &mut cfg.traffic {
            f.period_seconds = period;
        }
        if crash > 0.0 {
            cfg.random_failures = Some(sensornet::harness::config::RandomFailures { fraction: crash, at: 4.0 });
        }
        let m = simulate(&cfg, seed).unwrap().metrics;
        prop_assert!(m.conserves_packets(), "{:?}", m.packets);
        prop_assert_eq!(m.routing.progress_violations, 0);
    }
}
