//! Wires the protocol layers onto the event kernel and the shared channel.

mod ledger;

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;

pub use ledger::{PacketLedger, PacketRecord, PacketState};

use crate::aida::{disaggregate, AidaLayer, AidaUnit, AidaWire, BufferKey, EnqueueOutcome, TimerRequest};
use crate::error::Result;
use crate::harness::config::{LocalizationMethod, ScenarioConfig};
use crate::harness::metrics::*;
use crate::kernel::{
    generate_topology, rng, EventQueue, FailureEntry, FailureKind, FailureSchedule, Location, Module, NodeId, RngStream, SimTime,
    Trace, TraceKind,
};
use crate::localization::{self, AnchorBeacon, ProximityReport};
use crate::mac::{AttemptResult, Completion, Csma, Frame, FrameBody, FrameKind, LinkDst, LinkStats, SendOutcome, TimeoutResult, TxEndResult};
use crate::power::{coverage_redundant, grant_sleep, Activity, EnergyLedger, SleepRequest};
use crate::routing::{
    admit_packet, response_delay, response_progress, select_next_hop, ConnTag, Destination, DropReason, ForwardingPolicy, HopDecision,
    NeighborTable, Packet, RoutingMode,
};
use crate::sched::Scheduler;
use crate::stats;
use crate::transport::{BindingTable, Connection, DeliveryAction};

/// Control frame sizes in bytes, MAC header included.
pub const BEACON_BYTES: usize = 28;
pub const PROBE_BYTES: usize = 30;
pub const RESPONSE_BYTES: usize = 20;
pub const BACKPRESSURE_BYTES: usize = 20;

#[derive(Debug, Clone, PartialEq)]
enum Ev {
    Generate(usize),
    MacAttempt { node: usize, token: u64 },
    TxEnd(u64),
    AckTimeout { node: usize, token: u64 },
    SendAck { node: usize, to: NodeId, seq: u32 },
    AidaTimer { node: usize, key: BufferKey, generation: u64 },
    Beacon(usize),
    ProbeTimeout { node: usize, probe: u64 },
    Respond { node: usize, origin: NodeId, probe: u64 },
    SleepCheck(usize),
    Wake { node: usize, epoch: u64 },
    Failure(usize),
    Migration(usize),
    Sample,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Radio {
    Off,
    Sleep,
    Idle,
    Rx,
    Tx,
}

#[derive(Debug, Clone)]
struct ProbeState {
    id: u64,
    packet: Packet,
    attempt: u8,
}

struct Node {
    id: NodeId,
    truth: Location,
    estimate: Option<Location>,
    anchor: bool,
    alive: bool,
    awake: bool,
    forced_asleep: bool,
    sleep_epoch: u64,
    asleep_since: Option<SimTime>,
    energy: EnergyLedger,
    radio: Radio,
    radio_since: SimTime,
    csma: Csma,
    link: LinkStats,
    table: NeighborTable,
    sched: Scheduler<Packet>,
    aida: AidaLayer,
    miss_ratio: f64,
    probe: Option<ProbeState>,
    next_probe: u64,
    /// Pending responses keyed by (origin, probe): contention delay and the
    /// last instant a response can still land inside the origin's window.
    responding: BTreeMap<(NodeId, u64), (f64, SimTime)>,
    transmitting: Option<u64>,
    audible: Vec<u64>,
    ack_due: Option<SimTime>,
    last_rx_seq: BTreeMap<NodeId, u32>,
    reroutes: BTreeMap<u64, u32>,
    backpressure_queued: bool,
    rng_mac: RngStream,
    rng_route: RngStream,
}

struct Tx {
    src: usize,
    frame: Frame,
    start: SimTime,
    end: SimTime,
    listeners: Vec<usize>,
    corrupted: BTreeSet<usize>,
    via_mac: bool,
    aborted: bool,
}

/// One row of the periodic time series.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeseriesRow {
    pub time: f64,
    pub generated: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub in_flight: u64,
    pub mean_utilization: f64,
    pub energy_joules: f64,
    pub data_frames_sent: u64,
    pub mean_degree: f64,
    pub asleep_nodes: u64,
}

/// Ground truth and estimate for one node, as placed at start.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeInfo {
    pub id: NodeId,
    pub truth: Location,
    pub estimate: Option<Location>,
    pub anchor: bool,
}

/// Everything a finished run produces.
pub struct RunOutput {
    pub metrics: RunMetrics,
    pub timeseries: Vec<TimeseriesRow>,
    pub ledger: PacketLedger,
    pub trace: Trace,
    pub nodes: Vec<NodeInfo>,
    /// Per-node energy replayed from consume events, for cross-checking the ledgers.
    pub consumed: Vec<f64>,
}

#[derive(Default)]
struct Counters {
    source_unavailable: u64,
    beacons: u64,
    beacon_bytes: u64,
    probe_bytes: u64,
    response_bytes: u64,
    backpressure_bytes: u64,
    ack_bytes: u64,
    frames_sent: u64,
    data_frames_sent: u64,
    data_collisions: u64,
    corrupted_receptions: u64,
    loss_drops: u64,
    link_failures: u64,
    hold_audited: u64,
    hold_violations: u64,
    decisions: u64,
    qualified: u64,
    feedback: u64,
    setpoint_violations: u64,
    progress_violations: u64,
    backpressure_events: u64,
    delay_inflations: u64,
    reroutes: u64,
    suspicions: u64,
    probes: u64,
    probe_retries: u64,
    bindings: u64,
    rebinds: u64,
    app_delivered: u64,
    duplicates_discarded: u64,
    sleep_grants: u64,
    sleep_denials: u64,
    frames_to_sleeping: u64,
    coverage_violations: u64,
    asleep_node_seconds: f64,
    utilization_samples: Vec<f64>,
    depleted: u64,
}

pub struct Simulator {
    cfg: ScenarioConfig,
    seed: u64,
    end: SimTime,
    queue: EventQueue<Ev>,
    nodes: Vec<Node>,
    txs: BTreeMap<u64, Tx>,
    next_tx: u64,
    ledger: PacketLedger,
    bindings: BindingTable,
    connections: BTreeMap<usize, Connection>,
    failures: FailureSchedule,
    trace: Trace,
    consumed: Vec<f64>,
    rng_channel: RngStream,
    c: Counters,
    timeseries: Vec<TimeseriesRow>,
    pending_deaths: Vec<usize>,
}

fn dist_to_area_clamp(cfg: &ScenarioConfig, p: Location) -> Location {
    cfg.topology.area.clamp(p)
}

impl Simulator {
    pub fn new(cfg: &ScenarioConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let cfg = cfg.clone();
        let count = cfg.topology.count;
        let positions: Vec<Location> = match &cfg.topology.positions {
            Some(p) => p.clone(),
            None => generate_topology(count, cfg.topology.area, &mut rng::stream(seed, "topology", 0))
                .into_iter()
                .map(|(_, l)| l)
                .collect(),
        };
        let anchor_count = (cfg.topology.anchor_fraction * count as f64).round() as usize;
        let mut order: Vec<usize> = (0..count).collect();
        order.shuffle(&mut rng::stream(seed, "anchors", 0));
        let anchors: BTreeSet<usize> = order[..anchor_count].iter().copied().collect();

        let mut nodes = Vec::with_capacity(count);
        for (i, &truth) in positions.iter().enumerate() {
            let id = NodeId(i as u32);
            nodes.push(Node {
                id,
                truth,
                estimate: None,
                anchor: anchors.contains(&i),
                alive: true,
                awake: true,
                forced_asleep: false,
                sleep_epoch: 0,
                asleep_since: None,
                energy: EnergyLedger::new(cfg.energy.initial_joules),
                radio: Radio::Idle,
                radio_since: SimTime::ZERO,
                csma: Csma::new(cfg.mac),
                link: LinkStats::new(cfg.mac.ewma_alpha, cfg.mac.utilization_window),
                table: NeighborTable::new(),
                sched: Scheduler::new(cfg.queue),
                aida: AidaLayer::new(cfg.aggregation, cfg.mac.header_bytes),
                miss_ratio: 0.0,
                probe: None,
                next_probe: 0,
                responding: BTreeMap::new(),
                transmitting: None,
                audible: Vec::new(),
                ack_due: None,
                last_rx_seq: BTreeMap::new(),
                reroutes: BTreeMap::new(),
                backpressure_queued: false,
                rng_mac: rng::stream(seed, "mac", i as u64),
                rng_route: rng::stream(seed, "routing", i as u64),
            });
        }

        let mut entries: Vec<FailureEntry> = cfg.failures.clone();
        if let Some(rf) = cfg.random_failures {
            let k = (rf.fraction * count as f64).round() as usize;
            let mut order: Vec<usize> = (0..count).collect();
            order.shuffle(&mut rng::stream(seed, "failures", 0));
            let mut victims: Vec<usize> = order[..k].to_vec();
            victims.sort_unstable();
            for v in victims {
                entries.push(FailureEntry { node: NodeId(v as u32), at: SimTime::from_secs(rf.at), kind: FailureKind::Crash });
            }
        }
        let failures = FailureSchedule::new(entries, count)?;

        let mut sim = Simulator {
            end: SimTime::from_secs(cfg.duration_seconds),
            seed,
            queue: EventQueue::new(),
            nodes,
            txs: BTreeMap::new(),
            next_tx: 0,
            ledger: PacketLedger::default(),
            bindings: BindingTable::new(),
            connections: BTreeMap::new(),
            failures,
            trace: Trace::new(cfg.outputs.event_trace),
            consumed: vec![0.0; count],
            rng_channel: rng::stream(seed, "channel", 0),
            c: Counters::default(),
            timeseries: Vec::new(),
            pending_deaths: Vec::new(),
            cfg,
        };
        for n in 0..count {
            sim.nodes[n].estimate = sim.estimate_for(n);
        }
        for e in sim.cfg.entities.clone() {
            let loc = sim.advertised(e.node.index());
            sim.bindings
                .register(e.id, e.node, loc, SimTime::ZERO)
                .map_err(|err| crate::SimError::config("entities", err.to_string()))?;
        }
        for (i, f) in sim.cfg.traffic.iter().enumerate() {
            if f.connection {
                let (a, b) = (f.from_entity.unwrap(), f.to_entity.unwrap());
                sim.connections.insert(i, Connection::new(a, b, sim.cfg.transport.reorder_capacity));
            }
        }
        sim.schedule_initial()?;
        Ok(sim)
    }

    fn now(&self) -> SimTime {
        self.queue.now()
    }

    fn at(&mut self, ev: Ev, t: SimTime) {
        self.queue.schedule(ev, t).expect("engine schedules only at or after now");
    }

    fn after(&mut self, ev: Ev, delay: f64) {
        self.queue.schedule_in(ev, delay.max(0.0));
    }

    fn schedule_initial(&mut self) -> Result<()> {
        let mut traffic_rng = rng::stream(self.seed, "traffic", 0);
        for (i, f) in self.cfg.traffic.clone().iter().enumerate() {
            let phase = traffic_rng.random::<f64>() * f.period_seconds;
            let t = f.start_time + phase;
            if t < self.cfg.duration_seconds && f.stop_time.is_none_or(|s| t < s) {
                self.at(Ev::Generate(i), SimTime::from_secs(t));
            }
        }
        let count = self.nodes.len();
        if self.cfg.routing.mode == RoutingMode::TableDriven {
            for n in 0..count {
                let phase = rng::stream(self.seed, "beacon", n as u64).random::<f64>() * self.cfg.routing.beacon_period;
                self.at(Ev::Beacon(n), SimTime::from_secs(phase));
            }
        }
        if self.cfg.duty_cycle.enabled {
            for n in 0..count {
                let phase = rng::stream(self.seed, "duty", n as u64).random::<f64>() * self.cfg.duty_cycle.check_period;
                self.at(Ev::SleepCheck(n), SimTime::from_secs(phase));
            }
        }
        for i in 0..self.failures.entries().len() {
            let t = self.failures.entries()[i].at;
            self.at(Ev::Failure(i), t);
        }
        for (i, m) in self.cfg.migrations.clone().iter().enumerate() {
            self.at(Ev::Migration(i), SimTime::from_secs(m.at));
        }
        let dt = self.cfg.outputs.timeseries_interval;
        self.at(Ev::Sample, SimTime::from_secs(dt));
        Ok(())
    }

    // ---------------------------------------------------------------- localization

    fn estimate_for(&self, n: usize) -> Option<Location> {
        let l = self.cfg.localization;
        let area = self.cfg.topology.area;
        let node = &self.nodes[n];
        let mut noise = rng::stream(self.seed, "localization", n as u64 ^ ((node.truth.x.to_bits() ^ node.truth.y.to_bits()) << 1));
        match l.method {
            LocalizationMethod::Truth => Some(node.truth),
            LocalizationMethod::Injected => Some(localization::inject_error(node.truth, l.sigma, &area, &mut noise)),
            LocalizationMethod::Centroid | LocalizationMethod::AreaRefined => {
                if node.anchor {
                    return Some(node.truth);
                }
                let range = self.cfg.radio.range;
                let heard = |p: &Location| -> Vec<AnchorBeacon> {
                    self.nodes
                        .iter()
                        .filter(|a| a.anchor && a.alive && a.truth.distance(p) <= range)
                        .map(|a| AnchorBeacon { anchor: a.id, location: a.truth })
                        .collect()
                };
                let beacons = heard(&node.truth);
                let report = |p: &Location, bs: &[AnchorBeacon]| ProximityReport {
                    proximity: bs.iter().map(|b| (b.anchor, b.location.distance(p))).collect(),
                };
                let est = if l.method == LocalizationMethod::Centroid {
                    localization::centroid_estimate(&beacons)
                } else {
                    let own = report(&node.truth, &beacons);
                    let neighbors: Vec<ProximityReport> = self
                        .nodes
                        .iter()
                        .filter(|m| m.id != node.id && m.truth.distance(&node.truth) <= range)
                        .map(|m| report(&m.truth, &heard(&m.truth)))
                        .collect();
                    localization::area_refine(&beacons, &own, &neighbors, range, &area, l.grid_resolution)
                };
                match est {
                    Ok(e) => Some(e.position),
                    Err(_) => l.fallback_sigma.map(|s| localization::inject_error(node.truth, s, &area, &mut noise)),
                }
            }
        }
    }

    /// Location a node advertises for itself.
    fn advertised(&self, n: usize) -> Location {
        self.nodes[n].estimate.unwrap_or(self.nodes[n].truth)
    }

    // ---------------------------------------------------------------- energy

    fn charge(&mut self, n: usize, activity: Activity, duration: f64) {
        if duration <= 0.0 {
            return;
        }
        let rates = self.cfg.energy.rates;
        let j = self.nodes[n].energy.consume(&rates, activity, duration);
        self.consumed[n] += j;
        if self.trace.enabled() && j > 0.0 {
            let now = self.now();
            self.trace.record(now, Some(self.nodes[n].id), Module::Power, TraceKind::Consume { activity: activity.as_str(), joules: j });
        }
        if self.nodes[n].energy.depleted() && self.nodes[n].alive && !self.pending_deaths.contains(&n) {
            self.pending_deaths.push(n);
        }
    }

    fn desired_radio(&self, n: usize) -> Radio {
        let node = &self.nodes[n];
        if !node.alive {
            Radio::Off
        } else if !node.awake {
            Radio::Sleep
        } else if node.transmitting.is_some() {
            Radio::Tx
        } else if !node.audible.is_empty() {
            Radio::Rx
        } else {
            Radio::Idle
        }
    }

    fn settle_radio(&mut self, n: usize) {
        let now = self.now();
        let since = self.nodes[n].radio_since;
        let activity = match self.nodes[n].radio {
            Radio::Off => None,
            Radio::Sleep => Some(Activity::Sleep),
            Radio::Idle => Some(Activity::Idle),
            Radio::Rx => Some(Activity::Rx),
            Radio::Tx => Some(Activity::Tx),
        };
        if let Some(a) = activity {
            self.charge(n, a, now - since);
        }
        self.nodes[n].radio_since = now;
    }

    fn refresh_radio(&mut self, n: usize) {
        let want = self.desired_radio(n);
        if want != self.nodes[n].radio {
            self.settle_radio(n);
            self.nodes[n].radio = want;
        }
    }

    // ---------------------------------------------------------------- main loop

    pub fn run(mut self) -> RunOutput {
        while let Some(t) = self.queue.peek_time() {
            if self.end.before(t) {
                break;
            }
            let (_, ev) = self.queue.pop().expect("peeked");
            self.dispatch(ev);
            while let Some(n) = self.pending_deaths.pop() {
                if self.nodes[n].alive {
                    self.c.depleted += 1;
                    self.crash(n);
                }
            }
        }
        self.finish()
    }

    fn dispatch(&mut self, ev: Ev) {
        match ev {
            Ev::Generate(f) => self.on_generate(f),
            Ev::MacAttempt { node, token } => self.on_mac_attempt(node, token),
            Ev::TxEnd(id) => self.on_tx_end(id),
            Ev::AckTimeout { node, token } => self.on_ack_timeout(node, token),
            Ev::SendAck { node, to, seq } => self.on_send_ack(node, to, seq),
            Ev::AidaTimer { node, key, generation } => {
                if self.nodes[node].alive {
                    let now = self.now();
                    let out = self.nodes[node].aida.on_timer(key, generation, now);
                    self.apply_aida(node, out);
                }
            }
            Ev::Beacon(n) => self.on_beacon(n),
            Ev::ProbeTimeout { node, probe } => self.on_probe_timeout(node, probe),
            Ev::Respond { node, origin, probe } => self.on_respond(node, origin, probe),
            Ev::SleepCheck(n) => self.on_sleep_check(n),
            Ev::Wake { node, epoch } => {
                let nd = &self.nodes[node];
                if nd.alive && !nd.awake && !nd.forced_asleep && nd.sleep_epoch == epoch {
                    self.wake(node);
                }
            }
            Ev::Failure(i) => {
                let e = self.failures.entries()[i];
                self.apply_failure(e);
            }
            Ev::Migration(i) => self.on_migration(i),
            Ev::Sample => self.on_sample(),
        }
    }

    // ---------------------------------------------------------------- traffic

    fn pick_source(&self, f: usize) -> Option<usize> {
        let flow = &self.cfg.traffic[f];
        if let Some(e) = flow.from_entity {
            let n = self.bindings.current(e)?.node.index();
            let node = &self.nodes[n];
            return (node.alive && node.awake).then_some(n);
        }
        let region = flow.source?;
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.alive && n.awake && n.truth.distance(&region.center) <= region.radius)
            .min_by(|a, b| a.1.truth.distance(&region.center).total_cmp(&b.1.truth.distance(&region.center)))
            .map(|(i, _)| i)
    }

    fn on_generate(&mut self, f: usize) {
        let now = self.now();
        let flow = self.cfg.traffic[f];
        let next = now + flow.period_seconds;
        if next.before(self.end) && flow.stop_time.is_none_or(|s| next.secs() < s) {
            self.at(Ev::Generate(f), next);
        }
        let Some(src) = self.pick_source(f) else {
            self.c.source_unavailable += 1;
            return;
        };
        let deadline = now + flow.deadline_offset_seconds;
        let id = self.ledger.create(f, flow.priority_class, self.nodes[src].id, now, deadline, flow.payload_bytes);
        let mut dest = flow.dest;
        let mut dest_version = 0;
        if let Some(e) = flow.to_entity {
            match self.bindings.known_at_source(e, now, &self.cfg.transport) {
                Some(b) => {
                    dest = Destination { center: b.location, radius: self.cfg.transport.rebind_radius, entity: Some(e) };
                    dest_version = b.version;
                }
                None => {
                    self.ledger.drop_copy(id, DropReason::Unresolvable);
                    return;
                }
            }
        }
        let conn = self.connections.get_mut(&f).map(|c| ConnTag { conn: f as u32, direction: 0, seq: c.next_seq(0) });
        let packet = Packet {
            id,
            source: flow.from_entity.unwrap_or(crate::kernel::EntityId(src as u32)),
            dest,
            deadline,
            priority_class: flow.priority_class,
            payload_bytes: flow.payload_bytes,
            created_at: now,
            ttl_remaining: self.cfg.routing.ttl.min(u16::MAX as u32) as u16,
            rebinds: 0,
            dest_version,
            conn,
        };
        let r = self.cfg.routing;
        let polices = r.mode == RoutingMode::TableDriven && r.policy == ForwardingPolicy::Speed;
        if polices && self.nodes[src].estimate.is_some() && !packet_in_region(&packet, &self.nodes[src].truth) {
            let u = self.nodes[src].link.utilization(now);
            if !admit_packet(u, packet.priority_class, &r) {
                self.ledger.drop_copy(id, DropReason::Policed);
                return;
            }
        }
        self.accept(src, packet);
    }

    /// A node now holds a copy of `p`: deliver, rebind, or queue it for forwarding.
    fn accept(&mut self, n: usize, mut p: Packet) {
        let now = self.now();
        loop {
            if !packet_in_region(&p, &self.nodes[n].truth) {
                break;
            }
            let Some(entity) = p.dest.entity else {
                self.deliver(n, &p);
                return;
            };
            let current = self.bindings.current(entity).map(|b| b.version);
            if current == Some(p.dest_version) {
                self.deliver(n, &p);
                return;
            }
            let here = self.advertised(n);
            match self.bindings.rebind_hint(entity, p.dest_version, &here, now, &self.cfg.transport) {
                Some(b) if p.rebinds < self.cfg.transport.rebind_budget => {
                    p.dest.center = b.location;
                    p.dest_version = b.version;
                    p.rebinds += 1;
                    self.ledger.note_rebind(p.id);
                    self.c.rebinds += 1;
                    self.trace.record(now, Some(self.nodes[n].id), Module::Transport, TraceKind::Other("rebind"));
                }
                _ => {
                    self.ledger.drop_copy(p.id, DropReason::StaleBinding);
                    return;
                }
            }
        }
        let Some(here) = self.nodes[n].estimate else {
            self.ledger.drop_copy(p.id, DropReason::Unlocalized);
            return;
        };
        if p.ttl_remaining == 0 {
            self.ledger.drop_copy(p.id, DropReason::TtlExhausted);
            return;
        }
        let (class, deadline, target) = (p.priority_class, p.deadline, p.dest.center);
        let out = self.nodes[n].sched.enqueue(p, class, deadline, target, now, &here);
        for e in out.expired {
            self.note_miss(n, 1.0);
            self.ledger.drop_copy(e.id, DropReason::Expired);
        }
        if let Some(e) = out.evicted {
            self.ledger.drop_copy(e.id, DropReason::QueueOverflow);
        }
        self.pump(n);
    }

    fn deliver(&mut self, n: usize, p: &Packet) {
        let now = self.now();
        let first = self.ledger.deliver(p.id, now);
        self.nodes[n].reroutes.remove(&p.id);
        if !first {
            return;
        }
        if let Some(tag) = p.conn {
            if let Some(c) = self.connections.get_mut(&(tag.conn as usize)) {
                match c.deliver_in_order(tag.direction, tag.seq) {
                    DeliveryAction::Deliver(seqs) => self.c.app_delivered += seqs.len() as u64,
                    DeliveryAction::DiscardDuplicate => self.c.duplicates_discarded += 1,
                    DeliveryAction::HoldOutOfOrder => {}
                }
            }
        }
    }

    fn note_miss(&mut self, n: usize, miss: f64) {
        let a = self.cfg.routing.miss_alpha;
        let m = &mut self.nodes[n].miss_ratio;
        *m = a * miss + (1.0 - a) * *m;
    }

    // ---------------------------------------------------------------- forwarding

    /// Moves packets from the scheduler down the stack while the MAC is idle.
    fn pump(&mut self, n: usize) {
        loop {
            let node = &self.nodes[n];
            if !node.alive || !node.awake || node.csma.busy() || node.probe.is_some() {
                return;
            }
            let Some(here) = node.estimate else { return };
            let now = self.now();
            let d = self.nodes[n].sched.dequeue(now, &here);
            for e in d.expired {
                self.note_miss(n, 1.0);
                self.ledger.drop_copy(e.id, DropReason::Expired);
            }
            let Some(entry) = d.entry else { return };
            self.route(n, entry.item);
        }
    }

    fn route(&mut self, n: usize, p: Packet) {
        let cpu = self.cfg.energy.cpu_per_decision;
        self.charge(n, Activity::Cpu, cpu);
        self.c.decisions += 1;
        let r = self.cfg.routing;
        match r.mode {
            RoutingMode::LazyBinding => self.start_probe(n, p, 0),
            RoutingMode::TableDriven => {
                let here = self.nodes[n].estimate.expect("routing node is localized");
                let node = &mut self.nodes[n];
                let decision = select_next_hop(&here, &p.dest.center, &node.table, &r, &mut node.rng_route);
                match decision {
                    HopDecision::Forward { to, speed, qualified } => {
                        let entry = self.nodes[n].table.get(to).copied().expect("chosen from table");
                        if entry.location.distance(&p.dest.center) >= here.distance(&p.dest.center) {
                            self.c.progress_violations += 1;
                        }
                        if qualified {
                            self.c.qualified += 1;
                            if speed < r.setpoint {
                                self.c.setpoint_violations += 1;
                            }
                        } else if r.policy == ForwardingPolicy::Speed {
                            self.c.feedback += 1;
                        }
                        let miss = if r.policy == ForwardingPolicy::Speed && !qualified { 1.0 } else { 0.0 };
                        self.note_miss(n, miss);
                        self.hand_to_aida(n, p, to);
                    }
                    HopDecision::Congestion => {
                        self.c.feedback += 1;
                        self.note_miss(n, 1.0);
                        self.ledger.drop_copy(p.id, DropReason::CongestionFeedback);
                        self.send_backpressure(n);
                    }
                    HopDecision::Void => {
                        self.note_miss(n, 1.0);
                        self.ledger.drop_copy(p.id, DropReason::Void);
                    }
                }
            }
        }
    }

    fn hand_to_aida(&mut self, n: usize, mut p: Packet, next_hop: NodeId) {
        let now = self.now();
        p.ttl_remaining -= 1;
        let here = self.advertised(n);
        let setpoint = self.cfg.routing.setpoint;
        let slack = (p.deadline - now) - here.distance(&p.dest.center) / setpoint;
        let node = &mut self.nodes[n];
        let mean_delay = node.link.mean_delay().unwrap_or(self.cfg.routing.delta_min);
        let guard = self.cfg.aggregation.guard_factor * mean_delay;
        let u = node.link.utilization(now);
        let backlog = node.sched.len() + node.aida.buffered() + 1;
        let unit = AidaUnit { payload: p.encode(), priority_class: p.priority_class, slack, next_hop, tag: p.id };
        let out = node.aida.enqueue_unit(unit, now, guard, u, backlog);
        self.apply_aida(n, out);
    }

    fn apply_aida(&mut self, n: usize, out: EnqueueOutcome) {
        let now = self.now();
        if let Some(victim) = out.dropped {
            self.ledger.drop_copy(victim.tag, DropReason::AggregationOverflow);
        }
        for f in out.frames {
            for h in &f.holds {
                self.c.hold_audited += 1;
                if !h.within_bound() {
                    self.c.hold_violations += 1;
                }
                if self.trace.enabled() {
                    self.trace.record(
                        now,
                        Some(self.nodes[n].id),
                        Module::Aida,
                        TraceKind::UnitHeld {
                            packet: h.tag,
                            enqueued: h.enqueued_at.secs(),
                            flushed: h.flushed_at.secs(),
                            flush_timer: h.flush_timer,
                            slack: h.slack,
                            guard: h.guard,
                        },
                    );
                }
            }
            let wire = f.frame.encode();
            let size = self.cfg.mac.header_bytes + wire.bytes.len();
            let node = &mut self.nodes[n];
            let seq = node.csma.next_seq();
            let frame = Frame {
                src: node.id,
                dst: LinkDst::Node(f.frame.next_hop),
                kind: FrameKind::Data,
                size_bytes: size,
                seq,
                body: FrameBody::Data(wire),
            };
            node.csma.enqueue(frame, self.cfg.mac.reliable, now);
        }
        for TimerRequest { key, at, generation } in out.timers {
            self.at(Ev::AidaTimer { node: n, key, generation }, at);
        }
        self.kick_mac(n);
    }

    fn send_backpressure(&mut self, n: usize) {
        if self.nodes[n].backpressure_queued {
            return;
        }
        self.nodes[n].backpressure_queued = true;
        self.c.backpressure_events += 1;
        self.enqueue_control(n, LinkDst::Broadcast, FrameKind::Backpressure, BACKPRESSURE_BYTES, FrameBody::Backpressure);
    }

    fn enqueue_control(&mut self, n: usize, dst: LinkDst, kind: FrameKind, size: usize, body: FrameBody) {
        let now = self.now();
        let node = &mut self.nodes[n];
        let seq = node.csma.next_seq();
        node.csma.enqueue(Frame { src: node.id, dst, kind, size_bytes: size, seq, body }, false, now);
        self.kick_mac(n);
    }

    // ---------------------------------------------------------------- lazy binding

    fn start_probe(&mut self, n: usize, p: Packet, attempt: u8) {
        let here = self.nodes[n].estimate.expect("probing node is localized");
        let id = self.nodes[n].next_probe;
        self.nodes[n].next_probe += 1;
        let half = if attempt == 0 { self.cfg.routing.sector_half_angle } else { self.cfg.routing.retry_half_angle };
        let target = p.dest.center;
        self.nodes[n].probe = Some(ProbeState { id, packet: p, attempt });
        self.c.probes += 1;
        if attempt > 0 {
            self.c.probe_retries += 1;
        }
        let body = FrameBody::Probe { probe: id, origin: here, target, half_angle_deg: half };
        self.enqueue_control(n, LinkDst::Broadcast, FrameKind::Probe, PROBE_BYTES, body);
    }

    fn on_probe_timeout(&mut self, n: usize, probe: u64) {
        let matches = self.nodes[n].probe.as_ref().is_some_and(|p| p.id == probe);
        if !matches || !self.nodes[n].alive {
            return;
        }
        // A response already on the air toward us is allowed to finish.
        let me = self.nodes[n].id;
        let incoming = self.nodes[n]
            .audible
            .iter()
            .map(|id| &self.txs[id])
            .filter(|tx| tx.frame.kind == FrameKind::Response && tx.frame.dst == LinkDst::Node(me))
            .map(|tx| tx.end)
            .max();
        if let Some(end) = incoming {
            self.at(Ev::ProbeTimeout { node: n, probe }, end);
            return;
        }
        let st = self.nodes[n].probe.take().unwrap();
        if st.attempt == 0 && self.now().before(st.packet.deadline) {
            self.start_probe(n, st.packet, 1);
        } else {
            self.note_miss(n, 1.0);
            self.ledger.drop_copy(st.packet.id, DropReason::Void);
            self.pump(n);
        }
    }

    fn on_respond(&mut self, n: usize, origin: NodeId, probe: u64) {
        let Some(&(backoff, latest)) = self.nodes[n].responding.get(&(origin, probe)) else {
            return;
        };
        let node = &self.nodes[n];
        if !node.alive || !node.awake || latest.before(self.now()) {
            self.nodes[n].responding.remove(&(origin, probe));
            return;
        }
        let (busy, clear) = self.carrier(n);
        if busy {
            // Once the channel clears, squeeze the progress-ordered timer into
            // what is left of the window so deferred responders keep their order
            // instead of firing together.
            let resume = clear + self.cfg.mac.ifs;
            let left = latest.secs() - resume.secs();
            if left <= 0.0 {
                self.nodes[n].responding.remove(&(origin, probe));
                return;
            }
            let frac = backoff / self.cfg.routing.cts_window;
            self.at(Ev::Respond { node: n, origin, probe }, resume + left * frac);
            return;
        }
        self.nodes[n].responding.remove(&(origin, probe));
        let frame = Frame {
            src: self.nodes[n].id,
            dst: LinkDst::Node(origin),
            kind: FrameKind::Response,
            size_bytes: RESPONSE_BYTES,
            seq: 0,
            body: FrameBody::Response { probe },
        };
        self.start_tx(n, frame, false);
    }

    // ---------------------------------------------------------------- MAC & channel

    fn carrier(&self, n: usize) -> (bool, SimTime) {
        let now = self.now();
        let node = &self.nodes[n];
        let mut busy = false;
        let mut clear = now;
        if let Some(t) = node.transmitting {
            busy = true;
            clear = clear.max(self.txs[&t].end);
        }
        if let Some(due) = node.ack_due {
            busy = true;
            clear = clear.max(due + self.cfg.radio.airtime(self.cfg.mac.ack_bytes));
        }
        for id in &node.audible {
            let tx = &self.txs[id];
            clear = clear.max(tx.end);
            if tx.start.before(now) {
                busy = true;
            }
        }
        (busy, clear)
    }

    fn kick_mac(&mut self, n: usize) {
        let node = &self.nodes[n];
        if !node.alive || !node.awake {
            return;
        }
        let (busy, clear) = self.carrier(n);
        let now = self.now();
        let clear = if busy { clear } else { now };
        let node = &mut self.nodes[n];
        if let Some((at, token)) = node.csma.start_if_idle(now, clear, &mut node.rng_mac) {
            self.at(Ev::MacAttempt { node: n, token }, at);
        }
    }

    fn on_mac_attempt(&mut self, n: usize, token: u64) {
        if !self.nodes[n].alive || !self.nodes[n].awake {
            return;
        }
        let (busy, clear) = self.carrier(n);
        let node = &mut self.nodes[n];
        match node.csma.on_attempt(token, busy, clear, &mut node.rng_mac) {
            AttemptResult::Stale => {}
            AttemptResult::Deferred { at, token } => self.at(Ev::MacAttempt { node: n, token }, at),
            AttemptResult::Transmit(pf) => {
                let frame = pf.frame.clone();
                self.start_tx(n, frame, true);
            }
        }
    }

    fn start_tx(&mut self, n: usize, frame: Frame, via_mac: bool) {
        let now = self.now();
        let end = now + self.cfg.radio.airtime(frame.size_bytes);
        let id = self.next_tx;
        self.next_tx += 1;
        let range = self.cfg.radio.range;
        let src_loc = self.nodes[n].truth;
        let listeners: Vec<usize> = (0..self.nodes.len())
            .filter(|&m| m != n && self.nodes[m].alive && self.nodes[m].awake && self.nodes[m].truth.distance(&src_loc) <= range)
            .collect();
        let mut corrupted = BTreeSet::new();
        for &m in &listeners {
            if self.nodes[m].transmitting.is_some() {
                corrupted.insert(m);
            }
            if !self.nodes[m].audible.is_empty() {
                corrupted.insert(m);
                for other in self.nodes[m].audible.clone() {
                    self.txs.get_mut(&other).unwrap().corrupted.insert(m);
                }
            }
            self.nodes[m].audible.push(id);
            self.nodes[m].link.add_busy(now.secs(), end.secs());
            self.refresh_radio(m);
        }
        // Half duplex: whatever this node was hearing is lost to it.
        for other in self.nodes[n].audible.clone() {
            self.txs.get_mut(&other).unwrap().corrupted.insert(n);
        }
        self.nodes[n].transmitting = Some(id);
        self.nodes[n].link.add_busy(now.secs(), end.secs());
        self.refresh_radio(n);

        self.c.frames_sent += 1;
        let size = frame.size_bytes as u64;
        match frame.kind {
            FrameKind::Data => self.c.data_frames_sent += 1,
            FrameKind::Probe => self.c.probe_bytes += size,
            FrameKind::Response => self.c.response_bytes += size,
            FrameKind::Backpressure => self.c.backpressure_bytes += size,
            FrameKind::Ack => self.c.ack_bytes += size,
            FrameKind::Beacon => {}
        }
        if self.trace.enabled() {
            self.trace.record(now, Some(self.nodes[n].id), Module::Mac, TraceKind::TxStart { bytes: frame.size_bytes });
        }
        self.txs.insert(id, Tx { src: n, frame, start: now, end, listeners, corrupted, via_mac, aborted: false });
        self.at(Ev::TxEnd(id), end);
    }

    fn on_tx_end(&mut self, id: u64) {
        let now = self.now();
        let tx = self.txs.remove(&id).expect("live transmission");
        let n = tx.src;
        if self.nodes[n].transmitting == Some(id) {
            self.nodes[n].transmitting = None;
            self.refresh_radio(n);
        }
        let mut intended_corrupted = false;
        let mut receivers = Vec::new();
        for &m in &tx.listeners {
            let pos = self.nodes[m].audible.iter().position(|&t| t == id);
            if let Some(pos) = pos {
                self.nodes[m].audible.remove(pos);
                self.refresh_radio(m);
            } else {
                // Listener crashed or slept mid-frame; already counted as lost.
                continue;
            }
            if tx.corrupted.contains(&m) || tx.aborted {
                self.c.corrupted_receptions += 1;
                if tx.frame.dst == LinkDst::Node(self.nodes[m].id) {
                    intended_corrupted = true;
                }
                continue;
            }
            if !self.cfg.radio.survives(&mut self.rng_channel) {
                self.c.loss_drops += 1;
                continue;
            }
            receivers.push(m);
        }
        if tx.frame.kind == FrameKind::Data && intended_corrupted {
            self.c.data_collisions += 1;
        }
        for m in receivers {
            if self.nodes[m].alive {
                self.receive(m, &tx.frame);
            }
        }
        if tx.via_mac && !tx.aborted && self.nodes[n].alive {
            match self.nodes[n].csma.on_tx_end(now) {
                TxEndResult::AwaitAck { until, token } => self.at(Ev::AckTimeout { node: n, token }, until),
                TxEndResult::Completed(c) => self.on_completion(n, c),
            }
        }
        if self.nodes[n].alive && !tx.via_mac {
            self.kick_mac(n);
        }
    }

    fn on_ack_timeout(&mut self, n: usize, token: u64) {
        if !self.nodes[n].alive {
            return;
        }
        let now = self.now();
        let (busy, clear) = self.carrier(n);
        let clear = if busy { clear } else { now };
        let node = &mut self.nodes[n];
        match node.csma.on_ack_timeout(token, now, clear, &mut node.rng_mac) {
            TimeoutResult::Stale => {}
            TimeoutResult::Retry { at, token } => self.at(Ev::MacAttempt { node: n, token }, at),
            TimeoutResult::Failed(c) => self.on_completion(n, c),
        }
    }

    fn on_send_ack(&mut self, n: usize, to: NodeId, seq: u32) {
        self.nodes[n].ack_due = None;
        let node = &self.nodes[n];
        if !node.alive || !node.awake || node.transmitting.is_some() {
            return;
        }
        let frame = Frame {
            src: node.id,
            dst: LinkDst::Node(to),
            kind: FrameKind::Ack,
            size_bytes: self.cfg.mac.ack_bytes,
            seq: 0,
            body: FrameBody::Ack { acked_seq: seq },
        };
        self.start_tx(n, frame, false);
    }

    fn receive(&mut self, m: usize, frame: &Frame) {
        let now = self.now();
        let me = self.nodes[m].id;
        if !self.nodes[m].awake {
            self.c.frames_to_sleeping += 1;
        }
        self.nodes[m].link.heard(frame.src, now);
        if self.trace.enabled() {
            self.trace.record(now, Some(me), Module::Mac, TraceKind::FrameReceived { from: frame.src, bytes: frame.size_bytes });
        }
        match &frame.body {
            FrameBody::Data(wire) => {
                if frame.dst != LinkDst::Node(me) {
                    return;
                }
                if self.cfg.mac.reliable {
                    let turnaround = self.cfg.mac.turnaround;
                    self.nodes[m].ack_due = Some(now + turnaround);
                    self.after(Ev::SendAck { node: m, to: frame.src, seq: frame.seq }, turnaround);
                }
                if self.nodes[m].last_rx_seq.get(&frame.src) == Some(&frame.seq) {
                    return;
                }
                self.nodes[m].last_rx_seq.insert(frame.src, frame.seq);
                self.receive_units(m, wire);
            }
            FrameBody::Ack { acked_seq } => {
                if frame.dst != LinkDst::Node(me) {
                    return;
                }
                if let Some(c) = self.nodes[m].csma.on_ack(*acked_seq, now) {
                    self.on_completion(m, c);
                }
            }
            FrameBody::Beacon { location, miss_ratio } => {
                if self.cfg.routing.mode != RoutingMode::TableDriven {
                    return;
                }
                let dmin = self.cfg.routing.delta_min;
                let node = &mut self.nodes[m];
                node.table.upsert(frame.src, *location, *miss_ratio, now, dmin);
                if let Some(d) = node.link.delay(frame.src) {
                    node.table.set_delay(frame.src, d, dmin);
                }
            }
            FrameBody::Probe { probe, origin, target, half_angle_deg } => {
                let Some(here) = self.nodes[m].estimate else { return };
                if let Some(progress) = response_progress(origin, target, &here, *half_angle_deg) {
                    let delay = response_delay(progress, self.cfg.radio.range, self.cfg.routing.cts_window);
                    let latest = now + self.cfg.routing.cts_window;
                    self.nodes[m].responding.insert((frame.src, *probe), (delay, latest));
                    self.after(Ev::Respond { node: m, origin: frame.src, probe: *probe }, delay);
                }
            }
            FrameBody::Response { probe } => {
                if frame.dst != LinkDst::Node(me) {
                    if let LinkDst::Node(origin) = frame.dst {
                        self.nodes[m].responding.remove(&(origin, *probe));
                    }
                    return;
                }
                // A late answer to the first probe of the same packet is still a valid relay.
                let bound = self.nodes[m].probe.as_ref().is_some_and(|p| (p.id - p.attempt as u64..=p.id).contains(probe));
                if !bound {
                    return;
                }
                let st = self.nodes[m].probe.take().unwrap();
                self.c.bindings += 1;
                self.hand_to_aida(m, st.packet, frame.src);
                self.pump(m);
            }
            FrameBody::Backpressure => {
                let beta = self.cfg.routing.backpressure_factor;
                let dmin = self.cfg.routing.delta_min;
                let node = &mut self.nodes[m];
                let (before, after) = node.link.inflate(frame.src, beta, dmin);
                node.table.set_delay(frame.src, after, dmin);
                self.c.delay_inflations += 1;
                self.trace.record(now, Some(me), Module::Routing, TraceKind::Backpressure { toward: frame.src, before, after });
            }
            FrameBody::Raw => {}
        }
    }

    fn receive_units(&mut self, m: usize, wire: &AidaWire) {
        let me = self.nodes[m].id;
        let now = self.now();
        let units = match disaggregate(wire, me) {
            Ok(u) => u,
            Err(_) => {
                self.nodes[m].aida.note_malformed();
                return;
            }
        };
        let mut packets = Vec::with_capacity(units.len());
        for u in &units {
            match Packet::decode(&u.payload) {
                Ok(p) => packets.push(p),
                Err(_) => {
                    self.nodes[m].aida.note_malformed();
                    return;
                }
            }
        }
        for p in packets {
            self.ledger.copy_arrived(p.id, me, now);
            self.accept(m, p);
        }
    }

    fn frame_packets(frame: &Frame) -> Vec<Packet> {
        match &frame.body {
            FrameBody::Data(wire) => disaggregate(wire, NodeId(0))
                .expect("own frame decodes")
                .iter()
                .map(|u| Packet::decode(&u.payload).expect("own unit decodes"))
                .collect(),
            _ => Vec::new(),
        }
    }

    fn on_completion(&mut self, n: usize, c: Completion) {
        let now = self.now();
        let frame = &c.pending.frame;
        match frame.kind {
            FrameKind::Data => {
                let LinkDst::Node(nh) = frame.dst else { unreachable!("data frames are unicast") };
                let packets = Self::frame_packets(frame);
                match c.outcome {
                    SendOutcome::Delivered { delay } => {
                        let dmin = self.cfg.routing.delta_min;
                        let node = &mut self.nodes[n];
                        if let Ok(d) = node.link.observe_delay(nh, delay) {
                            node.table.set_delay(nh, d, dmin);
                        }
                        for p in packets {
                            self.nodes[n].reroutes.remove(&p.id);
                            self.ledger.release(p.id);
                        }
                    }
                    SendOutcome::Failed(_) => {
                        self.c.link_failures += 1;
                        // A failed link is made to look slow rather than removed; a dead
                        // neighbor is caught by suspicion and the table timeout.
                        let beta = self.cfg.routing.backpressure_factor;
                        let dmin = self.cfg.routing.delta_min;
                        let node = &mut self.nodes[n];
                        let (_, after) = node.link.inflate(nh, beta, dmin);
                        node.table.set_delay(nh, after, dmin);
                        let budget = self.cfg.routing.reroute_budget;
                        for mut p in packets {
                            let used = self.nodes[n].reroutes.get(&p.id).copied().unwrap_or(0);
                            if used < budget {
                                self.nodes[n].reroutes.insert(p.id, used + 1);
                                self.c.reroutes += 1;
                                p.ttl_remaining += 1;
                                let here = self.nodes[n].estimate.expect("forwarder is localized");
                                let (class, deadline, target) = (p.priority_class, p.deadline, p.dest.center);
                                let out = self.nodes[n].sched.enqueue(p, class, deadline, target, now, &here);
                                for e in out.expired {
                                    self.ledger.drop_copy(e.id, DropReason::Expired);
                                }
                                if let Some(e) = out.evicted {
                                    self.ledger.drop_copy(e.id, DropReason::QueueOverflow);
                                }
                            } else {
                                self.nodes[n].reroutes.remove(&p.id);
                                self.ledger.drop_copy(p.id, DropReason::MacFailure);
                            }
                        }
                    }
                }
            }
            FrameKind::Probe => {
                if let FrameBody::Probe { probe, .. } = frame.body {
                    let wait = self.cfg.routing.cts_window
                        + self.cfg.radio.airtime(RESPONSE_BYTES)
                        + self.cfg.mac.ifs
                        + 2.0 * self.cfg.mac.slot_time;
                    self.after(Ev::ProbeTimeout { node: n, probe }, wait);
                }
            }
            FrameKind::Backpressure => self.nodes[n].backpressure_queued = false,
            FrameKind::Beacon | FrameKind::Response | FrameKind::Ack => {}
        }
        self.kick_mac(n);
        self.pump(n);
    }

    // ---------------------------------------------------------------- beacons

    fn on_beacon(&mut self, n: usize) {
        let now = self.now();
        let b = self.cfg.routing.beacon_period;
        if !self.nodes[n].alive {
            return;
        }
        let next = now + b;
        if next.before(self.end) {
            self.at(Ev::Beacon(n), next);
        }
        let t_fail = self.cfg.mac.failure_timeout_beacons * b;
        let suspects = self.nodes[n].link.sweep_suspicions(now, t_fail);
        for s in suspects {
            if self.nodes[n].table.mark_stale(s) {
                self.c.suspicions += 1;
                self.trace.record(now, Some(self.nodes[n].id), Module::Mac, TraceKind::Suspect { neighbor: s });
            }
        }
        let timeout = self.cfg.routing.neighbor_timeout;
        for gone in self.nodes[n].table.evict_older(now, timeout) {
            self.nodes[n].link.forget(gone);
        }
        let node = &self.nodes[n];
        if !node.awake {
            return;
        }
        let Some(location) = node.estimate else { return };
        let miss_ratio = node.miss_ratio;
        self.c.beacons += 1;
        self.c.beacon_bytes += BEACON_BYTES as u64;
        self.enqueue_control(n, LinkDst::Broadcast, FrameKind::Beacon, BEACON_BYTES, FrameBody::Beacon { location, miss_ratio });
    }

    // ---------------------------------------------------------------- duty cycling

    fn queues_empty(&self, n: usize) -> bool {
        let node = &self.nodes[n];
        node.sched.is_empty()
            && node.aida.is_empty()
            && !node.csma.busy()
            && node.probe.is_none()
            && node.responding.is_empty()
            && node.ack_due.is_none()
            && node.transmitting.is_none()
            && node.audible.is_empty()
    }

    fn on_sleep_check(&mut self, n: usize) {
        let now = self.now();
        let d = self.cfg.duty_cycle;
        let next = now + d.check_period;
        if next.before(self.end) {
            self.at(Ev::SleepCheck(n), next);
        }
        let node = &self.nodes[n];
        if !node.alive || !node.awake {
            return;
        }
        let Some(here) = node.estimate else { return };
        let range = self.cfg.radio.range;
        let awake: Vec<usize> = (0..self.nodes.len())
            .filter(|&m| {
                let o = &self.nodes[m];
                m != n && o.alive && o.awake && o.estimate.is_some() && o.truth.distance(&node.truth) <= range
            })
            .collect();
        let estimates: Vec<Location> = awake.iter().map(|&m| self.nodes[m].estimate.unwrap()).collect();
        let sensing = d.sensing();
        let area = self.cfg.topology.area;
        let redundant = coverage_redundant(here, &estimates, &sensing, Some(&area));
        let req = SleepRequest { awake: true, redundant, queues_empty: self.queues_empty(n) };
        if !grant_sleep(req) {
            self.c.sleep_denials += 1;
            return;
        }
        let truths: Vec<Location> = awake.iter().map(|&m| self.nodes[m].truth).collect();
        if !coverage_redundant(self.nodes[n].truth, &truths, &sensing, Some(&area)) {
            self.c.coverage_violations += 1;
        }
        self.c.sleep_grants += 1;
        let id = self.nodes[n].id;
        self.trace.record(now, Some(id), Module::Power, TraceKind::SleepGranted);
        self.put_to_sleep(n);
        let epoch = self.nodes[n].sleep_epoch;
        self.after(Ev::Wake { node: n, epoch }, d.sleep_duration);
    }

    fn put_to_sleep(&mut self, n: usize) {
        let now = self.now();
        self.drop_receptions(n);
        let node = &mut self.nodes[n];
        node.awake = false;
        node.sleep_epoch += 1;
        node.asleep_since = Some(now);
        let id = node.id;
        self.trace.record(now, Some(id), Module::Power, TraceKind::Asleep);
        self.refresh_radio(n);
    }

    fn wake(&mut self, n: usize) {
        let now = self.now();
        let node = &mut self.nodes[n];
        node.awake = true;
        if let Some(s) = node.asleep_since.take() {
            self.c.asleep_node_seconds += now - s;
        }
        let id = node.id;
        self.trace.record(now, Some(id), Module::Power, TraceKind::Awake);
        self.refresh_radio(n);
        self.kick_mac(n);
        self.pump(n);
    }

    /// The node stops hearing everything in the air right now.
    fn drop_receptions(&mut self, n: usize) {
        for t in std::mem::take(&mut self.nodes[n].audible) {
            if let Some(tx) = self.txs.get_mut(&t) {
                tx.corrupted.insert(n);
            }
        }
    }

    // ---------------------------------------------------------------- failures

    /// Discards all volatile state, destroying every packet copy the node holds.
    fn wipe(&mut self, n: usize) {
        let mut lost: Vec<u64> = Vec::new();
        let node = &mut self.nodes[n];
        lost.extend(node.sched.clear().into_iter().map(|p| p.id));
        lost.extend(node.aida.clear().into_iter().map(|u| u.tag));
        for pf in node.csma.clear() {
            lost.extend(Self::frame_packets(&pf.frame).into_iter().map(|p| p.id));
        }
        if let Some(st) = node.probe.take() {
            lost.push(st.packet.id);
        }
        node.responding.clear();
        node.reroutes.clear();
        node.table.clear();
        node.link = LinkStats::new(self.cfg.mac.ewma_alpha, self.cfg.mac.utilization_window);
        node.last_rx_seq.clear();
        node.ack_due = None;
        node.backpressure_queued = false;
        node.miss_ratio = 0.0;
        if let Some(t) = node.transmitting.take() {
            if let Some(tx) = self.txs.get_mut(&t) {
                tx.aborted = true;
            }
        }
        self.drop_receptions(n);
        for id in lost {
            self.ledger.drop_copy(id, DropReason::NodeFailure);
        }
    }

    fn crash(&mut self, n: usize) {
        let now = self.now();
        self.settle_radio(n);
        self.wipe(n);
        let node = &mut self.nodes[n];
        node.alive = false;
        if let Some(s) = node.asleep_since.take() {
            self.c.asleep_node_seconds += now - s;
        }
        let id = node.id;
        self.trace.record(now, Some(id), Module::Kernel, TraceKind::Crash);
        self.refresh_radio(n);
    }

    fn apply_failure(&mut self, e: FailureEntry) {
        let n = e.node.index();
        let now = self.now();
        match e.kind {
            FailureKind::Crash => {
                if self.nodes[n].alive {
                    self.crash(n);
                }
            }
            FailureKind::SleepForce => {
                if self.nodes[n].alive && self.nodes[n].awake {
                    self.wipe(n);
                    self.put_to_sleep(n);
                }
                self.nodes[n].forced_asleep = true;
            }
            FailureKind::Recover => {
                let was_dead = !self.nodes[n].alive;
                if self.nodes[n].energy.depleted() {
                    return;
                }
                let node = &mut self.nodes[n];
                node.forced_asleep = false;
                node.alive = true;
                if !node.awake {
                    if let Some(s) = node.asleep_since.take() {
                        self.c.asleep_node_seconds += now - s;
                    }
                }
                node.awake = true;
                node.radio_since = now;
                let id = node.id;
                self.trace.record(now, Some(id), Module::Kernel, TraceKind::Recover);
                self.refresh_radio(n);
                if was_dead {
                    if self.cfg.routing.mode == RoutingMode::TableDriven {
                        self.after(Ev::Beacon(n), 0.0);
                    }
                    if self.cfg.duty_cycle.enabled {
                        self.after(Ev::SleepCheck(n), self.cfg.duty_cycle.check_period);
                    }
                }
            }
            FailureKind::MoveTo(loc) => {
                let loc = dist_to_area_clamp(&self.cfg, loc);
                self.nodes[n].truth = loc;
                self.nodes[n].estimate = self.estimate_for(n);
                let id = self.nodes[n].id;
                self.trace.record(now, Some(id), Module::Kernel, TraceKind::Moved);
            }
        }
    }

    fn on_migration(&mut self, i: usize) {
        let m = self.cfg.migrations[i];
        let now = self.now();
        let loc = self.advertised(m.node.index());
        self.bindings.migrate(m.entity, m.node, loc, now).expect("validated entity");
        self.trace.record(now, Some(m.node), Module::Transport, TraceKind::Other("migrate"));
    }

    // ---------------------------------------------------------------- outputs

    fn mean_utilization(&mut self) -> f64 {
        let now = self.now();
        let mut sum = 0.0;
        let mut k = 0;
        for node in self.nodes.iter_mut().filter(|n| n.alive) {
            sum += node.link.utilization(now);
            k += 1;
        }
        if k == 0 {
            0.0
        } else {
            sum / k as f64
        }
    }

    fn dropped_so_far(&self) -> u64 {
        self.ledger.records().iter().filter(|r| matches!(r.state, PacketState::Dropped(_))).count() as u64
    }

    fn on_sample(&mut self) {
        let now = self.now();
        let dt = self.cfg.outputs.timeseries_interval;
        for n in 0..self.nodes.len() {
            self.settle_radio(n);
        }
        let u = self.mean_utilization();
        if now.secs() >= self.cfg.mac.utilization_window {
            self.c.utilization_samples.push(u);
        }
        let recs = self.ledger.records();
        let stats = self.nodes.iter().fold((0u64, 0u64), |(f, un), n| (f + n.aida.stats().frames, un + n.aida.stats().units));
        let row = TimeseriesRow {
            time: now.secs(),
            generated: recs.len() as u64,
            delivered: recs.iter().filter(|r| r.state == PacketState::Delivered).count() as u64,
            dropped: self.dropped_so_far(),
            in_flight: self.ledger.in_flight() as u64,
            mean_utilization: u,
            energy_joules: self.nodes.iter().map(|n| n.energy.total_spent()).sum(),
            data_frames_sent: self.c.data_frames_sent,
            mean_degree: if stats.0 > 0 { stats.1 as f64 / stats.0 as f64 } else { 0.0 },
            asleep_nodes: self.nodes.iter().filter(|n| n.alive && !n.awake).count() as u64,
        };
        self.timeseries.push(row);
        let next = now + dt;
        if !self.end.before(next) {
            self.at(Ev::Sample, next);
        }
    }

    /// Packet copies currently held anywhere, by packet id.
    fn held_copies(&self) -> BTreeMap<u64, u32> {
        let mut held: BTreeMap<u64, u32> = BTreeMap::new();
        for node in &self.nodes {
            for p in node.sched.items() {
                *held.entry(p.id).or_default() += 1;
            }
            for u in node.aida.buffered_units() {
                *held.entry(u.tag).or_default() += 1;
            }
            for pf in node.csma.queued() {
                for p in Self::frame_packets(&pf.frame) {
                    *held.entry(p.id).or_default() += 1;
                }
            }
            if let Some(st) = &node.probe {
                *held.entry(st.packet.id).or_default() += 1;
            }
        }
        held
    }

    fn finish(mut self) -> RunOutput {
        // Settle the clock at the end of the run for energy accounting.
        let end = self.end;
        if self.queue.now().before(end) {
            self.queue.schedule(Ev::Sample, end).expect("end is in the future");
            // Advance time without running the sample logic.
            let _ = self.queue.pop();
        }
        for n in 0..self.nodes.len() {
            self.settle_radio(n);
            if let Some(s) = self.nodes[n].asleep_since.take() {
                self.c.asleep_node_seconds += end - s;
            }
        }
        let held = self.held_copies();
        for r in self.ledger.records() {
            let h = held.get(&r.id).copied().unwrap_or(0);
            debug_assert_eq!(h, r.copies(), "copy accounting for packet {}", r.id);
            if r.state == PacketState::InFlight {
                debug_assert!(h > 0, "in-flight packet {} has no holder", r.id);
            }
        }
        let metrics = self.build_metrics();
        let nodes = self
            .nodes
            .iter()
            .map(|n| NodeInfo { id: n.id, truth: n.truth, estimate: n.estimate, anchor: n.anchor })
            .collect();
        RunOutput { metrics, timeseries: self.timeseries, ledger: self.ledger, trace: self.trace, nodes, consumed: self.consumed }
    }

    fn build_metrics(&mut self) -> RunMetrics {
        let recs = self.ledger.records();
        let generated = recs.len() as u64;
        let delivered = recs.iter().filter(|r| r.state == PacketState::Delivered).count() as u64;
        let on_time = recs.iter().filter(|r| r.on_time()).count() as u64;
        let mut dropped: BTreeMap<String, u64> = DropReason::ALL.iter().map(|r| (r.as_str().to_string(), 0)).collect();
        for r in recs {
            if let PacketState::Dropped(reason) = r.state {
                *dropped.get_mut(reason.as_str()).unwrap() += 1;
            }
        }
        let dropped_total = dropped.values().sum();
        let in_flight = self.ledger.in_flight() as u64;
        let delays: Vec<f64> = recs.iter().filter_map(|r| r.delay()).collect();
        let hops: Vec<f64> = recs
            .iter()
            .filter(|r| r.state == PacketState::Delivered)
            .map(|r| (r.hops.len() - 1) as f64)
            .collect();
        let mut by_class: BTreeMap<u8, (u64, u64)> = BTreeMap::new();
        for r in recs {
            let e = by_class.entry(r.priority_class).or_default();
            e.0 += 1;
            if r.on_time() {
                e.1 += 1;
            }
        }
        let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let packets = PacketMetrics {
            generated,
            delivered,
            delivered_on_time: on_time,
            dropped,
            dropped_total,
            in_flight_at_end: in_flight,
            delivery_ratio: ratio(delivered, generated),
            deadline_miss_ratio: ratio(generated - on_time, generated),
            miss_ratio_by_class: by_class.iter().map(|(c, (g, ok))| (c.to_string(), ratio(g - ok, *g))).collect(),
            delay: DelayStats {
                mean: stats::mean(&delays),
                p50: stats::percentile(&delays, 0.5),
                p95: stats::percentile(&delays, 0.95),
                p99: stats::percentile(&delays, 0.99),
            },
            mean_hops: stats::mean(&hops),
            source_unavailable: self.c.source_unavailable,
        };

        let mut by_activity = BTreeMap::new();
        for a in Activity::ALL {
            by_activity.insert(a.as_str().to_string(), self.nodes.iter().map(|n| n.energy.spent(a)).sum());
        }
        let per_node: Vec<f64> = self.nodes.iter().map(|n| n.energy.total_spent()).collect();
        let total: f64 = per_node.iter().sum();
        let payload_bytes: u64 = recs.iter().filter(|r| r.state == PacketState::Delivered).map(|r| r.payload_bytes as u64).sum();
        let energy = EnergyMetrics {
            total_joules: total,
            by_activity,
            per_node,
            per_delivered_payload_byte: (payload_bytes > 0).then(|| total / payload_bytes as f64),
            depleted_nodes: self.c.depleted,
        };

        let c = &self.c;
        let overhead = OverheadMetrics {
            beacon_bytes: c.beacon_bytes,
            beacons: c.beacons,
            probe_bytes: c.probe_bytes,
            response_bytes: c.response_bytes,
            backpressure_bytes: c.backpressure_bytes,
            ack_bytes: c.ack_bytes,
            total_control_bytes: c.beacon_bytes + c.probe_bytes + c.response_bytes + c.backpressure_bytes + c.ack_bytes,
        };
        let mac = MacMetrics {
            frames_sent: c.frames_sent,
            data_frames_sent: c.data_frames_sent,
            data_collisions: c.data_collisions,
            corrupted_receptions: c.corrupted_receptions,
            loss_drops: c.loss_drops,
            retransmissions: self.nodes.iter().map(|n| n.csma.retransmissions()).sum(),
            link_failures: c.link_failures,
            mean_utilization: stats::mean(&c.utilization_samples).unwrap_or(0.0),
        };
        let mut hist: BTreeMap<String, u64> = BTreeMap::new();
        let (mut frames, mut units, mut saved, mut overflow, mut malformed) = (0, 0, 0, 0, 0);
        for n in &self.nodes {
            let s = n.aida.stats();
            frames += s.frames;
            units += s.units;
            saved += s.header_bytes_saved;
            overflow += s.overflow_drops;
            malformed += s.malformed_drops;
            for (d, k) in &s.degree_histogram {
                *hist.entry(d.to_string()).or_default() += k;
            }
        }
        let aggregation = AggregationMetrics {
            frames,
            units,
            mean_degree: (frames > 0).then(|| units as f64 / frames as f64),
            degree_histogram: hist,
            header_bytes_saved: saved,
            overflow_drops: overflow,
            malformed_drops: malformed,
            hold_audited: c.hold_audited,
            hold_violations: c.hold_violations,
        };
        let routing = RoutingMetrics {
            decisions: c.decisions,
            qualified_decisions: c.qualified,
            feedback_decisions: c.feedback,
            setpoint_violations: c.setpoint_violations,
            progress_violations: c.progress_violations,
            backpressure_events: c.backpressure_events,
            delay_inflations: c.delay_inflations,
            reroutes: c.reroutes,
            suspicions: c.suspicions,
            probes: c.probes,
            probe_retries: c.probe_retries,
            bindings: c.bindings,
        };
        let transport = TransportMetrics {
            rebinds: c.rebinds,
            app_delivered: c.app_delivered,
            duplicates_discarded: c.duplicates_discarded,
            reorder_overflow: self.connections.values().map(Connection::overflow_drops).sum(),
        };
        let errors: Vec<f64> = self.nodes.iter().filter_map(|n| n.estimate.map(|e| e.distance(&n.truth))).collect();
        let localization = LocalizationMetrics {
            anchors: self.nodes.iter().filter(|n| n.anchor).count() as u64,
            unlocalized: self.nodes.iter().filter(|n| n.estimate.is_none()).count() as u64,
            mean_error: stats::mean(&errors),
            p95_error: stats::percentile(&errors, 0.95),
            max_error: errors.iter().copied().reduce(f64::max),
        };
        let duty = DutyMetrics {
            sleep_grants: c.sleep_grants,
            sleep_denials: c.sleep_denials,
            frames_to_sleeping: c.frames_to_sleeping,
            coverage_violations: c.coverage_violations,
            asleep_node_seconds: c.asleep_node_seconds,
        };
        RunMetrics {
            schema_version: crate::harness::config::SCHEMA_VERSION,
            seed: self.seed,
            duration_seconds: self.cfg.duration_seconds,
            events_dispatched: self.queue.dispatched(),
            packets,
            energy,
            overhead,
            mac,
            aggregation,
            routing,
            transport,
            localization,
            duty,
        }
    }
}

fn packet_in_region(p: &Packet, at: &Location) -> bool {
    p.dest.contains(at)
}

/// Runs one scenario to completion.
pub fn simulate(cfg: &ScenarioConfig, seed: u64) -> Result<RunOutput> {
    Ok(Simulator::new(cfg, seed)?.run())
}
