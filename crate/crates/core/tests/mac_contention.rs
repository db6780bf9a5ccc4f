//! Two saturated senders sharing one receiver, checked against an independent
//! slot-level model of the backoff rules.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sensornet::aida::AggregationMode;
use sensornet::engine::simulate;
use sensornet::harness::config::{FlowConfig, ScenarioConfig, SourceRegion};
use sensornet::kernel::{Area, EntityId, Location, SimTime};
use sensornet::routing::{Destination, ForwardingPolicy, Packet};

/// Frame timings the slot model needs, in seconds.
struct Timing {
    slot: f64,
    ifs: f64,
    turnaround: f64,
    ack_timeout: f64,
    data: f64,
    ack: f64,
}

fn slot_after(base: f64, slot: f64) -> u64 {
    (base / slot - 1e-9).ceil().max(0.0) as u64
}

struct Backoff {
    cw_min: u32,
    cw_max: u32,
    retry_limit: u32,
}

#[derive(Clone, Copy)]
struct Station {
    cw: u32,
    attempts: u32,
    /// Slot index of the next attempt.
    k: u64,
}

impl Station {
    fn draw(&mut self, base: f64, t: &Timing, r: &mut ChaCha8Rng) {
        self.k = slot_after(base, t.slot) + r.random_range(0..self.cw) as u64;
    }

    fn succeed(&mut self, base: f64, b: &Backoff, t: &Timing, r: &mut ChaCha8Rng) {
        self.attempts = 0;
        self.cw = b.cw_min;
        self.draw(base, t, r);
    }

    fn fail(&mut self, base: f64, b: &Backoff, t: &Timing, r: &mut ChaCha8Rng) {
        self.attempts += 1;
        if self.attempts > b.retry_limit {
            self.attempts = 0;
            self.cw = b.cw_min;
        } else {
            self.cw = (self.cw * 2).min(b.cw_max);
        }
        self.draw(base, t, r);
    }
}

/// Two always-backlogged stations on one slot grid. Equal attempt slots collide and
/// both back off from the ack timeout with a doubled window. Otherwise the earlier
/// station sends; the other, finding the data or the ack on air, redraws from its
/// current window once that frame ends. Returns collided / transmitted frames.
fn slot_model(t: &Timing, b: &Backoff, frames: u64, seed: u64) -> f64 {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let mut st = [Station { cw: b.cw_min, attempts: 0, k: 0 }; 2];
    for s in &mut st {
        s.draw(0.0, t, &mut r);
    }
    let (mut collided, mut sent) = (0u64, 0u64);
    while sent < frames {
        if st[0].k == st[1].k {
            collided += 2;
            sent += 2;
            let base = st[0].k as f64 * t.slot + t.data + t.ack_timeout;
            for s in &mut st {
                s.fail(base, b, t, &mut r);
            }
            continue;
        }
        let (w, l) = if st[0].k < st[1].k { (0, 1) } else { (1, 0) };
        sent += 1;
        let data_end = st[w].k as f64 * t.slot + t.data;
        let ack_start = data_end + t.turnaround;
        let ack_end = ack_start + t.ack;
        let mut ack_lost = false;
        loop {
            let a = st[l].k as f64 * t.slot;
            let clear = if a < data_end {
                data_end
            } else if a < ack_start {
                // The loser starts inside the turnaround gap: the receiver is deaf
                // while acking, and the loser's frame drowns the ack at the winner.
                ack_lost = true;
                break;
            } else if a < ack_end {
                ack_end
            } else {
                break;
            };
            st[l].draw(clear + t.ifs, t, &mut r);
        }
        if !ack_lost {
            st[w].succeed(ack_end + t.ifs, b, t, &mut r);
            continue;
        }
        sent += 1;
        collided += 1;
        let loser_end = st[l].k as f64 * t.slot + t.data;
        st[w].fail((data_end + t.ack_timeout).max(loser_end + t.ifs), b, t, &mut r);
        st[l].fail(loser_end + t.ack_timeout, b, t, &mut r);
    }
    collided as f64 / sent as f64
}

fn packet_header_bytes() -> usize {
    let p = Packet {
        id: 0,
        source: EntityId(0),
        dest: Destination { center: Location::new(0.0, 0.0), radius: 0.0, entity: None },
        deadline: SimTime::from_secs(1.0),
        priority_class: 0,
        payload_bytes: 0,
        created_at: SimTime::from_secs(0.0),
        ttl_remaining: 1,
        rebinds: 0,
        dest_version: 0,
        conn: None,
    };
    p.header_bytes()
}

fn two_senders() -> ScenarioConfig {
    let mut cfg = ScenarioConfig::reference();
    cfg.topology.count = 3;
    cfg.topology.area = Area::new(40.0, 40.0);
    cfg.topology.anchor_fraction = 0.0;
    cfg.topology.positions = Some(vec![Location::new(5.0, 5.0), Location::new(25.0, 5.0), Location::new(15.0, 15.0)]);
    cfg.duration_seconds = 40.0;
    cfg.aggregation.mode = AggregationMode::None;
    cfg.routing.policy = ForwardingPolicy::Greedy;
    cfg.routing.admission_threshold = 1.0;
    // Sparse beacons so routing control traffic barely touches the contention.
    cfg.routing.beacon_period = 10.0;
    cfg.routing.neighbor_timeout = 100.0;
    cfg.queue.capacity = 8;
    let flow = |x: f64| FlowConfig {
        source: Some(SourceRegion { center: Location::new(x, 5.0), radius: 0.0 }),
        from_entity: None,
        dest: Destination { center: Location::new(15.0, 15.0), radius: 1.0, entity: None },
        to_entity: None,
        period_seconds: 0.002,
        payload_bytes: 32,
        deadline_offset_seconds: 1000.0,
        priority_class: 0,
        start_time: 10.5,
        stop_time: None,
        connection: false,
    };
    cfg.traffic = vec![flow(5.0), flow(25.0)];
    cfg
}

#[test]
fn saturated_pair_collision_rate_matches_slot_model() {
    let cfg = two_senders();
    // One run carries about 3% sampling noise, so several seeds are pooled.
    let (mut collisions, mut frames) = (0u64, 0u64);
    for seed in 1..=8 {
        let m = simulate(&cfg, seed).unwrap().metrics;
        assert!(m.mac.data_frames_sent > 2000, "not saturated: {}", m.mac.data_frames_sent);
        collisions += m.mac.data_collisions;
        frames += m.mac.data_frames_sent;
    }
    let engine = collisions as f64 / frames as f64;
    let payload = cfg.traffic[0].payload_bytes as usize;
    let t = Timing {
        slot: cfg.mac.slot_time,
        ifs: cfg.mac.ifs,
        turnaround: cfg.mac.turnaround,
        ack_timeout: cfg.mac.ack_timeout,
        data: cfg.radio.airtime(cfg.mac.header_bytes + packet_header_bytes() + payload),
        ack: cfg.radio.airtime(cfg.mac.ack_bytes),
    };
    let b = Backoff { cw_min: cfg.mac.cw_min, cw_max: cfg.mac.cw_max, retry_limit: cfg.mac.retry_limit };
    let oracle = slot_model(&t, &b, 400_000, 11);
    assert!((engine - oracle).abs() <= 0.05 * oracle, "engine {engine:.4} vs model {oracle:.4}");
}

#[test]
fn lone_sender_only_meets_beacons() {
    let mut cfg = two_senders();
    cfg.traffic.truncate(1);
    let m = simulate(&cfg, 5).unwrap().metrics;
    assert!(m.mac.data_frames_sent > 1000);
    // The only other transmitters are the periodic beacons.
    assert!(m.mac.data_collisions <= m.overhead.beacons, "{} collisions", m.mac.data_collisions);
    assert_eq!(m.mac.retransmissions, m.mac.data_collisions);
}
