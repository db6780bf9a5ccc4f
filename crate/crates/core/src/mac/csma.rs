use std::collections::VecDeque;

use rand::Rng;

use super::frame::Frame;
use super::params::MacParams;
use crate::kernel::SimTime;

#[derive(Debug, Clone, PartialEq)]
pub struct PendingFrame {
    pub frame: Frame,
    pub reliable: bool,
    pub enqueued_at: SimTime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailReason {
    RetriesExhausted,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SendOutcome {
    Delivered { delay: f64 },
    Failed(FailReason),
}

/// Terminal result for the head-of-line frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub pending: PendingFrame,
    pub outcome: SendOutcome,
    pub attempts: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum State {
    Idle,
    Backoff,
    Transmitting,
    AwaitAck,
}

#[derive(Debug)]
pub enum AttemptResult<'a> {
    /// Timer belongs to an earlier round.
    Stale,
    Deferred { at: SimTime, token: u64 },
    Transmit(&'a PendingFrame),
}

#[derive(Debug)]
pub enum TxEndResult {
    AwaitAck { until: SimTime, token: u64 },
    Completed(Completion),
}

#[derive(Debug)]
pub enum TimeoutResult {
    Stale,
    Retry { at: SimTime, token: u64 },
    Failed(Completion),
}

/// Slotted CSMA with binary exponential backoff and optional stop-and-wait ACKs.
///
/// The engine owns the channel; this type only decides when to try, what to send,
/// and what happened. Attempt times sit on the global slot grid so contenders that
/// pick the same slot collide.
#[derive(Debug, Clone)]
pub struct Csma {
    params: MacParams,
    queue: VecDeque<PendingFrame>,
    state: State,
    cw: u32,
    attempts: u32,
    token: u64,
    next_seq: u32,
    retransmissions: u64,
}

impl Csma {
    pub fn new(params: MacParams) -> Self {
        Csma {
            params,
            queue: VecDeque::new(),
            state: State::Idle,
            cw: params.cw_min,
            attempts: 0,
            token: 0,
            next_seq: 0,
            retransmissions: 0,
        }
    }

    pub fn next_seq(&mut self) -> u32 {
        let s = self.next_seq;
        self.next_seq = self.next_seq.wrapping_add(1);
        s
    }

    pub fn enqueue(&mut self, frame: Frame, reliable: bool, now: SimTime) {
        self.queue.push_back(PendingFrame { frame, reliable, enqueued_at: now });
    }

    /// True while a frame is queued or in progress.
    pub fn busy(&self) -> bool {
        self.state != State::Idle || !self.queue.is_empty()
    }

    pub fn queue_len(&self) -> usize {
        self.queue.len()
    }

    pub fn queued(&self) -> impl Iterator<Item = &PendingFrame> {
        self.queue.iter()
    }

    pub fn head(&self) -> Option<&PendingFrame> {
        self.queue.front()
    }

    pub fn contention_window(&self) -> u32 {
        self.cw
    }

    pub fn retransmissions(&self) -> u64 {
        self.retransmissions
    }

    pub fn is_awaiting_ack(&self) -> bool {
        self.state == State::AwaitAck
    }

    fn slot_after(&self, base: f64) -> u64 {
        let k = base / self.params.slot_time;
        (k - 1e-9).ceil().max(0.0) as u64
    }

    fn draw_attempt<R: Rng + ?Sized>(&mut self, base: f64, rng: &mut R) -> (SimTime, u64) {
        let b = rng.random_range(0..self.cw) as u64;
        let slot = self.slot_after(base) + b;
        self.token += 1;
        (SimTime::from_secs(slot as f64 * self.params.slot_time), self.token)
    }

    /// Starts contention for the head frame when idle. `clear_at` is when the channel
    /// as heard by this node goes idle (past or present if already idle).
    pub fn start_if_idle<R: Rng + ?Sized>(&mut self, now: SimTime, clear_at: SimTime, rng: &mut R) -> Option<(SimTime, u64)> {
        if self.state != State::Idle || self.queue.is_empty() {
            return None;
        }
        self.state = State::Backoff;
        let base = now.secs().max(clear_at.secs() + self.params.ifs);
        Some(self.draw_attempt(base, rng))
    }

    /// Backoff expiry. Busy channel: redraw from the current window after it clears.
    pub fn on_attempt<R: Rng + ?Sized>(
        &mut self,
        token: u64,
        sensed_busy: bool,
        clear_at: SimTime,
        rng: &mut R,
    ) -> AttemptResult<'_> {
        if self.state != State::Backoff || token != self.token {
            return AttemptResult::Stale;
        }
        if sensed_busy {
            let (at, token) = self.draw_attempt(clear_at.secs() + self.params.ifs, rng);
            return AttemptResult::Deferred { at, token };
        }
        self.state = State::Transmitting;
        self.attempts += 1;
        if self.attempts > 1 {
            self.retransmissions += 1;
        }
        AttemptResult::Transmit(self.queue.front().expect("backoff without a frame"))
    }

    pub fn on_tx_end(&mut self, now: SimTime) -> TxEndResult {
        assert_eq!(self.state, State::Transmitting, "tx end while not transmitting");
        let head = self.queue.front().expect("transmitting without a frame");
        if head.reliable && head.frame.is_unicast() {
            self.state = State::AwaitAck;
            self.token += 1;
            return TxEndResult::AwaitAck { until: now + self.params.ack_timeout, token: self.token };
        }
        let delay = (now - head.enqueued_at).max(f64::MIN_POSITIVE);
        TxEndResult::Completed(self.complete(SendOutcome::Delivered { delay }))
    }

    /// ACK for `seq`; ignored unless it matches the frame awaiting acknowledgement.
    pub fn on_ack(&mut self, seq: u32, now: SimTime) -> Option<Completion> {
        if self.state != State::AwaitAck {
            return None;
        }
        let head = self.queue.front()?;
        if head.frame.seq != seq {
            return None;
        }
        let delay = (now - head.enqueued_at).max(f64::MIN_POSITIVE);
        Some(self.complete(SendOutcome::Delivered { delay }))
    }

    pub fn on_ack_timeout<R: Rng + ?Sized>(
        &mut self,
        token: u64,
        now: SimTime,
        clear_at: SimTime,
        rng: &mut R,
    ) -> TimeoutResult {
        if self.state != State::AwaitAck || token != self.token {
            return TimeoutResult::Stale;
        }
        if self.attempts > self.params.retry_limit {
            return TimeoutResult::Failed(self.complete(SendOutcome::Failed(FailReason::RetriesExhausted)));
        }
        self.cw = (self.cw * 2).min(self.params.cw_max);
        self.state = State::Backoff;
        let base = now.secs().max(clear_at.secs() + self.params.ifs);
        let (at, token) = self.draw_attempt(base, rng);
        TimeoutResult::Retry { at, token }
    }

    fn complete(&mut self, outcome: SendOutcome) -> Completion {
        let pending = self.queue.pop_front().expect("completion without a frame");
        let attempts = self.attempts;
        self.attempts = 0;
        self.cw = self.params.cw_min;
        self.state = State::Idle;
        self.token += 1;
        Completion { pending, outcome, attempts }
    }

    /// Drops everything (crash or death).
    pub fn clear(&mut self) -> Vec<PendingFrame> {
        self.state = State::Idle;
        self.attempts = 0;
        self.cw = self.params.cw_min;
        self.token += 1;
        self.queue.drain(..).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{rng, NodeId};
    use crate::mac::frame::{FrameBody, FrameKind, LinkDst};

    fn frame(seq: u32) -> Frame {
        Frame { src: NodeId(0), dst: LinkDst::Node(NodeId(1)), kind: FrameKind::Data, size_bytes: 40, seq, body: FrameBody::Raw }
    }

    #[test]
    fn first_attempt_delivery() {
        let p = MacParams::default();
        let mut mac = Csma::new(p);
        let mut r = rng::stream(1, "mac", 0);
        let seq = mac.next_seq();
        mac.enqueue(frame(seq), true, SimTime::ZERO);
        let (at, tok) = mac.start_if_idle(SimTime::ZERO, SimTime::ZERO, &mut r).unwrap();
        // Attempt lands on the slot grid, inside the initial window.
        let slots = at.secs() / p.slot_time;
        assert!((slots - slots.round()).abs() < 1e-9);
        assert!(at.secs() <= p.ifs + p.slot_time * p.cw_min as f64 + 1e-12);
        assert!(matches!(mac.on_attempt(tok, false, SimTime::ZERO, &mut r), AttemptResult::Transmit(_)));
        let end = at + 0.002;
        let TxEndResult::AwaitAck { .. } = mac.on_tx_end(end) else { panic!() };
        let done = mac.on_ack(seq, end + 0.0007).unwrap();
        assert_eq!(done.attempts, 1);
        assert!(matches!(done.outcome, SendOutcome::Delivered { delay } if (delay - (end.secs() + 0.0007)).abs() < 1e-12));
        assert!(!mac.busy());
    }

    #[test]
    fn retry_bound_is_r_plus_one() {
        let p = MacParams { retry_limit: 3, ..MacParams::default() };
        let mut mac = Csma::new(p);
        let mut r = rng::stream(2, "mac", 0);
        mac.enqueue(frame(0), true, SimTime::ZERO);
        let (mut at, mut tok) = mac.start_if_idle(SimTime::ZERO, SimTime::ZERO, &mut r).unwrap();
        let mut transmissions = 0;
        let mut windows = vec![mac.contention_window()];
        loop {
            assert!(matches!(mac.on_attempt(tok, false, SimTime::ZERO, &mut r), AttemptResult::Transmit(_)));
            transmissions += 1;
            let TxEndResult::AwaitAck { until, token } = mac.on_tx_end(at + 0.002) else { panic!() };
            match mac.on_ack_timeout(token, until, SimTime::ZERO, &mut r) {
                TimeoutResult::Retry { at: a, token: t } => {
                    at = a;
                    tok = t;
                    windows.push(mac.contention_window());
                }
                TimeoutResult::Failed(c) => {
                    assert_eq!(c.outcome, SendOutcome::Failed(FailReason::RetriesExhausted));
                    assert_eq!(c.attempts, 4);
                    break;
                }
                TimeoutResult::Stale => panic!("stale"),
            }
        }
        assert_eq!(transmissions, 4);
        assert_eq!(windows, vec![8, 16, 32, 64]);
        assert_eq!(mac.contention_window(), 8, "window resets after completion");
    }

    #[test]
    fn busy_channel_defers_without_doubling() {
        let p = MacParams::default();
        let mut mac = Csma::new(p);
        let mut r = rng::stream(3, "mac", 0);
        mac.enqueue(frame(0), true, SimTime::ZERO);
        let (_, tok) = mac.start_if_idle(SimTime::ZERO, SimTime::ZERO, &mut r).unwrap();
        let clear = SimTime::from_secs(0.05);
        let AttemptResult::Deferred { at, token } = mac.on_attempt(tok, true, clear, &mut r) else { panic!() };
        assert!(at.secs() >= 0.05 + p.ifs - 1e-12);
        assert_eq!(mac.contention_window(), p.cw_min);
        assert!(matches!(mac.on_attempt(tok, false, clear, &mut r), AttemptResult::Stale));
        assert!(matches!(mac.on_attempt(token, false, clear, &mut r), AttemptResult::Transmit(_)));
    }

    #[test]
    fn broadcast_completes_at_tx_end() {
        let mut mac = Csma::new(MacParams::default());
        let mut r = rng::stream(4, "mac", 0);
        let mut f = frame(0);
        f.dst = LinkDst::Broadcast;
        mac.enqueue(f, true, SimTime::ZERO);
        let (at, tok) = mac.start_if_idle(SimTime::ZERO, SimTime::ZERO, &mut r).unwrap();
        let _ = mac.on_attempt(tok, false, SimTime::ZERO, &mut r);
        assert!(matches!(mac.on_tx_end(at + 0.001), TxEndResult::Completed(_)));
    }
}
