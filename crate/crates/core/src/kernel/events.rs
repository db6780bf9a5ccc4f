use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashSet};

use super::time::SimTime;
use crate::error::SimError;

/// Handle returned by [`EventQueue::schedule`]; the insertion sequence number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EventHandle(pub u64);

struct Entry<E> {
    at: SimTime,
    seq: u64,
    event: E,
}

impl<E> PartialEq for Entry<E> {
    fn eq(&self, other: &Self) -> bool {
        self.at == other.at && self.seq == other.seq
    }
}

impl<E> Eq for Entry<E> {}

impl<E> PartialOrd for Entry<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<E> Ord for Entry<E> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.at.cmp(&other.at).then(self.seq.cmp(&other.seq))
    }
}

/// Future event list. Events fire in time order; equal times fire in insertion order.
pub struct EventQueue<E> {
    now: SimTime,
    next_seq: u64,
    heap: BinaryHeap<Reverse<Entry<E>>>,
    cancelled: HashSet<u64>,
    dispatched: u64,
}

impl<E> Default for EventQueue<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E> EventQueue<E> {
    pub fn new() -> Self {
        EventQueue {
            now: SimTime::ZERO,
            next_seq: 0,
            heap: BinaryHeap::new(),
            cancelled: HashSet::new(),
            dispatched: 0,
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn len(&self) -> usize {
        self.heap.len() - self.cancelled.len().min(self.heap.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dispatched(&self) -> u64 {
        self.dispatched
    }

    pub fn schedule(&mut self, event: E, at: SimTime) -> Result<EventHandle, SimError> {
        if at.before(self.now) {
            return Err(SimError::CausalityViolation { now: self.now.secs(), requested: at.secs() });
        }
        // Within epsilon of the present counts as the present.
        let at = at.max(self.now);
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Reverse(Entry { at, seq, event }));
        Ok(EventHandle(seq))
    }

    pub fn schedule_in(&mut self, event: E, delay: f64) -> EventHandle {
        debug_assert!(delay >= 0.0);
        let at = self.now + delay.max(0.0);
        self.schedule(event, at).expect("non-negative delay cannot violate causality")
    }

    pub fn cancel(&mut self, handle: EventHandle) {
        self.cancelled.insert(handle.0);
    }

    /// Next live event, advancing the clock. Panics if time would run backwards.
    pub fn pop(&mut self) -> Option<(SimTime, E)> {
        while let Some(Reverse(entry)) = self.heap.pop() {
            if self.cancelled.remove(&entry.seq) {
                continue;
            }
            assert!(
                !entry.at.before(self.now),
                "event time {} precedes clock {}",
                entry.at,
                self.now
            );
            self.now = entry.at;
            self.dispatched += 1;
            return Some((entry.at, entry.event));
        }
        None
    }

    pub fn peek_time(&mut self) -> Option<SimTime> {
        while let Some(Reverse(entry)) = self.heap.peek() {
            if self.cancelled.contains(&entry.seq) {
                let seq = entry.seq;
                self.heap.pop();
                self.cancelled.remove(&seq);
                continue;
            }
            return Some(entry.at);
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ties_fire_in_insertion_order() {
        let mut q = EventQueue::new();
        let t = SimTime::from_secs(1.0);
        q.schedule("a", t).unwrap();
        q.schedule("b", t).unwrap();
        q.schedule("c", SimTime::from_secs(0.5)).unwrap();
        let order: Vec<_> = std::iter::from_fn(|| q.pop().map(|(_, e)| e)).collect();
        assert_eq!(order, vec!["c", "a", "b"]);
    }

    #[test]
    fn now_event_fires_after_current() {
        let mut q = EventQueue::new();
        q.schedule(1, SimTime::from_secs(2.0)).unwrap();
        q.schedule(3, SimTime::from_secs(2.0)).unwrap();
        let (t, first) = q.pop().unwrap();
        assert_eq!(first, 1);
        q.schedule(2, t).unwrap();
        assert_eq!(q.pop().unwrap().1, 3);
        assert_eq!(q.pop().unwrap().1, 2);
    }

    #[test]
    fn past_is_rejected() {
        let mut q = EventQueue::new();
        q.schedule((), SimTime::from_secs(5.0)).unwrap();
        q.pop();
        let err = q.schedule((), SimTime::from_secs(4.0)).unwrap_err();
        assert!(matches!(err, SimError::CausalityViolation { .. }));
        assert!(err.to_string().contains("causality violation"));
        // Sub-epsilon jitter is accepted and clamped.
        assert!(q.schedule((), SimTime::from_secs(5.0 - 1e-13)).is_ok());
    }

    #[test]
    fn cancelled_events_are_skipped() {
        let mut q = EventQueue::new();
        let h = q.schedule("x", SimTime::from_secs(1.0)).unwrap();
        q.schedule("y", SimTime::from_secs(2.0)).unwrap();
        q.cancel(h);
        assert_eq!(q.pop().unwrap().1, "y");
        assert!(q.pop().is_none());
    }
}
