//! Differentiated packet scheduling by priority class and required velocity.

use serde::{Deserialize, Serialize};

use crate::kernel::{Location, SimTime};

/// Remaining distance over remaining time; `None` once the deadline has passed.
pub fn required_velocity(here: &Location, target: &Location, deadline: SimTime, now: SimTime) -> Option<f64> {
    if !now.before(deadline) {
        return None;
    }
    Some(here.distance(target) / (deadline - now))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields, default)]
pub struct QueueParams {
    pub capacity: usize,
}

impl Default for QueueParams {
    fn default() -> Self {
        QueueParams { capacity: 32 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchedEntry<T> {
    pub item: T,
    pub priority_class: u8,
    pub deadline: SimTime,
    pub target: Location,
    pub seq: u64,
}

impl<T> SchedEntry<T> {
    fn velocity(&self, here: &Location, now: SimTime) -> Option<f64> {
        required_velocity(here, &self.target, self.deadline, now)
    }
}

#[derive(Debug)]
pub struct EnqueueOutcome<T> {
    /// Entries found past their deadline, possibly including the incoming one.
    pub expired: Vec<T>,
    /// Congestion victim, possibly the incoming entry.
    pub evicted: Option<T>,
}

#[derive(Debug)]
pub struct Dequeued<T> {
    pub entry: Option<SchedEntry<T>>,
    pub expired: Vec<T>,
}

/// Bounded per-node queue. Keys are recomputed from `now` and `here` on every
/// decision so slack decay while queued is reflected.
#[derive(Debug, Clone)]
pub struct Scheduler<T> {
    entries: Vec<SchedEntry<T>>,
    capacity: usize,
    next_seq: u64,
}

impl<T> Scheduler<T> {
    pub fn new(params: QueueParams) -> Self {
        assert!(params.capacity >= 1, "queue capacity must be >= 1");
        Scheduler { entries: Vec::new(), capacity: params.capacity, next_seq: 0 }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn items(&self) -> impl Iterator<Item = &T> {
        self.entries.iter().map(|e| &e.item)
    }

    fn purge_expired(&mut self, here: &Location, now: SimTime) -> Vec<T> {
        let mut expired = Vec::new();
        let mut i = 0;
        while i < self.entries.len() {
            if self.entries[i].velocity(here, now).is_none() {
                expired.push(self.entries.remove(i).item);
            } else {
                i += 1;
            }
        }
        expired
    }

    pub fn enqueue(
        &mut self,
        item: T,
        priority_class: u8,
        deadline: SimTime,
        target: Location,
        now: SimTime,
        here: &Location,
    ) -> EnqueueOutcome<T> {
        let mut expired = self.purge_expired(here, now);
        let entry = SchedEntry { item, priority_class, deadline, target, seq: self.next_seq };
        self.next_seq += 1;
        let Some(v_in) = entry.velocity(here, now) else {
            expired.push(entry.item);
            return EnqueueOutcome { expired, evicted: None };
        };
        if self.entries.len() < self.capacity {
            self.entries.push(entry);
            return EnqueueOutcome { expired, evicted: None };
        }
        // Victim: lexicographic minimum of (class, velocity); the newest loses ties,
        // which makes the incoming entry lose any tie it is part of.
        let mut victim: Option<usize> = None;
        let mut key = (entry.priority_class, v_in);
        for (i, e) in self.entries.iter().enumerate() {
            let v = e.velocity(here, now).expect("purged");
            if (e.priority_class, v) < key {
                key = (e.priority_class, v);
                victim = Some(i);
            }
        }
        let evicted = match victim {
            None => entry.item,
            Some(i) => {
                let old = std::mem::replace(&mut self.entries[i], entry);
                old.item
            }
        };
        EnqueueOutcome { expired, evicted: Some(evicted) }
    }

    /// Highest (class, velocity), oldest first on ties.
    pub fn dequeue(&mut self, now: SimTime, here: &Location) -> Dequeued<T> {
        let expired = self.purge_expired(here, now);
        let best = self
            .entries
            .iter()
            .enumerate()
            .map(|(i, e)| (i, e.priority_class, e.velocity(here, now).expect("purged"), e.seq))
            .reduce(|a, b| {
                let better = b.1 > a.1 || (b.1 == a.1 && (b.2 > a.2 || (b.2 == a.2 && b.3 < a.3)));
                if better { b } else { a }
            });
        let entry = best.map(|(i, ..)| self.entries.remove(i));
        Dequeued { entry, expired }
    }

    pub fn clear(&mut self) -> Vec<T> {
        self.entries.drain(..).map(|e| e.item).collect()
    }
}
