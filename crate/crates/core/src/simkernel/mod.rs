//! Virtual clock, (t, seq)-ordered event queue and multi-hop transmission.

mod network;
mod trace;

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::time::SimTime;

pub use network::{serialization, HopTiming, LinkCounters, Lost, Message, MessageId, Network};
pub use trace::{trace_hash_of_file, TraceRecord, TraceRecorder};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    MessageDelivery,
    LinkState,
    Membership,
    WorkloadOp,
    Timer,
}

impl EventKind {
    pub fn code(self) -> u8 {
        self as u8
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Event<P> {
    pub t: SimTime,
    pub seq: u64,
    pub payload: P,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum KernelError {
    #[error("cannot schedule at {at} before now {now}")]
    ScheduleInPast { at: SimTime, now: SimTime },
    #[error("message path is not a walk from src to dst")]
    BrokenPath,
    #[error("link {0} on the path is down")]
    LinkDown(crate::topology::LinkId),
}

struct Entry<P>(Event<P>);

impl<P> PartialEq for Entry<P> {
    fn eq(&self, other: &Self) -> bool {
        (self.0.t, self.0.seq) == (other.0.t, other.0.seq)
    }
}
impl<P> Eq for Entry<P> {}
impl<P> PartialOrd for Entry<P> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<P> Ord for Entry<P> {
    // Reversed: BinaryHeap is a max-heap.
    fn cmp(&self, other: &Self) -> Ordering {
        (other.0.t, other.0.seq).cmp(&(self.0.t, self.0.seq))
    }
}

pub struct EventQueue<P> {
    now: SimTime,
    next_seq: u64,
    heap: BinaryHeap<Entry<P>>,
}

impl<P> Default for EventQueue<P> {
    fn default() -> Self {
        Self::new()
    }
}

impl<P> EventQueue<P> {
    pub fn new() -> Self {
        EventQueue {
            now: SimTime::ZERO,
            next_seq: 0,
            heap: BinaryHeap::new(),
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn schedule(&mut self, t: SimTime, payload: P) -> Result<u64, KernelError> {
        if t < self.now {
            return Err(KernelError::ScheduleInPast { at: t, now: self.now });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Entry(Event { t, seq, payload }));
        Ok(seq)
    }

    pub fn peek_time(&self) -> Option<SimTime> {
        self.heap.peek().map(|e| e.0.t)
    }

    /// Pops the next event if it is due at or before `t_end`, advancing the clock.
    pub fn pop_due(&mut self, t_end: SimTime) -> Option<Event<P>> {
        if self.peek_time()? > t_end {
            return None;
        }
        let ev = self.heap.pop()?.0;
        self.now = ev.t;
        Some(ev)
    }

    /// Moves the clock forward to `t` if it is behind.
    pub fn advance_to(&mut self, t: SimTime) {
        self.now = self.now.max(t);
    }

    /// Handles every event with `t <= t_end` in order, then sets the clock to `t_end`.
    pub fn run_until(&mut self, t_end: SimTime, mut handler: impl FnMut(&mut Self, Event<P>)) {
        while let Some(ev) = self.pop_due(t_end) {
            handler(self, ev);
        }
        self.advance_to(t_end);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_times_follow_insertion_order() {
        let mut q = EventQueue::new();
        let t = SimTime::from_millis(5);
        q.schedule(t, "b").unwrap();
        q.schedule(SimTime::from_millis(1), "a").unwrap();
        q.schedule(t, "c").unwrap();
        let mut seen = Vec::new();
        q.run_until(SimTime::from_secs(1), |_, e| seen.push(e.payload));
        assert_eq!(seen, ["a", "b", "c"]);
        assert_eq!(q.now(), SimTime::from_secs(1));
    }

    #[test]
    fn past_is_rejected_and_now_is_allowed() {
        let mut q = EventQueue::<u8>::new();
        q.run_until(SimTime::from_millis(10), |_, _| {});
        assert!(q.schedule(SimTime::from_millis(9), 0).is_err());
        q.schedule(SimTime::from_millis(10), 1).unwrap();
        assert_eq!(q.pop_due(SimTime::from_millis(10)).unwrap().payload, 1);
    }

    #[test]
    fn run_until_is_idempotent_and_handlers_can_schedule() {
        let mut q = EventQueue::new();
        q.schedule(SimTime::ZERO, 0u32).unwrap();
        let mut seen = Vec::new();
        let end = SimTime::from_millis(100);
        q.run_until(end, |q, e| {
            seen.push((q.now(), e.payload));
            if e.payload < 3 {
                q.schedule(q.now() + SimTime::from_millis(30), e.payload + 1).unwrap();
            }
        });
        q.run_until(end, |_, e| seen.push((SimTime::MAX, e.payload)));
        assert_eq!(seen.len(), 4);
        assert!(seen.windows(2).all(|w| w[0].0 <= w[1].0));
        assert_eq!(q.now(), end);
    }

    #[test]
    fn empty_queue_moves_clock() {
        let mut q = EventQueue::<()>::new();
        q.run_until(SimTime::from_secs(2), |_, _| {});
        assert_eq!(q.now(), SimTime::from_secs(2));
    }
}
