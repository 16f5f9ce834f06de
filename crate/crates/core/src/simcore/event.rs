//! Simulation clock and the discrete-event queue.
//!
//! Time is integer picoseconds so that the 1 ns detector interval and the
//! 1 µs memory step are both exact and queue keys never drift. Events pop
//! in (time, sequence) order; the sequence number is a global monotone
//! tiebreaker, so no two events ever compare equal.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

/// Absolute simulation time in picoseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct SimTime(pub u64);

pub const PS_PER_NS: u64 = 1_000;
pub const PS_PER_US: u64 = 1_000_000;
pub const PS_PER_SEC: u64 = 1_000_000_000_000;

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub fn from_secs_f64(s: f64) -> Self {
        SimTime((s * PS_PER_SEC as f64).round() as u64)
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / PS_PER_SEC as f64
    }

    pub fn saturating_since(self, earlier: SimTime) -> u64 {
        self.0.saturating_sub(earlier.0)
    }

    pub fn plus_ps(self, ps: u64) -> Self {
        SimTime(self.0 + ps)
    }
}

/// Node index on the two-node link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub usize);

impl NodeId {
    pub fn other(self) -> NodeId {
        NodeId(1 - self.0)
    }
}

/// What a scheduled event does when it fires.
#[derive(Debug, Clone)]
pub enum EventKind<M> {
    /// A node starts its emission burst.
    EmissionDue { node: NodeId },
    /// The analyzer resolves every attempt of the current burst.
    BsaResolve,
    /// A classical message reaches its destination.
    ClassicalDelivery { to: Destination, message: M },
    /// Re-evaluate a node's rules after a state change.
    RuleEvaluate { node: NodeId },
    /// The RuleSet's lifetime expired.
    Timeout,
    /// Hard stop for the whole trial.
    TrialEnd,
}

/// Classical messages terminate either at a node or at the analyzer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Destination {
    Node(NodeId),
    Analyzer,
}

#[derive(Debug)]
pub struct Event<M> {
    pub time: SimTime,
    pub sequence: u64,
    pub kind: EventKind<M>,
}

impl<M> PartialEq for Event<M> {
    fn eq(&self, other: &Self) -> bool {
        self.time == other.time && self.sequence == other.sequence
    }
}
impl<M> Eq for Event<M> {}

impl<M> Ord for Event<M> {
    fn cmp(&self, other: &Self) -> Ordering {
        // BinaryHeap is a max-heap; invert for earliest-first order.
        (other.time, other.sequence).cmp(&(self.time, self.sequence))
    }
}
impl<M> PartialOrd for Event<M> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Earliest-first event queue with a strict total order.
#[derive(Debug)]
pub struct EventQueue<M> {
    heap: BinaryHeap<Event<M>>,
    next_sequence: u64,
    now: SimTime,
}

impl<M> Default for EventQueue<M> {
    fn default() -> Self {
        Self::new()
    }
}

impl<M> EventQueue<M> {
    pub fn new() -> Self {
        Self {
            heap: BinaryHeap::new(),
            next_sequence: 0,
            now: SimTime::ZERO,
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    /// Schedules an event; scheduling into the past is a bug.
    pub fn schedule(&mut self, time: SimTime, kind: EventKind<M>) {
        assert!(time >= self.now, "event scheduled in the past: {time:?} < {:?}", self.now);
        let sequence = self.next_sequence;
        self.next_sequence += 1;
        self.heap.push(Event { time, sequence, kind });
    }

    /// Pops the next event and advances the clock to it.
    pub fn pop(&mut self) -> Option<Event<M>> {
        let ev = self.heap.pop()?;
        debug_assert!(ev.time >= self.now);
        self.now = ev.time;
        Some(ev)
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pops_in_time_then_sequence_order() {
        let mut q: EventQueue<()> = EventQueue::new();
        q.schedule(SimTime(5), EventKind::Timeout);
        q.schedule(SimTime(3), EventKind::BsaResolve);
        q.schedule(SimTime(5), EventKind::TrialEnd);
        let a = q.pop().unwrap();
        assert_eq!(a.time, SimTime(3));
        let b = q.pop().unwrap();
        let c = q.pop().unwrap();
        assert_eq!((b.time, c.time), (SimTime(5), SimTime(5)));
        assert!(b.sequence < c.sequence);
        assert!(matches!(b.kind, EventKind::Timeout));
        assert!(q.pop().is_none());
    }

    #[test]
    fn clock_is_monotone() {
        let mut q: EventQueue<()> = EventQueue::new();
        q.schedule(SimTime(10), EventKind::BsaResolve);
        q.schedule(SimTime(20), EventKind::BsaResolve);
        let mut last = SimTime::ZERO;
        while let Some(ev) = q.pop() {
            assert!(ev.time >= last);
            last = ev.time;
        }
        assert_eq!(q.now(), SimTime(20));
    }

    #[test]
    #[should_panic(expected = "scheduled in the past")]
    fn rejects_past_events() {
        let mut q: EventQueue<()> = EventQueue::new();
        q.schedule(SimTime(10), EventKind::BsaResolve);
        q.pop();
        q.schedule(SimTime(5), EventKind::BsaResolve);
    }

    #[test]
    fn time_conversions_are_exact() {
        assert_eq!(SimTime::from_secs_f64(1.0).0, PS_PER_SEC);
        assert_eq!(SimTime::from_secs_f64(1e-9).0, PS_PER_NS);
        assert_eq!(SimTime(PS_PER_US).as_secs_f64(), 1e-6);
    }
}
