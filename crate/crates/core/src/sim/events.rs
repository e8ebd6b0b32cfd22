//! Time-ordered event queue.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;

use crate::chaining::MemberId;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Arrival { session: MemberId },
    PlaybackEnd { session: MemberId, generation: u64 },
    EarlyDepart { session: MemberId },
    Fail { session: MemberId },
    FailDetect { child: MemberId, failed: MemberId, generation: u64 },
    PopularityTick,
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::Arrival { .. } => "ARRIVAL",
            EventKind::PlaybackEnd { .. } => "PLAYBACK_END",
            EventKind::EarlyDepart { .. } => "EARLY_DEPART",
            EventKind::Fail { .. } => "FAIL",
            EventKind::FailDetect { .. } => "FAIL_DETECT",
            EventKind::PopularityTick => "POPULARITY_TICK",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub time_min: f64,
    pub seq: u64,
    pub kind: EventKind,
}

impl Eq for Event {}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        // reversed: BinaryHeap is a max-heap
        other.time_min.total_cmp(&self.time_min).then(other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<Event>,
    next_seq: u64,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, time_min: f64, kind: EventKind) -> u64 {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Event { time_min, seq, kind });
        seq
    }

    pub fn pop(&mut self) -> Option<Event> {
        self.heap.pop()
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn time_then_seq() {
        let mut q = EventQueue::new();
        q.push(5.0, EventKind::PopularityTick);
        q.push(1.0, EventKind::Fail { session: MemberId(1) });
        q.push(1.0, EventKind::Fail { session: MemberId(2) });
        let order: Vec<_> = std::iter::from_fn(|| q.pop()).map(|e| (e.time_min, e.seq)).collect();
        assert_eq!(order, vec![(1.0, 1), (1.0, 2), (5.0, 0)]);
    }
}
