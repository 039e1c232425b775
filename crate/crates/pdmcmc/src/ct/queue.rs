//! Min-priority queue of per-index clocks with lazy invalidation.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

struct Entry {
    time: f64,
    id: usize,
    gen: u64,
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.time == other.time && self.id == other.id
    }
}
impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        // reversed: BinaryHeap is a max-heap, we want the earliest time
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.id.cmp(&self.id))
    }
}
impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Absolute-time clocks, one per index. Rescheduling an index silently
/// invalidates its previous entry; stale entries are skipped on pop.
pub(crate) struct ClockQueue {
    heap: BinaryHeap<Entry>,
    gen: Vec<u64>,
}

impl ClockQueue {
    pub fn new(n: usize) -> Self {
        ClockQueue {
            heap: BinaryHeap::with_capacity(n),
            gen: vec![0; n],
        }
    }

    /// Set index `id` to fire at absolute `time`; infinite times are dropped.
    pub fn schedule(&mut self, id: usize, time: f64) {
        self.gen[id] += 1;
        if time.is_finite() {
            self.heap.push(Entry {
                time,
                id,
                gen: self.gen[id],
            });
        }
    }

    /// Earliest live clock without consuming it.
    pub fn peek(&mut self) -> Option<(f64, usize)> {
        while let Some(e) = self.heap.peek() {
            if e.gen == self.gen[e.id] {
                return Some((e.time, e.id));
            }
            self.heap.pop();
        }
        None
    }

    /// Consume the earliest live clock.
    pub fn pop(&mut self) -> Option<(f64, usize)> {
        let head = self.peek()?;
        self.heap.pop();
        Some(head)
    }

    pub fn clear(&mut self) {
        self.heap.clear();
        for g in &mut self.gen {
            *g += 1;
        }
    }
}
