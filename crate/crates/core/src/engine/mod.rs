//! Deterministic discrete-event core.
//!
//! Time is a plain µs tick counter. Events are totally ordered by
//! `(time, sequence)`, where the sequence number is assigned at schedule
//! time — two events at the same tick fire in the order they were
//! scheduled, so a run is a pure function of its inputs and seed.
//!
//! Randomness comes from counter-derived ChaCha streams: every model that
//! needs entropy gets its own stream of the master seed (see [`streams`]),
//! so adding draws to one model never perturbs another.

mod channel;
mod clock;

pub use channel::{Medium, TxId, TxOutcome};
pub use clock::ClockModel;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BinaryHeap;
use thiserror::Error;

/// Simulation clock tick, in µs since run start.
pub type SimTime = u64;

/// Stream ids for [`stream_rng`]; one per random model, so draw counts in
/// one model never shift another model's sequence.
pub mod streams {
    /// Per-transmission channel-loss draws.
    pub const CHANNEL: u64 = 0;
    /// Per-wake jitter draws.
    pub const JITTER: u64 = 1;
    /// Traffic generation (emergency arrivals).
    pub const TRAFFIC: u64 = 2;
    /// Contention backoff and initial-delay draws.
    pub const BACKOFF: u64 = 3;
}

/// Derive the RNG for one model: the master seed keys the cipher and the
/// stream id selects an independent stream of it.
pub fn stream_rng(master_seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream);
    rng
}

/// A scheduled occurrence. `target` routes to an entity (a node index or
/// a world-defined sentinel); `kind` is the world's own event vocabulary.
#[derive(Debug, Clone)]
pub struct Event<K> {
    pub at: SimTime,
    /// Schedule-order tiebreaker within one tick.
    pub seq: u64,
    pub target: u32,
    pub kind: K,
}

/// Attempt to schedule an event before the current simulation time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("event at {at} µs lies in the past (simulation time is {now} µs)")]
pub struct EventInPast {
    pub at: SimTime,
    pub now: SimTime,
}

struct HeapEntry<K> {
    at: SimTime,
    seq: u64,
    target: u32,
    kind: K,
}

impl<K> PartialEq for HeapEntry<K> {
    fn eq(&self, other: &Self) -> bool {
        self.at == other.at && self.seq == other.seq
    }
}
impl<K> Eq for HeapEntry<K> {}
impl<K> PartialOrd for HeapEntry<K> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl<K> Ord for HeapEntry<K> {
    // Inverted so the max-heap surfaces the earliest (time, seq) first.
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (other.at, other.seq).cmp(&(self.at, self.seq))
    }
}

/// Future-event set with a monotonic clock.
pub struct EventQueue<K> {
    heap: BinaryHeap<HeapEntry<K>>,
    next_seq: u64,
    now: SimTime,
}

impl<K> Default for EventQueue<K> {
    fn default() -> Self {
        Self::new()
    }
}

impl<K> EventQueue<K> {
    pub fn new() -> Self {
        EventQueue {
            heap: BinaryHeap::new(),
            next_seq: 0,
            now: 0,
        }
    }

    /// Current simulation time: the timestamp of the last popped event.
    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    /// Enqueue an event; `at` may equal the current time (it will fire
    /// after already-queued events of that tick) but never precede it.
    pub fn schedule(&mut self, at: SimTime, target: u32, kind: K) -> Result<(), EventInPast> {
        if at < self.now {
            return Err(EventInPast { at, now: self.now });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(HeapEntry {
            at,
            seq,
            target,
            kind,
        });
        Ok(())
    }

    /// Pop the next event if it fires at or before `end`, advancing the
    /// clock to it.
    pub fn pop_due(&mut self, end: SimTime) -> Option<Event<K>> {
        if self.heap.peek().is_some_and(|head| head.at <= end) {
            let entry = self.heap.pop().expect("peeked entry vanished");
            debug_assert!(entry.at >= self.now, "event queue went backwards");
            self.now = entry.at;
            Some(Event {
                at: entry.at,
                seq: entry.seq,
                target: entry.target,
                kind: entry.kind,
            })
        } else {
            None
        }
    }
}

/// World driven by [`run_until`]: reacts to one event at a time and may
/// schedule more.
pub trait Handler {
    type Kind;
    fn handle(&mut self, ev: Event<Self::Kind>, queue: &mut EventQueue<Self::Kind>);
}

/// Drain all events up to and including `end` in (time, seq) order.
/// Returns how many were processed.
pub fn run_until<W: Handler>(
    world: &mut W,
    queue: &mut EventQueue<W::Kind>,
    end: SimTime,
) -> u64 {
    let mut processed = 0;
    while let Some(ev) = queue.pop_due(end) {
        world.handle(ev, queue);
        processed += 1;
    }
    processed
}
