//! Virtual-time event queue.
//!
//! Events are ordered by `(fire_at, seq)` where `seq` is a monotone
//! insertion counter, so events scheduled for the same instant fire in
//! submission order. Time is integral milliseconds.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Simulated time in milliseconds.
pub type VirtualTime = u64;

/// The single pseudo-random stream of a run: ChaCha8 seeded from a `u64`.
pub type SimRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Default cap on processed events before a run is declared livelocked.
pub const DEFAULT_EVENT_CAP: u64 = 1_000_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EventId(u64);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EngineError {
    #[error("livelock: processed {processed} events without the queue draining (clock at {now} ms)")]
    Livelock { processed: u64, now: VirtualTime },
}

struct Scheduled<E> {
    at: VirtualTime,
    seq: u64,
    event: E,
}

impl<E> PartialEq for Scheduled<E> {
    fn eq(&self, other: &Self) -> bool {
        self.seq == other.seq
    }
}

impl<E> Eq for Scheduled<E> {}

impl<E> PartialOrd for Scheduled<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<E> Ord for Scheduled<E> {
    // Reversed: BinaryHeap is a max-heap and we want the earliest event on top.
    fn cmp(&self, other: &Self) -> Ordering {
        (other.at, other.seq).cmp(&(self.at, self.seq))
    }
}

pub struct Engine<E> {
    now: VirtualTime,
    next_seq: u64,
    queue: BinaryHeap<Scheduled<E>>,
    pending: HashSet<u64>,
    processed: u64,
    event_cap: u64,
}

impl<E> Default for Engine<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E> Engine<E> {
    pub fn new() -> Self {
        Self::with_event_cap(DEFAULT_EVENT_CAP)
    }

    pub fn with_event_cap(event_cap: u64) -> Self {
        Engine { now: 0, next_seq: 0, queue: BinaryHeap::new(), pending: HashSet::new(), processed: 0, event_cap }
    }

    pub fn now(&self) -> VirtualTime {
        self.now
    }

    /// Number of events handed out by [`Engine::pop`] so far.
    pub fn processed(&self) -> u64 {
        self.processed
    }

    /// Number of scheduled events that have neither fired nor been cancelled.
    pub fn pending(&self) -> usize {
        self.pending.len()
    }

    pub fn schedule(&mut self, delay: VirtualTime, event: E) -> EventId {
        let at = self.now + delay;
        self.schedule_at(at, event)
    }

    /// Schedule at an absolute instant, which must not lie in the past.
    pub fn schedule_at(&mut self, at: VirtualTime, event: E) -> EventId {
        assert!(at >= self.now, "event scheduled in the past ({at} < {})", self.now);
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Scheduled { at, seq, event });
        self.pending.insert(seq);
        EventId(seq)
    }

    /// Returns true iff the event was still pending. A cancelled event never fires.
    pub fn cancel(&mut self, id: EventId) -> bool {
        self.pending.remove(&id.0)
    }

    pub fn is_pending(&self, id: EventId) -> bool {
        self.pending.contains(&id.0)
    }

    /// Fire time of the next live event, discarding cancelled heads.
    pub fn peek_time(&mut self) -> Option<VirtualTime> {
        while let Some(head) = self.queue.peek() {
            if self.pending.contains(&head.seq) {
                return Some(head.at);
            }
            self.queue.pop();
        }
        None
    }

    /// Remove the next live event and advance the clock to its fire time.
    pub fn pop(&mut self) -> Option<(EventId, E)> {
        while let Some(next) = self.queue.pop() {
            if !self.pending.remove(&next.seq) {
                continue;
            }
            debug_assert!(next.at >= self.now);
            self.now = next.at;
            self.processed += 1;
            return Some((EventId(next.seq), next.event));
        }
        None
    }

    /// Drain events in order, stopping early before any event later than
    /// `until`. Returns the clock value after the last processed event.
    pub fn run<F>(&mut self, until: Option<VirtualTime>, mut handler: F) -> Result<VirtualTime, EngineError>
    where
        F: FnMut(&mut Self, EventId, E),
    {
        loop {
            match (self.peek_time(), until) {
                (None, _) => return Ok(self.now),
                (Some(at), Some(limit)) if at > limit => return Ok(self.now),
                _ => {}
            }
            if self.processed >= self.event_cap {
                return Err(EngineError::Livelock { processed: self.processed, now: self.now });
            }
            let (id, event) = self.pop().expect("peeked event vanished");
            handler(self, id, event);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_queue_returns_zero() {
        let mut engine: Engine<()> = Engine::new();
        assert_eq!(engine.run(None, |_, _, _| {}).unwrap(), 0);
    }

    #[test]
    fn single_event_fires_once() {
        let mut engine = Engine::new();
        engine.schedule(50, "deliver");
        let mut fired = Vec::new();
        let end = engine.run(None, |e, _, ev| fired.push((e.now(), ev))).unwrap();
        assert_eq!(end, 50);
        assert_eq!(fired, vec![(50, "deliver")]);
    }

    #[test]
    fn zero_delay_fires_after_earlier_seq_at_same_time() {
        let mut engine = Engine::new();
        engine.schedule(100, 1);
        engine.schedule(100, 2);
        let mut order = Vec::new();
        engine
            .run(None, |e, _, ev| {
                order.push((e.now(), ev));
                if ev == 1 {
                    e.schedule(0, 3);
                }
            })
            .unwrap();
        assert_eq!(order, vec![(100, 1), (100, 2), (100, 3)]);
    }

    #[test]
    fn equal_delays_fire_in_submission_order() {
        let mut engine = Engine::new();
        engine.schedule(10, "start");
        engine.pop();
        engine.schedule(15, "a");
        engine.schedule(15, "b");
        assert_eq!(engine.pop().map(|(_, e)| e), Some("a"));
        assert_eq!(engine.now(), 25);
        assert_eq!(engine.pop().map(|(_, e)| e), Some("b"));
        assert_eq!(engine.now(), 25);
    }

    #[test]
    fn cancel_semantics() {
        let mut engine = Engine::new();
        let timeout = engine.schedule(300, "timeout");
        let fired = engine.schedule(10, "vote");
        assert_eq!(engine.pop().map(|(id, _)| id), Some(fired));
        assert!(!engine.cancel(fired));
        assert!(engine.cancel(timeout));
        assert!(!engine.cancel(timeout));
        assert!(engine.pop().is_none());
    }

    #[test]
    fn run_until_stops_before_later_events() {
        let mut engine = Engine::new();
        engine.schedule(10, 1);
        engine.schedule(90, 2);
        let mut seen = 0;
        assert_eq!(engine.run(Some(50), |_, _, _| seen += 1).unwrap(), 10);
        assert_eq!(seen, 1);
        assert_eq!(engine.pending(), 1);
    }

    #[test]
    fn livelock_cap_reported() {
        let mut engine = Engine::with_event_cap(100);
        engine.schedule(1, ());
        let err = engine.run(None, |e, _, _| {
            e.schedule(1, ());
        });
        assert!(matches!(err, Err(EngineError::Livelock { processed: 100, .. })));
    }

    #[test]
    fn seeded_rng_is_reproducible() {
        use rand::Rng;
        let a: Vec<u32> = (0..8)
            .map({
                let mut r = seeded_rng(7);
                move |_| r.gen()
            })
            .collect();
        let b: Vec<u32> = (0..8)
            .map({
                let mut r = seeded_rng(7);
                move |_| r.gen()
            })
            .collect();
        assert_eq!(a, b);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn order_and_no_lost_events(
                delays in proptest::collection::vec(0u64..200, 1..60),
                cancel_mask in proptest::collection::vec(any::<bool>(), 60),
            ) {
                let mut engine = Engine::new();
                let ids: Vec<_> = delays.iter().enumerate().map(|(i, d)| engine.schedule(*d, i)).collect();
                let mut kept = Vec::new();
                for (i, id) in ids.iter().enumerate() {
                    if cancel_mask[i] {
                        prop_assert!(engine.cancel(*id));
                    } else {
                        kept.push(i);
                    }
                }
                let mut fired = Vec::new();
                let mut last = (0, 0);
                engine.run(None, |e, _, i| {
                    let key = (e.now(), i);
                    assert!(key >= last, "clock or tie-break went backwards");
                    last = key;
                    fired.push(i);
                }).unwrap();
                for &i in &fired {
                    prop_assert_eq!(engine.now() >= delays[i], true);
                }
                let mut sorted = fired.clone();
                sorted.sort();
                prop_assert_eq!(sorted, kept);
            }
        }
    }
}
