//! Deterministic discrete-event core.
//!
//! Time is kept as integer nanoseconds so that slot boundaries and packet
//! spacings add up exactly; events firing at the same instant are ordered by
//! the sequence number they were given when scheduled.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashSet};
use std::fmt;
use std::ops::{Add, Sub};
use std::time::{Duration, Instant};

use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SimTime(u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub const fn from_nanos(ns: u64) -> Self {
        SimTime(ns)
    }

    /// Rounds to the nearest nanosecond. Negative inputs are rejected.
    pub fn from_secs(s: f64) -> Result<Self> {
        if !s.is_finite() || s < 0.0 {
            return Err(Error::invalid(format!(
                "time must be finite and non-negative, got {s}"
            )));
        }
        Ok(SimTime((s * 1e9).round() as u64))
    }

    pub const fn as_nanos(self) -> u64 {
        self.0
    }

    pub fn as_secs(self) -> f64 {
        self.0 as f64 * 1e-9
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(rhs.0))
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.9} s", self.as_secs())
    }
}

/// A fired event, as handed to the run loop.
#[derive(Debug, Clone, PartialEq)]
pub struct Event<E> {
    pub fire_time: SimTime,
    pub sequence: u64,
    pub payload: E,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct EventHandle(u64);

struct Entry<E> {
    at: SimTime,
    seq: u64,
    payload: E,
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
        (self.at, self.seq).cmp(&(other.at, other.seq))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimStats {
    pub events: u64,
    pub end_time: SimTime,
    pub wall_clock: Duration,
}

pub struct EventQueue<E> {
    now: SimTime,
    next_seq: u64,
    heap: BinaryHeap<Reverse<Entry<E>>>,
    live: HashSet<u64>,
    processed: u64,
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
            live: HashSet::new(),
            processed: 0,
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn processed(&self) -> u64 {
        self.processed
    }

    pub fn pending(&self) -> usize {
        self.live.len()
    }

    pub fn schedule(&mut self, at: SimTime, payload: E) -> Result<EventHandle> {
        if at < self.now {
            return Err(Error::ScheduleInPast { at, now: self.now });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.live.insert(seq);
        self.heap.push(Reverse(Entry { at, seq, payload }));
        Ok(EventHandle(seq))
    }

    /// Schedules relative to the current clock, which can never be in the past.
    pub fn schedule_in(&mut self, delay: SimTime, payload: E) -> EventHandle {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.live.insert(seq);
        self.heap.push(Reverse(Entry {
            at: self.now + delay,
            seq,
            payload,
        }));
        EventHandle(seq)
    }

    /// Returns false if the event already fired or was cancelled before.
    pub fn cancel(&mut self, handle: EventHandle) -> bool {
        self.live.remove(&handle.0)
    }

    /// Pops the next live event with `fire_time <= t_end` and advances the clock to it.
    pub fn pop_until(&mut self, t_end: SimTime) -> Option<Event<E>> {
        loop {
            let top = self.heap.peek()?;
            if top.0.at > t_end {
                return None;
            }
            let Reverse(entry) = self.heap.pop()?;
            if !self.live.remove(&entry.seq) {
                continue;
            }
            debug_assert!(entry.at >= self.now);
            self.now = entry.at;
            self.processed += 1;
            return Some(Event {
                fire_time: entry.at,
                sequence: entry.seq,
                payload: entry.payload,
            });
        }
    }

    /// Processes every event up to and including `t_end`, then parks the
    /// clock at `t_end`. Wall-clock time covers only this loop.
    pub fn run_until<F>(&mut self, t_end: SimTime, mut handler: F) -> Result<SimStats>
    where
        F: FnMut(&mut Self, Event<E>) -> Result<()>,
    {
        if t_end < self.now {
            return Err(Error::ScheduleInPast {
                at: t_end,
                now: self.now,
            });
        }
        let start = Instant::now();
        let before = self.processed;
        while let Some(event) = self.pop_until(t_end) {
            handler(self, event)?;
        }
        self.now = t_end;
        Ok(SimStats {
            events: self.processed - before,
            end_time: t_end,
            wall_clock: start.elapsed(),
        })
    }
}

/// Factory for named random substreams derived from one master seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RngStreams {
    master_seed: u64,
}

impl RngStreams {
    pub fn new(master_seed: u64) -> Self {
        RngStreams { master_seed }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream(&self, label: &str) -> RandomStream {
        let mut hasher = Sha256::new();
        hasher.update(b"mmwave-sim/stream/v1");
        hasher.update(self.master_seed.to_le_bytes());
        hasher.update(label.as_bytes());
        let digest: [u8; 32] = hasher.finalize().into();
        RandomStream {
            label: label.to_owned(),
            seed: u64::from_le_bytes(digest[..8].try_into().expect("8 bytes")),
            rng: ChaCha8Rng::from_seed(digest),
        }
    }

    /// Substream `index` of `label`. Draws for (label, index) do not depend on
    /// how many numbers were consumed from any other index, which keeps
    /// per-slot fading paired across runs whose schedules diverge.
    pub fn indexed(&self, label: &str, index: u64) -> RandomStream {
        let mut stream = self.stream(label);
        stream.rng.set_stream(index);
        stream
    }
}

pub struct RandomStream {
    label: String,
    seed: u64,
    rng: ChaCha8Rng,
}

impl RandomStream {
    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Repositions onto substream `index` from its first draw.
    pub fn reseat(&mut self, index: u64) {
        self.rng.set_stream(index);
        self.rng.set_word_pos(0);
    }
}

impl fmt::Debug for RandomStream {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RandomStream")
            .field("label", &self.label)
            .field("seed", &self.seed)
            .finish()
    }
}

impl RngCore for RandomStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}
