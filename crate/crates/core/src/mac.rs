//! Slotted downlink MAC: frame timing, per-UE RLC buffers, round-robin
//! scheduling, serving-cell selection and latency bookkeeping.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::engine::SimTime;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrameConfig {
    pub slot_s: f64,
    pub symbols_per_slot: u32,
    pub control_symbols: u32,
    /// Duration of one OFDM symbol. The downlink symbols occupy
    /// `symbols_per_slot * symbol_s` of each slot; the remainder is the
    /// uplink/guard part of the TDD slot.
    pub symbol_s: f64,
}

impl Default for FrameConfig {
    fn default() -> Self {
        FrameConfig {
            slot_s: 125e-6,
            symbols_per_slot: 14,
            control_symbols: 2,
            symbol_s: 4.46e-6,
        }
    }
}

impl FrameConfig {
    pub fn validate(&self) -> Result<()> {
        if self.control_symbols >= self.symbols_per_slot {
            return Err(Error::invalid(format!(
                "frame needs data symbols: {} total, {} control",
                self.symbols_per_slot, self.control_symbols
            )));
        }
        if !(self.slot_s > 0.0) || !(self.symbol_s > 0.0) {
            return Err(Error::invalid("slot and symbol durations must be positive"));
        }
        if self.symbol_s * self.symbols_per_slot as f64 > self.slot_s * (1.0 + 1e-9) {
            return Err(Error::invalid("symbols do not fit in the slot"));
        }
        Ok(())
    }

    pub fn data_symbols(&self) -> u32 {
        self.symbols_per_slot - self.control_symbols
    }

    pub fn slot(&self) -> Result<SimTime> {
        SimTime::from_secs(self.slot_s)
    }
}

/// One PDCP packet waiting in (or being segmented out of) the RLC buffer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Pdu {
    /// Transport-level identifier (UDP sequence or TCP sequence number).
    pub tag: u64,
    pub bytes: u32,
    pub pdcp_in: SimTime,
}

#[derive(Clone, Copy, Debug)]
struct Queued {
    pdu: Pdu,
    remaining: u32,
    mac_in: SimTime,
    corrupted: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Enqueue {
    Accepted,
    Dropped,
}

/// Outcome for a packet whose last byte left the buffer in this TB.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Departure {
    pub pdu: Pdu,
    pub mac_in: SimTime,
    /// False when any segment of the packet went out in a failed TB.
    pub delivered: bool,
}

/// Drop-tail FIFO of PDCP packets with a byte capacity.
#[derive(Clone, Debug)]
pub struct RlcBuffer {
    capacity: u64,
    occupancy: u64,
    fifo: VecDeque<Queued>,
    drops: u64,
    dropped_bytes: u64,
}

impl RlcBuffer {
    pub fn new(capacity: u64) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::invalid("RLC buffer capacity must be positive"));
        }
        Ok(RlcBuffer {
            capacity,
            occupancy: 0,
            fifo: VecDeque::new(),
            drops: 0,
            dropped_bytes: 0,
        })
    }

    pub fn capacity(&self) -> u64 {
        self.capacity
    }

    pub fn occupancy(&self) -> u64 {
        self.occupancy
    }

    /// Full size of the packets still queued, counting a partly sent head
    /// packet whole.
    pub fn backlog_bytes(&self) -> u64 {
        self.fifo.iter().map(|q| q.pdu.bytes as u64).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.fifo.is_empty()
    }

    pub fn len(&self) -> usize {
        self.fifo.len()
    }

    pub fn drops(&self) -> u64 {
        self.drops
    }

    pub fn dropped_bytes(&self) -> u64 {
        self.dropped_bytes
    }

    pub fn enqueue(&mut self, pdu: Pdu, now: SimTime) -> Enqueue {
        if self.occupancy + pdu.bytes as u64 > self.capacity {
            self.drops += 1;
            self.dropped_bytes += pdu.bytes as u64;
            return Enqueue::Dropped;
        }
        self.occupancy += pdu.bytes as u64;
        self.fifo.push_back(Queued {
            pdu,
            remaining: pdu.bytes,
            mac_in: now,
            corrupted: false,
        });
        debug_assert!(self.occupancy <= self.capacity);
        Enqueue::Accepted
    }

    /// Moves up to `bits / 8` bytes out of the head of the buffer.
    ///
    /// A packet becomes head-of-line either when it is enqueued into an empty
    /// buffer or when its predecessor leaves; `now` is the TB start. Packets
    /// completed by a failed TB, or carrying a segment from one, come back
    /// with `delivered = false`.
    pub fn dequeue(
        &mut self,
        bits: u64,
        now: SimTime,
        success: bool,
        out: &mut Vec<Departure>,
    ) -> u64 {
        let mut budget = bits / 8;
        let mut sent = 0;
        while budget > 0 {
            let Some(head) = self.fifo.front_mut() else {
                break;
            };
            let take = budget.min(head.remaining as u64) as u32;
            head.remaining -= take;
            head.corrupted |= !success;
            budget -= take as u64;
            sent += take as u64;
            self.occupancy -= take as u64;
            if head.remaining == 0 {
                let done = self.fifo.pop_front().expect("head exists");
                out.push(Departure {
                    pdu: done.pdu,
                    mac_in: done.mac_in,
                    delivered: !done.corrupted,
                });
                if let Some(next) = self.fifo.front_mut() {
                    next.mac_in = next.mac_in.max(now);
                }
            }
        }
        sent
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub delivered: u64,
    pub mac_mean_s: f64,
    pub pdcp_mean_s: f64,
    pub mac_p50_s: f64,
    pub mac_p95_s: f64,
    pub pdcp_p50_s: f64,
    pub pdcp_p95_s: f64,
}

/// Collects per-packet MAC and PDCP latencies.
#[derive(Clone, Debug, Default)]
pub struct LatencyTracker {
    mac: Vec<f64>,
    pdcp: Vec<f64>,
}

impl LatencyTracker {
    pub fn record(&mut self, pdcp_in: SimTime, mac_in: SimTime, mac_out: SimTime) {
        debug_assert!(pdcp_in <= mac_in && mac_in <= mac_out);
        self.mac.push((mac_out - mac_in).as_secs());
        self.pdcp.push((mac_out - pdcp_in).as_secs());
    }

    pub fn len(&self) -> usize {
        self.mac.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mac.is_empty()
    }

    pub fn report(&self) -> LatencyReport {
        if self.mac.is_empty() {
            return LatencyReport::default();
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let mut mac = self.mac.clone();
        let mut pdcp = self.pdcp.clone();
        mac.sort_by(f64::total_cmp);
        pdcp.sort_by(f64::total_cmp);
        LatencyReport {
            delivered: mac.len() as u64,
            mac_mean_s: mean(&mac),
            pdcp_mean_s: mean(&pdcp),
            mac_p50_s: quantile(&mac, 0.50),
            mac_p95_s: quantile(&mac, 0.95),
            pdcp_p50_s: quantile(&pdcp, 0.50),
            pdcp_p95_s: quantile(&pdcp, 0.95),
        }
    }
}

/// Linear-interpolated quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
        }
    }
}

/// Round-robin pointer over UE indices.
#[derive(Clone, Debug, Default)]
pub struct RoundRobin {
    last: Option<usize>,
}

impl RoundRobin {
    /// Picks the first backlogged UE after the last one served, wrapping
    /// around. `candidates` must be sorted ascending.
    pub fn next(
        &mut self,
        candidates: &[usize],
        backlogged: impl Fn(usize) -> bool,
    ) -> Option<usize> {
        let start = match self.last {
            Some(last) => candidates.partition_point(|&u| u <= last),
            None => 0,
        };
        let n = candidates.len();
        let pick = (0..n)
            .map(|i| candidates[(start + i) % n])
            .find(|&u| backlogged(u))?;
        self.last = Some(pick);
        Some(pick)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Serving {
    Bs(usize),
    Fallback,
}

/// Long-term received power from one mmWave BS.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Measurement {
    pub bs: usize,
    pub rx_power_dbm: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CellSelection {
    pub hysteresis_db: f64,
    pub sinr_floor_db: f64,
    pub noise_dbm: f64,
    pub has_fallback: bool,
}

/// Strongest BS by long-term power, sticking with the incumbent unless the
/// challenger beats it by the hysteresis margin.
pub fn select_serving_bs(
    measurements: &[Measurement],
    incumbent: Option<Serving>,
    rule: &CellSelection,
) -> Result<Serving> {
    let best = measurements.iter().copied().reduce(|a, b| {
        if b.rx_power_dbm > a.rx_power_dbm {
            b
        } else {
            a
        }
    });
    let Some(best) = best else {
        return if rule.has_fallback {
            Ok(Serving::Fallback)
        } else {
            Err(Error::invalid("no base station in coverage"))
        };
    };
    if rule.has_fallback && best.rx_power_dbm - rule.noise_dbm < rule.sinr_floor_db {
        return Ok(Serving::Fallback);
    }
    if let Some(Serving::Bs(current)) = incumbent {
        if let Some(m) = measurements.iter().find(|m| m.bs == current) {
            let usable =
                !rule.has_fallback || m.rx_power_dbm - rule.noise_dbm >= rule.sinr_floor_db;
            if usable && best.rx_power_dbm < m.rx_power_dbm + rule.hysteresis_db {
                return Ok(Serving::Bs(current));
            }
        }
    }
    Ok(Serving::Bs(best.bs))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode", deny_unknown_fields)]
pub enum LinkAdaptation {
    /// TB sized at the SINR of the slot it is sent in; never lost.
    Ideal,
    /// TB sized from the SINR the UE reported when last scheduled, backed
    /// off by `margin_db` plus an outer-loop offset. The TB is lost when the
    /// slot's SINR cannot carry it.
    ///
    /// The outer loop raises its offset by `olla_step_db` on every lost TB
    /// and lowers it by `olla_step_db * bler_target / (1 - bler_target)` on
    /// every delivered one, so the long-run TB error rate settles near
    /// `bler_target`. TBs delivered at the capped rate leave it unchanged.
    /// A zero step disables it.
    Reported {
        margin_db: f64,
        #[serde(default = "default_olla_step")]
        olla_step_db: f64,
        #[serde(default = "default_bler_target")]
        bler_target: f64,
    },
}

fn default_olla_step() -> f64 {
    0.5
}

fn default_bler_target() -> f64 {
    0.01
}

impl LinkAdaptation {
    pub fn reported(margin_db: f64) -> Self {
        LinkAdaptation::Reported {
            margin_db,
            olla_step_db: default_olla_step(),
            bler_target: default_bler_target(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let LinkAdaptation::Reported {
            margin_db,
            olla_step_db,
            bler_target,
        } = *self
        {
            if !(margin_db >= 0.0) || !(olla_step_db >= 0.0) {
                return Err(Error::invalid(
                    "link adaptation margin and step must be non-negative",
                ));
            }
            if !(bler_target > 0.0 && bler_target < 1.0) {
                return Err(Error::invalid("BLER target must lie in (0, 1)"));
            }
        }
        Ok(())
    }
}

impl Default for LinkAdaptation {
    fn default() -> Self {
        LinkAdaptation::reported(3.0)
    }
}

/// Outer-loop link adaptation offset of one UE.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct OuterLoop {
    offset_db: f64,
}

impl OuterLoop {
    /// Bound on the offset magnitude.
    pub const LIMIT_DB: f64 = 20.0;

    pub fn offset_db(&self) -> f64 {
        self.offset_db
    }

    /// Folds in one TB outcome. The offset never drops below `-floor_db`,
    /// so the static margin can be cancelled but not exceeded.
    pub fn update(&mut self, delivered: bool, step_db: f64, bler_target: f64, floor_db: f64) {
        let delta = if delivered {
            -step_db * bler_target / (1.0 - bler_target)
        } else {
            step_db
        };
        self.offset_db =
            (self.offset_db + delta).clamp(-floor_db.min(Self::LIMIT_DB), Self::LIMIT_DB);
    }

    pub fn reset(&mut self) {
        self.offset_db = 0.0;
    }
}
