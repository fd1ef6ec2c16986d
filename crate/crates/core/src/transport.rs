//! Constant-rate UDP source and a TCP NewReno sender/receiver pair.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::engine::SimTime;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UdpSource {
    pub rate_bps: f64,
    pub packet_bytes: u32,
}

impl UdpSource {
    pub fn new(rate_bps: f64, packet_bytes: u32) -> Result<Self> {
        if !(rate_bps > 0.0 && rate_bps.is_finite()) {
            return Err(Error::invalid(format!(
                "UDP rate must be positive, got {rate_bps}"
            )));
        }
        if packet_bytes == 0 {
            return Err(Error::invalid("UDP packet size must be positive"));
        }
        Ok(UdpSource {
            rate_bps,
            packet_bytes,
        })
    }

    pub fn interval_s(&self) -> f64 {
        self.packet_bytes as f64 * 8.0 / self.rate_bps
    }

    /// Emission time of packet `k`, counted from `start`.
    pub fn emission_time(&self, start: SimTime, k: u64) -> SimTime {
        let nanos = (k as f64 * self.interval_s() * 1e9).round() as u64;
        start + SimTime::from_nanos(nanos)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TcpConfig {
    pub mss: u32,
    pub initial_cwnd_segments: u32,
    pub max_window_bytes: u64,
    /// One-way delay between server and BS, seconds.
    pub core_delay_s: f64,
    /// Server-to-BS link rate.
    pub core_rate_bps: f64,
    /// Air-interface uplink delay for ACKs, seconds.
    pub uplink_delay_s: f64,
    pub min_rto_s: f64,
    pub initial_rto_s: f64,
    pub max_rto_s: f64,
}

impl Default for TcpConfig {
    fn default() -> Self {
        TcpConfig {
            mss: 1400,
            initial_cwnd_segments: 10,
            max_window_bytes: 1 << 30,
            core_delay_s: 0.005,
            core_rate_bps: 10e9,
            uplink_delay_s: 0.0005,
            min_rto_s: 0.2,
            initial_rto_s: 1.0,
            max_rto_s: 60.0,
        }
    }
}

impl TcpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.mss == 0 || self.initial_cwnd_segments == 0 {
            return Err(Error::invalid("MSS and initial window must be positive"));
        }
        if self.max_window_bytes < 2 * self.mss as u64 {
            return Err(Error::invalid("max window must hold at least two segments"));
        }
        if !(self.core_delay_s >= 0.0)
            || !(self.uplink_delay_s >= 0.0)
            || !(self.core_rate_bps > 0.0)
        {
            return Err(Error::invalid(
                "core delay, uplink delay and core rate must be non-negative/positive",
            ));
        }
        if !(self.min_rto_s > 0.0)
            || self.initial_rto_s < self.min_rto_s
            || self.max_rto_s < self.initial_rto_s
        {
            return Err(Error::invalid(
                "RTO bounds must satisfy 0 < min <= initial <= max",
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    SlowStart,
    CongestionAvoidance,
    FastRecovery,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossKind {
    TripleDupack,
    Timeout,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExitReason {
    Loss(LossKind),
    ThresholdReached,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlowStartExit {
    pub t_s: f64,
    pub reason: ExitReason,
}

/// Congestion-control state, in bytes.
#[derive(Clone, Debug, PartialEq)]
pub struct TcpState {
    pub cwnd: u64,
    pub ssthresh: u64,
    pub mss: u64,
    pub max_window: u64,
    pub dupacks: u32,
    pub srtt_s: Option<f64>,
    pub rttvar_s: f64,
    pub rto_s: f64,
    pub phase: Phase,
    pub in_flight: u64,
    ca_acked: u64,
    exits: Vec<SlowStartExit>,
}

impl TcpState {
    pub fn new(config: &TcpConfig) -> Self {
        let mss = config.mss as u64;
        TcpState {
            cwnd: (mss * config.initial_cwnd_segments as u64).min(config.max_window_bytes),
            ssthresh: config.max_window_bytes,
            mss,
            max_window: config.max_window_bytes,
            dupacks: 0,
            srtt_s: None,
            rttvar_s: 0.0,
            rto_s: config.initial_rto_s,
            phase: Phase::SlowStart,
            in_flight: 0,
            ca_acked: 0,
            exits: Vec::new(),
        }
    }

    pub fn slow_start_exits(&self) -> &[SlowStartExit] {
        &self.exits
    }

    fn leave_slow_start(&mut self, t: SimTime, reason: ExitReason) {
        if self.phase == Phase::SlowStart {
            self.exits.push(SlowStartExit {
                t_s: t.as_secs(),
                reason,
            });
        }
    }
}

/// Window growth for `acked` newly acknowledged bytes.
pub fn tcp_on_ack(state: &mut TcpState, acked: u64, t: SimTime) {
    match state.phase {
        Phase::SlowStart => {
            state.cwnd = (state.cwnd + acked).min(state.max_window);
            if state.cwnd >= state.ssthresh {
                state.leave_slow_start(t, ExitReason::ThresholdReached);
                state.phase = Phase::CongestionAvoidance;
                state.ca_acked = 0;
            }
        }
        Phase::CongestionAvoidance => {
            // one MSS per cwnd worth of acknowledged bytes
            state.ca_acked += acked;
            while state.ca_acked >= state.cwnd {
                state.ca_acked -= state.cwnd;
                state.cwnd = (state.cwnd + state.mss).min(state.max_window);
            }
        }
        Phase::FastRecovery => {}
    }
}

/// A timeout during fast recovery keeps the threshold already set for that
/// loss episode; the inflated recovery window is not halved again.
pub fn tcp_on_loss(state: &mut TcpState, kind: LossKind, t: SimTime) {
    state.leave_slow_start(t, ExitReason::Loss(kind));
    if state.phase != Phase::FastRecovery {
        state.ssthresh = (state.cwnd / 2).max(2 * state.mss);
    }
    state.ca_acked = 0;
    match kind {
        LossKind::TripleDupack => {
            state.cwnd = state.ssthresh;
            state.phase = Phase::FastRecovery;
        }
        LossKind::Timeout => {
            state.cwnd = state.mss;
            state.phase = Phase::SlowStart;
            state.dupacks = 0;
        }
    }
}

pub fn tcp_window(state: &TcpState) -> u64 {
    state
        .cwnd
        .min(state.max_window)
        .saturating_sub(state.in_flight)
}

/// What the sender wants the network to do after an ACK or timeout.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SenderActions {
    /// Segment (sequence number, length) to resend now.
    pub retransmit: Option<(u64, u32)>,
    /// Restart the retransmission timer (`Some(true)`), stop it (`Some(false)`).
    pub timer: Option<bool>,
}

/// NewReno sender with an unlimited backlog of data.
///
/// During fast recovery only the first partial ACK restarts the
/// retransmission timer, so a long run of holes ends in a timeout and a
/// go-back-N resend instead of one repaired hole per round trip.
#[derive(Clone, Debug)]
pub struct TcpSender {
    pub state: TcpState,
    snd_una: u64,
    snd_nxt: u64,
    high_water: u64,
    recover: u64,
    /// A partial ACK has already restarted the timer in this recovery.
    partial_acked: bool,
    rtt_probe: Option<(u64, SimTime)>,
    min_rto_s: f64,
    max_rto_s: f64,
    losses: Vec<(f64, LossKind)>,
    retransmissions: u64,
}

impl TcpSender {
    pub fn new(config: &TcpConfig) -> Result<Self> {
        config.validate()?;
        Ok(TcpSender {
            state: TcpState::new(config),
            snd_una: 0,
            snd_nxt: 0,
            high_water: 0,
            recover: 0,
            partial_acked: false,
            rtt_probe: None,
            min_rto_s: config.min_rto_s,
            max_rto_s: config.max_rto_s,
            losses: Vec::new(),
            retransmissions: 0,
        })
    }

    pub fn snd_una(&self) -> u64 {
        self.snd_una
    }

    pub fn snd_nxt(&self) -> u64 {
        self.snd_nxt
    }

    pub fn losses(&self) -> &[(f64, LossKind)] {
        &self.losses
    }

    pub fn retransmissions(&self) -> u64 {
        self.retransmissions
    }

    pub fn rto(&self) -> SimTime {
        SimTime::from_nanos((self.state.rto_s * 1e9).round() as u64)
    }

    fn sync_flight(&mut self) {
        self.state.in_flight = self.snd_nxt - self.snd_una;
    }

    /// Next segment the window allows, advancing `snd_nxt`.
    pub fn next_segment(&mut self, now: SimTime) -> Option<(u64, u32)> {
        let mss = self.state.mss;
        if tcp_window(&self.state) < mss {
            return None;
        }
        let seq = self.snd_nxt;
        self.snd_nxt += mss;
        if self.snd_nxt > self.high_water {
            self.high_water = self.snd_nxt;
            if self.rtt_probe.is_none() {
                self.rtt_probe = Some((self.snd_nxt, now));
            }
        } else {
            // go-back-N resend after a timeout
            self.retransmissions += 1;
        }
        self.sync_flight();
        Some((seq, mss as u32))
    }

    fn sample_rtt(&mut self, r: f64) {
        let s = &mut self.state;
        match s.srtt_s {
            None => {
                s.srtt_s = Some(r);
                s.rttvar_s = r / 2.0;
            }
            Some(srtt) => {
                s.rttvar_s = 0.75 * s.rttvar_s + 0.25 * (srtt - r).abs();
                s.srtt_s = Some(0.875 * srtt + 0.125 * r);
            }
        }
        self.reset_rto();
    }

    /// Recomputes the timeout from the RTT estimate, dropping any backoff.
    fn reset_rto(&mut self) {
        let s = &mut self.state;
        if let Some(srtt) = s.srtt_s {
            s.rto_s = (srtt + 4.0 * s.rttvar_s).clamp(self.min_rto_s, self.max_rto_s);
        }
    }

    pub fn on_ack(&mut self, ack: u64, now: SimTime) -> Result<SenderActions> {
        if ack > self.high_water {
            return Err(Error::AckBeyondSent {
                ack,
                snd_nxt: self.high_water,
            });
        }
        let mut actions = SenderActions::default();
        if ack > self.snd_una {
            // after a go-back-N resend the ACK may also cover data the
            // receiver already held; only bytes in flight count
            let acked = ack.min(self.snd_nxt) - self.snd_una;
            self.snd_una = ack;
            self.reset_rto();
            if self.snd_nxt < ack {
                self.snd_nxt = ack;
            }
            if let Some((end, sent)) = self.rtt_probe {
                if ack >= end {
                    self.sample_rtt((now - sent).as_secs());
                    self.rtt_probe = None;
                }
            }
            if self.state.phase == Phase::FastRecovery {
                if ack >= self.recover {
                    self.state.cwnd = self.state.ssthresh.max(self.state.mss);
                    self.state.phase = Phase::CongestionAvoidance;
                    self.state.dupacks = 0;
                } else {
                    // partial ACK: resend the next hole, deflate
                    self.state.cwnd = (self.state.cwnd.saturating_sub(acked) + self.state.mss)
                        .max(self.state.mss);
                    actions.retransmit = Some((self.snd_una, self.state.mss as u32));
                    self.retransmissions += 1;
                    let first = !self.partial_acked;
                    self.partial_acked = true;
                    if first {
                        actions.timer = Some(true);
                    }
                    self.sync_flight();
                    return Ok(actions);
                }
            } else {
                self.state.dupacks = 0;
                tcp_on_ack(&mut self.state, acked, now);
            }
            actions.timer = Some(self.snd_una < self.high_water);
        } else if ack == self.snd_una && self.snd_una < self.snd_nxt {
            self.state.dupacks += 1;
            if self.state.phase == Phase::FastRecovery {
                self.state.cwnd = (self.state.cwnd + self.state.mss).min(self.state.max_window);
            } else if self.state.dupacks == 3 && (self.snd_una > self.recover || self.recover == 0)
            {
                tcp_on_loss(&mut self.state, LossKind::TripleDupack, now);
                self.losses.push((now.as_secs(), LossKind::TripleDupack));
                self.recover = self.snd_nxt;
                self.partial_acked = false;
                self.rtt_probe = None;
                actions.retransmit = Some((self.snd_una, self.state.mss as u32));
                self.retransmissions += 1;
                actions.timer = Some(true);
            }
        }
        self.sync_flight();
        Ok(actions)
    }

    /// Retransmission timeout: collapse the window and resend from `snd_una`.
    pub fn on_timeout(&mut self, now: SimTime) {
        tcp_on_loss(&mut self.state, LossKind::Timeout, now);
        self.losses.push((now.as_secs(), LossKind::Timeout));
        self.recover = self.high_water;
        self.snd_nxt = self.snd_una;
        self.rtt_probe = None;
        self.state.rto_s = (self.state.rto_s * 2.0).min(self.max_rto_s);
        self.sync_flight();
    }
}

/// Cumulative-ACK receiver with out-of-order reassembly.
#[derive(Clone, Debug, Default)]
pub struct TcpReceiver {
    rcv_nxt: u64,
    out_of_order: BTreeMap<u64, u64>,
    delivered_bytes: u64,
}

impl TcpReceiver {
    pub fn rcv_nxt(&self) -> u64 {
        self.rcv_nxt
    }

    /// Bytes handed to the application in order.
    pub fn delivered_bytes(&self) -> u64 {
        self.delivered_bytes
    }

    /// Accepts a segment and returns the cumulative ACK to send.
    pub fn on_segment(&mut self, seq: u64, len: u32) -> u64 {
        let end = seq + len as u64;
        if end > self.rcv_nxt {
            if seq <= self.rcv_nxt {
                self.advance_to(end);
            } else {
                let e = self.out_of_order.entry(seq).or_insert(end);
                *e = (*e).max(end);
            }
            while let Some((&s, &e)) = self.out_of_order.first_key_value() {
                if s > self.rcv_nxt {
                    break;
                }
                self.out_of_order.pop_first();
                if e > self.rcv_nxt {
                    self.advance_to(e);
                }
            }
        }
        self.rcv_nxt
    }

    fn advance_to(&mut self, end: u64) {
        self.delivered_bytes += end - self.rcv_nxt;
        self.rcv_nxt = end;
    }
}
