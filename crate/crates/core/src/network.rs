//! The simulated network: deployment, per-link channel state, MAC, and
//! traffic, driven by the event queue.
//!
//! A run is organised around four periodic activities:
//!
//! * large-scale epochs redraw LOS state, shadowing and (for the cluster
//!   model) cluster/ray parameters, then re-evaluate cell selection;
//! * beam refreshes re-point every serving pair at its current LOS direction;
//! * slot ticks admit traffic into the RLC buffers, let each BS pick a UE in
//!   round-robin order, draw the channels of every co-scheduled link and
//!   move a transport block out of each scheduled buffer;
//! * TCP acknowledgements and retransmission timers run as their own events.

use std::collections::VecDeque;

use num_complex::Complex64;
use rand::seq::index::sample as sample_indices;
use serde::{Deserialize, Serialize};

use crate::beamforming::{weight_vector, BeamformingMode, UpaConfig};
use crate::engine::{EventHandle, EventQueue, RandomStream, RngStreams, SimTime};
use crate::error::{Error, Result};
use crate::fading::{
    channel_gain, scm_draw_large_scale, ChannelModel, ChannelSample, LinkInputs, ScmLink,
    SmallScale, WorkCounter,
};
use crate::geometry::{Direction, Vec3};
use crate::link::{
    dbm_to_mw, lin_to_db, sinr_from_powers_db, spectral_efficiency, transport_block_bits, Received,
};
use crate::mac::{
    select_serving_bs, CellSelection, Departure, LatencyReport, LatencyTracker, LinkAdaptation,
    Measurement, OuterLoop, Pdu, RlcBuffer, RoundRobin, Serving,
};
use crate::propagation::{pathloss_db, LinkPropagation, LosCondition, LosState};
use crate::scenario::{
    build_deployment, position_at, velocity_at, Deployment, ScenarioConfig, ScenarioKind,
};
use crate::transport::{LossKind, SlowStartExit, TcpReceiver, TcpSender, UdpSource};

/// Label of the per-link fading substream; slot `k` uses substream `k`.
pub fn fading_label(bs: usize, ue: usize) -> String {
    format!("fading/{bs}-{ue}")
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Number of slots, chosen at random, whose SINR evaluations are
    /// recorded in full for offline checking.
    pub probe_slots: usize,
}

/// Everything that entered one SINR evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeLink {
    pub bs: usize,
    pub bs_position: Vec3,
    pub ue_position: Vec3,
    pub tx_power_dbm: f64,
    pub condition: LosCondition,
    pub shadowing_db: f64,
    /// Where the transmitting BS points: its own scheduled UE.
    pub bs_steer: Direction,
    pub ue_steer: Direction,
    pub pathloss_db: f64,
    pub bf_gain_db: f64,
    pub fading: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SinrProbe {
    pub slot: u64,
    pub t_s: f64,
    pub ue: usize,
    pub serving_bs: usize,
    pub noise_mw: f64,
    pub sinr_db: f64,
    /// Every transmitting BS as seen at this UE; the serving link first.
    pub links: Vec<ProbeLink>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TcpSummary {
    pub first_exit: Option<SlowStartExit>,
    /// Sender-side loss detections: time and kind.
    pub detections: Vec<(f64, LossKind)>,
    pub first_rlc_drop_s: Option<f64>,
    pub first_air_loss_s: Option<f64>,
    pub retransmissions: u64,
    pub final_cwnd_bytes: u64,
}

impl TcpSummary {
    /// Time of the first packet loss in the network, of either kind.
    pub fn first_loss_s(&self) -> Option<f64> {
        match (self.first_rlc_drop_s, self.first_air_loss_s) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }
}

/// Per-UE counters over one run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UeStats {
    pub delivered_bytes: u64,
    pub scheduled_slots: u64,
    pub tb_failures: u64,
    /// Sum of the SINR (dB) over scheduled slots.
    pub sinr_db_sum: f64,
}

impl UeStats {
    pub fn mean_sinr_db(&self) -> f64 {
        self.sinr_db_sum / self.scheduled_slots.max(1) as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub scenario: ScenarioKind,
    pub model: ChannelModel,
    pub load: u64,
    pub seed: u64,
    pub n_ue: usize,
    pub duration_s: f64,
    pub end_time_s: f64,
    pub throughput_bps: f64,
    pub latency: LatencyReport,
    pub offered_bytes: u64,
    pub delivered_bytes: u64,
    pub rlc_drops: u64,
    pub dropped_bytes: u64,
    pub air_losses: u64,
    pub air_lost_bytes: u64,
    pub buffered_bytes: u64,
    pub handovers: u64,
    pub slots_scheduled: u64,
    pub tb_failures: u64,
    pub wall_clock_s: f64,
    pub events: u64,
    pub work: WorkCounter,
    pub tcp: Option<TcpSummary>,
    pub probes: Vec<SinrProbe>,
    pub per_ue: Vec<UeStats>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Ev {
    LargeScale,
    Beam,
    Slot(u64),
    Acks(usize),
    Rto(usize),
}

struct LinkState {
    prop: LinkPropagation,
    los: LosState,
    /// Path loss plus shadowing, dB.
    pathloss_db: f64,
    los_stream: RandomStream,
    fading_stream: RandomStream,
    scm_stream: RandomStream,
    scm: Option<ScmLink>,
    /// UE position and LOS state when the clusters were last drawn.
    scm_anchor: Option<(Vec3, LosCondition)>,
}

struct UdpFlow {
    source: UdpSource,
    next: u64,
    offset: SimTime,
}

struct TcpFlow {
    sender: TcpSender,
    receiver: TcpReceiver,
    /// Segments on the core link: arrival time at the BS, sequence, length.
    in_core: VecDeque<(SimTime, u64, u32)>,
    core_free: SimTime,
    pending_acks: VecDeque<(SimTime, Vec<u64>)>,
    rto: Option<EventHandle>,
    first_rlc_drop: Option<SimTime>,
    first_air_loss: Option<SimTime>,
}

enum Traffic {
    Udp(Vec<UdpFlow>),
    Tcp(Vec<TcpFlow>),
}

/// Per-slot transmission: BS, scheduled UE.
#[derive(Clone, Copy, Debug)]
struct Tx {
    bs: usize,
    ue: usize,
}

pub struct Network<'a> {
    cfg: &'a ScenarioConfig,
    seed: u64,
    dep: Deployment,
    n_bs: usize,
    n_ue: usize,
    slot: SimTime,
    end: SimTime,
    noise_mw: f64,
    noise_dbm: f64,
    bs_array: UpaConfig,
    ue_array: UpaConfig,
    links: Vec<LinkState>,
    /// BS-side steering per link, used when the BS serves that UE.
    bs_steer: Vec<Direction>,
    bs_weights: Vec<Vec<Complex64>>,
    ue_steer: Vec<Direction>,
    ue_weights: Vec<Vec<Complex64>>,
    serving: Vec<Option<Serving>>,
    served_by: Vec<Vec<usize>>,
    rr: Vec<RoundRobin>,
    rlc: Vec<RlcBuffer>,
    cqi: Vec<Option<f64>>,
    olla: Vec<OuterLoop>,
    traffic: Traffic,
    latency: LatencyTracker,
    offered_bytes: u64,
    delivered_bytes: u64,
    air_losses: u64,
    air_lost_bytes: u64,
    handovers: u64,
    slots_scheduled: u64,
    tb_failures: u64,
    work: WorkCounter,
    probe_slots: Vec<u64>,
    probes: Vec<SinrProbe>,
    departures: Vec<Departure>,
    per_ue: Vec<UeStats>,
}

impl<'a> Network<'a> {
    pub fn new(cfg: &'a ScenarioConfig, seed: u64, options: &RunOptions) -> Result<Self> {
        cfg.validate()?;
        if cfg.model == ChannelModel::Scm && cfg.beamforming.mode != BeamformingMode::Upa {
            return Err(Error::invalid(
                "the cluster model needs planar-array beamforming",
            ));
        }
        let streams = RngStreams::new(seed);
        let dep = build_deployment(cfg, &mut streams.stream("placement"))?;
        let n_bs = dep.base_stations.len();
        let n_ue = dep.ues.len();
        let slot = cfg.frame.slot()?;
        let end = SimTime::from_secs(cfg.duration_s)?;
        let noise_dbm = cfg.noise.noise_dbm(cfg.bandwidth_hz)?;
        let bs_array = UpaConfig::square(cfg.beamforming.bs_array_side)?;
        let ue_array = UpaConfig::square(cfg.beamforming.ue_array_side)?;

        let mut links = Vec::with_capacity(n_bs * n_ue);
        for b in 0..n_bs {
            for u in 0..n_ue {
                links.push(LinkState {
                    prop: LinkPropagation::new(),
                    los: LosState {
                        condition: LosCondition::Los,
                        shadowing_db: 0.0,
                        last_update: 0.0,
                    },
                    pathloss_db: f64::INFINITY,
                    los_stream: streams.stream(&format!("los/{b}-{u}")),
                    fading_stream: streams.stream(&fading_label(b, u)),
                    scm_stream: streams.stream(&format!("scm/{b}-{u}")),
                    scm: None,
                    scm_anchor: None,
                });
            }
        }

        let rlc = (0..n_ue)
            .map(|_| RlcBuffer::new(dep.b_rlc_bytes))
            .collect::<Result<Vec<_>>>()?;
        let traffic = match cfg.scenario {
            ScenarioKind::UdpGrid => {
                let source = UdpSource::new(cfg.udp_rate_bps, cfg.packet_bytes)?;
                let spacing = source.interval_s() / n_ue as f64;
                Traffic::Udp(
                    (0..n_ue)
                        .map(|u| UdpFlow {
                            source,
                            next: 0,
                            offset: SimTime::from_nanos((u as f64 * spacing * 1e9).round() as u64),
                        })
                        .collect(),
                )
            }
            ScenarioKind::TcpLine => Traffic::Tcp(
                (0..n_ue)
                    .map(|_| {
                        Ok(TcpFlow {
                            sender: TcpSender::new(&cfg.tcp)?,
                            receiver: TcpReceiver::default(),
                            in_core: VecDeque::new(),
                            core_free: SimTime::ZERO,
                            pending_acks: VecDeque::new(),
                            rto: None,
                            first_rlc_drop: None,
                            first_air_loss: None,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?,
            ),
        };

        let total_slots = end.as_nanos() / slot.as_nanos();
        let probe_slots = if options.probe_slots > 0 && total_slots > 0 {
            let mut s = streams.stream("probes");
            let n = options.probe_slots.min(total_slots as usize);
            let mut v: Vec<u64> = sample_indices(&mut s, total_slots as usize, n)
                .into_iter()
                .map(|i| i as u64)
                .collect();
            v.sort_unstable();
            v
        } else {
            Vec::new()
        };

        let zero_dir = Direction::new(std::f64::consts::FRAC_PI_2, 0.0);
        Ok(Network {
            cfg,
            seed,
            n_bs,
            n_ue,
            slot,
            end,
            noise_mw: dbm_to_mw(noise_dbm),
            noise_dbm,
            bs_weights: vec![weight_vector(zero_dir, &bs_array); n_bs * n_ue],
            ue_weights: vec![weight_vector(zero_dir, &ue_array); n_ue],
            bs_array,
            ue_array,
            links,
            bs_steer: vec![zero_dir; n_bs * n_ue],
            ue_steer: vec![zero_dir; n_ue],
            serving: vec![None; n_ue],
            served_by: vec![Vec::new(); n_bs],
            rr: vec![RoundRobin::default(); n_bs],
            rlc,
            cqi: vec![None; n_ue],
            olla: vec![OuterLoop::default(); n_ue],
            traffic,
            latency: LatencyTracker::default(),
            offered_bytes: 0,
            delivered_bytes: 0,
            air_losses: 0,
            air_lost_bytes: 0,
            handovers: 0,
            slots_scheduled: 0,
            tb_failures: 0,
            work: WorkCounter::default(),
            probe_slots,
            probes: Vec::new(),
            departures: Vec::new(),
            per_ue: vec![UeStats::default(); n_ue],
            dep,
        })
    }

    pub fn deployment(&self) -> &Deployment {
        &self.dep
    }

    fn idx(&self, bs: usize, ue: usize) -> usize {
        bs * self.n_ue + ue
    }

    fn ue_pos(&self, ue: usize, t: f64) -> Vec3 {
        position_at(&self.dep.ues[ue], t)
    }

    fn bs_pos(&self, bs: usize) -> Vec3 {
        self.dep.base_stations[bs].position
    }

    /// Runs to the configured horizon.
    pub fn run(mut self) -> Result<RunOutcome> {
        let mut queue: EventQueue<Ev> = EventQueue::new();
        queue.schedule(SimTime::ZERO, Ev::LargeScale)?;
        let beam = SimTime::from_secs(self.cfg.beamforming.period_s)?;
        if beam <= self.end {
            queue.schedule(beam, Ev::Beam)?;
        }
        queue.schedule(SimTime::ZERO, Ev::Slot(0))?;
        if let Traffic::Tcp(_) = self.traffic {
            for u in 0..self.n_ue {
                self.pump_tcp(u, SimTime::ZERO, &mut queue)?;
            }
        }
        let epoch = SimTime::from_secs(self.cfg.propagation.epoch_s)?;
        let end = self.end;
        let stats = queue.run_until(end, |q, ev| {
            let now = ev.fire_time;
            match ev.payload {
                Ev::LargeScale => {
                    self.large_scale(now)?;
                    if now + epoch <= end {
                        q.schedule(now + epoch, Ev::LargeScale)?;
                    }
                }
                Ev::Beam => {
                    self.refresh_beams(now);
                    if now + beam <= end {
                        q.schedule(now + beam, Ev::Beam)?;
                    }
                }
                Ev::Slot(k) => {
                    self.run_slot(k, now, q)?;
                    if now + self.slot + self.slot <= end {
                        q.schedule(now + self.slot, Ev::Slot(k + 1))?;
                    }
                }
                Ev::Acks(u) => self.deliver_acks(u, now, q)?,
                Ev::Rto(u) => self.on_rto(u, now, q)?,
            }
            Ok(())
        })?;
        Ok(self.finish(stats.events, stats.end_time, stats.wall_clock.as_secs_f64()))
    }

    fn large_scale(&mut self, now: SimTime) -> Result<()> {
        let t = now.as_secs();
        let cfg = self.cfg;
        let fc_ghz = cfg.carrier_hz / 1e9;
        for b in 0..self.n_bs {
            let bs = self.bs_pos(b);
            for u in 0..self.n_ue {
                let ue = self.ue_pos(u, t);
                let velocity = velocity_at(&self.dep.ues[u], t);
                let i = self.idx(b, u);
                let link = &mut self.links[i];
                let d = bs - ue;
                let los =
                    link.prop
                        .update(d.norm_2d(), ue, t, &cfg.propagation, &mut link.los_stream)?;
                let pl = pathloss_db(
                    d.norm(),
                    ue.z,
                    los.condition,
                    fc_ghz,
                    &cfg.propagation.pathloss,
                )?;
                link.los = los;
                link.pathloss_db = pl + los.shadowing_db;
                if cfg.model == ChannelModel::Scm {
                    let (departure, arrival) = ((ue - bs).direction(), d.direction());
                    let keep = match (&link.scm, link.scm_anchor) {
                        (Some(_), Some((at, condition))) => {
                            condition == los.condition && (ue - at).norm() < cfg.scm.decorrelation_m
                        }
                        _ => false,
                    };
                    link.scm = Some(if keep {
                        let prev = link.scm.as_ref().expect("kept link exists");
                        prev.carried_to(
                            t,
                            departure,
                            arrival,
                            &self.ue_array,
                            &self.bs_array,
                            velocity,
                            cfg.wavelength_m(),
                        )
                    } else {
                        link.scm_anchor = Some((ue, los.condition));
                        let ls = scm_draw_large_scale(
                            departure,
                            arrival,
                            los.condition,
                            &cfg.scm,
                            t,
                            &mut link.scm_stream,
                        )?;
                        ScmLink::prepare(
                            ls,
                            &self.ue_array,
                            &self.bs_array,
                            velocity,
                            cfg.wavelength_m(),
                        )
                        .with_band(cfg.bandwidth_hz, cfg.scm.subbands)
                    });
                }
            }
        }
        self.select_cells(t)
    }

    fn select_cells(&mut self, t: f64) -> Result<()> {
        let bf = &self.cfg.beamforming;
        let array_gain =
            bf.max_endpoint_gain_db(&self.bs_array) + bf.max_endpoint_gain_db(&self.ue_array);
        let rule = CellSelection {
            hysteresis_db: self.cfg.handover_hysteresis_db,
            sinr_floor_db: self.cfg.rate_map.sinr_floor_db,
            noise_dbm: self.noise_dbm,
            has_fallback: self.dep.fallback.is_some(),
        };
        for u in 0..self.n_ue {
            let measurements: Vec<Measurement> = (0..self.n_bs)
                .map(|b| Measurement {
                    bs: b,
                    rx_power_dbm: self.dep.base_stations[b].tx_power_dbm + array_gain
                        - self.links[self.idx(b, u)].pathloss_db,
                })
                .collect();
            let previous = self.serving[u];
            let choice = select_serving_bs(&measurements, previous, &rule)?;
            if previous == Some(choice) {
                continue;
            }
            if previous.is_some() {
                self.handovers += 1;
            }
            if let Some(Serving::Bs(old)) = previous {
                self.served_by[old].retain(|&x| x != u);
            }
            if let Serving::Bs(new) = choice {
                let list = &mut self.served_by[new];
                let at = list.partition_point(|&x| x < u);
                list.insert(at, u);
                self.point_beams(new, u, t);
            }
            self.serving[u] = Some(choice);
            self.cqi[u] = None;
            self.olla[u].reset();
        }
        Ok(())
    }

    fn point_beams(&mut self, b: usize, u: usize, t: f64) {
        let bs = self.bs_pos(b);
        let ue = self.ue_pos(u, t);
        let i = self.idx(b, u);
        self.bs_steer[i] = (ue - bs).direction();
        self.ue_steer[u] = (bs - ue).direction();
        if self.cfg.model == ChannelModel::Scm {
            self.bs_weights[i] = weight_vector(self.bs_steer[i], &self.bs_array);
            self.ue_weights[u] = weight_vector(self.ue_steer[u], &self.ue_array);
        }
    }

    fn refresh_beams(&mut self, now: SimTime) {
        let t = now.as_secs();
        for u in 0..self.n_ue {
            if let Some(Serving::Bs(b)) = self.serving[u] {
                self.point_beams(b, u, t);
            }
        }
    }

    /// Channel from `bs`, steered at its own scheduled UE `target`, to `ue`.
    fn sample(
        &mut self,
        bs: usize,
        target: usize,
        ue: usize,
        slot: u64,
        t: f64,
    ) -> Result<ChannelSample> {
        let i = self.idx(bs, ue);
        let cfg = self.cfg;
        let steer_i = self.idx(bs, target);
        let link = &mut self.links[i];
        match cfg.model.nakagami() {
            Some(_) => {
                let bs_pos = self.dep.base_stations[bs].position;
                let ue_pos = position_at(&self.dep.ues[ue], t);
                let bf = &cfg.beamforming;
                let gain = bf.endpoint_gain_db(
                    &self.bs_array,
                    (ue_pos - bs_pos).direction(),
                    self.bs_steer[steer_i],
                ) + bf.endpoint_gain_db(
                    &self.ue_array,
                    (bs_pos - ue_pos).direction(),
                    self.ue_steer[ue],
                );
                link.fading_stream.reseat(slot);
                channel_gain(
                    cfg.model,
                    LinkInputs {
                        pathloss_db: link.pathloss_db,
                        condition: link.los.condition,
                        bf_gain_db: gain,
                        t,
                    },
                    SmallScale::Nakagami(&mut link.fading_stream),
                    &mut self.work,
                )
            }
            None => {
                let scm = link
                    .scm
                    .as_ref()
                    .ok_or(Error::MissingChannelSample { bs, ue })?;
                channel_gain(
                    cfg.model,
                    LinkInputs {
                        pathloss_db: link.pathloss_db,
                        condition: link.los.condition,
                        bf_gain_db: 0.0,
                        t,
                    },
                    SmallScale::Scm {
                        link: scm,
                        w_tx: &self.bs_weights[steer_i],
                        w_rx: &self.ue_weights[ue],
                        epoch: cfg.propagation.epoch_s,
                    },
                    &mut self.work,
                )
            }
        }
    }

    fn admit_traffic(&mut self, now: SimTime) {
        match &mut self.traffic {
            Traffic::Udp(flows) => {
                for (u, flow) in flows.iter_mut().enumerate() {
                    loop {
                        let at = flow.source.emission_time(flow.offset, flow.next);
                        if at > now {
                            break;
                        }
                        let pdu = Pdu {
                            tag: flow.next,
                            bytes: flow.source.packet_bytes,
                            pdcp_in: at,
                        };
                        self.offered_bytes += pdu.bytes as u64;
                        self.rlc[u].enqueue(pdu, at);
                        flow.next += 1;
                    }
                }
            }
            Traffic::Tcp(flows) => {
                for (u, flow) in flows.iter_mut().enumerate() {
                    while let Some(&(at, seq, len)) = flow.in_core.front() {
                        if at > now {
                            break;
                        }
                        flow.in_core.pop_front();
                        self.offered_bytes += len as u64;
                        let pdu = Pdu {
                            tag: seq,
                            bytes: len,
                            pdcp_in: at,
                        };
                        if self.rlc[u].enqueue(pdu, at) == crate::mac::Enqueue::Dropped
                            && flow.first_rlc_drop.is_none()
                        {
                            flow.first_rlc_drop = Some(at);
                        }
                    }
                }
            }
        }
    }

    fn run_slot(&mut self, k: u64, now: SimTime, queue: &mut EventQueue<Ev>) -> Result<()> {
        self.admit_traffic(now);
        let t = now.as_secs();
        let slot_end = now + self.slot;

        let mut txs: Vec<Tx> = Vec::with_capacity(self.n_bs);
        for b in 0..self.n_bs {
            let rlc = &self.rlc;
            if let Some(u) = self.rr[b].next(&self.served_by[b], |u| !rlc[u].is_empty()) {
                txs.push(Tx { bs: b, ue: u });
            }
        }
        let probing = self.probe_slots.binary_search(&k).is_ok();

        // received power of every active transmitter at every scheduled UE
        let mut outcomes = Vec::with_capacity(txs.len());
        for v in 0..txs.len() {
            let victim = txs[v];
            let mut signal = 0.0;
            let mut interference = 0.0;
            let mut probe_links = Vec::new();
            let mut serving_link = None;
            for tx in &txs {
                let sample = self.sample(tx.bs, tx.ue, victim.ue, k, t)?;
                let rx = Received {
                    tx_power_dbm: self.dep.base_stations[tx.bs].tx_power_dbm,
                    sample,
                };
                if tx.bs == victim.bs {
                    signal = rx.power_mw();
                } else {
                    interference += rx.power_mw();
                }
                if probing {
                    let link = &self.links[self.idx(tx.bs, victim.ue)];
                    let pl = ProbeLink {
                        bs: tx.bs,
                        bs_position: self.bs_pos(tx.bs),
                        ue_position: self.ue_pos(victim.ue, t),
                        tx_power_dbm: rx.tx_power_dbm,
                        condition: link.los.condition,
                        shadowing_db: link.los.shadowing_db,
                        bs_steer: self.bs_steer[self.idx(tx.bs, tx.ue)],
                        ue_steer: self.ue_steer[victim.ue],
                        pathloss_db: sample.pathloss_db,
                        bf_gain_db: sample.bf_gain_db,
                        fading: sample.fading,
                    };
                    if tx.bs == victim.bs {
                        serving_link = Some(pl);
                    } else {
                        probe_links.push(pl);
                    }
                }
            }
            let sinr = sinr_from_powers_db(signal, interference, self.noise_mw);
            debug_assert!(sinr <= lin_to_db(signal / self.noise_mw) + 1e-9);
            if let Some(serving) = serving_link {
                probe_links.insert(0, serving);
                self.probes.push(SinrProbe {
                    slot: k,
                    t_s: t,
                    ue: victim.ue,
                    serving_bs: victim.bs,
                    noise_mw: self.noise_mw,
                    sinr_db: sinr,
                    links: probe_links,
                });
            }
            outcomes.push((victim, sinr));
        }

        let map = &self.cfg.rate_map;
        let symbols = self.cfg.frame.data_symbols();
        for (tx, sinr) in outcomes {
            let (se, ok) = match self.cfg.link_adaptation {
                LinkAdaptation::Ideal => (spectral_efficiency(sinr, map), true),
                LinkAdaptation::Reported {
                    margin_db,
                    olla_step_db,
                    bler_target,
                } => {
                    let reported = self.cqi[tx.ue].unwrap_or(sinr);
                    let olla = &mut self.olla[tx.ue];
                    let se = spectral_efficiency(reported - margin_db - olla.offset_db(), map);
                    let ok = spectral_efficiency(sinr, map) >= se;
                    // a delivered TB at the capped rate says nothing about headroom
                    if se > 0.0 && !(ok && se >= map.se_cap) {
                        olla.update(ok, olla_step_db, bler_target, margin_db);
                    }
                    (se, ok)
                }
            };
            self.cqi[tx.ue] = Some(sinr);
            self.slots_scheduled += 1;
            let stats = &mut self.per_ue[tx.ue];
            stats.scheduled_slots += 1;
            stats.sinr_db_sum += sinr;
            stats.tb_failures += u64::from(!ok);
            let bits = transport_block_bits(se, symbols, &self.cfg.frame, self.cfg.bandwidth_hz);
            if bits == 0 {
                continue;
            }
            if !ok {
                self.tb_failures += 1;
            }
            self.drain(tx.ue, bits, now, slot_end, ok, queue)?;
        }

        let fallback_bits = (self.cfg.fallback_rate_bps * self.slot.as_secs()).floor() as u64;
        for u in 0..self.n_ue {
            if self.serving[u] == Some(Serving::Fallback) && !self.rlc[u].is_empty() {
                self.drain(u, fallback_bits, now, slot_end, true, queue)?;
            }
        }
        Ok(())
    }

    fn drain(
        &mut self,
        u: usize,
        bits: u64,
        now: SimTime,
        slot_end: SimTime,
        ok: bool,
        queue: &mut EventQueue<Ev>,
    ) -> Result<()> {
        let mut out = std::mem::take(&mut self.departures);
        out.clear();
        self.rlc[u].dequeue(bits, now, ok, &mut out);
        let mut acks = Vec::new();
        for d in &out {
            if d.delivered {
                self.delivered_bytes += d.pdu.bytes as u64;
                self.per_ue[u].delivered_bytes += d.pdu.bytes as u64;
                self.latency.record(d.pdu.pdcp_in, d.mac_in, slot_end);
            } else {
                self.air_losses += 1;
                self.air_lost_bytes += d.pdu.bytes as u64;
            }
            if let Traffic::Tcp(flows) = &mut self.traffic {
                let flow = &mut flows[u];
                if d.delivered {
                    acks.push(flow.receiver.on_segment(d.pdu.tag, d.pdu.bytes));
                } else if flow.first_air_loss.is_none() {
                    flow.first_air_loss = Some(slot_end);
                }
            }
        }
        self.departures = out;
        if !acks.is_empty() {
            if let Traffic::Tcp(flows) = &mut self.traffic {
                let delay =
                    SimTime::from_secs(self.cfg.tcp.uplink_delay_s + self.cfg.tcp.core_delay_s)?;
                let at = slot_end + delay;
                flows[u].pending_acks.push_back((at, acks));
                queue.schedule(at, Ev::Acks(u))?;
            }
        }
        Ok(())
    }

    fn deliver_acks(&mut self, u: usize, now: SimTime, queue: &mut EventQueue<Ev>) -> Result<()> {
        let Traffic::Tcp(flows) = &mut self.traffic else {
            return Ok(());
        };
        let flow = &mut flows[u];
        let (at, acks) = flow
            .pending_acks
            .pop_front()
            .ok_or_else(|| Error::invalid("ACK event without ACKs"))?;
        debug_assert_eq!(at, now);
        for ack in acks {
            let actions = flow.sender.on_ack(ack, now)?;
            if let Some((seq, len)) = actions.retransmit {
                Self::push_core(flow, &self.cfg.tcp, seq, len, now)?;
            }
            match actions.timer {
                Some(true) => Self::restart_rto(flow, u, now, queue)?,
                Some(false) => {
                    if let Some(h) = flow.rto.take() {
                        queue.cancel(h);
                    }
                }
                None => {}
            }
        }
        self.pump_tcp(u, now, queue)
    }

    fn on_rto(&mut self, u: usize, now: SimTime, queue: &mut EventQueue<Ev>) -> Result<()> {
        let Traffic::Tcp(flows) = &mut self.traffic else {
            return Ok(());
        };
        let flow = &mut flows[u];
        flow.rto = None;
        flow.sender.on_timeout(now);
        self.pump_tcp(u, now, queue)
    }

    fn restart_rto(
        flow: &mut TcpFlow,
        u: usize,
        now: SimTime,
        queue: &mut EventQueue<Ev>,
    ) -> Result<()> {
        if let Some(h) = flow.rto.take() {
            queue.cancel(h);
        }
        flow.rto = Some(queue.schedule(now + flow.sender.rto(), Ev::Rto(u))?);
        Ok(())
    }

    fn push_core(
        flow: &mut TcpFlow,
        tcp: &crate::transport::TcpConfig,
        seq: u64,
        len: u32,
        now: SimTime,
    ) -> Result<()> {
        let serialise = SimTime::from_secs(len as f64 * 8.0 / tcp.core_rate_bps)?;
        let departs = flow.core_free.max(now) + serialise;
        flow.core_free = departs;
        let arrives = departs + SimTime::from_secs(tcp.core_delay_s)?;
        flow.in_core.push_back((arrives, seq, len));
        Ok(())
    }

    /// Sends whatever the congestion window allows.
    fn pump_tcp(&mut self, u: usize, now: SimTime, queue: &mut EventQueue<Ev>) -> Result<()> {
        let Traffic::Tcp(flows) = &mut self.traffic else {
            return Ok(());
        };
        let flow = &mut flows[u];
        let mut sent = false;
        while let Some((seq, len)) = flow.sender.next_segment(now) {
            Self::push_core(flow, &self.cfg.tcp, seq, len, now)?;
            sent = true;
        }
        if sent && flow.rto.is_none() {
            Self::restart_rto(flow, u, now, queue)?;
        }
        Ok(())
    }

    fn finish(self, events: u64, end: SimTime, wall_clock_s: f64) -> RunOutcome {
        let buffered: u64 = self.rlc.iter().map(RlcBuffer::backlog_bytes).sum();
        let rlc_drops = self.rlc.iter().map(RlcBuffer::drops).sum();
        let dropped_bytes = self.rlc.iter().map(RlcBuffer::dropped_bytes).sum();
        let duration = self.cfg.duration_s;
        let (goodput_bytes, tcp) = match &self.traffic {
            Traffic::Udp(_) => (self.delivered_bytes, None),
            Traffic::Tcp(flows) => {
                let bytes = flows.iter().map(|f| f.receiver.delivered_bytes()).sum();
                let f = &flows[0];
                let summary = TcpSummary {
                    first_exit: f.sender.state.slow_start_exits().first().copied(),
                    detections: f.sender.losses().to_vec(),
                    first_rlc_drop_s: f.first_rlc_drop.map(SimTime::as_secs),
                    first_air_loss_s: f.first_air_loss.map(SimTime::as_secs),
                    retransmissions: f.sender.retransmissions(),
                    final_cwnd_bytes: f.sender.state.cwnd,
                };
                (bytes, Some(summary))
            }
        };
        RunOutcome {
            scenario: self.cfg.scenario,
            model: self.cfg.model,
            load: self.cfg.load(),
            seed: self.seed,
            n_ue: self.n_ue,
            duration_s: duration,
            end_time_s: end.as_secs(),
            throughput_bps: goodput_bytes as f64 * 8.0 / duration / self.n_ue as f64,
            latency: self.latency.report(),
            offered_bytes: self.offered_bytes,
            delivered_bytes: self.delivered_bytes,
            rlc_drops,
            dropped_bytes,
            air_losses: self.air_losses,
            air_lost_bytes: self.air_lost_bytes,
            buffered_bytes: buffered,
            handovers: self.handovers,
            slots_scheduled: self.slots_scheduled,
            tb_failures: self.tb_failures,
            wall_clock_s,
            events,
            work: self.work,
            tcp,
            probes: self.probes,
            per_ue: self.per_ue,
        }
    }
}

/// Builds and runs one (config, seed) cell.
pub fn simulate(cfg: &ScenarioConfig, seed: u64, options: &RunOptions) -> Result<RunOutcome> {
    Network::new(cfg, seed, options)?.run()
}
