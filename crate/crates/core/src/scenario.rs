//! Experiment configuration and the two deployments: a five-cell UDP grid
//! and a single mobile UE on a line served by three mmWave cells plus a
//! low-rate fallback cell.

use std::f64::consts::TAU;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::beamforming::{BeamformingConfig, UpaConfig};
use crate::engine::RandomStream;
use crate::error::{Error, Result};
use crate::fading::{ChannelModel, ScmConfig};
use crate::geometry::Vec3;
use crate::link::{NoiseConfig, RateMap};
use crate::mac::{FrameConfig, LinkAdaptation};
use crate::propagation::PropagationConfig;
use crate::transport::TcpConfig;

pub const SUPPORTED_UES_PER_BS: [usize; 3] = [2, 5, 10];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    UdpGrid,
    TcpLine,
}

impl ScenarioKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioKind::UdpGrid => "udp-grid",
            ScenarioKind::TcpLine => "tcp-line",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LayoutConfig {
    pub grid_side_m: f64,
    pub disc_radius_m: f64,
    pub bs_height_m: f64,
    pub ue_height_m: f64,
    pub line_length_m: f64,
    pub ue_speed_mps: f64,
    /// Positions of the mmWave BSs along the line.
    pub bs_offsets_m: Vec<f64>,
    /// Distance of the mmWave BSs from the line.
    pub bs_lateral_m: f64,
}

impl Default for LayoutConfig {
    fn default() -> Self {
        LayoutConfig {
            grid_side_m: 200.0,
            disc_radius_m: 100.0,
            bs_height_m: 10.0,
            ue_height_m: 1.5,
            line_length_m: 100.0,
            ue_speed_mps: 2.0,
            bs_offsets_m: vec![25.0, 50.0, 75.0],
            bs_lateral_m: 20.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: ScenarioKind,
    pub n_ue_per_bs: usize,
    /// Restrict `n_ue_per_bs` to the supported set.
    pub strict: bool,
    pub udp_rate_bps: f64,
    pub packet_bytes: u32,
    pub b_rlc_bytes: u64,
    pub duration_s: f64,
    pub seeds: Vec<u64>,
    pub model: ChannelModel,
    pub carrier_hz: f64,
    pub bandwidth_hz: f64,
    pub tx_power_dbm: f64,
    pub fallback_rate_bps: f64,
    pub handover_hysteresis_db: f64,
    pub layout: LayoutConfig,
    pub frame: FrameConfig,
    pub noise: NoiseConfig,
    pub rate_map: RateMap,
    pub link_adaptation: LinkAdaptation,
    pub propagation: PropagationConfig,
    pub beamforming: BeamformingConfig,
    pub scm: ScmConfig,
    pub tcp: TcpConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            scenario: ScenarioKind::UdpGrid,
            n_ue_per_bs: 10,
            strict: true,
            udp_rate_bps: 400e6,
            packet_bytes: 1400,
            b_rlc_bytes: 10_000_000,
            duration_s: 10.0,
            seeds: (1..=20).collect(),
            model: ChannelModel::Scm,
            carrier_hz: 28e9,
            bandwidth_hz: 1e9,
            tx_power_dbm: 30.0,
            fallback_rate_bps: 10e6,
            handover_hysteresis_db: 3.0,
            layout: LayoutConfig::default(),
            frame: FrameConfig::default(),
            noise: NoiseConfig::default(),
            rate_map: RateMap::default(),
            link_adaptation: LinkAdaptation::default(),
            propagation: PropagationConfig::default(),
            beamforming: BeamformingConfig::default(),
            scm: ScmConfig::default(),
            tcp: TcpConfig::default(),
        }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} must be positive, got {v}")))
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.scenario == ScenarioKind::UdpGrid {
            if self.n_ue_per_bs == 0 {
                return Err(Error::invalid("n_ue_per_bs must be at least 1"));
            }
            if self.strict && !SUPPORTED_UES_PER_BS.contains(&self.n_ue_per_bs) {
                return Err(Error::invalid(format!(
                    "n_ue_per_bs = {} is not one of {:?} (set strict = false to allow it)",
                    self.n_ue_per_bs, SUPPORTED_UES_PER_BS
                )));
            }
        }
        positive("duration_s", self.duration_s)?;
        positive("udp_rate_bps", self.udp_rate_bps)?;
        positive("carrier_hz", self.carrier_hz)?;
        positive("bandwidth_hz", self.bandwidth_hz)?;
        positive("fallback_rate_bps", self.fallback_rate_bps)?;
        positive("disc_radius_m", self.layout.disc_radius_m)?;
        positive("bs_height_m", self.layout.bs_height_m)?;
        positive("ue_height_m", self.layout.ue_height_m)?;
        positive("line_length_m", self.layout.line_length_m)?;
        if self.b_rlc_bytes == 0 {
            return Err(Error::invalid("b_rlc_bytes must be positive"));
        }
        if self.packet_bytes == 0 || self.packet_bytes as u64 > self.b_rlc_bytes {
            return Err(Error::invalid(
                "packet_bytes must be positive and fit in the RLC buffer",
            ));
        }
        if self.seeds.is_empty() {
            return Err(Error::invalid("at least one seed is required"));
        }
        if !(self.tx_power_dbm.is_finite()) || !(self.handover_hysteresis_db >= 0.0) {
            return Err(Error::invalid(
                "tx power must be finite and hysteresis non-negative",
            ));
        }
        if !(self.layout.ue_speed_mps >= 0.0) {
            return Err(Error::invalid("UE speed must be non-negative"));
        }
        if self.scenario == ScenarioKind::TcpLine && self.layout.bs_offsets_m.is_empty() {
            return Err(Error::invalid(
                "the line scenario needs at least one mmWave BS",
            ));
        }
        self.link_adaptation.validate()?;
        self.frame.validate()?;
        self.rate_map.validate()?;
        self.noise.noise_dbm(self.bandwidth_hz)?;
        self.propagation.validate()?;
        self.beamforming.validate()?;
        self.scm.validate()?;
        self.tcp.validate()?;
        Ok(())
    }

    pub fn wavelength_m(&self) -> f64 {
        299_792_458.0 / self.carrier_hz
    }

    /// The load column: total UEs for the grid, RLC buffer bytes for the line.
    pub fn load(&self) -> u64 {
        match self.scenario {
            ScenarioKind::UdpGrid => (GRID_SITES * self.n_ue_per_bs) as u64,
            ScenarioKind::TcpLine => self.b_rlc_bytes,
        }
    }

    pub fn with_model(&self, model: ChannelModel) -> Self {
        ScenarioConfig {
            model,
            ..self.clone()
        }
    }
}

pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let cfg: ScenarioConfig =
        serde_json::from_str(text).map_err(|e| Error::invalid(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: impl AsRef<Path>) -> Result<ScenarioConfig> {
    let path = path.as_ref();
    let wrap = |msg: String| Error::Config {
        path: path.to_path_buf(),
        msg,
    };
    let text = std::fs::read_to_string(path).map_err(|e| wrap(e.to_string()))?;
    parse_config(&text).map_err(|e| wrap(e.to_string()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    Bs,
    Ue,
    FallbackBs,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeState {
    pub id: usize,
    pub role: Role,
    pub position: Vec3,
    pub velocity: Vec3,
    pub tx_power_dbm: f64,
    pub array: UpaConfig,
    /// Time after which the node stops moving.
    pub motion_end_s: Option<f64>,
}

impl NodeState {
    fn fixed(id: usize, role: Role, position: Vec3, tx_power_dbm: f64, array: UpaConfig) -> Self {
        NodeState {
            id,
            role,
            position,
            velocity: Vec3::ZERO,
            tx_power_dbm,
            array,
            motion_end_s: None,
        }
    }
}

pub fn position_at(node: &NodeState, t: f64) -> Vec3 {
    let t = t.max(0.0);
    let t = node.motion_end_s.map_or(t, |end| t.min(end));
    node.position + node.velocity * t
}

/// Velocity at time `t`, zero once the node has stopped.
pub fn velocity_at(node: &NodeState, t: f64) -> Vec3 {
    match node.motion_end_s {
        Some(end) if t >= end => Vec3::ZERO,
        _ => node.velocity,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Deployment {
    pub kind: ScenarioKind,
    pub base_stations: Vec<NodeState>,
    pub ues: Vec<NodeState>,
    pub fallback: Option<NodeState>,
    pub b_rlc_bytes: u64,
}

fn arrays(cfg: &ScenarioConfig) -> Result<(UpaConfig, UpaConfig)> {
    Ok((
        UpaConfig::square(cfg.beamforming.bs_array_side)?,
        UpaConfig::square(cfg.beamforming.ue_array_side)?,
    ))
}

/// Base stations in the grid scenario.
pub const GRID_SITES: usize = 5;

/// BSs at the centre and the corners of a square; `n_ue_per_bs` static UEs
/// uniformly placed in a disc around each.
pub fn build_udp_scenario(cfg: &ScenarioConfig, stream: &mut RandomStream) -> Result<Deployment> {
    let n = cfg.n_ue_per_bs;
    if n == 0 || (cfg.strict && !SUPPORTED_UES_PER_BS.contains(&n)) {
        return Err(Error::invalid(format!("unsupported n_ue_per_bs = {n}")));
    }
    let (bs_array, ue_array) = arrays(cfg)?;
    let l = &cfg.layout;
    let h = l.grid_side_m / 2.0;
    let sites: [(f64, f64); GRID_SITES] = [(0.0, 0.0), (-h, -h), (h, -h), (h, h), (-h, h)];
    let base_stations: Vec<NodeState> = sites
        .iter()
        .enumerate()
        .map(|(i, &(x, y))| {
            NodeState::fixed(
                i,
                Role::Bs,
                Vec3::new(x, y, l.bs_height_m),
                cfg.tx_power_dbm,
                bs_array,
            )
        })
        .collect();
    let mut ues = Vec::with_capacity(n * sites.len());
    for bs in &base_stations {
        for _ in 0..n {
            let r = l.disc_radius_m * stream.random::<f64>().sqrt();
            let phi = TAU * stream.random::<f64>();
            let pos = Vec3::new(
                bs.position.x + r * phi.cos(),
                bs.position.y + r * phi.sin(),
                l.ue_height_m,
            );
            ues.push(NodeState::fixed(ues.len(), Role::Ue, pos, 0.0, ue_array));
        }
    }
    Ok(Deployment {
        kind: ScenarioKind::UdpGrid,
        base_stations,
        ues,
        fallback: None,
        b_rlc_bytes: cfg.b_rlc_bytes,
    })
}

/// One UE walking along the x axis from the origin, mmWave BSs beside the
/// path and a fallback cell that always covers it.
pub fn build_tcp_scenario(cfg: &ScenarioConfig) -> Result<Deployment> {
    if cfg.b_rlc_bytes == 0 {
        return Err(Error::invalid("b_rlc_bytes must be positive"));
    }
    let (bs_array, ue_array) = arrays(cfg)?;
    let l = &cfg.layout;
    let base_stations = l
        .bs_offsets_m
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            NodeState::fixed(
                i,
                Role::Bs,
                Vec3::new(x, l.bs_lateral_m, l.bs_height_m),
                cfg.tx_power_dbm,
                bs_array,
            )
        })
        .collect();
    let motion_end_s = if l.ue_speed_mps > 0.0 {
        Some(l.line_length_m / l.ue_speed_mps)
    } else {
        None
    };
    let ue = NodeState {
        id: 0,
        role: Role::Ue,
        position: Vec3::new(0.0, 0.0, l.ue_height_m),
        velocity: Vec3::new(l.ue_speed_mps, 0.0, 0.0),
        tx_power_dbm: 0.0,
        array: ue_array,
        motion_end_s,
    };
    let fallback = NodeState::fixed(
        0,
        Role::FallbackBs,
        Vec3::new(l.line_length_m / 2.0, -l.bs_lateral_m, l.bs_height_m),
        cfg.tx_power_dbm,
        UpaConfig::square(1)?,
    );
    Ok(Deployment {
        kind: ScenarioKind::TcpLine,
        base_stations,
        ues: vec![ue],
        fallback: Some(fallback),
        b_rlc_bytes: cfg.b_rlc_bytes,
    })
}

pub fn build_deployment(cfg: &ScenarioConfig, placement: &mut RandomStream) -> Result<Deployment> {
    match cfg.scenario {
        ScenarioKind::UdpGrid => build_udp_scenario(cfg, placement),
        ScenarioKind::TcpLine => build_tcp_scenario(cfg),
    }
}

#[cfg(test)]
mod tests {
    use std::io::Write;

    use super::*;
    use crate::engine::RngStreams;

    fn udp(n: usize) -> ScenarioConfig {
        ScenarioConfig {
            n_ue_per_bs: n,
            ..ScenarioConfig::default()
        }
    }

    #[test]
    fn grid_sizes() {
        let mut s = RngStreams::new(1).stream("placement");
        let d = build_udp_scenario(&udp(2), &mut s).unwrap();
        assert_eq!(d.base_stations.len(), 5);
        assert_eq!(d.ues.len(), 10);
        let d = build_udp_scenario(&udp(10), &mut s).unwrap();
        assert_eq!(d.ues.len(), 50);
    }

    #[test]
    fn grid_geometry_is_exact() {
        let mut s = RngStreams::new(1).stream("placement");
        let d = build_udp_scenario(&udp(5), &mut s).unwrap();
        let xy: Vec<_> = d
            .base_stations
            .iter()
            .map(|b| (b.position.x, b.position.y))
            .collect();
        assert_eq!(
            xy,
            vec![
                (0.0, 0.0),
                (-100.0, -100.0),
                (100.0, -100.0),
                (100.0, 100.0),
                (-100.0, 100.0)
            ]
        );
        for (i, ue) in d.ues.iter().enumerate() {
            let home = &d.base_stations[i / 5];
            assert!((ue.position - home.position).norm_2d() <= 100.0);
            assert_eq!(ue.velocity, Vec3::ZERO);
            assert!(ue.position.z > 0.0);
        }
    }

    #[test]
    fn placement_is_seed_deterministic() {
        let a = build_udp_scenario(&udp(2), &mut RngStreams::new(9).stream("placement")).unwrap();
        let b = build_udp_scenario(&udp(2), &mut RngStreams::new(9).stream("placement")).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn line_scenario() {
        let cfg = ScenarioConfig {
            scenario: ScenarioKind::TcpLine,
            b_rlc_bytes: 10_000_000,
            ..ScenarioConfig::default()
        };
        let d = build_tcp_scenario(&cfg).unwrap();
        assert_eq!(d.b_rlc_bytes, 10_000_000);
        assert_eq!(d.base_stations.len(), 3);
        assert!(d.fallback.is_some());
        let ue = &d.ues[0];
        assert_eq!(position_at(ue, 0.0), ue.position);
        assert!((position_at(ue, 5.0).x - 10.0).abs() < 1e-12);
        assert!((position_at(ue, 50.0).x - 100.0).abs() < 1e-12);
        assert!((position_at(ue, 80.0).x - 100.0).abs() < 1e-12);
        assert_eq!(velocity_at(ue, 60.0), Vec3::ZERO);
    }

    #[test]
    fn static_node_does_not_move() {
        let n = NodeState::fixed(
            0,
            Role::Ue,
            Vec3::new(1.0, 2.0, 1.5),
            0.0,
            UpaConfig::square(2).unwrap(),
        );
        assert_eq!(position_at(&n, 0.0), position_at(&n, 123.0));
    }

    #[test]
    fn minimal_file_gets_defaults() {
        let cfg = parse_config(r#"{"scenario": "udp-grid"}"#).unwrap();
        assert_eq!(cfg.udp_rate_bps, 400e6);
        assert_eq!(cfg.duration_s, 10.0);
        assert_eq!(cfg.beamforming.period_s, 0.020);
        assert_eq!(cfg.seeds.len(), 20);
    }

    #[test]
    fn unsupported_ue_count() {
        assert!(parse_config(r#"{"scenario": "udp-grid", "n_ue_per_bs": 7}"#).is_err());
        let cfg =
            parse_config(r#"{"scenario": "udp-grid", "n_ue_per_bs": 7, "strict": false}"#).unwrap();
        assert_eq!(cfg.n_ue_per_bs, 7);
    }

    #[test]
    fn bad_values_are_rejected() {
        assert!(parse_config(r#"{"duration_s": -1}"#).is_err());
        assert!(parse_config(r#"{"b_rlc_bytes": 0}"#).is_err());
        assert!(parse_config(r#"{"udp_rate_bps": 0}"#).is_err());
        assert!(parse_config(r#"{"model": "nyu"}"#).is_err());
        assert!(parse_config(r#"{"no_such_key": 1}"#).is_err());
        assert!(parse_config("{").is_err());
    }

    #[test]
    fn load_config_reports_path() {
        let err = load_config("/nonexistent/cfg.json").unwrap_err();
        assert!(err.to_string().contains("/nonexistent/cfg.json"));
        let mut f = tempfile::NamedTempFile::new().unwrap();
        write!(
            f,
            r#"{{"scenario": "tcp-line", "model": "simple-B", "b_rlc_bytes": 1000000}}"#
        )
        .unwrap();
        let cfg = load_config(f.path()).unwrap();
        assert_eq!(cfg.scenario, ScenarioKind::TcpLine);
        assert_eq!(cfg.model, ChannelModel::SimpleB);
        assert_eq!(cfg.load(), 1_000_000);
    }
}
