#![allow(dead_code)]

use mmwave_sim::beamforming::{array_factor_db, UpaConfig};
use mmwave_sim::fading::sample_nakagami_gain;
use mmwave_sim::network::{fading_label, SinrProbe};
use mmwave_sim::propagation::pathloss_db;
use mmwave_sim::runner::write_csv_to;
use mmwave_sim::{MetricsRow, RngStreams, ScenarioConfig, ScenarioKind};

pub fn grid(n_ue_per_bs: usize, duration_s: f64, seeds: Vec<u64>) -> ScenarioConfig {
    ScenarioConfig {
        scenario: ScenarioKind::UdpGrid,
        n_ue_per_bs,
        duration_s,
        seeds,
        ..ScenarioConfig::default()
    }
}

pub fn line(b_rlc_bytes: u64, duration_s: f64, seeds: Vec<u64>) -> ScenarioConfig {
    ScenarioConfig {
        scenario: ScenarioKind::TcpLine,
        b_rlc_bytes,
        duration_s,
        seeds,
        ..ScenarioConfig::default()
    }
}

/// Recomputes a probed SINR from positions, steering, LOS state and the
/// per-slot fading substream, summing received powers in milliwatts.
/// Returns the linear SINR.
pub fn brute_force_sinr(cfg: &ScenarioConfig, seed: u64, probe: &SinrProbe) -> f64 {
    let params = cfg
        .model
        .nakagami()
        .expect("oracle covers the Nakagami models");
    let bs_array = UpaConfig::square(cfg.beamforming.bs_array_side).unwrap();
    let ue_array = UpaConfig::square(cfg.beamforming.ue_array_side).unwrap();
    let streams = RngStreams::new(seed);
    let noise_dbm =
        cfg.noise.density_dbm_hz + 10.0 * cfg.bandwidth_hz.log10() + cfg.noise.noise_figure_db;
    let noise_mw = 10f64.powf(noise_dbm / 10.0);

    let mut signal = 0.0;
    let mut interference = 0.0;
    for link in &probe.links {
        let d = link.bs_position - link.ue_position;
        let pl = pathloss_db(
            d.norm(),
            link.ue_position.z,
            link.condition,
            cfg.carrier_hz / 1e9,
            &cfg.propagation.pathloss,
        )
        .unwrap()
            + link.shadowing_db;
        let g = array_factor_db(
            &bs_array,
            (link.ue_position - link.bs_position).direction(),
            link.bs_steer,
        ) + array_factor_db(&ue_array, d.direction(), link.ue_steer);
        let mut stream = streams.indexed(&fading_label(link.bs, probe.ue), probe.slot);
        let h = sample_nakagami_gain(params.m(link.condition), params.omega, &mut stream).unwrap();
        let p =
            10f64.powf(link.tx_power_dbm / 10.0) * h * 10f64.powf(g / 10.0) / 10f64.powf(pl / 10.0);
        if link.bs == probe.serving_bs {
            signal += p;
        } else {
            interference += p;
        }
    }
    signal / (interference + noise_mw)
}

/// CSV bytes with the wall-clock column zeroed.
pub fn csv_without_wall_clock(rows: &[MetricsRow]) -> Vec<u8> {
    let rows: Vec<MetricsRow> = rows
        .iter()
        .map(|r| MetricsRow {
            wall_clock_s: 0.0,
            ..r.clone()
        })
        .collect();
    let mut out = Vec::new();
    write_csv_to(&rows, &mut out).unwrap();
    out
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}
