//! SINR composition and the SINR-to-rate mapping.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fading::ChannelSample;
use crate::mac::FrameConfig;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub density_dbm_hz: f64,
    pub noise_figure_db: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            density_dbm_hz: -174.0,
            noise_figure_db: 5.0,
        }
    }
}

impl NoiseConfig {
    pub fn noise_dbm(&self, bandwidth_hz: f64) -> Result<f64> {
        if !(bandwidth_hz > 0.0) {
            return Err(Error::invalid(format!(
                "bandwidth must be positive, got {bandwidth_hz}"
            )));
        }
        Ok(self.density_dbm_hz + 10.0 * bandwidth_hz.log10() + self.noise_figure_db)
    }

    pub fn noise_mw(&self, bandwidth_hz: f64) -> Result<f64> {
        Ok(dbm_to_mw(self.noise_dbm(bandwidth_hz)?))
    }
}

/// Truncated Shannon map: zero below the floor, capped above.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RateMap {
    pub se_cap: f64,
    pub sinr_floor_db: f64,
}

impl Default for RateMap {
    fn default() -> Self {
        RateMap {
            se_cap: 8.0,
            sinr_floor_db: -5.0,
        }
    }
}

impl RateMap {
    pub fn validate(&self) -> Result<()> {
        if !(self.se_cap > 0.0) {
            return Err(Error::invalid("spectral-efficiency cap must be positive"));
        }
        Ok(())
    }
}

pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

pub fn lin_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// `S / (N + I)` in dB from linear powers.
pub fn sinr_from_powers_db(signal_mw: f64, interference_mw: f64, noise_mw: f64) -> f64 {
    lin_to_db(signal_mw / (noise_mw + interference_mw))
}

/// One transmitter as seen at the receiver: its power and the channel towards the receiver.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Received {
    pub tx_power_dbm: f64,
    pub sample: ChannelSample,
}

impl Received {
    pub fn power_mw(&self) -> f64 {
        self.sample.rx_power_mw(self.tx_power_dbm)
    }
}

/// SINR of the serving link against every co-scheduled interferer, dB.
pub fn sinr_db(serving: &Received, interferers: &[Received], noise_mw: f64) -> f64 {
    let interference: f64 = interferers.iter().map(Received::power_mw).sum();
    sinr_from_powers_db(serving.power_mw(), interference, noise_mw)
}

pub fn spectral_efficiency(sinr_db: f64, map: &RateMap) -> f64 {
    if sinr_db < map.sinr_floor_db {
        return 0.0;
    }
    (1.0 + 10f64.powf(sinr_db / 10.0)).log2().min(map.se_cap)
}

/// Smallest SINR (dB) at which `se` is achievable under the map.
pub fn required_sinr_db(se: f64, map: &RateMap) -> f64 {
    if se <= 0.0 {
        return f64::NEG_INFINITY;
    }
    lin_to_db(2f64.powf(se.min(map.se_cap)) - 1.0).max(map.sinr_floor_db)
}

pub fn transport_block_bits(se: f64, symbols: u32, frame: &FrameConfig, bandwidth_hz: f64) -> u64 {
    (se * bandwidth_hz * frame.symbol_s * symbols as f64)
        .floor()
        .max(0.0) as u64
}
