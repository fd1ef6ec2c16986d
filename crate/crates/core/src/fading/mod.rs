//! The two small-scale engines behind one channel interface.
//!
//! * `simple-A` / `simple-B`: Nakagami-m power fading on top of the analytic
//!   array-factor beamforming gain.
//! * `scm`: a cluster/ray channel matrix, beamformed with the endpoints'
//!   weight vectors; fading and beamforming come out as one gain.

pub mod nakagami;
pub mod scm;

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub use self::nakagami::{sample_nakagami_gain, NakagamiParams};
pub use self::scm::{
    scm_draw_large_scale, scm_effective_gain, ChannelMatrix, Cluster, Ray, ScmConfig,
    ScmLargeScale, ScmLink,
};
use crate::engine::RandomStream;
use crate::error::{Error, Result};
use crate::propagation::LosCondition;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ChannelModel {
    #[serde(rename = "simple-A")]
    SimpleA,
    #[serde(rename = "simple-B")]
    SimpleB,
    #[serde(rename = "scm")]
    Scm,
}

impl ChannelModel {
    pub const ALL: [ChannelModel; 3] = [
        ChannelModel::SimpleA,
        ChannelModel::SimpleB,
        ChannelModel::Scm,
    ];

    pub fn nakagami(self) -> Option<NakagamiParams> {
        match self {
            ChannelModel::SimpleA => Some(NakagamiParams::SETTING_A),
            ChannelModel::SimpleB => Some(NakagamiParams::SETTING_B),
            ChannelModel::Scm => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ChannelModel::SimpleA => "simple-A",
            ChannelModel::SimpleB => "simple-B",
            ChannelModel::Scm => "scm",
        }
    }
}

impl fmt::Display for ChannelModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ChannelModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "simple-A" | "simple-a" => Ok(ChannelModel::SimpleA),
            "simple-B" | "simple-b" => Ok(ChannelModel::SimpleB),
            "scm" => Ok(ChannelModel::Scm),
            other => Err(Error::UnknownModel(other.to_owned())),
        }
    }
}

/// Per-link, per-instant channel: path loss `L` (dB, shadowing included),
/// beamforming gain `G` (dB) and fading power gain `h` (linear).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChannelSample {
    pub pathloss_db: f64,
    pub bf_gain_db: f64,
    pub fading: f64,
}

impl ChannelSample {
    /// `h * G_lin * L_lin`
    pub fn total_gain(&self) -> f64 {
        self.fading * 10f64.powf((self.bf_gain_db - self.pathloss_db) / 10.0)
    }

    pub fn rx_power_mw(&self, tx_power_dbm: f64) -> f64 {
        10f64.powf(tx_power_dbm / 10.0) * self.total_gain()
    }
}

/// Counts the work the channel models do per draw.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkCounter {
    pub samples: u64,
    pub random_draws: u64,
    pub complex_macs: u64,
}

impl WorkCounter {
    pub fn per_sample(&self) -> (f64, f64) {
        if self.samples == 0 {
            return (0.0, 0.0);
        }
        let n = self.samples as f64;
        (self.random_draws as f64 / n, self.complex_macs as f64 / n)
    }
}

/// Large-scale part of a link at the time of a draw.
#[derive(Clone, Copy, Debug)]
pub struct LinkInputs {
    /// Path loss plus shadowing, dB.
    pub pathloss_db: f64,
    pub condition: LosCondition,
    /// Analytic beamforming gain, dB. Only the simple model uses it.
    pub bf_gain_db: f64,
    pub t: f64,
}

/// Small-scale state the selected model needs.
pub enum SmallScale<'a> {
    Nakagami(&'a mut RandomStream),
    Scm {
        link: &'a ScmLink,
        w_tx: &'a [Complex64],
        w_rx: &'a [Complex64],
        epoch: f64,
    },
}

pub fn channel_gain(
    model: ChannelModel,
    link: LinkInputs,
    small: SmallScale<'_>,
    work: &mut WorkCounter,
) -> Result<ChannelSample> {
    let sample = match (model.nakagami(), small) {
        (Some(params), SmallScale::Nakagami(rng)) => {
            let h = sample_nakagami_gain(params.m(link.condition), params.omega, rng)?;
            work.random_draws += 1;
            ChannelSample {
                pathloss_db: link.pathloss_db,
                bf_gain_db: link.bf_gain_db,
                fading: h,
            }
        }
        (
            None,
            SmallScale::Scm {
                link: scm,
                w_tx,
                w_rx,
                epoch,
            },
        ) => {
            let g = scm.wideband_gain(link.t, epoch, w_tx, w_rx)?;
            work.complex_macs += scm.work_per_draw();
            ChannelSample {
                pathloss_db: link.pathloss_db,
                bf_gain_db: 10.0 * g.max(1e-30).log10(),
                fading: 1.0,
            }
        }
        _ => {
            return Err(Error::invalid(format!(
                "small-scale state does not match channel model {model}"
            )))
        }
    };
    work.samples += 1;
    Ok(sample)
}
