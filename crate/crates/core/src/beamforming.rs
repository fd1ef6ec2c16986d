//! Analytic beamforming for uniform planar arrays of isotropic elements.
//!
//! Element `(p, r)` of a `rows x cols` panel sits at `p` half-wavelengths up
//! the vertical axis and `r` half-wavelengths along the horizontal axis. With
//! zenith `theta` and azimuth `phi` the incoming phase progression is
//! `2*pi*(p*cos(theta)*dv + r*sin(theta)*sin(phi)*dh)`.
//!
//! The steering vector is unit-norm and the weight vector has unit-modulus
//! entries, so a matched pair yields an array factor of exactly `n` and any
//! other pair yields less.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Direction;

pub const HALF_WAVELENGTH: f64 = 0.5;

/// Square panel. Spacings are normalized to the wavelength.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpaConfig {
    pub rows: usize,
    pub cols: usize,
    pub dv: f64,
    pub dh: f64,
}

impl UpaConfig {
    pub fn square(side: usize) -> Result<Self> {
        if side == 0 {
            return Err(Error::invalid("array side must be at least 1"));
        }
        Ok(UpaConfig {
            rows: side,
            cols: side,
            dv: HALF_WAVELENGTH,
            dh: HALF_WAVELENGTH,
        })
    }

    /// `n` must be a perfect square.
    pub fn with_elements(n: usize) -> Result<Self> {
        let side = (n as f64).sqrt().round() as usize;
        if side * side != n || n == 0 {
            return Err(Error::invalid(format!(
                "{n} elements is not a square panel"
            )));
        }
        Self::square(side)
    }

    pub fn elements(&self) -> usize {
        self.rows * self.cols
    }

    pub fn max_gain_db(&self) -> f64 {
        10.0 * (self.elements() as f64).log10()
    }

    fn phase_steps(&self, dir: Direction) -> (f64, f64) {
        let (st, ct) = dir.zenith.sin_cos();
        (TAU * ct * self.dv, TAU * st * dir.azimuth.sin() * self.dh)
    }
}

/// Array response `a` towards `dir`, `||a|| = 1`.
pub fn steering_vector(dir: Direction, upa: &UpaConfig) -> Vec<Complex64> {
    let scale = 1.0 / (upa.elements() as f64).sqrt();
    element_phasors(dir, upa, 1.0).map(|z| z * scale).collect()
}

/// Phase-only weights `w` steered at `steer`, `||w||^2 = n`.
pub fn weight_vector(steer: Direction, upa: &UpaConfig) -> Vec<Complex64> {
    element_phasors(steer, upa, -1.0).collect()
}

fn element_phasors(
    dir: Direction,
    upa: &UpaConfig,
    sign: f64,
) -> impl Iterator<Item = Complex64> + '_ {
    let (kv, kh) = upa.phase_steps(dir);
    (0..upa.rows).flat_map(move |p| {
        (0..upa.cols)
            .map(move |r| Complex64::from_polar(1.0, sign * (p as f64 * kv + r as f64 * kh)))
    })
}

/// `|sum_{k<n} e^{j k alpha}|^2`
fn dirichlet_power(n: usize, alpha: f64) -> f64 {
    // fold into (-pi, pi] so grating-lobe directions hit the limit branch
    let a = alpha - TAU * ((alpha + PI) / TAU).floor();
    let half = 0.5 * a;
    let den = half.sin();
    if den.abs() < 1e-12 {
        return (n * n) as f64;
    }
    let num = (n as f64 * half).sin();
    (num / den).powi(2)
}

/// `|a(dir) . w(steer)|^2` in linear units, via the separable closed form.
pub fn array_factor(upa: &UpaConfig, dir: Direction, steer: Direction) -> f64 {
    let (av, ah) = upa.phase_steps(dir);
    let (sv, sh) = upa.phase_steps(steer);
    dirichlet_power(upa.rows, av - sv) * dirichlet_power(upa.cols, ah - sh) / upa.elements() as f64
}

/// Array factor in dB. Clamped at -300 dB where the pattern has an exact null.
pub fn array_factor_db(upa: &UpaConfig, dir: Direction, steer: Direction) -> f64 {
    10.0 * array_factor(upa, dir, steer).max(1e-30).log10()
}

/// Per-endpoint beam state: refreshed to the LOS direction every `period`
/// seconds, frozen in between.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SteeringState {
    pub steer: Direction,
    pub last_update: f64,
    pub period: f64,
}

impl SteeringState {
    pub fn new(steer: Direction, now: f64, period: f64) -> Self {
        SteeringState {
            steer,
            last_update: now,
            period,
        }
    }

    /// Whether a refresh is due at `now`.
    pub fn due(&self, now: f64) -> bool {
        now - self.last_update >= self.period - 1e-12
    }

    pub fn refresh(&mut self, los: Direction, now: f64) {
        self.steer = los;
        self.last_update = now;
    }
}

/// One endpoint of a link as seen by the beamforming gain: its array, the
/// geometric direction towards the other end, and where it is steered.
#[derive(Clone, Copy, Debug)]
pub struct Endpoint<'a> {
    pub upa: &'a UpaConfig,
    pub towards_peer: Direction,
    pub steer: Direction,
}

/// Link gain in dB: sum of both endpoints' array factors. Interfering links
/// use the interferer's own steering (pointed at its served peer).
pub fn link_bf_gain_db(tx: Endpoint<'_>, rx: Endpoint<'_>) -> f64 {
    array_factor_db(tx.upa, tx.towards_peer, tx.steer)
        + array_factor_db(rx.upa, rx.towards_peer, rx.steer)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SectoredParams {
    /// Main-lobe width in radians.
    pub beamwidth: f64,
    pub main_lobe_db: f64,
    pub side_lobe_db: f64,
}

impl Default for SectoredParams {
    fn default() -> Self {
        SectoredParams {
            beamwidth: 30f64.to_radians(),
            main_lobe_db: 18.0,
            side_lobe_db: -10.0,
        }
    }
}

impl SectoredParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.beamwidth > 0.0 && self.beamwidth < TAU) {
            return Err(Error::invalid(format!(
                "main-lobe width {} rad outside (0, 2pi)",
                self.beamwidth
            )));
        }
        if self.main_lobe_db < self.side_lobe_db {
            return Err(Error::invalid("main-lobe gain below side-lobe gain"));
        }
        Ok(())
    }
}

/// Flat-top pattern: main-lobe gain within half the beamwidth of boresight.
pub fn sectored_gain_db(offset: f64, params: &SectoredParams) -> f64 {
    if offset.abs() <= params.beamwidth / 2.0 {
        params.main_lobe_db
    } else {
        params.side_lobe_db
    }
}

/// Angle between two directions, in `[0, pi]`.
pub fn angular_offset(a: Direction, b: Direction) -> f64 {
    a.unit().dot(b.unit()).clamp(-1.0, 1.0).acos()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BeamformingMode {
    #[default]
    Upa,
    Sectored,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BeamformingConfig {
    pub mode: BeamformingMode,
    /// Side of the square BS panel.
    pub bs_array_side: usize,
    pub ue_array_side: usize,
    /// Beam refresh period in seconds.
    pub period_s: f64,
    pub sectored: SectoredParams,
}

impl Default for BeamformingConfig {
    fn default() -> Self {
        BeamformingConfig {
            mode: BeamformingMode::Upa,
            bs_array_side: 8,
            ue_array_side: 2,
            period_s: 0.020,
            sectored: SectoredParams::default(),
        }
    }
}

impl BeamformingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bs_array_side == 0 || self.ue_array_side == 0 {
            return Err(Error::invalid("array sides must be at least 1"));
        }
        if !(self.period_s > 0.0 && self.period_s.is_finite()) {
            return Err(Error::invalid(format!(
                "beam period must be positive, got {}",
                self.period_s
            )));
        }
        self.sectored.validate()
    }

    /// Gain of one endpoint towards `dir` when steered at `steer`.
    pub fn endpoint_gain_db(&self, upa: &UpaConfig, dir: Direction, steer: Direction) -> f64 {
        match self.mode {
            BeamformingMode::Upa => array_factor_db(upa, dir, steer),
            BeamformingMode::Sectored => {
                sectored_gain_db(angular_offset(dir, steer), &self.sectored)
            }
        }
    }

    pub fn max_endpoint_gain_db(&self, upa: &UpaConfig) -> f64 {
        match self.mode {
            BeamformingMode::Upa => upa.max_gain_db(),
            BeamformingMode::Sectored => self.sectored.main_lobe_db,
        }
    }
}
