//! Reduced cluster-based spatial channel model.
//!
//! Large-scale draw: cluster delays, powers and mean departure/arrival angles,
//! plus, per ray, angular offsets and an initial phase. Small-scale: the
//! `U x S` matrix is rebuilt from every ray at every transmission, each ray
//! rotating at its own Doppler frequency. Rays are summed per cluster, and
//! the beamformed gain is averaged over equally spaced subbands, where each
//! cluster picks up the phase of its delay. One subband gives the plain
//! narrowband channel.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Exp, Normal};
use serde::{Deserialize, Serialize};

use crate::beamforming::{steering_vector, UpaConfig};
use crate::engine::RandomStream;
use crate::error::{Error, Result};
use crate::geometry::{Direction, Vec3};
use crate::propagation::LosCondition;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScmConfig {
    /// Scattered clusters; a LOS link adds one specular cluster on top.
    pub clusters: usize,
    pub rays_per_cluster: usize,
    pub delay_spread_s: f64,
    /// RMS spread of ray angles around their cluster mean, degrees.
    pub cluster_angle_spread_deg: f64,
    /// Ricean K factor of LOS links, dB.
    pub k_factor_db: f64,
    /// Log-normal per-cluster power jitter, dB.
    pub power_jitter_db: f64,
    /// Half-widths of the sector, centred on the LOS direction, in which
    /// cluster mean angles fall: departure azimuth/zenith, arrival azimuth/zenith.
    pub aod_sector_deg: f64,
    pub zod_sector_deg: f64,
    pub aoa_sector_deg: f64,
    pub zoa_sector_deg: f64,
    /// Subbands over which the beamformed gain is averaged.
    pub subbands: usize,
    /// UE displacement after which a link's clusters are redrawn, metres.
    /// Below it, epochs keep the clusters, re-anchor them on the current
    /// LOS directions and carry ray phases forward. Zero redraws every epoch.
    pub decorrelation_m: f64,
}

impl Default for ScmConfig {
    fn default() -> Self {
        ScmConfig {
            clusters: 12,
            rays_per_cluster: 20,
            delay_spread_s: 100e-9,
            cluster_angle_spread_deg: 5.0,
            k_factor_db: 9.0,
            power_jitter_db: 3.0,
            aod_sector_deg: 10.0,
            zod_sector_deg: 5.0,
            aoa_sector_deg: 30.0,
            zoa_sector_deg: 10.0,
            subbands: 16,
            decorrelation_m: 10.0,
        }
    }
}

impl ScmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.clusters == 0 || self.rays_per_cluster == 0 {
            return Err(Error::invalid(
                "SCM needs at least one cluster and one ray per cluster",
            ));
        }
        if !(self.decorrelation_m >= 0.0) {
            return Err(Error::invalid(
                "SCM decorrelation distance must be non-negative",
            ));
        }
        if self.subbands == 0 {
            return Err(Error::invalid("SCM needs at least one subband"));
        }
        if !(self.delay_spread_s > 0.0) || !(self.cluster_angle_spread_deg > 0.0) {
            return Err(Error::invalid(
                "SCM delay and angular spreads must be positive",
            ));
        }
        let sectors = [
            self.aod_sector_deg,
            self.zod_sector_deg,
            self.aoa_sector_deg,
            self.zoa_sector_deg,
        ];
        if sectors.iter().any(|s| !(*s >= 0.0 && *s <= 180.0)) || self.power_jitter_db < 0.0 {
            return Err(Error::invalid(
                "SCM sector widths must lie in [0, 180] deg and jitter must be non-negative",
            ));
        }
        if !self.k_factor_db.is_finite() {
            return Err(Error::invalid("K factor must be finite"));
        }
        Ok(())
    }

    /// Fraction of power in the specular cluster for a given K (linear).
    pub fn specular_fraction(k_linear: f64) -> f64 {
        k_linear / (1.0 + k_linear)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cluster {
    pub delay_s: f64,
    pub power: f64,
    pub departure: Direction,
    pub arrival: Direction,
    /// (zenith, azimuth) offsets from the LOS directions, radians.
    pub departure_offset: (f64, f64),
    pub arrival_offset: (f64, f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ray {
    pub cluster: usize,
    pub power: f64,
    pub departure: Direction,
    pub arrival: Direction,
    /// (zenith, azimuth) offsets from the cluster directions, radians.
    pub departure_offset: (f64, f64),
    pub arrival_offset: (f64, f64),
    pub phase: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScmLargeScale {
    pub clusters: Vec<Cluster>,
    pub rays: Vec<Ray>,
    /// Linear K factor for LOS links.
    pub k_factor: Option<f64>,
    pub drawn_at: f64,
}

impl ScmLargeScale {
    pub fn total_power(&self) -> f64 {
        self.clusters.iter().map(|c| c.power).sum()
    }

    /// The same clusters and rays seen from new LOS directions at `now`,
    /// each ray phase advanced by `doppler_hz[k]` over the elapsed time.
    pub fn carried_to(
        &self,
        now: f64,
        departure_los: Direction,
        arrival_los: Direction,
        doppler_hz: &[f64],
    ) -> Self {
        let elapsed = now - self.drawn_at;
        let clusters: Vec<Cluster> = self
            .clusters
            .iter()
            .map(|c| Cluster {
                departure: offset(departure_los, c.departure_offset),
                arrival: offset(arrival_los, c.arrival_offset),
                ..*c
            })
            .collect();
        let rays = self
            .rays
            .iter()
            .zip(doppler_hz)
            .map(|(r, nu)| {
                let c = &clusters[r.cluster];
                Ray {
                    departure: offset(c.departure, r.departure_offset),
                    arrival: offset(c.arrival, r.arrival_offset),
                    phase: (r.phase + TAU * nu * elapsed).rem_euclid(TAU),
                    ..*r
                }
            })
            .collect();
        ScmLargeScale {
            clusters,
            rays,
            k_factor: self.k_factor,
            drawn_at: now,
        }
    }

    pub fn check_fresh(&self, now: f64, epoch: f64) -> Result<()> {
        if now < self.drawn_at - 1e-12 || now - self.drawn_at > epoch + 1e-12 {
            return Err(Error::StaleLargeScale {
                drawn_at: self.drawn_at,
                now,
                epoch,
            });
        }
        Ok(())
    }
}

fn offset(dir: Direction, (dz, da): (f64, f64)) -> Direction {
    Direction::new((dir.zenith + dz).clamp(0.0, PI), dir.azimuth + da)
}

fn uniform_half_width(stream: &mut RandomStream, half_width_rad: f64) -> f64 {
    if half_width_rad == 0.0 {
        0.0
    } else {
        stream.random_range(-half_width_rad..=half_width_rad)
    }
}

/// Laplacian with the given standard deviation.
fn laplacian(stream: &mut RandomStream, std: f64) -> f64 {
    let b = std / std::f64::consts::SQRT_2;
    let u: f64 = stream.random::<f64>() - 0.5;
    -b * u.signum() * (1.0 - 2.0 * u.abs()).max(f64::MIN_POSITIVE).ln()
}

/// Draws cluster and ray parameters for one link. `departure_los` points
/// from the BS towards the UE, `arrival_los` from the UE towards the BS.
pub fn scm_draw_large_scale(
    departure_los: Direction,
    arrival_los: Direction,
    condition: LosCondition,
    config: &ScmConfig,
    now: f64,
    stream: &mut RandomStream,
) -> Result<ScmLargeScale> {
    config.validate()?;
    let n = config.clusters;
    let exp = Exp::new(1.0 / config.delay_spread_s).map_err(|e| Error::invalid(e.to_string()))?;
    let jitter =
        Normal::new(0.0, config.power_jitter_db).map_err(|e| Error::invalid(e.to_string()))?;

    let mut delays: Vec<f64> = (0..n).map(|_| stream.sample(exp)).collect();
    delays.sort_by(f64::total_cmp);
    let raw: Vec<f64> = delays
        .iter()
        .map(|d| (-d / config.delay_spread_s).exp() * 10f64.powf(stream.sample(jitter) / 10.0))
        .collect();
    let raw_sum: f64 = raw.iter().sum();

    let k_factor = match condition {
        LosCondition::Los => Some(10f64.powf(config.k_factor_db / 10.0)),
        LosCondition::Nlos => None,
    };
    let diffuse_share = k_factor.map_or(1.0, |k| 1.0 - ScmConfig::specular_fraction(k));

    let mut clusters = Vec::with_capacity(n + 1);
    if let Some(k) = k_factor {
        clusters.push(Cluster {
            delay_s: 0.0,
            power: ScmConfig::specular_fraction(k),
            departure: departure_los,
            arrival: arrival_los,
            departure_offset: (0.0, 0.0),
            arrival_offset: (0.0, 0.0),
        });
    }
    for (delay, p) in delays.iter().zip(&raw) {
        let departure_offset = (
            uniform_half_width(stream, config.zod_sector_deg.to_radians()),
            uniform_half_width(stream, config.aod_sector_deg.to_radians()),
        );
        let arrival_offset = (
            uniform_half_width(stream, config.zoa_sector_deg.to_radians()),
            uniform_half_width(stream, config.aoa_sector_deg.to_radians()),
        );
        clusters.push(Cluster {
            delay_s: *delay,
            power: diffuse_share * p / raw_sum,
            departure: offset(departure_los, departure_offset),
            arrival: offset(arrival_los, arrival_offset),
            departure_offset,
            arrival_offset,
        });
    }

    let spread = config.cluster_angle_spread_deg.to_radians();
    let mut rays = Vec::with_capacity(n * config.rays_per_cluster + 1);
    for (idx, c) in clusters.iter().enumerate() {
        let specular = k_factor.is_some() && idx == 0;
        let count = if specular { 1 } else { config.rays_per_cluster };
        for _ in 0..count {
            let (departure_offset, arrival_offset) = if specular {
                ((0.0, 0.0), (0.0, 0.0))
            } else {
                (
                    (laplacian(stream, spread), laplacian(stream, spread)),
                    (laplacian(stream, spread), laplacian(stream, spread)),
                )
            };
            rays.push(Ray {
                cluster: idx,
                power: c.power / count as f64,
                departure: offset(c.departure, departure_offset),
                arrival: offset(c.arrival, arrival_offset),
                departure_offset,
                arrival_offset,
                phase: stream.random_range(0.0..TAU),
            });
        }
    }

    Ok(ScmLargeScale {
        clusters,
        rays,
        k_factor,
        drawn_at: now,
    })
}

/// Complex channel, `rows = U` receive elements by `cols = S` transmit elements.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<Complex64>,
    pub generated_at: f64,
}

impl ChannelMatrix {
    pub fn zeros(rows: usize, cols: usize, generated_at: f64) -> Self {
        ChannelMatrix {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
            generated_at,
        }
    }

    pub fn at(&self, r: usize, c: usize) -> Complex64 {
        self.data[r * self.cols + c]
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    /// `sqrt(rows*cols) * a_rx a_tx^T`, rank one with `||H||_F^2 = rows*cols`.
    pub fn rank_one(a_rx: &[Complex64], a_tx: &[Complex64]) -> Self {
        let scale = ((a_rx.len() * a_tx.len()) as f64).sqrt();
        let mut h = ChannelMatrix::zeros(a_rx.len(), a_tx.len(), 0.0);
        for (r, ar) in a_rx.iter().enumerate() {
            for (c, at) in a_tx.iter().enumerate() {
                h.data[r * a_tx.len() + c] = ar * at * scale;
            }
        }
        h
    }
}

/// Ray responses of one link, prepared once per large-scale draw.
#[derive(Clone, Debug)]
pub struct ScmLink {
    large_scale: ScmLargeScale,
    rows: usize,
    cols: usize,
    /// per ray: unit-modulus element phasors at the receiver and transmitter
    rx: Vec<Vec<Complex64>>,
    tx: Vec<Vec<Complex64>>,
    amplitude: Vec<f64>,
    doppler_hz: Vec<f64>,
    /// Subband centre frequencies relative to the carrier.
    subband_hz: Vec<f64>,
}

impl ScmLink {
    /// `ue_velocity` in m/s; the UE is the receiver.
    pub fn prepare(
        large_scale: ScmLargeScale,
        rx_array: &UpaConfig,
        tx_array: &UpaConfig,
        ue_velocity: Vec3,
        wavelength_m: f64,
    ) -> Self {
        let rx_scale = (rx_array.elements() as f64).sqrt();
        let tx_scale = (tx_array.elements() as f64).sqrt();
        let mut rx = Vec::with_capacity(large_scale.rays.len());
        let mut tx = Vec::with_capacity(large_scale.rays.len());
        let mut amplitude = Vec::with_capacity(large_scale.rays.len());
        let mut doppler_hz = Vec::with_capacity(large_scale.rays.len());
        for ray in &large_scale.rays {
            rx.push(
                steering_vector(ray.arrival, rx_array)
                    .into_iter()
                    .map(|z| z * rx_scale)
                    .collect(),
            );
            tx.push(
                steering_vector(ray.departure, tx_array)
                    .into_iter()
                    .map(|z| z * tx_scale)
                    .collect(),
            );
            amplitude.push(ray.power.sqrt());
            doppler_hz.push(ue_velocity.dot(ray.arrival.unit()) / wavelength_m);
        }
        ScmLink {
            large_scale,
            rows: rx_array.elements(),
            cols: tx_array.elements(),
            rx,
            tx,
            amplitude,
            doppler_hz,
            subband_hz: vec![0.0],
        }
    }

    /// Spreads `subbands` equally spaced subbands over `bandwidth_hz`.
    pub fn with_band(mut self, bandwidth_hz: f64, subbands: usize) -> Self {
        let n = subbands.max(1);
        self.subband_hz = (0..n)
            .map(|i| ((i as f64 + 0.5) / n as f64 - 0.5) * bandwidth_hz)
            .collect();
        self
    }

    /// Carries the link to `now` without redrawing its clusters; see
    /// [`ScmLargeScale::carried_to`].
    #[allow(clippy::too_many_arguments)]
    pub fn carried_to(
        &self,
        now: f64,
        departure_los: Direction,
        arrival_los: Direction,
        rx_array: &UpaConfig,
        tx_array: &UpaConfig,
        ue_velocity: Vec3,
        wavelength_m: f64,
    ) -> Self {
        let ls = self
            .large_scale
            .carried_to(now, departure_los, arrival_los, &self.doppler_hz);
        ScmLink {
            subband_hz: self.subband_hz.clone(),
            ..ScmLink::prepare(ls, rx_array, tx_array, ue_velocity, wavelength_m)
        }
    }

    pub fn subband_hz(&self) -> &[f64] {
        &self.subband_hz
    }

    pub fn large_scale(&self) -> &ScmLargeScale {
        &self.large_scale
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn rays(&self) -> usize {
        self.amplitude.len()
    }

    /// Complex multiply-accumulates needed by one [`Self::matrix`] call.
    pub fn work_per_draw(&self) -> u64 {
        (self.rays() * self.rows * self.cols) as u64
    }

    pub fn doppler_hz(&self) -> &[f64] {
        &self.doppler_hz
    }

    /// Per-cluster channel matrices at time `t`, indexed like the clusters.
    /// Fails when the large-scale state is older than `epoch`.
    pub fn cluster_matrices(&self, t: f64, epoch: f64) -> Result<Vec<ChannelMatrix>> {
        self.large_scale.check_fresh(t, epoch)?;
        let mut hs =
            vec![ChannelMatrix::zeros(self.rows, self.cols, t); self.large_scale.clusters.len()];
        let elapsed = t - self.large_scale.drawn_at;
        for (k, ray) in self.large_scale.rays.iter().enumerate() {
            let coeff = Complex64::from_polar(
                self.amplitude[k],
                ray.phase + TAU * self.doppler_hz[k] * elapsed,
            );
            let h = &mut hs[ray.cluster];
            let tx = &self.tx[k];
            for (r, ar) in self.rx[k].iter().enumerate() {
                let scaled = coeff * ar;
                let row = &mut h.data[r * self.cols..(r + 1) * self.cols];
                for (entry, at) in row.iter_mut().zip(tx) {
                    *entry += scaled * at;
                }
            }
        }
        Ok(hs)
    }

    /// Narrowband channel at time `t`: the sum of the cluster matrices.
    pub fn matrix(&self, t: f64, epoch: f64) -> Result<ChannelMatrix> {
        let mut h = ChannelMatrix::zeros(self.rows, self.cols, t);
        for hk in self.cluster_matrices(t, epoch)? {
            for (a, b) in h.data.iter_mut().zip(&hk.data) {
                *a += b;
            }
        }
        Ok(h)
    }

    /// Beamformed power gain averaged over the subbands. With a single
    /// subband this equals [`scm_effective_gain`] of [`Self::matrix`].
    pub fn wideband_gain(
        &self,
        t: f64,
        epoch: f64,
        w_tx: &[Complex64],
        w_rx: &[Complex64],
    ) -> Result<f64> {
        let hs = self.cluster_matrices(t, epoch)?;
        let norm = weight_norms(self.rows, self.cols, w_tx, w_rx)?;
        let per_cluster: Vec<Complex64> = hs.iter().map(|h| bilinear(h, w_tx, w_rx)).collect();
        let mut total = 0.0;
        for f in &self.subband_hz {
            let y: Complex64 = per_cluster
                .iter()
                .zip(&self.large_scale.clusters)
                .map(|(y, c)| y * Complex64::from_polar(1.0, -TAU * f * c.delay_s))
                .sum();
            total += y.norm_sqr();
        }
        Ok(total / (self.subband_hz.len() as f64 * norm))
    }
}

fn weight_norms(rows: usize, cols: usize, w_tx: &[Complex64], w_rx: &[Complex64]) -> Result<f64> {
    if w_rx.len() != rows || w_tx.len() != cols {
        return Err(Error::DimensionMismatch(format!(
            "H is {rows}x{cols}, weights are rx {} / tx {}",
            w_rx.len(),
            w_tx.len()
        )));
    }
    let norm_rx: f64 = w_rx.iter().map(|z| z.norm_sqr()).sum();
    let norm_tx: f64 = w_tx.iter().map(|z| z.norm_sqr()).sum();
    if norm_rx == 0.0 || norm_tx == 0.0 {
        return Err(Error::invalid("beamforming weights must be non-zero"));
    }
    Ok(norm_rx * norm_tx)
}

fn bilinear(h: &ChannelMatrix, w_tx: &[Complex64], w_rx: &[Complex64]) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for (r, wr) in w_rx.iter().enumerate() {
        let row = &h.data[r * h.cols..(r + 1) * h.cols];
        let inner: Complex64 = row.iter().zip(w_tx).map(|(x, w)| x * w).sum();
        acc += wr * inner;
    }
    acc
}

/// Beamformed power gain `|w_rx^T H w_tx|^2 / (||w_rx||^2 ||w_tx||^2)`,
/// with weights applied the same way as in the array factor. A rank-one
/// channel with matched phase-only weights gives `U * S`.
pub fn scm_effective_gain(
    h: &ChannelMatrix,
    w_tx: &[Complex64],
    w_rx: &[Complex64],
) -> Result<f64> {
    let norm = weight_norms(h.rows, h.cols, w_tx, w_rx)?;
    Ok(bilinear(h, w_tx, w_rx).norm_sqr() / norm)
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;

    use super::*;
    use crate::beamforming::weight_vector;
    use crate::engine::RngStreams;

    fn los_dirs() -> (Direction, Direction) {
        (
            Direction::new(1.65, 0.3),
            Direction::new(PI - 1.65, 0.3 + PI),
        )
    }

    #[test]
    fn nlos_powers_normalize() {
        let (d, a) = los_dirs();
        let mut s = RngStreams::new(1).stream("scm");
        let ls = scm_draw_large_scale(d, a, LosCondition::Nlos, &ScmConfig::default(), 0.0, &mut s)
            .unwrap();
        assert_eq!(ls.clusters.len(), 12);
        assert_eq!(ls.rays.len(), 240);
        assert_relative_eq!(ls.total_power(), 1.0, epsilon = 1e-9);
        assert!(ls.clusters.iter().all(|c| c.power >= 0.0));
        assert!(ls.clusters.windows(2).all(|w| w[0].delay_s <= w[1].delay_s));
        let ray_power: f64 = ls.rays.iter().map(|r| r.power).sum();
        assert_relative_eq!(ray_power, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn specular_fraction_from_k() {
        let (d, a) = los_dirs();
        let mut s = RngStreams::new(2).stream("scm");
        let ls = scm_draw_large_scale(d, a, LosCondition::Los, &ScmConfig::default(), 0.0, &mut s)
            .unwrap();
        let k = 10f64.powf(0.9);
        assert_relative_eq!(ls.clusters[0].power, k / (1.0 + k), epsilon = 1e-12);
        assert_relative_eq!(ls.clusters[0].power, 0.888, epsilon = 1e-3);
        assert_eq!(ls.clusters[0].delay_s, 0.0);
        assert_eq!(ls.clusters[0].departure, d);
        assert_relative_eq!(ls.total_power(), 1.0, epsilon = 1e-9);

        let strong = ScmConfig {
            k_factor_db: 80.0,
            ..Default::default()
        };
        let ls = scm_draw_large_scale(d, a, LosCondition::Los, &strong, 0.0, &mut s).unwrap();
        assert!(ls.clusters[0].power > 1.0 - 1e-7);
    }

    #[test]
    fn static_link_matrix_is_constant() {
        let (d, a) = los_dirs();
        let mut s = RngStreams::new(3).stream("scm");
        let ls = scm_draw_large_scale(d, a, LosCondition::Nlos, &ScmConfig::default(), 0.0, &mut s)
            .unwrap();
        let link = ScmLink::prepare(
            ls,
            &UpaConfig::square(2).unwrap(),
            &UpaConfig::square(8).unwrap(),
            Vec3::ZERO,
            0.0107,
        );
        assert!(link.doppler_hz().iter().all(|&f| f == 0.0));
        let h1 = link.matrix(0.01, 0.1).unwrap();
        let h2 = link.matrix(0.07, 0.1).unwrap();
        assert_eq!(h1.data, h2.data);
        assert_eq!(link.work_per_draw(), 240 * 4 * 64);
    }

    #[test]
    fn stale_state_is_rejected() {
        let (d, a) = los_dirs();
        let mut s = RngStreams::new(4).stream("scm");
        let ls = scm_draw_large_scale(d, a, LosCondition::Nlos, &ScmConfig::default(), 1.0, &mut s)
            .unwrap();
        let link = ScmLink::prepare(
            ls,
            &UpaConfig::square(1).unwrap(),
            &UpaConfig::square(1).unwrap(),
            Vec3::ZERO,
            0.01,
        );
        assert!(matches!(
            link.matrix(1.25, 0.1),
            Err(Error::StaleLargeScale { .. })
        ));
        assert!(link.matrix(1.1, 0.1).is_ok());
    }

    #[test]
    fn rank_one_matched_gain() {
        let rx = UpaConfig::square(2).unwrap();
        let tx = UpaConfig::square(8).unwrap();
        let to_ue = Direction::new(1.4, 0.2);
        let to_bs = Direction::new(1.2, 2.9);
        let h = ChannelMatrix::rank_one(&steering_vector(to_bs, &rx), &steering_vector(to_ue, &tx));
        assert_relative_eq!(h.frobenius_sq(), 256.0, epsilon = 1e-9);
        let g =
            scm_effective_gain(&h, &weight_vector(to_ue, &tx), &weight_vector(to_bs, &rx)).unwrap();
        assert_relative_eq!(g, 256.0, epsilon = 1e-9);
    }

    #[test]
    fn orthogonal_receive_weights_null_the_channel() {
        // 2-element receive array: broadside arrival vs a weight with a pi phase step
        let rx = UpaConfig {
            rows: 1,
            cols: 2,
            dv: 0.5,
            dh: 0.5,
        };
        let tx = UpaConfig::square(2).unwrap();
        let arrival = Direction::new(PI / 2.0, 0.0);
        let h = ChannelMatrix::rank_one(
            &steering_vector(arrival, &rx),
            &steering_vector(arrival, &tx),
        );
        let w_rx = vec![Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.0)];
        let g = scm_effective_gain(&h, &weight_vector(arrival, &tx), &w_rx).unwrap();
        assert!(g < 1e-24);
    }

    #[test]
    fn dimension_mismatch() {
        let h = ChannelMatrix::zeros(4, 64, 0.0);
        let w = vec![Complex64::new(1.0, 0.0); 4];
        assert!(matches!(
            scm_effective_gain(&h, &w, &w),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn moving_receiver_has_doppler() {
        let (d, a) = los_dirs();
        let mut s = RngStreams::new(5).stream("scm");
        let ls = scm_draw_large_scale(d, a, LosCondition::Nlos, &ScmConfig::default(), 0.0, &mut s)
            .unwrap();
        let link = ScmLink::prepare(
            ls,
            &UpaConfig::square(2).unwrap(),
            &UpaConfig::square(8).unwrap(),
            Vec3::new(2.0, 0.0, 0.0),
            0.0107,
        );
        let max = link.doppler_hz().iter().fold(0.0f64, |m, f| m.max(f.abs()));
        assert!(max > 0.0 && max <= 2.0 / 0.0107 + 1e-9);
        assert_ne!(
            link.matrix(0.0, 0.1).unwrap().data,
            link.matrix(0.05, 0.1).unwrap().data
        );
    }

    fn moving_link(seed: u64) -> ScmLink {
        let (d, a) = los_dirs();
        let mut s = RngStreams::new(seed).stream("scm");
        let ls = scm_draw_large_scale(d, a, LosCondition::Nlos, &ScmConfig::default(), 0.0, &mut s)
            .unwrap();
        ScmLink::prepare(
            ls,
            &UpaConfig::square(2).unwrap(),
            &UpaConfig::square(8).unwrap(),
            Vec3::new(2.0, 0.0, 0.0),
            0.0107,
        )
    }

    #[test]
    fn single_subband_is_narrowband() {
        let (d, a) = los_dirs();
        let link = moving_link(6);
        let w_tx = weight_vector(d, &UpaConfig::square(8).unwrap());
        let w_rx = weight_vector(a, &UpaConfig::square(2).unwrap());
        for t in [0.0, 0.013, 0.061] {
            let narrow = scm_effective_gain(&link.matrix(t, 0.1).unwrap(), &w_tx, &w_rx).unwrap();
            assert_relative_eq!(
                link.wideband_gain(t, 0.1, &w_tx, &w_rx).unwrap(),
                narrow,
                max_relative = 1e-9
            );
        }
        let band = link.clone().with_band(1e9, 16);
        assert_eq!(band.subband_hz().len(), 16);
        assert_relative_eq!(band.subband_hz().iter().sum::<f64>(), 0.0, epsilon = 1e-3);
    }

    #[test]
    fn specular_only_link_is_flat_across_the_band() {
        let (d, a) = los_dirs();
        let mut s = RngStreams::new(7).stream("scm");
        let cfg = ScmConfig {
            k_factor_db: 200.0,
            ..Default::default()
        };
        let ls = scm_draw_large_scale(d, a, LosCondition::Los, &cfg, 0.0, &mut s).unwrap();
        let rx = UpaConfig::square(2).unwrap();
        let tx = UpaConfig::square(8).unwrap();
        let link = ScmLink::prepare(ls, &rx, &tx, Vec3::ZERO, 0.0107);
        let w_tx = weight_vector(d, &tx);
        let w_rx = weight_vector(a, &rx);
        let narrow = link.wideband_gain(0.0, 0.1, &w_tx, &w_rx).unwrap();
        let wide = link
            .with_band(1e9, 16)
            .wideband_gain(0.0, 0.1, &w_tx, &w_rx)
            .unwrap();
        assert_relative_eq!(wide, narrow, max_relative = 1e-6);
    }

    #[test]
    fn carried_link_continues_the_same_channel() {
        let (d, a) = los_dirs();
        let link = moving_link(8);
        let rx = UpaConfig::square(2).unwrap();
        let tx = UpaConfig::square(8).unwrap();
        let carried = link.carried_to(0.1, d, a, &rx, &tx, Vec3::new(2.0, 0.0, 0.0), 0.0107);
        let before = link.matrix(0.1, 0.1).unwrap();
        let after = carried.matrix(0.1, 0.1).unwrap();
        for (x, y) in before.data.iter().zip(&after.data) {
            assert!((x - y).norm() <= 1e-9 * (1.0 + x.norm()));
        }
        // the carried state is fresh for another epoch
        assert!(carried.matrix(0.19, 0.1).is_ok());
        assert!(link.matrix(0.19, 0.1).is_err());
    }
}
