//! Urban-macro large-scale propagation: LOS probability, LOS/NLOS path loss
//! and log-normal shadowing.
//!
//! LOS state and shadowing are large-scale quantities: they are redrawn only
//! at large-scale epochs. Both are driven by per-link processes whose memory
//! decays with the distance the UE travelled since the previous draw, so a
//! static UE keeps its LOS state and shadowing for the whole run.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::engine::RandomStream;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LosCondition {
    Los,
    Nlos,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LosState {
    pub condition: LosCondition,
    pub shadowing_db: f64,
    pub last_update: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathlossParams {
    pub los_intercept_db: f64,
    pub los_distance_coeff: f64,
    pub los_frequency_coeff: f64,
    pub nlos_intercept_db: f64,
    pub nlos_distance_coeff: f64,
    pub nlos_frequency_coeff: f64,
    /// Per meter of UE height above 1.5 m.
    pub nlos_height_coeff: f64,
    pub shadowing_std_los_db: f64,
    pub shadowing_std_nlos_db: f64,
    pub correlation_distance_los_m: f64,
    pub correlation_distance_nlos_m: f64,
}

impl Default for PathlossParams {
    fn default() -> Self {
        PathlossParams {
            los_intercept_db: 28.0,
            los_distance_coeff: 22.0,
            los_frequency_coeff: 20.0,
            nlos_intercept_db: 13.54,
            nlos_distance_coeff: 39.08,
            nlos_frequency_coeff: 20.0,
            nlos_height_coeff: 0.6,
            shadowing_std_los_db: 4.0,
            shadowing_std_nlos_db: 6.0,
            correlation_distance_los_m: 37.0,
            correlation_distance_nlos_m: 50.0,
        }
    }
}

impl PathlossParams {
    pub fn validate(&self) -> Result<()> {
        if self.los_distance_coeff <= 0.0 || self.nlos_distance_coeff <= 0.0 {
            return Err(Error::invalid(
                "path-loss distance coefficients must be positive",
            ));
        }
        if self.shadowing_std_los_db < 0.0 || self.shadowing_std_nlos_db < 0.0 {
            return Err(Error::invalid(
                "shadowing standard deviation must be non-negative",
            ));
        }
        if self.correlation_distance_los_m <= 0.0 || self.correlation_distance_nlos_m <= 0.0 {
            return Err(Error::invalid("correlation distances must be positive"));
        }
        Ok(())
    }

    pub fn shadowing_std_db(&self, condition: LosCondition) -> f64 {
        match condition {
            LosCondition::Los => self.shadowing_std_los_db,
            LosCondition::Nlos => self.shadowing_std_nlos_db,
        }
    }

    pub fn correlation_distance_m(&self, condition: LosCondition) -> f64 {
        match condition {
            LosCondition::Los => self.correlation_distance_los_m,
            LosCondition::Nlos => self.correlation_distance_nlos_m,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PropagationConfig {
    pub pathloss: PathlossParams,
    pub shadowing: bool,
    /// Exponential spatial correlation of successive shadowing draws.
    pub shadowing_correlated: bool,
    /// Distance over which the LOS draw decorrelates.
    pub los_correlation_m: f64,
    /// Large-scale update period, seconds.
    pub epoch_s: f64,
}

impl Default for PropagationConfig {
    fn default() -> Self {
        PropagationConfig {
            pathloss: PathlossParams::default(),
            shadowing: true,
            shadowing_correlated: true,
            los_correlation_m: 50.0,
            epoch_s: 0.1,
        }
    }
}

impl PropagationConfig {
    pub fn validate(&self) -> Result<()> {
        self.pathloss.validate()?;
        if !(self.los_correlation_m > 0.0) {
            return Err(Error::invalid("LOS correlation distance must be positive"));
        }
        if !(self.epoch_s > 0.0 && self.epoch_s.is_finite()) {
            return Err(Error::invalid(format!(
                "large-scale epoch must be positive, got {}",
                self.epoch_s
            )));
        }
        Ok(())
    }
}

/// Outdoor UMa LOS probability for a UE at most 13 m high.
pub fn los_probability(d2d: f64) -> Result<f64> {
    if !(d2d >= 0.0) {
        return Err(Error::invalid(format!(
            "2D distance must be non-negative, got {d2d}"
        )));
    }
    if d2d <= 18.0 {
        return Ok(1.0);
    }
    let near = 18.0 / d2d;
    Ok(near + (-d2d / 63.0).exp() * (1.0 - near))
}

/// Independent Bernoulli LOS draw, with a fresh shadowing sample.
pub fn sample_los_state(
    d2d: f64,
    now: f64,
    config: &PropagationConfig,
    stream: &mut RandomStream,
) -> Result<LosState> {
    let p = los_probability(d2d)?;
    let condition = if stream.random::<f64>() < p {
        LosCondition::Los
    } else {
        LosCondition::Nlos
    };
    let z: f64 = stream.sample(StandardNormal);
    let shadowing_db = if config.shadowing {
        z * config.pathloss.shadowing_std_db(condition)
    } else {
        0.0
    };
    Ok(LosState {
        condition,
        shadowing_db,
        last_update: now,
    })
}

/// Path loss in dB, shadowing excluded. Distances below 1 m are evaluated at 1 m.
pub fn pathloss_db(
    d3d: f64,
    ue_height: f64,
    condition: LosCondition,
    fc_ghz: f64,
    params: &PathlossParams,
) -> Result<f64> {
    if !(d3d > 0.0) {
        return Err(Error::invalid(format!(
            "3D distance must be positive, got {d3d}"
        )));
    }
    if !(fc_ghz > 0.0) {
        return Err(Error::invalid(format!(
            "carrier frequency must be positive, got {fc_ghz} GHz"
        )));
    }
    let d = d3d.max(1.0);
    let los = params.los_intercept_db
        + params.los_distance_coeff * d.log10()
        + params.los_frequency_coeff * fc_ghz.log10();
    Ok(match condition {
        LosCondition::Los => los,
        LosCondition::Nlos => {
            let nlos = params.nlos_intercept_db
                + params.nlos_distance_coeff * d.log10()
                + params.nlos_frequency_coeff * fc_ghz.log10()
                - params.nlos_height_coeff * (ue_height - 1.5);
            los.max(nlos)
        }
    })
}

/// Gauss-Markov unit-variance process indexed by travelled distance:
/// successive values have correlation `exp(-moved / correlation_distance)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CorrelatedGaussian {
    value: Option<f64>,
}

impl CorrelatedGaussian {
    pub const fn new() -> Self {
        CorrelatedGaussian { value: None }
    }

    pub fn value(&self) -> Option<f64> {
        self.value
    }

    pub fn advance(
        &mut self,
        moved: f64,
        correlation_distance: f64,
        stream: &mut RandomStream,
    ) -> f64 {
        let fresh: f64 = stream.sample(StandardNormal);
        let next = match self.value {
            None => fresh,
            Some(prev) => {
                let rho = (-moved.abs() / correlation_distance).exp();
                rho * prev + (1.0 - rho * rho).sqrt() * fresh
            }
        };
        self.value = Some(next);
        next
    }
}

impl Default for CorrelatedGaussian {
    fn default() -> Self {
        Self::new()
    }
}

/// Uniform variate that is kept with probability `exp(-moved / d)` and
/// redrawn otherwise; thresholding it against the LOS probability gives a
/// Bernoulli LOS state with the right marginal and spatial memory.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpatialUniform {
    value: Option<f64>,
}

impl SpatialUniform {
    pub const fn new() -> Self {
        SpatialUniform { value: None }
    }

    pub fn advance(
        &mut self,
        moved: f64,
        correlation_distance: f64,
        stream: &mut RandomStream,
    ) -> f64 {
        let keep: f64 = stream.random();
        let fresh: f64 = stream.random();
        let next = match self.value {
            Some(prev) if keep < (-moved.abs() / correlation_distance).exp() => prev,
            _ => fresh,
        };
        self.value = Some(next);
        next
    }
}

impl Default for SpatialUniform {
    fn default() -> Self {
        Self::new()
    }
}

/// Large-scale state of one BS-UE link.
#[derive(Clone, Debug)]
pub struct LinkPropagation {
    los_draw: SpatialUniform,
    shadow: CorrelatedGaussian,
    last_distance_marker: Option<crate::geometry::Vec3>,
    pub state: Option<LosState>,
}

impl Default for LinkPropagation {
    fn default() -> Self {
        Self::new()
    }
}

impl LinkPropagation {
    pub fn new() -> Self {
        LinkPropagation {
            los_draw: SpatialUniform::new(),
            shadow: CorrelatedGaussian::new(),
            last_distance_marker: None,
            state: None,
        }
    }

    /// Redraws LOS state and shadowing for a UE now at `ue_pos`.
    pub fn update(
        &mut self,
        d2d: f64,
        ue_pos: crate::geometry::Vec3,
        now: f64,
        config: &PropagationConfig,
        stream: &mut RandomStream,
    ) -> Result<LosState> {
        let moved = self
            .last_distance_marker
            .map(|p| (ue_pos - p).norm())
            .unwrap_or(0.0);
        self.last_distance_marker = Some(ue_pos);
        let u = self
            .los_draw
            .advance(moved, config.los_correlation_m, stream);
        let condition = if u < los_probability(d2d)? {
            LosCondition::Los
        } else {
            LosCondition::Nlos
        };
        let shadowing_db = shadowing_db(&mut self.shadow, moved, condition, config, stream);
        let state = LosState {
            condition,
            shadowing_db,
            last_update: now,
        };
        self.state = Some(state);
        Ok(state)
    }
}

/// Next shadowing value in dB; zero when shadowing is disabled.
pub fn shadowing_db(
    process: &mut CorrelatedGaussian,
    moved: f64,
    condition: LosCondition,
    config: &PropagationConfig,
    stream: &mut RandomStream,
) -> f64 {
    if !config.shadowing {
        return 0.0;
    }
    let z = if config.shadowing_correlated {
        process.advance(
            moved,
            config.pathloss.correlation_distance_m(condition),
            stream,
        )
    } else {
        stream.sample(StandardNormal)
    };
    z * config.pathloss.shadowing_std_db(condition)
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    use super::*;
    use crate::engine::RngStreams;
    use crate::geometry::Vec3;

    #[test]
    fn los_probability_values() {
        assert_eq!(los_probability(10.0).unwrap(), 1.0);
        assert_eq!(los_probability(18.0).unwrap(), 1.0);
        // 18/63 + e^-1 (1 - 18/63), evaluated by hand
        let hand = 18.0 / 63.0 + (-1.0f64).exp() * (45.0 / 63.0);
        assert_relative_eq!(los_probability(63.0).unwrap(), hand, epsilon = 1e-15);
        assert_relative_eq!(hand, 0.5485, epsilon = 1e-4);
        assert!(los_probability(1e6).unwrap() < 1e-4);
        assert!(los_probability(-1.0).is_err());
    }

    #[test]
    fn pathloss_values() {
        let p = PathlossParams::default();
        let los = pathloss_db(100.0, 1.5, LosCondition::Los, 28.0, &p).unwrap();
        // 28 + 22*2 + 20*log10(28) = 100.9431...
        assert_relative_eq!(los, 100.943, epsilon = 1e-3);
        assert_relative_eq!(
            pathloss_db(1.0, 1.5, LosCondition::Los, 1.0, &p).unwrap(),
            28.0,
            epsilon = 1e-12
        );
        assert!(pathloss_db(0.0, 1.5, LosCondition::Los, 28.0, &p).is_err());
        let nlos = pathloss_db(100.0, 1.5, LosCondition::Nlos, 28.0, &p).unwrap();
        assert!(nlos >= los);
    }

    #[test]
    fn sub_meter_distances_clamp() {
        let p = PathlossParams::default();
        let at_1m = pathloss_db(1.0, 1.5, LosCondition::Los, 28.0, &p).unwrap();
        assert_eq!(
            pathloss_db(0.01, 1.5, LosCondition::Los, 28.0, &p).unwrap(),
            at_1m
        );
        assert!(at_1m > 0.0);
    }

    #[test]
    fn certain_los_region_is_always_los() {
        let cfg = PropagationConfig::default();
        let mut s = RngStreams::new(1).stream("los");
        for _ in 0..1000 {
            assert_eq!(
                sample_los_state(12.0, 0.0, &cfg, &mut s).unwrap().condition,
                LosCondition::Los
            );
        }
    }

    #[test]
    fn los_map_is_seed_deterministic() {
        let cfg = PropagationConfig::default();
        let draw = |seed| {
            let mut s = RngStreams::new(seed).stream("los/map");
            (0..200)
                .map(|i| {
                    sample_los_state(20.0 + i as f64, 0.0, &cfg, &mut s)
                        .unwrap()
                        .condition
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(5), draw(5));
    }

    #[test]
    fn empirical_los_fraction_matches_probability() {
        let cfg = PropagationConfig::default();
        let mut s = RngStreams::new(11).stream("los/mc");
        let n = 10_000;
        let hits = (0..n)
            .filter(|_| {
                sample_los_state(63.0, 0.0, &cfg, &mut s).unwrap().condition == LosCondition::Los
            })
            .count();
        let frac = hits as f64 / n as f64;
        assert!((frac - 0.549).abs() < 0.015, "fraction {frac}");
    }

    #[test]
    fn shadowing_disabled_is_zero() {
        let cfg = PropagationConfig {
            shadowing: false,
            ..Default::default()
        };
        let mut s = RngStreams::new(2).stream("sh");
        let mut proc = CorrelatedGaussian::new();
        for _ in 0..10 {
            assert_eq!(
                shadowing_db(&mut proc, 3.0, LosCondition::Nlos, &cfg, &mut s),
                0.0
            );
        }
    }

    #[test]
    fn shadowing_std_matches_config() {
        let cfg = PropagationConfig {
            shadowing_correlated: false,
            ..Default::default()
        };
        let mut s = RngStreams::new(3).stream("sh");
        let mut proc = CorrelatedGaussian::new();
        let n = 100_000;
        let xs: Vec<f64> = (0..n)
            .map(|_| shadowing_db(&mut proc, 0.0, LosCondition::Nlos, &cfg, &mut s))
            .collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let sd = var.sqrt();
        assert!((sd - 6.0).abs() / 6.0 < 0.02, "sd {sd}");
    }

    #[test]
    fn zero_displacement_keeps_shadowing() {
        let cfg = PropagationConfig::default();
        let mut s = RngStreams::new(4).stream("sh");
        let mut proc = CorrelatedGaussian::new();
        let first = shadowing_db(&mut proc, 0.0, LosCondition::Los, &cfg, &mut s);
        let again = shadowing_db(&mut proc, 0.0, LosCondition::Los, &cfg, &mut s);
        assert_eq!(first, again);
    }

    #[test]
    fn correlated_shadowing_autocorrelation() {
        // lag-1 correlation of the stationary process equals exp(-step/d)
        let mut s = RngStreams::new(5).stream("sh");
        let mut proc = CorrelatedGaussian::new();
        let step = 10.0;
        let d = 37.0;
        let xs: Vec<f64> = (0..100_000)
            .map(|_| proc.advance(step, d, &mut s))
            .collect();
        let num: f64 = xs.windows(2).map(|w| w[0] * w[1]).sum();
        let den: f64 = xs.iter().map(|x| x * x).sum();
        assert!((num / den - (-step / d).exp()).abs() < 0.01);
    }

    #[test]
    fn static_link_keeps_its_los_state() {
        let cfg = PropagationConfig::default();
        let mut s = RngStreams::new(6).stream("link");
        let mut link = LinkPropagation::new();
        let pos = Vec3::new(80.0, 0.0, 1.5);
        let first = link.update(80.0, pos, 0.0, &cfg, &mut s).unwrap();
        for k in 1..50 {
            let next = link
                .update(80.0, pos, 0.1 * k as f64, &cfg, &mut s)
                .unwrap();
            assert_eq!(next.condition, first.condition);
            assert_eq!(next.shadowing_db, first.shadowing_db);
        }
    }

    #[test]
    fn spatial_uniform_keeps_marginal() {
        let mut s = RngStreams::new(8).stream("u");
        let mut u = SpatialUniform::new();
        let n = 50_000;
        let below = (0..n)
            .filter(|_| u.advance(20.0, 50.0, &mut s) < 0.3)
            .count();
        assert!((below as f64 / n as f64 - 0.3).abs() < 0.02);
    }

    proptest! {
        #[test]
        fn pathloss_monotone_in_distance(d in 0.5f64..5000.0, step in 0.0f64..100.0, fc in 1.0f64..100.0) {
            let p = PathlossParams::default();
            for c in [LosCondition::Los, LosCondition::Nlos] {
                let a = pathloss_db(d, 1.5, c, fc, &p).unwrap();
                let b = pathloss_db(d + step, 1.5, c, fc, &p).unwrap();
                prop_assert!(b >= a);
            }
        }

        #[test]
        fn nlos_never_below_los(d in 0.5f64..5000.0, h in 1.0f64..13.0, fc in 1.0f64..100.0) {
            let p = PathlossParams::default();
            prop_assert!(
                pathloss_db(d, h, LosCondition::Nlos, fc, &p).unwrap()
                    >= pathloss_db(d, h, LosCondition::Los, fc, &p).unwrap()
            );
        }

        #[test]
        fn los_probability_monotone(d in 0.0f64..5000.0, step in 0.0f64..500.0) {
            let a = los_probability(d).unwrap();
            let b = los_probability(d + step).unwrap();
            prop_assert!((0.0..=1.0).contains(&a));
            prop_assert!(b <= a + 1e-15);
        }
    }
}
