use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::propagation::LosCondition;

/// Nakagami-m severity per LOS condition. `omega` is the mean power gain.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NakagamiParams {
    pub m_los: f64,
    pub m_nlos: f64,
    #[serde(default = "unit")]
    pub omega: f64,
}

fn unit() -> f64 {
    1.0
}

impl NakagamiParams {
    /// Severe fading: m = 3 in LOS, 2 in NLOS.
    pub const SETTING_A: NakagamiParams = NakagamiParams {
        m_los: 3.0,
        m_nlos: 2.0,
        omega: 1.0,
    };

    /// Mild fading: m = 20 in LOS, 10 in NLOS.
    pub const SETTING_B: NakagamiParams = NakagamiParams {
        m_los: 20.0,
        m_nlos: 10.0,
        omega: 1.0,
    };

    pub fn validate(&self) -> Result<()> {
        for m in [self.m_los, self.m_nlos] {
            check_m(m)?;
        }
        check_omega(self.omega)
    }

    pub fn m(&self, condition: LosCondition) -> f64 {
        match condition {
            LosCondition::Los => self.m_los,
            LosCondition::Nlos => self.m_nlos,
        }
    }
}

fn check_m(m: f64) -> Result<()> {
    if !(m >= 0.5) || !m.is_finite() {
        return Err(Error::invalid(format!(
            "Nakagami m must be at least 0.5, got {m}"
        )));
    }
    Ok(())
}

fn check_omega(omega: f64) -> Result<()> {
    if !(omega > 0.0) || !omega.is_finite() {
        return Err(Error::invalid(format!(
            "Nakagami omega must be positive, got {omega}"
        )));
    }
    Ok(())
}

/// Power gain of a Nakagami-m amplitude: `Gamma(shape = m, scale = omega / m)`.
pub fn sample_nakagami_gain<R: Rng + ?Sized>(m: f64, omega: f64, rng: &mut R) -> Result<f64> {
    check_m(m)?;
    check_omega(omega)?;
    let gamma = Gamma::new(m, omega / m).map_err(|e| Error::invalid(e.to_string()))?;
    Ok(gamma.sample(rng))
}
