use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

/// Cartesian point or vector in meters; z is height above ground.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 {
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn norm(self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn norm_2d(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dot(self, other: Vec3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    /// Zenith/azimuth of this vector, see [`Direction`].
    pub fn direction(self) -> Direction {
        let r = self.norm();
        if r == 0.0 {
            return Direction {
                zenith: 0.0,
                azimuth: 0.0,
            };
        }
        Direction {
            zenith: (self.z / r).clamp(-1.0, 1.0).acos(),
            azimuth: self.y.atan2(self.x),
        }
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, k: f64) -> Vec3 {
        Vec3::new(self.x * k, self.y * k, self.z * k)
    }
}

/// Direction in the global frame: `zenith` measured from +z (vertical),
/// `azimuth` from +x towards +y. Every array is a vertical panel in the y-z
/// plane, so these are also the array-local angles.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Direction {
    pub zenith: f64,
    pub azimuth: f64,
}

impl Direction {
    pub fn new(zenith: f64, azimuth: f64) -> Self {
        Direction { zenith, azimuth }
    }

    pub fn unit(self) -> Vec3 {
        let (sz, cz) = self.zenith.sin_cos();
        let (sa, ca) = self.azimuth.sin_cos();
        Vec3::new(sz * ca, sz * sa, cz)
    }
}

#[cfg(test)]
mod tests {
    use std::f64::consts::FRAC_PI_2;

    use super::*;

    #[test]
    fn direction_round_trip() {
        let v = Vec3::new(3.0, -4.0, 2.0);
        let u = v.direction().unit();
        let n = v.norm();
        assert!((u.x - v.x / n).abs() < 1e-12);
        assert!((u.y - v.y / n).abs() < 1e-12);
        assert!((u.z - v.z / n).abs() < 1e-12);
    }

    #[test]
    fn horizontal_vector_has_right_angle_zenith() {
        let d = Vec3::new(0.0, 5.0, 0.0).direction();
        assert!((d.zenith - FRAC_PI_2).abs() < 1e-12);
        assert!((d.azimuth - FRAC_PI_2).abs() < 1e-12);
    }
}
