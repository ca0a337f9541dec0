//! Small geometry and unit-conversion helpers shared across modules.
//!
//! The Earth model is a sphere; all Cartesian coordinates are Earth-fixed
//! (ECEF) in meters unless stated otherwise.

use std::ops::{Add, Mul, Sub};

/// Mean Earth radius (m).
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;
/// Earth gravitational parameter mu (m^3/s^2).
pub const EARTH_MU_M3_S2: f64 = 3.986_004_418e14;
/// Earth rotation rate (rad/s).
pub const EARTH_ROTATION_RAD_S: f64 = 7.292_115_9e-5;
/// Speed of light (m/s).
pub const SPEED_OF_LIGHT_M_S: f64 = 299_792_458.0;

/// 3-component Cartesian vector.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn dot(self, other: Vec3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn normalized(self) -> Vec3 {
        let n = self.norm();
        Vec3::new(self.x / n, self.y / n, self.z / n)
    }

    pub fn distance(self, other: Vec3) -> f64 {
        (self - other).norm()
    }

    /// Angle to another vector in radians, in [0, pi].
    pub fn angle_to(self, other: Vec3) -> f64 {
        let c = self.dot(other) / (self.norm() * other.norm());
        c.clamp(-1.0, 1.0).acos()
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, rhs: Vec3) -> Vec3 {
        Vec3::new(self.x + rhs.x, self.y + rhs.y, self.z + rhs.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, rhs: Vec3) -> Vec3 {
        Vec3::new(self.x - rhs.x, self.y - rhs.y, self.z - rhs.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

/// Unit direction vector for a geodetic point on the spherical Earth.
pub fn geodetic_unit(lat_deg: f64, lon_deg: f64) -> Vec3 {
    let lat = lat_deg.to_radians();
    let lon = lon_deg.to_radians();
    Vec3::new(lat.cos() * lon.cos(), lat.cos() * lon.sin(), lat.sin())
}

/// ECEF position of a geodetic point on a sphere of the given radius.
pub fn geodetic_to_ecef(lat_deg: f64, lon_deg: f64, radius_m: f64) -> Vec3 {
    geodetic_unit(lat_deg, lon_deg) * radius_m
}

/// Power ratio from decibels.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Decibels from a power ratio.
pub fn linear_to_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_vectors_hit_the_axes() {
        let p = geodetic_unit(0.0, 0.0);
        assert!((p.x - 1.0).abs() < 1e-15 && p.y.abs() < 1e-15 && p.z.abs() < 1e-15);
        let n = geodetic_unit(90.0, 0.0);
        assert!((n.z - 1.0).abs() < 1e-15);
        let e = geodetic_unit(0.0, 90.0);
        assert!((e.y - 1.0).abs() < 1e-15);
    }

    #[test]
    fn db_roundtrip() {
        for db in [-30.0, -3.0, 0.0, 0.5, 3.0, 30.0] {
            assert!((linear_to_db(db_to_linear(db)) - db).abs() < 1e-12);
        }
    }

    #[test]
    fn angle_between_orthogonal_axes() {
        let a = Vec3::new(1.0, 0.0, 0.0);
        let b = Vec3::new(0.0, 2.0, 0.0);
        assert!((a.angle_to(b) - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
    }
}
