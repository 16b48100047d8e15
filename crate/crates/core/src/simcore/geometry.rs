use std::f64::consts::PI;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

/// Position or velocity in the arena frame: x north, y east, z altitude (up).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    pub fn horizontal_norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    /// Unit vector, or zero for a zero-length input.
    pub fn normalized(self) -> Vec3 {
        let n = self.norm();
        if n > 0.0 {
            self * (1.0 / n)
        } else {
            Vec3::ZERO
        }
    }

    pub fn distance(self, o: Vec3) -> f64 {
        (o - self).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Heading-style bearing of `to` seen from `self`, clockwise from north.
    pub fn bearing_to(self, to: Vec3) -> f64 {
        let d = to - self;
        d.y.atan2(d.x)
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
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

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// Wraps an angle into [-π, π).
pub fn wrap_pi(a: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let w = a - two_pi * ((a + PI) / two_pi).floor();
    // floor rounding can land exactly on +π
    if w >= PI {
        w - two_pi
    } else {
        w
    }
}

/// Unit direction for a heading and pitch.
pub fn direction(heading: f64, pitch: f64) -> Vec3 {
    let (sp, cp) = pitch.sin_cos();
    let (sh, ch) = heading.sin_cos();
    Vec3::new(cp * ch, cp * sh, sp)
}

/// Minimum separation of two points moving linearly over one interval.
pub fn closest_approach(a0: Vec3, a1: Vec3, b0: Vec3, b1: Vec3) -> f64 {
    let r0 = a0 - b0;
    let dr = (a1 - b1) - r0;
    let denom = dr.norm_squared();
    let s = if denom > 0.0 {
        (-r0.dot(dr) / denom).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (r0 + dr * s).norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn bearing_convention_is_clockwise_from_north() {
        let o = Vec3::ZERO;
        assert_eq!(o.bearing_to(Vec3::new(1.0, 0.0, 0.0)), 0.0);
        assert!((o.bearing_to(Vec3::new(0.0, 1.0, 0.0)) - PI / 2.0).abs() < 1e-15);
        assert!((o.bearing_to(Vec3::new(0.0, -1.0, 0.0)) + PI / 2.0).abs() < 1e-15);
    }

    #[test]
    fn wrap_maps_pi_to_minus_pi() {
        assert_eq!(wrap_pi(PI), -PI);
        assert_eq!(wrap_pi(-PI), -PI);
        assert!((wrap_pi(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
    }

    #[test]
    fn closest_approach_catches_pass_through() {
        // 1 km/step missile passes straight through a stationary target
        let d = closest_approach(
            Vec3::new(-500.0, 0.0, 0.0),
            Vec3::new(500.0, 0.0, 0.0),
            Vec3::new(0.0, 30.0, 0.0),
            Vec3::new(0.0, 30.0, 0.0),
        );
        assert!((d - 30.0).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn wrap_pi_lands_in_half_open_range(a in -1e4f64..1e4) {
            let w = wrap_pi(a);
            prop_assert!((-PI..PI).contains(&w));
            let k = ((a - w) / (2.0 * PI)).round();
            prop_assert!((a - w - k * 2.0 * PI).abs() < 1e-9);
        }
    }
}
