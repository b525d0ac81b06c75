//! Three-vectors and the NED / body-frame rotation helpers.

use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[T; 3]", into = "[T; 3]")]
#[serde(bound = "T: Real")]
pub struct Vec3<T>(pub [T; 3]);

impl<T: Real> Vec3<T> {
    pub fn new(x: T, y: T, z: T) -> Self {
        Self([x, y, z])
    }

    pub fn zeros() -> Self {
        Self([T::zero(); 3])
    }

    pub fn x(&self) -> T {
        self.0[0]
    }

    pub fn y(&self) -> T {
        self.0[1]
    }

    pub fn z(&self) -> T {
        self.0[2]
    }

    pub fn dot(&self, o: &Self) -> T {
        self.0[0] * o.0[0] + self.0[1] * o.0[1] + self.0[2] * o.0[2]
    }

    pub fn cross(&self, o: &Self) -> Self {
        let [a1, a2, a3] = self.0;
        let [b1, b2, b3] = o.0;
        Self([a2 * b3 - a3 * b2, a3 * b1 - a1 * b3, a1 * b2 - a2 * b1])
    }

    pub fn norm(&self) -> T {
        self.dot(self).sqrt()
    }

    /// Element-wise product.
    pub fn hadamard(&self, o: &Self) -> Self {
        Self([self.0[0] * o.0[0], self.0[1] * o.0[1], self.0[2] * o.0[2]])
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self(self.0.map(f))
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl<T> From<[T; 3]> for Vec3<T> {
    fn from(a: [T; 3]) -> Self {
        Self(a)
    }
}

impl<T> From<Vec3<T>> for [T; 3] {
    fn from(v: Vec3<T>) -> Self {
        v.0
    }
}

impl<T> Index<usize> for Vec3<T> {
    type Output = T;
    fn index(&self, i: usize) -> &T {
        &self.0[i]
    }
}

impl<T> IndexMut<usize> for Vec3<T> {
    fn index_mut(&mut self, i: usize) -> &mut T {
        &mut self.0[i]
    }
}

impl<T: Real> Add for Vec3<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self([self.0[0] + o.0[0], self.0[1] + o.0[1], self.0[2] + o.0[2]])
    }
}

impl<T: Real> AddAssign for Vec3<T> {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl<T: Real> Sub for Vec3<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self([self.0[0] - o.0[0], self.0[1] - o.0[1], self.0[2] - o.0[2]])
    }
}

impl<T: Real> Neg for Vec3<T> {
    type Output = Self;
    fn neg(self) -> Self {
        self.map(|v| -v)
    }
}

impl<T: Real> Mul<T> for Vec3<T> {
    type Output = Self;
    fn mul(self, s: T) -> Self {
        self.map(|v| v * s)
    }
}

/// Precomputed trigonometry of a roll/pitch/yaw (ZYX) attitude.
#[derive(Debug, Clone, Copy)]
pub struct EulerTrig<T> {
    pub sin_roll: T,
    pub cos_roll: T,
    pub sin_pitch: T,
    pub cos_pitch: T,
    pub sin_yaw: T,
    pub cos_yaw: T,
}

impl<T: Real> EulerTrig<T> {
    pub fn new(attitude: &Vec3<T>) -> Self {
        let (sin_roll, cos_roll) = attitude[0].sin_cos();
        let (sin_pitch, cos_pitch) = attitude[1].sin_cos();
        let (sin_yaw, cos_yaw) = attitude[2].sin_cos();
        Self {
            sin_roll,
            cos_roll,
            sin_pitch,
            cos_pitch,
            sin_yaw,
            cos_yaw,
        }
    }

    /// Rotates a body-frame vector into the NED world frame.
    pub fn body_to_world(&self, v: &Vec3<T>) -> Vec3<T> {
        let (sr, cr, sp, cp, sy, cy) = self.parts();
        let [x, y, z] = v.0;
        Vec3([
            cp * cy * x + (sr * sp * cy - cr * sy) * y + (cr * sp * cy + sr * sy) * z,
            cp * sy * x + (sr * sp * sy + cr * cy) * y + (cr * sp * sy - sr * cy) * z,
            -sp * x + sr * cp * y + cr * cp * z,
        ])
    }

    /// Rotates a world-frame vector into the body frame (transpose of [`Self::body_to_world`]).
    pub fn world_to_body(&self, v: &Vec3<T>) -> Vec3<T> {
        let (sr, cr, sp, cp, sy, cy) = self.parts();
        let [x, y, z] = v.0;
        Vec3([
            cp * cy * x + cp * sy * y - sp * z,
            (sr * sp * cy - cr * sy) * x + (sr * sp * sy + cr * cy) * y + sr * cp * z,
            (cr * sp * cy + sr * sy) * x + (cr * sp * sy - sr * cy) * y + cr * cp * z,
        ])
    }

    /// Gravity (pointing down in NED) expressed in the body frame.
    pub fn gravity_body(&self, g: T) -> Vec3<T> {
        Vec3([
            -g * self.sin_pitch,
            g * self.sin_roll * self.cos_pitch,
            g * self.cos_roll * self.cos_pitch,
        ])
    }

    /// Euler angle rates from body rates. Singular at pitch = ±π/2.
    pub fn euler_rates(&self, rates: &Vec3<T>) -> Vec3<T> {
        let [p, q, r] = rates.0;
        let tan_pitch = self.sin_pitch / self.cos_pitch;
        let qs_rc = q * self.sin_roll + r * self.cos_roll;
        Vec3([
            p + qs_rc * tan_pitch,
            q * self.cos_roll - r * self.sin_roll,
            qs_rc / self.cos_pitch,
        ])
    }

    fn parts(&self) -> (T, T, T, T, T, T) {
        (
            self.sin_roll,
            self.cos_roll,
            self.sin_pitch,
            self.cos_pitch,
            self.sin_yaw,
            self.cos_yaw,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rotation_round_trips() {
        let trig = EulerTrig::new(&Vec3::<f64>::new(0.3, -0.4, 2.0));
        let v = Vec3::new(1.0, -2.0, 0.5);
        let back = trig.world_to_body(&trig.body_to_world(&v));
        for k in 0..3 {
            assert!((back[k] - v[k]).abs() < 1e-14);
        }
        assert!((trig.body_to_world(&v).norm() - v.norm()).abs() < 1e-14);
    }

    #[test]
    fn gravity_matches_rotation() {
        let trig = EulerTrig::new(&Vec3::<f64>::new(-0.7, 0.2, 1.1));
        let g = trig.world_to_body(&Vec3::new(0.0, 0.0, 9.81));
        let h = trig.gravity_body(9.81);
        for k in 0..3 {
            assert!((g[k] - h[k]).abs() < 1e-14);
        }
    }

    #[test]
    fn yaw_rotates_forward_axis() {
        let trig = EulerTrig::new(&Vec3::new(0.0, 0.0, std::f64::consts::FRAC_PI_2));
        let w = trig.body_to_world(&Vec3::new(1.0, 0.0, 0.0));
        assert!(w.x().abs() < 1e-15);
        assert!((w.y() - 1.0).abs() < 1e-15);
    }
}
