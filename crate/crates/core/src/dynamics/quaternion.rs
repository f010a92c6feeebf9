//! Hamilton quaternions, scalar first.
//!
//! A unit quaternion `q` represents the rotation from the body frame to the
//! inertial frame, so `v_inertial = S(q) * v_body` with `S = quat_to_rotmat(q)`.

use nalgebra::{Matrix3, Vector3};
use std::ops::Mul;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quaternion {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Default for Quaternion {
    fn default() -> Self {
        Self::identity()
    }
}

impl Quaternion {
    pub const fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Self { w, x, y, z }
    }

    pub const fn identity() -> Self {
        Self::new(1.0, 0.0, 0.0, 0.0)
    }

    /// Embeds a 3-vector as a pure quaternion `(0, v)`.
    pub fn pure(v: &Vector3<f64>) -> Self {
        Self::new(0.0, v.x, v.y, v.z)
    }

    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64) -> Self {
        let n = axis.norm();
        if n == 0.0 {
            return Self::identity();
        }
        let (s, c) = (0.5 * angle).sin_cos();
        let a = axis / n;
        Self::new(c, s * a.x, s * a.y, s * a.z)
    }

    /// ZYX (yaw-pitch-roll) Euler angles to quaternion.
    pub fn from_euler(roll: f64, pitch: f64, yaw: f64) -> Self {
        let (sr, cr) = (0.5 * roll).sin_cos();
        let (sp, cp) = (0.5 * pitch).sin_cos();
        let (sy, cy) = (0.5 * yaw).sin_cos();
        Self::new(
            cr * cp * cy + sr * sp * sy,
            sr * cp * cy - cr * sp * sy,
            cr * sp * cy + sr * cp * sy,
            cr * cp * sy - sr * sp * cy,
        )
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn vector(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn norm(&self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn conjugate(&self) -> Self {
        Self::new(self.w, -self.x, -self.y, -self.z)
    }

    pub fn normalize(&self) -> Result<Self> {
        quat_normalize(self)
    }

    pub fn to_rotation_matrix(&self) -> Matrix3<f64> {
        quat_to_rotmat(self)
    }

    pub fn to_euler(&self) -> (f64, f64, f64) {
        quat_to_euler(self)
    }
}

impl Mul for Quaternion {
    type Output = Quaternion;

    fn mul(self, rhs: Quaternion) -> Quaternion {
        quat_multiply(&self, &rhs)
    }
}

/// Hamilton product `a ⊗ b`.
pub fn quat_multiply(a: &Quaternion, b: &Quaternion) -> Quaternion {
    Quaternion::new(
        a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
        a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
        a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
        a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
    )
}

/// Body-to-inertial rotation matrix.
///
/// Uses the `1 - 2(..)` diagonal form, which is orthonormal only for unit `q`.
/// The NMPC model evaluates it on slightly non-unit quaternions and its
/// Jacobian (see [`rotmat_partials`]) is taken of exactly this expression.
pub fn quat_to_rotmat(q: &Quaternion) -> Matrix3<f64> {
    let Quaternion { w, x, y, z } = *q;
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

/// Partial derivatives of [`quat_to_rotmat`] with respect to `(w, x, y, z)`.
pub fn rotmat_partials(q: &Quaternion) -> [Matrix3<f64>; 4] {
    let Quaternion { w, x, y, z } = *q;
    let (w2, x2, y2, z2) = (2.0 * w, 2.0 * x, 2.0 * y, 2.0 * z);
    [
        Matrix3::new(0.0, -z2, y2, z2, 0.0, -x2, -y2, x2, 0.0),
        Matrix3::new(0.0, y2, z2, y2, -2.0 * x2, -w2, z2, w2, -2.0 * x2),
        Matrix3::new(-2.0 * y2, x2, w2, x2, 0.0, z2, -w2, z2, -2.0 * y2),
        Matrix3::new(-2.0 * z2, -w2, x2, w2, -2.0 * z2, y2, x2, y2, 0.0),
    ]
}

pub fn quat_normalize(q: &Quaternion) -> Result<Quaternion> {
    let n = q.norm();
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::Domain(format!(
            "cannot normalize quaternion with norm {n}"
        )));
    }
    Ok(Quaternion::new(q.w / n, q.x / n, q.y / n, q.z / n))
}

/// ZYX Euler angles `(roll, pitch, yaw)` in radians.
pub fn quat_to_euler(q: &Quaternion) -> (f64, f64, f64) {
    let Quaternion { w, x, y, z } = *q;
    let roll = (2.0 * (w * x + y * z)).atan2(1.0 - 2.0 * (x * x + y * y));
    let sinp = (2.0 * (w * y - z * x)).clamp(-1.0, 1.0);
    let pitch = sinp.asin();
    let yaw = (2.0 * (w * z + x * y)).atan2(1.0 - 2.0 * (y * y + z * z));
    (roll, pitch, yaw)
}
