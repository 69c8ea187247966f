//! Small fixed-dimension geometry: vectors, unit-quaternion rotations and
//! rigid transforms.
//!
//! Rotations are stored as unit quaternions `(w, x, y, z)`; matrices are
//! derived on demand. Every constructor renormalizes, so composition drift
//! stays bounded.

use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `|axis| = 1` accepted by [`rotation_from_axis_angle`].
pub const AXIS_UNIT_TOLERANCE: f64 = 1e-6;

/// Below this cross-product magnitude a normal counts as parallel to +z.
pub const POLE_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);
    pub const X: Vec3 = Vec3::new(1.0, 0.0, 0.0);
    pub const Y: Vec3 = Vec3::new(0.0, 1.0, 0.0);
    pub const Z: Vec3 = Vec3::new(0.0, 0.0, 1.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn splat(v: f64) -> Self {
        Self::new(v, v, v)
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

    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm_squared().sqrt()
    }

    /// Unit vector in the same direction, or `None` for a (near) zero vector.
    pub fn try_normalize(self) -> Option<Vec3> {
        let n = self.norm();
        if n > f64::MIN_POSITIVE && n.is_finite() {
            Some(self / n)
        } else {
            None
        }
    }

    /// Unit vector in the same direction. Zero input yields zero.
    pub fn normalize(self) -> Vec3 {
        self.try_normalize().unwrap_or(Vec3::ZERO)
    }

    pub fn distance(self, o: Vec3) -> f64 {
        (self - o).norm()
    }

    pub fn distance_squared(self, o: Vec3) -> f64 {
        (self - o).norm_squared()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn min(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x.min(o.x), self.y.min(o.y), self.z.min(o.z))
    }

    pub fn max(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x.max(o.x), self.y.max(o.y), self.z.max(o.z))
    }

    pub fn abs(self) -> Vec3 {
        Vec3::new(self.x.abs(), self.y.abs(), self.z.abs())
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    /// Component by axis index (0 = x, 1 = y, 2 = z).
    pub fn get(self, axis: usize) -> f64 {
        match axis {
            0 => self.x,
            1 => self.y,
            2 => self.z,
            _ => panic!("axis index {axis} out of range"),
        }
    }

    /// Angle to another vector in radians, in `[0, π]`.
    pub fn angle_to(self, o: Vec3) -> f64 {
        // atan2 form stays accurate near 0 and π
        self.cross(o).norm().atan2(self.dot(o))
    }
}

impl From<[f64; 3]> for Vec3 {
    fn from(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }
}

impl From<Vec3> for [f64; 3] {
    fn from(v: Vec3) -> Self {
        v.to_array()
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

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Mul<Vec3> for f64 {
    type Output = Vec3;
    fn mul(self, v: Vec3) -> Vec3 {
        v * self
    }
}

impl Div<f64> for Vec3 {
    type Output = Vec3;
    fn div(self, s: f64) -> Vec3 {
        Vec3::new(self.x / s, self.y / s, self.z / s)
    }
}

/// Row-major 3×3 matrix.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Mat3(pub [[f64; 3]; 3]);

impl Mat3 {
    pub const IDENTITY: Mat3 = Mat3([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);

    pub fn from_cols(c0: Vec3, c1: Vec3, c2: Vec3) -> Self {
        Mat3([[c0.x, c1.x, c2.x], [c0.y, c1.y, c2.y], [c0.z, c1.z, c2.z]])
    }

    pub fn col(&self, j: usize) -> Vec3 {
        Vec3::new(self.0[0][j], self.0[1][j], self.0[2][j])
    }

    pub fn transpose(&self) -> Mat3 {
        let m = &self.0;
        Mat3([
            [m[0][0], m[1][0], m[2][0]],
            [m[0][1], m[1][1], m[2][1]],
            [m[0][2], m[1][2], m[2][2]],
        ])
    }

    pub fn mul_vec(&self, v: Vec3) -> Vec3 {
        let m = &self.0;
        Vec3::new(
            m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
            m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
            m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z,
        )
    }

    pub fn mul_mat(&self, o: &Mat3) -> Mat3 {
        let mut out = [[0.0; 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = (0..3).map(|k| self.0[i][k] * o.0[k][j]).sum();
            }
        }
        Mat3(out)
    }

    pub fn determinant(&self) -> f64 {
        let m = &self.0;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    /// Largest absolute entry of `self - other`.
    pub fn max_abs_diff(&self, other: &Mat3) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                worst = worst.max((self.0[i][j] - other.0[i][j]).abs());
            }
        }
        worst
    }
}

/// A proper rotation, stored as a unit quaternion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation {
    w: f64,
    x: f64,
    y: f64,
    z: f64,
}

impl Default for Rotation {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl Rotation {
    pub const IDENTITY: Rotation = Rotation {
        w: 1.0,
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    /// Builds from quaternion components `(w, x, y, z)`, normalizing them.
    pub fn from_quaternion(w: f64, x: f64, y: f64, z: f64) -> Result<Self> {
        let n = (w * w + x * x + y * y + z * z).sqrt();
        if !(n.is_finite() && n > 1e-12) {
            return Err(Error::invalid(format!(
                "quaternion [{w}, {x}, {y}, {z}] cannot be normalized"
            )));
        }
        if (n - 1.0).abs() <= 4.0 * f64::EPSILON {
            return Ok(Self::canonical(w, x, y, z));
        }
        Ok(Self::canonical(w / n, x / n, y / n, z / n))
    }

    // q and -q are the same rotation; keep w >= 0 so equal rotations compare equal.
    fn canonical(w: f64, x: f64, y: f64, z: f64) -> Self {
        if w < 0.0 || (w == 0.0 && (x, y, z) < (0.0, 0.0, 0.0)) {
            Rotation {
                w: -w,
                x: -x,
                y: -y,
                z: -z,
            }
        } else {
            Rotation { w, x, y, z }
        }
    }

    fn renormalized(w: f64, x: f64, y: f64, z: f64) -> Self {
        let n = (w * w + x * x + y * y + z * z).sqrt();
        Self::canonical(w / n, x / n, y / n, z / n)
    }

    /// Quaternion components as `[w, x, y, z]` with `w >= 0`.
    pub fn quaternion(&self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn matrix(&self) -> Mat3 {
        let (w, x, y, z) = (self.w, self.x, self.y, self.z);
        Mat3([
            [
                1.0 - 2.0 * (y * y + z * z),
                2.0 * (x * y - w * z),
                2.0 * (x * z + w * y),
            ],
            [
                2.0 * (x * y + w * z),
                1.0 - 2.0 * (x * x + z * z),
                2.0 * (y * z - w * x),
            ],
            [
                2.0 * (x * z - w * y),
                2.0 * (y * z + w * x),
                1.0 - 2.0 * (x * x + y * y),
            ],
        ])
    }

    /// Recovers the rotation from an orthonormal matrix (Shepperd's method).
    pub fn from_matrix(m: &Mat3) -> Result<Self> {
        let r = &m.0;
        let trace = r[0][0] + r[1][1] + r[2][2];
        let (w, x, y, z) = if trace > 0.0 {
            let s = (trace + 1.0).sqrt() * 2.0;
            (
                0.25 * s,
                (r[2][1] - r[1][2]) / s,
                (r[0][2] - r[2][0]) / s,
                (r[1][0] - r[0][1]) / s,
            )
        } else if r[0][0] > r[1][1] && r[0][0] > r[2][2] {
            let s = (1.0 + r[0][0] - r[1][1] - r[2][2]).sqrt() * 2.0;
            (
                (r[2][1] - r[1][2]) / s,
                0.25 * s,
                (r[0][1] + r[1][0]) / s,
                (r[0][2] + r[2][0]) / s,
            )
        } else if r[1][1] > r[2][2] {
            let s = (1.0 + r[1][1] - r[0][0] - r[2][2]).sqrt() * 2.0;
            (
                (r[0][2] - r[2][0]) / s,
                (r[0][1] + r[1][0]) / s,
                0.25 * s,
                (r[1][2] + r[2][1]) / s,
            )
        } else {
            let s = (1.0 + r[2][2] - r[0][0] - r[1][1]).sqrt() * 2.0;
            (
                (r[1][0] - r[0][1]) / s,
                (r[0][2] + r[2][0]) / s,
                (r[1][2] + r[2][1]) / s,
                0.25 * s,
            )
        };
        Self::from_quaternion(w, x, y, z)
    }

    /// Axis-angle decomposition with the angle in `[0, π]`.
    ///
    /// The identity returns `(+x, 0)`.
    pub fn to_axis_angle(&self) -> (Vec3, f64) {
        let v = Vec3::new(self.x, self.y, self.z);
        let s = v.norm();
        if s < 1e-15 {
            return (Vec3::X, 0.0);
        }
        (v / s, 2.0 * s.atan2(self.w))
    }

    pub fn apply(&self, v: Vec3) -> Vec3 {
        // v' = v + 2w (u × v) + 2 u × (u × v)
        let u = Vec3::new(self.x, self.y, self.z);
        let t = u.cross(v) * 2.0;
        v + t * self.w + u.cross(t)
    }

    pub fn inverse(&self) -> Rotation {
        Self::canonical(self.w, -self.x, -self.y, -self.z)
    }

    /// `self * other`: applies `other` first.
    pub fn compose(&self, o: &Rotation) -> Rotation {
        let (a, b) = (self, o);
        Self::renormalized(
            a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
        )
    }

    /// Image of the local +z axis (the approach axis of a target frame).
    pub fn z_axis(&self) -> Vec3 {
        self.apply(Vec3::Z)
    }

    /// Angle of the relative rotation between two rotations, in `[0, π]`.
    pub fn angle_to(&self, o: &Rotation) -> f64 {
        let dot = (self.w * o.w + self.x * o.x + self.y * o.y + self.z * o.z).abs();
        2.0 * dot.min(1.0).acos()
    }
}

impl Serialize for Rotation {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.quaternion().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Rotation {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let [w, x, y, z] = <[f64; 4]>::deserialize(d)?;
        Rotation::from_quaternion(w, x, y, z).map_err(serde::de::Error::custom)
    }
}

/// Rotation by `angle` radians about the unit `axis`, right-hand rule.
pub fn rotation_from_axis_angle(axis: Vec3, angle: f64) -> Result<Rotation> {
    let n = axis.norm();
    if !n.is_finite() || (n - 1.0).abs() > AXIS_UNIT_TOLERANCE {
        return Err(Error::invalid(format!(
            "rotation axis must be unit length, got |axis| = {n}"
        )));
    }
    if !angle.is_finite() {
        return Err(Error::invalid("rotation angle must be finite"));
    }
    let a = axis / n;
    let (s, c) = (angle * 0.5).sin_cos();
    Ok(Rotation::renormalized(c, a.x * s, a.y * s, a.z * s))
}

/// Rotation `R` with `R · (0,0,1) = n`.
///
/// Built as a rotation about `normalize(n × z)` by `-acos(n · z)`. At the
/// poles the cross product vanishes: `n ≈ +z` gives the identity and
/// `n ≈ -z` gives a half turn about +x.
pub fn align_z_to_normal(n: Vec3) -> Rotation {
    let n = n.normalize();
    let cross = n.cross(Vec3::Z);
    let cos = n.dot(Vec3::Z).clamp(-1.0, 1.0);
    if cross.norm() < POLE_TOLERANCE {
        return if cos > 0.0 {
            Rotation::IDENTITY
        } else {
            Rotation::canonical(0.0, 1.0, 0.0, 0.0)
        };
    }
    let axis = cross.normalize();
    let angle = -cos.acos();
    rotation_from_axis_angle(axis, angle).expect("axis is unit by construction")
}

/// Rigid motion `p ↦ R p + t`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RigidTransform {
    #[serde(rename = "quaternion")]
    pub rotation: Rotation,
    pub translation: Vec3,
}

impl RigidTransform {
    pub const IDENTITY: RigidTransform = RigidTransform {
        rotation: Rotation::IDENTITY,
        translation: Vec3::ZERO,
    };

    pub fn new(rotation: Rotation, translation: Vec3) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn from_translation(t: Vec3) -> Self {
        Self::new(Rotation::IDENTITY, t)
    }

    pub fn from_rotation(r: Rotation) -> Self {
        Self::new(r, Vec3::ZERO)
    }

    pub fn apply(&self, p: Vec3) -> Vec3 {
        self.rotation.apply(p) + self.translation
    }

    pub fn apply_vector(&self, v: Vec3) -> Vec3 {
        self.rotation.apply(v)
    }

    pub fn inverse(&self) -> RigidTransform {
        let r = self.rotation.inverse();
        RigidTransform::new(r, -r.apply(self.translation))
    }

    /// Camera-style pose at `eye` looking at `target`: local +z forward,
    /// +y pointing along `-up` (image rows grow downward), +x to the right.
    pub fn look_at(eye: Vec3, target: Vec3, up: Vec3) -> Result<Self> {
        let forward = (target - eye)
            .try_normalize()
            .ok_or_else(|| Error::invalid("look_at: eye and target coincide"))?;
        let right = forward
            .cross(up)
            .try_normalize()
            .ok_or_else(|| Error::invalid("look_at: up is parallel to the view direction"))?;
        let down = forward.cross(right);
        let m = Mat3::from_cols(right, down, forward);
        Ok(RigidTransform::new(Rotation::from_matrix(&m)?, eye))
    }
}

/// `(a ∘ b)(p) = a(b(p))`.
pub fn compose(a: &RigidTransform, b: &RigidTransform) -> RigidTransform {
    RigidTransform::new(
        a.rotation.compose(&b.rotation),
        a.rotation.apply(b.translation) + a.translation,
    )
}
