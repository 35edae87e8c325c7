//! Frame algebra in the global North-East-Down frame.
//!
//! Body frames follow the aerospace convention: x forward, y right, z down.
//! Orientations are unit quaternions; yaw/pitch/roll use the Z-Y-X sequence
//! with yaw positive from North towards East.

use std::f64::consts::PI;
use std::ops::{Add, AddAssign, Div, Index, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

/// A point or vector in NED coordinates (meters).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Vec3 {
    pub n: f64,
    pub e: f64,
    pub d: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);
    pub const NORTH: Vec3 = Vec3::new(1.0, 0.0, 0.0);
    pub const EAST: Vec3 = Vec3::new(0.0, 1.0, 0.0);
    pub const DOWN: Vec3 = Vec3::new(0.0, 0.0, 1.0);

    pub const fn new(n: f64, e: f64, d: f64) -> Self {
        Self { n, e, d }
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.n * o.n + self.e * o.e + self.d * o.d
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.e * o.d - self.d * o.e,
            self.d * o.n - self.n * o.d,
            self.n * o.e - self.e * o.n,
        )
    }

    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm_squared().sqrt()
    }

    /// Length of the north/east projection.
    pub fn horizontal_norm(self) -> f64 {
        self.n.hypot(self.e)
    }

    pub fn horizontal(self) -> Vec3 {
        Vec3::new(self.n, self.e, 0.0)
    }

    /// Unit vector in the same direction, or `None` for a (near) zero vector.
    pub fn normalized(self) -> Option<Vec3> {
        let len = self.norm();
        (len > 1e-300 && len.is_finite()).then(|| self / len)
    }

    pub fn distance(self, o: Vec3) -> f64 {
        (self - o).norm()
    }

    pub fn is_finite(self) -> bool {
        self.n.is_finite() && self.e.is_finite() && self.d.is_finite()
    }

    pub fn component_min(self, o: Vec3) -> Vec3 {
        Vec3::new(self.n.min(o.n), self.e.min(o.e), self.d.min(o.d))
    }

    pub fn component_max(self, o: Vec3) -> Vec3 {
        Vec3::new(self.n.max(o.n), self.e.max(o.e), self.d.max(o.d))
    }

    /// Altitude above the `d = 0` datum (up-positive).
    pub fn altitude(self) -> f64 {
        0.0 - self.d
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.n, self.e, self.d]
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

impl Index<usize> for Vec3 {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        match i {
            0 => &self.n,
            1 => &self.e,
            2 => &self.d,
            _ => panic!("Vec3 index {i} out of range"),
        }
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.n + o.n, self.e + o.e, self.d + o.d)
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
        Vec3::new(self.n - o.n, self.e - o.e, self.d - o.d)
    }
}

impl SubAssign for Vec3 {
    fn sub_assign(&mut self, o: Vec3) {
        *self = *self - o;
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.n * s, self.e * s, self.d * s)
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
        Vec3::new(self.n / s, self.e / s, self.d / s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.n, -self.e, -self.d)
    }
}

/// Rotation quaternion, Hamilton convention, `w` scalar part.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct Quaternion {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Default for Quaternion {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl From<[f64; 4]> for Quaternion {
    fn from(a: [f64; 4]) -> Self {
        Quaternion::new(a[0], a[1], a[2], a[3])
    }
}

impl From<Quaternion> for [f64; 4] {
    fn from(q: Quaternion) -> Self {
        [q.w, q.x, q.y, q.z]
    }
}

impl Quaternion {
    pub const IDENTITY: Quaternion = Quaternion::new(1.0, 0.0, 0.0, 0.0);

    pub const fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Self { w, x, y, z }
    }

    /// Rotation of `angle` radians about `axis` (need not be normalized).
    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Self {
        let Some(a) = axis.normalized() else {
            return Self::IDENTITY;
        };
        let (s, c) = (angle / 2.0).sin_cos();
        Quaternion::new(c, a.n * s, a.e * s, a.d * s)
    }

    /// Z-Y-X (yaw, pitch, roll) Euler angles in radians.
    pub fn from_ypr(yaw: f64, pitch: f64, roll: f64) -> Self {
        let qz = Self::from_axis_angle(Vec3::DOWN, yaw);
        let qy = Self::from_axis_angle(Vec3::EAST, pitch);
        let qx = Self::from_axis_angle(Vec3::NORTH, roll);
        (qz * qy * qx).normalize()
    }

    pub fn from_yaw(yaw: f64) -> Self {
        Self::from_axis_angle(Vec3::DOWN, yaw)
    }

    /// Inverse of [`Quaternion::from_ypr`]; returns `(yaw, pitch, roll)`.
    pub fn to_ypr(self) -> (f64, f64, f64) {
        let m = self.to_matrix();
        let pitch = (-m[2][0]).clamp(-1.0, 1.0).asin();
        if (m[2][0].abs() - 1.0).abs() < 1e-12 {
            // Gimbal lock: fold roll into yaw.
            let yaw = (-m[0][1]).atan2(m[1][1]);
            return (yaw, pitch, 0.0);
        }
        let yaw = m[1][0].atan2(m[0][0]);
        let roll = m[2][1].atan2(m[2][2]);
        (yaw, pitch, roll)
    }

    pub fn yaw(self) -> f64 {
        self.to_ypr().0
    }

    pub fn norm(self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn normalize(self) -> Self {
        let n = self.norm();
        if n == 0.0 || !n.is_finite() {
            return Self::IDENTITY;
        }
        Quaternion::new(self.w / n, self.x / n, self.y / n, self.z / n)
    }

    pub fn conjugate(self) -> Self {
        Quaternion::new(self.w, -self.x, -self.y, -self.z)
    }

    pub fn is_finite(self) -> bool {
        self.w.is_finite() && self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn rotate(self, v: Vec3) -> Vec3 {
        // v' = v + 2w(q x v) + 2 q x (q x v)
        let q = Vec3::new(self.x, self.y, self.z);
        let t = q.cross(v) * 2.0;
        v + t * self.w + q.cross(t)
    }

    /// Row-major rotation matrix.
    pub fn to_matrix(self) -> [[f64; 3]; 3] {
        let Quaternion { w, x, y, z } = self;
        [
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
        ]
    }

    /// Quaternion of a proper rotation matrix (row-major).
    pub fn from_matrix(m: [[f64; 3]; 3]) -> Self {
        let trace = m[0][0] + m[1][1] + m[2][2];
        let q = if trace > 0.0 {
            let s = (trace + 1.0).sqrt() * 2.0;
            Quaternion::new(
                0.25 * s,
                (m[2][1] - m[1][2]) / s,
                (m[0][2] - m[2][0]) / s,
                (m[1][0] - m[0][1]) / s,
            )
        } else if m[0][0] > m[1][1] && m[0][0] > m[2][2] {
            let s = (1.0 + m[0][0] - m[1][1] - m[2][2]).sqrt() * 2.0;
            Quaternion::new(
                (m[2][1] - m[1][2]) / s,
                0.25 * s,
                (m[0][1] + m[1][0]) / s,
                (m[0][2] + m[2][0]) / s,
            )
        } else if m[1][1] > m[2][2] {
            let s = (1.0 + m[1][1] - m[0][0] - m[2][2]).sqrt() * 2.0;
            Quaternion::new(
                (m[0][2] - m[2][0]) / s,
                (m[0][1] + m[1][0]) / s,
                0.25 * s,
                (m[1][2] + m[2][1]) / s,
            )
        } else {
            let s = (1.0 + m[2][2] - m[0][0] - m[1][1]).sqrt() * 2.0;
            Quaternion::new(
                (m[1][0] - m[0][1]) / s,
                (m[0][2] + m[2][0]) / s,
                (m[1][2] + m[2][1]) / s,
                0.25 * s,
            )
        };
        q.normalize()
    }

    /// Rotation angle in radians, in `[0, pi]`.
    pub fn angle(self) -> f64 {
        let q = self.normalize();
        2.0 * q.w.abs().clamp(0.0, 1.0).acos()
    }

    /// Angle of the relative rotation between `self` and `other`.
    pub fn angle_to(self, other: Quaternion) -> f64 {
        (self.conjugate() * other).angle()
    }
}

impl Mul for Quaternion {
    type Output = Quaternion;
    fn mul(self, o: Quaternion) -> Quaternion {
        Quaternion::new(
            self.w * o.w - self.x * o.x - self.y * o.y - self.z * o.z,
            self.w * o.x + self.x * o.w + self.y * o.z - self.z * o.y,
            self.w * o.y - self.x * o.z + self.y * o.w + self.z * o.x,
            self.w * o.z + self.x * o.y - self.y * o.x + self.z * o.w,
        )
    }
}

/// Position and attitude of a body in the global frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NedPose {
    pub position: Vec3,
    pub orientation: Quaternion,
}

impl NedPose {
    pub fn new(position: Vec3, orientation: Quaternion) -> Self {
        Self {
            position,
            orientation: orientation.normalize(),
        }
    }

    pub fn from_yaw(position: Vec3, yaw: f64) -> Self {
        Self::new(position, Quaternion::from_yaw(yaw))
    }

    pub fn yaw(&self) -> f64 {
        self.orientation.yaw()
    }

    pub fn as_transform(&self) -> RigidTransform {
        RigidTransform::new(self.orientation, self.position)
    }

    pub fn is_valid(&self) -> bool {
        self.position.is_finite() && (self.orientation.norm() - 1.0).abs() < 1e-9
    }
}

/// Maps points as `rotation * p + translation`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RigidTransform {
    pub rotation: Quaternion,
    pub translation: Vec3,
}

impl RigidTransform {
    pub const IDENTITY: RigidTransform = RigidTransform {
        rotation: Quaternion::IDENTITY,
        translation: Vec3::ZERO,
    };

    pub fn new(rotation: Quaternion, translation: Vec3) -> Self {
        Self {
            rotation: rotation.normalize(),
            translation,
        }
    }

    pub fn from_translation(t: Vec3) -> Self {
        Self::new(Quaternion::IDENTITY, t)
    }

    pub fn from_rotation(r: Quaternion) -> Self {
        Self::new(r, Vec3::ZERO)
    }

    pub fn apply(&self, p: Vec3) -> Vec3 {
        self.rotation.rotate(p) + self.translation
    }

    /// Rotates a direction without translating it.
    pub fn apply_vector(&self, v: Vec3) -> Vec3 {
        self.rotation.rotate(v)
    }

    /// `self` after `inner`: `compose(a, b).apply(p) == a.apply(b.apply(p))`.
    pub fn compose(&self, inner: &RigidTransform) -> RigidTransform {
        RigidTransform::new(
            self.rotation * inner.rotation,
            self.rotation.rotate(inner.translation) + self.translation,
        )
    }

    pub fn inverse(&self) -> RigidTransform {
        let inv = self.rotation.conjugate();
        RigidTransform::new(inv, -inv.rotate(self.translation))
    }

    pub fn rotation_matrix(&self) -> [[f64; 3]; 3] {
        self.rotation.to_matrix()
    }

    pub fn is_valid(&self) -> bool {
        self.translation.is_finite() && (self.rotation.norm() - 1.0).abs() < 1e-9
    }
}

/// Applies `t` to `p`.
pub fn apply_transform(t: &RigidTransform, p: Vec3) -> Vec3 {
    t.apply(p)
}

/// Composition `a ∘ b` (apply `b` first).
pub fn compose(a: &RigidTransform, b: &RigidTransform) -> RigidTransform {
    a.compose(b)
}

/// Expresses a body-frame point (x forward, y right, z down) in NED.
pub fn body_to_ned(pose: &NedPose, p_body: Vec3) -> Vec3 {
    pose.orientation.rotate(p_body) + pose.position
}

/// Half-line with a unit direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    pub direction: Vec3,
}

impl Ray {
    /// Builds a ray, normalizing `direction`. Returns `None` for a zero direction.
    pub fn new(origin: Vec3, direction: Vec3) -> Option<Self> {
        direction.normalized().map(|direction| Self { origin, direction })
    }

    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.direction * t
    }
}

/// Axis-aligned box, `min <= max` componentwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn new(min: Vec3, max: Vec3) -> Self {
        Self { min, max }
    }

    pub fn is_ordered(&self) -> bool {
        self.min.n <= self.max.n && self.min.e <= self.max.e && self.min.d <= self.max.d
    }

    pub fn contains(&self, p: Vec3) -> bool {
        p.n >= self.min.n
            && p.n <= self.max.n
            && p.e >= self.min.e
            && p.e <= self.max.e
            && p.d >= self.min.d
            && p.d <= self.max.d
    }

    pub fn contains_box(&self, other: &Aabb) -> bool {
        self.contains(other.min) && self.contains(other.max)
    }

    /// Whether the closed north/east footprint contains `(n, e)`.
    pub fn footprint_contains(&self, n: f64, e: f64) -> bool {
        n >= self.min.n && n <= self.max.n && e >= self.min.e && e <= self.max.e
    }

    /// Distance from `p` to the box surface (0 on the boundary).
    pub fn surface_distance(&self, p: Vec3) -> f64 {
        let outside = Vec3::new(
            (self.min.n - p.n).max(p.n - self.max.n).max(0.0),
            (self.min.e - p.e).max(p.e - self.max.e).max(0.0),
            (self.min.d - p.d).max(p.d - self.max.d).max(0.0),
        );
        let out = outside.norm();
        if out > 0.0 {
            return out;
        }
        // inside: distance to nearest face
        [
            p.n - self.min.n,
            self.max.n - p.n,
            p.e - self.min.e,
            self.max.e - p.e,
            p.d - self.min.d,
            self.max.d - p.d,
        ]
        .into_iter()
        .fold(f64::INFINITY, f64::min)
    }

    pub fn ray_hit(&self, ray: &Ray) -> Option<f64> {
        ray_aabb(ray, self.min, self.max)
    }
}

/// Slab-method ray/box intersection.
///
/// Returns the smallest non-negative hit distance. A ray starting inside
/// (or on the boundary of) the box reports `0.0`.
pub fn ray_aabb(ray: &Ray, box_min: Vec3, box_max: Vec3) -> Option<f64> {
    let mut t_enter = f64::NEG_INFINITY;
    let mut t_exit = f64::INFINITY;
    for axis in 0..3 {
        let o = ray.origin[axis];
        let dir = ray.direction[axis];
        let (lo, hi) = (box_min[axis], box_max[axis]);
        if dir == 0.0 {
            if o < lo || o > hi {
                return None;
            }
            continue;
        }
        let inv = 1.0 / dir;
        let (mut t0, mut t1) = ((lo - o) * inv, (hi - o) * inv);
        if t0 > t1 {
            std::mem::swap(&mut t0, &mut t1);
        }
        t_enter = t_enter.max(t0);
        t_exit = t_exit.min(t1);
        if t_enter > t_exit {
            return None;
        }
    }
    if t_exit < 0.0 {
        return None;
    }
    Some(t_enter.max(0.0))
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}
