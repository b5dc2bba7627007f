//! Small fixed-size 3D math: vectors, rotation matrices, unit quaternions and
//! the semi-implicit Euler update used by the integrator.

use core::ops::{Add, AddAssign, Div, Index, Mul, Neg, Sub, SubAssign};

#[inline]
pub(crate) fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
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

    #[inline]
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    #[inline]
    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    #[inline]
    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    #[inline]
    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn norm(self) -> f64 {
        sqrt(self.norm_squared())
    }

    /// Unit vector in the same direction, or `None` for a (near) zero vector.
    pub fn try_normalize(self) -> Option<Vec3> {
        let n = self.norm();
        if n > 1e-300 && n.is_finite() {
            Some(self / n)
        } else {
            None
        }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn max_abs(self) -> f64 {
        self.x.abs().max(self.y.abs()).max(self.z.abs())
    }

    #[inline]
    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    #[inline]
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    #[inline]
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl AddAssign for Vec3 {
    #[inline]
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl SubAssign for Vec3 {
    #[inline]
    fn sub_assign(&mut self, o: Vec3) {
        *self = *self - o;
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    #[inline]
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Mul<Vec3> for f64 {
    type Output = Vec3;
    #[inline]
    fn mul(self, v: Vec3) -> Vec3 {
        v * self
    }
}

impl Div<f64> for Vec3 {
    type Output = Vec3;
    #[inline]
    fn div(self, s: f64) -> Vec3 {
        Vec3::new(self.x / s, self.y / s, self.z / s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    #[inline]
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl Index<usize> for Vec3 {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        match i {
            0 => &self.x,
            1 => &self.y,
            2 => &self.z,
            _ => panic!("Vec3 index {i} out of range"),
        }
    }
}

/// Row-major 3x3 matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat3 {
    pub m: [[f64; 3]; 3],
}

impl Mat3 {
    pub const IDENTITY: Mat3 = Mat3 {
        m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
    };

    pub fn diagonal(d: Vec3) -> Mat3 {
        Mat3 {
            m: [[d.x, 0.0, 0.0], [0.0, d.y, 0.0], [0.0, 0.0, d.z]],
        }
    }

    #[inline]
    pub fn mul_vec(&self, v: Vec3) -> Vec3 {
        let m = &self.m;
        Vec3::new(
            m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
            m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
            m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z,
        )
    }

    pub fn mul_mat(&self, o: &Mat3) -> Mat3 {
        let mut r = [[0.0; 3]; 3];
        for (i, row) in r.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = self.m[i][0] * o.m[0][j] + self.m[i][1] * o.m[1][j] + self.m[i][2] * o.m[2][j];
            }
        }
        Mat3 { m: r }
    }

    pub fn transpose(&self) -> Mat3 {
        let m = &self.m;
        Mat3 {
            m: [
                [m[0][0], m[1][0], m[2][0]],
                [m[0][1], m[1][1], m[2][1]],
                [m[0][2], m[1][2], m[2][2]],
            ],
        }
    }

    /// `R * diag(d) * R^T`, the world-frame inertia of a body with principal
    /// moments `d` and orientation `R`.
    pub fn congruent_diagonal(&self, d: Vec3) -> Mat3 {
        let mut r = [[0.0; 3]; 3];
        let m = &self.m;
        for (i, row) in r.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = m[i][0] * d.x * m[j][0] + m[i][1] * d.y * m[j][1] + m[i][2] * d.z * m[j][2];
            }
        }
        Mat3 { m: r }
    }
}

/// Unit quaternion `w + xi + yj + zk` representing a rotation.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct UnitQuat {
    w: f64,
    x: f64,
    y: f64,
    z: f64,
}

impl Default for UnitQuat {
    fn default() -> Self {
        UnitQuat::IDENTITY
    }
}

impl UnitQuat {
    pub const IDENTITY: UnitQuat = UnitQuat {
        w: 1.0,
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    /// Normalizes the given components. A zero quaternion maps to identity.
    pub fn from_components(w: f64, x: f64, y: f64, z: f64) -> UnitQuat {
        let n = sqrt(w * w + x * x + y * y + z * z);
        if !(n > 0.0) || !n.is_finite() {
            return UnitQuat::IDENTITY;
        }
        UnitQuat {
            w: w / n,
            x: x / n,
            y: y / n,
            z: z / n,
        }
    }

    /// Rotation by `angle` radians about `axis` (need not be normalized).
    pub fn from_axis_angle(axis: Vec3, angle: f64) -> UnitQuat {
        match axis.try_normalize() {
            Some(a) => {
                let h = 0.5 * angle;
                let s = libm::sin(h);
                UnitQuat::from_components(libm::cos(h), a.x * s, a.y * s, a.z * s)
            }
            None => UnitQuat::IDENTITY,
        }
    }

    /// Rotation vector (axis * angle) exponential map.
    pub fn from_rotation_vector(r: Vec3) -> UnitQuat {
        let angle = r.norm();
        if angle < 1e-300 {
            return UnitQuat::IDENTITY;
        }
        UnitQuat::from_axis_angle(r / angle, angle)
    }

    /// `yaw` about z, then `pitch` about the new y, then `roll` about the new x.
    pub fn from_euler_zyx(yaw: f64, pitch: f64, roll: f64) -> UnitQuat {
        UnitQuat::from_axis_angle(Vec3::Z, yaw)
            * UnitQuat::from_axis_angle(Vec3::Y, pitch)
            * UnitQuat::from_axis_angle(Vec3::X, roll)
    }

    pub fn w(&self) -> f64 {
        self.w
    }
    pub fn x(&self) -> f64 {
        self.x
    }
    pub fn y(&self) -> f64 {
        self.y
    }
    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn norm(&self) -> f64 {
        sqrt(self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z)
    }

    pub fn conjugate(&self) -> UnitQuat {
        UnitQuat {
            w: self.w,
            x: -self.x,
            y: -self.y,
            z: -self.z,
        }
    }

    pub fn to_mat3(&self) -> Mat3 {
        let (w, x, y, z) = (self.w, self.x, self.y, self.z);
        Mat3 {
            m: [
                [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
                [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
                [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
            ],
        }
    }

    /// Euler angles `(yaw, pitch, roll)` in the z-y-x convention.
    pub fn to_euler_zyx(&self) -> (f64, f64, f64) {
        let (w, x, y, z) = (self.w, self.x, self.y, self.z);
        let yaw = libm::atan2(2.0 * (w * z + x * y), 1.0 - 2.0 * (y * y + z * z));
        let sp = (2.0 * (w * y - z * x)).clamp(-1.0, 1.0);
        let pitch = libm::asin(sp);
        let roll = libm::atan2(2.0 * (w * x + y * z), 1.0 - 2.0 * (x * x + y * y));
        (yaw, pitch, roll)
    }

    /// Rotation angle in `[0, π]`.
    pub fn angle(&self) -> f64 {
        2.0 * libm::atan2(sqrt(self.x * self.x + self.y * self.y + self.z * self.z), self.w.abs())
    }
}

impl Mul for UnitQuat {
    type Output = UnitQuat;
    fn mul(self, o: UnitQuat) -> UnitQuat {
        let (a, b) = (self, o);
        UnitQuat::from_components(
            a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
        )
    }
}

/// Rotates `v` by `q`.
pub fn rotate_vector(q: UnitQuat, v: Vec3) -> Vec3 {
    // v' = v + 2w (u x v) + 2 u x (u x v), u = vector part
    let u = Vec3::new(q.x, q.y, q.z);
    let t = u.cross(v) * 2.0;
    v + t * q.w + u.cross(t)
}

/// Advances `q` by a constant world-frame angular velocity `omega` over `dt`
/// using the exact exponential map, then renormalizes.
pub fn quat_integrate(q: UnitQuat, omega: Vec3, dt: f64) -> UnitQuat {
    if omega == Vec3::ZERO {
        return q;
    }
    UnitQuat::from_rotation_vector(omega * dt) * q
}

/// Semi-implicit (symplectic) Euler: velocity first, then position with the
/// updated velocity. Returns `(v', x')`.
#[inline]
pub fn semi_implicit_step(x: Vec3, v: Vec3, a: Vec3, dt: f64) -> (Vec3, Vec3) {
    let v1 = v + a * dt;
    let x1 = x + v1 * dt;
    (v1, x1)
}

/// Scalar form of [`semi_implicit_step`] for joint coordinates.
#[inline]
pub fn semi_implicit_step_scalar(x: f64, v: f64, a: f64, dt: f64) -> (f64, f64) {
    let v1 = v + a * dt;
    (v1, x + v1 * dt)
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Pose {
    pub position: Vec3,
    pub orientation: UnitQuat,
}

impl Pose {
    pub fn new(position: Vec3, orientation: UnitQuat) -> Pose {
        Pose {
            position,
            orientation,
        }
    }

    pub fn translation(position: Vec3) -> Pose {
        Pose::new(position, UnitQuat::IDENTITY)
    }

    /// Maps a point from this frame to the parent frame.
    pub fn transform_point(&self, p: Vec3) -> Vec3 {
        self.position + rotate_vector(self.orientation, p)
    }

    /// `self * child`: composition of frames.
    pub fn compose(&self, child: &Pose) -> Pose {
        Pose::new(
            self.transform_point(child.position),
            self.orientation * child.orientation,
        )
    }
}

/// Wraps an angle to `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    use core::f64::consts::PI;
    let mut r = libm::fmod(PI - a, 2.0 * PI);
    if r < 0.0 {
        r += 2.0 * PI;
    }
    PI - r
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::PI;

    fn close(a: Vec3, b: Vec3, tol: f64) -> bool {
        (a - b).max_abs() <= tol
    }

    #[test]
    fn identity_rotation() {
        let v = Vec3::new(1.0, 2.0, 3.0);
        assert_eq!(rotate_vector(UnitQuat::IDENTITY, v), v);
    }

    #[test]
    fn quarter_turn_about_z() {
        let q = UnitQuat::from_axis_angle(Vec3::Z, PI / 2.0);
        assert!(close(rotate_vector(q, Vec3::X), Vec3::Y, 1e-15));
    }

    #[test]
    fn half_turn_about_x() {
        let q = UnitQuat::from_axis_angle(Vec3::X, PI);
        assert!(close(rotate_vector(q, Vec3::Y), -Vec3::Y, 1e-15));
    }

    #[test]
    fn rotation_matrix_matches_quaternion() {
        let q = UnitQuat::from_euler_zyx(0.3, -0.7, 1.1);
        let v = Vec3::new(0.2, -1.5, 0.9);
        assert!(close(q.to_mat3().mul_vec(v), rotate_vector(q, v), 1e-14));
    }

    #[test]
    fn euler_round_trip() {
        let q = UnitQuat::from_euler_zyx(0.4, 0.2, -0.3);
        let (y, p, r) = q.to_euler_zyx();
        assert!((y - 0.4).abs() < 1e-12 && (p - 0.2).abs() < 1e-12 && (r + 0.3).abs() < 1e-12);
    }

    #[test]
    fn integrate_zero_rate_is_noop() {
        assert_eq!(quat_integrate(UnitQuat::IDENTITY, Vec3::ZERO, 0.01), UnitQuat::IDENTITY);
        let q = UnitQuat::from_euler_zyx(0.1, 0.2, 0.3);
        assert_eq!(quat_integrate(q, Vec3::ZERO, 0.01), q);
    }

    #[test]
    fn integrate_half_turn_about_z() {
        // Analytic oracle: constant rate π rad/s for 1 s is a rotation of π.
        let mut q = UnitQuat::IDENTITY;
        let omega = Vec3::new(0.0, 0.0, PI);
        for _ in 0..1000 {
            q = quat_integrate(q, omega, 1e-3);
        }
        let expected = UnitQuat::from_axis_angle(Vec3::Z, PI);
        let err = (q.conjugate() * expected).angle();
        assert!(err < 1e-4, "angle error {err}");
        assert!((q.norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn semi_implicit_one_step() {
        let (v, x) = semi_implicit_step(Vec3::ZERO, Vec3::ZERO, Vec3::new(0.0, 0.0, -9.81), 0.001);
        assert!(close(v, Vec3::new(0.0, 0.0, -0.00981), 1e-17));
        assert!(close(x, Vec3::new(0.0, 0.0, -9.81e-6), 1e-18));
    }

    #[test]
    fn semi_implicit_free_fall_one_second() {
        // Closed form: z(t) = -g t^2 / 2 = -4.905; symplectic bias is +g dt t / 2.
        let g = Vec3::new(0.0, 0.0, -9.81);
        let (mut x, mut v) = (Vec3::ZERO, Vec3::ZERO);
        for _ in 0..1000 {
            let (v1, x1) = semi_implicit_step(x, v, g, 1e-3);
            v = v1;
            x = x1;
        }
        assert!((x.z + 4.905).abs() / 4.905 < 0.005, "z = {}", x.z);
        // Exact discrete sum: -g dt^2 n(n+1)/2.
        assert!((x.z + 9.81 * 1e-6 * 1000.0 * 1001.0 / 2.0).abs() < 1e-9);
    }

    #[test]
    fn semi_implicit_uniform_motion() {
        let x = Vec3::new(1.0, -2.0, 0.5);
        let v = Vec3::new(0.25, 0.5, -0.125);
        let (v1, x1) = semi_implicit_step(x, v, Vec3::ZERO, 0.5);
        assert_eq!(v1, v);
        assert_eq!(x1, x + v * 0.5);
    }

    #[test]
    fn wrap_angle_range() {
        assert!((wrap_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(-0.5) + 0.5).abs() < 1e-15);
        assert!((wrap_angle(2.0 * PI + 0.25) - 0.25).abs() < 1e-12);
    }
}
