//! Penalty contact with regularized Coulomb friction.

use crate::math::{Mat3, Vec3};

/// Ground material. `mu` is the Coulomb coefficient, `stiffness`/`damping`
/// the penalty spring-damper and `v_eps` the friction regularization speed.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct Material {
    pub mu: f64,
    pub stiffness: f64,
    pub damping: f64,
    pub v_eps: f64,
}

impl Material {
    pub const fn with_mu(mu: f64) -> Material {
        Material {
            mu,
            stiffness: 1.0e4,
            damping: 50.0,
            v_eps: 1.0e-3,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.mu >= 0.0
            && self.stiffness > 0.0
            && self.damping >= 0.0
            && self.v_eps > 0.0
            && self.mu.is_finite()
            && self.stiffness.is_finite()
            && self.damping.is_finite()
            && self.v_eps.is_finite()
    }
}

impl Default for Material {
    fn default() -> Self {
        Material::with_mu(0.45)
    }
}

/// A sphere-vs-terrain contact. `normal` points out of the terrain,
/// `rel_velocity` is the velocity of the robot point relative to the ground.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Contact {
    pub point: Vec3,
    pub normal: Vec3,
    pub penetration: f64,
    pub rel_velocity: Vec3,
    pub body_id: usize,
    pub material_id: usize,
}

/// Normal and tangential parts of a contact force.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ContactForce {
    pub normal: f64,
    pub tangential: Vec3,
}

impl ContactForce {
    pub fn total(&self, n: Vec3) -> Vec3 {
        n * self.normal + self.tangential
    }
}

/// Splits the contact force into normal magnitude and tangential vector.
pub fn contact_force_parts(c: &Contact, m: &Material) -> ContactForce {
    if !(c.penetration > 0.0) {
        return ContactForce::default();
    }
    let vn = c.normal.dot(c.rel_velocity);
    let fn_ = (m.stiffness * c.penetration - m.damping * vn).max(0.0);
    if fn_ == 0.0 {
        return ContactForce::default();
    }
    let vt = c.rel_velocity - c.normal * vn;
    let speed = vt.norm();
    let tangential = if speed > 0.0 {
        // tanh < 1 keeps |F_t| strictly inside mu * F_n.
        vt * (-m.mu * fn_ * libm::tanh(speed / m.v_eps) / speed)
    } else {
        Vec3::ZERO
    };
    ContactForce {
        normal: fn_,
        tangential,
    }
}

/// Force on the robot at the contact point, in world coordinates.
pub fn contact_force(c: &Contact, m: &Material) -> Vec3 {
    contact_force_parts(c, m).total(c.normal)
}

/// Derivatives of [`contact_force`] with respect to the point velocity and
/// the penetration depth, `(dF/dv, dF/dδ)`. Zero outside the active set.
pub fn contact_force_jacobian(c: &Contact, m: &Material) -> (Mat3, Vec3) {
    let zero = (Mat3 { m: [[0.0; 3]; 3] }, Vec3::ZERO);
    if !(c.penetration > 0.0) {
        return zero;
    }
    let n = c.normal;
    let vn = n.dot(c.rel_velocity);
    let fn_ = m.stiffness * c.penetration - m.damping * vn;
    if fn_ <= 0.0 {
        return zero;
    }
    let vt = c.rel_velocity - n * vn;
    let speed = vt.norm();
    let s = speed / m.v_eps;
    let th = libm::tanh(s);
    // g(v_t) = tanh(|v_t|/eps) * unit(v_t) and its Jacobian wrt v_t
    let (g, dg) = if speed > 1e-12 {
        let u = vt / speed;
        let sech2 = 1.0 - th * th;
        let radial = sech2 / m.v_eps;
        let lateral = th / speed;
        let mut d = [[0.0; 3]; 3];
        let ua = u.to_array();
        for (i, row) in d.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                let delta = if i == j { 1.0 } else { 0.0 };
                *cell = lateral * delta + (radial - lateral) * ua[i] * ua[j];
            }
        }
        (u * th, d)
    } else {
        let k = 1.0 / m.v_eps;
        (Vec3::ZERO, [[k, 0.0, 0.0], [0.0, k, 0.0], [0.0, 0.0, k]])
    };
    let na = n.to_array();
    // P = I - n n^T projects onto the tangent plane.
    let mut p = [[0.0; 3]; 3];
    for (i, row) in p.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            *cell = if i == j { 1.0 } else { 0.0 } - na[i] * na[j];
        }
    }
    let ga = g.to_array();
    // dFn/dv = -c n^T
    let mut jv = [[0.0; 3]; 3];
    for (i, row) in jv.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            let mut dgp = 0.0;
            for (k, pk) in p.iter().enumerate() {
                dgp += dg[i][k] * pk[j];
            }
            let dfn_j = -m.damping * na[j];
            // F = n Fn - mu Fn g
            *cell = na[i] * dfn_j - m.mu * (ga[i] * dfn_j + fn_ * dgp);
        }
    }
    let dfn_ddelta = m.stiffness;
    let jd = (n - g * m.mu) * dfn_ddelta;
    (Mat3 { m: jv }, jd)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn contact(pen: f64, v: Vec3) -> Contact {
        Contact {
            point: Vec3::ZERO,
            normal: Vec3::Z,
            penetration: pen,
            rel_velocity: v,
            body_id: 0,
            material_id: 0,
        }
    }

    #[test]
    fn no_penetration_no_force() {
        let m = Material::default();
        assert_eq!(contact_force(&contact(0.0, Vec3::new(1.0, 0.0, -1.0)), &m), Vec3::ZERO);
        assert_eq!(contact_force(&contact(-1e-3, Vec3::ZERO), &m), Vec3::ZERO);
    }

    #[test]
    fn static_penetration_is_linear_spring() {
        let m = Material::default();
        let f = contact_force(&contact(1e-3, Vec3::ZERO), &m);
        assert!((f.z - 10.0).abs() < 1e-12);
        assert_eq!(f.x, 0.0);
        assert_eq!(f.y, 0.0);
    }

    #[test]
    fn separating_fast_gives_no_adhesion() {
        let m = Material::default();
        let f = contact_force(&contact(1e-4, Vec3::new(0.0, 0.0, 1.0)), &m);
        assert_eq!(f, Vec3::ZERO);
    }

    #[test]
    fn friction_opposes_sliding_and_saturates() {
        let m = Material::default();
        let p = contact_force_parts(&contact(1e-3, Vec3::new(1.0, 0.0, 0.0)), &m);
        assert!(p.tangential.x < 0.0);
        assert!(p.tangential.norm() <= m.mu * p.normal);
        assert!((p.tangential.norm() - m.mu * p.normal).abs() < 1e-9);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let m = Material::default();
        let c0 = Contact {
            point: Vec3::ZERO,
            normal: Vec3::new(0.1, -0.2, 1.0).try_normalize().unwrap(),
            penetration: 4e-4,
            rel_velocity: Vec3::new(6e-4, -3e-4, -0.01),
            body_id: 0,
            material_id: 0,
        };
        let (jv, jd) = contact_force_jacobian(&c0, &m);
        let h = 1e-9;
        for j in 0..3 {
            let mut dv = [0.0; 3];
            dv[j] = h;
            let dv = Vec3::new(dv[0], dv[1], dv[2]);
            let mut cp = c0;
            cp.rel_velocity = c0.rel_velocity + dv;
            let mut cm = c0;
            cm.rel_velocity = c0.rel_velocity - dv;
            let fd = (contact_force(&cp, &m) - contact_force(&cm, &m)) / (2.0 * h);
            for i in 0..3 {
                let rel = (fd[i] - jv.m[i][j]).abs() / (1.0 + fd[i].abs());
                assert!(rel < 1e-4, "dF{i}/dv{j}: fd {} vs {}", fd[i], jv.m[i][j]);
            }
        }
        let mut cp = c0;
        cp.penetration += 1e-9;
        let mut cm = c0;
        cm.penetration -= 1e-9;
        let fd = (contact_force(&cp, &m) - contact_force(&cm, &m)) / 2e-9;
        assert!((fd - jd).max_abs() < 1e-3 * (1.0 + fd.max_abs()));
    }
}
