//! Reduced-coordinate dynamics of the floating-base link tree.
//!
//! Generalized velocity `u = [v_base, w_base, qdot]`: base origin velocity and
//! base angular velocity, both in world axes, then joint rates. Each step
//! solves the linearly-implicit equations of motion
//!
//! ```text
//! M(q0) a + h(q0, u0) = g(q0) + tau(q0 + dt u1, u1) + sum J_p^T F_c(delta0 - dt n.J_p u1, J_p u1)
//! u1 = u0 + dt a
//! ```
//!
//! with Newton iterations, re-evaluates the forces at the converged velocity
//! and advances positions with semi-implicit Euler (`x1 = x0 + dt u1`).

pub mod contact;
pub mod joint;

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use nalgebra::{DMatrix, DVector};

use crate::controller::{ServoCommandSet, TailOverride};
use crate::math::{quat_integrate, semi_implicit_step, Mat3, Pose, Vec3};
use crate::robot::kinematics::{forward_kinematics, LinkFrame};
use crate::robot::{tail_joint_stiffness, tail_rest_angles, ArticulatedRobot, ReelState, TailVariant};
use crate::terrain::{SurfaceHit, Terrain};
use contact::{contact_force_jacobian, contact_force_parts, Contact, Material};
use joint::{
    joint_limit_gradient, joint_limit_torque, joint_potential_energy, servo_torque, servo_torque_gradient,
    spring_torque, JointKind, JointSpec, JointState,
};

pub const MAX_DT: f64 = 5e-3;
pub const DIVERGENCE_BOUND: f64 = 1e6;
/// Spheres closer than this to a surface enter the implicit solve.
pub const CONTACT_MARGIN: f64 = 2e-3;
/// Newton residual (N or N m) above which a step is redone as two halves.
pub const ACCEPT_RESIDUAL: f64 = 1e-6;
/// Deepest bisection of a step; the last level is accepted as is.
pub const MAX_SPLITS: u32 = 5;

#[derive(Clone, Debug, PartialEq)]
pub enum DynamicsError {
    InvalidTimestep(f64),
    StateMismatch,
    NumericalDivergence { time: f64 },
}

impl fmt::Display for DynamicsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DynamicsError::InvalidTimestep(dt) => write!(f, "time step {dt} outside (0, {MAX_DT}]"),
            DynamicsError::StateMismatch => write!(f, "world state does not match robot topology"),
            DynamicsError::NumericalDivergence { time } => write!(f, "numerical divergence at t = {time:.4} s"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for DynamicsError {}

/// Complete simulation state of one robot.
#[derive(Clone, Debug, PartialEq)]
pub struct WorldState {
    pub time: f64,
    pub base: Pose,
    pub base_velocity: Vec3,
    pub base_angular_velocity: Vec3,
    pub joints: Vec<JointState>,
    pub reel: ReelState,
    pub gravity: Vec3,
    /// Generalized acceleration of the previous step; seeds the solver.
    pub acceleration: Vec<f64>,
}

impl WorldState {
    pub fn new(robot: &ArticulatedRobot, base: Pose, angles: &[f64], reel: ReelState) -> WorldState {
        WorldState {
            time: 0.0,
            base,
            base_velocity: Vec3::ZERO,
            base_angular_velocity: Vec3::ZERO,
            joints: angles.iter().map(|&a| JointState::new(a, 0.0)).collect(),
            reel,
            gravity: Vec3::new(0.0, 0.0, -9.81),
            acceleration: vec![0.0; robot.dof()],
        }
    }

    pub fn angles(&self) -> Vec<f64> {
        self.joints.iter().map(|j| j.angle).collect()
    }

    fn velocity(&self) -> DVector<f64> {
        let n = 6 + self.joints.len();
        let mut u = DVector::zeros(n);
        for k in 0..3 {
            u[k] = self.base_velocity[k];
            u[3 + k] = self.base_angular_velocity[k];
        }
        for (j, s) in self.joints.iter().enumerate() {
            u[6 + j] = s.rate;
        }
        u
    }

    fn is_sane(&self) -> bool {
        let ok = |v: f64| v.is_finite() && v.abs() <= DIVERGENCE_BOUND;
        let p = self.base.position;
        let q = self.base.orientation;
        [p.x, p.y, p.z, q.w(), q.x(), q.y(), q.z()].into_iter().all(ok)
            && self.base_velocity.to_array().into_iter().all(ok)
            && self.base_angular_velocity.to_array().into_iter().all(ok)
            && self.joints.iter().all(|j| ok(j.angle) && ok(j.rate))
            && ok(self.reel.angle())
    }
}

/// World-frame view of one link.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BodyState {
    pub pose: Pose,
    /// Velocity of the center of mass.
    pub linear_velocity: Vec3,
    pub angular_velocity: Vec3,
    pub mass: f64,
    pub inertia: Vec3,
}

/// Contact force applied during the last step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AppliedContact {
    pub sphere: usize,
    pub point: Vec3,
    pub normal: Vec3,
    pub normal_force: f64,
    pub tangential_force: Vec3,
    pub mu: f64,
}

#[derive(Clone, Debug, Default)]
pub struct StepReport {
    pub contacts: Vec<AppliedContact>,
    /// Contacts whose tangential force exceeded `mu F_n`.
    pub cone_violations: usize,
    pub iterations: usize,
    pub residual: f64,
    /// Coordinate holding the largest residual entry.
    pub residual_index: usize,
}

impl StepReport {
    /// Whether the given sphere carried a positive normal force.
    pub fn sphere_in_contact(&self, sphere: usize) -> bool {
        self.contacts.iter().any(|c| c.sphere == sphere && c.normal_force > 0.0)
    }

    /// Magnitude of the total contact force on the given sphere.
    pub fn sphere_force(&self, sphere: usize) -> f64 {
        self.contacts
            .iter()
            .filter(|c| c.sphere == sphere)
            .fold(Vec3::ZERO, |acc, c| acc + c.normal * c.normal_force + c.tangential_force)
            .norm()
    }
}

/// Servo behavior during a step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Actuation<'a> {
    /// Servos track the commanded targets.
    Commanded(&'a ServoCommandSet),
    /// Servos apply no torque; the reel holds its angle.
    Limp,
}

struct Candidate {
    sphere: usize,
    normal: Vec3,
    depth: f64,
    point: Vec3,
    /// Rows of the 3 x n point Jacobian.
    jac: [DVector<f64>; 3],
}

/// Reusable integrator workspace. Holds no simulation state, so stepping with
/// a fresh `Stepper` gives bit-identical results.
pub struct Stepper {
    frames: Vec<LinkFrame>,
    jv: Vec<Vec3>,
    jw: Vec<Vec3>,
    hits: Vec<SurfaceHit>,
    candidates: Vec<Candidate>,
    joint_specs: Vec<JointSpec>,
    targets: Vec<Option<f64>>,
    report: StepReport,
    max_iterations: usize,
    tolerance: f64,
}

impl Default for Stepper {
    fn default() -> Self {
        Stepper::new()
    }
}

fn col_index(l: usize, n: usize, k: usize) -> usize {
    l * n + k
}

impl Stepper {
    pub fn new() -> Stepper {
        Stepper {
            frames: Vec::new(),
            jv: Vec::new(),
            jw: Vec::new(),
            hits: Vec::new(),
            candidates: Vec::new(),
            joint_specs: Vec::new(),
            targets: Vec::new(),
            report: StepReport::default(),
            max_iterations: 25,
            tolerance: 1e-9,
        }
    }

    pub fn report(&self) -> &StepReport {
        &self.report
    }

    /// Advances `world` by `dt`.
    pub fn step(
        &mut self,
        world: &mut WorldState,
        robot: &ArticulatedRobot,
        actuation: Actuation<'_>,
        terrain: &Terrain,
        dt: f64,
    ) -> Result<&StepReport, DynamicsError> {
        if !(dt > 0.0 && dt <= MAX_DT) {
            return Err(DynamicsError::InvalidTimestep(dt));
        }
        let nj = robot.joints.len();
        let n = 6 + nj;
        if world.joints.len() != nj {
            return Err(DynamicsError::StateMismatch);
        }
        if world.acceleration.len() != n {
            world.acceleration = vec![0.0; n];
        }
        self.report.iterations = 0;
        self.report.residual = 0.0;
        self.report.cone_violations = 0;
        self.advance(world, robot, actuation, terrain, dt, 0)?;
        Ok(&self.report)
    }

    /// Takes one step, or two half steps when Newton fails to converge.
    fn advance(
        &mut self,
        world: &mut WorldState,
        robot: &ArticulatedRobot,
        actuation: Actuation<'_>,
        terrain: &Terrain,
        dt: f64,
        depth: u32,
    ) -> Result<(), DynamicsError> {
        if depth >= MAX_SPLITS {
            return self.single_step(world, robot, actuation, terrain, dt).map(|_| ());
        }
        let saved = world.clone();
        let violations = self.report.cone_violations;
        match self.single_step(world, robot, actuation, terrain, dt) {
            Ok(true) => Ok(()),
            Ok(false) | Err(DynamicsError::NumericalDivergence { .. }) => {
                // A rejected attempt contributes no forces, so no violations.
                *world = saved;
                self.report.cone_violations = violations;
                self.advance(world, robot, actuation, terrain, 0.5 * dt, depth + 1)?;
                self.advance(world, robot, actuation, terrain, 0.5 * dt, depth + 1)
            }
            Err(e) => Err(e),
        }
    }

    /// One implicit step; returns whether Newton reached `ACCEPT_RESIDUAL`.
    fn single_step(
        &mut self,
        world: &mut WorldState,
        robot: &ArticulatedRobot,
        actuation: Actuation<'_>,
        terrain: &Terrain,
        dt: f64,
    ) -> Result<bool, DynamicsError> {
        self.prepare_joints(world, robot, actuation, dt);
        let p0 = linear_momentum(world, robot);
        let angles: Vec<f64> = world.joints.iter().map(|j| j.angle).collect();
        forward_kinematics(robot, &world.base, &angles, &mut self.frames);
        self.link_jacobians(robot);
        let u0 = world.velocity();
        let (mass, bias, grav) = self.mass_bias_gravity(robot, world, &u0);
        self.collect_candidates(robot, terrain);

        let servo = robot.morphology.servo;
        let material = terrain.material;
        let mut a = DVector::from_column_slice(&world.acceleration);
        let mut r = self.residual(&mass, &bias, &grav, &u0, &a, world, dt, &servo, &material);
        let mut rnorm = r.amax();
        let mut iterations = 0;
        while rnorm > self.tolerance && iterations < self.max_iterations {
            iterations += 1;
            let jr = self.residual_jacobian(&mass, &u0, &a, world, dt, &servo, &material);
            let Some(step) = jr.lu().solve(&r) else { break };
            let mut alpha = 1.0;
            let mut accepted = false;
            for _ in 0..12 {
                let trial = &a - &step * alpha;
                let rt = self.residual(&mass, &bias, &grav, &u0, &trial, world, dt, &servo, &material);
                let tn = rt.amax();
                if tn < rnorm * (1.0 - 1e-4 * alpha) || tn <= self.tolerance {
                    a = trial;
                    r = rt;
                    rnorm = tn;
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            if !accepted {
                break;
            }
        }

        // Apply exactly the forces evaluated at the converged velocity.
        let v1 = &u0 + &a * dt;
        let mut rhs = &grav - &bias;
        self.report.contacts.clear();
        self.joint_forces(world, &v1, dt, &servo, &mut rhs);
        self.contact_forces(&v1, dt, &material, Some(&mut rhs), true);
        let a_final = match mass.clone().cholesky() {
            Some(ch) => ch.solve(&rhs),
            None => mass.lu().solve(&rhs).unwrap_or(a),
        };
        self.report.iterations += iterations;
        if rnorm >= self.report.residual {
            self.report.residual = rnorm;
            self.report.residual_index = r.iamax();
        }

        let v1 = &u0 + &a_final * dt;
        let lin_a = Vec3::new(a_final[0], a_final[1], a_final[2]);
        let (v_base, p_base) = semi_implicit_step(world.base.position, world.base_velocity, lin_a, dt);
        let w1 = Vec3::new(v1[3], v1[4], v1[5]);
        world.base = Pose::new(p_base, quat_integrate(world.base.orientation, w1, dt));
        world.base_velocity = v_base;
        world.base_angular_velocity = w1;
        for (j, s) in world.joints.iter_mut().enumerate() {
            let (rate, angle) = crate::math::semi_implicit_step_scalar(s.angle, s.rate, a_final[6 + j], dt);
            *s = JointState::new(angle, rate);
        }
        // The generalized update conserves momentum only to O(dt) because the
        // mass matrix is frozen at the step start. Momentum is linear in the
        // base velocity with gain m_total, so one shift makes the discrete
        // balance p1 = p0 + dt (m g + sum F_contact) exact.
        let external = self
            .report
            .contacts
            .iter()
            .fold(world.gravity * robot.total_mass(), |acc, c| acc + c.normal * c.normal_force + c.tangential_force);
        let dv = (p0 + external * dt - linear_momentum(world, robot)) / robot.total_mass();
        world.base_velocity = world.base_velocity + dv;
        world.base.position = world.base.position + dv * dt;
        world.acceleration.copy_from_slice(a_final.as_slice());
        world.time += dt;
        if !world.is_sane() || a_final.iter().any(|x| !x.is_finite()) {
            return Err(DynamicsError::NumericalDivergence { time: world.time });
        }
        Ok(rnorm <= ACCEPT_RESIDUAL)
    }

    fn prepare_joints(&mut self, world: &mut WorldState, robot: &ArticulatedRobot, act: Actuation<'_>, dt: f64) {
        self.joint_specs.clear();
        self.joint_specs.extend_from_slice(&robot.joints);
        self.targets.clear();
        self.targets.resize(robot.joints.len(), None);
        if let Actuation::Commanded(cmd) = act {
            world.reel.track(cmd.reel_target, robot.tail.reel_max_rate_deg_s, dt);
            let s = &robot.servos;
            for (j, t) in [
                (s.front_horiz, cmd.front_horiz),
                (s.front_vert, cmd.front_vert),
                (s.rear_horiz, cmd.rear_horiz),
                (s.rear_vert, cmd.rear_vert),
                (s.body_yaw, cmd.body_yaw),
            ] {
                self.targets[j] = Some(t);
            }
        } else {
            world.reel.rate = 0.0;
        }
        if robot.tail.variant == TailVariant::Flexible {
            let k = tail_joint_stiffness(world.reel, &robot.tail).expect("flexible tail");
            let rest = tail_rest_angles(world.reel, &robot.tail).expect("flexible tail");
            let shape = match act {
                Actuation::Commanded(cmd) => cmd.tail_override,
                Actuation::Limp => None,
            };
            for (i, j) in robot.tail_joints.clone().enumerate() {
                let spec = &mut self.joint_specs[j];
                match shape {
                    None => {
                        spec.stiffness = k[i];
                        spec.rest_angle = rest[i];
                    }
                    Some(o) => {
                        spec.stiffness = robot.tail.k_max;
                        spec.rest_angle = match o {
                            TailOverride::FlexTowardBody => spec.limits[0],
                            TailOverride::Flick => spec.limits[1],
                        };
                    }
                }
            }
        }
    }

    fn link_jacobians(&mut self, robot: &ArticulatedRobot) {
        let nl = robot.links.len();
        let n = 6 + robot.joints.len();
        self.jv.clear();
        self.jv.resize(nl * n, Vec3::ZERO);
        self.jw.clear();
        self.jw.resize(nl * n, Vec3::ZERO);
        let o0 = self.frames[0].pose.position;
        for l in 0..nl {
            let c = self.frames[l].com;
            for (k, e) in [Vec3::X, Vec3::Y, Vec3::Z].into_iter().enumerate() {
                self.jv[col_index(l, n, k)] = e;
                self.jv[col_index(l, n, 3 + k)] = e.cross(c - o0);
                self.jw[col_index(l, n, 3 + k)] = e;
            }
            for &j in &robot.chains[l] {
                let f = &self.frames[j + 1];
                self.jv[col_index(l, n, 6 + j)] = f.axis.cross(c - f.pose.position);
                self.jw[col_index(l, n, 6 + j)] = f.axis;
            }
        }
    }

    fn mass_bias_gravity(
        &self,
        robot: &ArticulatedRobot,
        world: &WorldState,
        u: &DVector<f64>,
    ) -> (DMatrix<f64>, DVector<f64>, DVector<f64>) {
        let nl = robot.links.len();
        let n = 6 + robot.joints.len();
        let mut mass = DMatrix::<f64>::zeros(n, n);
        let mut bias = DVector::<f64>::zeros(n);
        let mut grav = DVector::<f64>::zeros(n);

        // Velocity-product accelerations with zero generalized acceleration.
        let mut omega = vec![Vec3::ZERO; nl];
        let mut alpha = vec![Vec3::ZERO; nl];
        let mut acc_origin = vec![Vec3::ZERO; nl];
        omega[0] = Vec3::new(u[3], u[4], u[5]);
        for l in 1..nl {
            let p = robot.links[l].parent.expect("non-root link");
            let j = l - 1;
            let z = self.frames[l].axis;
            let qd = u[6 + j];
            let r = self.frames[l].pose.position - self.frames[p].pose.position;
            let wp = omega[p];
            acc_origin[l] = acc_origin[p] + alpha[p].cross(r) + wp.cross(wp.cross(r));
            omega[l] = wp + z * qd;
            alpha[l] = alpha[p] + wp.cross(z * qd);
        }

        for l in 0..nl {
            let link = &robot.links[l];
            let f = &self.frames[l];
            let inertia = f.rot.congruent_diagonal(link.inertia);
            let rc = f.com - f.pose.position;
            let w = omega[l];
            let a_c = acc_origin[l] + alpha[l].cross(rc) + w.cross(w.cross(rc));
            let lin_bias = a_c * link.mass;
            let ang_bias = inertia.mul_vec(alpha[l]) + w.cross(inertia.mul_vec(w));
            let weight = world.gravity * link.mass;
            let cols = |k: usize| (self.jv[col_index(l, n, k)], self.jw[col_index(l, n, k)]);
            for a in 0..n {
                let (va, wa) = cols(a);
                if va == Vec3::ZERO && wa == Vec3::ZERO {
                    continue;
                }
                bias[a] += va.dot(lin_bias) + wa.dot(ang_bias);
                grav[a] += va.dot(weight);
                let iwa = inertia.mul_vec(wa);
                for b in a..n {
                    let (vb, wb) = cols(b);
                    let m = link.mass * va.dot(vb) + iwa.dot(wb);
                    mass[(a, b)] += m;
                }
            }
        }
        for a in 0..n {
            for b in 0..a {
                mass[(a, b)] = mass[(b, a)];
            }
        }
        (mass, bias, grav)
    }

    fn collect_candidates(&mut self, robot: &ArticulatedRobot, terrain: &Terrain) {
        self.candidates.clear();
        let n = 6 + robot.joints.len();
        let o0 = self.frames[0].pose.position;
        for (s, sphere) in robot.spheres.iter().enumerate() {
            let center = self.frames[sphere.link].pose.transform_point(sphere.local);
            self.hits.clear();
            terrain.sphere_hits(center, sphere.radius, CONTACT_MARGIN, &mut self.hits);
            for hit in self.hits.iter() {
                if !(hit.depth > -CONTACT_MARGIN) {
                    continue;
                }
                let p = center - hit.normal * sphere.radius;
                let mut jac = [DVector::zeros(n), DVector::zeros(n), DVector::zeros(n)];
                let mut set_col = |k: usize, v: Vec3| {
                    for (i, row) in jac.iter_mut().enumerate() {
                        row[k] = v[i];
                    }
                };
                for (k, e) in [Vec3::X, Vec3::Y, Vec3::Z].into_iter().enumerate() {
                    set_col(k, e);
                    set_col(3 + k, e.cross(p - o0));
                }
                for &j in &robot.chains[sphere.link] {
                    let f = &self.frames[j + 1];
                    set_col(6 + j, f.axis.cross(p - f.pose.position));
                }
                self.candidates.push(Candidate {
                    sphere: s,
                    normal: hit.normal,
                    depth: hit.depth,
                    point: p,
                    jac,
                });
            }
        }
    }

    /// Adds joint torques evaluated at `(q0 + dt v1, v1)` to `out`.
    fn joint_forces(&self, world: &WorldState, v1: &DVector<f64>, dt: f64, servo: &crate::robot::ServoGains, out: &mut DVector<f64>) {
        for (j, spec) in self.joint_specs.iter().enumerate() {
            let rate = v1[6 + j];
            let st = JointState::new(world.joints[j].angle + dt * rate, rate);
            let mut tau = joint_limit_torque(st, spec);
            match spec.kind {
                JointKind::Servo => {
                    if let Some(t) = self.targets[j] {
                        tau += servo_torque(t, st, servo.kp, servo.kd, spec.max_torque);
                    }
                }
                JointKind::PassiveSpring | JointKind::CableModulated => tau += spring_torque(st, spec),
            }
            out[6 + j] += tau;
        }
    }

    /// Adds generalized contact forces at velocity `v1` to `out`; records
    /// them in the report when `record` is set.
    fn contact_forces(
        &mut self,
        v1: &DVector<f64>,
        dt: f64,
        material: &Material,
        mut out: Option<&mut DVector<f64>>,
        record: bool,
    ) {
        for c in &self.candidates {
            let vp = Vec3::new(c.jac[0].dot(v1), c.jac[1].dot(v1), c.jac[2].dot(v1));
            let contact = Contact {
                point: c.point,
                normal: c.normal,
                penetration: c.depth - dt * c.normal.dot(vp),
                rel_velocity: vp,
                body_id: c.sphere,
                material_id: 0,
            };
            let parts = contact_force_parts(&contact, material);
            if parts.normal <= 0.0 {
                continue;
            }
            let f = parts.total(c.normal);
            if let Some(o) = out.as_deref_mut() {
                for i in 0..3 {
                    o.axpy(f[i], &c.jac[i], 1.0);
                }
            }
            if record {
                if parts.tangential.norm() > material.mu * parts.normal * (1.0 + 1e-12) {
                    self.report.cone_violations += 1;
                }
                self.report.contacts.push(AppliedContact {
                    sphere: c.sphere,
                    point: c.point,
                    normal: c.normal,
                    normal_force: parts.normal,
                    tangential_force: parts.tangential,
                    mu: material.mu,
                });
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn residual(
        &mut self,
        mass: &DMatrix<f64>,
        bias: &DVector<f64>,
        grav: &DVector<f64>,
        u0: &DVector<f64>,
        a: &DVector<f64>,
        world: &WorldState,
        dt: f64,
        servo: &crate::robot::ServoGains,
        material: &Material,
    ) -> DVector<f64> {
        let v1 = u0 + a * dt;
        let mut forces = grav - bias;
        self.joint_forces(world, &v1, dt, servo, &mut forces);
        self.contact_forces(&v1, dt, material, Some(&mut forces), false);
        mass * a - forces
    }

    #[allow(clippy::too_many_arguments)]
    fn residual_jacobian(
        &self,
        mass: &DMatrix<f64>,
        u0: &DVector<f64>,
        a: &DVector<f64>,
        world: &WorldState,
        dt: f64,
        servo: &crate::robot::ServoGains,
        material: &Material,
    ) -> DMatrix<f64> {
        let n = mass.nrows();
        let v1 = u0 + a * dt;
        let mut jr = mass.clone();
        for (j, spec) in self.joint_specs.iter().enumerate() {
            let rate = v1[6 + j];
            let st = JointState::new(world.joints[j].angle + dt * rate, rate);
            let (mut dq, mut dv) = joint_limit_gradient(st, spec);
            match spec.kind {
                JointKind::Servo => {
                    if let Some(t) = self.targets[j] {
                        let (gq, gv) = servo_torque_gradient(t, st, servo.kp, servo.kd, spec.max_torque);
                        dq += gq;
                        dv += gv;
                    }
                }
                JointKind::PassiveSpring | JointKind::CableModulated => {
                    dq -= spec.stiffness;
                    dv -= spec.damping;
                }
            }
            jr[(6 + j, 6 + j)] -= dt * (dt * dq + dv);
        }
        for c in &self.candidates {
            let vp = Vec3::new(c.jac[0].dot(&v1), c.jac[1].dot(&v1), c.jac[2].dot(&v1));
            let contact = Contact {
                point: c.point,
                normal: c.normal,
                penetration: c.depth - dt * c.normal.dot(vp),
                rel_velocity: vp,
                body_id: c.sphere,
                material_id: 0,
            };
            let (fv, fd) = contact_force_jacobian(&contact, material);
            if fd == Vec3::ZERO && fv == (Mat3 { m: [[0.0; 3]; 3] }) {
                continue;
            }
            // dF/dv1 = Fv - dt Fd n^T, in world axes
            let mut g = [[0.0; 3]; 3];
            for (i, row) in g.iter_mut().enumerate() {
                for (k, cell) in row.iter_mut().enumerate() {
                    *cell = fv.m[i][k] - dt * fd[i] * c.normal[k];
                }
            }
            // jr -= dt * J^T G J
            let mut gj = [DVector::zeros(n), DVector::zeros(n), DVector::zeros(n)];
            for (i, row) in gj.iter_mut().enumerate() {
                for (k, jrow) in c.jac.iter().enumerate() {
                    if g[i][k] != 0.0 {
                        row.axpy(g[i][k], jrow, 1.0);
                    }
                }
            }
            for i in 0..3 {
                jr.ger(-dt, &c.jac[i], &gj[i], 1.0);
            }
        }
        jr
    }
}

/// Advances a world by one step with a fresh workspace.
pub fn step_world(
    world: &WorldState,
    robot: &ArticulatedRobot,
    commands: Actuation<'_>,
    terrain: &Terrain,
    dt: f64,
) -> Result<(WorldState, StepReport), DynamicsError> {
    let mut next = world.clone();
    let mut stepper = Stepper::new();
    let report = stepper.step(&mut next, robot, commands, terrain, dt)?.clone();
    Ok((next, report))
}

/// Link frames for the current configuration.
pub fn world_frames(world: &WorldState, robot: &ArticulatedRobot) -> Vec<LinkFrame> {
    let mut frames = Vec::with_capacity(robot.links.len());
    forward_kinematics(robot, &world.base, &world.angles(), &mut frames);
    frames
}

/// Per-link world poses and velocities.
pub fn body_states(world: &WorldState, robot: &ArticulatedRobot) -> Vec<BodyState> {
    let frames = world_frames(world, robot);
    let o0 = world.base.position;
    robot
        .links
        .iter()
        .enumerate()
        .map(|(l, link)| {
            let f = &frames[l];
            let mut v = world.base_velocity + world.base_angular_velocity.cross(f.com - o0);
            let mut w = world.base_angular_velocity;
            for &j in &robot.chains[l] {
                let fj = &frames[j + 1];
                let qd = world.joints[j].rate;
                v += fj.axis.cross(f.com - fj.pose.position) * qd;
                w += fj.axis * qd;
            }
            BodyState {
                pose: f.pose,
                linear_velocity: v,
                angular_velocity: w,
                mass: link.mass,
                inertia: link.inertia,
            }
        })
        .collect()
}

pub fn linear_momentum(world: &WorldState, robot: &ArticulatedRobot) -> Vec3 {
    body_states(world, robot)
        .iter()
        .fold(Vec3::ZERO, |acc, b| acc + b.linear_velocity * b.mass)
}

/// Energy split used by the passive-decay check.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EnergyBreakdown {
    pub kinetic: f64,
    pub gravity: f64,
    pub joint_springs: f64,
    pub contact: f64,
}

impl EnergyBreakdown {
    pub fn total(&self) -> f64 {
        self.kinetic + self.gravity + self.joint_springs + self.contact
    }
}

/// Kinetic, gravitational, joint-spring/limit-stop and contact-spring energy.
/// Servo torques are not conservative and carry no potential.
pub fn mechanical_energy(world: &WorldState, robot: &ArticulatedRobot, terrain: &Terrain) -> EnergyBreakdown {
    let frames = world_frames(world, robot);
    let mut e = EnergyBreakdown::default();
    for (b, f) in body_states(world, robot).iter().zip(&frames) {
        let inertia = f.rot.congruent_diagonal(b.inertia);
        e.kinetic += 0.5 * b.mass * b.linear_velocity.norm_squared()
            + 0.5 * b.angular_velocity.dot(inertia.mul_vec(b.angular_velocity));
        e.gravity -= b.mass * world.gravity.dot(f.com);
    }
    let mut specs = robot.joints.clone();
    if robot.tail.variant == TailVariant::Flexible {
        let k = tail_joint_stiffness(world.reel, &robot.tail).expect("flexible tail");
        let rest = tail_rest_angles(world.reel, &robot.tail).expect("flexible tail");
        for (i, j) in robot.tail_joints.clone().enumerate() {
            specs[j].stiffness = k[i];
            specs[j].rest_angle = rest[i];
        }
    }
    for (s, spec) in world.joints.iter().zip(&specs) {
        e.joint_springs += joint_potential_energy(s.angle, spec, spec.kind != JointKind::Servo);
    }
    let mut hits = Vec::new();
    for sphere in &robot.spheres {
        let c = frames[sphere.link].pose.transform_point(sphere.local);
        hits.clear();
        terrain.sphere_hits(c, sphere.radius, 0.0, &mut hits);
        for h in &hits {
            if h.depth > 0.0 {
                e.contact += 0.5 * terrain.material.stiffness * h.depth * h.depth;
            }
        }
    }
    e
}
