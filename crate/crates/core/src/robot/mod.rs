//! Robot model: morphology record, link/joint tree construction and the
//! reel-angle mapping for the cable-driven tail.
//!
//! The robot is two body segments joined by a yaw servo. Each segment carries
//! a horizontal servo that swings a rigid coupler laterally and a vertical
//! servo that rocks the coupler like a see-saw, so one leg of the pair lifts
//! while the other presses down. Each leg is an upper link fixed to the
//! coupler and a lower link on a passive, one-directional torsion spring.

pub mod kinematics;

use alloc::vec::Vec;
use core::f64::consts::PI;
use core::fmt;

use crate::dynamics::joint::{JointKind, JointSpec};
use crate::math::{Pose, UnitQuat, Vec3};
use kinematics::{center_of_mass, forward_kinematics, sphere_center, LinkFrame};

pub const GRAVITY: f64 = 9.81;
pub const TAIL_SEGMENTS: usize = 5;

#[inline]
pub(crate) fn deg(d: f64) -> f64 {
    d * PI / 180.0
}

#[derive(Clone, Debug, PartialEq)]
pub enum ModelError {
    InvalidMorphology(&'static str),
    WrongTailVariant,
}

impl fmt::Display for ModelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelError::InvalidMorphology(why) => write!(f, "invalid morphology: {why}"),
            ModelError::WrongTailVariant => write!(f, "operation requires a flexible tail"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for ModelError {}

/// Per-link masses in kg.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct LinkMasses {
    pub front_segment: f64,
    /// Battery and controller box sitting above the body servo.
    pub electronics: f64,
    pub rear_segment: f64,
    pub horiz_link: f64,
    /// Coupler bar including both upper legs.
    pub coupler: f64,
    pub lower_leg: f64,
}

impl Default for LinkMasses {
    fn default() -> Self {
        LinkMasses {
            front_segment: 0.085,
            electronics: 0.08,
            rear_segment: 0.115,
            horiz_link: 0.02,
            coupler: 0.04,
            lower_leg: 0.0125,
        }
    }
}

impl LinkMasses {
    pub fn body_total(&self) -> f64 {
        self.front_segment
            + self.electronics
            + self.rear_segment
            + 2.0 * self.horiz_link
            + 2.0 * self.coupler
            + 4.0 * self.lower_leg
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct ServoGains {
    pub kp: f64,
    pub kd: f64,
    pub max_torque: f64,
}

impl Default for ServoGains {
    fn default() -> Self {
        ServoGains {
            kp: 3.0,
            kd: 0.03,
            max_torque: 0.39,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct RigidTailDims {
    pub length: f64,
    pub width: f64,
    pub thickness: f64,
    pub mass: f64,
    /// Compliance of the mount joint.
    pub mount_stiffness: f64,
    pub mount_damping: f64,
    /// Depth by which the unloaded tip would sink below the foot plane in
    /// neutral stance; the mount spring turns it into rear support.
    pub ground_preload: f64,
}

impl Default for RigidTailDims {
    fn default() -> Self {
        RigidTailDims {
            length: 0.090,
            width: 0.008,
            thickness: 0.0035,
            mass: 0.003,
            mount_stiffness: 0.6,
            mount_damping: 0.005,
            ground_preload: 0.0,
        }
    }
}

/// Geometry, mass and actuator description of the robot body.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct Morphology {
    pub body_length: f64,
    pub leg_length: f64,
    pub neutral_com_height: f64,
    pub leg_horiz_range_deg: [f64; 2],
    pub body_yaw_range_deg: [f64; 2],
    /// Total see-saw travel of the vertical leg servos.
    pub leg_vert_range_deg: f64,
    /// Swing-foot clearance at full see-saw deflection.
    pub leg_tip_lift: f64,
    pub leg_spring_kgf_per_cm: f64,
    pub leg_spring_moment_arm: f64,
    pub leg_spring_damping: f64,
    /// Backward fold range of the passive knee.
    pub knee_fold_deg: f64,
    /// Spring preload angle pressing the knee into its stop.
    pub knee_preload_deg: f64,
    pub segment_width: f64,
    pub segment_height: f64,
    /// Lateral distance of the upper-leg root from the coupler axis.
    pub hip_offset: f64,
    pub contact_radius: f64,
    pub masses: LinkMasses,
    pub rigid_tail: RigidTailDims,
    pub servo: ServoGains,
}

impl Default for Morphology {
    fn default() -> Self {
        Morphology {
            body_length: 0.20,
            leg_length: 0.12,
            neutral_com_height: 0.05,
            leg_horiz_range_deg: [-25.0, 30.0],
            body_yaw_range_deg: [-30.0, 30.0],
            leg_vert_range_deg: 30.0,
            leg_tip_lift: 0.04,
            leg_spring_kgf_per_cm: 0.2,
            leg_spring_moment_arm: 0.01,
            leg_spring_damping: 0.001,
            knee_fold_deg: 70.0,
            knee_preload_deg: 10.0,
            segment_width: 0.05,
            segment_height: 0.035,
            hip_offset: 0.02,
            contact_radius: 0.004,
            masses: LinkMasses::default(),
            rigid_tail: RigidTailDims::default(),
            servo: ServoGains::default(),
        }
    }
}

impl Morphology {
    pub fn validate(&self) -> Result<(), ModelError> {
        let positive = [
            self.body_length,
            self.leg_length,
            self.neutral_com_height,
            self.leg_vert_range_deg,
            self.leg_tip_lift,
            self.leg_spring_kgf_per_cm,
            self.leg_spring_moment_arm,
            self.segment_width,
            self.segment_height,
            self.contact_radius,
            self.rigid_tail.length,
            self.rigid_tail.width,
            self.rigid_tail.thickness,
            self.servo.max_torque,
        ];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(ModelError::InvalidMorphology("lengths, ranges and spring constants must be positive"));
        }
        let m = &self.masses;
        let masses = [
            m.front_segment,
            m.electronics,
            m.rear_segment,
            m.horiz_link,
            m.coupler,
            m.lower_leg,
            self.rigid_tail.mass,
        ];
        if masses.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(ModelError::InvalidMorphology("link masses must be positive"));
        }
        if !(self.leg_horiz_range_deg[0] < self.leg_horiz_range_deg[1])
            || !(self.body_yaw_range_deg[0] < self.body_yaw_range_deg[1])
        {
            return Err(ModelError::InvalidMorphology("joint ranges must be ordered"));
        }
        if self.servo.kp < 0.0 || self.servo.kd < 0.0 || self.leg_spring_damping < 0.0 {
            return Err(ModelError::InvalidMorphology("gains and damping must be non-negative"));
        }
        if !(self.rigid_tail.ground_preload >= 0.0 && self.rigid_tail.ground_preload < self.rigid_tail.length) {
            return Err(ModelError::InvalidMorphology("rigid tail preload must lie in [0, length)"));
        }
        if self.hip_offset < 0.0 || self.hip_offset >= self.foot_lateral_offset() {
            return Err(ModelError::InvalidMorphology("hip offset must lie inside the foot span"));
        }
        if self.leg_vert_range_deg >= 180.0 {
            return Err(ModelError::InvalidMorphology("vertical range too large"));
        }
        Ok(())
    }

    /// Half of the see-saw travel, in radians.
    pub fn vert_half_range(&self) -> f64 {
        deg(0.5 * self.leg_vert_range_deg)
    }

    /// Lateral foot distance from the see-saw axis that yields the stated
    /// swing clearance at full deflection (`2 y sin(half range) = lift`).
    pub fn foot_lateral_offset(&self) -> f64 {
        0.5 * self.leg_tip_lift / libm::sin(self.vert_half_range())
    }

    pub fn segment_length(&self) -> f64 {
        0.5 * self.body_length - 0.01
    }

    pub fn hip_spacing(&self) -> f64 {
        0.5 * self.body_length
    }
}

/// Torsional stiffness of the passive leg spring, `k_lin * r^2`, where
/// `k_lin` converts kgf/cm to N/m.
pub fn leg_spring_torsional_k(m: &Morphology) -> f64 {
    leg_spring_linear_k(m) * m.leg_spring_moment_arm * m.leg_spring_moment_arm
}

/// Linear spring rate in N/m.
pub fn leg_spring_linear_k(m: &Morphology) -> f64 {
    m.leg_spring_kgf_per_cm * GRAVITY / 0.01
}

/// See-saw coupling: the left leg lifts by the servo angle while the right
/// leg lowers by the same amount.
pub fn coupled_leg_lift(vert_servo_angle: f64) -> (f64, f64) {
    (vert_servo_angle, -vert_servo_angle)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum TailVariant {
    None,
    Rigid,
    Flexible,
}

/// Tail variant plus the flexible-tail parameters (ignored for other variants).
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct TailKind {
    pub variant: TailVariant,
    pub segment_length: f64,
    pub segment_mass: f64,
    pub segment_width: f64,
    pub segment_height: f64,
    /// Connection box on the rear segment.
    pub box_mass: f64,
    pub mount_height_offset: f64,
    pub k_min: f64,
    pub k_max: f64,
    pub damping: f64,
    /// Reel angles bounding the stiffening ramp, degrees.
    pub ramp_start_deg: f64,
    pub ramp_end_deg: f64,
    /// Rest shape at full tension, degrees, positive bends tip-down.
    pub base_shape_deg: [f64; TAIL_SEGMENTS],
    /// Mount pitch below horizontal; `None` solves it so the fully tensioned
    /// tail touches the ground in neutral stance.
    pub mount_pitch_deg: Option<f64>,
    /// Joint range either side of zero, degrees.
    pub joint_range_deg: f64,
    pub reel_max_rate_deg_s: f64,
}

impl Default for TailKind {
    fn default() -> Self {
        TailKind {
            variant: TailVariant::Flexible,
            segment_length: 0.03,
            segment_mass: 0.006,
            segment_width: 0.012,
            segment_height: 0.010,
            box_mass: 0.010,
            mount_height_offset: 0.04,
            k_min: 0.002,
            k_max: 1.2,
            damping: 0.003,
            ramp_start_deg: 55.0,
            ramp_end_deg: 90.0,
            base_shape_deg: [20.0, -25.0, -25.0, 15.0, 15.0],
            mount_pitch_deg: None,
            joint_range_deg: 60.0,
            reel_max_rate_deg_s: 600.0,
        }
    }
}

impl TailKind {
    pub fn none() -> TailKind {
        TailKind {
            variant: TailVariant::None,
            ..TailKind::default()
        }
    }

    pub fn rigid() -> TailKind {
        TailKind {
            variant: TailVariant::Rigid,
            ..TailKind::default()
        }
    }

    pub fn flexible() -> TailKind {
        TailKind::default()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.variant != TailVariant::Flexible {
            return Ok(());
        }
        let positive = [
            self.segment_length,
            self.segment_mass,
            self.segment_width,
            self.segment_height,
            self.box_mass,
            self.joint_range_deg,
            self.reel_max_rate_deg_s,
        ];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(ModelError::InvalidMorphology("tail dimensions must be positive"));
        }
        if !(self.k_min >= 0.0 && self.k_min < self.k_max) {
            return Err(ModelError::InvalidMorphology("tail stiffness needs 0 <= k_min < k_max"));
        }
        if !(0.0 <= self.ramp_start_deg && self.ramp_start_deg < self.ramp_end_deg && self.ramp_end_deg <= 90.0) {
            return Err(ModelError::InvalidMorphology("stiffening ramp must be ordered inside [0, 90]"));
        }
        if self.damping < 0.0 || self.mount_height_offset < 0.0 {
            return Err(ModelError::InvalidMorphology("tail damping and mount offset must be non-negative"));
        }
        Ok(())
    }

    /// Fraction of the stiffening ramp reached at `reel_deg`.
    pub fn ramp_fraction(&self, reel_deg: f64) -> f64 {
        ((reel_deg - self.ramp_start_deg) / (self.ramp_end_deg - self.ramp_start_deg)).clamp(0.0, 1.0)
    }
}

/// Reel servo position driving the tail cables, degrees in `[0, 90]`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ReelState {
    angle: f64,
    pub rate: f64,
}

impl ReelState {
    pub const MAX_DEG: f64 = 90.0;

    pub fn new(angle_deg: f64) -> ReelState {
        ReelState {
            angle: clamp_reel(angle_deg),
            rate: 0.0,
        }
    }

    pub fn angle(&self) -> f64 {
        self.angle
    }

    pub fn set_angle(&mut self, deg: f64) {
        self.angle = clamp_reel(deg);
    }

    /// Moves toward `target` at no more than `max_rate` deg/s.
    pub fn track(&mut self, target: f64, max_rate: f64, dt: f64) {
        let target = clamp_reel(target);
        let step = max_rate * dt;
        let before = self.angle;
        let next = if (target - before).abs() <= step {
            target
        } else if target > before {
            before + step
        } else {
            before - step
        };
        self.angle = clamp_reel(next);
        self.rate = (self.angle - before) / dt;
    }
}

fn clamp_reel(d: f64) -> f64 {
    if d.is_nan() {
        0.0
    } else {
        d.clamp(0.0, ReelState::MAX_DEG)
    }
}

/// Per-joint stiffness of the flexible tail at the given reel angle.
pub fn tail_joint_stiffness(reel: ReelState, tail: &TailKind) -> Result<[f64; TAIL_SEGMENTS], ModelError> {
    if tail.variant != TailVariant::Flexible {
        return Err(ModelError::WrongTailVariant);
    }
    let f = tail.ramp_fraction(reel.angle());
    Ok([tail.k_min + f * (tail.k_max - tail.k_min); TAIL_SEGMENTS])
}

/// Rest angles of the tail joints in radians: the s-shaped base, scaled by
/// the ramp fraction.
pub fn tail_rest_angles(reel: ReelState, tail: &TailKind) -> Result<[f64; TAIL_SEGMENTS], ModelError> {
    if tail.variant != TailVariant::Flexible {
        return Err(ModelError::WrongTailVariant);
    }
    let f = tail.ramp_fraction(reel.angle());
    let mut out = [0.0; TAIL_SEGMENTS];
    for (o, s) in out.iter_mut().zip(tail.base_shape_deg) {
        *o = f * deg(s);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Link {
    pub name: &'static str,
    pub parent: Option<usize>,
    pub mass: f64,
    /// Center of mass in the link frame.
    pub com: Vec3,
    /// Principal moments about the center of mass, link axes.
    pub inertia: Vec3,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SphereRole {
    Foot(Foot),
    Body,
    TailTip,
    TailSegment,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Foot {
    FrontLeft,
    FrontRight,
    RearLeft,
    RearRight,
}

impl Foot {
    pub const ALL: [Foot; 4] = [Foot::FrontLeft, Foot::FrontRight, Foot::RearLeft, Foot::RearRight];
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContactSphere {
    pub link: usize,
    pub local: Vec3,
    pub radius: f64,
    pub role: SphereRole,
}

/// Joint indices of the servo-driven degrees of freedom.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ServoMap {
    pub front_horiz: usize,
    pub front_vert: usize,
    pub rear_horiz: usize,
    pub rear_vert: usize,
    pub body_yaw: usize,
    /// The reel has no joint; it only modulates cable joints.
    pub tail_reel: Option<usize>,
}

/// Immutable robot description: link tree, joints and contact geometry.
#[derive(Clone, Debug)]
pub struct ArticulatedRobot {
    pub links: Vec<Link>,
    /// `joints[j]` connects `links[j + 1]` to its parent.
    pub joints: Vec<JointSpec>,
    /// Fixed transform from the parent link frame to joint `j`'s frame.
    pub joint_offsets: Vec<Pose>,
    pub spheres: Vec<ContactSphere>,
    pub servos: ServoMap,
    /// Sphere indices of the FL, FR, RL, RR feet.
    pub feet: [usize; 4],
    pub tail_tip: Option<usize>,
    pub tail_joints: core::ops::Range<usize>,
    pub morphology: Morphology,
    pub tail: TailKind,
    /// Height of the see-saw axes above the foot plane in neutral stance.
    pub axis_height: f64,
    /// Solved mount pitch of the tail, radians.
    pub tail_mount_pitch: f64,
    /// `chains[l]` lists the joints that move link `l`.
    pub chains: Vec<Vec<usize>>,
}

impl ArticulatedRobot {
    pub fn joint_count(&self) -> usize {
        self.joints.len()
    }

    pub fn dof(&self) -> usize {
        6 + self.joints.len()
    }

    pub fn total_mass(&self) -> f64 {
        self.links.iter().map(|l| l.mass).sum()
    }

    pub fn servo_joints(&self) -> [usize; 5] {
        let s = &self.servos;
        [s.front_horiz, s.front_vert, s.rear_horiz, s.rear_vert, s.body_yaw]
    }

    /// Joint angles of the neutral stance with the tail at rest for `reel`.
    pub fn neutral_angles(&self, reel: ReelState) -> Vec<f64> {
        let mut q = alloc::vec![0.0; self.joints.len()];
        if self.tail.variant == TailVariant::Flexible {
            if let Ok(rest) = tail_rest_angles(reel, &self.tail) {
                for (k, j) in self.tail_joints.clone().enumerate() {
                    q[j] = rest[k];
                }
            }
        }
        q
    }

    /// Base pose that puts the four feet on the `z = 0` plane with all
    /// joints at `angles`.
    pub fn neutral_base_pose(&self) -> Pose {
        Pose::translation(Vec3::new(0.0, 0.0, self.axis_height))
    }

    pub fn frames(&self, base: &Pose, angles: &[f64]) -> Vec<LinkFrame> {
        let mut out = Vec::with_capacity(self.links.len());
        forward_kinematics(self, base, angles, &mut out);
        out
    }
}

struct Part {
    mass: f64,
    center: Vec3,
    dims: Vec3,
}

fn box_inertia(m: f64, d: Vec3) -> Vec3 {
    Vec3::new(
        m * (d.y * d.y + d.z * d.z) / 12.0,
        m * (d.x * d.x + d.z * d.z) / 12.0,
        m * (d.x * d.x + d.y * d.y) / 12.0,
    )
}

/// Lumps box-shaped parts into one link (diagonal inertia approximation).
fn composite(parts: &[Part]) -> (f64, Vec3, Vec3) {
    let mass: f64 = parts.iter().map(|p| p.mass).sum();
    let com = parts.iter().fold(Vec3::ZERO, |acc, p| acc + p.center * p.mass) / mass;
    let mut inertia = Vec3::ZERO;
    for p in parts {
        let r = p.center - com;
        inertia += box_inertia(p.mass, p.dims)
            + Vec3::new(r.y * r.y + r.z * r.z, r.x * r.x + r.z * r.z, r.x * r.x + r.y * r.y) * p.mass;
    }
    (mass, com, inertia)
}

struct Builder {
    links: Vec<Link>,
    joints: Vec<JointSpec>,
    offsets: Vec<Pose>,
    spheres: Vec<ContactSphere>,
}

impl Builder {
    fn link(&mut self, name: &'static str, parent: Option<usize>, parts: &[Part]) -> usize {
        let (mass, com, inertia) = composite(parts);
        self.links.push(Link {
            name,
            parent,
            mass,
            com,
            inertia,
        });
        self.links.len() - 1
    }

    fn child(&mut self, name: &'static str, parent: usize, offset: Pose, joint: JointSpec, parts: &[Part]) -> usize {
        self.offsets.push(offset);
        self.joints.push(joint);
        self.link(name, Some(parent), parts)
    }

    fn sphere(&mut self, link: usize, local: Vec3, radius: f64, role: SphereRole) -> usize {
        self.spheres.push(ContactSphere {
            link,
            local,
            radius,
            role,
        });
        self.spheres.len() - 1
    }
}

/// Knee lateral position such that upper + lower leg length equals
/// `leg_length`, for a horizontal upper leg from `root` and a foot at
/// `(foot_y, -drop)`.
fn knee_lateral(leg_length: f64, root: f64, foot_y: f64, drop: f64) -> f64 {
    let a = leg_length + root;
    (a * a - foot_y * foot_y - drop * drop) / (2.0 * (a - foot_y))
}

struct LegGeometry {
    knee_y: f64,
    foot_y: f64,
    drop: f64,
}

fn leg_geometry(m: &Morphology, axis_height: f64) -> LegGeometry {
    let foot_y = m.foot_lateral_offset();
    let drop = axis_height - m.contact_radius;
    let knee_y = knee_lateral(m.leg_length, m.hip_offset, foot_y, drop);
    LegGeometry { knee_y, foot_y, drop }
}

/// Builds the link tree for the given morphology and tail.
pub fn build_robot(m: &Morphology, tail: &TailKind) -> Result<ArticulatedRobot, ModelError> {
    m.validate()?;
    tail.validate()?;
    // CoM of the tailless body is affine in the axis height; two probes solve it.
    let probe = |h: f64| -> Result<f64, ModelError> {
        let r = assemble(m, &TailKind::none(), h, 0.0)?;
        let frames = r.frames(&r.neutral_base_pose(), &r.neutral_angles(ReelState::new(0.0)));
        Ok(center_of_mass(&r, &frames).z)
    };
    let (h0, h1) = (0.03, 0.08);
    let (c0, c1) = (probe(h0)?, probe(h1)?);
    let mut h = h0 + (m.neutral_com_height - c0) * (h1 - h0) / (c1 - c0);
    // one Newton polish in case of residual nonlinearity
    let ch = probe(h)?;
    h += (m.neutral_com_height - ch) * (h1 - h0) / (c1 - c0);
    if !(h > 2.0 * m.contact_radius) {
        return Err(ModelError::InvalidMorphology("neutral CoM height unreachable with this geometry"));
    }
    let lg = leg_geometry(m, h);
    if !(lg.knee_y > m.hip_offset) || lg.drop <= 0.0 {
        return Err(ModelError::InvalidMorphology("leg too short for neutral stance"));
    }
    let pitch = match tail.variant {
        TailVariant::None => 0.0,
        TailVariant::Rigid => {
            let drop = h - m.contact_radius;
            let s = (drop + m.rigid_tail.ground_preload) / m.rigid_tail.length;
            if !(s < 1.0) {
                return Err(ModelError::InvalidMorphology("rigid tail too short to reach the ground"));
            }
            libm::asin(s)
        }
        TailVariant::Flexible => match tail.mount_pitch_deg {
            Some(d) => deg(d),
            None => solve_flexible_pitch(m, tail, h)?,
        },
    };
    assemble(m, tail, h, pitch)
}

/// Mount pitch at which the fully tensioned tail's tip sphere rests on the
/// foot plane in neutral stance. Bisection on the forward kinematics.
fn solve_flexible_pitch(m: &Morphology, tail: &TailKind, h: f64) -> Result<f64, ModelError> {
    let tip_z = |pitch: f64| -> Result<f64, ModelError> {
        let r = assemble(m, tail, h, pitch)?;
        let frames = r.frames(&r.neutral_base_pose(), &r.neutral_angles(ReelState::new(90.0)));
        let tip = r.tail_tip.expect("flexible tail has a tip");
        Ok(sphere_center(&r, &frames, tip).z - r.spheres[tip].radius)
    };
    let (mut lo, mut hi) = (deg(-30.0), deg(89.0));
    let zlo = tip_z(lo)?;
    let zhi = tip_z(hi)?;
    if !(zlo > 0.0 && zhi < 0.0) {
        return Err(ModelError::InvalidMorphology("tail cannot reach the ground from its mount"));
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if tip_z(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn servo_joint(axis: Vec3, range_deg: [f64; 2], gains: &ServoGains) -> JointSpec {
    JointSpec {
        kind: JointKind::Servo,
        axis,
        limits: [deg(range_deg[0]), deg(range_deg[1])],
        stiffness: 0.0,
        damping: 0.0,
        rest_angle: 0.0,
        max_torque: gains.max_torque,
    }
}

fn assemble(m: &Morphology, tail: &TailKind, h: f64, tail_pitch: f64) -> Result<ArticulatedRobot, ModelError> {
    let lg = leg_geometry(m, h);
    let r = m.contact_radius;
    let seg_len = m.segment_length();
    let seg_dims = Vec3::new(seg_len, m.segment_width, m.segment_height);
    let spacing = m.hip_spacing();
    let half_h = 0.5 * m.segment_height;
    let masses = &m.masses;
    let mut b = Builder {
        links: Vec::new(),
        joints: Vec::new(),
        offsets: Vec::new(),
        spheres: Vec::new(),
    };

    // Base: front segment, frame at the front hip on the see-saw axis.
    let front = b.link(
        "front_segment",
        None,
        &[
            Part {
                mass: masses.front_segment,
                center: Vec3::ZERO,
                dims: seg_dims,
            },
            Part {
                mass: masses.electronics,
                center: Vec3::new(-0.5 * spacing, 0.0, half_h + 0.012),
                dims: Vec3::new(0.05, 0.035, 0.024),
            },
        ],
    );
    let yaw_range = m.body_yaw_range_deg;
    let gains = m.servo;
    // Rear segment; frame on the body-yaw axis midway between the hips.
    let mut rear_parts = alloc::vec![Part {
        mass: masses.rear_segment,
        center: Vec3::new(-0.5 * spacing, 0.0, 0.0),
        dims: seg_dims,
    }];
    if tail.variant == TailVariant::Flexible {
        rear_parts.push(Part {
            mass: tail.box_mass,
            center: Vec3::new(-0.5 * spacing - 0.5 * seg_len + 0.01, 0.0, half_h + 0.5 * tail.mount_height_offset),
            dims: Vec3::new(0.02, 0.03, tail.mount_height_offset.max(0.005)),
        });
    }
    let rear = b.child(
        "rear_segment",
        front,
        Pose::translation(Vec3::new(-0.5 * spacing, 0.0, 0.0)),
        servo_joint(Vec3::Z, yaw_range, &gains),
        &rear_parts,
    );

    let knee_k = leg_spring_torsional_k(m);
    let knee = JointSpec {
        kind: JointKind::PassiveSpring,
        axis: Vec3::Y,
        limits: [0.0, deg(m.knee_fold_deg)],
        stiffness: knee_k,
        damping: m.leg_spring_damping,
        rest_angle: -deg(m.knee_preload_deg),
        max_torque: 0.0,
    };
    let vert_half = 0.5 * m.leg_vert_range_deg;
    let upper_len = lg.knee_y - m.hip_offset;
    let lower_vec = Vec3::new(0.0, lg.foot_y - lg.knee_y, -lg.drop);
    let lower_len = lower_vec.norm();

    let leg_pair = |b: &mut Builder, parent: usize, hip: Vec3, names: [&'static str; 4], roles: [Foot; 2]| {
        let horiz = b.child(
            names[0],
            parent,
            Pose::translation(hip),
            servo_joint(Vec3::Z, m.leg_horiz_range_deg, &gains),
            &[Part {
                mass: masses.horiz_link,
                center: Vec3::ZERO,
                dims: Vec3::new(0.024, 0.032, 0.024),
            }],
        );
        let upper_center = 0.5 * (lg.knee_y + m.hip_offset);
        let upper = |side: f64| Part {
            mass: 0.3 * masses.coupler,
            center: Vec3::new(0.0, side * upper_center, 0.0),
            dims: Vec3::new(0.008, upper_len, 0.006),
        };
        let coupler = b.child(
            names[1],
            horiz,
            Pose::default(),
            servo_joint(Vec3::X, [-vert_half, vert_half], &gains),
            &[
                Part {
                    mass: 0.4 * masses.coupler,
                    center: Vec3::ZERO,
                    dims: Vec3::new(0.02, 2.0 * m.hip_offset, 0.012),
                },
                upper(1.0),
                upper(-1.0),
            ],
        );
        let mut feet = [0usize; 2];
        for (k, side) in [1.0, -1.0].into_iter().enumerate() {
            let v = Vec3::new(0.0, side * lower_vec.y, lower_vec.z);
            let link = b.child(
                names[2 + k],
                coupler,
                Pose::translation(Vec3::new(0.0, side * lg.knee_y, 0.0)),
                knee,
                &[Part {
                    mass: masses.lower_leg,
                    center: v * 0.5,
                    dims: Vec3::new(0.008, 0.008, lower_len),
                }],
            );
            feet[k] = b.sphere(link, v, r, SphereRole::Foot(roles[k]));
        }
        (horiz, coupler, feet)
    };

    let (_, _, [fl, fr]) = leg_pair(
        &mut b,
        front,
        Vec3::ZERO,
        ["front_horiz", "front_coupler", "front_left_lower", "front_right_lower"],
        [Foot::FrontLeft, Foot::FrontRight],
    );
    let (_, rear_coupler, [rl, rr]) = leg_pair(
        &mut b,
        rear,
        Vec3::new(-0.5 * spacing, 0.0, 0.0),
        ["rear_horiz", "rear_coupler", "rear_left_lower", "rear_right_lower"],
        [Foot::RearLeft, Foot::RearRight],
    );
    let feet = [fl, fr, rl, rr];

    // Body underside corners.
    let cx = 0.5 * seg_len - r;
    let cy = 0.5 * m.segment_width - r;
    let cz = -half_h + r;
    for (link, center_x) in [(front, 0.0), (rear, -0.5 * spacing)] {
        for sx in [1.0, -1.0] {
            for sy in [1.0, -1.0] {
                b.sphere(link, Vec3::new(center_x + sx * cx, sy * cy, cz), r, SphereRole::Body);
            }
        }
    }

    let tail_start = b.joints.len();
    let mut tail_tip = None;
    let tail_pitch_axis = -Vec3::Y;
    match tail.variant {
        TailVariant::None => {}
        TailVariant::Rigid => {
            let rt = &m.rigid_tail;
            let offset = Pose::new(
                Vec3::new(-0.5 * seg_len, 0.0, 0.0),
                UnitQuat::from_axis_angle(tail_pitch_axis, tail_pitch),
            );
            let link = b.child(
                "rigid_tail",
                rear_coupler,
                offset,
                JointSpec {
                    kind: JointKind::PassiveSpring,
                    axis: tail_pitch_axis,
                    limits: [deg(-20.0), deg(20.0)],
                    stiffness: rt.mount_stiffness,
                    damping: rt.mount_damping,
                    rest_angle: 0.0,
                    max_torque: 0.0,
                },
                &[Part {
                    mass: rt.mass,
                    center: Vec3::new(-0.5 * rt.length, 0.0, 0.0),
                    dims: Vec3::new(rt.length, rt.width, rt.thickness),
                }],
            );
            b.sphere(link, Vec3::new(-0.5 * rt.length, 0.0, 0.0), r, SphereRole::TailSegment);
            tail_tip = Some(b.sphere(link, Vec3::new(-rt.length, 0.0, 0.0), r, SphereRole::TailTip));
        }
        TailVariant::Flexible => {
            let mount = Vec3::new(-0.5 * spacing - 0.5 * seg_len, 0.0, half_h + tail.mount_height_offset);
            let range = deg(tail.joint_range_deg);
            let mut parent = rear;
            const NAMES: [&str; TAIL_SEGMENTS] = ["tail_1", "tail_2", "tail_3", "tail_4", "tail_5"];
            let l = tail.segment_length;
            for (k, name) in NAMES.iter().enumerate() {
                let offset = if k == 0 {
                    Pose::new(mount, UnitQuat::from_axis_angle(tail_pitch_axis, tail_pitch))
                } else {
                    Pose::translation(Vec3::new(-l, 0.0, 0.0))
                };
                let link = b.child(
                    name,
                    parent,
                    offset,
                    JointSpec {
                        kind: JointKind::CableModulated,
                        axis: tail_pitch_axis,
                        limits: [-range, range],
                        stiffness: tail.k_min,
                        damping: tail.damping,
                        rest_angle: 0.0,
                        max_torque: 0.0,
                    },
                    &[Part {
                        mass: tail.segment_mass,
                        center: Vec3::new(-0.5 * l, 0.0, 0.0),
                        dims: Vec3::new(l, tail.segment_width, tail.segment_height),
                    }],
                );
                if k + 1 < TAIL_SEGMENTS {
                    let wy = 0.5 * tail.segment_width - r;
                    for sy in [1.0, -1.0] {
                        b.sphere(link, Vec3::new(-l, sy * wy, 0.0), r, SphereRole::TailSegment);
                    }
                } else {
                    tail_tip = Some(b.sphere(link, Vec3::new(-l, 0.0, 0.0), r, SphereRole::TailTip));
                }
                parent = link;
            }
        }
    }
    let tail_end = b.joints.len();

    let n_links = b.links.len();
    let mut chains = alloc::vec![Vec::new(); n_links];
    for (l, chain) in chains.iter_mut().enumerate() {
        let mut cur = l;
        while let Some(p) = b.links[cur].parent {
            chain.push(cur - 1);
            cur = p;
        }
    }

    let servos = ServoMap {
        body_yaw: 0,
        front_horiz: 1,
        front_vert: 2,
        rear_horiz: 5,
        rear_vert: 6,
        tail_reel: None,
    };
    Ok(ArticulatedRobot {
        links: b.links,
        joints: b.joints,
        joint_offsets: b.offsets,
        spheres: b.spheres,
        servos,
        feet,
        tail_tip,
        tail_joints: tail_start..tail_end,
        morphology: m.clone(),
        tail: tail.clone(),
        axis_height: h,
        tail_mount_pitch: tail_pitch,
        chains,
    })
}
