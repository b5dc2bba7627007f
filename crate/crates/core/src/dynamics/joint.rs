//! Revolute joint models: position-controlled servos, passive torsional
//! springs and cable-modulated springs, all with one-sided limit stops.

use crate::math::Vec3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum JointKind {
    Servo,
    PassiveSpring,
    /// Spring whose stiffness and rest angle follow the tail reel.
    CableModulated,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JointSpec {
    pub kind: JointKind,
    /// Unit rotation axis in the joint frame.
    pub axis: Vec3,
    /// `[min, max]` in radians.
    pub limits: [f64; 2],
    pub stiffness: f64,
    pub damping: f64,
    pub rest_angle: f64,
    pub max_torque: f64,
}

impl JointSpec {
    pub fn is_valid(&self) -> bool {
        let axis_ok = (self.axis.norm() - 1.0).abs() < 1e-9;
        let torque_ok = self.kind != JointKind::Servo || self.max_torque > 0.0;
        axis_ok
            && torque_ok
            && self.limits[0] <= self.limits[1]
            && self.stiffness >= 0.0
            && self.damping >= 0.0
    }

    /// Stiffness of the limit stop.
    pub fn limit_stiffness(&self) -> f64 {
        (50.0 * self.stiffness).max(5.0)
    }

    /// Damping of the limit stop.
    pub fn limit_damping(&self) -> f64 {
        (50.0 * self.damping).max(0.02)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct JointState {
    pub angle: f64,
    pub rate: f64,
}

impl JointState {
    pub const fn new(angle: f64, rate: f64) -> JointState {
        JointState { angle, rate }
    }
}

/// Saturated PD position servo.
pub fn servo_torque(target: f64, state: JointState, kp: f64, kd: f64, max_torque: f64) -> f64 {
    (kp * (target - state.angle) - kd * state.rate).clamp(-max_torque, max_torque)
}

/// `d(servo_torque)/d(angle)` and `d/d(rate)`; zero while saturated.
pub fn servo_torque_gradient(target: f64, state: JointState, kp: f64, kd: f64, max_torque: f64) -> (f64, f64) {
    let raw = kp * (target - state.angle) - kd * state.rate;
    if raw.abs() < max_torque {
        (-kp, -kd)
    } else {
        (0.0, 0.0)
    }
}

/// Linear torsional spring-damper about `rest_angle`.
pub fn spring_torque(state: JointState, spec: &JointSpec) -> f64 {
    -spec.stiffness * (state.angle - spec.rest_angle) - spec.damping * state.rate
}

/// One-sided restoring torque outside `[min, max]`; zero inside.
pub fn joint_limit_torque(state: JointState, spec: &JointSpec) -> f64 {
    let [lo, hi] = spec.limits;
    let k = spec.limit_stiffness();
    let c = spec.limit_damping();
    if state.angle > hi {
        // damping resists further travel only; never pulls back into the stop
        (-k * (state.angle - hi) - c * state.rate).min(0.0)
    } else if state.angle < lo {
        (-k * (state.angle - lo) - c * state.rate).max(0.0)
    } else {
        0.0
    }
}

/// Gradient of [`joint_limit_torque`] as `(d/dangle, d/drate)`.
pub fn joint_limit_gradient(state: JointState, spec: &JointSpec) -> (f64, f64) {
    let [lo, hi] = spec.limits;
    let k = spec.limit_stiffness();
    let c = spec.limit_damping();
    let active = if state.angle > hi {
        -k * (state.angle - hi) - c * state.rate < 0.0
    } else if state.angle < lo {
        -k * (state.angle - lo) - c * state.rate > 0.0
    } else {
        false
    };
    if active {
        (-k, -c)
    } else {
        (0.0, 0.0)
    }
}

/// Elastic energy stored in the joint spring and limit stop.
pub fn joint_potential_energy(angle: f64, spec: &JointSpec, include_spring: bool) -> f64 {
    let mut e = 0.0;
    if include_spring {
        let d = angle - spec.rest_angle;
        e += 0.5 * spec.stiffness * d * d;
    }
    let [lo, hi] = spec.limits;
    let k = spec.limit_stiffness();
    if angle > hi {
        e += 0.5 * k * (angle - hi) * (angle - hi);
    } else if angle < lo {
        e += 0.5 * k * (angle - lo) * (angle - lo);
    }
    e
}
