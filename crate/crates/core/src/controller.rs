//! Open-loop diagonal gait with body undulation, and tail stiffness
//! scheduling.
//!
//! Phase convention: the front-left and rear-right feet are in stance on
//! `[0, 0.5)`, the front-right and rear-left feet on `[0.5, 1)`.

use core::f64::consts::PI;

use crate::robot::{deg, ArticulatedRobot};

/// Largest sweep magnitudes the servo ranges allow for a symmetric stroke.
pub const HORIZ_LIMIT_DEG: f64 = 25.0;
pub const VERT_LIMIT_DEG: f64 = 15.0;
pub const BODY_LIMIT_DEG: f64 = 30.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ControllerError {
    InvalidGait(&'static str),
    InvalidPolicy(&'static str),
}

impl core::fmt::Display for ControllerError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            ControllerError::InvalidGait(why) => write!(f, "invalid gait: {why}"),
            ControllerError::InvalidPolicy(why) => write!(f, "invalid tail policy: {why}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for ControllerError {}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct GaitParams {
    pub period: f64,
    pub duty: f64,
    /// Half-stroke of the horizontal leg servos, degrees.
    pub horiz_amplitude: f64,
    /// See-saw deflection of the vertical servos, degrees.
    pub vert_amplitude: f64,
    pub body_undulation_amplitude: f64,
    /// Width of the cosine see-saw transition, as a fraction of the period.
    pub blend_width: f64,
    /// Swaps which diagonal is in stance first.
    pub mirrored: bool,
}

impl Default for GaitParams {
    fn default() -> Self {
        GaitParams {
            period: 2.0,
            duty: 0.5,
            horiz_amplitude: 20.0,
            vert_amplitude: 15.0,
            body_undulation_amplitude: 15.0,
            blend_width: 0.1,
            mirrored: false,
        }
    }
}

impl GaitParams {
    pub fn validate(&self) -> Result<(), ControllerError> {
        if !(self.period > 0.0 && self.period.is_finite()) {
            return Err(ControllerError::InvalidGait("period must be positive"));
        }
        if self.duty != 0.5 {
            return Err(ControllerError::InvalidGait("the diagonal gait requires duty 0.5"));
        }
        if !(0.0..=HORIZ_LIMIT_DEG).contains(&self.horiz_amplitude) {
            return Err(ControllerError::InvalidGait("horizontal amplitude outside servo range"));
        }
        if !(0.0..=VERT_LIMIT_DEG).contains(&self.vert_amplitude) {
            return Err(ControllerError::InvalidGait("vertical amplitude outside see-saw range"));
        }
        if !(0.0..=BODY_LIMIT_DEG).contains(&self.body_undulation_amplitude) {
            return Err(ControllerError::InvalidGait("body undulation outside servo range"));
        }
        if !(self.blend_width > 0.0 && self.blend_width <= 0.5) {
            return Err(ControllerError::InvalidGait("blend width must lie in (0, 0.5]"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum TailPolicyKind {
    Relaxed,
    ConstantStiff,
    Periodic,
    TouchTriggered,
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct TailPolicy {
    pub kind: TailPolicyKind,
    pub stiffen_phase: f64,
    pub relax_phase: f64,
    /// Reel angles, degrees.
    pub stiff_angle: f64,
    pub relaxed_angle: f64,
    /// Tip force below which the tail counts as unsupported, N.
    pub touch_threshold: f64,
    pub touch_hold: f64,
}

impl Default for TailPolicy {
    fn default() -> Self {
        TailPolicy {
            kind: TailPolicyKind::ConstantStiff,
            stiffen_phase: 0.75,
            relax_phase: 0.25,
            stiff_angle: 90.0,
            relaxed_angle: 0.0,
            touch_threshold: 0.05,
            touch_hold: 0.1,
        }
    }
}

impl TailPolicy {
    pub fn of_kind(kind: TailPolicyKind) -> TailPolicy {
        TailPolicy {
            kind,
            ..TailPolicy::default()
        }
    }

    pub fn validate(&self) -> Result<(), ControllerError> {
        if !(0.0..1.0).contains(&self.stiffen_phase) || !(0.0..1.0).contains(&self.relax_phase) {
            return Err(ControllerError::InvalidPolicy("phases must lie in [0, 1)"));
        }
        if !(55.0..=90.0).contains(&self.stiff_angle) {
            return Err(ControllerError::InvalidPolicy("stiff angle must lie in [55, 90]"));
        }
        if !(0.0..55.0).contains(&self.relaxed_angle) {
            return Err(ControllerError::InvalidPolicy("relaxed angle must lie in [0, 55)"));
        }
        if !(self.touch_threshold >= 0.0 && self.touch_hold >= 0.0) {
            return Err(ControllerError::InvalidPolicy("touch threshold and hold must be non-negative"));
        }
        Ok(())
    }
}

/// Antagonistic-cable tail shapes: every tail joint driven toward one end of
/// its range at full stiffness.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum TailOverride {
    /// Curl the tail up toward the body.
    FlexTowardBody,
    /// Flick the tip down against the ground.
    Flick,
}

/// Servo targets in radians plus the reel target in degrees.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ServoCommandSet {
    pub front_horiz: f64,
    pub front_vert: f64,
    pub rear_horiz: f64,
    pub rear_vert: f64,
    pub body_yaw: f64,
    pub reel_target: f64,
    pub tail_override: Option<TailOverride>,
}

impl ServoCommandSet {
    /// Holds every servo at zero and the reel at `reel_target`.
    pub fn neutral(reel_target: f64) -> ServoCommandSet {
        ServoCommandSet {
            reel_target,
            ..ServoCommandSet::default()
        }
    }

    /// Whether every servo target lies inside its joint range.
    pub fn within_limits(&self, robot: &ArticulatedRobot) -> bool {
        let s = &robot.servos;
        [
            (s.front_horiz, self.front_horiz),
            (s.front_vert, self.front_vert),
            (s.rear_horiz, self.rear_horiz),
            (s.rear_vert, self.rear_vert),
            (s.body_yaw, self.body_yaw),
        ]
        .into_iter()
        .all(|(j, t)| {
            let [lo, hi] = robot.joints[j].limits;
            lo <= t && t <= hi
        }) && (0.0..=90.0).contains(&self.reel_target)
    }
}

/// Sensor readings available to the controller.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Sensors {
    pub tail_tip_force: f64,
    /// How long the tip force has stayed below the touch threshold, s.
    pub tip_unloaded_for: f64,
}

/// Accumulates how long the tail tip has been unloaded.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TouchTracker {
    unloaded_for: f64,
}

impl TouchTracker {
    pub fn update(&mut self, tip_force: f64, threshold: f64, dt: f64) -> Sensors {
        if tip_force < threshold {
            self.unloaded_for += dt;
        } else {
            self.unloaded_for = 0.0;
        }
        Sensors {
            tail_tip_force: tip_force,
            tip_unloaded_for: self.unloaded_for,
        }
    }
}

/// Fractional part of `t / period`, in `[0, 1)`.
pub fn gait_phase(t: f64, period: f64) -> f64 {
    let p = (t / period).rem_euclid(1.0);
    if p >= 1.0 {
        0.0
    } else {
        p
    }
}

/// Square wave that is +1 on `[0, 0.5)` and -1 on `[0.5, 1)`, with cosine
/// transitions of width `w` centered on 0 and 0.5.
fn stance_wave(phase: f64, w: f64) -> f64 {
    let half = 0.5 * w;
    let (near, sign) = if phase < 0.25 || phase >= 0.75 {
        (if phase >= 0.75 { phase - 1.0 } else { phase }, -1.0)
    } else {
        (phase - 0.5, 1.0)
    };
    if near.abs() < half {
        sign * libm::cos(PI * (near + half) / w)
    } else if phase < 0.5 {
        1.0
    } else {
        -1.0
    }
}

/// Triangle wave rising from -1 to +1 over `[0, 0.5)` and falling back over
/// `[0.5, 1)`.
fn stroke_wave(phase: f64) -> f64 {
    if phase < 0.5 {
        4.0 * phase - 1.0
    } else {
        3.0 - 4.0 * phase
    }
}

/// Servo targets at `phase`. The reel target is left at zero.
pub fn servo_targets(phase: f64, params: &GaitParams) -> ServoCommandSet {
    let phase = if params.mirrored { gait_phase(phase + 0.5, 1.0) } else { phase };
    let s = stance_wave(phase, params.blend_width);
    let stroke = stroke_wave(phase);
    // Negative see-saw angle presses the left foot down.
    let front_vert = -deg(params.vert_amplitude) * s;
    let front_horiz = deg(params.horiz_amplitude) * stroke;
    // Rear segment retracts during the early part of each stance half.
    let body_yaw = deg(params.body_undulation_amplitude) * libm::sin(2.0 * PI * phase);
    let (front_vert, front_horiz, body_yaw) = if params.mirrored {
        (-front_vert, -front_horiz, -body_yaw)
    } else {
        (front_vert, front_horiz, body_yaw)
    };
    ServoCommandSet {
        front_horiz,
        front_vert,
        rear_horiz: -front_horiz,
        rear_vert: -front_vert,
        body_yaw,
        reel_target: 0.0,
        tail_override: None,
    }
}

/// Whether `phase` lies in the stiff window `[stiffen, relax)` taken mod 1.
pub fn in_stiff_window(phase: f64, policy: &TailPolicy) -> bool {
    let len = (policy.relax_phase - policy.stiffen_phase).rem_euclid(1.0);
    (phase - policy.stiffen_phase).rem_euclid(1.0) < len
}

/// Reel target in degrees.
pub fn tail_command(phase: f64, policy: &TailPolicy, sensors: &Sensors) -> f64 {
    match policy.kind {
        TailPolicyKind::Relaxed => policy.relaxed_angle,
        TailPolicyKind::ConstantStiff => policy.stiff_angle,
        TailPolicyKind::Periodic => {
            if in_stiff_window(phase, policy) {
                policy.stiff_angle
            } else {
                policy.relaxed_angle
            }
        }
        TailPolicyKind::TouchTriggered => {
            if sensors.tip_unloaded_for >= policy.touch_hold && sensors.tail_tip_force < policy.touch_threshold {
                policy.relaxed_angle
            } else {
                policy.stiff_angle
            }
        }
    }
}

pub fn controller_step(t: f64, params: &GaitParams, policy: &TailPolicy, sensors: &Sensors) -> ServoCommandSet {
    let phase = gait_phase(t, params.period);
    let mut cmd = servo_targets(phase, params);
    cmd.reel_target = tail_command(phase, policy, sensors);
    cmd
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &ServoCommandSet, b: &ServoCommandSet, tol: f64) -> bool {
        (a.front_horiz - b.front_horiz).abs() <= tol
            && (a.front_vert - b.front_vert).abs() <= tol
            && (a.rear_horiz - b.rear_horiz).abs() <= tol
            && (a.rear_vert - b.rear_vert).abs() <= tol
            && (a.body_yaw - b.body_yaw).abs() <= tol
    }

    #[test]
    fn phase_examples() {
        assert_eq!(gait_phase(0.0, 2.0), 0.0);
        assert_eq!(gait_phase(3.0, 2.0), 0.5);
        assert_eq!(gait_phase(2.0, 2.0), 0.0);
        assert!((0.0..1.0).contains(&gait_phase(-1e-18, 2.0)));
    }

    #[test]
    fn front_left_down_at_quarter_phase() {
        let c = servo_targets(0.25, &GaitParams::default());
        let (left, right) = crate::robot::coupled_leg_lift(c.front_vert);
        assert!(left < 0.0 && right > 0.0);
        assert!((c.front_vert + deg(15.0)).abs() < 1e-15);
    }

    #[test]
    fn half_period_mirror() {
        let p = GaitParams::default();
        for k in 0..512 {
            let ph = k as f64 / 1024.0;
            let a = servo_targets(ph, &p);
            let b = servo_targets(ph + 0.5, &p);
            assert_eq!(a.front_vert, -b.front_vert, "phase {ph}");
            assert_eq!(a.rear_vert, -b.rear_vert);
            assert_eq!(a.front_horiz, -b.front_horiz);
            assert_eq!(a.rear_horiz, -b.rear_horiz);
            assert!((a.body_yaw + b.body_yaw).abs() < 1e-15);
        }
    }

    #[test]
    fn periodic_in_phase() {
        let p = GaitParams::default();
        assert!(close(&servo_targets(0.0, &p), &servo_targets(1.0 - 1e-12, &p), 1e-9));
    }

    #[test]
    fn tail_policy_examples() {
        let s = Sensors::default();
        let stiff = TailPolicy::of_kind(TailPolicyKind::ConstantStiff);
        assert_eq!(tail_command(0.37, &stiff, &s), 90.0);
        let per = TailPolicy::of_kind(TailPolicyKind::Periodic);
        assert_eq!(tail_command(0.0, &per, &s), 90.0);
        assert_eq!(tail_command(0.5, &per, &s), 0.0);
        assert_eq!(tail_command(0.75, &per, &s), 90.0);
        assert_eq!(tail_command(0.25, &per, &s), 0.0);
        assert_eq!(tail_command(0.2499, &per, &s), 90.0);
    }

    #[test]
    fn touch_policy_relaxes_after_hold() {
        let pol = TailPolicy::of_kind(TailPolicyKind::TouchTriggered);
        let mut tr = TouchTracker::default();
        let mut last = 0.0;
        for _ in 0..99 {
            last = tail_command(0.1, &pol, &tr.update(0.0, pol.touch_threshold, 1e-3));
        }
        assert_eq!(last, 90.0);
        for _ in 0..2 {
            last = tail_command(0.1, &pol, &tr.update(0.0, pol.touch_threshold, 1e-3));
        }
        assert_eq!(last, 0.0);
        assert_eq!(tail_command(0.1, &pol, &tr.update(1.0, pol.touch_threshold, 1e-3)), 90.0);
    }

    #[test]
    fn composition_and_periodicity() {
        let g = GaitParams::default();
        let pol = TailPolicy::of_kind(TailPolicyKind::Periodic);
        let s = Sensors::default();
        let mut expect = servo_targets(0.0, &g);
        expect.reel_target = tail_command(0.0, &pol, &s);
        assert_eq!(controller_step(0.0, &g, &pol, &s), expect);
        for k in 0..50 {
            let t = 0.037 * k as f64;
            let a = controller_step(t, &g, &pol, &s);
            let b = controller_step(t + g.period, &g, &pol, &s);
            assert!(close(&a, &b, 1e-9));
        }
        let relaxed = TailPolicy::of_kind(TailPolicyKind::Relaxed);
        assert!((0..100).all(|k| controller_step(k as f64 * 0.02, &g, &relaxed, &s).reel_target == 0.0));
    }

    #[test]
    fn validation() {
        assert!(GaitParams::default().validate().is_ok());
        let bad = GaitParams {
            period: 0.0,
            ..GaitParams::default()
        };
        assert!(bad.validate().is_err());
        let wide = GaitParams {
            vert_amplitude: 20.0,
            ..GaitParams::default()
        };
        assert!(wide.validate().is_err());
        let pol = TailPolicy {
            stiff_angle: 40.0,
            ..TailPolicy::default()
        };
        assert!(pol.validate().is_err());
    }
}
