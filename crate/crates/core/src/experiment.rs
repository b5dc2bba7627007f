//! Trial runner: initial placement, settling, the control loop, termination
//! rules and per-trial metrics.

use alloc::string::String;
use core::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::controller::{controller_step, ControllerError, GaitParams, Sensors, TailPolicy, TouchTracker};
use crate::dynamics::{world_frames, Actuation, DynamicsError, Stepper, WorldState, MAX_DT};
use crate::math::{Pose, UnitQuat, Vec3};
use crate::metrics::{
    log_metrics, FailureReason, LogRecord, StairCounter, TrajectoryLog, TrialResult,
};
use crate::rng::{splitmix64, trial_seed};
use crate::robot::kinematics::{center_of_mass, sphere_center};
use crate::robot::{build_robot, deg, ArticulatedRobot, ModelError, Morphology, ReelState, TailKind};
use crate::terrain::{StairDirection, Terrain, TerrainError, TerrainKind};

#[derive(Clone, Debug, PartialEq)]
pub enum ConfigError {
    Invalid(String),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Invalid(why) => write!(f, "invalid experiment config: {why}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for ConfigError {}

fn invalid(why: impl fmt::Display) -> ConfigError {
    ConfigError::Invalid(alloc::format!("{why}"))
}

impl From<ModelError> for ConfigError {
    fn from(e: ModelError) -> Self {
        invalid(e)
    }
}

impl From<TerrainError> for ConfigError {
    fn from(e: TerrainError) -> Self {
        invalid(e)
    }
}

impl From<ControllerError> for ConfigError {
    fn from(e: ControllerError) -> Self {
        invalid(e)
    }
}

/// Initial-pose perturbation, uniform in `[-x, x]`.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct Jitter {
    pub position: f64,
    pub angle_deg: f64,
}

impl Default for Jitter {
    fn default() -> Self {
        Jitter {
            position: 0.002,
            angle_deg: 0.5,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct StuckRule {
    /// Minimum horizontal CoM travel over the window, m.
    pub min_displacement: f64,
    pub window_cycles: u32,
    pub warmup_cycles: u32,
}

impl Default for StuckRule {
    fn default() -> Self {
        StuckRule {
            min_displacement: 0.02,
            window_cycles: 3,
            warmup_cycles: 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub terrain: Terrain,
    pub tail: TailKind,
    pub policy: TailPolicy,
    pub gait: GaitParams,
    pub morphology: Morphology,
    pub trial_count: u32,
    pub seed: u64,
    pub max_sim_time: f64,
    pub dt: f64,
    /// Unlogged settling before the gait clock starts, s.
    pub settle_time: f64,
    pub jitter: Jitter,
    pub stuck: StuckRule,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            terrain: Terrain::flat(),
            tail: TailKind::none(),
            policy: TailPolicy::default(),
            gait: GaitParams::default(),
            morphology: Morphology::default(),
            trial_count: 5,
            seed: 1,
            max_sim_time: 40.0,
            dt: 1e-3,
            settle_time: 0.5,
            jitter: Jitter::default(),
            stuck: StuckRule::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.trial_count < 1 {
            return Err(invalid("trial_count must be at least 1"));
        }
        if !(self.dt > 0.0 && self.dt <= MAX_DT) {
            return Err(invalid(alloc::format!("dt must lie in (0, {MAX_DT}]")));
        }
        self.gait.validate()?;
        self.policy.validate()?;
        if !(self.max_sim_time > 10.0 * self.gait.period) || !self.max_sim_time.is_finite() {
            return Err(invalid("max_sim_time must exceed ten gait periods"));
        }
        if !(self.settle_time >= 0.0 && self.settle_time.is_finite()) {
            return Err(invalid("settle_time must be non-negative"));
        }
        if !(self.jitter.position >= 0.0 && self.jitter.angle_deg >= 0.0) {
            return Err(invalid("jitter must be non-negative"));
        }
        if self.stuck.window_cycles < 1 || !(self.stuck.min_displacement >= 0.0) {
            return Err(invalid("stuck rule needs a positive window"));
        }
        self.terrain.validate()?;
        self.morphology.validate()?;
        self.tail.validate()?;
        Ok(())
    }
}

/// Nominal travel direction on a terrain.
pub fn nominal_heading(terrain: &Terrain) -> f64 {
    match terrain.kind {
        TerrainKind::Stairs {
            direction: StairDirection::Down,
            ..
        } => core::f64::consts::PI,
        _ => 0.0,
    }
}

/// Terrain actually used by a trial: the heightfield is re-seeded per trial.
pub fn trial_terrain(config: &ExperimentConfig, trial_index: u64) -> Terrain {
    let mut t = config.terrain.clone();
    if let TerrainKind::Heightfield { ref mut seed, .. } = t.kind {
        *seed = splitmix64(*seed ^ trial_seed(config.seed, trial_index));
    }
    t
}

/// Position of the front hip axis at the start of a trial.
fn start_point(terrain: &Terrain, robot: &ArticulatedRobot) -> (Vec3, f64) {
    let spacing = robot.morphology.hip_spacing();
    match terrain.kind {
        TerrainKind::Incline { angle_deg, .. } => {
            let c = libm::cos(deg(angle_deg));
            (Vec3::new(spacing * c + 0.03, 0.0, 0.0), -deg(angle_deg))
        }
        TerrainKind::Stairs { direction, run, steps, .. } => match direction {
            StairDirection::Up => (Vec3::new(-0.03, 0.0, 0.0), 0.0),
            StairDirection::Down => (Vec3::new((steps - 1) as f64 * run + 0.03, 0.0, 0.0), 0.0),
        },
        _ => (Vec3::ZERO, 0.0),
    }
}

/// Lowest base height at which no contact sphere penetrates the terrain.
fn rest_on_terrain(robot: &ArticulatedRobot, terrain: &Terrain, mut base: Pose, angles: &[f64]) -> Pose {
    base.position.z = 0.0;
    let frames = robot.frames(&base, angles);
    let mut lift = f64::NEG_INFINITY;
    for (s, sp) in robot.spheres.iter().enumerate() {
        let c = sphere_center(robot, &frames, s);
        let h = terrain.height_at(c.x, c.y);
        if h.is_finite() {
            lift = lift.max(h + sp.radius - c.z);
        }
    }
    base.position.z = if lift.is_finite() { lift } else { robot.axis_height };
    base
}

/// Initial world state with jitter drawn from the trial's generator.
pub fn initial_world(
    robot: &ArticulatedRobot,
    terrain: &Terrain,
    config: &ExperimentConfig,
    rng: &mut ChaCha8Rng,
) -> WorldState {
    let first = controller_step(0.0, &config.gait, &config.policy, &Sensors::default());
    let reel = ReelState::new(first.reel_target);
    let mut angles = robot.neutral_angles(reel);
    let s = &robot.servos;
    angles[s.front_horiz] = first.front_horiz;
    angles[s.front_vert] = first.front_vert;
    angles[s.rear_horiz] = first.rear_horiz;
    angles[s.rear_vert] = first.rear_vert;
    angles[s.body_yaw] = first.body_yaw;

    let (origin, pitch) = start_point(terrain, robot);
    let j = config.jitter;
    let mut draw = |half: f64| if half > 0.0 { rng.random_range(-half..=half) } else { 0.0 };
    let dx = draw(j.position);
    let dy = draw(j.position);
    let dyaw = deg(draw(j.angle_deg));
    let yaw = nominal_heading(terrain) + dyaw;
    let orientation = UnitQuat::from_euler_zyx(yaw, pitch, 0.0);
    let base = Pose::new(origin + Vec3::new(dx, dy, 0.0), orientation);
    let base = rest_on_terrain(robot, terrain, base, &angles);
    WorldState::new(robot, base, &angles, reel)
}

/// Yaw, pitch and roll of the mid-body frame, halfway through the body joint.
pub fn body_attitude(world: &WorldState, robot: &ArticulatedRobot) -> (f64, f64, f64) {
    let half = 0.5 * world.joints[robot.servos.body_yaw].angle;
    let axis = robot.joints[robot.servos.body_yaw].axis;
    (world.base.orientation * UnitQuat::from_axis_angle(axis, half)).to_euler_zyx()
}

/// Outcome of a trial plus the full trajectory.
pub struct TrialOutput {
    pub result: TrialResult,
    pub log: TrajectoryLog,
}

/// Runs one trial. Deterministic in `(config, trial_index)`.
pub fn run_trial(config: &ExperimentConfig, trial_index: u64) -> Result<TrialOutput, ConfigError> {
    config.validate()?;
    let robot = build_robot(&config.morphology, &config.tail)?;
    let terrain = trial_terrain(config, trial_index);
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(config.seed, trial_index));
    let mut world = initial_world(&robot, &terrain, config, &mut rng);
    let mut stepper = Stepper::new();
    let dt = config.dt;
    let period = config.gait.period;
    let radius = robot.morphology.contact_radius;
    let mut log = TrajectoryLog::new(period, nominal_heading(&terrain), radius);
    let mut cone_violations = 0u64;
    let mut failure = FailureReason::None;
    let mut reached_goal = false;

    let hold = controller_step(0.0, &config.gait, &config.policy, &Sensors::default());
    let settle_steps = libm::round(config.settle_time / dt) as u64;
    for _ in 0..settle_steps {
        match stepper.step(&mut world, &robot, Actuation::Commanded(&hold), &terrain, dt) {
            Ok(r) => cone_violations += r.cone_violations as u64,
            Err(_) => {
                failure = FailureReason::NumericalDivergence;
                break;
            }
        }
    }

    let mut stairs = StairCounter::new(&terrain, radius).ok();
    let goal_terrain = matches!(terrain.kind, TerrainKind::Incline { .. } | TerrainKind::Stairs { .. });
    let runway_end = terrain.runway_end_x();
    let steps = libm::round(config.max_sim_time / dt) as u64;
    let cycle_steps = libm::round(period / dt) as u64;
    let mut cycle_marks: alloc::vec::Vec<Vec3> = alloc::vec::Vec::new();
    let mut touch = TouchTracker::default();
    let mut sensors = Sensors::default();
    let mut frames = world_frames(&world, &robot);
    if failure == FailureReason::None {
        cycle_marks.push(center_of_mass(&robot, &frames));
    }
    let mut t = 0.0;
    let mut k = 0u64;
    while failure == FailureReason::None && !reached_goal && k < steps {
        let cmd = controller_step(t, &config.gait, &config.policy, &sensors);
        let report = match stepper.step(&mut world, &robot, Actuation::Commanded(&cmd), &terrain, dt) {
            Ok(r) => r,
            Err(DynamicsError::NumericalDivergence { .. }) => {
                failure = FailureReason::NumericalDivergence;
                break;
            }
            Err(e) => return Err(invalid(e)),
        };
        cone_violations += report.cone_violations as u64;
        k += 1;
        t = k as f64 * dt;
        let tip_force = robot.tail_tip.map(|s| report.sphere_force(s)).unwrap_or(0.0);
        sensors = touch.update(tip_force, config.policy.touch_threshold, dt);

        frames.clear();
        crate::robot::kinematics::forward_kinematics(&robot, &world.base, &world.angles(), &mut frames);
        let com = center_of_mass(&robot, &frames);
        let (yaw, pitch, roll) = body_attitude(&world, &robot);
        let mut feet = [Vec3::ZERO; 4];
        let mut contact = [false; 4];
        for (i, &s) in robot.feet.iter().enumerate() {
            feet[i] = sphere_center(&robot, &frames, s);
            contact[i] = report.sphere_in_contact(s);
        }
        let (tail_tip, tail_contact) = match robot.tail_tip {
            Some(s) => (sphere_center(&robot, &frames, s), report.sphere_in_contact(s)),
            None => (Vec3::new(f64::NAN, f64::NAN, f64::NAN), false),
        };
        let record = LogRecord {
            time: t,
            com,
            yaw,
            pitch,
            roll,
            foot_contact: contact,
            tail_tip,
            tail_contact,
            reel_deg: world.reel.angle(),
            phase: crate::controller::gait_phase(t, period),
            feet,
        };
        log.records.push(record);

        if terrain.is_off_runway(com) {
            failure = FailureReason::OffRunway;
            break;
        }
        if let Some(counter) = stairs.as_mut() {
            counter.observe(&record);
            if counter.completed() >= counter.total() {
                reached_goal = true;
            }
        }
        if let Some(end) = runway_end {
            if com.x >= end {
                reached_goal = true;
            }
        }
        if cycle_steps > 0 && k % cycle_steps == 0 {
            cycle_marks.push(com);
            let c = cycle_marks.len() - 1;
            let rule = config.stuck;
            let w = rule.window_cycles as usize;
            if c >= rule.warmup_cycles as usize + w {
                let d = com - cycle_marks[c - w];
                if libm::hypot(d.x, d.y) < rule.min_displacement {
                    failure = FailureReason::Stuck;
                }
            }
        }
    }
    if failure == FailureReason::None && !reached_goal && goal_terrain {
        failure = FailureReason::Timeout;
    }

    let m = log_metrics(&log, &terrain, robot.morphology.body_length);
    let result = TrialResult {
        trial_index,
        bl_per_cycle: m.bl_per_cycle,
        deg_per_cycle: m.deg_per_cycle,
        stairs_up_per_cycle: m.stairs_up_per_cycle,
        stairs_down_per_cycle: m.stairs_down_per_cycle,
        steps_completed: m.steps_completed,
        success: failure == FailureReason::None,
        failure_reason: failure,
        sim_time: t,
        cone_violations,
    };
    Ok(TrialOutput { result, log })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_dt_rejected_before_stepping() {
        let cfg = ExperimentConfig {
            dt: 0.0,
            ..ExperimentConfig::default()
        };
        assert!(matches!(run_trial(&cfg, 0), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn short_max_time_rejected() {
        let cfg = ExperimentConfig {
            max_sim_time: 15.0,
            ..ExperimentConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn initial_pose_rests_on_terrain() {
        for terrain in [
            Terrain::flat(),
            Terrain::incline(20.0),
            Terrain::stairs(StairDirection::Up),
            Terrain::stairs(StairDirection::Down),
            Terrain::pebbles(3),
        ] {
            for tail in [TailKind::none(), TailKind::flexible()] {
                let cfg = ExperimentConfig {
                    terrain: terrain.clone(),
                    tail: tail.clone(),
                    ..ExperimentConfig::default()
                };
                let robot = build_robot(&cfg.morphology, &cfg.tail).unwrap();
                let mut rng = ChaCha8Rng::seed_from_u64(9);
                let w = initial_world(&robot, &terrain, &cfg, &mut rng);
                let frames = world_frames(&w, &robot);
                let mut min_gap = f64::INFINITY;
                for (s, sp) in robot.spheres.iter().enumerate() {
                    let c = sphere_center(&robot, &frames, s);
                    let h = terrain.height_at(c.x, c.y);
                    if h.is_finite() {
                        min_gap = min_gap.min(c.z - sp.radius - h);
                    }
                }
                assert!(min_gap.abs() < 1e-9, "{:?}: gap {min_gap}", terrain.kind);
            }
        }
    }
}
