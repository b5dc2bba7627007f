use tailsim_core::controller::{controller_step, GaitParams, Sensors, TailPolicy, TailPolicyKind};
use tailsim_core::dynamics::{linear_momentum, mechanical_energy, world_frames, Actuation, Stepper, WorldState};
use tailsim_core::experiment::run_trial;
use tailsim_core::math::{UnitQuat, Vec3};
use tailsim_core::robot::kinematics::{center_of_mass, sphere_center};
use tailsim_core::robot::{build_robot, ArticulatedRobot, Morphology, ReelState, TailKind, GRAVITY};
use tailsim_core::terrain::Terrain;
use tailsim_core::{ExperimentConfig, ServoCommandSet};

const DT: f64 = 1e-3;

fn robot(tail: TailKind) -> ArticulatedRobot {
    build_robot(&Morphology::default(), &tail).unwrap()
}

fn aloft(r: &ArticulatedRobot, height: f64) -> WorldState {
    let reel = ReelState::new(90.0);
    let mut base = r.neutral_base_pose();
    base.position.z += height;
    base.orientation = UnitQuat::from_euler_zyx(0.3, 0.1, -0.2);
    let mut w = WorldState::new(r, base, &r.neutral_angles(reel), reel);
    w.base_velocity = Vec3::new(0.4, -0.2, 1.5);
    w.base_angular_velocity = Vec3::new(0.5, -1.0, 2.0);
    w
}

fn on_ground(r: &ArticulatedRobot) -> WorldState {
    let reel = ReelState::new(90.0);
    WorldState::new(r, r.neutral_base_pose(), &r.neutral_angles(reel), reel)
}

/// Total penetration and deepest single penetration over all spheres.
fn penetration(w: &WorldState, r: &ArticulatedRobot, terrain: &Terrain) -> (f64, f64) {
    let frames = world_frames(w, r);
    let mut hits = Vec::new();
    let (mut sum, mut max) = (0.0, 0.0f64);
    for (i, s) in r.spheres.iter().enumerate() {
        hits.clear();
        terrain.sphere_hits(sphere_center(r, &frames, i), s.radius, 0.0, &mut hits);
        for h in hits.iter().filter(|h| h.depth > 0.0) {
            sum += h.depth;
            max = max.max(h.depth);
        }
    }
    (sum, max)
}

fn com(w: &WorldState, r: &ArticulatedRobot) -> Vec3 {
    center_of_mass(r, &world_frames(w, r))
}

#[test]
fn free_flight_momentum_matches_impulse_of_gravity() {
    for tail in [TailKind::none(), TailKind::rigid(), TailKind::flexible()] {
        let r = robot(tail);
        let mut w = aloft(&r, 5.0);
        let p0 = linear_momentum(&w, &r);
        let mut st = Stepper::new();
        let steps = 1000;
        for _ in 0..steps {
            let rep = st.step(&mut w, &r, Actuation::Limp, &Terrain::flat(), DT).unwrap();
            assert!(rep.contacts.is_empty());
        }
        let impulse = w.gravity * (r.total_mass() * steps as f64 * DT);
        let err = (linear_momentum(&w, &r) - p0 - impulse).norm();
        assert!(err < 1e-6 * impulse.norm(), "{:?}: momentum error {err:e}", r.tail.variant);
    }
}

#[test]
fn free_flight_com_is_ballistic() {
    let r = robot(TailKind::flexible());
    let mut w = aloft(&r, 5.0);
    let c0 = com(&w, &r);
    let v0 = linear_momentum(&w, &r) / r.total_mass();
    let mut st = Stepper::new();
    let t = 0.5;
    for _ in 0..(t / DT).round() as usize {
        st.step(&mut w, &r, Actuation::Limp, &Terrain::flat(), DT).unwrap();
    }
    let expected = v0 * t + w.gravity * (0.5 * t * t);
    let moved = com(&w, &r) - c0;
    assert!((moved - expected).norm() < 0.005 * expected.norm(), "moved {moved:?} expected {expected:?}");
}

#[test]
fn passive_energy_never_increases() {
    for tail in [TailKind::none(), TailKind::rigid(), TailKind::flexible()] {
        let r = robot(tail);
        let terrain = Terrain::flat();
        let mut w = on_ground(&r);
        w.base.position.z += 0.005;
        let mut st = Stepper::new();
        let mut e = mechanical_energy(&w, &r, &terrain).total();
        for k in 0..2000 {
            st.step(&mut w, &r, Actuation::Limp, &terrain, DT).unwrap();
            let next = mechanical_energy(&w, &r, &terrain).total();
            assert!(next <= e + 1e-9, "{:?} step {k}: energy rose by {:e} J", r.tail.variant, next - e);
            e = next;
        }
    }
}

fn settle(r: &ArticulatedRobot, terrain: &Terrain, seconds: f64) -> WorldState {
    let mut w = on_ground(r);
    let mut st = Stepper::new();
    let hold = ServoCommandSet::neutral(90.0);
    for _ in 0..(seconds / DT).round() as usize {
        st.step(&mut w, r, Actuation::Commanded(&hold), terrain, DT).unwrap();
    }
    w
}

#[test]
fn resting_robot_carries_its_weight_in_contact_springs() {
    let terrain = Terrain::flat();
    let k = terrain.material.stiffness;
    for tail in [TailKind::none(), TailKind::rigid(), TailKind::flexible()] {
        let r = robot(tail);
        let w = settle(&r, &terrain, 5.0);
        let weight = r.total_mass() * GRAVITY;
        let (sum, max) = penetration(&w, &r, &terrain);
        // Summed over contacts, the penetrations balance the weight.
        assert!((sum - weight / k).abs() < 0.05 * weight / k, "{:?}: {sum:e} vs {:e}", r.tail.variant, weight / k);
        assert!(max <= 2.0 * weight / k, "{:?}: deepest {max:e}", r.tail.variant);
        let h = com(&w, &r).z;
        assert!((h - 0.05).abs() <= 0.2 * 0.05, "{:?}: rest CoM height {h}", r.tail.variant);
    }
}

#[test]
fn trials_are_bit_identical() {
    let cfg = ExperimentConfig {
        tail: TailKind::flexible(),
        policy: TailPolicy::of_kind(TailPolicyKind::Periodic),
        max_sim_time: 21.0,
        ..Default::default()
    };
    let a = run_trial(&cfg, 3).unwrap();
    let b = run_trial(&cfg, 3).unwrap();
    assert_eq!(a.log, b.log);
    assert_eq!(a.result, b.result);
    let other = run_trial(&cfg, 4).unwrap();
    assert_ne!(a.log, other.log);
}

#[test]
fn fresh_stepper_reproduces_state_exactly() {
    let r = robot(TailKind::flexible());
    let mut a = on_ground(&r);
    let mut b = a.clone();
    let gait = GaitParams::default();
    let policy = TailPolicy::default();
    let mut sa = Stepper::new();
    for k in 0..300 {
        let cmd = controller_step(k as f64 * DT, &gait, &policy, &Sensors::default());
        sa.step(&mut a, &r, Actuation::Commanded(&cmd), &Terrain::flat(), DT).unwrap();
        Stepper::new().step(&mut b, &r, Actuation::Commanded(&cmd), &Terrain::flat(), DT).unwrap();
    }
    assert_eq!(a, b);
}

#[test]
fn stance_keeps_orientation_normalized() {
    let r = robot(TailKind::rigid());
    let mut w = on_ground(&r);
    let gait = GaitParams::default();
    let policy = TailPolicy::default();
    let mut st = Stepper::new();
    for k in 0..2000 {
        let cmd = controller_step(k as f64 * DT, &gait, &policy, &Sensors::default());
        st.step(&mut w, &r, Actuation::Commanded(&cmd), &Terrain::flat(), DT).unwrap();
        assert!((w.base.orientation.norm() - 1.0).abs() < 1e-9);
    }
}
