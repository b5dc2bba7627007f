//! Acceptance gate. Criteria 1 to 8 and 10 share one run of the full tail by
//! terrain sweep in `configs/paper_sweep.toml`; the rest are property checks.
//! Every criterion prints one PASS or FAIL line before asserting.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tailsim::config::Config;
use tailsim::runner::{run_condition, sweep_cells};
use tailsim_core::controller::{
    controller_step, gait_phase, servo_targets, tail_command, GaitParams, Sensors, TailPolicy, TailPolicyKind,
};
use tailsim_core::dynamics::joint::{spring_torque, JointKind, JointState};
use tailsim_core::dynamics::{linear_momentum, mechanical_energy, world_frames, Actuation, Stepper, WorldState};
use tailsim_core::experiment::run_trial;
use tailsim_core::math::{UnitQuat, Vec3};
use tailsim_core::metrics::{FailureReason, TrialResult};
use tailsim_core::robot::kinematics::sphere_center;
use tailsim_core::robot::{build_robot, ArticulatedRobot, Morphology, ReelState, TailKind, GRAVITY};
use tailsim_core::terrain::{StairDirection, Terrain};
use tailsim_core::ServoCommandSet;

const TRIALS: usize = 5;
const WALL_BUDGET_S: f64 = 60.0;
const DT: f64 = 1e-3;

struct SweepRun {
    cells: BTreeMap<String, Vec<TrialResult>>,
    slowest_trial_s: f64,
}

fn workspace() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn sweep() -> &'static SweepRun {
    static RUN: OnceLock<SweepRun> = OnceLock::new();
    RUN.get_or_init(|| {
        let cfg = Config::load(&workspace().join("configs/paper_sweep.toml"), &[]).unwrap();
        let mut cells = BTreeMap::new();
        let mut slowest = 0.0f64;
        for cell in sweep_cells(&cfg).unwrap() {
            let exp = cell.experiment().unwrap();
            assert_eq!(exp.trial_count as usize, TRIALS);
            let mut results = Vec::new();
            for i in 0..exp.trial_count as u64 {
                let t0 = Instant::now();
                results.push(run_trial(&exp, i).unwrap().result);
                slowest = slowest.max(t0.elapsed().as_secs_f64());
            }
            cells.insert(cell.label(), results);
        }
        SweepRun {
            cells,
            slowest_trial_s: slowest,
        }
    })
}

fn cell(label: &str) -> &'static [TrialResult] {
    sweep().cells.get(label).unwrap_or_else(|| panic!("sweep has no cell {label}"))
}

fn mean(label: &str, f: impl Fn(&TrialResult) -> Option<f64>) -> f64 {
    let v: Vec<f64> = cell(label).iter().filter_map(f).collect();
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

fn bl(label: &str) -> f64 {
    mean(label, |r| r.bl_per_cycle)
}

fn deg(label: &str) -> f64 {
    mean(label, |r| r.deg_per_cycle)
}

fn count(label: &str, f: impl Fn(&TrialResult) -> bool) -> usize {
    cell(label).iter().filter(|r| f(r)).count()
}

fn steps(label: &str) -> Vec<u32> {
    cell(label).iter().map(|r| r.steps_completed).collect()
}

fn failures(label: &str) -> String {
    cell(label).iter().map(|r| r.failure_reason.as_str()).collect::<Vec<_>>().join(",")
}

fn verdict(id: u32, name: &str, ok: bool, detail: String) {
    println!("criterion {id:>2} {} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "criterion {id} ({name}) failed: {detail}");
}

/// Incline failure: not at the runway end, or too slow to count.
fn incline_failed(r: &TrialResult) -> bool {
    !r.success || r.bl_per_cycle.is_none_or(|b| b < 0.1)
}

#[test]
fn c00_trial_wall_clock() {
    let s = sweep().slowest_trial_s;
    verdict(0, "trial wall-clock budget", s < WALL_BUDGET_S, format!("slowest trial {s:.1} s < {WALL_BUDGET_S} s"));
}

#[test]
fn c01_flat_speed_ordering() {
    let (none, rigid, stiff) = (bl("none/flat"), bl("rigid/flat"), bl("stiff/flat"));
    let ok = rigid >= 1.15 * none && (stiff - rigid).abs() <= 0.15 * rigid;
    verdict(
        1,
        "flat speed ordering",
        ok,
        format!("BL/cycle none {none:.3}, rigid {rigid:.3} (needs >= {:.3}), stiff {stiff:.3} (needs within 15% of rigid)", 1.15 * none),
    );
}

#[test]
fn c02_flat_heading_ordering() {
    let (stiff, none, rigid) = (deg("stiff/flat"), deg("none/flat"), deg("rigid/flat"));
    verdict(
        2,
        "flat heading stability ordering",
        stiff < none && none < rigid,
        format!("deg/cycle stiff {stiff:.3} < none {none:.3} < rigid {rigid:.3}"),
    );
}

#[test]
fn c03_flat_policy_ordering() {
    let (stiff, relaxed, periodic) = (deg("stiff/flat"), deg("relaxed/flat"), deg("periodic/flat"));
    verdict(
        3,
        "flat tail policy ordering",
        stiff < relaxed && relaxed < periodic,
        format!("deg/cycle stiff {stiff:.3} < relaxed {relaxed:.3} < periodic {periodic:.3}"),
    );
}

#[test]
fn c04_incline_success_matrix() {
    let none10 = count("none/incline-10", incline_failed);
    let stiff: Vec<usize> = [10, 15, 20].iter().map(|a| count(&format!("stiff/incline-{a}"), |r| r.success)).collect();
    let stiff25 = count("stiff/incline-25", |r| !r.success && r.bl_per_cycle.is_none_or(|b| b.abs() < 0.05));
    let rigid: Vec<usize> = [10, 15].iter().map(|a| count(&format!("rigid/incline-{a}"), |r| r.success)).collect();
    let rigid20 = count("rigid/incline-20", |r| !r.success);
    let ok = none10 >= 4 && stiff.iter().all(|&k| k >= 4) && stiff25 >= 4 && rigid.iter().all(|&k| k >= 4) && rigid20 >= 4;
    verdict(
        4,
        "incline success matrix",
        ok,
        format!(
            "none fails 10deg {none10}/5; stiff succeeds 10/15/20deg {stiff:?}/5; stiff fails 25deg with |BL| < 0.05 {stiff25}/5 \
             (BL {:.3}, {}); rigid succeeds 10/15deg {rigid:?}/5, fails 20deg {rigid20}/5",
            bl("stiff/incline-25"),
            failures("stiff/incline-25"),
        ),
    );
}

#[test]
fn c05_incline_monotonicity() {
    let m: Vec<f64> = [10, 15, 20].iter().map(|a| bl(&format!("stiff/incline-{a}"))).collect();
    verdict(
        5,
        "incline speed monotonicity",
        m[0] > m[1] && m[1] > m[2],
        format!("stiff BL/cycle 10deg {:.3} > 15deg {:.3} > 20deg {:.3}", m[0], m[1], m[2]),
    );
}

#[test]
fn c06_stairs_up() {
    let (none, rigid, periodic) = (steps("none/stairs-up"), steps("rigid/stairs-up"), steps("periodic/stairs-up"));
    let ok = none.iter().all(|&k| k == 0)
        && rigid.iter().filter(|&&k| k >= 1).count() >= 3
        && rigid.iter().filter(|&&k| k < 6).count() >= 4
        && periodic.iter().filter(|&&k| k == 6).count() >= 4;
    verdict(
        6,
        "stairs up",
        ok,
        format!(
            "steps none {none:?}, rigid {rigid:?}, periodic {periodic:?} ({})",
            failures("periodic/stairs-up")
        ),
    );
}

#[test]
fn c07_stairs_down() {
    let (relaxed, rigid, none) = (steps("relaxed/stairs-down"), steps("rigid/stairs-down"), steps("none/stairs-down"));
    let total = |v: &[u32]| v.iter().sum::<u32>();
    let ok = total(&relaxed) > total(&rigid)
        && total(&rigid) > total(&none)
        && relaxed.iter().filter(|&&k| k == 6).count() >= 4;
    verdict(
        7,
        "stairs down completion ordering",
        ok,
        format!(
            "total steps relaxed {} {relaxed:?} ({}) > rigid {} > none {}",
            total(&relaxed),
            failures("relaxed/stairs-down"),
            total(&rigid),
            total(&none)
        ),
    );
}

#[test]
fn c08_pebbles() {
    let periodic = bl("periodic/pebbles");
    let none = count("none/pebbles", |r| {
        r.failure_reason == FailureReason::Stuck || r.bl_per_cycle.is_none_or(|b| b < 0.05)
    });
    verdict(
        8,
        "heightfield proxy",
        periodic >= 0.1 && none >= 3,
        format!("periodic BL/cycle {periodic:.3} >= 0.1; none slow or stuck {none}/5"),
    );
}

fn aloft(r: &ArticulatedRobot) -> WorldState {
    let reel = ReelState::new(90.0);
    let mut base = r.neutral_base_pose();
    base.position.z += 5.0;
    base.orientation = UnitQuat::from_euler_zyx(0.3, 0.1, -0.2);
    let mut w = WorldState::new(r, base, &r.neutral_angles(reel), reel);
    w.base_velocity = Vec3::new(0.4, -0.2, 1.5);
    w.base_angular_velocity = Vec3::new(0.5, -1.0, 2.0);
    w
}

fn resting(r: &ArticulatedRobot) -> WorldState {
    let reel = ReelState::new(90.0);
    WorldState::new(r, r.neutral_base_pose(), &r.neutral_angles(reel), reel)
}

fn variants() -> [TailKind; 3] {
    [TailKind::none(), TailKind::rigid(), TailKind::flexible()]
}

#[test]
fn c09_free_flight_momentum() {
    let mut worst = 0.0f64;
    for tail in variants() {
        let r = build_robot(&Morphology::default(), &tail).unwrap();
        let mut w = aloft(&r);
        let p0 = linear_momentum(&w, &r);
        let mut st = Stepper::new();
        for _ in 0..1000 {
            let rep = st.step(&mut w, &r, Actuation::Limp, &Terrain::flat(), DT).unwrap();
            assert!(rep.contacts.is_empty());
        }
        let predicted = w.gravity * (r.total_mass() * 1000.0 * DT);
        worst = worst.max((linear_momentum(&w, &r) - p0 - predicted).norm() / predicted.norm());
    }
    verdict(9, "free-flight momentum", worst < 1e-6, format!("worst relative error {worst:.2e} < 1e-6 over 1000 steps"));
}

#[test]
fn c10_friction_cone() {
    let run = sweep();
    let violations: u64 = run.cells.values().flatten().map(|r| r.cone_violations).sum();
    let trials: usize = run.cells.values().map(Vec::len).sum();
    verdict(
        10,
        "friction cone",
        violations == 0,
        format!("{violations} violations over {trials} trials in {} conditions", run.cells.len()),
    );
}

#[test]
fn c11_passive_energy_decay() {
    let terrain = Terrain::flat();
    let mut worst = f64::NEG_INFINITY;
    for tail in variants() {
        let r = build_robot(&Morphology::default(), &tail).unwrap();
        let mut w = resting(&r);
        w.base.position.z += 0.005;
        let mut st = Stepper::new();
        let mut e = mechanical_energy(&w, &r, &terrain).total();
        for _ in 0..3000 {
            st.step(&mut w, &r, Actuation::Limp, &terrain, DT).unwrap();
            let next = mechanical_energy(&w, &r, &terrain).total();
            worst = worst.max(next - e);
            e = next;
        }
    }
    verdict(11, "passive energy decay", worst <= 1e-9, format!("largest per-step rise {worst:.2e} J <= 1e-9 J"));
}

fn tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn c12_determinism() {
    let cfg = Config::parse(
        "trial_count = 2\nmax_sim_time = 21.0\n[tail]\nvariant = \"flexible\"\n[policy]\nkind = \"periodic\"\n",
        "inline",
        &[],
    )
    .unwrap();
    let tmp = tempfile::TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    run_condition(&cfg, &a).unwrap();
    run_condition(&cfg, &b).unwrap();
    let (ta, tb) = (tree(&a), tree(&b));
    let identical = ta == tb;
    verdict(12, "determinism", identical, format!("{} files compared byte for byte", ta.len()));
}

fn stairs_oracle(x: f64) -> f64 {
    if x < 0.0 {
        0.0
    } else {
        0.025 * ((x / 0.25).floor() + 1.0).min(6.0)
    }
}

#[test]
fn c13_oracles() {
    // Static penetration: at rest the contact springs carry the weight.
    let terrain = Terrain::flat();
    let k = terrain.material.stiffness;
    let mut worst_pen = 0.0f64;
    for tail in variants() {
        let r = build_robot(&Morphology::default(), &tail).unwrap();
        let mut w = resting(&r);
        let mut st = Stepper::new();
        let hold = ServoCommandSet::neutral(90.0);
        for _ in 0..5000 {
            st.step(&mut w, &r, Actuation::Commanded(&hold), &terrain, DT).unwrap();
        }
        let frames = world_frames(&w, &r);
        let mut hits = Vec::new();
        let mut depth = 0.0;
        for (i, s) in r.spheres.iter().enumerate() {
            hits.clear();
            terrain.sphere_hits(sphere_center(&r, &frames, i), s.radius, 0.0, &mut hits);
            depth += hits.iter().filter(|h| h.depth > 0.0).map(|h| h.depth).sum::<f64>();
        }
        let expected = r.total_mass() * GRAVITY / k;
        worst_pen = worst_pen.max((depth - expected).abs() / expected);
    }

    // Spring torque slope on every passive and cable joint.
    let mut worst_slope = 0.0f64;
    for tail in variants() {
        let r = build_robot(&Morphology::default(), &tail).unwrap();
        for spec in r.joints.iter().filter(|j| j.kind != JointKind::Servo && j.stiffness > 0.0) {
            for a in [-0.6, -0.1, 0.0, 0.25, 0.7] {
                let h = 1e-6;
                let t = |x: f64| spring_torque(JointState::new(x, 0.2), spec);
                let fd = (t(a + h) - t(a - h)) / (2.0 * h);
                worst_slope = worst_slope.max((fd + spec.stiffness).abs() / spec.stiffness);
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut mismatches = 0;
    for dir in [StairDirection::Up, StairDirection::Down] {
        let t = Terrain::stairs(dir);
        for _ in 0..100_000 {
            let x = rng.random_range(-0.5..2.0);
            if t.height_at(x, 0.0) != stairs_oracle(x) {
                mismatches += 1;
            }
        }
    }
    verdict(
        13,
        "oracle checks",
        worst_pen < 0.05 && worst_slope < 1e-6 && mismatches == 0,
        format!(
            "penetration vs mg/k_c {:.2}% < 5%; spring slope error {worst_slope:.1e} < 1e-6; stairs mismatches {mismatches}/200000",
            100.0 * worst_pen
        ),
    );
}

#[test]
fn c14_controller_invariants() {
    let robot = build_robot(&Morphology::default(), &TailKind::flexible()).unwrap();
    let gaits = [GaitParams::default(), GaitParams { mirrored: true, ..GaitParams::default() }];
    let samples = 10_000;
    let mut out_of_range = 0;
    for gait in &gaits {
        for i in 0..samples {
            let phase = i as f64 / samples as f64;
            if !servo_targets(phase, gait).within_limits(&robot) {
                out_of_range += 1;
            }
        }
    }
    let policy = TailPolicy::of_kind(TailPolicyKind::Periodic);
    let gait = GaitParams::default();
    let mut transitions = Vec::new();
    let mut prev = tail_command(0.0, &policy, &Sensors::default());
    for i in 1..=samples {
        let t = i as f64 * gait.period / samples as f64;
        let c = controller_step(t, &gait, &policy, &Sensors::default()).reel_target;
        if c != prev {
            transitions.push(gait_phase(t, gait.period));
        }
        prev = c;
    }
    let at_configured = transitions.iter().all(|&p| {
        let d = |q: f64| ((p - q + 0.5).rem_euclid(1.0) - 0.5).abs();
        d(policy.stiffen_phase) < 1e-9 || d(policy.relax_phase) < 1e-9
    });
    let ok = out_of_range == 0 && transitions.len() == 2 && at_configured;
    verdict(
        14,
        "controller invariants",
        ok,
        format!("{out_of_range} out-of-range commands over {} phases; periodic transitions at {transitions:?}", 2 * samples),
    );
}
