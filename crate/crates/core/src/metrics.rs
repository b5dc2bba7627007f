//! Locomotion metrics computed from trajectory logs.
//!
//! All metrics use whole gait cycles after a one-cycle warmup and require at
//! least four cycles in the log.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::math::{wrap_angle, Vec3};
use crate::terrain::{stair_tread, StairDirection, Terrain, TerrainKind};

pub const MIN_CYCLES: usize = 4;
pub const WARMUP_CYCLES: usize = 1;
/// A foot rests on a tread when its sphere bottom is within this of the top.
pub const TREAD_TOLERANCE: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MetricsError {
    InsufficientCycles,
    WrongTerrain,
    EmptyResults,
}

impl fmt::Display for MetricsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricsError::InsufficientCycles => write!(f, "log spans fewer than {MIN_CYCLES} gait cycles"),
            MetricsError::WrongTerrain => write!(f, "stair metrics need stairs terrain"),
            MetricsError::EmptyResults => write!(f, "no trial results to summarize"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for MetricsError {}

/// Foot order: front-left, front-right, rear-left, rear-right.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogRecord {
    pub time: f64,
    pub com: Vec3,
    pub yaw: f64,
    pub pitch: f64,
    pub roll: f64,
    pub foot_contact: [bool; 4],
    pub tail_tip: Vec3,
    pub tail_contact: bool,
    pub reel_deg: f64,
    pub phase: f64,
    pub feet: [Vec3; 4],
}

/// Per-step trajectory. `time` starts at zero when the gait starts.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrajectoryLog {
    pub records: Vec<LogRecord>,
    pub period: f64,
    /// Nominal travel direction, radians from +x.
    pub heading: f64,
    pub foot_radius: f64,
}

impl TrajectoryLog {
    pub fn new(period: f64, heading: f64, foot_radius: f64) -> TrajectoryLog {
        TrajectoryLog {
            records: Vec::new(),
            period,
            heading,
            foot_radius,
        }
    }

    pub fn complete_cycles(&self) -> usize {
        match self.records.last() {
            Some(r) if self.period > 0.0 => libm::floor(r.time / self.period + 1e-9) as usize,
            _ => 0,
        }
    }

    /// First record at or after `t`.
    fn at(&self, t: f64) -> &LogRecord {
        let eps = 1e-9 * self.period;
        let i = self.records.partition_point(|r| r.time < t - eps);
        &self.records[i.min(self.records.len() - 1)]
    }

    fn window(&self) -> Result<usize, MetricsError> {
        let n = self.complete_cycles();
        if n < MIN_CYCLES {
            Err(MetricsError::InsufficientCycles)
        } else {
            Ok(n)
        }
    }
}

/// Net advance along the nominal heading per cycle, in body lengths.
pub fn bl_per_cycle(log: &TrajectoryLog, body_length: f64) -> Result<f64, MetricsError> {
    let n = log.window()?;
    let start = log.at(WARMUP_CYCLES as f64 * log.period).com;
    let end = log.at(n as f64 * log.period).com;
    let dir = Vec3::new(libm::cos(log.heading), libm::sin(log.heading), 0.0);
    Ok((end - start).dot(dir) / (body_length * (n - WARMUP_CYCLES) as f64))
}

/// Mean absolute yaw change per cycle, degrees.
pub fn deg_per_cycle(log: &TrajectoryLog) -> Result<f64, MetricsError> {
    let n = log.window()?;
    let mut sum = 0.0;
    for k in WARMUP_CYCLES..n {
        let a = log.at(k as f64 * log.period).yaw;
        let b = log.at((k + 1) as f64 * log.period).yaw;
        sum += wrap_angle(b - a).abs();
    }
    Ok(sum / (n - WARMUP_CYCLES) as f64 * 180.0 / core::f64::consts::PI)
}

/// Incremental tread bookkeeping shared by the stair metric and the trial
/// loop. Tread `k` counts once every foot has, at some instant, rested on
/// it; down runs count treads below the starting plateau.
#[derive(Clone, Debug)]
pub struct StairCounter {
    steps: u32,
    rise: f64,
    run: f64,
    direction: StairDirection,
    foot_radius: f64,
    seen: Vec<[bool; 4]>,
    counted: Vec<bool>,
    completed: u32,
    last_time: f64,
}

impl StairCounter {
    pub fn new(terrain: &Terrain, foot_radius: f64) -> Result<StairCounter, MetricsError> {
        let TerrainKind::Stairs {
            steps,
            rise,
            run,
            direction,
            ..
        } = terrain.kind
        else {
            return Err(MetricsError::WrongTerrain);
        };
        let treads = steps as usize + 1;
        Ok(StairCounter {
            steps,
            rise,
            run,
            direction,
            foot_radius,
            seen: alloc::vec![[false; 4]; treads],
            counted: alloc::vec![false; treads],
            completed: 0,
            last_time: 0.0,
        })
    }

    pub fn observe(&mut self, r: &LogRecord) {
        for f in 0..4 {
            if !r.foot_contact[f] {
                continue;
            }
            let p = r.feet[f];
            let tread = stair_tread(p.x, self.run, self.steps) as usize;
            let top = self.rise * tread as f64;
            if (p.z - self.foot_radius - top).abs() <= TREAD_TOLERANCE {
                self.seen[tread][f] = true;
            }
        }
        for tread in 0..self.seen.len() {
            let step = match self.direction {
                StairDirection::Up => tread,
                StairDirection::Down => self.steps as usize - tread,
            };
            if step == 0 || self.counted[tread] || !self.seen[tread].iter().all(|&s| s) {
                continue;
            }
            self.counted[tread] = true;
            self.completed += 1;
            self.last_time = r.time;
        }
    }

    pub fn completed(&self) -> u32 {
        self.completed
    }

    pub fn total(&self) -> u32 {
        self.steps
    }

    /// Steps per cycle up to the last counted step.
    pub fn rate(&self, period: f64) -> f64 {
        if self.completed == 0 || period <= 0.0 || self.last_time <= 0.0 {
            0.0
        } else {
            self.completed as f64 / (self.last_time / period)
        }
    }
}

/// `(steps_completed, steps per cycle)`; see [`StairCounter`].
pub fn stairs_per_cycle(log: &TrajectoryLog, terrain: &Terrain) -> Result<(u32, f64), MetricsError> {
    let mut counter = StairCounter::new(terrain, log.foot_radius)?;
    for r in &log.records {
        counter.observe(r);
    }
    Ok((counter.completed(), counter.rate(log.period)))
}

/// Metrics that depend only on the log and the terrain.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogMetrics {
    pub bl_per_cycle: Option<f64>,
    pub deg_per_cycle: Option<f64>,
    pub stairs_up_per_cycle: Option<f64>,
    pub stairs_down_per_cycle: Option<f64>,
    pub steps_completed: u32,
}

pub fn log_metrics(log: &TrajectoryLog, terrain: &Terrain, body_length: f64) -> LogMetrics {
    let (steps, rate) = match stairs_per_cycle(log, terrain) {
        Ok((n, r)) => (n, Some(r)),
        Err(_) => (0, None),
    };
    let down = matches!(
        terrain.kind,
        TerrainKind::Stairs {
            direction: StairDirection::Down,
            ..
        }
    );
    LogMetrics {
        bl_per_cycle: bl_per_cycle(log, body_length).ok(),
        deg_per_cycle: deg_per_cycle(log).ok(),
        stairs_up_per_cycle: if down { None } else { rate },
        stairs_down_per_cycle: if down { rate } else { None },
        steps_completed: steps,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum FailureReason {
    None,
    OffRunway,
    Stuck,
    NumericalDivergence,
    Timeout,
}

impl FailureReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            FailureReason::None => "none",
            FailureReason::OffRunway => "off_runway",
            FailureReason::Stuck => "stuck",
            FailureReason::NumericalDivergence => "numerical_divergence",
            FailureReason::Timeout => "timeout",
        }
    }
}

/// Outcome of one trial. Metrics are `None` when the log is too short.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrialResult {
    pub trial_index: u64,
    pub bl_per_cycle: Option<f64>,
    pub deg_per_cycle: Option<f64>,
    pub stairs_up_per_cycle: Option<f64>,
    pub stairs_down_per_cycle: Option<f64>,
    pub steps_completed: u32,
    pub success: bool,
    pub failure_reason: FailureReason,
    pub sim_time: f64,
    pub cone_violations: u64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Stat {
    pub mean: f64,
    /// Sample standard deviation; zero for a single value.
    pub std: f64,
    pub count: usize,
}

impl Stat {
    pub fn of(values: &[f64]) -> Option<Stat> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() < 2 {
            0.0
        } else {
            libm::sqrt(values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0))
        };
        Some(Stat {
            mean,
            std,
            count: values.len(),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Summary {
    pub label: String,
    pub trials: usize,
    pub successes: usize,
    pub bl_per_cycle: Option<Stat>,
    pub deg_per_cycle: Option<Stat>,
    pub stairs_up_per_cycle: Option<Stat>,
    pub stairs_down_per_cycle: Option<Stat>,
    pub steps_completed: Stat,
    pub total_steps: u32,
}

pub fn summarize(label: &str, results: &[TrialResult]) -> Result<Summary, MetricsError> {
    if results.is_empty() {
        return Err(MetricsError::EmptyResults);
    }
    let pick = |f: fn(&TrialResult) -> Option<f64>| {
        let v: Vec<f64> = results.iter().filter_map(f).collect();
        Stat::of(&v)
    };
    let steps: Vec<f64> = results.iter().map(|r| r.steps_completed as f64).collect();
    Ok(Summary {
        label: String::from(label),
        trials: results.len(),
        successes: results.iter().filter(|r| r.success).count(),
        bl_per_cycle: pick(|r| r.bl_per_cycle),
        deg_per_cycle: pick(|r| r.deg_per_cycle),
        stairs_up_per_cycle: pick(|r| r.stairs_up_per_cycle),
        stairs_down_per_cycle: pick(|r| r.stairs_down_per_cycle),
        steps_completed: Stat::of(&steps).expect("non-empty"),
        total_steps: results.iter().map(|r| r.steps_completed).sum(),
    })
}
