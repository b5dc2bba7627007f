//! On-disk formats: per-trial CSV trajectories and result JSON, per-condition
//! summaries, and the plain-text comparison table.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tailsim_core::math::Vec3;
use tailsim_core::metrics::{LogRecord, Stat, Summary, TrajectoryLog, TrialResult};

use crate::HarnessError;

/// CSV column order. The first seventeen columns are the documented
/// trajectory; the foot positions follow so stair metrics can be replayed.
pub const CSV_COLUMNS: [&str; 29] = [
    "time",
    "com_x",
    "com_y",
    "com_z",
    "yaw",
    "pitch",
    "roll",
    "fl",
    "fr",
    "rl",
    "rr",
    "tail_x",
    "tail_y",
    "tail_z",
    "tail_contact",
    "reel_deg",
    "phase",
    "fl_x",
    "fl_y",
    "fl_z",
    "fr_x",
    "fr_y",
    "fr_z",
    "rl_x",
    "rl_y",
    "rl_z",
    "rr_x",
    "rr_y",
    "rr_z",
];

#[derive(Serialize, Deserialize)]
struct Row {
    time: f64,
    com_x: f64,
    com_y: f64,
    com_z: f64,
    yaw: f64,
    pitch: f64,
    roll: f64,
    fl: u8,
    fr: u8,
    rl: u8,
    rr: u8,
    tail_x: f64,
    tail_y: f64,
    tail_z: f64,
    tail_contact: u8,
    reel_deg: f64,
    phase: f64,
    fl_x: f64,
    fl_y: f64,
    fl_z: f64,
    fr_x: f64,
    fr_y: f64,
    fr_z: f64,
    rl_x: f64,
    rl_y: f64,
    rl_z: f64,
    rr_x: f64,
    rr_y: f64,
    rr_z: f64,
}

impl From<&LogRecord> for Row {
    fn from(r: &LogRecord) -> Row {
        let c = |b: bool| b as u8;
        let f = r.feet;
        Row {
            time: r.time,
            com_x: r.com.x,
            com_y: r.com.y,
            com_z: r.com.z,
            yaw: r.yaw,
            pitch: r.pitch,
            roll: r.roll,
            fl: c(r.foot_contact[0]),
            fr: c(r.foot_contact[1]),
            rl: c(r.foot_contact[2]),
            rr: c(r.foot_contact[3]),
            tail_x: r.tail_tip.x,
            tail_y: r.tail_tip.y,
            tail_z: r.tail_tip.z,
            tail_contact: c(r.tail_contact),
            reel_deg: r.reel_deg,
            phase: r.phase,
            fl_x: f[0].x,
            fl_y: f[0].y,
            fl_z: f[0].z,
            fr_x: f[1].x,
            fr_y: f[1].y,
            fr_z: f[1].z,
            rl_x: f[2].x,
            rl_y: f[2].y,
            rl_z: f[2].z,
            rr_x: f[3].x,
            rr_y: f[3].y,
            rr_z: f[3].z,
        }
    }
}

impl From<Row> for LogRecord {
    fn from(r: Row) -> LogRecord {
        LogRecord {
            time: r.time,
            com: Vec3::new(r.com_x, r.com_y, r.com_z),
            yaw: r.yaw,
            pitch: r.pitch,
            roll: r.roll,
            foot_contact: [r.fl != 0, r.fr != 0, r.rl != 0, r.rr != 0],
            tail_tip: Vec3::new(r.tail_x, r.tail_y, r.tail_z),
            tail_contact: r.tail_contact != 0,
            reel_deg: r.reel_deg,
            phase: r.phase,
            feet: [
                Vec3::new(r.fl_x, r.fl_y, r.fl_z),
                Vec3::new(r.fr_x, r.fr_y, r.fr_z),
                Vec3::new(r.rl_x, r.rl_y, r.rl_z),
                Vec3::new(r.rr_x, r.rr_y, r.rr_z),
            ],
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> HarnessError + '_ {
    move |e| HarnessError::Corrupt(format!("{}: {e}", path.display()))
}

pub fn write_file(path: &Path, text: &str) -> Result<(), HarnessError> {
    std::fs::write(path, text).map_err(io_err(path))
}

pub fn read_file(path: &Path) -> Result<String, HarnessError> {
    std::fs::read_to_string(path).map_err(io_err(path))
}

pub fn trial_csv_path(dir: &Path, index: u64) -> PathBuf {
    dir.join(format!("trial_{index:03}.csv"))
}

pub fn trial_json_path(dir: &Path, index: u64) -> PathBuf {
    dir.join(format!("trial_{index:03}.json"))
}

pub fn write_log_csv(path: &Path, log: &TrajectoryLog) -> Result<(), HarnessError> {
    let file = std::fs::File::create(path).map_err(io_err(path))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    for r in &log.records {
        w.serialize(Row::from(r)).map_err(csv_err(path))?;
    }
    if log.records.is_empty() {
        w.write_record(CSV_COLUMNS).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Reads a trajectory written by [`write_log_csv`]; the caller supplies the
/// log parameters that are not stored per row.
pub fn read_log_csv(path: &Path, period: f64, heading: f64, foot_radius: f64) -> Result<TrajectoryLog, HarnessError> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let header: Vec<String> = r.headers().map_err(csv_err(path))?.iter().map(str::to_string).collect();
    if header != CSV_COLUMNS {
        return Err(HarnessError::Corrupt(format!("{}: unexpected CSV header", path.display())));
    }
    let mut log = TrajectoryLog::new(period, heading, foot_radius);
    for row in r.deserialize::<Row>() {
        log.records.push(row.map_err(csv_err(path))?.into());
    }
    Ok(log)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| HarnessError::Corrupt(e.to_string()))?;
    text.push('\n');
    write_file(path, &text)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, HarnessError> {
    let text = read_file(path)?;
    serde_json::from_str(&text).map_err(|e| HarnessError::Corrupt(format!("{}: {e}", path.display())))
}

/// One condition's summary with its trials, as stored in `summary.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub summary: Summary,
    pub trials: Vec<TrialResult>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryFile {
    pub conditions: Vec<ConditionReport>,
}

fn stat_cell(s: &Option<Stat>) -> String {
    match s {
        Some(s) => format!("{:.3} ± {:.3}", s.mean, s.std),
        None => "-".into(),
    }
}

/// Plain-text comparison table, one row per condition.
pub fn summary_table(conditions: &[ConditionReport]) -> String {
    let headers = ["condition", "trials", "success", "BL/cycle", "deg/cycle", "stairs/cycle", "steps", "failures"];
    let rows: Vec<[String; 8]> = conditions
        .iter()
        .map(|c| {
            let s = &c.summary;
            let stairs = if s.stairs_down_per_cycle.is_some() {
                stat_cell(&s.stairs_down_per_cycle)
            } else {
                stat_cell(&s.stairs_up_per_cycle)
            };
            let mut failures: Vec<&str> = c
                .trials
                .iter()
                .map(|t| t.failure_reason.as_str())
                .filter(|f| *f != "none")
                .collect();
            failures.dedup();
            [
                s.label.clone(),
                s.trials.to_string(),
                s.successes.to_string(),
                stat_cell(&s.bl_per_cycle),
                stat_cell(&s.deg_per_cycle),
                stairs,
                format!("{}/{}", s.total_steps, 6 * s.trials),
                if failures.is_empty() { "-".into() } else { failures.join(",") },
            ]
        })
        .collect();
    let mut width = headers.map(|h| h.chars().count());
    for r in &rows {
        for (w, cell) in width.iter_mut().zip(r) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, cells: &[String]| {
        let parts: Vec<String> = cells
            .iter()
            .zip(width)
            .map(|(c, w)| format!("{c}{}", " ".repeat(w - c.chars().count())))
            .collect();
        let _ = writeln!(out, "{}", parts.join("  ").trim_end());
    };
    line(&mut out, &headers.map(String::from));
    line(&mut out, &width.map(|w| "-".repeat(w)));
    for r in &rows {
        line(&mut out, r);
    }
    out
}

#[derive(Serialize)]
struct MetricsRow<'a> {
    condition: &'a str,
    trial: u64,
    bl_per_cycle: Option<f64>,
    deg_per_cycle: Option<f64>,
    stairs_up_per_cycle: Option<f64>,
    stairs_down_per_cycle: Option<f64>,
    steps_completed: u32,
    success: bool,
    failure_reason: &'static str,
    sim_time: f64,
    cone_violations: u64,
}

/// `summary.json`, `summary.txt` and the per-trial `metrics.csv` plot data.
pub fn write_summaries(dir: &Path, conditions: &[ConditionReport]) -> Result<(), HarnessError> {
    write_json(
        &dir.join("summary.json"),
        &SummaryFile {
            conditions: conditions.to_vec(),
        },
    )?;
    write_file(&dir.join("summary.txt"), &summary_table(conditions))?;
    let path = dir.join("metrics.csv");
    let file = std::fs::File::create(&path).map_err(io_err(&path))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    for c in conditions {
        for t in &c.trials {
            w.serialize(MetricsRow {
                condition: &c.summary.label,
                trial: t.trial_index,
                bl_per_cycle: t.bl_per_cycle,
                deg_per_cycle: t.deg_per_cycle,
                stairs_up_per_cycle: t.stairs_up_per_cycle,
                stairs_down_per_cycle: t.stairs_down_per_cycle,
                steps_completed: t.steps_completed,
                success: t.success,
                failure_reason: t.failure_reason.as_str(),
                sim_time: t.sim_time,
                cone_violations: t.cone_violations,
            })
            .map_err(csv_err(&path))?;
        }
    }
    w.flush().map_err(io_err(&path))
}
