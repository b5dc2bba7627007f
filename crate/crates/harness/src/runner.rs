//! Condition and sweep execution plus log replay.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use tailsim_core::experiment::{nominal_heading, run_trial, trial_terrain, ExperimentConfig, TrialOutput};
use tailsim_core::metrics::{log_metrics, summarize, TrialResult};

use crate::config::{terrain_by_name, Config};
use crate::output::{
    read_json, read_log_csv, trial_csv_path, trial_json_path, write_json, write_file, write_log_csv, write_summaries,
    ConditionReport,
};
use crate::HarnessError;

pub const CONFIG_FILE: &str = "config.toml";

/// Runs every trial of `exp`, in parallel, returning outputs in index order.
pub fn run_trials(exp: &ExperimentConfig) -> Result<Vec<TrialOutput>, HarnessError> {
    (0..exp.trial_count as u64)
        .into_par_iter()
        .map(|i| run_trial(exp, i).map_err(|e| HarnessError::Trial(e.to_string())))
        .collect()
}

/// Runs one condition and writes its logs, resolved config and summaries.
pub fn run_condition(cfg: &Config, dir: &Path) -> Result<ConditionReport, HarnessError> {
    let exp = cfg.experiment()?;
    std::fs::create_dir_all(dir).map_err(|source| HarnessError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    let mut plain = cfg.clone();
    plain.sweep = None;
    write_file(&dir.join(CONFIG_FILE), &plain.to_toml()?)?;
    let outputs = run_trials(&exp)?;
    let mut trials = Vec::with_capacity(outputs.len());
    for out in outputs {
        let i = out.result.trial_index;
        write_log_csv(&trial_csv_path(dir, i), &out.log)?;
        write_json(&trial_json_path(dir, i), &out.result)?;
        trials.push(out.result);
    }
    let report = condition_report(&cfg.label(), trials)?;
    write_summaries(dir, std::slice::from_ref(&report))?;
    Ok(report)
}

fn condition_report(label: &str, trials: Vec<TrialResult>) -> Result<ConditionReport, HarnessError> {
    let summary = summarize(label, &trials).map_err(|e| HarnessError::Trial(e.to_string()))?;
    Ok(ConditionReport { summary, trials })
}

/// Directory name for one sweep cell.
pub fn cell_dir_name(cfg: &Config) -> String {
    cfg.label().replace('/', "__")
}

/// The configurations of a sweep, in tail-major order.
pub fn sweep_cells(cfg: &Config) -> Result<Vec<Config>, HarnessError> {
    let sweep = cfg.sweep.clone().unwrap_or_default();
    let mut cells = Vec::new();
    for &tail in &sweep.tails {
        for name in &sweep.terrains {
            let mut c = cfg.with_tail(tail);
            c.terrain = terrain_by_name(name)?;
            c.sweep = None;
            cells.push(c);
        }
    }
    Ok(cells)
}

/// Runs the cross product of tails and terrains under `dir`.
pub fn run_sweep(cfg: &Config, dir: &Path) -> Result<Vec<ConditionReport>, HarnessError> {
    cfg.experiment()?;
    std::fs::create_dir_all(dir).map_err(|source| HarnessError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    let mut top = cfg.clone();
    top.sweep = Some(cfg.sweep.clone().unwrap_or_default());
    write_file(&dir.join(CONFIG_FILE), &top.to_toml()?)?;
    let mut reports = Vec::new();
    for cell in sweep_cells(cfg)? {
        reports.push(run_condition(&cell, &dir.join(cell_dir_name(&cell)))?);
    }
    write_summaries(dir, &reports)?;
    Ok(reports)
}

fn has_logs(dir: &Path) -> bool {
    dir.join(CONFIG_FILE).is_file() && trial_csv_path(dir, 0).is_file()
}

/// Recomputes one condition's metrics from its stored logs.
pub fn replay_condition(dir: &Path) -> Result<ConditionReport, HarnessError> {
    let cfg = Config::load(&dir.join(CONFIG_FILE), &[])?;
    let exp = cfg.experiment()?;
    let mut trials = Vec::new();
    for i in 0..exp.trial_count as u64 {
        let csv = trial_csv_path(dir, i);
        if !csv.is_file() {
            return Err(HarnessError::Corrupt(format!("{} is missing", csv.display())));
        }
        let stored: TrialResult = read_json(&trial_json_path(dir, i))?;
        let terrain = trial_terrain(&exp, i);
        let log = read_log_csv(
            &csv,
            exp.gait.period,
            nominal_heading(&terrain),
            exp.morphology.contact_radius,
        )?;
        let m = log_metrics(&log, &terrain, exp.morphology.body_length);
        trials.push(TrialResult {
            trial_index: i,
            bl_per_cycle: m.bl_per_cycle,
            deg_per_cycle: m.deg_per_cycle,
            stairs_up_per_cycle: m.stairs_up_per_cycle,
            stairs_down_per_cycle: m.stairs_down_per_cycle,
            steps_completed: m.steps_completed,
            ..stored
        });
    }
    condition_report(&cfg.label(), trials)
}

/// Regenerates summaries under `dir` from its logs: either a single
/// condition or a sweep of condition subdirectories.
pub fn report(dir: &Path) -> Result<Vec<ConditionReport>, HarnessError> {
    if has_logs(dir) {
        let r = replay_condition(dir)?;
        write_summaries(dir, std::slice::from_ref(&r))?;
        return Ok(vec![r]);
    }
    let mut cells: Vec<PathBuf> = match std::fs::read_dir(dir) {
        Ok(entries) => entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_dir() && has_logs(p))
            .collect(),
        Err(_) => Vec::new(),
    };
    if cells.is_empty() {
        return Err(HarnessError::NoLogs(dir.display().to_string()));
    }
    // Sweep order is tail-major as written; recover it from the sweep config
    // when present, else fall back to name order.
    cells.sort();
    if let Ok(cfg) = Config::load(&dir.join(CONFIG_FILE), &[]) {
        if cfg.sweep.is_some() {
            let order: Vec<PathBuf> = sweep_cells(&cfg)?.iter().map(|c| dir.join(cell_dir_name(c))).collect();
            cells.sort_by_key(|p| order.iter().position(|o| o == p).unwrap_or(usize::MAX));
        }
    }
    let mut reports = Vec::new();
    for c in &cells {
        let r = replay_condition(c)?;
        write_summaries(c, std::slice::from_ref(&r))?;
        reports.push(r);
    }
    write_summaries(dir, &reports)?;
    Ok(reports)
}
