//! Experiment harness for the tailsim quadruped simulator: configuration
//! files, batch execution, trajectory logs, summaries and the CLI.

use std::fmt;

pub mod cli;
pub mod config;
pub mod output;
pub mod runner;

pub use config::{Config, ConfigError, TailCondition, TerrainSpec};

#[derive(Debug)]
pub enum HarnessError {
    Config(ConfigError),
    Io { path: String, source: std::io::Error },
    /// A stored file does not have the expected shape.
    Corrupt(String),
    /// `report` found no trial logs.
    NoLogs(String),
    Trial(String),
}

impl fmt::Display for HarnessError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HarnessError::Config(e) => e.fmt(f),
            HarnessError::Io { path, source } => write!(f, "i/o error on {path}: {source}"),
            HarnessError::Corrupt(why) => write!(f, "malformed output file: {why}"),
            HarnessError::NoLogs(dir) => write!(f, "no logs found in {dir}"),
            HarnessError::Trial(why) => write!(f, "trial failed: {why}"),
        }
    }
}

impl std::error::Error for HarnessError {}

impl From<ConfigError> for HarnessError {
    fn from(e: ConfigError) -> Self {
        HarnessError::Config(e)
    }
}
