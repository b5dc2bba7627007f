//! Command line: `run`, `sweep` and `report`.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::Config;
use crate::output::summary_table;
use crate::runner::{report, run_condition, run_sweep};
use crate::HarnessError;

#[derive(Parser, Debug)]
#[command(name = "tailsim", version, about = "Quadruped-with-tail locomotion experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run one condition for `trial_count` trials.
    Run(RunArgs),
    /// Run every (tail, terrain) pair listed in the config's [sweep] table.
    Sweep(RunArgs),
    /// Recompute summaries from the logs stored under a directory.
    Report {
        dir: PathBuf,
    },
}

#[derive(Args, Debug, Clone)]
pub struct RunArgs {
    /// TOML configuration file.
    pub config: PathBuf,
    #[arg(long)]
    pub trials: Option<u32>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory; overrides `output_dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long = "max-time")]
    pub max_time: Option<f64>,
    /// Override any config key, e.g. `--set gait.period=1.5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Worker threads; defaults to the number of CPUs.
    #[arg(long)]
    pub jobs: Option<usize>,
}

impl RunArgs {
    /// Loads the config with flag overrides applied after `--set`.
    pub fn load(&self) -> Result<(Config, PathBuf), HarnessError> {
        let mut sets = self.set.clone();
        if let Some(n) = self.trials {
            sets.push(format!("trial_count={n}"));
        }
        if let Some(s) = self.seed {
            sets.push(format!("seed={s}"));
        }
        if let Some(dt) = self.dt {
            sets.push(format!("dt={dt:?}"));
        }
        if let Some(t) = self.max_time {
            sets.push(format!("max_sim_time={t:?}"));
        }
        let cfg = Config::load(&self.config, &sets)?;
        let out = self.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.output_dir));
        Ok((cfg, out))
    }
}

fn with_pool<T>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, HarnessError>
where
    T: Send,
{
    match jobs {
        None => Ok(f()),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map(|p| p.install(f))
            .map_err(|e| HarnessError::Trial(e.to_string())),
    }
}

/// Executes a parsed command, returning the text table it produced.
pub fn execute(cmd: &Command) -> Result<String, HarnessError> {
    match cmd {
        Command::Run(a) => {
            let (cfg, out) = a.load()?;
            let r = with_pool(a.jobs, || run_condition(&cfg, &out))??;
            Ok(summary_table(std::slice::from_ref(&r)))
        }
        Command::Sweep(a) => {
            let (cfg, out) = a.load()?;
            let r = with_pool(a.jobs, || run_sweep(&cfg, &out))??;
            Ok(summary_table(&r))
        }
        Command::Report { dir } => Ok(summary_table(&report(Path::new(dir))?)),
    }
}

/// Parses `argv`, runs the command and maps errors to a nonzero exit code.
pub fn main<I, T>(argv: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match execute(&cli.command) {
        Ok(table) => {
            print!("{table}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
