//! Experiment configuration file: TOML with strict key checking, command
//! line overrides, and resolution into a core [`ExperimentConfig`].

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use tailsim_core::controller::{GaitParams, TailPolicy, TailPolicyKind};
use tailsim_core::dynamics::contact::Material;
use tailsim_core::experiment::{ExperimentConfig, Jitter, StuckRule};
use tailsim_core::robot::{Morphology, TailKind, TailVariant};
use tailsim_core::terrain::{StairDirection, Terrain, TerrainKind};

#[derive(Debug)]
pub enum ConfigError {
    /// The file could not be read.
    Unreadable { path: String, source: std::io::Error },
    /// The text is not valid TOML or does not match the schema.
    Schema { path: String, message: String },
    /// A `--set` argument is malformed.
    Override(String),
    /// The values parse but violate an invariant.
    Invalid(String),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Unreadable { path, source } => write!(f, "cannot read config file {path}: {source}"),
            ConfigError::Schema { path, message } => write!(f, "config schema error in {path}: {message}"),
            ConfigError::Override(why) => write!(f, "bad --set override: {why}"),
            ConfigError::Invalid(why) => write!(f, "invalid config: {why}"),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerrainPreset {
    Flat,
    Incline,
    StairsUp,
    StairsDown,
    Heightfield,
    Pebbles,
}

/// Terrain selection. Unset fields take the preset's values; setting a field
/// that does not apply to `kind` is an error.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TerrainSpec {
    pub kind: Option<TerrainPreset>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub angle_deg: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub length: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub width: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steps: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rise: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub run: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub half_width: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rms_amp: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corr_len: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub contact_stiffness: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub contact_damping: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v_eps: Option<f64>,
}

fn take<T: Copy>(slot: &mut Option<T>, field: &str, kind: &str, used: &mut Vec<String>) -> Option<T> {
    let v = slot.take();
    if v.is_some() {
        used.push(format!("{field} does not apply to {kind} terrain"));
    }
    v
}

impl TerrainSpec {
    pub fn preset(kind: TerrainPreset) -> TerrainSpec {
        TerrainSpec {
            kind: Some(kind),
            ..TerrainSpec::default()
        }
    }

    pub fn incline(angle_deg: f64) -> TerrainSpec {
        TerrainSpec {
            angle_deg: Some(angle_deg),
            ..TerrainSpec::preset(TerrainPreset::Incline)
        }
    }

    /// Builds the terrain, rejecting fields foreign to the chosen kind.
    pub fn build(&self) -> Result<Terrain, ConfigError> {
        let kind = self.kind.unwrap_or(TerrainPreset::Flat);
        let mut s = self.clone();
        let mut wrong = Vec::new();
        let name = format!("{kind:?}").to_lowercase();
        let mut terrain = match kind {
            TerrainPreset::Flat => Terrain::flat(),
            TerrainPreset::Incline => Terrain::incline(s.angle_deg.take().unwrap_or(20.0)),
            TerrainPreset::StairsUp => Terrain::stairs(StairDirection::Up),
            TerrainPreset::StairsDown => Terrain::stairs(StairDirection::Down),
            TerrainPreset::Heightfield => Terrain::heightfield(s.seed.unwrap_or(1), 0.0, 0.04),
            TerrainPreset::Pebbles => Terrain::pebbles(s.seed.unwrap_or(1)),
        };
        match &mut terrain.kind {
            TerrainKind::Incline { length, width, .. } => {
                if let Some(v) = s.length.take() {
                    *length = v;
                }
                if let Some(v) = s.width.take() {
                    *width = v;
                }
            }
            TerrainKind::Stairs {
                steps,
                rise,
                run,
                half_width,
                ..
            } => {
                if let Some(v) = s.steps.take() {
                    *steps = v;
                }
                if let Some(v) = s.rise.take() {
                    *rise = v;
                }
                if let Some(v) = s.run.take() {
                    *run = v;
                }
                if let Some(v) = s.half_width.take() {
                    *half_width = v;
                }
            }
            TerrainKind::Heightfield {
                seed,
                rms_amp,
                corr_len,
            } => {
                if let Some(v) = s.seed.take() {
                    *seed = v;
                }
                if let Some(v) = s.rms_amp.take() {
                    *rms_amp = v;
                }
                if let Some(v) = s.corr_len.take() {
                    *corr_len = v;
                }
            }
            TerrainKind::Flat => {}
        }
        take(&mut s.angle_deg, "angle_deg", &name, &mut wrong);
        take(&mut s.length, "length", &name, &mut wrong);
        take(&mut s.width, "width", &name, &mut wrong);
        take(&mut s.steps, "steps", &name, &mut wrong);
        take(&mut s.rise, "rise", &name, &mut wrong);
        take(&mut s.run, "run", &name, &mut wrong);
        take(&mut s.half_width, "half_width", &name, &mut wrong);
        take(&mut s.seed, "seed", &name, &mut wrong);
        take(&mut s.rms_amp, "rms_amp", &name, &mut wrong);
        take(&mut s.corr_len, "corr_len", &name, &mut wrong);
        if let Some(w) = wrong.into_iter().next() {
            return Err(ConfigError::Invalid(w));
        }
        let m: &mut Material = &mut terrain.material;
        if let Some(v) = s.mu {
            m.mu = v;
        }
        if let Some(v) = s.contact_stiffness {
            m.stiffness = v;
        }
        if let Some(v) = s.contact_damping {
            m.damping = v;
        }
        if let Some(v) = s.v_eps {
            m.v_eps = v;
        }
        if !terrain.material.is_valid() {
            return Err(ConfigError::Invalid("terrain material out of range".into()));
        }
        terrain.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(terrain)
    }

    /// The same terrain with every applicable field spelled out.
    pub fn resolved(&self) -> Result<TerrainSpec, ConfigError> {
        let t = self.build()?;
        let mut out = TerrainSpec::preset(self.kind.unwrap_or(TerrainPreset::Flat));
        match t.kind {
            TerrainKind::Flat => {}
            TerrainKind::Incline { angle_deg, length, width } => {
                out.angle_deg = Some(angle_deg);
                out.length = Some(length);
                out.width = Some(width);
            }
            TerrainKind::Stairs {
                steps,
                rise,
                run,
                half_width,
                ..
            } => {
                out.steps = Some(steps);
                out.rise = Some(rise);
                out.run = Some(run);
                out.half_width = Some(half_width);
            }
            TerrainKind::Heightfield { seed, rms_amp, corr_len } => {
                out.seed = Some(seed);
                out.rms_amp = Some(rms_amp);
                out.corr_len = Some(corr_len);
            }
        }
        out.mu = Some(t.material.mu);
        out.contact_stiffness = Some(t.material.stiffness);
        out.contact_damping = Some(t.material.damping);
        out.v_eps = Some(t.material.v_eps);
        Ok(out)
    }
}

/// Named tail variant plus stiffness policy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailCondition {
    None,
    Rigid,
    Relaxed,
    Stiff,
    Periodic,
    Touch,
}

impl TailCondition {
    pub const ALL: [TailCondition; 6] = [
        TailCondition::None,
        TailCondition::Rigid,
        TailCondition::Relaxed,
        TailCondition::Stiff,
        TailCondition::Periodic,
        TailCondition::Touch,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TailCondition::None => "none",
            TailCondition::Rigid => "rigid",
            TailCondition::Relaxed => "relaxed",
            TailCondition::Stiff => "stiff",
            TailCondition::Periodic => "periodic",
            TailCondition::Touch => "touch",
        }
    }

    pub fn variant(self) -> TailVariant {
        match self {
            TailCondition::None => TailVariant::None,
            TailCondition::Rigid => TailVariant::Rigid,
            _ => TailVariant::Flexible,
        }
    }

    pub fn policy(self) -> TailPolicyKind {
        match self {
            TailCondition::Relaxed => TailPolicyKind::Relaxed,
            TailCondition::Periodic => TailPolicyKind::Periodic,
            TailCondition::Touch => TailPolicyKind::TouchTriggered,
            _ => TailPolicyKind::ConstantStiff,
        }
    }
}

/// Cross product run by `sweep`. Terrain names are `flat`, `incline-<deg>`,
/// `stairs-up`, `stairs-down`, `pebbles`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub tails: Vec<TailCondition>,
    pub terrains: Vec<String>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            tails: vec![TailCondition::None, TailCondition::Rigid, TailCondition::Stiff],
            terrains: vec!["flat".into()],
        }
    }
}

/// Parses a sweep terrain name.
pub fn terrain_by_name(name: &str) -> Result<TerrainSpec, ConfigError> {
    let spec = match name {
        "flat" => TerrainSpec::preset(TerrainPreset::Flat),
        "stairs-up" => TerrainSpec::preset(TerrainPreset::StairsUp),
        "stairs-down" => TerrainSpec::preset(TerrainPreset::StairsDown),
        "pebbles" => TerrainSpec::preset(TerrainPreset::Pebbles),
        other => match other.strip_prefix("incline-").map(str::parse::<f64>) {
            Some(Ok(a)) => TerrainSpec::incline(a),
            _ => return Err(ConfigError::Invalid(format!("unknown sweep terrain {other:?}"))),
        },
    };
    spec.build()?;
    Ok(spec)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub trial_count: u32,
    pub seed: u64,
    pub max_sim_time: f64,
    pub dt: f64,
    pub settle_time: f64,
    /// Output directory, relative to the working directory.
    pub output_dir: String,
    pub terrain: TerrainSpec,
    pub tail: TailKind,
    pub policy: TailPolicy,
    pub gait: GaitParams,
    pub morphology: Morphology,
    pub jitter: Jitter,
    pub stuck: StuckRule,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
}

impl Default for Config {
    fn default() -> Self {
        let e = ExperimentConfig::default();
        Config {
            trial_count: e.trial_count,
            seed: e.seed,
            max_sim_time: e.max_sim_time,
            dt: e.dt,
            settle_time: e.settle_time,
            output_dir: "out".into(),
            terrain: TerrainSpec::preset(TerrainPreset::Flat),
            tail: e.tail,
            policy: e.policy,
            gait: e.gait,
            morphology: e.morphology,
            jitter: e.jitter,
            stuck: e.stuck,
            sweep: None,
        }
    }
}

impl Config {
    /// Reads `path`, applies `key=value` overrides, then checks the schema.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Config, ConfigError> {
        let shown = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Unreadable {
            path: shown.clone(),
            source,
        })?;
        Config::parse(&text, &shown, overrides)
    }

    pub fn parse(text: &str, origin: &str, overrides: &[String]) -> Result<Config, ConfigError> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| ConfigError::Schema {
            path: origin.into(),
            message: e.to_string(),
        })?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg = Config::deserialize(toml::Value::Table(table)).map_err(|e| ConfigError::Schema {
            path: origin.into(),
            message: e.to_string(),
        })?;
        cfg.experiment()?;
        Ok(cfg)
    }

    /// Condition with the tail and policy replaced.
    pub fn with_tail(&self, c: TailCondition) -> Config {
        let mut out = self.clone();
        out.tail.variant = c.variant();
        out.policy.kind = c.policy();
        out
    }

    pub fn experiment(&self) -> Result<ExperimentConfig, ConfigError> {
        let e = ExperimentConfig {
            terrain: self.terrain.build()?,
            tail: self.tail.clone(),
            policy: self.policy,
            gait: self.gait,
            morphology: self.morphology.clone(),
            trial_count: self.trial_count,
            seed: self.seed,
            max_sim_time: self.max_sim_time,
            dt: self.dt,
            settle_time: self.settle_time,
            jitter: self.jitter,
            stuck: self.stuck,
        };
        e.validate().map_err(|err| ConfigError::Invalid(err.to_string()))?;
        if let Some(s) = &self.sweep {
            for t in &s.terrains {
                terrain_by_name(t)?;
            }
            if s.tails.is_empty() || s.terrains.is_empty() {
                return Err(ConfigError::Invalid("sweep needs at least one tail and one terrain".into()));
            }
        }
        Ok(e)
    }

    /// Fully spelled-out TOML, suitable for re-loading.
    pub fn to_toml(&self) -> Result<String, ConfigError> {
        let mut c = self.clone();
        c.terrain = c.terrain.resolved()?;
        toml::to_string(&c).map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    /// Label naming the tail condition and terrain.
    pub fn label(&self) -> String {
        let tail = match self.tail.variant {
            TailVariant::None => "none".to_string(),
            TailVariant::Rigid => "rigid".to_string(),
            TailVariant::Flexible => match self.policy.kind {
                TailPolicyKind::Relaxed => "relaxed".into(),
                TailPolicyKind::ConstantStiff => "stiff".into(),
                TailPolicyKind::Periodic => "periodic".into(),
                TailPolicyKind::TouchTriggered => "touch".into(),
            },
        };
        let t = &self.terrain;
        let terrain = match t.kind.unwrap_or(TerrainPreset::Flat) {
            TerrainPreset::Flat => "flat".to_string(),
            TerrainPreset::Incline => format!("incline-{}", t.angle_deg.unwrap_or(20.0)),
            TerrainPreset::StairsUp => "stairs-up".into(),
            TerrainPreset::StairsDown => "stairs-down".into(),
            TerrainPreset::Heightfield => "heightfield".into(),
            TerrainPreset::Pebbles => "pebbles".into(),
        };
        format!("{tail}/{terrain}")
    }
}

/// Sets a dotted key in a TOML table. The value is read as a TOML literal,
/// falling back to a bare string.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<(), ConfigError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| ConfigError::Override(format!("{assignment:?} is not key=value")))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(ConfigError::Override(format!("empty key segment in {key:?}")));
    }
    let raw = raw.trim();
    let value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().expect("non-empty key");
    let mut node = table;
    for p in parts {
        let entry = node
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = match entry {
            toml::Value::Table(t) => t,
            _ => return Err(ConfigError::Override(format!("{p:?} in {key:?} is not a table"))),
        };
    }
    node.insert(last.to_string(), value);
    Ok(())
}
