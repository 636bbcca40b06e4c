//! Run configuration: a TOML file plus dotted `key=value` overrides.
//!
//! Unknown keys are rejected with a spelling suggestion. API keys never
//! appear here; backends read them from the environment.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::icrl::{LoopConfig, PromptLayout, Schedule, Segment};
use crate::policy::GenSettings;
use crate::task::TaskKind;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("config does not parse: {0}")]
    Parse(String),
    #[error("unknown key `{key}`{}", suggestion.as_ref().map(|s| format!(" (did you mean `{s}`?)")).unwrap_or_default())]
    UnknownKey { key: String, suggestion: Option<String> },
    #[error("invalid `{field}`: {reason}")]
    Invalid { field: String, reason: String },
    #[error("override {0:?} is not of the form key=value")]
    Override(String),
    #[error("io: {0}")]
    Io(String),
}

fn invalid(field: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.to_string(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Icrl,
    Cot,
    LongCot,
    BestOfN,
    SelfRefine,
    Reflexion,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Icrl => "icrl",
            Method::Cot => "cot",
            Method::LongCot => "long_cot",
            Method::BestOfN => "best_of_n",
            Method::SelfRefine => "self_refine",
            Method::Reflexion => "reflexion",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    /// OpenAI-compatible HTTP endpoint.
    Openai,
    /// Canned responses from a script file; no network.
    Scripted,
    /// Exact game24 step judge; no model at all.
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    pub backend: BackendKind,
    pub model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub script: Option<PathBuf>,
    pub temperature: f64,
    pub max_output_tokens: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context_limit: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub requests_per_minute: Option<u32>,
    pub max_retries: u32,
    pub timeout_secs: u64,
}

impl BackendConfig {
    fn policy_default() -> Self {
        let g = GenSettings::policy();
        Self {
            backend: BackendKind::Openai,
            model: "gpt-4.1".into(),
            script: None,
            temperature: g.temperature,
            max_output_tokens: g.max_output_tokens,
            context_limit: None,
            requests_per_minute: None,
            max_retries: 5,
            timeout_secs: 120,
        }
    }

    fn judge_default() -> Self {
        let g = GenSettings::judge();
        Self {
            temperature: g.temperature,
            max_output_tokens: g.max_output_tokens,
            ..Self::policy_default()
        }
    }

    pub fn settings(&self) -> GenSettings {
        GenSettings {
            temperature: self.temperature,
            max_output_tokens: self.max_output_tokens,
            stop_sequences: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemsConfig {
    /// Problem file; the shipped set when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    /// Keep only the first `limit` problems.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limit: Option<usize>,
    /// Keep only these problem ids.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ids: Vec<String>,
    /// Writing: draw this many problems from the sentence pool instead of
    /// reading a problem file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sentence_pool: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_answer: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TextWorldConfig {
    /// Shipped MiniLab worlds to play.
    pub worlds: Vec<String>,
    /// Extra world spec files.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub world_files: Vec<PathBuf>,
    /// An external environment speaking the stdio protocol; replaces the
    /// worlds when set.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub command: Vec<String>,
    pub max_env_steps: u32,
}

impl Default for TextWorldConfig {
    fn default() -> Self {
        Self {
            worlds: crate::textworld::BUILTIN_WORLDS.iter().map(|(n, _)| n.to_string()).collect(),
            world_files: Vec::new(),
            command: Vec::new(),
            max_env_steps: crate::textworld::DEFAULT_MAX_ENV_STEPS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostConfig {
    /// Abort before starting when the projected cost exceeds this.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cap_usd: Option<f64>,
    pub usd_per_mtok_in: f64,
    pub usd_per_mtok_out: f64,
}

impl Default for CostConfig {
    fn default() -> Self {
        Self {
            cap_usd: None,
            usd_per_mtok_in: 2.0,
            usd_per_mtok_out: 8.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub task: TaskKind,
    #[serde(default)]
    pub method: Method,
    /// Label written into logs; derived from method and schedule if absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default = "default_schedule")]
    pub schedule: Schedule,
    #[serde(default = "default_episodes")]
    pub episodes: u32,
    /// Unbounded when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub buffer_capacity: Option<usize>,
    #[serde(default)]
    pub zero_rewards: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layout: Option<Vec<Segment>>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub record_wall_time: bool,
    #[serde(default = "default_window")]
    pub reflection_window: usize,
    #[serde(default)]
    pub problems: ProblemsConfig,
    #[serde(default = "BackendConfig::policy_default")]
    pub policy: BackendConfig,
    #[serde(default = "BackendConfig::judge_default")]
    pub judge: BackendConfig,
    #[serde(default)]
    pub textworld: TextWorldConfig,
    #[serde(default)]
    pub cost: CostConfig,
}

fn default_schedule() -> Schedule {
    Schedule::Preset
}

fn default_episodes() -> u32 {
    50
}

fn default_window() -> usize {
    3
}

/// Known keys per table, for unknown-key detection.
fn schema(path: &str) -> Option<&'static [&'static str]> {
    const BACKEND: &[&str] = &[
        "backend",
        "model",
        "script",
        "temperature",
        "max_output_tokens",
        "context_limit",
        "requests_per_minute",
        "max_retries",
        "timeout_secs",
    ];
    Some(match path {
        "" => &[
            "task",
            "method",
            "label",
            "schedule",
            "episodes",
            "buffer_capacity",
            "zero_rewards",
            "layout",
            "seed",
            "record_wall_time",
            "reflection_window",
            "problems",
            "policy",
            "judge",
            "textworld",
            "cost",
        ],
        "problems" => &["file", "limit", "ids", "sample", "sentence_pool", "base_answer"],
        "policy" | "judge" => BACKEND,
        "textworld" => &["worlds", "world_files", "command", "max_env_steps"],
        "cost" => &["cap_usd", "usd_per_mtok_in", "usd_per_mtok_out"],
        _ => return None,
    })
}

fn all_keys() -> Vec<String> {
    let mut out = Vec::new();
    for table in ["", "problems", "policy", "judge", "textworld", "cost"] {
        for k in schema(table).unwrap() {
            out.push(if table.is_empty() { k.to_string() } else { format!("{table}.{k}") });
        }
    }
    out
}

fn suggest(table: &str, key: &str) -> Option<String> {
    let close = |cands: Vec<String>, leaf: &dyn Fn(&str) -> String| {
        cands
            .into_iter()
            .map(|c| (strsim::damerau_levenshtein(key, &leaf(&c)), c))
            .filter(|(d, _)| *d <= 3.min(key.len().saturating_sub(1)).max(1))
            .min_by_key(|(d, _)| *d)
            .map(|(_, c)| c)
    };
    let local: Vec<String> = schema(table).unwrap_or(&[]).iter().map(|s| s.to_string()).collect();
    close(local, &|c| c.to_string())
        .map(|c| if table.is_empty() { c } else { format!("{table}.{c}") })
        .or_else(|| close(all_keys(), &|c| c.rsplit('.').next().unwrap_or(c).to_string()))
}

fn check_keys(value: &toml::Value, table: &str) -> Result<(), ConfigError> {
    let (Some(known), toml::Value::Table(t)) = (schema(table), value) else {
        return Ok(());
    };
    for (k, v) in t {
        let path = if table.is_empty() { k.clone() } else { format!("{table}.{k}") };
        if !known.contains(&k.as_str()) {
            return Err(ConfigError::UnknownKey {
                suggestion: suggest(table, k),
                key: path,
            });
        }
        if v.is_table() {
            check_keys(v, &path)?;
        }
    }
    Ok(())
}

fn parse_override_value(raw: &str) -> toml::Value {
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.to_string())),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Applies `a.b=value`; the value is read as TOML, falling back to a bare
/// string.
pub fn apply_override(doc: &mut toml::Value, spec: &str) -> Result<(), ConfigError> {
    let (key, raw) = spec.split_once('=').ok_or_else(|| ConfigError::Override(spec.to_string()))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(ConfigError::Override(spec.to_string()));
    }
    let parts: Vec<&str> = key.split('.').collect();
    let mut table = String::new();
    let mut node = doc;
    for (i, part) in parts.iter().enumerate() {
        let known = schema(&table).ok_or_else(|| ConfigError::UnknownKey {
            key: key.to_string(),
            suggestion: None,
        })?;
        if !known.contains(part) {
            return Err(ConfigError::UnknownKey {
                key: key.to_string(),
                suggestion: suggest(&table, part),
            });
        }
        let t = node.as_table_mut().ok_or_else(|| invalid(key, "parent is not a table"))?;
        if i + 1 == parts.len() {
            t.insert(part.to_string(), parse_override_value(raw.trim()));
            return Ok(());
        }
        node = t
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = if table.is_empty() { part.to_string() } else { format!("{table}.{part}") };
    }
    unreachable!("split yields at least one part")
}

/// Sections given only partially take their remaining keys from the
/// section defaults (policy and judge defaults differ).
fn fill_section_defaults(doc: &mut toml::Value) {
    let defaults: [(&str, toml::Value); 4] = [
        ("policy", toml::Value::try_from(BackendConfig::policy_default()).expect("serializes")),
        ("judge", toml::Value::try_from(BackendConfig::judge_default()).expect("serializes")),
        ("textworld", toml::Value::try_from(TextWorldConfig::default()).expect("serializes")),
        ("cost", toml::Value::try_from(CostConfig::default()).expect("serializes")),
    ];
    let Some(root) = doc.as_table_mut() else { return };
    for (name, def) in defaults {
        if let (Some(toml::Value::Table(t)), toml::Value::Table(d)) = (root.get_mut(name), def) {
            for (k, v) in d {
                t.entry(k).or_insert(v);
            }
        }
    }
}

impl RunConfig {
    /// Parses TOML text, applies overrides, fills defaults and validates.
    pub fn from_toml_with_overrides(text: &str, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut doc: toml::Value = toml::from_str::<toml::Table>(text)
            .map(toml::Value::Table)
            .map_err(|e| ConfigError::Parse(e.to_string()))?;
        check_keys(&doc, "")?;
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        fill_section_defaults(&mut doc);
        let config: RunConfig = doc.try_into().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Self::from_toml_with_overrides(text, &[])
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml_with_overrides(&text, overrides)
    }

    /// A config with every default, for `task`.
    pub fn minimal(task: TaskKind) -> Self {
        Self::from_toml(&format!("task = \"{}\"", task.name())).expect("defaults validate")
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("RunConfig serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.episodes == 0 {
            return Err(invalid("episodes", "must be at least 1"));
        }
        if self.buffer_capacity == Some(0) {
            return Err(invalid("buffer_capacity", "must be at least 1 (omit it for unbounded)"));
        }
        if self.reflection_window == 0 {
            return Err(invalid("reflection_window", "must be at least 1"));
        }
        if let Some(l) = &self.layout {
            PromptLayout::new(l.clone()).map_err(|e| invalid("layout", e.to_string()))?;
        }
        for (name, b) in [("policy", &self.policy), ("judge", &self.judge)] {
            if !(0.0..=2.0).contains(&b.temperature) {
                return Err(invalid(&format!("{name}.temperature"), "must be within [0, 2]"));
            }
            if b.max_output_tokens == 0 {
                return Err(invalid(&format!("{name}.max_output_tokens"), "must be positive"));
            }
            if b.backend == BackendKind::Scripted && b.script.is_none() {
                return Err(invalid(&format!("{name}.script"), "required for the scripted backend"));
            }
        }
        if self.policy.backend == BackendKind::Oracle {
            return Err(invalid("policy.backend", "the oracle can only judge"));
        }
        if self.judge.backend == BackendKind::Oracle && self.task != TaskKind::Game24 {
            return Err(invalid("judge.backend", "the oracle judge exists only for game24"));
        }
        if self.task == TaskKind::TextWorld
            && self.textworld.command.is_empty()
            && self.textworld.worlds.is_empty()
            && self.textworld.world_files.is_empty()
        {
            return Err(invalid("textworld.worlds", "no world to play"));
        }
        if self.textworld.max_env_steps == 0 {
            return Err(invalid("textworld.max_env_steps", "must be at least 1"));
        }
        if let Some(c) = self.cost.cap_usd {
            if c.is_nan() || c < 0.0 {
                return Err(invalid("cost.cap_usd", "must be non-negative"));
            }
        }
        Ok(())
    }

    /// Method name for the logs.
    pub fn method_label(&self) -> String {
        if let Some(l) = &self.label {
            return l.clone();
        }
        match self.method {
            Method::Icrl => format!("icrl_{}", self.schedule.name()),
            m => m.name().to_string(),
        }
    }

    pub fn loop_config(&self) -> LoopConfig {
        LoopConfig {
            episodes: self.episodes,
            schedule: self.schedule,
            buffer_capacity: self.buffer_capacity,
            zero_rewards: self.zero_rewards,
            layout: self.layout.clone().map(|l| PromptLayout::new(l).expect("validated layout")),
            policy: self.policy.settings(),
            method: self.method_label(),
            record_wall_time: self.record_wall_time,
        }
    }
}

/// The five ablations of one base ICRL config.
pub const ABLATIONS: [&str; 5] = ["zero_rewards", "short_context", "exploration_only", "exploitation_only", "no_ee"];

pub fn ablation(base: &RunConfig, name: &str) -> Result<RunConfig, ConfigError> {
    let mut c = base.clone();
    c.method = Method::Icrl;
    c.schedule = Schedule::Preset;
    c.zero_rewards = false;
    c.buffer_capacity = None;
    match name {
        "zero_rewards" => c.zero_rewards = true,
        "short_context" => c.buffer_capacity = Some(3),
        // a different response each time, with no reward signal
        "exploration_only" => {
            c.schedule = Schedule::ExplorationOnly;
            c.zero_rewards = true;
        }
        "exploitation_only" => c.schedule = Schedule::ExploitationOnly,
        "no_ee" => c.schedule = Schedule::NoEe,
        other => {
            return Err(ConfigError::Invalid {
                field: "ablation".into(),
                reason: format!("unknown ablation {other:?}; expected one of {ABLATIONS:?}"),
            })
        }
    }
    c.label = Some(format!("ablation_{name}"));
    Ok(c)
}

pub fn ablation_variants(base: &RunConfig) -> Vec<RunConfig> {
    ABLATIONS.iter().map(|n| ablation(base, n).expect("known ablation")).collect()
}
