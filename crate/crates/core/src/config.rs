//! Emulator configuration: one JSON document plus dotted-path overrides
//! (`ranges.r_b=300`). Unknown keys are rejected at every level.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::channel::RadioConfig;
use crate::geometry::{CullingRanges, DEFAULT_CELL_SIZE, DEFAULT_NLOSV_THRESHOLD};
use crate::gnss::GnssConfig;
use crate::scenario::ScenarioConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("override `{text}`: {reason}")]
    Override { text: String, reason: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmulatorConfig {
    pub scenario: ScenarioConfig,
    pub ranges: CullingRanges,
    pub radio: RadioConfig,
    /// Error process embedded in received messages.
    pub gnss: GnssConfig,
    /// Error process of the ego's own fix; `null` reuses `gnss`.
    pub ego_gnss: Option<GnssConfig>,
    /// Lateral distance below which a third vehicle blocks a link, meters.
    pub nlosv_threshold: f64,
    pub workers: usize,
    pub seed: u64,
    /// Spatial index cell size, meters.
    pub cell_size: f64,
    /// Per-step processing budget in seconds; `null` means the step period.
    pub realtime_budget: Option<f64>,
}

impl Default for EmulatorConfig {
    fn default() -> Self {
        EmulatorConfig {
            scenario: ScenarioConfig::default(),
            ranges: CullingRanges::unlimited(),
            radio: RadioConfig::default(),
            gnss: GnssConfig::default(),
            ego_gnss: None,
            nlosv_threshold: DEFAULT_NLOSV_THRESHOLD,
            workers: 1,
            seed: 0,
            cell_size: DEFAULT_CELL_SIZE,
            realtime_budget: None,
        }
    }
}

fn parse_error(e: serde_json::Error) -> ConfigError {
    ConfigError::Parse { line: e.line(), column: e.column(), message: e.to_string() }
}

/// Split `key=value` and decode the value as JSON, falling back to a plain
/// string (so `ranges.r_b=inf` and `ranges.r_b=300` both work).
pub fn parse_override(text: &str) -> Result<(Vec<String>, Value), ConfigError> {
    let bad = |reason: &str| ConfigError::Override { text: text.to_owned(), reason: reason.to_owned() };
    let (key, value) = text.split_once('=').ok_or_else(|| bad("expected key=value"))?;
    let path: Vec<String> = key.trim().split('.').map(str::to_owned).collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(bad("empty key segment"));
    }
    let value = value.trim();
    let value = serde_json::from_str(value).unwrap_or_else(|_| Value::String(value.to_owned()));
    Ok((path, value))
}

fn set_path(root: &mut Value, path: &[String], value: Value) -> Result<(), String> {
    let (last, parents) = path.split_last().expect("non-empty path");
    let mut node = root;
    for segment in parents {
        if node.is_null() {
            *node = Value::Object(Default::default());
        }
        let Value::Object(map) = node else {
            return Err(format!("`{segment}` is not inside an object"));
        };
        node = map.entry(segment.clone()).or_insert(Value::Null);
    }
    if node.is_null() {
        *node = Value::Object(Default::default());
    }
    match node {
        Value::Object(map) => {
            map.insert(last.clone(), value);
            Ok(())
        }
        _ => Err(format!("cannot set `{last}` on a non-object value")),
    }
}

impl EmulatorConfig {
    pub fn from_json_str(text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(parse_error)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::from_json_str(&text)
    }

    /// Apply `key=value` overrides in order on top of this config.
    pub fn with_overrides<S: AsRef<str>>(self, overrides: &[S]) -> Result<Self, ConfigError> {
        if overrides.is_empty() {
            return Ok(self);
        }
        let mut root = serde_json::to_value(&self).expect("config serializes");
        for text in overrides {
            let text = text.as_ref();
            let (path, value) = parse_override(text)?;
            set_path(&mut root, &path, value)
                .map_err(|reason| ConfigError::Override { text: text.to_owned(), reason })?;
            // re-decode after each step so the failing override is named
            serde_json::from_value::<EmulatorConfig>(root.clone())
                .map_err(|e| ConfigError::Override { text: text.to_owned(), reason: e.to_string() })?;
        }
        serde_json::from_value(root).map_err(parse_error)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let check = |r: Result<(), String>| r.map_err(ConfigError::Invalid);
        check(self.scenario.validate())?;
        check(self.ranges.validate())?;
        check(self.radio.validate())?;
        check(self.gnss.validate())?;
        if let Some(g) = &self.ego_gnss {
            check(g.validate())?;
        }
        if !(self.nlosv_threshold > 0.0) {
            return Err(ConfigError::Invalid(format!("nlosv_threshold must be > 0, got {}", self.nlosv_threshold)));
        }
        if self.workers == 0 {
            return Err(ConfigError::Invalid("workers must be >= 1".into()));
        }
        if !(self.cell_size > 0.0 && self.cell_size.is_finite()) {
            return Err(ConfigError::Invalid(format!("cell_size must be > 0, got {}", self.cell_size)));
        }
        if let Some(b) = self.realtime_budget {
            if !(b > 0.0) {
                return Err(ConfigError::Invalid(format!("realtime_budget must be > 0, got {b}")));
            }
        }
        Ok(())
    }

    pub fn ego_gnss(&self) -> &GnssConfig {
        self.ego_gnss.as_ref().unwrap_or(&self.gnss)
    }

    pub fn budget(&self) -> f64 {
        self.realtime_budget.unwrap_or(self.scenario.step_period)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}
