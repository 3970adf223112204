//! Flat `key = value` configuration with `MEDICO_<KEY>` environment
//! overrides.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{DateTime, Utc};
use medico_core::ontology::DISTANCE_CAP;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("unknown config key {0:?}")]
    UnknownKey(String),
    #[error("invalid value {value:?} for {key}: {reason}")]
    Invalid { key: &'static str, value: String, reason: String },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    pub data_dir: PathBuf,
    pub port: u16,
    pub expansion_depth: u32,
    pub lambda: f64,
    pub fusion_window_seconds: u32,
    /// Seeds the demo cohort into an empty data directory when set.
    pub demo_seed: Option<u64>,
    pub session_ttl_seconds: u64,
    /// Pins the server clock, so relative time phrases resolve against a
    /// fixed instant (used to replay the demo dialogue live).
    pub reference_time: Option<DateTime<Utc>>,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            data_dir: PathBuf::from("medico-data"),
            port: 8080,
            expansion_depth: 2,
            lambda: 0.5,
            fusion_window_seconds: 5,
            demo_seed: None,
            session_ttl_seconds: 1800,
            reference_time: None,
        }
    }
}

pub const KEYS: [&str; 8] = [
    "dataDir",
    "port",
    "expansionDepth",
    "lambda",
    "fusionWindowSeconds",
    "demoSeed",
    "sessionTtlSeconds",
    "referenceTime",
];

fn parse<T: FromStr>(key: &'static str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::Invalid {
        key,
        value: value.to_string(),
        reason: e.to_string(),
    })
}

fn out_of_range(key: &'static str, value: &str, range: &str) -> ConfigError {
    ConfigError::Invalid {
        key,
        value: value.to_string(),
        reason: format!("must be in {range}"),
    }
}

impl Config {
    /// Reads `path` (when given), then applies environment overrides.
    pub fn load(path: Option<&Path>) -> Result<Config, ConfigError> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|source| ConfigError::Read {
                path: p.to_path_buf(),
                source,
            })?,
            None => String::new(),
        };
        Config::from_sources(&text, std::env::vars())
    }

    pub fn from_sources(text: &str, env: impl IntoIterator<Item = (String, String)>) -> Result<Config, ConfigError> {
        let mut values: BTreeMap<&'static str, String> = BTreeMap::new();
        for (number, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(ConfigError::Syntax { line: number + 1 })?;
            let key = key.trim();
            let known = KEYS
                .iter()
                .find(|k| **k == key)
                .ok_or_else(|| ConfigError::UnknownKey(key.to_string()))?;
            values.insert(known, value.trim().to_string());
        }
        for (name, value) in env {
            let Some(suffix) = name.strip_prefix("MEDICO_") else { continue };
            if let Some(key) = KEYS.iter().find(|k| k.eq_ignore_ascii_case(suffix)) {
                values.insert(key, value.trim().to_string());
            }
        }
        let mut config = Config::default();
        for (key, value) in values {
            config.set(key, &value)?;
        }
        Ok(config)
    }

    fn set(&mut self, key: &'static str, value: &str) -> Result<(), ConfigError> {
        match key {
            "dataDir" => {
                if value.is_empty() {
                    return Err(out_of_range(key, value, "a non-empty path"));
                }
                self.data_dir = PathBuf::from(value);
            }
            "port" => {
                self.port = parse(key, value)?;
                if self.port == 0 {
                    return Err(out_of_range(key, value, "[1, 65535]"));
                }
            }
            "expansionDepth" => {
                self.expansion_depth = parse(key, value)?;
                if self.expansion_depth > DISTANCE_CAP {
                    return Err(out_of_range(key, value, &format!("[0, {DISTANCE_CAP}]")));
                }
            }
            "lambda" => {
                self.lambda = parse(key, value)?;
                if !(self.lambda > 0.0 && self.lambda <= 1.0) {
                    return Err(out_of_range(key, value, "(0, 1]"));
                }
            }
            "fusionWindowSeconds" => {
                self.fusion_window_seconds = parse(key, value)?;
                if !(1..=60).contains(&self.fusion_window_seconds) {
                    return Err(out_of_range(key, value, "[1, 60]"));
                }
            }
            "demoSeed" => {
                self.demo_seed = if value.is_empty() { None } else { Some(parse(key, value)?) };
            }
            "sessionTtlSeconds" => {
                self.session_ttl_seconds = parse(key, value)?;
                if self.session_ttl_seconds == 0 {
                    return Err(out_of_range(key, value, "[1, 2^64)"));
                }
            }
            "referenceTime" => {
                self.reference_time = if value.is_empty() {
                    None
                } else {
                    Some(
                        DateTime::parse_from_rfc3339(value)
                            .map_err(|e| ConfigError::Invalid {
                                key,
                                value: value.to_string(),
                                reason: e.to_string(),
                            })?
                            .with_timezone(&Utc),
                    )
                };
            }
            _ => unreachable!("keys are validated against KEYS"),
        }
        Ok(())
    }
}
