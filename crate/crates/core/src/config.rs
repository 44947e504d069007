//! Simulator configuration, read from `key = value` lines.

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::controller::{
    ControllerConfig, DEFAULT_ATTEMPT_LIMIT, DEFAULT_DENY_MS, DEFAULT_UNLOCK_MS,
};
use crate::keypad::DEFAULT_DEBOUNCE_MS;

pub const DEFAULT_SCAN_ROW_MS: u64 = 5;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("{0}")]
    Invalid(String),
    #[error("reading config: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Config {
    pub attempt_limit: u32,
    pub unlock_ms: u64,
    pub deny_ms: u64,
    pub debounce_ms: u64,
    pub scan_row_ms: u64,
    pub users_path: Option<PathBuf>,
    pub log_path: Option<PathBuf>,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            attempt_limit: DEFAULT_ATTEMPT_LIMIT,
            unlock_ms: DEFAULT_UNLOCK_MS,
            deny_ms: DEFAULT_DENY_MS,
            debounce_ms: DEFAULT_DEBOUNCE_MS,
            scan_row_ms: DEFAULT_SCAN_ROW_MS,
            users_path: None,
            log_path: None,
        }
    }
}

impl Config {
    /// Parses config text on top of the defaults. Blank lines and lines
    /// starting with `#` are skipped.
    pub fn parse(text: &str) -> Result<Config, ConfigError> {
        let mut cfg = Config::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let err = |reason: String| ConfigError::Parse { line, reason };
            let (key, value) = trimmed
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, got {trimmed:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            let number = || {
                value
                    .parse::<u64>()
                    .map_err(|_| err(format!("{key}: {value:?} is not a non-negative integer")))
            };
            match key {
                "attempt_limit" => {
                    cfg.attempt_limit = u32::try_from(number()?)
                        .map_err(|_| err(format!("{key}: {value} is too large")))?
                }
                "unlock_ms" => cfg.unlock_ms = number()?,
                "deny_ms" => cfg.deny_ms = number()?,
                "debounce_ms" => cfg.debounce_ms = number()?,
                "scan_row_ms" => cfg.scan_row_ms = number()?,
                "users_path" => cfg.users_path = Some(PathBuf::from(value)),
                "log_path" => cfg.log_path = Some(PathBuf::from(value)),
                other => return Err(err(format!("unknown key {other:?}"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Config, ConfigError> {
        Config::parse(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.attempt_limit < 1 {
            return Err(ConfigError::Invalid("attempt_limit must be >= 1".into()));
        }
        for (name, v) in [
            ("unlock_ms", self.unlock_ms),
            ("deny_ms", self.deny_ms),
            ("debounce_ms", self.debounce_ms),
            ("scan_row_ms", self.scan_row_ms),
        ] {
            if v < 1 {
                return Err(ConfigError::Invalid(format!("{name} must be >= 1")));
            }
        }
        Ok(())
    }

    pub fn controller(&self) -> ControllerConfig {
        ControllerConfig {
            attempt_limit: self.attempt_limit,
            unlock_ms: self.unlock_ms,
            deny_ms: self.deny_ms,
        }
    }
}
