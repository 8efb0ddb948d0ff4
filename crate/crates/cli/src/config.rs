use std::path::{Path, PathBuf};

use bfree_lab::rational::{rat, serde_ratio};
use bfree_lab::Rational;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Environment variable that overrides the configured cache directory.
pub const CACHE_DIR_ENV: &str = "BFREE_LAB_CACHE_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub precision_bits: u32,
    pub memory_budget_mb: u64,
    pub cache_dir: Option<PathBuf>,
    #[serde(with = "serde_ratio")]
    pub default_epsilon: Rational,
    pub rng_seed: u64,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            precision_bits: 128,
            memory_budget_mb: 1024,
            cache_dir: None,
            default_epsilon: rat(1, 100),
            rng_seed: 1,
        }
    }
}

impl Config {
    pub fn memory_budget_bytes(&self) -> u64 {
        self.memory_budget_mb.saturating_mul(1 << 20)
    }

    /// The environment override wins over the file; `None` disables caching.
    pub fn effective_cache_dir(&self) -> Option<PathBuf> {
        match std::env::var_os(CACHE_DIR_ENV) {
            Some(v) if !v.is_empty() => Some(PathBuf::from(v)),
            _ => self.cache_dir.clone(),
        }
    }
}

/// Reads and validates a JSON configuration file.
pub fn load_config(path: &Path) -> Result<Config, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let cfg: Config = serde_json::from_str(&text).map_err(|e| {
        CliError::Usage(format!("{}:{}:{}: {e}", path.display(), e.line(), e.column()))
    })?;
    if cfg.precision_bits < 32 {
        return Err(CliError::Usage("precision_bits must be at least 32".into()));
    }
    if cfg.memory_budget_mb == 0 {
        return Err(CliError::Usage("memory_budget_mb must be positive".into()));
    }
    if cfg.default_epsilon <= rat(0, 1) || cfg.default_epsilon >= rat(1, 2) {
        return Err(CliError::Usage("default_epsilon must lie in (0, 1/2)".into()));
    }
    Ok(cfg)
}
