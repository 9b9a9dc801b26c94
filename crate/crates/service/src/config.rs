use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use swr_core::router::Ship;
use thiserror::Error;

pub const ENV_DATA_DIR: &str = "SWRVIZ_DATA_DIR";
pub const ENV_BIND: &str = "SWRVIZ_BIND";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: toml::de::Error,
    },
    #[error("invalid default ship: {0}")]
    Ship(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    pub bind: String,
    /// TOML file holding one ship record, offered as the `default` ship.
    pub default_ship: Option<PathBuf>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            data_dir: PathBuf::from("swrviz-data"),
            bind: "127.0.0.1:8080".into(),
            default_ship: None,
        }
    }
}

impl ServiceConfig {
    pub fn from_toml(text: &str, origin: &Path) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|source| ConfigError::Parse {
            path: origin.to_path_buf(),
            source,
        })
    }

    /// Read `path` (or start from defaults) and apply environment overrides.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Read {
                    path: p.to_path_buf(),
                    source,
                })?;
                let mut cfg = Self::from_toml(&text, p)?;
                // relative paths in the file are relative to the file
                if let Some(dir) = p.parent() {
                    if cfg.data_dir.is_relative() {
                        cfg.data_dir = dir.join(&cfg.data_dir);
                    }
                    if let Some(s) = cfg.default_ship.as_mut().filter(|s| s.is_relative()) {
                        *s = dir.join(&*s);
                    }
                }
                cfg
            }
            None => Self::default(),
        };
        cfg.apply_env(|k| std::env::var(k).ok());
        Ok(cfg)
    }

    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) {
        if let Some(d) = get(ENV_DATA_DIR).filter(|s| !s.is_empty()) {
            self.data_dir = PathBuf::from(d);
        }
        if let Some(b) = get(ENV_BIND).filter(|s| !s.is_empty()) {
            self.bind = b;
        }
    }

    pub fn load_default_ship(&self) -> Result<Option<Ship>, ConfigError> {
        let Some(path) = &self.default_ship else {
            return Ok(None);
        };
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.clone(),
            source,
        })?;
        let ship: Ship = toml::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.clone(),
            source,
        })?;
        ship.validate().map_err(|e| ConfigError::Ship(e.to_string()))?;
        Ok(Some(ship))
    }

    pub fn stacks_dir(&self) -> PathBuf {
        self.data_dir.join("stacks")
    }

    pub fn weights_dir(&self) -> PathBuf {
        self.data_dir.join("weights")
    }

    pub fn forecasts_dir(&self) -> PathBuf {
        self.data_dir.join("forecasts")
    }

    pub fn scenarios_dir(&self) -> PathBuf {
        self.data_dir.join("scenarios")
    }
}
