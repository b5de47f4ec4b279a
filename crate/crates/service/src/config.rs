//! Service configuration: a TOML file overlaid with environment variables.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use scalesmith_core::gateway::GatewayConfig;
use scalesmith_core::recommend::{DEFAULT_STAGE1_K, DEFAULT_STAGE2_K};

pub const CORPUS_FILE: &str = "corpus.json";
pub const INDEX_FILE: &str = "index.ssix";
pub const PROJECTS_DIR: &str = "projects";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("parsing {path}: {source}")]
    Parse { path: PathBuf, source: toml::de::Error },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub bind: String,
    pub port: u16,
    /// Holds the corpus, the index snapshot and one file per project.
    pub data_dir: PathBuf,
    pub k1: usize,
    pub k2: usize,
    pub gateway: GatewayConfig,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1".into(),
            port: 8080,
            data_dir: PathBuf::from("data"),
            k1: DEFAULT_STAGE1_K,
            k2: DEFAULT_STAGE2_K,
            gateway: GatewayConfig::default(),
        }
    }
}

impl ServiceConfig {
    /// Reads `path` if given, then applies `SCALESMITH_*` overrides.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let config = match path {
            Some(path) => Self::from_toml_file(path)?,
            None => Self::default(),
        };
        Ok(config.apply_env())
    }

    pub fn from_toml_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_owned(),
            source,
        })?;
        toml::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.to_owned(),
            source,
        })
    }

    pub fn apply_env(self) -> Self {
        self.apply_vars(|k| std::env::var(k).ok())
    }

    fn apply_vars(mut self, get: impl Fn(&str) -> Option<String>) -> Self {
        if let Some(v) = get("SCALESMITH_BIND") {
            self.bind = v;
        }
        if let Some(v) = get("SCALESMITH_PORT").and_then(|v| v.parse().ok()) {
            self.port = v;
        }
        if let Some(v) = get("SCALESMITH_DATA_DIR") {
            self.data_dir = v.into();
        }
        if let Some(v) = get("SCALESMITH_K1").and_then(|v| v.parse().ok()) {
            self.k1 = v;
        }
        if let Some(v) = get("SCALESMITH_K2").and_then(|v| v.parse().ok()) {
            self.k2 = v;
        }
        self.gateway = self.gateway.apply_env();
        self
    }

    pub fn corpus_path(&self) -> PathBuf {
        self.data_dir.join(CORPUS_FILE)
    }

    pub fn index_path(&self) -> PathBuf {
        self.data_dir.join(INDEX_FILE)
    }

    pub fn projects_dir(&self) -> PathBuf {
        self.data_dir.join(PROJECTS_DIR)
    }
}
