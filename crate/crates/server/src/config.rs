use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use relfeed::engine::{Algorithm, EngineConfig};
use serde::{Deserialize, Serialize};

use crate::{Result, ServiceError};

pub const ENV_ADDR: &str = "FAIRCOP_ADDR";
pub const ENV_CORPUS: &str = "FAIRCOP_CORPUS";
pub const ENV_IMAGE_ROOT: &str = "FAIRCOP_IMAGE_ROOT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub addr: SocketAddr,
    /// Corpus manifest file.
    pub corpus: PathBuf,
    pub image_root: PathBuf,
    /// Where session metadata and event logs live.
    pub data_dir: PathBuf,
    pub algorithm: Algorithm,
    pub engine: EngineConfig,
    /// Feedback rounds before a human session is closed as abandoned.
    pub max_iterations: usize,
    /// Sessions untouched this long are dropped from memory; they reload from disk on demand.
    pub idle_timeout_secs: u64,
    /// Allowed browser origins; empty allows any.
    pub cors_origins: Vec<String>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            addr: SocketAddr::from(([127, 0, 0, 1], 8080)),
            corpus: PathBuf::from("corpus/manifest.json"),
            image_root: PathBuf::from("images"),
            data_dir: PathBuf::from("sessions"),
            algorithm: Algorithm::Contrastive,
            engine: EngineConfig::default(),
            max_iterations: 30,
            idle_timeout_secs: 1800,
            cors_origins: Vec::new(),
        }
    }
}

impl ServiceConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| ServiceError::Io(path.to_path_buf(), e))?;
        serde_json::from_str(&text).map_err(|e| ServiceError::Config(format!("{}: {e}", path.display())))
    }

    /// Apply the environment overrides for address, corpus, and image root.
    pub fn with_env(self) -> Result<Self> {
        self.with_overrides(|k| std::env::var(k).ok())
    }

    pub fn with_overrides(mut self, get: impl Fn(&str) -> Option<String>) -> Result<Self> {
        if let Some(a) = get(ENV_ADDR) {
            self.addr = a
                .parse()
                .map_err(|_| ServiceError::Config(format!("{ENV_ADDR}={a:?} is not a socket address")))?;
        }
        if let Some(c) = get(ENV_CORPUS) {
            self.corpus = c.into();
        }
        if let Some(r) = get(ENV_IMAGE_ROOT) {
            self.image_root = r.into();
        }
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(ServiceError::Config("max_iterations must be >= 1".into()));
        }
        if !self.corpus.is_file() {
            return Err(ServiceError::Config(format!("corpus manifest {} not found", self.corpus.display())));
        }
        if self.image_root.exists() && !self.image_root.is_dir() {
            return Err(ServiceError::Config(format!("image root {} is not a directory", self.image_root.display())));
        }
        self.engine.validate().map_err(|e| ServiceError::Config(e.to_string()))
    }
}
