//! Run manifest: what was run, with which configuration, and what it wrote.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{AppError, AppResult};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub preset: Option<String>,
    pub seed: u64,
    pub trials: usize,
    pub config: RunConfig,
    /// Paths relative to the run directory.
    pub files: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, preset: Option<&str>, config: &RunConfig, trials: usize) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            preset: preset.map(String::from),
            seed: config.seed,
            trials,
            config: config.clone(),
            files: Vec::new(),
        }
    }

    pub fn save(&self, dir: &Path) -> AppResult<()> {
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(&path, text).map_err(|e| AppError::io(&path, e))
    }

    pub fn load(dir: &Path) -> AppResult<Self> {
        let path = if dir.is_dir() {
            dir.join(MANIFEST_FILE)
        } else {
            dir.to_path_buf()
        };
        let text = fs::read_to_string(&path).map_err(|e| AppError::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| AppError::parse(&path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = RunConfig {
            seed: 17,
            ..RunConfig::default()
        };
        cfg.train.lr = 0.1 + 0.2;
        let mut m = Manifest::new("train", Some("and"), &cfg, 3);
        m.files = vec!["trial_000/history.csv".into()];
        m.save(dir.path()).unwrap();
        assert_eq!(Manifest::load(dir.path()).unwrap(), m);
        assert_eq!(Manifest::load(&dir.path().join(MANIFEST_FILE)).unwrap(), m);
    }
}
