use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::{ExperimentConfig, Job};
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Everything needed to rerun a command: the job, the full configuration and
/// the artifacts it produced. Timestamps are informational only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub job: Job,
    pub config: ExperimentConfig,
    /// artifact paths relative to the output directory
    pub artifacts: Vec<PathBuf>,
    pub version: String,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
}

pub(crate) fn now_ms() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis())
}

impl RunManifest {
    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}
