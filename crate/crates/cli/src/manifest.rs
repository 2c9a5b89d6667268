use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use onebit_core::train::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Everything needed to replay a training run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    /// `running` until training finishes, then `complete` or `failed`.
    pub status: String,
    pub cases: Vec<String>,
    pub threads: usize,
    pub started_unix: u64,
    pub outputs: Outputs,
    pub timings: Timings,
    pub config: TrainConfig,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Outputs {
    pub dir: String,
    pub models: Vec<String>,
    pub loss_logs: Vec<String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Timings {
    pub train_seconds: Vec<f64>,
    pub total_seconds: f64,
}

impl RunManifest {
    pub fn new(config: TrainConfig, cases: Vec<String>, threads: usize, dir: &Path) -> Self {
        Self {
            version: concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION")).to_string(),
            status: "running".into(),
            cases,
            threads,
            started_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            outputs: Outputs {
                dir: dir.display().to_string(),
                ..Default::default()
            },
            timings: Timings::default(),
            config,
        }
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let text = toml::to_string_pretty(self)
            .map_err(|e| CliError::Failure(format!("cannot serialize manifest: {e}")))?;
        std::fs::write(path, text)
            .map_err(|e| CliError::Failure(format!("cannot write {}: {e}", path.display())))
    }
}
