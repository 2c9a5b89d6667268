use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use onebit_core::train::TrainConfig;
use onebit_core::unfolded::PhiInit;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Preset {
    Desk,
    FullScale,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhiInitArg {
    Scaled,
    Standard,
}

impl From<PhiInitArg> for PhiInit {
    fn from(a: PhiInitArg) -> Self {
        match a {
            PhiInitArg::Scaled => PhiInit::Scaled,
            PhiInitArg::Standard => PhiInit::Standard,
        }
    }
}

/// Flags that override values from the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigOverrides {
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub m: Option<usize>,
    /// Decoder depth L.
    #[arg(long)]
    pub layers: Option<usize>,
    /// Training sparsity.
    #[arg(long = "k", short = 'K')]
    pub k: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long)]
    pub delta_init: Option<f64>,
    #[arg(long)]
    pub alpha_init: Option<f64>,
    #[arg(long, value_enum)]
    pub phi_init: Option<PhiInitArg>,
}

impl ConfigOverrides {
    pub fn apply(&self, cfg: &mut TrainConfig) {
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = self.$f { cfg.$f = v; } )* };
        }
        set!(n, m, layers, k, lr, batch_size, epochs, lambda, seed, c, delta_init, alpha_init);
        if let Some(p) = self.phi_init {
            cfg.phi_init = p.into();
        }
    }
}

/// Reads a training config, or the `[config]` table of a run manifest.
pub fn load_config(path: &Path) -> Result<TrainConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config file {}: {e}", path.display())))?;
    let value: toml::Table = toml::from_str(&text)
        .map_err(|e| CliError::Usage(format!("invalid config file {}: {e}", path.display())))?;
    let table = match value.get("config") {
        Some(toml::Value::Table(t)) => t.clone(),
        _ => value,
    };
    table
        .try_into()
        .map_err(|e| CliError::Usage(format!("invalid config file {}: {e}", path.display())))
}

pub fn preset(p: Preset) -> TrainConfig {
    match p {
        Preset::Desk => TrainConfig::desk(),
        Preset::FullScale => TrainConfig::full_scale(),
    }
}

/// Base directory for outputs when `--out-dir` is not given.
pub const OUT_DIR_ENV: &str = "ONEBIT_OUT_DIR";

pub fn ensure_dir(dir: &Path) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(dir).map_err(|e| {
        CliError::Usage(format!(
            "cannot create output directory {}: {e}",
            dir.display()
        ))
    })?;
    Ok(dir.to_path_buf())
}
