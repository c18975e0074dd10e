//! Experiment configuration file: TOML with one table per module.
//!
//! ```toml
//! seed = 3
//! output_dir = "runs/desk"
//!
//! [env]
//! area_extent = [100.0, 100.0, 60.0]
//! num_uavs = 2
//!
//! [train]
//! algorithm = "mappo"
//! ```
//!
//! Omitted keys take their defaults. The top-level seed is copied into the
//! environment and trainer sections so a run has a single seed.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ambiguity::EntropyConfig;
use crate::dsa::DsaConfig;
use crate::env::EnvConfig;
use crate::error::{Error, Result};
use crate::trainer::TrainConfig;

pub const RESOLVED_CONFIG_FILE: &str = "resolved.cfg";
pub const NUM_WORKERS_VAR: &str = "ERPPO_NUM_WORKERS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub env: EnvConfig,
    pub ambiguity: EntropyConfig,
    pub dsa: DsaConfig,
    pub train: TrainConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let mut cfg = Self {
            seed: 0,
            output_dir: PathBuf::from("runs/default"),
            env: EnvConfig::default(),
            ambiguity: EntropyConfig::default(),
            dsa: DsaConfig::default(),
            train: TrainConfig::default(),
        };
        cfg.set_seed(0);
        cfg
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text.as_bytes()[..offset.min(text.len())]
        .iter()
        .filter(|&&b| b == b'\n')
        .count()
        + 1
}

impl ExperimentConfig {
    /// Parses and validates config text; the result has its seed propagated.
    pub fn from_toml(text: &str) -> Result<Self> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| Error::Parse {
            line: e.span().map_or(0, |s| line_of(text, s.start)),
            reason: e.message().to_string(),
        })?;
        cfg.set_seed(cfg.seed);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("validated config serializes")
    }

    /// Sets the run seed everywhere it is consumed.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.env.seed = seed;
        self.train.seed = seed;
    }

    pub fn validate(&self) -> Result<()> {
        // TOML integers are signed 64-bit
        if i64::try_from(self.seed).is_err() {
            return Err(Error::config("seed", "must be at most 2^63 - 1"));
        }
        if self.output_dir.as_os_str().is_empty() {
            return Err(Error::config("output_dir", "must not be empty"));
        }
        self.env.validate()?;
        self.ambiguity.validate()?;
        self.dsa.validate()?;
        self.train.validate()
    }

    /// Applies the worker-count override from the environment variable's
    /// value, if set.
    pub fn apply_worker_override(&mut self, value: Option<&str>) -> Result<()> {
        if let Some(v) = value {
            let n: usize = v
                .trim()
                .parse()
                .ok()
                .filter(|&n| n > 0)
                .ok_or_else(|| Error::config(NUM_WORKERS_VAR, "must be a positive integer"))?;
            self.train.num_env_workers = n;
        }
        Ok(())
    }

    /// Writes the fully resolved config to `<dir>/resolved.cfg`.
    pub fn echo(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(RESOLVED_CONFIG_FILE);
        fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
        fs::write(&path, self.to_toml()).map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
        Ok(path)
    }
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(Error::MissingFile {
                path: path.to_path_buf(),
            })
        }
        Err(e) => return Err(Error::io(format!("reading {}", path.display()), e)),
    };
    ExperimentConfig::from_toml(&text)
}
