//! Training checkpoints.
//!
//! A checkpoint is one JSON document:
//!
//! ```text
//! { "format": "tmf-checkpoint", "version": 1,
//!   "config": <training config, including mode and seed>,
//!   "state": { "network": { "spec": ..., "params": [...] },
//!              "optimizer": ..., "schedule": ..., "centers": ...,
//!              "batches_seen": .., "evals": .., "finished": .. } }
//! ```
//!
//! `params` is flat, in the order given by [`NetworkSpec::blocks`]. Floats
//! are written with shortest round-trip formatting, so reloading yields the
//! same bits.
//!
//! [`NetworkSpec::blocks`]: crate::model::NetworkSpec::blocks

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::model::{TrainConfig, TrainState};

pub const FORMAT: &str = "tmf-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("unsupported checkpoint {format} v{version}")]
    Unsupported { format: String, version: u32 },
    #[error("checkpoint is inconsistent: {0}")]
    Inconsistent(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config: TrainConfig,
    pub state: TrainState,
}

impl Checkpoint {
    pub fn new(config: TrainConfig, state: TrainState) -> Self {
        Self {
            format: FORMAT.into(),
            version: VERSION,
            config,
            state,
        }
    }

    fn check(&self) -> Result<(), CheckpointError> {
        if self.format != FORMAT || self.version != VERSION {
            return Err(CheckpointError::Unsupported {
                format: self.format.clone(),
                version: self.version,
            });
        }
        let spec = self.state.network.spec();
        spec.validate().map_err(|e| CheckpointError::Inconsistent(e.to_string()))?;
        if self.state.network.params().len() != spec.param_count() {
            return Err(CheckpointError::Inconsistent("parameter count does not match the spec".into()));
        }
        if self.state.centers.is_some() != self.config.mode.uses_centers() {
            return Err(CheckpointError::Inconsistent(format!(
                "center bank presence does not match {} mode",
                self.config.mode
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    /// Writes to a sibling temporary file and renames it into place, so an
    /// interrupted save never clobbers the previous checkpoint.
    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        let io = |source| CheckpointError::Io {
            path: path.to_owned(),
            source,
        };
        let mut tmp = path.as_os_str().to_owned();
        tmp.push(".tmp");
        let tmp = PathBuf::from(tmp);
        std::fs::write(&tmp, self.to_json()).map_err(io)?;
        std::fs::rename(&tmp, path).map_err(io)
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let text = std::fs::read_to_string(path).map_err(|source| CheckpointError::Io {
            path: path.to_owned(),
            source,
        })?;
        let cp: Self = serde_json::from_str(&text).map_err(|source| CheckpointError::Parse {
            path: path.to_owned(),
            source,
        })?;
        cp.check()?;
        Ok(cp)
    }
}
