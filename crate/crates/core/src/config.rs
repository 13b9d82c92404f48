//! Run configuration: one JSON file holding data, network and training
//! settings with every default written out.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::model::{NetworkSpec, TrainConfig, TrainMode};
use crate::synth::{DatasetConfig, SynthError};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("invalid config: {field}: {reason}")]
    Invalid { field: String, reason: String },
    #[error("cannot parse config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl ConfigError {
    fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Self::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

const DATASET_FIELDS: [&str; 3] = ["train_sequences", "valid_fraction", "test_sequences"];

impl From<SynthError> for ConfigError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::ConfigInvalid { field, reason } if DATASET_FIELDS.contains(&field) => {
                Self::invalid(format!("data.{field}"), reason)
            }
            SynthError::ConfigInvalid { field, reason } => Self::invalid(format!("data.generator.{field}"), reason),
            other => Self::invalid("data", other.to_string()),
        }
    }
}

/// Where a run reads and writes its files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunPaths {
    /// Directory holding the generated corpus.
    pub data: PathBuf,
    pub checkpoint: PathBuf,
    pub metrics: PathBuf,
}

impl Default for RunPaths {
    fn default() -> Self {
        Self {
            data: "data".into(),
            checkpoint: "run/checkpoint.json".into(),
            metrics: "run/metrics.csv".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DatasetConfig,
    pub network: NetworkSpec,
    pub train: TrainConfig,
    pub paths: RunPaths,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::for_mode(TrainMode::Tmf)
    }
}

impl RunConfig {
    /// Default data and training settings with a network sized for `mode`.
    pub fn for_mode(mode: TrainMode) -> Self {
        let data = DatasetConfig::default();
        let hidden = vec![32, 16];
        let network = NetworkSpec {
            input_dim: data.generator.feature_dim,
            feature_dim: *hidden.last().expect("non-empty"),
            hidden,
            recurrent: true,
            num_classes: mode.output_classes(data.generator.num_classes),
        };
        Self {
            data,
            network,
            train: TrainConfig {
                mode,
                ..TrainConfig::default()
            },
            paths: RunPaths::default(),
        }
    }

    pub fn mode(&self) -> TrainMode {
        self.train.mode
    }

    /// Replaces both the data seed and the training seed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.data.generator.seed = seed;
        self.train.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.data.validate()?;
        self.network
            .validate()
            .map_err(|e| ConfigError::invalid("network", e.to_string()))?;
        let gen = &self.data.generator;
        if self.network.input_dim != gen.feature_dim {
            return Err(ConfigError::invalid(
                "network.input_dim",
                format!("{} does not match data.generator.feature_dim {}", self.network.input_dim, gen.feature_dim),
            ));
        }
        let mode = self.mode();
        let outputs = mode.output_classes(gen.num_classes);
        if self.network.num_classes != outputs {
            let reason = if mode.is_temporal() {
                format!("{mode} needs {outputs} outputs, {} labels plus the blank", gen.num_classes)
            } else {
                format!("{mode} needs {outputs} outputs, one per label and no blank")
            };
            return Err(ConfigError::invalid("network.num_classes", reason));
        }
        self.train
            .validate()
            .map_err(|e| ConfigError::invalid("train", e.to_string()))?;
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: &Path) -> Result<(), ConfigError> {
        std::fs::write(path, self.to_json()).map_err(|source| ConfigError::Io {
            path: path.to_owned(),
            source,
        })
    }
}
