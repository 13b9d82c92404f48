//! Seen/unseen-noise comparison of the four training criteria on the
//! synthetic task.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, RunPaths};
use crate::metrics::EvalReport;
use crate::model::{evaluate_condition, train, MetricsRow, NetworkSpec, TrainConfig, TrainError, TrainMode, TrainState};
use crate::synth::{build_corpus, DatasetConfig, NoiseCondition, SynthError};

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error("{mode} run with seed {seed}: {source}")]
    Train {
        mode: TrainMode,
        seed: u64,
        #[source]
        source: TrainError,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub data: DatasetConfig,
    pub hidden: Vec<usize>,
    pub recurrent: bool,
    /// Shared by all modes; `mode` and `seed` are overridden per run.
    pub train: TrainConfig,
    /// Balancing factor for `fmf` runs.
    pub fmf_lambda: f64,
    /// Balancing factor for `tmf` runs.
    pub tmf_lambda: f64,
    pub seeds: Vec<u64>,
    pub modes: Vec<TrainMode>,
}

impl ExperimentConfig {
    pub fn network_spec(&self, mode: TrainMode) -> NetworkSpec {
        NetworkSpec {
            input_dim: self.data.generator.feature_dim,
            hidden: self.hidden.clone(),
            recurrent: self.recurrent,
            feature_dim: self.hidden.last().copied().unwrap_or(0),
            num_classes: mode.output_classes(self.data.generator.num_classes),
        }
    }

    /// The equivalent single-run config for the command-line tool.
    pub fn run_config(&self, mode: TrainMode, seed: u64) -> RunConfig {
        let mut data = self.data.clone();
        data.generator.seed = seed;
        RunConfig {
            data,
            network: self.network_spec(mode),
            train: self.train_config(mode, seed),
            paths: RunPaths {
                checkpoint: format!("run/{mode}/checkpoint.json").into(),
                metrics: format!("run/{mode}/metrics.csv").into(),
                ..RunPaths::default()
            },
        }
    }

    pub fn train_config(&self, mode: TrainMode, seed: u64) -> TrainConfig {
        TrainConfig {
            mode,
            seed,
            lambda: match mode {
                TrainMode::Fmf => self.fmf_lambda,
                TrainMode::Tmf => self.tmf_lambda,
                TrainMode::Ce | TrainMode::Ctc => 0.0,
            },
            ..self.train.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub mode: TrainMode,
    pub seed: u64,
    pub batches: u64,
    pub metrics: Vec<MetricsRow>,
    /// One report per test condition, in [`NoiseCondition::ALL`] order.
    pub reports: Vec<EvalReport>,
}

impl RunResult {
    pub fn report(&self, condition: NoiseCondition) -> &EvalReport {
        self.reports
            .iter()
            .find(|r| r.condition == condition)
            .expect("every condition is evaluated")
    }
}

/// Trains every `(seed, mode)` pair, in parallel, and evaluates on the
/// three test conditions. Results come back ordered by seed, then mode.
pub fn run(cfg: &ExperimentConfig) -> Result<Vec<RunResult>, ExperimentError> {
    let corpora = cfg
        .seeds
        .iter()
        .map(|&seed| {
            let mut data = cfg.data.clone();
            data.generator.seed = seed;
            build_corpus(&data).map(|c| (seed, c))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let jobs: Vec<(usize, TrainMode)> = (0..corpora.len())
        .flat_map(|i| cfg.modes.iter().map(move |&m| (i, m)))
        .collect();
    jobs.par_iter()
        .map(|&(i, mode)| {
            let (seed, corpus) = &corpora[i];
            let wrap = |source| ExperimentError::Train { mode, seed: *seed, source };
            let tc = cfg.train_config(mode, *seed);
            let mut state = TrainState::new(cfg.network_spec(mode), &tc).map_err(wrap)?;
            let metrics = train(&mut state, &tc, &corpus.train, &corpus.valid, &[], |_, _| Ok(())).map_err(wrap)?;
            let reports = NoiseCondition::ALL
                .iter()
                .map(|&c| evaluate_condition(&state.network, mode, corpus.test(c), c))
                .collect::<Result<Vec<_>, _>>()
                .map_err(wrap)?;
            Ok(RunResult {
                mode,
                seed: *seed,
                batches: state.batches_seen,
                metrics,
                reports,
            })
        })
        .collect()
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        use crate::model::{AdamConfig, ScheduleConfig};
        Self {
            data: DatasetConfig::default(),
            hidden: vec![32, 16],
            recurrent: true,
            train: TrainConfig {
                optimizer: AdamConfig {
                    learning_rate: 3e-3,
                    ..AdamConfig::default()
                },
                schedule: ScheduleConfig {
                    eval_interval: 250,
                    ..ScheduleConfig::default()
                },
                max_batches: 5000,
                center_momentum: 1e-3,
                ..TrainConfig::default()
            },
            fmf_lambda: 0.1,
            tmf_lambda: 1e-3,
            seeds: vec![1, 2, 3, 4, 5],
            modes: vec![TrainMode::Ce, TrainMode::Fmf, TrainMode::Ctc, TrainMode::Tmf],
        }
    }
}
